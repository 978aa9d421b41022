#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "guidedec/rng.hpp"
#include "guidedec/sampling.hpp"

using namespace guidedec;

TEST(TopK, Probabilities) {
  const ScoreVector s{3.0, 1.0, 2.0, 0.0};
  const auto d = top_k_distribution(s, 2);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].id, 0);
  EXPECT_EQ(d[1].id, 2);
  EXPECT_NEAR(d[0].probability, 0.7310585786, 1e-9);
  EXPECT_NEAR(d[1].probability, 0.2689414214, 1e-9);
}

TEST(TopK, TiesBreakByLowerId) {
  const ScoreVector s{1.0, 2.0, 2.0, 2.0};
  EXPECT_EQ(top_k_ids(s, 2), (TokenIds{1, 2}));
  EXPECT_DOUBLE_EQ(kth_score(s, 2), 2.0);
  const auto d = top_k_distribution(s, 2);
  EXPECT_DOUBLE_EQ(d[0].probability, 0.5);
}

TEST(TopK, ClampsAndValidates) {
  const ScoreVector s{0.0, 1.0};
  EXPECT_EQ(top_k_ids(s, 10).size(), 2u);
  EXPECT_THROW(top_k_ids(s, 0), Error);
  EXPECT_THROW(top_k_ids(ScoreVector{}, 1), Error);
  EXPECT_THROW(top_k_distribution(s, 1, 0.0), Error);
}

TEST(TopK, TemperatureSharpens) {
  const ScoreVector s{1.0, 0.0};
  const auto cold = top_k_distribution(s, 2, 0.5);
  EXPECT_NEAR(cold[0].probability, 1.0 / (1.0 + std::exp(-2.0)), 1e-12);
}

TEST(TopK, DegenerateDistribution) {
  const double ninf = -std::numeric_limits<double>::infinity();
  EXPECT_THROW(top_k_distribution(ScoreVector{ninf, ninf}, 2), Error);
}

TEST(KthScore, AgreesWithFullSort) {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    ScoreVector s(1 + rng.next_u64() % 40);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::floor(rng.uniform() * 8.0);
    const std::size_t k = 1 + rng.next_u64() % s.size();
    std::vector<double> sorted(s.begin(), s.end());
    std::sort(sorted.rbegin(), sorted.rend());
    EXPECT_EQ(kth_score(s, k), sorted[k - 1]);
    const auto ids = top_k_ids(s, k);
    for (std::size_t r = 0; r < k; ++r) EXPECT_EQ(s[static_cast<std::size_t>(ids[r])], sorted[r]);
  }
}

TEST(Rng, PortableUniform) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  // mt19937_64 reference: the 10000th output for the default seed.
  std::mt19937_64 ref;
  ref.discard(9999);
  EXPECT_EQ(ref(), 9981545732273789042ull);
}

TEST(Sample, OneDrawPerToken) {
  const CategoricalDistribution d{{4, 0.25}, {7, 0.75}};
  Rng rng(5), mirror(5);
  for (int i = 0; i < 50; ++i) {
    const TokenId t = sample_categorical(d, rng);
    const double u = mirror.uniform();
    EXPECT_EQ(t, u < 0.25 ? 4 : 7);
  }
}

TEST(Sample, FrequenciesMatchProbabilities) {
  const ScoreVector s{std::log(0.5), std::log(0.3), std::log(0.2)};
  Rng rng(9);
  std::map<TokenId, int> counts;
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++counts[top_k_sample(s, 3, 1.0, rng)];
  EXPECT_NEAR(counts[0] / double(n), 0.5, 0.01);
  EXPECT_NEAR(counts[1] / double(n), 0.3, 0.01);
  EXPECT_NEAR(counts[2] / double(n), 0.2, 0.01);
}
