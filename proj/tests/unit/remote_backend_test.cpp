#include <atomic>
#include <cmath>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include "guidedec/guided_decoder.hpp"
#include "guidedec/remote/remote_backend.hpp"

using namespace guidedec;
using nlohmann::json;

namespace {

std::string mapped(unsigned char b) {
  std::string s;
  utf8::append(s, bbpe::byte_to_unicode()[b]);
  return s;
}

// In-process stand-in for the model server: byte-level vocabulary with a
// few merges, uniform AR scores and MLM scores peaked on the first right id.
class MockServer {
 public:
  MockServer() {
    for (int b = 0; b < 256; ++b) vocab_.push_back(mapped(static_cast<unsigned char>(b)));
    const std::string sp = mapped(' ');
    merges_ = {sp + " d", "o g", sp + "d og"};
    vocab_.push_back(sp + "d");
    vocab_.push_back("og");
    vocab_.push_back(sp + "dog");

    svr_.Get(prefix_ + "/v1/info", [this](const httplib::Request&, httplib::Response& res) {
      if (loading) return reply(res, 503, json{{"detail", "loading"}});
      reply(res, 200, json
            {{"ar_model_name", "mock-ar"},
             {"mlm_model_name", "mock-mlm"},
             {"ar_vocab_size", vocab_.size()},
             {"mlm_vocab_size", vocab_.size()},
             {"normalized", normalized.load()}});
    });
    svr_.Get(prefix_ + "/v1/vocab", [this](const httplib::Request& req, httplib::Response& res) {
      const auto m = req.get_param_value("model");
      if (m != "ar" && m != "mlm") return reply(res, 400, json{{"detail", "unknown model"}});
      reply(res, 200, vocab_);
    });
    svr_.Get(prefix_ + "/v1/merges", [this](const httplib::Request& req, httplib::Response& res) {
      const auto m = req.get_param_value("model");
      if (m != "ar" && m != "mlm") return reply(res, 400, json{{"detail", "unknown model"}});
      reply(res, 200, merges_);
    });
    svr_.Post(prefix_ + "/v1/ar_scores", [this](const httplib::Request& req, httplib::Response& res) {
      ++ar_calls;
      json body;
      try {
        body = json::parse(req.body);
      } catch (...) {
        return reply(res, 400, json{{"detail", "bad json"}});
      }
      const auto ids = body.at("context_ids").get<TokenIds>();
      if (ids.size() > 64) return reply(res, 413, json{{"detail", "too long"}});
      for (auto id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
          return reply(res, 422, json{{"detail", "bad id"}});
        }
      }
      const double v = normalized ? -std::log(double(vocab_.size())) : 0.0;
      reply(res, 200, json{{"scores", std::vector<double>(vocab_.size(), v)}});
    });
    svr_.Post(prefix_ + "/v1/mlm_scores", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (...) {
        return reply(res, 400, json{{"detail", "bad json"}});
      }
      const auto left = body.at("left_ids").get<TokenIds>();
      const auto right = body.at("right_ids").get<TokenIds>();
      last_left = left;
      last_right = right;
      std::vector<double> s(vocab_.size(), std::log(0.5 / double(vocab_.size() - 1)));
      if (!right.empty()) s[static_cast<std::size_t>(right.front())] = std::log(0.5);
      if (broken_scores) s.pop_back();
      reply(res, 200, json{{"scores", s}});
    });
    port_ = svr_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { svr_.listen_after_bind(); });
    svr_.wait_until_ready();
  }

  ~MockServer() {
    svr_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + prefix_; }
  std::size_t vocab_size() const { return vocab_.size(); }

  std::atomic<bool> loading{false};
  std::atomic<bool> normalized{true};
  std::atomic<bool> broken_scores{false};
  std::atomic<int> ar_calls{0};
  TokenIds last_left, last_right;

 private:
  static void reply(httplib::Response& res, int status, const json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  std::string prefix_ = "/api";
  std::vector<std::string> vocab_;
  std::vector<std::string> merges_;
  httplib::Server svr_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(SplitBaseUrl, Prefixes) {
  EXPECT_EQ(remote::split_base_url("http://h:1"), std::make_pair(std::string("http://h:1"), std::string()));
  EXPECT_EQ(remote::split_base_url("http://h:1/a/b/"),
            std::make_pair(std::string("http://h:1"), std::string("/a/b")));
}

TEST(RemoteClient, AllEndpoints) {
  MockServer server;
  remote::Client c(server.url());
  const auto info = c.info();
  EXPECT_EQ(info.ar_model_name, "mock-ar");
  EXPECT_EQ(info.ar_vocab_size, server.vocab_size());
  EXPECT_TRUE(info.normalized);
  EXPECT_EQ(c.vocab("ar").size(), server.vocab_size());
  EXPECT_EQ(c.merges("mlm").size(), 3u);

  const TokenIds ctx{1, 2};
  const auto s = c.ar_scores(ctx);
  ASSERT_EQ(s.size(), server.vocab_size());
  double total = 0.0;
  for (double v : s) total += std::exp(v);
  EXPECT_NEAR(total, 1.0, 1e-4);

  const TokenIds left{3}, right{258};
  const auto m = c.mlm_scores(left, right);
  EXPECT_NEAR(m[258], std::log(0.5), 1e-9);
  EXPECT_EQ(server.last_left, left);
  EXPECT_EQ(server.last_right, right);
}

TEST(RemoteClient, ErrorStatusesBecomeBackendErrors) {
  MockServer server;
  remote::Client c(server.url());
  EXPECT_THROW(c.vocab("xyz"), BackendError);  // 400
  const TokenIds bad{static_cast<TokenId>(server.vocab_size())};
  try {
    c.ar_scores(bad);
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_NE(std::string(e.what()).find("422"), std::string::npos);
  }
  const TokenIds long_ctx(100, 1);
  EXPECT_THROW(c.ar_scores(long_ctx), BackendError);  // 413
  server.loading = true;
  EXPECT_THROW(c.info(), BackendError);  // 503
}

TEST(RemoteClient, UnreachableServer) {
  remote::Client c("http://127.0.0.1:1");
  EXPECT_THROW(c.info(), BackendError);
}

TEST(RemoteBackends, ConnectBuildsTokenizers) {
  MockServer server;
  const auto r = remote::connect(server.url());
  ASSERT_TRUE(r.ar && r.mlm);
  const auto ids = r.ar_tokenizer->encode_continuation("dog");
  EXPECT_EQ(ids, (TokenIds{258}));
  EXPECT_EQ(r.ar_tokenizer->decode(ids), " dog");
}

TEST(RemoteBackends, ScoreLengthChecked) {
  MockServer server;
  const auto r = remote::connect(server.url());
  server.broken_scores = true;
  const TokenIds left{1}, right{2};
  EXPECT_THROW(masked_score(*r.mlm, left, right, MaskedScoreScale::kLogProb), Error);
}

TEST(RemoteBackends, GuidedGenerationEndToEnd) {
  MockServer server;
  const auto r = remote::connect(server.url());
  Backends b{r.ar, r.ar_tokenizer, r.mlm, r.mlm_tokenizer, nullptr, nullptr};
  DecodingConfig cfg;
  cfg.strategy = Strategy::kFusionBoost;
  cfg.k = 3;
  cfg.lambda0 = 0.5;
  cfg.max_new_tokens = 12;
  cfg.seed = 1;
  GuidedDecoder d(b, cfg);
  const auto story = d.make_storyline({"dog"});
  const auto out = d.generate("a", story);
  EXPECT_EQ(out.generated_ids.size(), 12u);
  ASSERT_EQ(out.insertion_log.size(), 1u);
  EXPECT_NE(out.generated_text.find(" dog"), std::string::npos);
  EXPECT_EQ(server.last_right, story[0].mlm_token_ids);

  const auto again = d.generate("a", story);
  EXPECT_EQ(again.generated_ids, out.generated_ids);
}

TEST(RemoteBackends, RawLogitsAreNormalized) {
  MockServer server;
  server.normalized = false;
  const auto r = remote::connect(server.url());
  EXPECT_FALSE(r.ar->normalized());
  const TokenIds ctx{1};
  const auto s = log_prob_score(*r.ar, ctx);
  EXPECT_NEAR(s[0], -std::log(double(server.vocab_size())), 1e-12);
}
