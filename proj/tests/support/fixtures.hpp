#pragma once

#include <string>

#include "guidedec/guided_decoder.hpp"
#include "guidedec/reference/table_models.hpp"

namespace guidedec::test_support {

inline std::string fixture_path(const std::string& name) {
  return std::string(GUIDEDEC_FIXTURE_DIR) + "/" + name;
}

inline reference::ToyFixture load_fixture(const std::string& name) {
  return reference::ToyFixture::load(fixture_path(name));
}

inline Backends backends_of(const reference::ToyFixture& f) {
  Backends b;
  b.ar = f.ar;
  b.ar_tokenizer = f.ar_tokenizer;
  b.mlm = f.mlm;
  b.mlm_tokenizer = f.mlm_tokenizer;
  return b;
}

inline DecodingConfig config(Strategy s, std::size_t k, double lambda0, std::size_t max_tokens,
                             std::uint64_t seed = 0) {
  DecodingConfig c;
  c.strategy = s;
  c.k = k;
  c.lambda0 = lambda0;
  c.max_new_tokens = max_tokens;
  c.seed = seed;
  return c;
}

}  // namespace guidedec::test_support
