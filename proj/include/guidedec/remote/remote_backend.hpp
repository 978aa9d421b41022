#pragma once

// HTTP client for a model server exposing next-token and mask-fill scores.
//
//   GET  /v1/info                       -> {ar_model_name, mlm_model_name,
//                                           ar_vocab_size, mlm_vocab_size,
//                                           normalized}
//   GET  /v1/vocab?model=ar|mlm         -> ["tok0", "tok1", ...]
//   GET  /v1/merges?model=ar|mlm        -> ["a b", ...]
//   POST /v1/ar_scores  {context_ids}   -> {scores}
//   POST /v1/mlm_scores {left_ids, right_ids} -> {scores}

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "guidedec/model_interface.hpp"
#include "guidedec/tokenizer.hpp"

namespace guidedec::remote {

struct ServerInfo {
  std::string ar_model_name;
  std::string mlm_model_name;
  std::size_t ar_vocab_size = 0;
  std::size_t mlm_vocab_size = 0;
  bool normalized = true;
  std::optional<TokenId> eos_id;
};

/// Splits "http://host:port/prefix" into ("http://host:port", "/prefix").
inline std::pair<std::string, std::string> split_base_url(const std::string& url) {
  const auto scheme = url.find("://");
  const std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = url.find('/', host_start);
  if (slash == std::string::npos) return {url, ""};
  std::string prefix = url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, slash), prefix};
}

/// Thread-safe: calls are serialized on one connection.
class Client {
 public:
  explicit Client(const std::string& base_url) : base_url_(base_url) {
    auto [origin, prefix] = split_base_url(base_url);
    if (origin.empty()) throw BackendError("empty backend URL");
    prefix_ = prefix;
    client_ = std::make_unique<httplib::Client>(origin);
    client_->set_connection_timeout(5);
    client_->set_read_timeout(120);
  }

  const std::string& base_url() const noexcept { return base_url_; }

  ServerInfo info() const {
    const auto j = get_json("/v1/info");
    ServerInfo i;
    try {
      i.ar_model_name = j.at("ar_model_name").get<std::string>();
      i.mlm_model_name = j.at("mlm_model_name").get<std::string>();
      i.ar_vocab_size = j.at("ar_vocab_size").get<std::size_t>();
      i.mlm_vocab_size = j.at("mlm_vocab_size").get<std::size_t>();
      i.normalized = j.at("normalized").get<bool>();
      if (j.contains("eos_id") && !j.at("eos_id").is_null()) i.eos_id = j.at("eos_id").get<TokenId>();
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("malformed /v1/info response: ") + e.what());
    }
    return i;
  }

  Vocabulary vocab(const std::string& model) const {
    try {
      return Vocabulary::from_json(get_json("/v1/vocab?model=" + model));
    } catch (const BackendError&) {
      throw;
    } catch (const Error& e) {
      throw BackendError(std::string("bad vocabulary from server: ") + e.what());
    }
  }

  std::vector<std::string> merges(const std::string& model) const {
    const auto j = get_json("/v1/merges?model=" + model);
    if (!j.is_array()) throw BackendError("malformed /v1/merges response");
    std::vector<std::string> out;
    for (const auto& m : j) {
      if (!m.is_string()) throw BackendError("malformed /v1/merges response");
      out.push_back(m.get<std::string>());
    }
    return out;
  }

  ScoreVector ar_scores(std::span<const TokenId> context) const {
    nlohmann::json body{{"context_ids", TokenIds(context.begin(), context.end())}};
    return scores_from(post_json("/v1/ar_scores", body));
  }

  ScoreVector mlm_scores(std::span<const TokenId> left, std::span<const TokenId> right) const {
    nlohmann::json body{{"left_ids", TokenIds(left.begin(), left.end())},
                        {"right_ids", TokenIds(right.begin(), right.end())}};
    return scores_from(post_json("/v1/mlm_scores", body));
  }

 private:
  static ScoreVector scores_from(const nlohmann::json& j) {
    try {
      return ScoreVector(j.at("scores").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("malformed scores response: ") + e.what());
    }
  }

  static nlohmann::json parse(const std::string& path, const std::string& body) {
    try {
      return nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw BackendError("invalid JSON from " + path + ": " + e.what());
    }
  }

  static void check(const httplib::Result& res, const std::string& path) {
    if (!res) {
      throw BackendError("request to " + path + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw BackendError(path + " returned HTTP " + std::to_string(res->status) + ": " +
                         res->body.substr(0, 200));
    }
  }

  nlohmann::json get_json(const std::string& path) const {
    std::lock_guard lock(mu_);
    auto res = client_->Get(prefix_ + path);
    check(res, path);
    return parse(path, res->body);
  }

  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) const {
    std::lock_guard lock(mu_);
    auto res = client_->Post(prefix_ + path, body.dump(), "application/json");
    check(res, path);
    return parse(path, res->body);
  }

  std::string base_url_;
  std::string prefix_;
  mutable std::mutex mu_;
  std::unique_ptr<httplib::Client> client_;
};

class RemoteArModel final : public AutoregressiveModel {
 public:
  RemoteArModel(std::shared_ptr<const Client> client, Vocabulary vocab, bool normalized,
                std::optional<TokenId> eos)
      : client_(std::move(client)), vocab_(std::move(vocab)), normalized_(normalized), eos_(eos) {}

  const Vocabulary& vocabulary() const override { return vocab_; }
  bool normalized() const override { return normalized_; }
  std::optional<TokenId> eos_id() const override { return eos_; }
  ScoreVector score(std::span<const TokenId> context) const override {
    return client_->ar_scores(context);
  }

 private:
  std::shared_ptr<const Client> client_;
  Vocabulary vocab_;
  bool normalized_;
  std::optional<TokenId> eos_;
};

class RemoteMaskedModel final : public MaskedModel {
 public:
  RemoteMaskedModel(std::shared_ptr<const Client> client, Vocabulary vocab, bool normalized)
      : client_(std::move(client)), vocab_(std::move(vocab)), normalized_(normalized) {}

  const Vocabulary& vocabulary() const override { return vocab_; }
  bool normalized() const override { return normalized_; }
  ScoreVector score_masked(std::span<const TokenId> left,
                           std::span<const TokenId> right) const override {
    return client_->mlm_scores(left, right);
  }

 private:
  std::shared_ptr<const Client> client_;
  Vocabulary vocab_;
  bool normalized_;
};

/// Both models from one server, with byte-level BPE tokenizers built from
/// the served vocabularies and merges.
struct RemoteBackends {
  ServerInfo info;
  std::shared_ptr<const RemoteArModel> ar;
  std::shared_ptr<const Tokenizer> ar_tokenizer;
  std::shared_ptr<const RemoteMaskedModel> mlm;
  std::shared_ptr<const Tokenizer> mlm_tokenizer;
};

inline RemoteBackends connect(const std::string& base_url, bool want_ar = true,
                              bool want_mlm = true) {
  auto client = std::make_shared<const Client>(base_url);
  RemoteBackends r;
  r.info = client->info();
  if (want_ar) {
    Vocabulary v = client->vocab("ar");
    if (v.size() != r.info.ar_vocab_size) throw BackendError("AR vocabulary size mismatch");
    r.ar_tokenizer = std::make_shared<ByteLevelBpeTokenizer>(v, client->merges("ar"));
    r.ar = std::make_shared<RemoteArModel>(client, std::move(v), r.info.normalized, r.info.eos_id);
  }
  if (want_mlm) {
    Vocabulary v = client->vocab("mlm");
    if (v.size() != r.info.mlm_vocab_size) throw BackendError("MLM vocabulary size mismatch");
    r.mlm_tokenizer = std::make_shared<ByteLevelBpeTokenizer>(v, client->merges("mlm"));
    r.mlm = std::make_shared<RemoteMaskedModel>(client, std::move(v), r.info.normalized);
  }
  return r;
}

}  // namespace guidedec::remote
