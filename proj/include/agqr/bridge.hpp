#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "agqr/error.hpp"
#include "agqr/retriever.hpp"

namespace agqr {

class BridgeError : public Error {
 public:
  using Error::Error;
};

/// Newline-delimited JSON protocol spoken with an external retriever process
/// over its stdin/stdout.
///
///   request : {"v":1, "id":N, "op":"info"|"search"|"attribute", "payload":{...}}
///   response: {"v":1, "id":N, "ok":true, "payload":{...}}
///           | {"v":1, "id":N, "ok":false, "error":"..."}
///
/// Payloads:
///   info      -> {"model": str, "docs": int}
///   search    {"query": str, "k": int}
///             -> {"hits": [{"id": str, "score": num}, ...]}
///   attribute {"query": str, "doc_ids": [str], "steps": int}
///             -> {"tokens": [str], "attributions": [[num]], one row per doc,
///                 optional "subword_totals": [num] and "residuals": [num]}
namespace wire {

inline constexpr int kVersion = 1;

nlohmann::json request(std::uint64_t id, const std::string& op, nlohmann::json payload);
/// Parses one response line and returns its payload. Throws BridgeError on
/// malformed JSON, a version or id mismatch, or `ok: false`.
nlohmann::json response_payload(const std::string& line, std::uint64_t expected_id);

/// Decoded attribute reply, checked against the engine's tokenization of the
/// query and the requested documents.
std::vector<AttributionVector> decode_attribution(const nlohmann::json& payload, const Query& query,
                                                  std::span<const std::string> doc_ids, int steps);
RankedList decode_search(const nlohmann::json& payload, const std::string& query_id, std::size_t k);

}  // namespace wire

/// Retriever hosted by a child process. Requests are strictly sequential: at
/// most one is in flight per bridge process.
class BridgeRetriever final : public Retriever {
 public:
  /// Spawns `command` (argv form; argv[0] is looked up on PATH when it has no
  /// slash) and performs the info handshake.
  explicit BridgeRetriever(std::vector<std::string> command);
  ~BridgeRetriever() override;
  BridgeRetriever(const BridgeRetriever&) = delete;
  BridgeRetriever& operator=(const BridgeRetriever&) = delete;

  std::string kind() const override { return "bridge"; }
  std::size_t corpus_size() const override { return docs_; }
  const std::string& model() const noexcept { return model_; }

  RankedList search(const Query& query, std::size_t k) const override;
  std::vector<AttributionVector> attribute(const Query& query, std::span<const std::string> doc_ids,
                                           int steps) const override;

  /// Sends one raw request and returns its payload.
  nlohmann::json call(const std::string& op, nlohmann::json payload) const;

 private:
  struct Process;
  std::unique_ptr<Process> proc_;
  mutable std::mutex mutex_;
  mutable std::uint64_t next_id_ = 1;
  std::string model_;
  std::size_t docs_ = 0;
};

}  // namespace agqr
