#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "agqr/corpus.hpp"
#include "agqr/error.hpp"

namespace agqr {

/// Org: original query. Tkn: above-mean attribution tokens only.
/// LLM: rewrite without attributions. GLLM: attribution-guided rewrite.
enum class MethodTag { Org, Tkn, LLM, GLLM };

inline constexpr MethodTag kAllMethods[] = {MethodTag::Org, MethodTag::Tkn, MethodTag::LLM, MethodTag::GLLM};

std::string_view to_string(MethodTag m);
MethodTag parse_method(std::string_view name);

inline constexpr double kRewriteTemperature = 0.0;
inline constexpr int kRewriteMaxTokens = 120;

struct PromptRequest {
  std::string query_id;
  std::string original_query;
  /// (token, score) pairs shown to the model; empty for the plain prompt.
  std::vector<std::pair<std::string, double>> attributions;
  bool guided = false;
  std::string text;
  std::string model;
  double temperature = kRewriteTemperature;
  int max_tokens = kRewriteMaxTokens;
  /// 16 hex digits of FNV-1a over `text`.
  std::string hash;
};

struct RewrittenQuery {
  std::string query_id;
  MethodTag method = MethodTag::Org;
  std::string text;
  std::vector<std::string> tokens;
  /// The method's own rule produced nothing usable and the original was kept.
  bool fallback = false;
  bool cache_hit = false;
  std::string response_id;
};

std::string prompt_hash(std::string_view text);

/// Renders the attribution-guided rewriting prompt. Scores print with three
/// decimals as `token (0.123)`, comma separated, in query order.
/// Throws agqr::Error when `scores` and the query tokens differ in length or are empty.
PromptRequest build_guided_prompt(const Query& query, std::span<const double> scores, std::string model = {});

/// The same prompt with every attribution-specific line removed.
PromptRequest build_plain_prompt(const Query& query, std::string model = {});

/// Tokens whose score is strictly above the query-wise mean, in original
/// order. If none qualify, all tokens are kept and `fallback` is set.
RewrittenQuery select_top_tokens(const Query& query, std::span<const double> scores);

/// Reduces a raw model reply to a single query string: first non-empty line,
/// a leading "Rewritten query:"-style label removed, surrounding quotes
/// stripped. May return an empty string.
std::string clean_response(std::string_view raw);

struct RewriterReply {
  std::string text;
  std::string response_id;
};

/// Thrown when a rewriter gives up on a prompt.
class RewriteError : public Error {
 public:
  RewriteError(std::string prompt_hash, const std::string& what)
      : Error("rewrite of prompt " + prompt_hash + " failed: " + what), hash_(std::move(prompt_hash)) {}
  const std::string& prompt_hash() const noexcept { return hash_; }

 private:
  std::string hash_;
};

/// A text-completion backend. Implementations must tolerate concurrent calls.
class Rewriter {
 public:
  virtual ~Rewriter() = default;
  virtual std::string name() const = 0;
  virtual RewriterReply complete(const PromptRequest& request) = 0;
};

/// Returns the original query unchanged.
class IdentityRewriter final : public Rewriter {
 public:
  std::string name() const override { return "identity"; }
  RewriterReply complete(const PromptRequest& request) override;
};

/// Fixed rewrites by query id, with separate tables for guided and plain
/// prompts. Unknown ids yield an empty reply.
class ScriptedRewriter final : public Rewriter {
 public:
  using Table = std::map<std::string, std::string, std::less<>>;

  ScriptedRewriter(Table guided, Table plain) : guided_(std::move(guided)), plain_(std::move(plain)) {}
  explicit ScriptedRewriter(Table both) : guided_(both), plain_(std::move(both)) {}

  /// JSON object `{id: rewrite}` (used for both prompts) or
  /// `{"guided": {...}, "plain": {...}}`.
  static ScriptedRewriter from_file(const std::filesystem::path& path);

  std::string name() const override { return "scripted"; }
  RewriterReply complete(const PromptRequest& request) override;

 private:
  Table guided_;
  Table plain_;
};

struct ChatClientOptions {
  /// Full URL of the chat-completions route, e.g. http://127.0.0.1:8000/v1/chat/completions.
  std::string endpoint;
  std::string model;
  std::string api_key;
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  std::chrono::seconds timeout{120};
  int max_in_flight = 4;
};

/// Chat-completions JSON over HTTP(S): one user message, the request's
/// temperature and max_tokens. Retries transport errors, 429 and 5xx with
/// exponential backoff.
class ChatCompletionsClient final : public Rewriter {
 public:
  explicit ChatCompletionsClient(ChatClientOptions options);

  std::string name() const override { return "live"; }
  RewriterReply complete(const PromptRequest& request) override;

  /// Request body for a prompt; exposed for tests.
  static std::string request_body(const PromptRequest& request, const std::string& model);

 private:
  ChatClientOptions options_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
  std::counting_semaphore<64> in_flight_;
};

/// On-disk cache of raw replies, one JSON record per (prompt hash, model):
/// {prompt_hash, model, response, response_id, timestamp}.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  /// Throws agqr::Error when a record exists but is unreadable or does not
  /// match the key.
  std::optional<RewriterReply> get(const std::string& hash, const std::string& model) const;
  void put(const std::string& hash, const std::string& model, const RewriterReply& reply);

  std::filesystem::path record_path(const std::string& hash, const std::string& model) const;

 private:
  std::filesystem::path dir_;
  mutable std::mutex write_mutex_;
};

/// Runs a prompt through the cache and the rewriter and cleans the reply.
/// An empty cleaned reply falls back to the original query with `fallback` set.
RewrittenQuery rewrite(const PromptRequest& request, MethodTag method, Rewriter& rewriter,
                       ResponseCache* cache = nullptr);

/// Scripted stand-in for a chat-completions endpoint, for offline tests.
/// POST /v1/chat/completions answers with the script entry keyed by the
/// original query text found in the prompt, or echoes that query when absent.
class MockChatServer {
 public:
  using Script = std::map<std::string, std::string, std::less<>>;

  explicit MockChatServer(Script script);
  ~MockChatServer();
  MockChatServer(const MockChatServer&) = delete;
  MockChatServer& operator=(const MockChatServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop() is called.
  void listen(const std::string& host, int port);
  void stop();

  /// Answer the next `n` requests with HTTP 500.
  void fail_next(int n);
  std::size_t requests_served() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Extracts the text between the quotes of the `Original query: "..."` line.
std::optional<std::string> original_query_of_prompt(std::string_view prompt);

}  // namespace agqr
