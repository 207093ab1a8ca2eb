#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <regex>
#include <thread>

#include <json.hpp>

#include "agqr/rewrite.hpp"

namespace agqr {
namespace {

using json = nlohmann::json;

bool retryable(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

ChatCompletionsClient::ChatCompletionsClient(ChatClientOptions options)
    : options_(std::move(options)), in_flight_(std::clamp(options_.max_in_flight, 1, 64)) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(options_.endpoint, m, kUrl))
    throw Error("llm.endpoint must be an http(s) URL, got '" + options_.endpoint + "'");
  base_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
  if (options_.attempts < 1) options_.attempts = 1;
}

std::string ChatCompletionsClient::request_body(const PromptRequest& request, const std::string& model) {
  const json body = {{"model", model},
                     {"messages", json::array({{{"role", "user"}, {"content", request.text}}})},
                     {"temperature", request.temperature},
                     {"max_tokens", request.max_tokens}};
  return body.dump();
}

RewriterReply ChatCompletionsClient::complete(const PromptRequest& request) {
  const std::string model = request.model.empty() ? options_.model : request.model;
  const std::string body = request_body(request, model);

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<64>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  std::string last_error;
  auto backoff = options_.initial_backoff;
  for (int attempt = 1; attempt <= options_.attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(base_);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    httplib::Headers headers;
    if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

    const auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      if (retryable(res->status)) continue;
      break;
    }
    try {
      const json j = json::parse(res->body);
      const json& choice = j.at("choices").at(0);
      std::string content;
      if (const auto msg = choice.find("message"); msg != choice.end() && msg->contains("content") &&
                                                   !msg->at("content").is_null()) {
        content = msg->at("content").get<std::string>();
      } else if (choice.contains("text")) {
        content = choice.at("text").get<std::string>();
      }
      return {content, j.value("id", std::string())};
    } catch (const json::exception& e) {
      last_error = std::string("unparseable response: ") + e.what();
      break;
    }
  }
  throw RewriteError(request.hash, last_error + " after " + std::to_string(options_.attempts) + " attempt(s)");
}

struct MockChatServer::Impl {
  Script script;
  httplib::Server server;
  std::thread thread;
  std::atomic<int> fail_remaining{0};
  std::atomic<std::size_t> served{0};
};

MockChatServer::MockChatServer(Script script) : impl_(std::make_unique<Impl>()) {
  impl_->script = std::move(script);
  Impl* impl = impl_.get();
  const auto handler = [impl](const httplib::Request& req, httplib::Response& res) {
    const std::size_t n = ++impl->served;
    if (impl->fail_remaining.load() > 0 && impl->fail_remaining.fetch_sub(1) > 0) {
      res.status = 500;
      res.set_content(R"({"error":{"message":"injected failure"}})", "application/json");
      return;
    }
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      res.status = 400;
      res.set_content(R"({"error":{"message":"invalid JSON"}})", "application/json");
      return;
    }
    std::string prompt;
    if (body.contains("messages") && body["messages"].is_array() && !body["messages"].empty())
      prompt = body["messages"].back().value("content", std::string());
    const auto original = original_query_of_prompt(prompt);
    std::string answer;
    if (original) {
      const auto it = impl->script.find(*original);
      answer = it != impl->script.end() ? it->second : *original;
    }
    const json reply = {
        {"id", "mock-" + std::to_string(n)},
        {"object", "chat.completion"},
        {"model", body.value("model", std::string("mock"))},
        {"choices", json::array({{{"index", 0},
                                  {"message", {{"role", "assistant"}, {"content", answer}}},
                                  {"finish_reason", "stop"}}})}};
    res.set_content(reply.dump(), "application/json");
  };
  impl_->server.Post("/v1/chat/completions", handler);
  impl_->server.Post("/chat/completions", handler);
}

MockChatServer::~MockChatServer() { stop(); }

int MockChatServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("mock chat server cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void MockChatServer::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw Error("mock chat server cannot listen on " + host + ":" + std::to_string(port));
}

void MockChatServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void MockChatServer::fail_next(int n) { impl_->fail_remaining = n; }

std::size_t MockChatServer::requests_served() const { return impl_->served.load(); }

}  // namespace agqr
