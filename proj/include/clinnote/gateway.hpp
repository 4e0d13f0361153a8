#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "clinnote/common.hpp"

namespace clinnote::llm {

class RequestFailed : public Error {
 public:
  explicit RequestFailed(const std::string& what, int status = 0)
      : Error("RequestFailed", what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class EmptyResponse : public Error {
 public:
  explicit EmptyResponse(const std::string& what) : Error("EmptyResponse", what) {}
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what) : Error("ProtocolError", what) {}
};

struct ChatRequest {
  std::string system_prompt;
  std::string user_content;
  double temperature = 0.0;
  int max_tokens = 4096;
  std::string model_name;
  // Routing hint for the mock backend ("extract", "label", ...). Not sent on
  // the wire and not part of the cache key.
  std::string task;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t total_tokens = 0;
};

struct ChatResponse {
  std::string raw_text;
  std::optional<std::string> thinking_text;
  Usage usage;
  double latency_ms = 0.0;
  bool from_cache = false;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::string source_text;
  std::string model_name;
};

// Moves every <think>...</think> block out of `text`. An unterminated
// opening tag swallows the rest of the text as thinking.
struct StrippedText {
  std::string visible;
  std::optional<std::string> thinking;
};
StrippedText strip_thinking(std::string_view text);

// Cache key for a chat request: SHA-256 over canonical JSON of
// (model, system prompt, user content, temperature, max_tokens).
std::string chat_cache_key(const ChatRequest& request);
std::string embed_cache_key(const std::string& model, const std::string& text);

class Backend {
 public:
  virtual ~Backend() = default;
  // Returns the completion as received (thinking not yet stripped).
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                                 const std::string& model) = 0;
};

struct HttpConfig {
  std::string endpoint_url = "http://localhost:8000/v1";
  std::string api_key;
  int max_retries = 3;
  int backoff_ms = 500;
  int timeout_s = 300;
  std::optional<std::int64_t> seed;
};

// OpenAI-compatible /chat/completions and /embeddings over HTTP(S).
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpConfig config);
  ChatResponse complete(const ChatRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                         const std::string& model) override;

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body);

  HttpConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

inline constexpr int kMockEmbeddingDim = 64;

// Deterministic offline backend. Lookup order: exact registered reply,
// transcript entries (first match), task responder. Anything else fails
// with RequestFailed so gaps in a fixture are loud.
class MockBackend : public Backend {
 public:
  using Responder = std::function<std::optional<std::string>(const ChatRequest&)>;

  struct TranscriptEntry {
    std::string task;             // empty matches any task
    std::string system_contains;  // empty matches anything
    std::string user_contains;
    std::string reply;
  };

  explicit MockBackend(std::uint64_t seed = 0) : seed_(seed) {}

  void register_reply(const std::string& user_content, std::string reply);
  void add_transcript_entry(TranscriptEntry entry);
  // JSONL of {task?, system_contains?, user_contains?, reply}.
  void load_transcript(const std::filesystem::path& path);
  void set_responder(const std::string& task, Responder responder);

  ChatResponse complete(const ChatRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                         const std::string& model) override;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::map<std::string, std::string> exact_;
  std::vector<TranscriptEntry> transcript_;
  std::map<std::string, Responder> responders_;
};

// Bag-of-hashed-tokens unit vector: texts sharing words are close under
// cosine distance, and the result depends only on (seed, text).
std::vector<double> mock_embedding(const std::string& text, std::uint64_t seed, int dim = kMockEmbeddingDim);

// Append-only JSONL store of {key, request, response, timestamp}.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path path);
  std::optional<nlohmann::json> lookup(const std::string& key) const;
  void insert(const std::string& key, const nlohmann::json& request, const nlohmann::json& response);
  // Rewrites the file without duplicate keys via temp-file rename.
  void compact();
  size_t size() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, nlohmann::json> records_;
  std::vector<std::string> order_;
};

struct GatewayConfig {
  std::string chat_model = "Qwen3-14B";
  std::string embed_model = "text-embedding";
  int max_concurrency = 4;
  std::optional<std::filesystem::path> cache_path;
};

struct ChatOutcome {
  std::optional<ChatResponse> response;
  std::string error_kind;
  std::string error_message;
  bool ok() const { return response.has_value(); }
};

struct GatewayStats {
  std::uint64_t backend_calls = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t embed_backend_calls = 0;
  std::uint64_t embed_cache_hits = 0;
};

class Gateway {
 public:
  Gateway(GatewayConfig config, std::shared_ptr<Backend> backend);

  // Fills an empty model_name from the config.
  ChatResponse chat(ChatRequest request);
  // Runs requests with at most max_concurrency in flight; outcome i always
  // belongs to request i.
  std::vector<ChatOutcome> chat_batch(const std::vector<ChatRequest>& requests);
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts);

  GatewayStats stats() const;
  const GatewayConfig& config() const { return config_; }
  Backend& backend() { return *backend_; }

 private:
  GatewayConfig config_;
  std::shared_ptr<Backend> backend_;
  std::unique_ptr<ResponseCache> cache_;
  std::atomic<std::uint64_t> backend_calls_{0}, cache_hits_{0}, embed_calls_{0}, embed_hits_{0};
};

nlohmann::json to_json(const ChatResponse& r);
ChatResponse chat_response_from_json(const nlohmann::json& j);

}  // namespace clinnote::llm
