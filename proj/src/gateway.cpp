#include "clinnote/gateway.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <thread>

namespace clinnote::llm {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t seed_from(std::string_view text, std::uint64_t seed) {
  const std::string digest = sha256_hex(std::to_string(seed) + "\x1f" + std::string(text));
  return std::stoull(digest.substr(0, 16), nullptr, 16);
}

std::string utc_now_iso() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

StrippedText strip_thinking(std::string_view text) {
  StrippedText out;
  std::string thinking;
  bool any = false;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t open = text.find(kThinkOpen, pos);
    size_t close_only = text.find(kThinkClose, pos);
    // A stray closing tag (reasoning servers sometimes drop the opener):
    // everything before it is thinking.
    if (close_only != std::string_view::npos && (open == std::string_view::npos || close_only < open) &&
        !any && pos == 0) {
      thinking.append(text.substr(0, close_only));
      any = true;
      pos = close_only + kThinkClose.size();
      continue;
    }
    if (open == std::string_view::npos) {
      out.visible.append(text.substr(pos));
      break;
    }
    out.visible.append(text.substr(pos, open - pos));
    size_t body = open + kThinkOpen.size();
    size_t close = text.find(kThinkClose, body);
    if (!thinking.empty()) thinking.push_back('\n');
    any = true;
    if (close == std::string_view::npos) {
      thinking.append(text.substr(body));
      break;
    }
    thinking.append(text.substr(body, close - body));
    pos = close + kThinkClose.size();
  }
  // Remove any leftover delimiters so the invariant holds for odd inputs.
  out.visible = replace_all(replace_all(out.visible, kThinkOpen, ""), kThinkClose, "");
  out.visible = trim(out.visible);
  if (any) out.thinking = trim(thinking);
  return out;
}

std::string chat_cache_key(const ChatRequest& r) {
  nlohmann::json j = {{"kind", "chat"},
                      {"model", r.model_name},
                      {"system", r.system_prompt},
                      {"user", r.user_content},
                      {"temperature", r.temperature},
                      {"max_tokens", r.max_tokens}};
  return sha256_hex(j.dump());
}

std::string embed_cache_key(const std::string& model, const std::string& text) {
  nlohmann::json j = {{"kind", "embed"}, {"model", model}, {"text", text}};
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------- mock

std::vector<double> mock_embedding(const std::string& text, std::uint64_t seed, int dim) {
  std::vector<double> v(static_cast<size_t>(dim), 0.0);
  auto add_token = [&](std::string_view token) {
    std::uint64_t state = seed_from(token, seed);
    for (auto& x : v) {
      // uniform in [-1, 1)
      x += static_cast<double>(splitmix64(state) >> 11) * (2.0 / 9007199254740992.0) - 1.0;
    }
  };
  std::string token;
  bool any = false;
  for (char c : text + " ") {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!token.empty()) {
      add_token(token);
      any = true;
      token.clear();
    }
  }
  if (!any) add_token("\x02" + text);
  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

void MockBackend::register_reply(const std::string& user_content, std::string reply) {
  exact_[user_content] = std::move(reply);
}

void MockBackend::add_transcript_entry(TranscriptEntry entry) { transcript_.push_back(std::move(entry)); }

void MockBackend::load_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mock transcript " + path.string());
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("mock transcript line " + std::to_string(lineno) + ": " + e.what());
    }
    add_transcript_entry({j.value("task", ""), j.value("system_contains", ""), j.value("user_contains", ""),
                          j.at("reply").get<std::string>()});
  }
}

void MockBackend::set_responder(const std::string& task, Responder responder) {
  responders_[task] = std::move(responder);
}

ChatResponse MockBackend::complete(const ChatRequest& request) {
  auto make = [&](const std::string& text) {
    ChatResponse r;
    r.raw_text = text;
    r.usage.prompt_tokens =
        static_cast<std::int64_t>(split_whitespace(request.system_prompt).size() +
                                  split_whitespace(request.user_content).size());
    r.usage.completion_tokens = static_cast<std::int64_t>(split_whitespace(text).size());
    r.usage.total_tokens = r.usage.prompt_tokens + r.usage.completion_tokens;
    return r;
  };
  if (auto it = exact_.find(request.user_content); it != exact_.end()) return make(it->second);
  for (const auto& e : transcript_) {
    if (!e.task.empty() && e.task != request.task) continue;
    if (!e.system_contains.empty() && request.system_prompt.find(e.system_contains) == std::string::npos)
      continue;
    if (!e.user_contains.empty() && request.user_content.find(e.user_contains) == std::string::npos) continue;
    return make(e.reply);
  }
  if (auto it = responders_.find(request.task); it != responders_.end()) {
    if (auto reply = it->second(request)) return make(*reply);
  }
  throw RequestFailed("mock backend has no reply for task '" + request.task + "'");
}

std::vector<std::vector<double>> MockBackend::embed(const std::vector<std::string>& texts,
                                                    const std::string&) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(mock_embedding(t, seed_));
  return out;
}

// --------------------------------------------------------------- cache

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      const auto key = j.at("key").get<std::string>();
      if (!records_.count(key)) order_.push_back(key);
      records_[key] = std::move(j);
    } catch (const nlohmann::json::exception&) {
      // torn trailing write from an interrupted run
    }
  }
}

std::optional<nlohmann::json> ResponseCache::lookup(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = records_.find(key);
  if (it == records_.end()) return std::nullopt;
  return it->second.at("response");
}

void ResponseCache::insert(const std::string& key, const nlohmann::json& request,
                           const nlohmann::json& response) {
  nlohmann::json rec = {{"key", key}, {"request", request}, {"response", response}, {"timestamp", utc_now_iso()}};
  std::lock_guard lock(mu_);
  if (records_.count(key)) return;
  records_[key] = rec;
  order_.push_back(key);
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot append to cache " + path_.string());
  out << rec.dump() << '\n';
}

void ResponseCache::compact() {
  std::lock_guard lock(mu_);
  std::string content;
  for (const auto& key : order_) content += records_.at(key).dump() + "\n";
  write_file_atomic(path_, content);
}

size_t ResponseCache::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

// ------------------------------------------------------------- gateway

nlohmann::json to_json(const ChatResponse& r) {
  return {{"raw_text", r.raw_text},
          {"thinking_text", r.thinking_text ? nlohmann::json(*r.thinking_text) : nlohmann::json(nullptr)},
          {"usage",
           {{"prompt_tokens", r.usage.prompt_tokens},
            {"completion_tokens", r.usage.completion_tokens},
            {"total_tokens", r.usage.total_tokens}}},
          {"latency_ms", r.latency_ms}};
}

ChatResponse chat_response_from_json(const nlohmann::json& j) {
  ChatResponse r;
  r.raw_text = j.at("raw_text").get<std::string>();
  if (j.contains("thinking_text") && !j["thinking_text"].is_null())
    r.thinking_text = j["thinking_text"].get<std::string>();
  if (j.contains("usage")) {
    const auto& u = j["usage"];
    r.usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
    r.usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
    r.usage.total_tokens = u.value("total_tokens", std::int64_t{0});
  }
  r.latency_ms = j.value("latency_ms", 0.0);
  return r;
}

Gateway::Gateway(GatewayConfig config, std::shared_ptr<Backend> backend)
    : config_(std::move(config)), backend_(std::move(backend)) {
  if (!backend_) throw InvalidInput("gateway needs a backend");
  if (config_.max_concurrency < 1) throw InvalidInput("max_concurrency must be >= 1");
  if (config_.cache_path) cache_ = std::make_unique<ResponseCache>(*config_.cache_path);
}

ChatResponse Gateway::chat(ChatRequest request) {
  if (request.model_name.empty()) request.model_name = config_.chat_model;
  if (trim(request.system_prompt).empty() || trim(request.user_content).empty())
    throw InvalidInput("chat prompts must be non-empty");
  if (request.temperature < 0) throw InvalidInput("temperature must be >= 0");
  if (request.max_tokens <= 0) throw InvalidInput("max_tokens must be positive");

  const std::string key = chat_cache_key(request);
  if (cache_) {
    if (auto hit = cache_->lookup(key)) {
      ++cache_hits_;
      auto r = chat_response_from_json(*hit);
      r.from_cache = true;
      return r;
    }
  }
  const auto start = std::chrono::steady_clock::now();
  ++backend_calls_;
  ChatResponse r = backend_->complete(request);
  r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  auto stripped = strip_thinking(r.raw_text);
  r.raw_text = std::move(stripped.visible);
  if (stripped.thinking) r.thinking_text = std::move(stripped.thinking);
  if (r.raw_text.empty()) throw EmptyResponse("model returned no visible content");
  if (cache_) {
    nlohmann::json req = {{"model", request.model_name},
                          {"system", request.system_prompt},
                          {"user", request.user_content},
                          {"temperature", request.temperature},
                          {"max_tokens", request.max_tokens}};
    cache_->insert(key, req, to_json(r));
  }
  return r;
}

std::vector<ChatOutcome> Gateway::chat_batch(const std::vector<ChatRequest>& requests) {
  std::vector<ChatOutcome> outcomes(requests.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < requests.size(); i = next++) {
      try {
        outcomes[i].response = chat(requests[i]);
      } catch (const Error& e) {
        outcomes[i].error_kind = e.kind();
        outcomes[i].error_message = e.message();
      } catch (const std::exception& e) {
        outcomes[i].error_kind = "RequestFailed";
        outcomes[i].error_message = e.what();
      }
    }
  };
  const size_t n_threads = std::min<size_t>(static_cast<size_t>(config_.max_concurrency), requests.size());
  if (n_threads <= 1) {
    worker();
    return outcomes;
  }
  std::vector<std::jthread> pool;
  for (size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  pool.clear();  // joins
  return outcomes;
}

std::vector<EmbeddingVector> Gateway::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw InvalidInput("embed() needs at least one text");
  const std::string& model = config_.embed_model;
  std::vector<std::optional<std::vector<double>>> found(texts.size());
  std::vector<std::string> missing;
  std::vector<size_t> missing_idx;
  for (size_t i = 0; i < texts.size(); ++i) {
    if (cache_) {
      if (auto hit = cache_->lookup(embed_cache_key(model, texts[i]))) {
        found[i] = hit->at("values").get<std::vector<double>>();
        ++embed_hits_;
        continue;
      }
    }
    missing.push_back(texts[i]);
    missing_idx.push_back(i);
  }
  if (!missing.empty()) {
    ++embed_calls_;
    auto vectors = backend_->embed(missing, model);
    if (vectors.size() != missing.size())
      throw ProtocolError("embedding count " + std::to_string(vectors.size()) + " != input count " +
                          std::to_string(missing.size()));
    for (size_t j = 0; j < vectors.size(); ++j) {
      if (cache_)
        cache_->insert(embed_cache_key(model, missing[j]), {{"model", model}, {"text", missing[j]}},
                       {{"values", vectors[j]}});
      found[missing_idx[j]] = std::move(vectors[j]);
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (size_t i = 0; i < texts.size(); ++i) out.push_back({std::move(*found[i]), texts[i], model});
  const size_t dim = out.front().values.size();
  for (const auto& e : out)
    if (e.values.size() != dim || dim == 0)
      throw ProtocolError("embedding dimension mismatch within batch (" + std::to_string(dim) + " vs " +
                          std::to_string(e.values.size()) + ")");
  return out;
}

GatewayStats Gateway::stats() const {
  return {backend_calls_.load(), cache_hits_.load(), embed_calls_.load(), embed_hits_.load()};
}

}  // namespace clinnote::llm
