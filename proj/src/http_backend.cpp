// cpp-httplib is confined to this translation unit.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <thread>

#include "clinnote/gateway.hpp"

namespace clinnote::llm {

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
  const std::string& url = config_.endpoint_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

nlohmann::json HttpBackend::post(const std::string& path, const nlohmann::json& body) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(config_.timeout_s, 0);
  client.set_read_timeout(config_.timeout_s, 0);
  client.set_write_timeout(config_.timeout_s, 0);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
    auto res = client.Post(path_prefix_ + path, headers, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;  // transport failure: retry
    }
    if (res->status < 200 || res->status >= 300)
      throw RequestFailed("HTTP " + std::to_string(res->status) + " from " + path + ": " + res->body.substr(0, 200),
                          res->status);
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("response is not JSON: ") + e.what());
    }
  }
  throw RequestFailed("giving up after " + std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
  nlohmann::json body = {{"model", request.model_name},
                         {"messages",
                          {{{"role", "system"}, {"content", request.system_prompt}},
                           {{"role", "user"}, {"content", request.user_content}}}},
                         {"temperature", request.temperature},
                         {"max_tokens", request.max_tokens},
                         {"stream", false}};
  if (config_.seed) body["seed"] = *config_.seed;
  auto j = post("/chat/completions", body);
  ChatResponse r;
  try {
    const auto& message = j.at("choices").at(0).at("message");
    if (message.contains("content") && message["content"].is_string())
      r.raw_text = message["content"].get<std::string>();
    // Some servers return reasoning out-of-band instead of inline tags.
    for (const char* key : {"reasoning_content", "reasoning"}) {
      if (message.contains(key) && message[key].is_string() && !message[key].get<std::string>().empty()) {
        r.thinking_text = message[key].get<std::string>();
        break;
      }
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      const auto& u = j["usage"];
      r.usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
      r.usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
      r.usage.total_tokens = u.value("total_tokens", std::int64_t{0});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("unexpected chat completion shape: ") + e.what());
  }
  if (r.thinking_text && r.raw_text.find("<think>") == std::string::npos)
    r.raw_text = "<think>" + *r.thinking_text + "</think>" + r.raw_text;
  return r;
}

std::vector<std::vector<double>> HttpBackend::embed(const std::vector<std::string>& texts,
                                                    const std::string& model) {
  auto j = post("/embeddings", {{"model", model}, {"input", texts}});
  std::vector<std::vector<double>> out(texts.size());
  try {
    const auto& data = j.at("data");
    if (data.size() != texts.size())
      throw ProtocolError("embedding response has " + std::to_string(data.size()) + " items for " +
                          std::to_string(texts.size()) + " inputs");
    for (size_t i = 0; i < data.size(); ++i) {
      const size_t idx = data[i].contains("index") ? data[i]["index"].get<size_t>() : i;
      if (idx >= out.size()) throw ProtocolError("embedding index out of range");
      out[idx] = data[i].at("embedding").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("unexpected embedding shape: ") + e.what());
  }
  return out;
}

}  // namespace clinnote::llm
