#include "mammqa/backends.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <thread>

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

namespace mammqa {

using nlohmann::json;

void validate_params(const GenParams& params) {
  if (params.temperature < 0.0 || params.temperature > 2.0)
    throw std::invalid_argument("temperature must be in [0, 2]");
  if (params.top_p <= 0.0 || params.top_p > 1.0)
    throw std::invalid_argument("top_p must be in (0, 1]");
  if (params.max_output_tokens <= 0)
    throw std::invalid_argument("max_output_tokens must be positive");
}

const char* role_name(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

ChatMessage ChatMessage::system(std::string text) {
  return ChatMessage{Role::System, {MessagePart{std::move(text), std::nullopt}}};
}

ChatMessage ChatMessage::user(std::string text) {
  return ChatMessage{Role::User, {MessagePart{std::move(text), std::nullopt}}};
}

ChatMessage ChatMessage::assistant(std::string text) {
  return ChatMessage{Role::Assistant, {MessagePart{std::move(text), std::nullopt}}};
}

bool ChatMessage::has_image() const {
  for (const MessagePart& part : parts)
    if (part.image) return true;
  return false;
}

std::string ChatMessage::flattened_text() const {
  std::string out;
  for (const MessagePart& part : parts) {
    if (!part.text.empty()) {
      if (!out.empty()) out += '\n';
      out += part.text;
    }
    if (part.image) {
      if (!out.empty()) out += '\n';
      out += "[image:" + image_digest(*part.image) + "]";
    }
  }
  return out;
}

void validate_messages(const std::vector<ChatMessage>& messages) {
  if (messages.empty()) throw std::invalid_argument("messages must be non-empty");
  for (const ChatMessage& msg : messages) {
    if (msg.parts.empty()) throw std::invalid_argument("message must have at least one part");
    for (const MessagePart& part : msg.parts) {
      if (part.image) {
        if (msg.role != Role::User)
          throw std::invalid_argument("image parts are allowed only in user messages");
        if (part.image->has_bytes() && part.image->media_type.empty())
          throw std::invalid_argument("inline image bytes require a media type");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Hashing

std::string sha256_hex(const std::uint8_t* data, size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
  bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
            EVP_DigestUpdate(ctx, data, size) == 1 &&
            EVP_DigestFinal_ex(ctx, digest, &digest_len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(digest_len * 2);
  for (unsigned int i = 0; i < digest_len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string sha256_hex(const std::string& data) {
  return sha256_hex(reinterpret_cast<const std::uint8_t*>(data.data()), data.size());
}

std::string image_digest(const ImageRef& image) {
  ImageRef loaded = image.with_loaded_bytes();
  return sha256_hex(loaded.bytes.data(), loaded.bytes.size());
}

std::string prompt_hash(const std::vector<ChatMessage>& messages, const GenParams& params,
                        const std::string& model_name) {
  json canonical;
  canonical["model"] = model_name;
  canonical["temperature"] = params.temperature;
  canonical["top_p"] = params.top_p;
  canonical["max_output_tokens"] = params.max_output_tokens;
  json msgs = json::array();
  for (const ChatMessage& msg : messages) {
    json parts = json::array();
    for (const MessagePart& part : msg.parts) {
      if (part.image) {
        parts.push_back(json{{"image_sha256", image_digest(*part.image)}});
        if (!part.text.empty()) parts.back()["text"] = part.text;
      } else {
        parts.push_back(json{{"text", part.text}});
      }
    }
    msgs.push_back(json{{"role", role_name(msg.role)}, {"parts", parts}});
  }
  canonical["messages"] = msgs;
  return sha256_hex(canonical.dump());
}

// ---------------------------------------------------------------------------
// Scripted backend

ScriptedBackend::ScriptedBackend(Responder responder, std::string label, bool text_only)
    : id_{BackendKind::Scripted, "scripted", std::move(label)},
      text_only_(text_only),
      responder_(std::move(responder)) {}

void ScriptedBackend::script(const std::string& hash, std::string response) {
  std::lock_guard lock(mu_);
  by_hash_[hash] = std::move(response);
}

void ScriptedBackend::set_responder(Responder responder) {
  std::lock_guard lock(mu_);
  responder_ = std::move(responder);
}

std::string ScriptedBackend::chat(const std::vector<ChatMessage>& messages,
                                  const GenParams& params) {
  validate_messages(messages);
  validate_params(params);
  if (text_only_) {
    for (const ChatMessage& msg : messages)
      if (msg.has_image())
        throw ImageUnsupported("backend " + id_.endpoint_label +
                               " is text-only but received an image part");
  }
  std::string hash = prompt_hash(messages, params, id_.model_name);
  std::string flattened;
  int images = 0;
  for (const ChatMessage& msg : messages) {
    if (!flattened.empty()) flattened += '\n';
    flattened += std::string("[") + role_name(msg.role) + "] " + msg.flattened_text();
    for (const MessagePart& part : msg.parts)
      if (part.image) ++images;
  }

  Responder responder;
  std::optional<std::string> scripted;
  {
    std::lock_guard lock(mu_);
    prompts_.push_back(flattened);
    image_counts_.push_back(images);
    ++calls_;
    auto it = by_hash_.find(hash);
    if (it != by_hash_.end()) scripted = it->second;
    responder = responder_;
  }
  if (scripted) return *scripted;
  if (responder) return responder(messages, params);
  throw TransportError("scripted backend has no response for prompt " + hash);
}

int ScriptedBackend::call_count() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::vector<std::string> ScriptedBackend::prompts() const {
  std::lock_guard lock(mu_);
  return prompts_;
}

std::vector<int> ScriptedBackend::image_part_counts() const {
  std::lock_guard lock(mu_);
  return image_counts_;
}

// ---------------------------------------------------------------------------
// HTTP backend

namespace {

const char* const kBase64Chars =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  while (i + 2 < bytes.size()) {
    std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kBase64Chars[(n >> 18) & 63];
    out += kBase64Chars[(n >> 12) & 63];
    out += kBase64Chars[(n >> 6) & 63];
    out += kBase64Chars[n & 63];
    i += 3;
  }
  if (i + 1 == bytes.size()) {
    std::uint32_t n = bytes[i] << 16;
    out += kBase64Chars[(n >> 18) & 63];
    out += kBase64Chars[(n >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kBase64Chars[(n >> 18) & 63];
    out += kBase64Chars[(n >> 12) & 63];
    out += kBase64Chars[(n >> 6) & 63];
    out += "=";
  }
  return out;
}

}  // namespace

namespace detail {
// Defined in http_transport.cpp; keeps the httplib header out of this TU.
HttpResult httplib_post(const std::string& url, const std::string& body,
                        const std::string& api_key);
}  // namespace detail

std::string HttpBackend::build_request_body(const std::vector<ChatMessage>& messages,
                                            const GenParams& params,
                                            const std::string& model_name) {
  json req;
  req["model"] = model_name;
  req["temperature"] = params.temperature;
  req["top_p"] = params.top_p;
  req["max_tokens"] = params.max_output_tokens;
  json msgs = json::array();
  for (const ChatMessage& msg : messages) {
    json m;
    m["role"] = role_name(msg.role);
    bool multipart = msg.has_image();
    if (!multipart) {
      std::string text;
      for (const MessagePart& part : msg.parts) {
        if (!text.empty()) text += '\n';
        text += part.text;
      }
      m["content"] = text;
    } else {
      json content = json::array();
      for (const MessagePart& part : msg.parts) {
        if (!part.text.empty()) content.push_back(json{{"type", "text"}, {"text", part.text}});
        if (part.image) {
          ImageRef loaded = part.image->with_loaded_bytes();
          std::string url = "data:" + loaded.media_type + ";base64," +
                            base64_encode(loaded.bytes);
          content.push_back(json{{"type", "image_url"}, {"image_url", {{"url", url}}}});
        }
      }
      m["content"] = content;
    }
    msgs.push_back(m);
  }
  req["messages"] = msgs;
  return req.dump();
}

HttpBackend::HttpBackend(HttpBackendConfig config, HttpPoster poster, Sleeper sleeper)
    : config_(std::move(config)),
      id_{BackendKind::Http, config_.model_name,
          config_.label.empty() ? config_.model_name : config_.label},
      poster_(poster ? std::move(poster) : detail::httplib_post),
      sleeper_(sleeper ? std::move(sleeper)
                       : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  if (config_.model_name.empty())
    throw std::invalid_argument("http backend requires a model name");
}

std::string HttpBackend::chat(const std::vector<ChatMessage>& messages, const GenParams& params) {
  validate_messages(messages);
  validate_params(params);
  if (config_.text_only) {
    for (const ChatMessage& msg : messages)
      if (msg.has_image())
        throw ImageUnsupported("backend " + id_.endpoint_label +
                               " is text-only but received an image part");
  }

  std::string body = build_request_body(messages, params, config_.model_name);
  std::string url = config_.endpoint + "/chat/completions";
  const char* key = std::getenv(config_.api_key_env.c_str());
  std::string api_key = key ? key : "";

  std::string last_error;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    HttpResult res = poster_(url, body, api_key);
    if (res.transport_error) {
      last_error = res.error.empty() ? "transport failure" : res.error;
    } else if (res.status == 401 || res.status == 403) {
      throw AuthError("credential rejected by " + url + " (status " +
                      std::to_string(res.status) + ")");
    } else if (res.status == 429 || res.status >= 500) {
      last_error = "status " + std::to_string(res.status);
    } else if (res.status >= 400) {
      throw BackendError("request rejected by " + url + " (status " +
                         std::to_string(res.status) + "): " + res.body);
    } else {
      try {
        json j = json::parse(res.body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const std::exception& e) {
        throw BackendError("malformed completion response from " + url + ": " + e.what());
      }
    }
    if (attempt < config_.retry.max_attempts) {
      sleeper_(config_.retry.base_backoff * (1 << (attempt - 1)));
    }
  }
  throw TransportError("chat call to " + url + " failed after " +
                       std::to_string(config_.retry.max_attempts) + " attempts: " + last_error);
}

// ---------------------------------------------------------------------------
// Cache store and replay wrapper

CacheStore::CacheStore(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;  // a missing file is an empty cache
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    // Later entries win, matching append-only semantics.
    entries_[j.at("hash").get<std::string>()] = j.at("response").get<std::string>();
  }
}

std::optional<std::string> CacheStore::lookup(const std::string& hash) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(hash);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void CacheStore::append(const std::string& hash, const std::string& response) {
  std::lock_guard lock(mu_);
  entries_[hash] = response;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to cache file: " + path_);
  char stamp[32];
  std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  out << json{{"hash", hash}, {"response", response}, {"timestamp", stamp}}.dump() << '\n';
}

size_t CacheStore::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

ReplayBackend::ReplayBackend(std::shared_ptr<ChatBackend> inner,
                             std::shared_ptr<CacheStore> cache, CacheMode mode, std::string label)
    : inner_(std::move(inner)), cache_(std::move(cache)), mode_(mode) {
  std::string model = inner_ ? inner_->id().model_name : "replay";
  if (label.empty()) label = inner_ ? inner_->label() : "replay";
  id_ = BackendId{BackendKind::Replay, model, std::move(label)};
}

std::string ReplayBackend::chat(const std::vector<ChatMessage>& messages,
                                const GenParams& params) {
  std::string hash = prompt_hash(messages, params, id_.model_name);
  if (auto hit = cache_->lookup(hash)) return *hit;
  if (mode_ == CacheMode::Replay)
    throw ReplayMiss("no recorded response for prompt " + hash + " in " + cache_->path());
  if (!inner_) throw ReplayMiss("record cache has no inner backend for prompt " + hash);
  std::string response = inner_->chat(messages, params);
  cache_->append(hash, response);
  return response;
}

// ---------------------------------------------------------------------------
// Registry / config file

void BackendRegistry::add(const std::string& label, std::shared_ptr<ChatBackend> backend) {
  backends_[label] = std::move(backend);
}

std::shared_ptr<ChatBackend> BackendRegistry::get(const std::string& label) const {
  auto it = backends_.find(label);
  if (it == backends_.end())
    throw std::invalid_argument("unknown backend label: " + label);
  return it->second;
}

bool BackendRegistry::has(const std::string& label) const { return backends_.count(label) > 0; }

std::vector<std::string> BackendRegistry::labels() const {
  std::vector<std::string> out;
  for (const auto& [label, backend] : backends_) {
    (void)backend;
    out.push_back(label);
  }
  return out;
}

void BackendRegistry::wrap_all(std::shared_ptr<CacheStore> cache, CacheMode mode) {
  for (auto& [label, backend] : backends_) {
    backend = std::make_shared<ReplayBackend>(backend, cache, mode, label);
  }
}

BackendRegistry BackendRegistry::from_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open backend config: " + path);
  json j = json::parse(in);
  BackendRegistry registry;
  for (const auto& [label, cfg] : j.items()) {
    std::string kind = cfg.value("kind", "http");
    if (kind == "http") {
      HttpBackendConfig hc;
      hc.model_name = cfg.at("model_name").get<std::string>();
      hc.endpoint = cfg.at("endpoint").get<std::string>();
      hc.label = label;
      hc.text_only = cfg.value("text_only", false);
      hc.api_key_env = cfg.value("api_key_env", std::string("MAMMQA_API_KEY"));
      registry.add(label, std::make_shared<HttpBackend>(std::move(hc)));
    } else if (kind == "scripted") {
      std::string fallback = cfg.value("default_response", "");
      ScriptedBackend::Responder responder;
      if (!fallback.empty()) {
        responder = [fallback](const std::vector<ChatMessage>&, const GenParams&) {
          return fallback;
        };
      }
      auto backend =
          std::make_shared<ScriptedBackend>(responder, label, cfg.value("text_only", false));
      if (cfg.contains("script")) {
        std::ifstream script(cfg["script"].get<std::string>());
        if (!script)
          throw std::runtime_error("cannot open script file: " +
                                   cfg["script"].get<std::string>());
        std::string line;
        while (std::getline(script, line)) {
          if (line.empty()) continue;
          json entry = json::parse(line);
          backend->script(entry.at("hash").get<std::string>(),
                          entry.at("response").get<std::string>());
        }
      }
      registry.add(label, backend);
    } else if (kind == "replay") {
      auto cache = std::make_shared<CacheStore>(cfg.at("cache").get<std::string>());
      registry.add(label,
                   std::make_shared<ReplayBackend>(nullptr, cache, CacheMode::Replay, label));
    } else {
      throw std::runtime_error("unknown backend kind '" + kind + "' for label " + label);
    }
  }
  return registry;
}

}  // namespace mammqa
