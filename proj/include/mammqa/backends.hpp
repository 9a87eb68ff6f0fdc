#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mammqa/core.hpp"

namespace mammqa {

// Generation parameters shared by every agent call.
struct GenParams {
  double temperature = 0.3;
  double top_p = 0.7;
  int max_output_tokens = 1024;
};

// Throws std::invalid_argument when out of range.
void validate_params(const GenParams& params);

enum class Role { System, User, Assistant };

const char* role_name(Role r);

// One message part: plain text, or an attached image (user messages only).
struct MessagePart {
  std::string text;
  std::optional<ImageRef> image;
};

struct ChatMessage {
  Role role = Role::User;
  std::vector<MessagePart> parts;

  static ChatMessage system(std::string text);
  static ChatMessage user(std::string text);
  static ChatMessage assistant(std::string text);

  bool has_image() const;
  // All text parts concatenated, image parts rendered as [image:<digest>].
  std::string flattened_text() const;
};

// Throws std::invalid_argument on messages violating the wire invariants
// (empty part list, image part outside a user message, inline bytes without
// a media type).
void validate_messages(const std::vector<ChatMessage>& messages);

enum class BackendKind { Http, Scripted, Replay };

struct BackendId {
  BackendKind kind = BackendKind::Scripted;
  std::string model_name;
  std::string endpoint_label;
};

// Error taxonomy. AuthError is surfaced immediately (no retry);
// TransportError is what remains after the retry budget is exhausted.
struct BackendError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TransportError : BackendError {
  using BackendError::BackendError;
};
struct AuthError : BackendError {
  using BackendError::BackendError;
};
struct ImageUnsupported : BackendError {
  using BackendError::BackendError;
};
struct ReplayMiss : BackendError {
  using BackendError::BackendError;
};

// SHA-256 hex digest helpers.
std::string sha256_hex(const std::uint8_t* data, size_t size);
std::string sha256_hex(const std::string& data);

// Digest of an image's bytes (loading them from disk when necessary).
std::string image_digest(const ImageRef& image);

// Deterministic content hash over (model_name, params, messages). Image
// parts contribute the digest of their bytes, so equal content hashes equal
// regardless of whether the image came from a path or inline bytes.
std::string prompt_hash(const std::vector<ChatMessage>& messages, const GenParams& params,
                        const std::string& model_name);

// Uniform chat-completion interface. Implementations must be safe to call
// from many workers concurrently.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string chat(const std::vector<ChatMessage>& messages, const GenParams& params) = 0;
  virtual const BackendId& id() const = 0;
  virtual bool text_only() const { return false; }

  std::string label() const { return id().endpoint_label; }
};

// ---------------------------------------------------------------------------
// Scripted backend (mock): exact responses keyed by prompt hash, with an
// optional fallback responder. Records every prompt it sees, which the test
// suites use for sentinel scans and call counting.

class ScriptedBackend : public ChatBackend {
 public:
  using Responder =
      std::function<std::string(const std::vector<ChatMessage>&, const GenParams&)>;

  explicit ScriptedBackend(Responder responder = nullptr, std::string label = "scripted",
                           bool text_only = false);

  void script(const std::string& hash, std::string response);
  void set_responder(Responder responder);

  std::string chat(const std::vector<ChatMessage>& messages, const GenParams& params) override;
  const BackendId& id() const override { return id_; }
  bool text_only() const override { return text_only_; }

  int call_count() const;
  // Flattened text of every prompt seen, in call order.
  std::vector<std::string> prompts() const;
  // Number of image parts in each call, in call order.
  std::vector<int> image_part_counts() const;

 private:
  BackendId id_;
  bool text_only_ = false;
  Responder responder_;
  std::map<std::string, std::string> by_hash_;
  mutable std::mutex mu_;
  std::vector<std::string> prompts_;
  std::vector<int> image_counts_;
  int calls_ = 0;
};

// ---------------------------------------------------------------------------
// HTTP backend: OpenAI-compatible chat completions over a single dialect.

struct HttpResult {
  int status = 0;
  std::string body;
  bool transport_error = false;
  std::string error;
};

// Posts `body` to `url` with the given bearer token. The default poster uses
// cpp-httplib; tests inject fakes to drive the retry machinery.
using HttpPoster =
    std::function<HttpResult(const std::string& url, const std::string& body,
                             const std::string& api_key)>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_backoff{1000};  // 1s, then 2s, 4s, ...
};

struct HttpBackendConfig {
  std::string model_name;
  std::string endpoint;  // e.g. "https://api.example.com/v1"
  std::string label;
  bool text_only = false;
  std::string api_key_env = "MAMMQA_API_KEY";
  RetryPolicy retry;
};

class HttpBackend : public ChatBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config, HttpPoster poster = nullptr,
                       Sleeper sleeper = nullptr);

  std::string chat(const std::vector<ChatMessage>& messages, const GenParams& params) override;
  const BackendId& id() const override { return id_; }
  bool text_only() const override { return config_.text_only; }

  // Request body in the wire dialect; exposed for tests.
  static std::string build_request_body(const std::vector<ChatMessage>& messages,
                                        const GenParams& params, const std::string& model_name);

 private:
  HttpBackendConfig config_;
  BackendId id_;
  HttpPoster poster_;
  Sleeper sleeper_;
};

// ---------------------------------------------------------------------------
// Record/replay cache: append-only JSONL of (hash, response, timestamp).

class CacheStore {
 public:
  // Loads existing entries if the file exists; appends go to the same file.
  explicit CacheStore(std::string path);

  std::optional<std::string> lookup(const std::string& hash) const;
  void append(const std::string& hash, const std::string& response);
  size_t size() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> entries_;
};

enum class CacheMode { Record, Replay };

// Wraps an inner backend with a cache. Record mode serves hits from the
// cache and records misses; replay mode is strict and never touches the
// inner backend (which may be null).
class ReplayBackend : public ChatBackend {
 public:
  ReplayBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<CacheStore> cache,
                CacheMode mode, std::string label = "");

  std::string chat(const std::vector<ChatMessage>& messages, const GenParams& params) override;
  const BackendId& id() const override { return id_; }
  bool text_only() const override { return inner_ ? inner_->text_only() : false; }

 private:
  std::shared_ptr<ChatBackend> inner_;
  std::shared_ptr<CacheStore> cache_;
  CacheMode mode_;
  BackendId id_;
};

// ---------------------------------------------------------------------------
// Backend registry and config file.
//
// Config file: one JSON object mapping labels to
//   {"kind": "http"|"scripted"|"replay", "model_name": ..., "endpoint": ...,
//    "text_only": bool, "api_key_env": ..., "cache": ..., "script": ...,
//    "default_response": ...}

class BackendRegistry {
 public:
  void add(const std::string& label, std::shared_ptr<ChatBackend> backend);
  std::shared_ptr<ChatBackend> get(const std::string& label) const;
  bool has(const std::string& label) const;
  std::vector<std::string> labels() const;

  // Wraps every registered backend with a shared cache.
  void wrap_all(std::shared_ptr<CacheStore> cache, CacheMode mode);

  static BackendRegistry from_config_file(const std::string& path);

 private:
  std::map<std::string, std::shared_ptr<ChatBackend>> backends_;
};

}  // namespace mammqa
