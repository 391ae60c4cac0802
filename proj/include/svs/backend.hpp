#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "svs/core.hpp"
#include "svs/grpo.hpp"

namespace svs {

struct GenerationRequest {
  std::string prompt;
  int n = 1;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 1024;
  std::optional<std::uint64_t> seed;
  bool want_logprobs = true;

  void validate() const;
};

/// Anything that turns a prompt into n sampled completions.
class Backend {
 public:
  virtual ~Backend() = default;

  /// Must be safe to call concurrently.
  virtual std::vector<Rollout> generate(const GenerationRequest& request) = 0;

  virtual std::string name() const = 0;

  /// True when rollouts carry exact per-token entropies.
  virtual bool exact_entropy() const { return false; }

  /// True when rollouts carry per-token logprobs usable for the objective.
  virtual bool has_logprobs() const { return true; }

  /// Trainable backends apply one policy update from a drained batch and
  /// report the objective. Others return nullopt (export-only).
  virtual std::optional<grpo::ObjectiveReport> update(
      const std::vector<ExperienceSample>& /*batch*/, const RunConfig& /*config*/) {
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// Transcripts / scripted replay
// ---------------------------------------------------------------------------

/// A recorded generate() call.
struct TranscriptEntry {
  std::string prompt;
  std::optional<std::uint64_t> seed;
  std::vector<Rollout> completions;
};

/// JSON shape: {"entries":[{"prompt":…, "seed":…?, "completions":[Rollout…]}]}
struct Transcript {
  std::vector<TranscriptEntry> entries;

  nlohmann::json to_json() const;
  static Transcript from_json(const nlohmann::json& j);
  static Transcript load(const std::string& path);
  void save(const std::string& path) const;
};

/// Replays a transcript. An entry matches a request when the prompt is equal
/// and, if the entry recorded a seed, the seed is equal too. Matching entries
/// are consumed first-in first-out.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(Transcript transcript);

  std::vector<Rollout> generate(const GenerationRequest& request) override;
  std::string name() const override { return "scripted"; }
  bool has_logprobs() const override { return true; }

  std::size_t remaining() const;

 private:
  mutable std::mutex mu_;
  std::vector<TranscriptEntry> entries_;
  std::vector<bool> used_;
};

// ---------------------------------------------------------------------------
// OpenAI-compatible chat completions
// ---------------------------------------------------------------------------

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Raw POST. Implementations throw TransportError on connection failure.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const std::string& path,
                            const std::map<std::string, std::string>& headers,
                            const std::string& body) = 0;
};

/// cpp-httplib client bound to a base URL (http:// only).
std::unique_ptr<HttpTransport> make_httplib_transport(const std::string& base_url,
                                                      double timeout_s);

/// Serves recorded request/response pairs. Requests are matched on their
/// JSON body; each interaction is used once.
/// JSON shape: {"interactions":[{"request":{…}, "response":{"status":200,"body":{…}}}]}
class CassetteTransport : public HttpTransport {
 public:
  explicit CassetteTransport(nlohmann::json cassette);
  static std::unique_ptr<CassetteTransport> load(const std::string& path);

  HttpResponse post(const std::string& path,
                    const std::map<std::string, std::string>& headers,
                    const std::string& body) override;

 private:
  std::mutex mu_;
  std::vector<nlohmann::json> requests_;
  std::vector<HttpResponse> responses_;
  std::vector<bool> used_;
};

struct HttpBackendOptions {
  std::string model = "policy";
  std::string api_key;  // sent as a bearer token when non-empty
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
};

class HttpBackend : public Backend {
 public:
  HttpBackend(std::unique_ptr<HttpTransport> transport, HttpBackendOptions options);

  std::vector<Rollout> generate(const GenerationRequest& request) override;
  std::string name() const override { return "http"; }
  /// False once any response arrived without per-token logprobs.
  bool has_logprobs() const override;

  /// Request body sent for `request`.
  nlohmann::json build_request(const GenerationRequest& request) const;
  /// Parses a chat-completions response body into rollouts.
  static std::vector<Rollout> parse_response(const nlohmann::json& body,
                                             bool* logprobs_present = nullptr);

  /// When set, every successful call is appended to the transcript.
  void record_to(Transcript* transcript);

  /// Sleep hook, replaceable in tests.
  std::function<void(std::chrono::milliseconds)> sleep;

 private:
  std::unique_ptr<HttpTransport> transport_;
  HttpBackendOptions options_;
  mutable std::mutex mu_;
  bool logprobs_missing_ = false;
  Transcript* recorder_ = nullptr;
};

/// Backend from config: base_url, model, api_key_env, timeout_s, retries.
std::unique_ptr<HttpBackend> make_http_backend(const RunConfig& config);

}  // namespace svs
