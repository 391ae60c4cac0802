#include "svs/backend.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"

namespace svs {

void GenerationRequest::validate() const {
  if (n < 1) throw InvalidInput("generation request: n must be >= 1");
  if (!(temperature > 0.0)) {
    throw InvalidInput("generation request: temperature must be > 0");
  }
  if (max_tokens < 1) throw InvalidInput("generation request: max_tokens must be >= 1");
}

// ---- transcripts -----------------------------------------------------------

nlohmann::json Transcript::to_json() const {
  nlohmann::json entries_json = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json j;
    j["prompt"] = e.prompt;
    if (e.seed) j["seed"] = *e.seed;
    nlohmann::json completions = nlohmann::json::array();
    for (const auto& r : e.completions) completions.push_back(svs::to_json(r));
    j["completions"] = std::move(completions);
    entries_json.push_back(std::move(j));
  }
  return nlohmann::json{{"entries", std::move(entries_json)}};
}

Transcript Transcript::from_json(const nlohmann::json& j) {
  Transcript t;
  for (const auto& e : j.at("entries")) {
    TranscriptEntry entry;
    entry.prompt = e.at("prompt").get<std::string>();
    if (e.contains("seed") && !e["seed"].is_null()) {
      entry.seed = e["seed"].get<std::uint64_t>();
    }
    for (const auto& c : e.at("completions")) {
      entry.completions.push_back(rollout_from_json(c));
    }
    t.entries.push_back(std::move(entry));
  }
  return t;
}

Transcript Transcript::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open transcript '" + path + "'");
  return from_json(nlohmann::json::parse(in));
}

void Transcript::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write transcript '" + path + "'");
  out << to_json().dump(1) << '\n';
}

ScriptedBackend::ScriptedBackend(Transcript transcript)
    : entries_(std::move(transcript.entries)), used_(entries_.size(), false) {}

std::vector<Rollout> ScriptedBackend::generate(const GenerationRequest& request) {
  request.validate();
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (used_[i]) continue;
    const auto& e = entries_[i];
    if (e.prompt != request.prompt) continue;
    if (e.seed && request.seed && *e.seed != *request.seed) continue;
    if (static_cast<int>(e.completions.size()) != request.n) {
      throw FixtureExhausted("scripted entry " + std::to_string(i) + " holds " +
                             std::to_string(e.completions.size()) +
                             " completions but " + std::to_string(request.n) +
                             " were requested");
    }
    used_[i] = true;
    return e.completions;
  }
  std::string head = request.prompt.substr(0, 60);
  throw FixtureExhausted("no scripted completions left for prompt '" + head +
                         (request.prompt.size() > 60 ? "…'" : "'"));
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count(used_.begin(), used_.end(), false));
}

// ---- transports ------------------------------------------------------------

namespace {

// A fresh client per request, so concurrent fan-out calls do not share
// connection state.
class HttplibTransport : public HttpTransport {
 public:
  HttplibTransport(std::string base_url, double timeout_s)
      : base_url_(std::move(base_url)), timeout_s_(timeout_s) {}

  HttpResponse post(const std::string& path,
                    const std::map<std::string, std::string>& headers,
                    const std::string& body) override {
    httplib::Client client(base_url_);
    const auto secs = static_cast<time_t>(timeout_s_);
    const auto usecs = static_cast<time_t>((timeout_s_ - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(path, h, body, "application/json");
    if (!res) {
      throw TransportError("HTTP request failed: " + httplib::to_string(res.error()));
    }
    return HttpResponse{res->status, res->body};
  }

 private:
  std::string base_url_;
  double timeout_s_;
};

}  // namespace

std::unique_ptr<HttpTransport> make_httplib_transport(const std::string& base_url,
                                                      double timeout_s) {
  if (base_url.rfind("http://", 0) != 0) {
    throw InvalidInput("base_url: only http:// URLs are supported, got '" + base_url + "'");
  }
  return std::make_unique<HttplibTransport>(base_url, timeout_s);
}

CassetteTransport::CassetteTransport(nlohmann::json cassette) {
  for (const auto& it : cassette.at("interactions")) {
    requests_.push_back(it.at("request"));
    const auto& resp = it.at("response");
    HttpResponse r;
    r.status = resp.value("status", 200);
    const auto& body = resp.at("body");
    r.body = body.is_string() ? body.get<std::string>() : body.dump();
    responses_.push_back(std::move(r));
  }
  used_.assign(requests_.size(), false);
}

std::unique_ptr<CassetteTransport> CassetteTransport::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open cassette '" + path + "'");
  return std::make_unique<CassetteTransport>(nlohmann::json::parse(in));
}

HttpResponse CassetteTransport::post(const std::string& /*path*/,
                                     const std::map<std::string, std::string>& /*headers*/,
                                     const std::string& body) {
  const auto request = nlohmann::json::parse(body);
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < requests_.size(); ++i) {
    if (!used_[i] && requests_[i] == request) {
      used_[i] = true;
      return responses_[i];
    }
  }
  throw TransportError("cassette has no recorded response for this request");
}

// ---- chat completions backend ----------------------------------------------

HttpBackend::HttpBackend(std::unique_ptr<HttpTransport> transport,
                         HttpBackendOptions options)
    : sleep([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }),
      transport_(std::move(transport)),
      options_(std::move(options)) {
  if (options_.max_attempts < 1) options_.max_attempts = 1;
}

nlohmann::json HttpBackend::build_request(const GenerationRequest& request) const {
  nlohmann::json body;
  body["model"] = options_.model;
  body["messages"] = nlohmann::json::array(
      {nlohmann::json{{"role", "user"}, {"content", request.prompt}}});
  body["n"] = request.n;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  body["logprobs"] = request.want_logprobs;
  if (request.top_p < 1.0) body["top_p"] = request.top_p;
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

std::vector<Rollout> HttpBackend::parse_response(const nlohmann::json& body,
                                                 bool* logprobs_present) {
  if (!body.contains("choices") || !body["choices"].is_array()) {
    throw TransportError("response has no choices array");
  }
  std::vector<std::pair<int, Rollout>> indexed;
  bool all_logprobs = true;
  int position = 0;
  for (const auto& choice : body["choices"]) {
    Rollout r;
    const auto& msg = choice.value("message", nlohmann::json::object());
    if (msg.contains("content") && msg["content"].is_string()) {
      r.text = msg["content"].get<std::string>();
    }
    r.finish_reason = choice.value("finish_reason", std::string("stop")) == "length"
                          ? FinishReason::Length
                          : FinishReason::Stop;
    const auto lp = choice.find("logprobs");
    if (lp != choice.end() && lp->is_object() && lp->contains("content") &&
        (*lp)["content"].is_array()) {
      for (const auto& tok : (*lp)["content"]) {
        r.token_logprobs.push_back(std::min(0.0, tok.at("logprob").get<double>()));
      }
    } else {
      all_logprobs = false;
    }
    const int index = choice.value("index", position);
    indexed.emplace_back(index, std::move(r));
    ++position;
  }
  std::stable_sort(indexed.begin(), indexed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Rollout> out;
  out.reserve(indexed.size());
  for (auto& [_, r] : indexed) out.push_back(std::move(r));
  if (logprobs_present) *logprobs_present = all_logprobs;
  return out;
}

std::vector<Rollout> HttpBackend::generate(const GenerationRequest& request) {
  request.validate();
  const std::string body = build_request(request).dump();
  std::map<std::string, std::string> headers{{"Content-Type", "application/json"}};
  if (!options_.api_key.empty()) {
    headers["Authorization"] = "Bearer " + options_.api_key;
  }

  std::string last_error;
  auto backoff = options_.initial_backoff;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    if (attempt > 1) {
      sleep(backoff);
      backoff *= 2;
    }
    HttpResponse res;
    try {
      res = transport_->post("/v1/chat/completions", headers, body);
    } catch (const TransportError& e) {
      last_error = e.what();
      continue;
    }
    if (res.status == 429 || res.status >= 500) {
      last_error = "server returned status " + std::to_string(res.status);
      continue;
    }
    if (res.status != 200) {
      throw TransportError("server rejected request with status " +
                           std::to_string(res.status) + ": " + res.body.substr(0, 200));
    }
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(res.body);
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("malformed response body: ") + e.what();
      continue;
    }
    bool logprobs_present = true;
    auto rollouts = parse_response(parsed, &logprobs_present);
    if (static_cast<int>(rollouts.size()) != request.n) {
      throw TransportError("server returned " + std::to_string(rollouts.size()) +
                           " choices, expected " + std::to_string(request.n));
    }
    std::lock_guard lock(mu_);
    if (request.want_logprobs && !logprobs_present) logprobs_missing_ = true;
    if (recorder_) {
      recorder_->entries.push_back(TranscriptEntry{request.prompt, request.seed, rollouts});
    }
    return rollouts;
  }
  throw TransportError("giving up after " + std::to_string(options_.max_attempts) +
                       " attempts: " + last_error);
}

bool HttpBackend::has_logprobs() const {
  std::lock_guard lock(mu_);
  return !logprobs_missing_;
}

void HttpBackend::record_to(Transcript* transcript) {
  std::lock_guard lock(mu_);
  recorder_ = transcript;
}

std::unique_ptr<HttpBackend> make_http_backend(const RunConfig& config) {
  HttpBackendOptions opts;
  opts.model = config.model;
  if (const char* key = std::getenv(config.api_key_env.c_str())) opts.api_key = key;
  opts.max_attempts = config.retries;
  opts.initial_backoff = std::chrono::milliseconds(config.retry_backoff_ms);
  return std::make_unique<HttpBackend>(
      make_httplib_transport(config.base_url, config.timeout_s), std::move(opts));
}

}  // namespace svs
