#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <sstream>
#include <thread>
#include <variant>

#include "httplib.h"
#include "svs/backend.hpp"
#include "svs/svs.hpp"
#include "svs/toy.hpp"

using namespace svs;

namespace {

Rollout rollout(std::string text, std::vector<double> lps = {-0.5}) {
  Rollout r;
  r.text = std::move(text);
  r.token_logprobs = std::move(lps);
  return r;
}

GenerationRequest request(std::string prompt, int n, std::optional<std::uint64_t> seed = {}) {
  GenerationRequest r;
  r.prompt = std::move(prompt);
  r.n = n;
  r.seed = seed;
  return r;
}

// Answers from a queue of canned responses and records what it was sent.
struct FakeTransport : HttpTransport {
  std::vector<std::variant<HttpResponse, std::string>> queue;  // string = throw
  std::vector<std::string> bodies;
  std::vector<std::map<std::string, std::string>> headers;

  HttpResponse post(const std::string&, const std::map<std::string, std::string>& h,
                    const std::string& body) override {
    bodies.push_back(body);
    headers.push_back(h);
    REQUIRE(!queue.empty());
    auto next = queue.front();
    queue.erase(queue.begin());
    if (auto* err = std::get_if<std::string>(&next)) throw TransportError(*err);
    return std::get<HttpResponse>(next);
  }
};

std::string completion_body(const std::vector<std::string>& texts, bool logprobs = true) {
  nlohmann::json choices = nlohmann::json::array();
  for (std::size_t i = 0; i < texts.size(); ++i) {
    nlohmann::json c{{"index", i},
                     {"message", {{"role", "assistant"}, {"content", texts[i]}}},
                     {"finish_reason", "stop"}};
    if (logprobs) c["logprobs"] = {{"content", {{{"token", "x"}, {"logprob", -0.25}}}}};
    choices.push_back(c);
  }
  return nlohmann::json{{"choices", choices}}.dump();
}

// Serves chat completions by sampling the toy policy with the request seed,
// so a whole training step can run over HTTP.
struct ToyServerTransport : HttpTransport {
  toy::ToyBackend toy{toy::ToyPolicy::base()};
  HttpResponse post(const std::string&, const std::map<std::string, std::string>&,
                    const std::string& body) override {
    const auto req = nlohmann::json::parse(body);
    GenerationRequest g;
    g.prompt = req["messages"][0]["content"];
    g.n = req["n"];
    g.temperature = req["temperature"];
    g.max_tokens = req["max_tokens"];
    if (req.contains("seed")) g.seed = req["seed"].get<std::uint64_t>();
    const auto rollouts = toy.generate(g);
    nlohmann::json choices = nlohmann::json::array();
    for (std::size_t i = 0; i < rollouts.size(); ++i) {
      nlohmann::json content = nlohmann::json::array();
      for (double lp : rollouts[i].token_logprobs) content.push_back({{"logprob", lp}});
      choices.push_back({{"index", i},
                         {"message", {{"role", "assistant"}, {"content", rollouts[i].text}}},
                         {"finish_reason", "stop"},
                         {"logprobs", {{"content", content}}}});
    }
    return {200, nlohmann::json{{"choices", choices}}.dump()};
  }
};

}  // namespace

TEST_CASE("generation request validation") {
  CHECK_NOTHROW(request("p", 1).validate());
  CHECK_THROWS_AS(request("p", 0).validate(), InvalidInput);
  auto r = request("p", 1);
  r.temperature = 0;
  CHECK_THROWS_AS(r.validate(), InvalidInput);
}

TEST_CASE("scripted backend replays its transcript") {
  Transcript t;
  std::vector<Rollout> eight;
  for (int i = 0; i < 8; ++i) eight.push_back(rollout("answer " + std::to_string(i)));
  t.entries.push_back({"solve me", std::nullopt, eight});
  t.entries.push_back({"seeded", 42, {rollout("a"), rollout("b")}});
  t.entries.push_back({"seeded", 43, {rollout("c"), rollout("d")}});
  ScriptedBackend b(t);

  auto got = b.generate(request("solve me", 8));
  REQUIRE(got.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(got[i].text == eight[i].text);

  CHECK(b.generate(request("seeded", 2, 43))[0].text == "c");
  CHECK(b.generate(request("seeded", 2, 42))[0].text == "a");
  CHECK(b.remaining() == 0);
  CHECK_THROWS_AS(b.generate(request("solve me", 8)), FixtureExhausted);

  ScriptedBackend wrong_n(t);
  CHECK_THROWS_AS(wrong_n.generate(request("solve me", 4)), FixtureExhausted);
}

TEST_CASE("transcript JSON round-trip") {
  Transcript t;
  Rollout r = rollout("text \\boxed{1}", {-0.1, -0.2});
  r.finish_reason = FinishReason::Length;
  t.entries.push_back({"p", 7, {r}});
  t.entries.push_back({"q", std::nullopt, {rollout("x")}});
  const auto back = Transcript::from_json(t.to_json());
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].seed == 7);
  CHECK_FALSE(back.entries[1].seed);
  CHECK(back.entries[0].completions[0].finish_reason == FinishReason::Length);
  CHECK(back.entries[0].completions[0].token_logprobs == std::vector<double>{-0.1, -0.2});
}

TEST_CASE("chat completions request body") {
  HttpBackendOptions o;
  o.model = "m";
  HttpBackend b(std::make_unique<FakeTransport>(), o);
  auto req = request("hi", 3, 9);
  req.max_tokens = 100;
  const auto body = b.build_request(req);
  CHECK(body["model"] == "m");
  CHECK(body["messages"][0]["role"] == "user");
  CHECK(body["messages"][0]["content"] == "hi");
  CHECK(body["n"] == 3);
  CHECK(body["temperature"] == 1.0);
  CHECK(body["max_tokens"] == 100);
  CHECK(body["logprobs"] == true);
  CHECK(body["seed"] == 9);
  CHECK_FALSE(body.contains("top_p"));
  req.top_p = 0.7;
  CHECK(b.build_request(req)["top_p"] == 0.7);
}

TEST_CASE("cassette replay gives the recorded completions") {
  auto cassette = CassetteTransport::load(std::string(SVS_TEST_DATA) + "/cassette_basic.json");
  HttpBackend b(std::move(cassette), HttpBackendOptions{});
  auto req = request("What is 1+1?", 2, 5);
  req.max_tokens = 64;
  const auto got = b.generate(req);
  REQUIRE(got.size() == 2);
  // Choices come back ordered by index.
  CHECK(got[0].text == "1+1 = 2, so \\boxed{2}");
  CHECK(got[0].token_logprobs == std::vector<double>{-0.125, -0.0625});
  CHECK(got[1].text == "1+1 = 3, so \\boxed{3}");
  CHECK(got[1].token_logprobs == std::vector<double>{-0.5, -2.25});
  CHECK(b.has_logprobs());

  auto req2 = request("Count to three.", 1);
  req2.max_tokens = 4;
  const auto trunc = b.generate(req2);
  CHECK(trunc[0].finish_reason == FinishReason::Length);
  CHECK(trunc[0].token_logprobs.empty());
  CHECK_FALSE(b.has_logprobs());

  // Each interaction is served once.
  CHECK_THROWS_AS(b.generate(req), TransportError);
}

TEST_CASE("http backend retries transient failures with backoff") {
  auto fake = std::make_unique<FakeTransport>();
  auto* t = fake.get();
  t->queue = {std::string("connection refused"), HttpResponse{503, "busy"},
              HttpResponse{200, completion_body({"ok \\boxed{1}"})}};
  HttpBackendOptions o;
  o.api_key = "secret";
  HttpBackend b(std::move(fake), o);
  std::vector<long> sleeps;
  b.sleep = [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); };
  const auto got = b.generate(request("p", 1));
  CHECK(got[0].text == "ok \\boxed{1}");
  CHECK(sleeps == std::vector<long>{500, 1000});
  CHECK(t->headers[0].at("Authorization") == "Bearer secret");
}

TEST_CASE("http backend gives up after the configured attempts") {
  auto fake = std::make_unique<FakeTransport>();
  fake->queue = {HttpResponse{429, ""}, HttpResponse{500, ""}, HttpResponse{502, ""}};
  HttpBackend b(std::move(fake), HttpBackendOptions{});
  b.sleep = [](std::chrono::milliseconds) {};
  CHECK_THROWS_AS(b.generate(request("p", 1)), TransportError);
}

TEST_CASE("http backend does not retry client errors") {
  auto fake = std::make_unique<FakeTransport>();
  auto* t = fake.get();
  fake->queue = {HttpResponse{400, "bad request"}};
  HttpBackend b(std::move(fake), HttpBackendOptions{});
  b.sleep = [](std::chrono::milliseconds) {};
  CHECK_THROWS_AS(b.generate(request("p", 1)), TransportError);
  CHECK(t->bodies.size() == 1);
}

TEST_CASE("http backend retries a malformed body") {
  auto fake = std::make_unique<FakeTransport>();
  fake->queue = {HttpResponse{200, "{not json"}, HttpResponse{200, completion_body({"x"}, false)}};
  HttpBackend b(std::move(fake), HttpBackendOptions{});
  b.sleep = [](std::chrono::milliseconds) {};
  CHECK(b.has_logprobs());
  CHECK(b.generate(request("p", 1))[0].text == "x");
  CHECK_FALSE(b.has_logprobs());
}

TEST_CASE("http backend rejects a wrong number of choices") {
  auto fake = std::make_unique<FakeTransport>();
  fake->queue = {HttpResponse{200, completion_body({"a"})}};
  HttpBackend b(std::move(fake), HttpBackendOptions{});
  CHECK_THROWS_AS(b.generate(request("p", 2)), TransportError);
}

TEST_CASE("http backend against a local server") {
  httplib::Server server;
  std::atomic<int> calls{0};
  std::string auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    auth = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    if (calls == 1) {
      res.status = 503;
      return;
    }
    std::vector<std::string> texts;
    for (int i = 0; i < body["n"].get<int>(); ++i) {
      texts.push_back(body["messages"][0]["content"].get<std::string>() + " #" +
                      std::to_string(i));
    }
    res.set_content(completion_body(texts), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpBackendOptions o;
  o.api_key = "k";
  o.initial_backoff = std::chrono::milliseconds(1);
  HttpBackend b(make_httplib_transport("http://127.0.0.1:" + std::to_string(port), 5.0), o);
  Transcript recorded;
  b.record_to(&recorded);
  const auto got = b.generate(request("hello", 3));
  server.stop();
  th.join();

  REQUIRE(got.size() == 3);
  CHECK(got[2].text == "hello #2");
  CHECK(calls == 2);
  CHECK(auth == "Bearer k");
  REQUIRE(recorded.entries.size() == 1);
  CHECK(recorded.entries[0].completions[1].text == "hello #1");
}

TEST_CASE("connection failure surfaces as a transport error") {
  HttpBackendOptions o;
  o.max_attempts = 2;
  o.initial_backoff = std::chrono::milliseconds(1);
  HttpBackend b(make_httplib_transport("http://127.0.0.1:1", 0.5), o);
  CHECK_THROWS_AS(b.generate(request("p", 1)), TransportError);
}

TEST_CASE("a recorded HTTP transcript and the scripted backend yield identical buffers") {
  RunConfig cfg;
  cfg.batch_problems = 4;
  cfg.seed = 21;
  cfg.parallelism = 4;
  cfg.max_tokens = 16;
  const auto dataset = toy::toy_dataset(5, 12, "p");
  const auto plan = plan_step(dataset, cfg, 1);

  Transcript transcript;
  HttpBackend http(std::make_unique<ToyServerTransport>(), HttpBackendOptions{});
  http.record_to(&transcript);
  const auto over_http = run_step(plan, dataset, http, cfg, Mode::Svs);
  REQUIRE(!over_http.samples.empty());

  ScriptedBackend scripted(Transcript::from_json(transcript.to_json()));
  const auto replayed = run_step(plan, dataset, scripted, cfg, Mode::Svs);
  CHECK(replayed.samples == over_http.samples);
  CHECK(scripted.remaining() == 0);

  std::ostringstream a, b;
  write_jsonl(a, over_http.samples);
  write_jsonl(b, replayed.samples);
  CHECK(a.str() == b.str());
}

TEST_CASE("only plain http base URLs are accepted") {
  CHECK_THROWS_AS(make_httplib_transport("https://example.com", 5.0), InvalidInput);
  CHECK_THROWS_AS(make_httplib_transport("example.com:8000", 5.0), InvalidInput);
  CHECK(make_httplib_transport("http://127.0.0.1:1", 5.0));
}
