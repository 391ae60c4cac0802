#include "svs/core.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <sstream>

#include "svs/grpo.hpp"

namespace svs {

Problem Problem::original(std::string id, std::string statement,
                          std::string gold) {
  Problem p{std::move(id), std::move(statement), std::move(gold),
            Origin::Dataset, std::nullopt};
  p.validate();
  return p;
}

Problem Problem::variant_of(const Problem& parent, std::string id,
                            std::string statement) {
  Problem p{std::move(id), std::move(statement), parent.gold_answer,
            Origin::Synthetic, parent.id};
  p.validate();
  return p;
}

void Problem::validate() const {
  if (gold_answer.empty()) {
    throw InvalidInput("problem '" + id + "' has an empty gold answer");
  }
  if ((origin == Origin::Synthetic) != parent_id.has_value()) {
    throw InvalidInput("problem '" + id +
                       "': synthetic origin requires a parent id and vice versa");
  }
}

void Rollout::validate() const {
  for (double lp : token_logprobs) {
    if (!(lp <= 0.0)) throw InvalidInput("token logprob must be <= 0");
  }
}

RewardedGroup RewardedGroup::make(std::string problem_id, std::string prompt,
                                  std::vector<Rollout> rollouts,
                                  std::vector<double> rewards) {
  if (rollouts.size() != rewards.size()) {
    throw InvalidInput("rollout and reward counts differ");
  }
  RewardedGroup g;
  g.problem_id = std::move(problem_id);
  g.prompt = std::move(prompt);
  g.rollouts = std::move(rollouts);
  g.rewards = std::move(rewards);
  double sum = 0.0;
  for (double r : g.rewards) sum += r;
  g.group_accuracy = g.rewards.empty() ? 0.0 : sum / g.rewards.size();
  if (g.rewards.size() >= 2) g.advantages = grpo::group_advantages(g.rewards);
  return g;
}

std::string_view to_string(SampleKind kind) {
  switch (kind) {
    case SampleKind::OriginalSolve: return "OriginalSolve";
    case SampleKind::Synthesis: return "Synthesis";
    case SampleKind::SyntheticSolve: return "SyntheticSolve";
  }
  return "OriginalSolve";
}

SampleKind sample_kind_from_string(std::string_view s) {
  if (s == "OriginalSolve") return SampleKind::OriginalSolve;
  if (s == "Synthesis") return SampleKind::Synthesis;
  if (s == "SyntheticSolve") return SampleKind::SyntheticSolve;
  throw InvalidInput("unknown sample kind '" + std::string(s) + "'");
}

std::string_view to_string(FinishReason reason) {
  return reason == FinishReason::Stop ? "stop" : "length";
}

FinishReason finish_reason_from_string(std::string_view s) {
  if (s == "stop") return FinishReason::Stop;
  if (s == "length") return FinishReason::Length;
  throw InvalidInput("unknown finish reason '" + std::string(s) + "'");
}

void RunConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw InvalidInput(field + ": " + why);
  };
  if (G < 1) fail("G", "must be positive");
  if (G_v < 1) fail("G_v", "must be positive");
  auto unit_open = [&](double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) fail(name, "must lie in (0,1)");
  };
  unit_open(acc_lo, "acc_lo");
  unit_open(acc_hi, "acc_hi");
  unit_open(synth_acc_lo, "synth_acc_lo");
  unit_open(synth_acc_hi, "synth_acc_hi");
  if (!(acc_lo < acc_hi)) fail("acc_lo", "must be below acc_hi");
  if (!(synth_acc_lo <= synth_acc_hi)) fail("synth_acc_lo", "must not exceed synth_acc_hi");
  if (!(eps_lo > 0.0)) fail("eps_lo", "must be positive");
  if (!(eps_hi > 0.0)) fail("eps_hi", "must be positive");
  if (!(beta >= 0.0)) fail("beta", "must be nonnegative");
  if (!(temperature > 0.0)) fail("temperature", "must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) fail("top_p", "must lie in (0,1]");
  if (batch_problems < 1) fail("batch_problems", "must be positive");
  if (max_steps < 0) fail("max_steps", "must be nonnegative");
  if (max_tokens < 1) fail("max_tokens", "must be positive");
  if (!(oversample >= 1.0)) fail("oversample", "must be >= 1");
  if (parallelism < 1) fail("parallelism", "must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
  if (toy_problems < 1) fail("toy_problems", "must be positive");
  if (toy_heldout < 0) fail("toy_heldout", "must be nonnegative");
  if (eval_every < 0) fail("eval_every", "must be nonnegative");
  if (eval_n < 1) fail("eval_n", "must be positive");
  for (int k : eval_k) {
    if (k < 1 || k > eval_n) fail("eval_k", "every k must lie in [1, eval_n]");
  }
  if (retries < 1) fail("retries", "must be positive");
  if (!(timeout_s > 0.0)) fail("timeout_s", "must be positive");
  if (retry_backoff_ms < 0) fail("retry_backoff_ms", "must be nonnegative");
}

void ExperienceBuffer::add(std::vector<ExperienceSample> samples) {
  samples_.reserve(samples_.size() + samples.size());
  for (auto& s : samples) samples_.push_back(std::move(s));
}

std::vector<ExperienceSample> ExperienceBuffer::drain() {
  std::vector<ExperienceSample> out;
  out.swap(samples_);
  return out;
}

std::vector<int> group_ids(const std::vector<ExperienceSample>& samples) {
  std::vector<int> ids;
  ids.reserve(samples.size());
  int g = -1;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i == 0 || samples[i].kind != samples[i - 1].kind ||
        samples[i].prompt != samples[i - 1].prompt) {
      ++g;
    }
    ids.push_back(g);
  }
  return ids;
}

void buffer_add(ExperienceBuffer& buffer,
                std::vector<ExperienceSample> samples) {
  buffer.add(std::move(samples));
}

std::vector<ExperienceSample> buffer_drain(ExperienceBuffer& buffer) {
  return buffer.drain();
}

nlohmann::json to_json(const ExperienceSample& s) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(s.kind);
  j["prompt"] = s.prompt;
  j["response"] = s.response;
  j["reward"] = s.reward;
  j["advantage"] = s.advantage;
  j["token_logprobs_old"] = s.token_logprobs_old;
  j["problem_id"] = s.problem_id;
  return nlohmann::json(j);
}

ExperienceSample sample_from_json(const nlohmann::json& j) {
  ExperienceSample s;
  s.kind = sample_kind_from_string(j.at("kind").get<std::string>());
  s.prompt = j.at("prompt").get<std::string>();
  s.response = j.at("response").get<std::string>();
  s.reward = j.at("reward").get<double>();
  s.advantage = j.at("advantage").get<double>();
  s.token_logprobs_old = j.at("token_logprobs_old").get<std::vector<double>>();
  s.problem_id = j.at("problem_id").get<std::string>();
  return s;
}

std::string to_jsonl_line(const ExperienceSample& s) {
  // Built by hand so the field order is fixed and reals round-trip exactly.
  std::string line = "{\"kind\":";
  line += nlohmann::json(std::string(to_string(s.kind))).dump();
  line += ",\"prompt\":" + nlohmann::json(s.prompt).dump();
  line += ",\"response\":" + nlohmann::json(s.response).dump();
  line += ",\"reward\":" + format_real(s.reward);
  line += ",\"advantage\":" + format_real(s.advantage);
  line += ",\"token_logprobs_old\":[";
  for (std::size_t i = 0; i < s.token_logprobs_old.size(); ++i) {
    if (i) line += ',';
    line += format_real(s.token_logprobs_old[i]);
  }
  line += "],\"problem_id\":" + nlohmann::json(s.problem_id).dump() + "}";
  return line;
}

void write_jsonl(std::ostream& out,
                 const std::vector<ExperienceSample>& samples) {
  for (const auto& s : samples) out << to_jsonl_line(s) << '\n';
}

std::vector<ExperienceSample> read_samples_jsonl(std::istream& in) {
  std::vector<ExperienceSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(sample_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

nlohmann::json to_json(const Rollout& r) {
  nlohmann::json j;
  j["text"] = r.text;
  j["token_logprobs"] = r.token_logprobs;
  j["finish_reason"] = to_string(r.finish_reason);
  if (!r.token_entropies.empty()) j["token_entropies"] = r.token_entropies;
  return j;
}

Rollout rollout_from_json(const nlohmann::json& j) {
  Rollout r;
  r.text = j.at("text").get<std::string>();
  if (j.contains("token_logprobs")) {
    r.token_logprobs = j.at("token_logprobs").get<std::vector<double>>();
  }
  if (j.contains("finish_reason")) {
    r.finish_reason =
        finish_reason_from_string(j.at("finish_reason").get<std::string>());
  }
  if (j.contains("token_entropies")) {
    r.token_entropies = j.at("token_entropies").get<std::vector<double>>();
  }
  return r;
}

std::vector<Problem> read_dataset_jsonl(std::istream& in) {
  std::vector<Problem> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto answer = j.at("answer");
      std::string gold =
          answer.is_string() ? answer.get<std::string>() : answer.dump();
      std::string id = j.contains("id")
                           ? (j["id"].is_string() ? j["id"].get<std::string>()
                                                  : j["id"].dump())
                           : "line-" + std::to_string(lineno);
      out.push_back(Problem::original(std::move(id),
                                      j.at("problem").get<std::string>(),
                                      std::move(gold)));
    } catch (const std::exception& e) {
      throw InvalidInput("dataset line " + std::to_string(lineno) + ": " +
                         e.what());
    }
  }
  return out;
}

void write_dataset_jsonl(std::ostream& out,
                         const std::vector<Problem>& problems) {
  for (const auto& p : problems) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["problem"] = p.statement;
    j["answer"] = p.gold_answer;
    out << j.dump() << '\n';
  }
}

std::string format_real(double v) {
  if (std::isnan(v)) return "null";
  if (std::isinf(v)) return v > 0 ? "1e308" : "-1e308";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }
  return std::string(buf, end);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
  return splitmix64(splitmix64(base) ^ fnv1a64(label));
}

}  // namespace svs
