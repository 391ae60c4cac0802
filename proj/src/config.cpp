#include "svs/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace svs::config {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

[[noreturn]] void bad(std::string_view key, const std::string& why) {
  throw InvalidInput(std::string(key) + ": " + why);
}

template <class T>
T parse_integer(std::string_view key, std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    bad(key, "expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) bad(key, "expected a number, got '" + s + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, "expected true or false, got '" + std::string(v) + "'");
}

std::vector<int> parse_int_list(std::string_view key, std::string_view v) {
  std::vector<int> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(parse_integer<int>(key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  if (out.empty()) bad(key, "expected a comma-separated list of integers");
  return out;
}

std::string real_text(double v) { return format_real(v); }

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field int_field(std::string key, T RunConfig::*member) {
  return {key,
          [key, member](RunConfig& c, std::string_view v) {
            c.*member = parse_integer<T>(key, v);
          },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field real_field(std::string key, double RunConfig::*member) {
  return {key,
          [key, member](RunConfig& c, std::string_view v) { c.*member = parse_real(key, v); },
          [member](const RunConfig& c) { return real_text(c.*member); }};
}

Field bool_field(std::string key, bool RunConfig::*member) {
  return {key,
          [key, member](RunConfig& c, std::string_view v) { c.*member = parse_bool(key, v); },
          [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field string_field(std::string key, std::string RunConfig::*member) {
  return {key, [member](RunConfig& c, std::string_view v) { c.*member = std::string(v); },
          [member](const RunConfig& c) { return c.*member; }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      int_field("G", &RunConfig::G),
      int_field("G_v", &RunConfig::G_v),
      real_field("acc_lo", &RunConfig::acc_lo),
      real_field("acc_hi", &RunConfig::acc_hi),
      real_field("synth_acc_lo", &RunConfig::synth_acc_lo),
      real_field("synth_acc_hi", &RunConfig::synth_acc_hi),
      real_field("eps_lo", &RunConfig::eps_lo),
      real_field("eps_hi", &RunConfig::eps_hi),
      real_field("beta", &RunConfig::beta),
      real_field("temperature", &RunConfig::temperature),
      real_field("top_p", &RunConfig::top_p),
      int_field("batch_problems", &RunConfig::batch_problems),
      int_field("max_steps", &RunConfig::max_steps),
      int_field("seed", &RunConfig::seed),
      int_field("max_tokens", &RunConfig::max_tokens),
      real_field("oversample", &RunConfig::oversample),
      bool_field("strict_underperforming", &RunConfig::strict_underperforming),
      {"loss_mode",
       [](RunConfig& c, std::string_view v) {
         if (v == "token_mean") {
           c.loss_mode = LossMode::TokenMean;
         } else if (v == "sequence_mean") {
           c.loss_mode = LossMode::SequenceMean;
         } else {
           bad("loss_mode", "expected token_mean or sequence_mean, got '" + std::string(v) +
                                "'");
         }
       },
       [](const RunConfig& c) {
         return std::string(c.loss_mode == LossMode::TokenMean ? "token_mean"
                                                               : "sequence_mean");
       }},
      bool_field("mask_truncated", &RunConfig::mask_truncated),
      int_field("parallelism", &RunConfig::parallelism),
      real_field("learning_rate", &RunConfig::learning_rate),
      int_field("toy_problems", &RunConfig::toy_problems),
      int_field("toy_heldout", &RunConfig::toy_heldout),
      int_field("eval_every", &RunConfig::eval_every),
      int_field("eval_n", &RunConfig::eval_n),
      {"eval_k",
       [](RunConfig& c, std::string_view v) { c.eval_k = parse_int_list("eval_k", v); },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.eval_k.size(); ++i) {
           if (i) s += ',';
           s += std::to_string(c.eval_k[i]);
         }
         return s;
       }},
      bool_field("snapshot_buffer", &RunConfig::snapshot_buffer),
      string_field("base_url", &RunConfig::base_url),
      string_field("model", &RunConfig::model),
      string_field("api_key_env", &RunConfig::api_key_env),
      real_field("timeout_s", &RunConfig::timeout_s),
      int_field("retries", &RunConfig::retries),
      int_field("retry_backoff_ms", &RunConfig::retry_backoff_ms),
  };
  return all;
}

const Field& field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw InvalidInput(std::string(key) + ": unknown config key");
}

}  // namespace

const std::vector<std::string>& keys() {
  static const std::vector<std::string> all = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return all;
}

void set(RunConfig& config, std::string_view key, std::string_view value) {
  field(key).set(config, trim(value));
}

std::string get(const RunConfig& config, std::string_view key) {
  return field(key).get(config);
}

void apply(RunConfig& config, std::istream& in, const std::string& source) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s(line);
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string_view::npos) {
      throw InvalidInput(where + "expected 'key = value', got '" + std::string(s) + "'");
    }
    try {
      set(config, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    } catch (const InvalidInput& e) {
      throw InvalidInput(where + e.what());
    }
  }
}

void apply_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file '" + path + "'");
  apply(config, in, path);
}

std::string to_text(const RunConfig& config) {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << " = " << f.get(config) << '\n';
  return os.str();
}

}  // namespace svs::config
