#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "svs/verifier.hpp"

using namespace svs::verifier;

namespace {

// Scans left to right keeping every balanced \boxed{...} body; the last wins.
std::optional<std::string> brute_force_last_box(const std::string& s) {
  std::optional<std::string> last;
  const std::string key = "\\boxed";
  for (std::size_t pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + 1)) {
    std::size_t open = pos + key.size();
    while (open < s.size() && s[open] == ' ') ++open;
    if (open >= s.size() || s[open] != '{') continue;
    int depth = 0;
    for (std::size_t i = open; i < s.size(); ++i) {
      if (s[i] == '{') ++depth;
      if (s[i] == '}' && --depth == 0) {
        last = s.substr(open + 1, i - open - 1);
        break;
      }
    }
  }
  return last;
}

bool balanced(const std::string& s) {
  int depth = 0;
  for (char c : s) {
    if (c == '{') ++depth;
    if (c == '}' && --depth < 0) return false;
  }
  return depth == 0;
}

}  // namespace

TEST_CASE("extract_boxed") {
  CHECK(extract_boxed("so \\boxed{42}.") == "42");
  CHECK(extract_boxed("\\boxed{\\frac{1}{2}} then \\boxed{{a}+{b}}") == "{a}+{b}");
  CHECK_FALSE(extract_boxed("\\boxed{unclosed"));
  CHECK_FALSE(extract_boxed("no box"));
  CHECK(extract_boxed("\\boxed{1} and \\boxed{2") == "1");
  CHECK(extract_boxed("\\boxed {7}") == "7");
}

TEST_CASE("extract_boxed agrees with a brute-force matcher on random brace strings") {
  std::mt19937_64 rng(99);
  const std::vector<std::string> atoms = {"{", "}", "\\boxed", "\\boxed{", "a", "1", " ", "\\frac"};
  for (int trial = 0; trial < 5000; ++trial) {
    std::string s;
    const int len = 1 + static_cast<int>(rng() % 14);
    for (int i = 0; i < len; ++i) s += atoms[rng() % atoms.size()];
    const auto got = extract_boxed(s);
    const auto want = brute_force_last_box(s);
    REQUIRE_MESSAGE(got == want, s);
    if (got) CHECK(balanced(*got));
  }
}

TEST_CASE("normalize") {
  auto a = normalize(" 1,000 ");
  REQUIRE(a.numeric);
  CHECK(*a.numeric == 1000);

  auto b = normalize("\\frac{3}{6}");
  REQUIRE(b.numeric);
  CHECK(*b.numeric == Rational(1, 2));
  CHECK(b.normalized == "1/2");

  auto c = normalize("x+1");
  CHECK_FALSE(c.numeric);
  CHECK(c.normalized == "x+1");

  CHECK(normalize("0.125").normalized == "1/8");
  CHECK(normalize("1/1000").normalized == "0.001");
  CHECK(normalize("-2.50").normalized == "-5/2");
  CHECK(*normalize("08").numeric == 8);
  CHECK(*normalize("0.09").numeric == Rational(9, 100));
  CHECK(*normalize("007.5").numeric == Rational(15, 2));
  CHECK(normalize("$\\left( 3 \\right)$").normalized == "(3)");
  CHECK(normalize("Yes").normalized == "Yes");
}

TEST_CASE("render_rational") {
  CHECK(render_rational(Rational(7)) == "7");
  CHECK(render_rational(Rational(-7)) == "-7");
  CHECK(render_rational(Rational(1, 3)) == "1/3");
  // The shorter spelling wins; ties go to the fraction.
  CHECK(render_rational(Rational(1, 2)) == "1/2");
  CHECK(render_rational(Rational(3, 40)) == "3/40");
  CHECK(render_rational(Rational(-1, 20)) == "-1/20");
  CHECK(render_rational(Rational(1, 1000)) == "0.001");
  CHECK(render_rational(Rational(-1, 10000)) == "-0.0001");
}

TEST_CASE("answers_equal") {
  CHECK(answers_equal("0.5", "\\frac{1}{2}"));
  CHECK(answers_equal("42", "42."));
  CHECK_FALSE(answers_equal("41", "42"));
  CHECK_FALSE(answers_equal("2^3", "8"));

  const std::vector<std::string> pool = {"1/2", "0.5", "\\frac{2}{4}", "\\dfrac12", "3",
                                         "3.0", "x",   "\\sqrt{2}",    "-3",       "1,000"};
  for (const auto& a : pool) {
    CHECK(answers_equal(a, a));
    for (const auto& b : pool) {
      CHECK(answers_equal(a, b) == answers_equal(b, a));
      for (const auto& c : pool) {
        if (answers_equal(a, b) && answers_equal(b, c)) CHECK(answers_equal(a, c));
      }
    }
  }
}

TEST_CASE("correctness_reward") {
  CHECK(correctness_reward("... \\boxed{7}", "7") == 1.0);
  CHECK(correctness_reward("no box here", "7") == 0.0);
  CHECK(correctness_reward("... \\boxed{\\frac{14}{2}}", "7") == 1.0);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    for (int j = 0; j < 12; ++j) s += static_cast<char>(32 + rng() % 95);
    const double r = correctness_reward("\\boxed{" + s, s);
    CHECK((r == 0.0 || r == 1.0));
  }
}

TEST_CASE("labeled corpus") {
  std::ifstream in(std::string(SVS_TEST_DATA) + "/verifier_corpus.jsonl");
  REQUIRE(in);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const double got = correctness_reward(j["text"].get<std::string>(), j["gold"].get<std::string>());
    CHECK_MESSAGE(got == j["expect"].get<double>(), line);
    ++n;
  }
  CHECK(n >= 200);
}
