#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "svs/config.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;  // stdout and stderr interleaved
};

Result run(const std::string& args) {
  const std::string cmd = std::string(SVS_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("svs_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("help lists every config key") {
  const auto r = run("train --help");
  CHECK(r.code == 0);
  for (const auto& key : svs::config::keys()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    CHECK_MESSAGE(contains(r.out, flag), flag);
  }
  CHECK(contains(r.out, "--steps"));
  CHECK(contains(r.out, "default 0.2)"));
}

TEST_CASE("zero steps writes header-only metrics") {
  const auto dir = scratch("zero");
  const auto r = run("train --mode both --steps 0 --out " + dir.string());
  CHECK_MESSAGE(r.code == 0, r.out);
  CHECK(slurp(dir / "svs.metrics.csv").find('\n') == slurp(dir / "svs.metrics.csv").size() - 1);
  CHECK(fs::exists(dir / "rlvr_baseline.metrics.csv"));
  CHECK(fs::exists(dir / "summary.json"));
}

TEST_CASE("usage errors exit 1 and say what is wrong") {
  auto r = run("train --backend scripted --dataset /nonexistent/data.jsonl --fixture x");
  CHECK(r.code == 1);
  CHECK(contains(r.out, "/nonexistent/data.jsonl"));

  const auto dir = scratch("badcfg");
  write(dir / "run.cfg", "G = 8\nacc_lo = 0.9\n");
  r = run("train --steps 1 --config " + (dir / "run.cfg").string());
  CHECK(r.code == 1);
  CHECK(contains(r.out, "acc_lo"));

  write(dir / "typo.cfg", "G = 8\nGV = 3\n");
  r = run("train --config " + (dir / "typo.cfg").string());
  CHECK(r.code == 1);
  CHECK(contains(r.out, "typo.cfg:2"));

  r = run("train --g 0");
  CHECK(r.code == 1);

  r = run("train --backend http");
  CHECK(r.code == 1);
  CHECK(contains(r.out, "--dataset"));

  r = run("frobnicate");
  CHECK(r.code == 1);
}

TEST_CASE("verify") {
  const auto dir = scratch("verify");
  write(dir / "ok.txt", "so the answer is \\boxed{\\frac{1}{2}}");
  auto r = run("verify --gold 0.5 --text " + (dir / "ok.txt").string());
  CHECK(r.code == 0);
  CHECK(contains(r.out, "extracted: \\frac{1}{2}"));
  CHECK(contains(r.out, "canonical: 1/2"));
  CHECK(contains(r.out, "reward: 1"));

  r = run("verify --gold 3 --text " + (dir / "ok.txt").string());
  CHECK(r.code == 1);
  CHECK(contains(r.out, "reward: 0"));

  write(dir / "none.txt", "no box");
  r = run("verify --gold 3 --text " + (dir / "none.txt").string());
  CHECK(r.code == 1);
  CHECK(contains(r.out, "extracted: (none)"));
}

TEST_CASE("eval from records") {
  const auto dir = scratch("eval");
  write(dir / "recs.jsonl",
        "{\"problem_id\":\"a\",\"n\":8,\"c\":2}\n{\"problem_id\":\"b\",\"n\":8,\"c\":0}\n");
  auto r = run("eval --records " + (dir / "recs.jsonl").string() + " --k 1,8");
  CHECK_MESSAGE(r.code == 0, r.out);
  CHECK(r.out == "problems,n,pass@1,pass@8,avg@n\n2,8,0.125,0.5,0.125\n");

  r = run("eval --records " + (dir / "recs.jsonl").string() + " --k 16");
  CHECK(r.code == 1);
  CHECK(contains(r.out, "'a'"));

  r = run("eval --n 4 --k 8");
  CHECK(r.code == 1);

  r = run("eval --n 8 --k 1,8 --toy-heldout 5 --out " + dir.string());
  CHECK_MESSAGE(r.code == 0, r.out);
  CHECK(contains(r.out, "problems,n,pass@1,pass@8,avg@n\n5,8,"));
  CHECK(fs::exists(dir / "eval_records.jsonl"));
}

TEST_CASE("synth-dry-run") {
  const auto dir = scratch("synth");
  write(dir / "empty.txt", "  \n");
  auto r = run("synth-dry-run --solution " + (dir / "empty.txt").string());
  CHECK(r.code == 1);

  write(dir / "sol.txt", "a * b + c => 3 * 4 + 5 = 17. The answer is \\boxed{17}.");
  r = run("synth-dry-run --no-solve --solution " + (dir / "sol.txt").string());
  CHECK_MESSAGE(r.code == 0, r.out);
  CHECK(contains(r.out, "<response>\na * b + c"));
  CHECK(contains(r.out, "[7] "));

  r = run("synth-dry-run --solution " + (dir / "sol.txt").string());
  CHECK_MESSAGE(r.code == 0, r.out);
  CHECK(contains(r.out, "reward"));
}

TEST_CASE("flags and config files are equivalent, and runs are reproducible") {
  const auto dir = scratch("equiv");
  write(dir / "run.cfg", "max_steps = 4\nbatch_problems = 4\nseed = 3\ntoy_problems = 10\n");
  auto a = run("train --mode svs --config " + (dir / "run.cfg").string() + " --out " +
               (dir / "a").string());
  auto b = run("train --mode svs --steps 4 --batch-problems 4 --seed 3 --toy-problems 10 --out " +
               (dir / "b").string());
  auto c = run("train --mode svs --steps 4 --batch-problems 4 --seed 3 --toy-problems 10 "
               "--parallelism 4 --out " + (dir / "c").string());
  REQUIRE_MESSAGE(a.code == 0, a.out);
  REQUIRE_MESSAGE(b.code == 0, b.out);
  REQUIRE_MESSAGE(c.code == 0, c.out);
  const auto csv = slurp(dir / "a" / "svs.metrics.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(csv == slurp(dir / "b" / "svs.metrics.csv"));
  CHECK(csv == slurp(dir / "c" / "svs.metrics.csv"));
  CHECK(slurp(dir / "a" / "summary.json") == slurp(dir / "b" / "summary.json"));

  // Flags override the file.
  auto d = run("train --mode svs --config " + (dir / "run.cfg").string() + " --steps 2 --out " +
               (dir / "d").string());
  REQUIRE(d.code == 0);
  const auto csv_d = slurp(dir / "d" / "svs.metrics.csv");
  CHECK(std::count(csv_d.begin(), csv_d.end(), '\n') == 3);
}

TEST_CASE("scripted replay of a recorded transcript, and exhaustion") {
  const auto dir = scratch("scripted");
  write(dir / "data.jsonl", "{\"id\":\"q1\",\"problem\":\"What is 1+1?\",\"answer\":\"2\"}\n");
  const std::string prompt =
      "What is 1+1?\\n\\nLet's think step by step and output the final answer within "
      "\\\\boxed{}.";
  std::string completions;
  for (int i = 0; i < 4; ++i) {
    if (i) completions += ",";
    completions += std::string("{\"text\":\"\\\\boxed{") + (i == 0 ? "2" : "3") +
                   "}\",\"token_logprobs\":[-0.5],\"finish_reason\":\"stop\"}";
  }
  write(dir / "t.json", "{\"entries\":[{\"prompt\":\"" + prompt + "\",\"completions\":[" +
                            completions + "]}]}");
  const std::string base = "train --mode rlvr-baseline --backend scripted --G 4 --oversample 1 "
                           "--batch-problems 1 --dataset " +
                           (dir / "data.jsonl").string() + " --fixture " +
                           (dir / "t.json").string();
  auto r = run(base + " --steps 1 --out " + (dir / "one").string());
  CHECK_MESSAGE(r.code == 0, r.out);
  const auto batch = slurp(dir / "one" / "batches" / "rlvr_baseline-step-0001.jsonl");
  CHECK(std::count(batch.begin(), batch.end(), '\n') == 4);

  r = run(base + " --steps 2 --out " + (dir / "two").string());
  CHECK(r.code == 2);
  const auto summary = slurp(dir / "two" / "summary.json");
  CHECK(contains(summary, "\"complete\": false"));
}
