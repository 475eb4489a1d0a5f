#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "asqp/data.hpp"
#include "fixtures.hpp"

using namespace asqp;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

const fs::path kWork = ASQP_WORK;
const std::string kMini = std::string(ASQP_TEST_DATA) + "/mini_corpus.jsonl";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

RunResult run(const std::string& args) {
  fs::create_directories(kWork);
  const fs::path err = kWork / "stderr.txt";
  const std::string cmd = std::string("'") + ASQP_CLI + "' " + args + " 2>'" + err.string() + "'";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

std::string work(const std::string& name) { return (kWork / name).string(); }

void write_file(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

}  // namespace

TEST_CASE("stats on the mini corpus matches the hand tally") {
  const RunResult r = run("stats --json " + kMini);
  REQUIRE(r.code == 0);
  const StatsReport report = stats_from_json(nlohmann::json::parse(r.out));
  CHECK(fixtures::stats_mismatches(report, fixtures::load_tally()).empty());

  const RunResult table = run("stats " + kMini);
  CHECK(table.code == 0);
  CHECK(table.out.find("EA&IO") != std::string::npos);
}

TEST_CASE("gradcheck passes for seed 0") {
  const RunResult r = run("gradcheck --seed 0");
  CHECK(r.code == 0);
  const auto pos = r.out.find("max relative error ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(r.out.substr(pos + 19)) < 1e-4);
  CHECK(run("gradcheck --seed 0 --schema variant2").code == 0);
}

TEST_CASE("eval of gold against itself is perfect") {
  const RunResult r = run("eval --json --pred " + kMini + " --gold " + kMini);
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("overall").at("f1") == 1.0);
  CHECK(j.at("errors").at("total") == 0);
  CHECK(run("eval --pred " + kMini + " --gold " + kMini).out.find("F1") != std::string::npos);
}

TEST_CASE("encode then decode recovers the gold quads") {
  for (const char* schema : {"standard", "variant1", "variant2"}) {
    CAPTURE(schema);
    REQUIRE(run("encode --schema " + std::string(schema) + " " + kMini + " -o " + work("enc.jsonl")).code == 0);
    REQUIRE(run("decode " + work("enc.jsonl") + " -o " + work("dec.jsonl")).code == 0);
    const Corpus gold = load_jsonl(kMini);
    LoadOptions o;
    o.vocab_seed = gold.vocab;
    const Corpus back = load_jsonl(work("dec.jsonl"), o);
    REQUIRE(back.size() == gold.size());
    for (int k = 0; k < gold.size(); ++k) {
      CHECK(back.samples[k].id == gold.samples[k].id);
      CHECK(fixtures::sorted(back.samples[k].gold) == fixtures::sorted(gold.samples[k].gold));
    }
  }
}

TEST_CASE("train, predict and eval are reproducible") {
  const std::string train_args = "train " + kMini + " --dev " + kMini +
                                 " --epochs 3 --dim 8 --hidden 10 --batch-size 4 --seed 7 --neg-rate 0.5";
  REQUIRE(run(train_args + " -o " + work("a.ckpt") + " --history " + work("a.hist")).code == 0);
  REQUIRE(run(train_args + " -o " + work("b.ckpt") + " --history " + work("b.hist")).code == 0);
  CHECK(slurp(work("a.ckpt")) == slurp(work("b.ckpt")));

  const RunResult pa = run("predict --checkpoint " + work("a.ckpt") + " " + kMini + " -o " + work("a.pred"));
  REQUIRE(pa.code == 0);
  REQUIRE(run("predict --checkpoint " + work("b.ckpt") + " " + kMini + " -o " + work("b.pred")).code == 0);
  CHECK(slurp(work("a.pred")) == slurp(work("b.pred")));
  CHECK(run("eval --pred " + work("a.pred") + " --gold " + kMini).code == 0);

  write_file(work("cfg.json"), R"({"epochs_max": 2, "hidden": 10, "seed": 7})");
  CHECK(run("train " + kMini + " --dim 8 --config " + work("cfg.json") + " -o " + work("c.ckpt")).code == 0);
  const RunResult timed = run("stats --timing " + kMini);
  CHECK(timed.err.find("[timing]") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(run("").code == 1);
  CHECK(run("stats --no-such-flag " + kMini).code == 1);
  CHECK(run("stats /nonexistent/corpus.jsonl").code == 1);

  write_file(work("broken.jsonl"), "{\"text\": \"fine\", \"quads\": []}\n{not json\n");
  const RunResult broken = run("stats " + work("broken.jsonl"));
  CHECK(broken.code == 1);
  CHECK(broken.err.find("broken.jsonl:2") != std::string::npos);

  write_file(work("bad_cfg.json"), R"({"epochz": 2})");
  CHECK(run("train " + kMini + " --config " + work("bad_cfg.json")).code == 1);
  CHECK(run("predict --checkpoint " + work("broken.jsonl") + " " + kMini).code == 1);
  CHECK(run("--help").code == 0);
}
