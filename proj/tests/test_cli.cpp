#include <cstdio>
#include <cstdlib>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "scr/augment.hpp"
#include "scr/digest.hpp"
#include "scr/encoder.hpp"
#include "scr/trainer.hpp"
#include "testutil.hpp"

// End-to-end exercises of the scr binary. The binary path comes from the
// SCR_CLI environment variable (set by ctest).

using namespace scr;
using scrtest::TempDir;

namespace {

std::string cli_path() {
  const char* env = std::getenv("SCR_CLI");
  return env != nullptr ? std::string(env) : std::string("../tools/scr");
}

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

CmdResult run_raw(const std::string& cmd) {
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult result;
  char buf[4096];
  while (fgets(buf, sizeof(buf), pipe) != nullptr) result.output += buf;
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

CmdResult run_cli(const std::string& args) { return run_raw(cli_path() + " " + args); }

size_t count_lines(const std::string& path) {
  const std::string content = scrtest::read_file(path);
  size_t n = 0;
  for (const char c : content) {
    if (c == '\n') ++n;
  }
  return n;
}

// a small, fully separable fixture the CLI can train quickly
struct CliFixture {
  TempDir tmp{"cli"};
  std::string config_path;
  std::string corpus_path;
  std::string lexicon_path;

  explicit CliFixture(uint64_t seed = 1111, int rows_per_class = 60) {
    scrtest::SynthSpec spec;
    spec.words_per_class = 8;
    spec.known_words_per_class = 8;
    spec.bridge_frac = 0.0;
    const auto flat = scrtest::make_flat_synth_corpus(rows_per_class, seed, spec);
    corpus_path = tmp.file("corpus.csv");
    lexicon_path = tmp.file("lexicon.tsv");
    scrtest::write_corpus_csv(flat.corpus, corpus_path);
    scrtest::write_lexicon_tsv(flat.lexicon, lexicon_path);
    config_path = tmp.file("config.json");
    scrtest::write_file(config_path, config_json().dump(2));
  }

  nlohmann::json config_json() const {
    return nlohmann::json{
        {"corpus",
         {{"input", corpus_path},
          {"format", "csv"},
          {"labels", {"class0", "class1", "class2"}},
          {"test_frac", 0.2},
          {"val_frac", 0.1}}},
        {"regime", {{"labels_per_class", 8}}},
        {"augmenter",
         {{"k", 3}, {"model_id", "mock"}, {"lexicon_file", lexicon_path}, {"weak_p", 0.1}}},
        {"encoder", {{"dim", 16}, {"hidden", 24}, {"max_vocab", 2000}}},
        {"train",
         {{"strategy", "ce"},
          {"tau", 0.9},
          {"lr", 0.02},
          {"batch_labeled", 8},
          {"batch_unlabeled", 8},
          {"max_epochs", 12},
          {"patience", 4},
          {"master_seed", 9}}},
        {"out_dir", tmp.file("out")}};
  }

  std::string out(const std::string& name) const { return tmp.file("out/" + name); }
};

}  // namespace

TEST_CASE("cli: prepare writes four manifests, deterministically") {
  CliFixture fx;
  const auto r = run_cli("prepare --config " + fx.config_path);
  CHECK(r.exit_code == 0);
  for (const char* name :
       {"manifests/train_ids.jsonl", "manifests/val_ids.jsonl", "manifests/test_ids.jsonl",
        "manifests/regime.jsonl"}) {
    CHECK(std::filesystem::exists(fx.out(name)));
  }
  const std::string before = scrtest::read_file(fx.out("manifests/regime.jsonl"));
  const auto r2 = run_cli("prepare --config " + fx.config_path);
  CHECK(r2.exit_code == 0);
  CHECK(scrtest::read_file(fx.out("manifests/regime.jsonl")) == before);
}

TEST_CASE("cli: prepare rejects an infeasible regime naming the class") {
  CliFixture fx;
  const auto r = run_cli("prepare --config " + fx.config_path + " --labels-per-class 100000");
  CHECK(r.exit_code != 0);
  CHECK(r.output.find("class0") != std::string::npos);
}

TEST_CASE("cli: augment offline mock is idempotent and resumable") {
  CliFixture fx;
  REQUIRE(run_cli("prepare --config " + fx.config_path).exit_code == 0);
  const std::string cache = fx.tmp.file("cache.jsonl");

  const auto first =
      run_cli("augment --config " + fx.config_path + " --cache " + cache + " --offline-mock");
  CHECK(first.exit_code == 0);
  const size_t unlabeled = count_lines(fx.out("manifests/regime.jsonl")) - 3 * 8;
  CHECK(count_lines(cache) == unlabeled);
  CHECK(first.output.find("cached") != std::string::npos);

  // warm cache: zero fetches, file untouched
  const std::string cache_digest = sha256_hex_file(cache);
  const auto second =
      run_cli("augment --config " + fx.config_path + " --cache " + cache + " --offline-mock");
  CHECK(second.exit_code == 0);
  CHECK(second.output.find("0 fetched") != std::string::npos);
  CHECK(sha256_hex_file(cache) == cache_digest);

  // kill-and-resume: drop the tail of the cache, rerun, only the missing
  // records are fetched
  const std::string content = scrtest::read_file(cache);
  size_t cut = content.rfind('\n', content.size() / 2);
  REQUIRE(cut != std::string::npos);
  scrtest::write_file(cache, content.substr(0, cut + 1));
  const size_t kept = count_lines(cache);
  const auto resumed =
      run_cli("augment --config " + fx.config_path + " --cache " + cache + " --offline-mock");
  CHECK(resumed.exit_code == 0);
  CHECK(count_lines(cache) == unlabeled);
  CHECK(resumed.output.find(std::to_string(unlabeled - kept) + " fetched") != std::string::npos);
  CHECK(resumed.output.find(std::to_string(kept) + " cached") != std::string::npos);
}

TEST_CASE("cli: augment without a credential fails unless mocked") {
  CliFixture fx;
  REQUIRE(run_cli("prepare --config " + fx.config_path).exit_code == 0);
  const auto r = run_raw("env -u SCR_API_KEY " + cli_path() + " augment --config " +
                         fx.config_path + " --cache " + fx.tmp.file("c.jsonl"));
  CHECK(r.exit_code != 0);
  CHECK(r.output.find("SCR_API_KEY") != std::string::npos);
}

TEST_CASE("cli: train, eval and report on the synthetic fixture") {
  CliFixture fx;
  const std::string cache = fx.tmp.file("cache.jsonl");
  REQUIRE(run_cli("prepare --config " + fx.config_path).exit_code == 0);
  REQUIRE(run_cli("augment --config " + fx.config_path + " --cache " + cache + " --offline-mock")
              .exit_code == 0);

  const auto train = run_cli("train --config " + fx.config_path + " --cache " + cache);
  CHECK(train.exit_code == 0);
  CHECK(std::filesystem::exists(fx.out("checkpoint.scr")));
  CHECK(std::filesystem::exists(fx.out("epochs.csv")));
  CHECK(std::filesystem::exists(fx.out("run_manifest.json")));

  // the fixture is separable: validation accuracy reaches 0.95+
  const auto logs = read_epoch_log_csv(fx.out("epochs.csv"));
  REQUIRE(!logs.empty());
  double best = 0;
  for (const auto& log : logs) best = std::max(best, log.val_acc);
  CHECK(best >= 0.95);

  const auto eval = run_cli("eval --config " + fx.config_path + " --checkpoint " +
                            fx.out("checkpoint.scr") + " --split test");
  CHECK(eval.exit_code == 0);
  REQUIRE(std::filesystem::exists(fx.out("metrics.csv")));
  REQUIRE(std::filesystem::exists(fx.out("confusion.csv")));

  // metrics cross-check against an in-process evaluate on the same split
  const auto ck = load_checkpoint(fx.out("checkpoint.scr"));
  const auto corpus =
      load_dataset(fx.corpus_path, CorpusFormat::Csv, LabelSpace{{"class0", "class1", "class2"}});
  const auto test_ids = read_id_manifest(fx.out("manifests/test_ids.jsonl"));
  const auto m = evaluate(ck.params, ck.vocab, subset_by_ids(corpus, test_ids));
  const std::string metrics_text = scrtest::read_file(fx.out("metrics.csv"));
  char expect_acc[64];
  snprintf(expect_acc, sizeof(expect_acc), "accuracy,%.9g", m.accuracy);
  CHECK(metrics_text.find(expect_acc) != std::string::npos);
  char expect_f1[64];
  snprintf(expect_f1, sizeof(expect_f1), "macro_f1,%.9g", m.macro_f1);
  CHECK(metrics_text.find(expect_f1) != std::string::npos);

  // report: trends mirror the epoch log rows
  const auto report = run_cli("report --log-dir " + fx.tmp.file("out") + " --cache " + cache);
  CHECK(report.exit_code == 0);
  REQUIRE(std::filesystem::exists(fx.out("trends.csv")));
  REQUIRE(std::filesystem::exists(fx.out("token_freq_augmented.csv")));
  const auto trends = scrtest::read_file(fx.out("trends.csv"));
  CHECK(count_lines(fx.out("trends.csv")) == logs.size() + 1);
  char row0[128];
  snprintf(row0, sizeof(row0), "0,%.9g,%.9g", logs[0].train_acc, logs[0].val_acc);
  CHECK(trends.find(row0) != std::string::npos);

  // guarded rerun: same inputs pass, a modified corpus is refused, --force overrides
  CHECK(run_cli("train --config " + fx.config_path + " --cache " + cache).exit_code == 0);
  std::string corpus_text = scrtest::read_file(fx.corpus_path);
  corpus_text += "c0w00 c0w01 c0w02,class0\n";
  scrtest::write_file(fx.corpus_path, corpus_text);
  const auto refused = run_cli("train --config " + fx.config_path + " --cache " + cache);
  CHECK(refused.exit_code != 0);
  CHECK(refused.output.find("--force") != std::string::npos);
  // prepare and augment again so manifests and cache cover the grown corpus,
  // then force through
  REQUIRE(run_cli("prepare --config " + fx.config_path).exit_code == 0);
  REQUIRE(run_cli("augment --config " + fx.config_path + " --cache " + cache + " --offline-mock")
              .exit_code == 0);
  CHECK(run_cli("train --config " + fx.config_path + " --cache " + cache + " --force").exit_code ==
        0);
}

TEST_CASE("cli: eval without a checkpoint and report without logs fail") {
  CliFixture fx;
  const auto r =
      run_cli("eval --config " + fx.config_path + " --checkpoint " + fx.tmp.file("missing.scr"));
  CHECK(r.exit_code != 0);
  const auto r2 = run_cli("report --log-dir " + fx.tmp.file("nowhere"));
  CHECK(r2.exit_code != 0);
  CHECK(r2.output.find("epochs.csv") != std::string::npos);
}
