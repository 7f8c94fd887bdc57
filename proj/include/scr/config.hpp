#pragma once

#include <optional>
#include <string>

#include "json.hpp"
#include "scr/augment.hpp"
#include "scr/corpus.hpp"
#include "scr/encoder.hpp"
#include "scr/trainer.hpp"

namespace scr {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One JSON document with flat sections mirroring the module configs; every
// default matches the published hyperparameters where one is stated
// (tau=0.98, batch sizes 8, lr=1e-5, max_epochs=1000, patience=10).
struct RunConfig {
  // corpus
  std::string input;
  CorpusFormat format = CorpusFormat::Csv;
  LabelSpace labels = LabelSpace::sentiment3();
  double test_frac = 0.2;
  double val_frac = 0.1;

  // regime
  int labels_per_class = 100;

  AugmenterConfig augmenter;
  std::optional<Strategy> strategy;  // also settable per command

  // encoder
  size_t max_vocab = 30000;
  uint64_t min_freq = 1;
  int embed_dim = 64;
  int hidden_dim = 128;

  TrainConfig train;

  std::string out_dir = "out";

  static RunConfig from_file(const std::string& path);
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

// File layout under the output directory.
struct OutPaths {
  std::string dir;
  std::string manifest_dir() const { return dir + "/manifests"; }
  std::string train_ids() const { return manifest_dir() + "/train_ids.jsonl"; }
  std::string val_ids() const { return manifest_dir() + "/val_ids.jsonl"; }
  std::string test_ids() const { return manifest_dir() + "/test_ids.jsonl"; }
  std::string regime() const { return manifest_dir() + "/regime.jsonl"; }
  std::string checkpoint() const { return dir + "/checkpoint.scr"; }
  std::string vocab_tsv() const { return dir + "/vocab.tsv"; }
  std::string epochs_csv() const { return dir + "/epochs.csv"; }
  std::string run_manifest() const { return dir + "/run_manifest.json"; }
  std::string metrics_csv() const { return dir + "/metrics.csv"; }
  std::string confusion_csv() const { return dir + "/confusion.csv"; }
  std::string trends_csv() const { return dir + "/trends.csv"; }
};

// Reproducibility snapshot: resolved config, seeds, code version and input
// digests. A later run with different inputs is refused unless forced.
nlohmann::json build_run_manifest(const RunConfig& cfg,
                                  const std::optional<std::string>& cache_path);
void write_run_manifest(const std::string& path, const nlohmann::json& manifest);

// Returns a human-readable mismatch description, or nullopt when compatible
// (or when no previous manifest exists).
std::optional<std::string> manifest_conflict(const std::string& path,
                                             const nlohmann::json& fresh);

}  // namespace scr
