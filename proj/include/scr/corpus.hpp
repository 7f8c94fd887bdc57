#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scr {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ordered category names; category index is position in the list.
struct LabelSpace {
  std::vector<std::string> names;

  int size() const { return static_cast<int>(names.size()); }
  std::optional<int> index_of(std::string_view name) const;
  void validate() const;  // >= 2 unique non-empty names

  static LabelSpace sentiment3() { return LabelSpace{{"positive", "neutral", "negative"}}; }
};

// One text item. `label` is the visible gold label; `hidden_label` is kept on
// unlabeled pools for the pseudo-label accuracy diagnostic only and must never
// feed the training objective.
struct Example {
  int64_t id = 0;
  std::string text;
  std::optional<int> label;
  std::optional<int> hidden_label;
};

// The one sanctioned accessor for hidden labels (metrics diagnostics).
inline std::optional<int> diagnostic_gold(const Example& ex) { return ex.hidden_label; }

struct Dataset {
  std::vector<Example> examples;
  LabelSpace label_space;

  size_t size() const { return examples.size(); }
};

enum class CorpusFormat { Csv, Tsv, Jsonl };
CorpusFormat parse_corpus_format(std::string_view name);
std::string_view corpus_format_name(CorpusFormat f);

// Reads a corpus with columns/keys `text` and `label`. Row order is
// preserved; ids are assigned 0..m-1. Malformed rows, unknown labels and
// empty texts are reported with their row number.
Dataset load_dataset(const std::string& path, CorpusFormat format,
                     const LabelSpace& labels);

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Stratified split: per class, floor(test_frac * class_size) rows go to test,
// then floor(val_frac * remaining) to validation; the remainder stays in
// train. Deterministic under (d, fracs, seed).
Splits split_train_val_test(const Dataset& d, double test_frac, double val_frac,
                            uint64_t seed);

struct RegimeSpec {
  int labels_per_class = 100;
  uint64_t seed = 0;
};

struct Regime {
  Dataset labeled;    // exactly labels_per_class per class
  Dataset unlabeled;  // the rest; labels moved to hidden_label
};

Regime make_regime(const Dataset& train, const RegimeSpec& spec);

// One training batch: indices into the labeled / unlabeled datasets.
struct Batch {
  std::vector<int> labeled;
  std::vector<int> unlabeled;
};

// One epoch: one shuffled pass over the unlabeled pool in chunks of
// batch_unlabeled (final chunk may be short), each paired with
// batch_labeled labeled rows drawn from a reshuffled-on-wrap cycle.
// When the unlabeled pool is empty, falls back to one shuffled pass over the
// labeled set.
std::vector<Batch> make_batches(size_t n_labeled, size_t n_unlabeled,
                                int batch_labeled, int batch_unlabeled,
                                uint64_t epoch_seed);

// id manifests, one JSON object {"id": n} per line
void write_id_manifest(const std::string& path, const std::vector<int64_t>& ids);
std::vector<int64_t> read_id_manifest(const std::string& path);

struct RegimeManifest {
  std::vector<int64_t> labeled_ids;
  std::vector<int64_t> unlabeled_ids;
};
void write_regime_manifest(const std::string& path, const RegimeManifest& m);
RegimeManifest read_regime_manifest(const std::string& path);

std::vector<int64_t> dataset_ids(const Dataset& d);

// Rebuilds a split from a manifest; order follows the manifest.
Dataset subset_by_ids(const Dataset& corpus, const std::vector<int64_t>& ids);

}  // namespace scr
