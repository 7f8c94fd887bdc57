#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scr/corpus.hpp"

namespace scr {

struct ConfusionMatrix {
  int classes = 0;
  std::vector<int64_t> counts;  // row = gold, column = predicted

  explicit ConfusionMatrix(int c = 0) : classes(c), counts(static_cast<size_t>(c) * c, 0) {}
  int64_t& at(int gold, int pred) { return counts[static_cast<size_t>(gold) * classes + pred]; }
  int64_t at(int gold, int pred) const { return counts[static_cast<size_t>(gold) * classes + pred]; }
  int64_t total() const;
  int64_t trace() const;
};

struct MetricsBundle {
  double accuracy = 0.0;
  std::vector<double> per_class_f1;
  double macro_f1 = 0.0;
  ConfusionMatrix confusion;
};

double accuracy(std::span<const int> predicted, std::span<const int> gold);

// Per-class F1 with the 0/0 -> 0 convention, plus their unweighted mean.
std::pair<std::vector<double>, double> macro_f1(std::span<const int> predicted,
                                                std::span<const int> gold, int classes);

ConfusionMatrix confusion_matrix(std::span<const int> predicted,
                                 std::span<const int> gold, int classes);

MetricsBundle compute_metrics(std::span<const int> predicted,
                              std::span<const int> gold, int classes);

// Accuracy restricted to rows whose consistency gate fired; empty when no row
// fired (never 0/0).
std::optional<double> pseudo_label_accuracy(std::span<const int> pseudo_labels,
                                            std::span<const uint8_t> gated,
                                            std::span<const int> hidden_gold);

// Stopword-filtered token counts, sorted by count desc then token asc.
std::vector<std::pair<std::string, int64_t>> token_frequency_report(
    const std::vector<std::string>& texts, size_t top_n);

void write_metrics_csv(const MetricsBundle& m, const LabelSpace& labels,
                       const std::string& path);
void write_confusion_csv(const ConfusionMatrix& cm, const LabelSpace& labels,
                         const std::string& path);
void write_token_freq_csv(const std::vector<std::pair<std::string, int64_t>>& freqs,
                          const std::string& path);

}  // namespace scr
