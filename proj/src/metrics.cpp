#include "scr/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "scr/textutil.hpp"

namespace scr {
namespace {

void check_lengths(size_t a, size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" +
                                std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

// csv field quoting for label names
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

}  // namespace

int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), int64_t(0));
}

int64_t ConfusionMatrix::trace() const {
  int64_t t = 0;
  for (int c = 0; c < classes; ++c) t += at(c, c);
  return t;
}

double accuracy(std::span<const int> predicted, std::span<const int> gold) {
  check_lengths(predicted.size(), gold.size(), "accuracy");
  if (predicted.empty()) throw std::invalid_argument("accuracy: empty input");
  int64_t hits = 0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == gold[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

ConfusionMatrix confusion_matrix(std::span<const int> predicted,
                                 std::span<const int> gold, int classes) {
  check_lengths(predicted.size(), gold.size(), "confusion_matrix");
  ConfusionMatrix cm(classes);
  for (size_t i = 0; i < predicted.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= classes || predicted[i] < 0 || predicted[i] >= classes) {
      throw std::invalid_argument("confusion_matrix: label out of range at row " + std::to_string(i));
    }
    ++cm.at(gold[i], predicted[i]);
  }
  return cm;
}

std::pair<std::vector<double>, double> macro_f1(std::span<const int> predicted,
                                                std::span<const int> gold, int classes) {
  const ConfusionMatrix cm = confusion_matrix(predicted, gold, classes);
  std::vector<double> f1(static_cast<size_t>(classes), 0.0);
  for (int c = 0; c < classes; ++c) {
    int64_t tp = cm.at(c, c), fp = 0, fn = 0;
    for (int o = 0; o < classes; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const double precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    f1[static_cast<size_t>(c)] =
        (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  const double macro = std::accumulate(f1.begin(), f1.end(), 0.0) / static_cast<double>(classes);
  return {f1, macro};
}

MetricsBundle compute_metrics(std::span<const int> predicted,
                              std::span<const int> gold, int classes) {
  MetricsBundle m;
  m.accuracy = accuracy(predicted, gold);
  auto [f1, macro] = macro_f1(predicted, gold, classes);
  m.per_class_f1 = std::move(f1);
  m.macro_f1 = macro;
  m.confusion = confusion_matrix(predicted, gold, classes);
  return m;
}

std::optional<double> pseudo_label_accuracy(std::span<const int> pseudo_labels,
                                            std::span<const uint8_t> gated,
                                            std::span<const int> hidden_gold) {
  check_lengths(pseudo_labels.size(), gated.size(), "pseudo_label_accuracy");
  check_lengths(pseudo_labels.size(), hidden_gold.size(), "pseudo_label_accuracy");
  int64_t n = 0, hits = 0;
  for (size_t i = 0; i < pseudo_labels.size(); ++i) {
    if (!gated[i]) continue;
    ++n;
    if (pseudo_labels[i] == hidden_gold[i]) ++hits;
  }
  if (n == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(n);
}

std::vector<std::pair<std::string, int64_t>> token_frequency_report(
    const std::vector<std::string>& texts, size_t top_n) {
  std::unordered_map<std::string, int64_t> counts;
  for (const auto& text : texts) {
    for (auto& tok : word_tokenize(text)) {
      if (is_stopword(tok)) continue;
      counts[std::move(tok)] += 1;
    }
  }
  std::vector<std::pair<std::string, int64_t>> out(counts.begin(), counts.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

void write_metrics_csv(const MetricsBundle& m, const LabelSpace& labels,
                       const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics csv: " + path);
  char buf[64];
  auto fmt = [&buf](double v) {
    snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  out << "metric,value\n";
  out << "accuracy," << fmt(m.accuracy) << "\n";
  out << "macro_f1," << fmt(m.macro_f1) << "\n";
  for (size_t c = 0; c < m.per_class_f1.size(); ++c) {
    out << "f1_" << csv_field(labels.names[c]) << "," << fmt(m.per_class_f1[c]) << "\n";
  }
}

void write_confusion_csv(const ConfusionMatrix& cm, const LabelSpace& labels,
                         const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write confusion csv: " + path);
  out << "gold\\pred";
  for (int c = 0; c < cm.classes; ++c) out << "," << csv_field(labels.names[static_cast<size_t>(c)]);
  out << "\n";
  for (int g = 0; g < cm.classes; ++g) {
    out << csv_field(labels.names[static_cast<size_t>(g)]);
    for (int p = 0; p < cm.classes; ++p) out << "," << cm.at(g, p);
    out << "\n";
  }
}

void write_token_freq_csv(const std::vector<std::pair<std::string, int64_t>>& freqs,
                          const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write token frequency csv: " + path);
  out << "token,count\n";
  for (const auto& [tok, n] : freqs) out << csv_field(tok) << "," << n << "\n";
}

}  // namespace scr
