#include "scr/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "scr/rng.hpp"
#include "scr/textutil.hpp"

namespace scr {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw CorpusError(msg); }

std::string row_msg(size_t row, const std::string& what) {
  return "row " + std::to_string(row) + ": " + what;
}

// RFC 4180: quoted fields, "" escapes, newlines allowed inside quotes.
std::vector<std::vector<std::string>> parse_csv(const std::string& content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  size_t i = 0;
  const size_t n = content.size();

  auto end_field = [&] {
    row.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };

  while (i < n) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < n && content[i + 1] == '"') {
          field.push_back('"');
          i += 2;
        } else {
          quoted = false;
          ++i;
        }
      } else {
        field.push_back(c);
        ++i;
      }
    } else if (c == '"' && !field_started && field.empty()) {
      quoted = true;
      field_started = true;
      ++i;
    } else if (c == ',') {
      end_field();
      ++i;
    } else if (c == '\r' && i + 1 < n && content[i + 1] == '\n') {
      end_row();
      i += 2;
    } else if (c == '\n' || c == '\r') {
      end_row();
      ++i;
    } else {
      field.push_back(c);
      field_started = true;
      ++i;
    }
  }
  if (quoted) fail("unterminated quoted field at end of file");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

std::vector<std::vector<std::string>> parse_tsv(const std::string& content) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(content);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> row;
    size_t start = 0;
    for (;;) {
      const size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        row.push_back(line.substr(start));
        break;
      }
      row.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

int resolve_label(const std::string& raw, const LabelSpace& labels, size_t row) {
  const auto idx = labels.index_of(trim(raw));
  if (!idx) {
    fail(row_msg(row, "label \"" + raw + "\" is not in the label space"));
  }
  return *idx;
}

Example make_example(int64_t id, const std::string& text, int label, size_t row) {
  if (trim(text).empty()) fail(row_msg(row, "empty text field"));
  Example ex;
  ex.id = id;
  ex.text = text;
  ex.label = label;
  return ex;
}

Dataset load_tabular(const std::string& path, bool tsv, const LabelSpace& labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open corpus file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();

  const auto rows = tsv ? parse_tsv(content) : parse_csv(content);
  if (rows.empty()) fail("corpus file has no header row: " + path);

  const auto& header = rows.front();
  int text_col = -1, label_col = -1;
  for (size_t c = 0; c < header.size(); ++c) {
    const std::string name = to_lower_ascii(trim(header[c]));
    if (name == "text") text_col = static_cast<int>(c);
    if (name == "label") label_col = static_cast<int>(c);
  }
  if (text_col < 0) fail("missing required column `text` in " + path);
  if (label_col < 0) fail("missing required column `label` in " + path);

  Dataset d;
  d.label_space = labels;
  d.examples.reserve(rows.size() - 1);
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const size_t need = static_cast<size_t>(std::max(text_col, label_col)) + 1;
    if (row.size() < need) {
      fail(row_msg(r, "malformed row: expected at least " + std::to_string(need) +
                          " fields, got " + std::to_string(row.size())));
    }
    const int label = resolve_label(row[label_col], labels, r);
    d.examples.push_back(
        make_example(static_cast<int64_t>(r - 1), row[text_col], label, r));
  }
  return d;
}

Dataset load_jsonl(const std::string& path, const LabelSpace& labels) {
  std::ifstream in(path);
  if (!in) fail("cannot open corpus file: " + path);
  Dataset d;
  d.label_space = labels;
  std::string line;
  size_t lineno = 0;
  int64_t next_id = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(row_msg(lineno, std::string("invalid JSON: ") + e.what()));
    }
    if (!j.is_object() || !j.contains("text") || !j.contains("label")) {
      fail(row_msg(lineno, "object must have keys `text` and `label`"));
    }
    if (!j["text"].is_string() || !j["label"].is_string()) {
      fail(row_msg(lineno, "`text` and `label` must be strings"));
    }
    const int label = resolve_label(j["label"].get<std::string>(), labels, lineno);
    d.examples.push_back(make_example(next_id++, j["text"].get<std::string>(), label, lineno));
  }
  return d;
}

// label -> positions, classes in index order
std::vector<std::vector<size_t>> by_class(const Dataset& d) {
  std::vector<std::vector<size_t>> groups(d.label_space.size());
  for (size_t i = 0; i < d.examples.size(); ++i) {
    const auto& ex = d.examples[i];
    if (!ex.label) fail("example id " + std::to_string(ex.id) + " has no visible label");
    groups[static_cast<size_t>(*ex.label)].push_back(i);
  }
  return groups;
}

}  // namespace

std::optional<int> LabelSpace::index_of(std::string_view name) const {
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

void LabelSpace::validate() const {
  if (names.size() < 2) fail("label space needs at least 2 categories");
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) fail("label space contains an empty category name");
    if (!seen.insert(n).second) fail("duplicate category name: " + n);
  }
}

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "csv") return CorpusFormat::Csv;
  if (name == "tsv") return CorpusFormat::Tsv;
  if (name == "jsonl") return CorpusFormat::Jsonl;
  fail("unknown corpus format: " + std::string(name) + " (expected csv, tsv or jsonl)");
}

std::string_view corpus_format_name(CorpusFormat f) {
  switch (f) {
    case CorpusFormat::Csv: return "csv";
    case CorpusFormat::Tsv: return "tsv";
    case CorpusFormat::Jsonl: return "jsonl";
  }
  return "?";
}

Dataset load_dataset(const std::string& path, CorpusFormat format,
                     const LabelSpace& labels) {
  labels.validate();
  switch (format) {
    case CorpusFormat::Csv: return load_tabular(path, false, labels);
    case CorpusFormat::Tsv: return load_tabular(path, true, labels);
    case CorpusFormat::Jsonl: return load_jsonl(path, labels);
  }
  fail("unreachable corpus format");
}

Splits split_train_val_test(const Dataset& d, double test_frac, double val_frac,
                            uint64_t seed) {
  if (!(test_frac > 0.0 && test_frac < 1.0)) fail("test_frac must be in (0, 1)");
  if (!(val_frac >= 0.0 && val_frac < 1.0)) fail("val_frac must be in [0, 1)");

  auto groups = by_class(d);
  for (size_t c = 0; c < groups.size(); ++c) {
    if (groups[c].empty()) {
      fail("class \"" + d.label_space.names[c] + "\" has no examples; stratified split infeasible");
    }
    if (val_frac > 0.0 && groups[c].size() < 2) {
      fail("class \"" + d.label_space.names[c] +
           "\" has fewer than 2 examples but both val and test splits were requested");
    }
  }

  Splits out;
  out.train.label_space = out.val.label_space = out.test.label_space = d.label_space;

  for (size_t c = 0; c < groups.size(); ++c) {
    auto& idx = groups[c];
    Rng rng(mix_seed(seed, static_cast<uint64_t>(c)));
    rng.shuffle(idx);

    const size_t n = idx.size();
    // floor with a nudge so 0.3*10 and friends do not land on 2.999...
    const size_t n_test = static_cast<size_t>(test_frac * static_cast<double>(n) + 1e-9);
    const size_t remaining = n - n_test;
    const size_t n_val = static_cast<size_t>(val_frac * static_cast<double>(remaining) + 1e-9);

    for (size_t i = 0; i < n; ++i) {
      const Example& ex = d.examples[idx[i]];
      if (i < n_test) {
        out.test.examples.push_back(ex);
      } else if (i < n_test + n_val) {
        out.val.examples.push_back(ex);
      } else {
        out.train.examples.push_back(ex);
      }
    }
  }

  // canonical order inside each split: by id
  auto by_id = [](const Example& a, const Example& b) { return a.id < b.id; };
  std::sort(out.train.examples.begin(), out.train.examples.end(), by_id);
  std::sort(out.val.examples.begin(), out.val.examples.end(), by_id);
  std::sort(out.test.examples.begin(), out.test.examples.end(), by_id);
  return out;
}

Regime make_regime(const Dataset& train, const RegimeSpec& spec) {
  if (spec.labels_per_class < 1) fail("labels_per_class must be >= 1");
  auto groups = by_class(train);
  for (size_t c = 0; c < groups.size(); ++c) {
    if (groups[c].size() < static_cast<size_t>(spec.labels_per_class)) {
      fail("class \"" + train.label_space.names[c] + "\" has " +
           std::to_string(groups[c].size()) + " examples, fewer than labels_per_class=" +
           std::to_string(spec.labels_per_class));
    }
  }

  std::unordered_set<size_t> labeled_pos;
  for (size_t c = 0; c < groups.size(); ++c) {
    auto& idx = groups[c];
    Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(c)));
    rng.shuffle(idx);
    for (int i = 0; i < spec.labels_per_class; ++i) labeled_pos.insert(idx[static_cast<size_t>(i)]);
  }

  Regime out;
  out.labeled.label_space = out.unlabeled.label_space = train.label_space;
  for (size_t i = 0; i < train.examples.size(); ++i) {
    const Example& ex = train.examples[i];
    if (labeled_pos.count(i)) {
      out.labeled.examples.push_back(ex);
    } else {
      Example u = ex;
      u.hidden_label = u.label;  // diagnostics only
      u.label.reset();
      out.unlabeled.examples.push_back(std::move(u));
    }
  }
  return out;
}

std::vector<Batch> make_batches(size_t n_labeled, size_t n_unlabeled,
                                int batch_labeled, int batch_unlabeled,
                                uint64_t epoch_seed) {
  if (batch_labeled < 1 || batch_unlabeled < 1) fail("batch sizes must be >= 1");
  if (n_labeled == 0) fail("labeled pool is empty");

  std::vector<int> labeled_order(n_labeled);
  for (size_t i = 0; i < n_labeled; ++i) labeled_order[i] = static_cast<int>(i);
  Rng labeled_rng(mix_seed(epoch_seed, 1));
  labeled_rng.shuffle(labeled_order);
  size_t cursor = 0;
  auto draw_labeled = [&]() {
    if (cursor == labeled_order.size()) {
      labeled_rng.shuffle(labeled_order);
      cursor = 0;
    }
    return labeled_order[cursor++];
  };

  std::vector<Batch> batches;
  if (n_unlabeled == 0) {
    // degenerate supervised-only pool: one pass over the labeled set
    std::vector<int> order(n_labeled);
    for (size_t i = 0; i < n_labeled; ++i) order[i] = static_cast<int>(i);
    Rng rng(mix_seed(epoch_seed, 0));
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_labeled)) {
      Batch b;
      const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_labeled));
      b.labeled.assign(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
      batches.push_back(std::move(b));
    }
    return batches;
  }

  std::vector<int> unlabeled_order(n_unlabeled);
  for (size_t i = 0; i < n_unlabeled; ++i) unlabeled_order[i] = static_cast<int>(i);
  Rng unlabeled_rng(mix_seed(epoch_seed, 0));
  unlabeled_rng.shuffle(unlabeled_order);

  for (size_t start = 0; start < n_unlabeled; start += static_cast<size_t>(batch_unlabeled)) {
    Batch b;
    const size_t end = std::min(n_unlabeled, start + static_cast<size_t>(batch_unlabeled));
    b.unlabeled.assign(unlabeled_order.begin() + static_cast<long>(start),
                       unlabeled_order.begin() + static_cast<long>(end));
    b.labeled.reserve(static_cast<size_t>(batch_labeled));
    for (int i = 0; i < batch_labeled; ++i) b.labeled.push_back(draw_labeled());
    batches.push_back(std::move(b));
  }
  return batches;
}

void write_id_manifest(const std::string& path, const std::vector<int64_t>& ids) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("cannot write manifest: " + path);
  for (const int64_t id : ids) {
    out << "{\"id\":" << id << "}\n";
  }
  if (!out) fail("write error: " + path);
}

std::vector<int64_t> read_id_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open manifest: " + path);
  std::vector<int64_t> ids;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      ids.push_back(j.at("id").get<int64_t>());
    } catch (const json::exception& e) {
      fail("manifest " + path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ids;
}

void write_regime_manifest(const std::string& path, const RegimeManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("cannot write manifest: " + path);
  for (const int64_t id : m.labeled_ids) out << "{\"id\":" << id << ",\"pool\":\"labeled\"}\n";
  for (const int64_t id : m.unlabeled_ids) out << "{\"id\":" << id << ",\"pool\":\"unlabeled\"}\n";
  if (!out) fail("write error: " + path);
}

RegimeManifest read_regime_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open manifest: " + path);
  RegimeManifest m;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      const auto pool = j.at("pool").get<std::string>();
      if (pool == "labeled") {
        m.labeled_ids.push_back(j.at("id").get<int64_t>());
      } else if (pool == "unlabeled") {
        m.unlabeled_ids.push_back(j.at("id").get<int64_t>());
      } else {
        fail("manifest " + path + " line " + std::to_string(lineno) + ": unknown pool \"" + pool + "\"");
      }
    } catch (const json::exception& e) {
      fail("manifest " + path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

std::vector<int64_t> dataset_ids(const Dataset& d) {
  std::vector<int64_t> ids;
  ids.reserve(d.examples.size());
  for (const auto& ex : d.examples) ids.push_back(ex.id);
  return ids;
}

Dataset subset_by_ids(const Dataset& corpus, const std::vector<int64_t>& ids) {
  std::unordered_map<int64_t, size_t> pos;
  pos.reserve(corpus.examples.size());
  for (size_t i = 0; i < corpus.examples.size(); ++i) pos[corpus.examples[i].id] = i;
  Dataset out;
  out.label_space = corpus.label_space;
  out.examples.reserve(ids.size());
  for (const int64_t id : ids) {
    const auto it = pos.find(id);
    if (it == pos.end()) fail("manifest id " + std::to_string(id) + " not present in corpus");
    out.examples.push_back(corpus.examples[it->second]);
  }
  return out;
}

}  // namespace scr
