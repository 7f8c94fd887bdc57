#include "scr/encoder.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

#include "scr/textutil.hpp"

namespace scr {
namespace {

constexpr char kMagic[4] = {'S', 'C', 'R', '1'};
constexpr uint32_t kMaxDim = 1u << 24;  // sanity bound against corrupt headers

template <class T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::ifstream& in, T& v, const std::string& path) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != sizeof(T)) throw CheckpointError("truncated checkpoint: " + path);
}

void write_floats(std::ofstream& out, const std::vector<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void read_floats(std::ifstream& in, std::vector<float>& v, const std::string& path) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != v.size() * sizeof(float)) {
    throw CheckpointError("truncated checkpoint: " + path);
  }
}

}  // namespace

Vocab build_vocab(const Dataset& corpus, size_t max_size, uint64_t min_freq) {
  if (corpus.examples.empty()) throw EncoderError("build_vocab: empty corpus");
  std::unordered_map<std::string, uint64_t> counts;
  for (const auto& ex : corpus.examples) {
    for (auto& tok : word_tokenize(ex.text)) counts[std::move(tok)] += 1;
  }

  std::vector<std::pair<std::string, uint64_t>> entries;
  entries.reserve(counts.size());
  for (auto& [tok, n] : counts) {
    if (n >= min_freq) entries.emplace_back(tok, n);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  v.tokens.push_back("<unk>");
  v.freqs.push_back(0);
  const size_t cap = max_size > 0 ? max_size : 1;  // cap includes the <unk> slot
  for (const auto& [tok, n] : entries) {
    if (v.tokens.size() >= cap) break;
    v.tokens.push_back(tok);
    v.freqs.push_back(n);
  }
  for (size_t i = 0; i < v.tokens.size(); ++i) v.index[v.tokens[i]] = static_cast<int>(i);
  return v;
}

std::vector<int> tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<int> ids;
  for (const auto& tok : word_tokenize(text)) {
    const auto it = vocab.index.find(tok);
    ids.push_back(it == vocab.index.end() ? Vocab::kUnk : it->second);
  }
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  return ids;
}

void save_vocab_tsv(const Vocab& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw EncoderError("cannot write vocab file: " + path);
  for (size_t i = 0; i < vocab.tokens.size(); ++i) {
    out << vocab.tokens[i] << '\t' << i << '\t' << vocab.freqs[i] << '\n';
  }
}

ModelParams init_params(const EncoderDims& dims, uint64_t seed) {
  if (dims.vocab < 1 || dims.embed < 1 || dims.hidden < 1 || dims.classes < 2) {
    throw EncoderError("init_params: dimensions must be positive (classes >= 2)");
  }
  ModelParams p;
  p.resize(dims);
  Rng rng(seed);
  auto xavier = [&rng](std::vector<float>& w, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& x : w) x = static_cast<float>(rng.uniform(-bound, bound));
  };
  xavier(p.E, dims.vocab, dims.embed);
  xavier(p.W1, dims.embed, dims.hidden);
  xavier(p.W2, dims.hidden, dims.classes);
  // biases stay zero
  return p;
}

void save_checkpoint(const ModelParams& params, const Vocab& vocab,
                     const std::string& path) {
  if (params.dims.vocab != vocab.size()) {
    throw CheckpointError("checkpoint: params vocab dim " + std::to_string(params.dims.vocab) +
                          " != vocab size " + std::to_string(vocab.size()));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  write_pod(out, static_cast<uint32_t>(params.dims.vocab));
  write_pod(out, static_cast<uint32_t>(params.dims.embed));
  write_pod(out, static_cast<uint32_t>(params.dims.hidden));
  write_pod(out, static_cast<uint32_t>(params.dims.classes));
  for (size_t i = 0; i < vocab.tokens.size(); ++i) {
    write_pod(out, static_cast<uint32_t>(vocab.tokens[i].size()));
    out.write(vocab.tokens[i].data(), static_cast<std::streamsize>(vocab.tokens[i].size()));
    write_pod(out, static_cast<uint64_t>(vocab.freqs[i]));
  }
  write_floats(out, params.E);
  write_floats(out, params.W1);
  write_floats(out, params.b1);
  write_floats(out, params.W2);
  write_floats(out, params.b2);
  if (!out) throw CheckpointError("write error: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);

  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError("bad checkpoint magic in " + path);
  }

  uint32_t v = 0, d = 0, h = 0, c = 0;
  read_pod(in, v, path);
  read_pod(in, d, path);
  read_pod(in, h, path);
  read_pod(in, c, path);
  if (v == 0 || d == 0 || h == 0 || c < 2 || v > kMaxDim || d > kMaxDim || h > kMaxDim || c > kMaxDim) {
    throw CheckpointError("checkpoint dimensions out of range in " + path);
  }

  Checkpoint ck;
  ck.vocab.tokens.reserve(v);
  ck.vocab.freqs.reserve(v);
  for (uint32_t i = 0; i < v; ++i) {
    uint32_t len = 0;
    read_pod(in, len, path);
    if (len > (1u << 20)) throw CheckpointError("checkpoint vocab entry too long in " + path);
    std::string tok(len, '\0');
    in.read(tok.data(), len);
    if (static_cast<uint32_t>(in.gcount()) != len) throw CheckpointError("truncated checkpoint: " + path);
    uint64_t freq = 0;
    read_pod(in, freq, path);
    ck.vocab.tokens.push_back(std::move(tok));
    ck.vocab.freqs.push_back(freq);
  }
  for (size_t i = 0; i < ck.vocab.tokens.size(); ++i) ck.vocab.index[ck.vocab.tokens[i]] = static_cast<int>(i);

  EncoderDims dims{static_cast<int>(v), static_cast<int>(d), static_cast<int>(h), static_cast<int>(c)};
  ck.params.resize(dims);
  read_floats(in, ck.params.E, path);
  read_floats(in, ck.params.W1, path);
  read_floats(in, ck.params.b1, path);
  read_floats(in, ck.params.W2, path);
  read_floats(in, ck.params.b2, path);

  // must be at end of file now
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) throw CheckpointError("trailing bytes after checkpoint payload: " + path);
  return ck;
}

}  // namespace scr
