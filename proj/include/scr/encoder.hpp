#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "scr/corpus.hpp"
#include "scr/kernels.hpp"
#include "scr/rng.hpp"

// Compact trainable text classifier standing in for a heavy pretrained
// encoder: mean-pooled embedding bag -> ReLU hidden layer -> softmax head.
// The math is templated on the scalar type; production runs float32, the
// gradient-check tests instantiate double.

namespace scr {

class EncoderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Vocab {
  static constexpr int kUnk = 0;
  std::vector<std::string> tokens;  // index -> token, tokens[0] == "<unk>"
  std::vector<uint64_t> freqs;      // parallel to tokens
  std::unordered_map<std::string, int> index;

  int size() const { return static_cast<int>(tokens.size()); }
};

// Lowercased punctuation-split tokens with corpus frequency >= min_freq, most
// frequent first (ties lexicographic), capped at max_size entries including
// the reserved <unk> slot.
Vocab build_vocab(const Dataset& corpus, size_t max_size, uint64_t min_freq);

std::vector<int> tokenize(std::string_view text, const Vocab& vocab);

void save_vocab_tsv(const Vocab& vocab, const std::string& path);

struct EncoderDims {
  int vocab = 0;
  int embed = 64;
  int hidden = 128;
  int classes = 0;
};

template <class T>
struct ParamsT {
  EncoderDims dims;
  std::vector<T> E;   // vocab x embed, row-major
  std::vector<T> W1;  // embed x hidden, row-major
  std::vector<T> b1;  // hidden
  std::vector<T> W2;  // hidden x classes, row-major
  std::vector<T> b2;  // classes

  void resize(const EncoderDims& d) {
    dims = d;
    E.assign(static_cast<size_t>(d.vocab) * d.embed, T(0));
    W1.assign(static_cast<size_t>(d.embed) * d.hidden, T(0));
    b1.assign(static_cast<size_t>(d.hidden), T(0));
    W2.assign(static_cast<size_t>(d.hidden) * d.classes, T(0));
    b2.assign(static_cast<size_t>(d.classes), T(0));
  }

  void fill(T value) {
    for (auto* vec : {&E, &W1, &b1, &W2, &b2}) {
      for (auto& x : *vec) x = value;
    }
  }

  size_t total_parameters() const {
    return E.size() + W1.size() + b1.size() + W2.size() + b2.size();
  }

  template <class U>
  ParamsT<U> cast() const {
    ParamsT<U> out;
    out.dims = dims;
    auto conv = [](const std::vector<T>& src, std::vector<U>& dst) {
      dst.resize(src.size());
      for (size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<U>(src[i]);
    };
    conv(E, out.E);
    conv(W1, out.W1);
    conv(b1, out.b1);
    conv(W2, out.W2);
    conv(b2, out.b2);
    return out;
  }
};

using ModelParams = ParamsT<float>;

template <class T>
struct ForwardTraceT {
  std::vector<int> ids;
  std::vector<T> pooled;      // embed
  std::vector<T> pre_hidden;  // hidden, before ReLU
  std::vector<T> hidden;      // hidden, after ReLU
  std::vector<T> logits;      // classes
};
using ForwardTrace = ForwardTraceT<float>;

template <class T>
struct ForwardResult {
  std::vector<T> probs;
  ForwardTraceT<T> trace;
};

namespace detail {

template <class T>
inline void axpy_t(T alpha, const T* x, T* y, size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    kernels::axpy(alpha, x, y, n);
  } else {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
  }
}

template <class T>
inline double dot_t(const T* a, const T* b, size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    return kernels::dot(a, b, n);
  } else {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
  }
}

}  // namespace detail

// Max-subtracted softmax, accumulated in double.
template <class T>
std::vector<T> softmax(std::span<const T> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (const T z : logits) mx = std::max(mx, static_cast<double>(z));
  double sum = 0.0;
  std::vector<double> e(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += e[i];
  }
  std::vector<T> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<T>(e[i] / sum);
  return out;
}

template <class T>
ForwardResult<T> forward(const ParamsT<T>& p, std::span<const int> ids) {
  if (ids.empty()) throw EncoderError("forward: empty token id list");
  const auto& d = p.dims;
  for (const int id : ids) {
    if (id < 0 || id >= d.vocab) {
      throw EncoderError("forward: token id " + std::to_string(id) +
                         " out of range [0, " + std::to_string(d.vocab) + ")");
    }
  }

  ForwardResult<T> r;
  auto& t = r.trace;
  t.ids.assign(ids.begin(), ids.end());

  t.pooled.assign(static_cast<size_t>(d.embed), T(0));
  for (const int id : ids) {
    detail::axpy_t<T>(T(1), p.E.data() + static_cast<size_t>(id) * d.embed,
                      t.pooled.data(), static_cast<size_t>(d.embed));
  }
  const T inv_n = T(1) / static_cast<T>(ids.size());
  for (auto& x : t.pooled) x *= inv_n;

  t.pre_hidden.assign(p.b1.begin(), p.b1.end());
  for (int i = 0; i < d.embed; ++i) {
    detail::axpy_t<T>(t.pooled[static_cast<size_t>(i)],
                      p.W1.data() + static_cast<size_t>(i) * d.hidden,
                      t.pre_hidden.data(), static_cast<size_t>(d.hidden));
  }

  t.hidden.resize(t.pre_hidden.size());
  for (size_t i = 0; i < t.pre_hidden.size(); ++i) {
    t.hidden[i] = t.pre_hidden[i] > T(0) ? t.pre_hidden[i] : T(0);
  }

  t.logits.assign(p.b2.begin(), p.b2.end());
  for (int j = 0; j < d.hidden; ++j) {
    detail::axpy_t<T>(t.hidden[static_cast<size_t>(j)],
                      p.W2.data() + static_cast<size_t>(j) * d.classes,
                      t.logits.data(), static_cast<size_t>(d.classes));
  }

  r.probs = softmax<T>(t.logits);
  return r;
}

// Accumulates exact analytic gradients into `grads` (shaped like the params).
// The pooled-embedding gradient is split equally (1/n) across the n token
// rows; duplicate ids accumulate.
template <class T>
void backward_into(const ParamsT<T>& p, const ForwardTraceT<T>& trace,
                   std::span<const T> dlogits, ParamsT<T>& grads) {
  const auto& d = p.dims;
  if (static_cast<int>(dlogits.size()) != d.classes ||
      static_cast<int>(trace.hidden.size()) != d.hidden ||
      static_cast<int>(trace.pooled.size()) != d.embed) {
    throw EncoderError("backward: trace/dlogits shapes do not match params");
  }
  if (grads.total_parameters() != p.total_parameters()) {
    throw EncoderError("backward: gradient buffer shape mismatch");
  }

  for (int c = 0; c < d.classes; ++c) grads.b2[static_cast<size_t>(c)] += dlogits[static_cast<size_t>(c)];

  std::vector<T> dhidden(static_cast<size_t>(d.hidden));
  for (int j = 0; j < d.hidden; ++j) {
    const T* w_row = p.W2.data() + static_cast<size_t>(j) * d.classes;
    detail::axpy_t<T>(trace.hidden[static_cast<size_t>(j)], dlogits.data(),
                      grads.W2.data() + static_cast<size_t>(j) * d.classes,
                      static_cast<size_t>(d.classes));
    dhidden[static_cast<size_t>(j)] =
        static_cast<T>(detail::dot_t<T>(w_row, dlogits.data(), static_cast<size_t>(d.classes)));
  }

  // ReLU mask
  for (int j = 0; j < d.hidden; ++j) {
    if (!(trace.pre_hidden[static_cast<size_t>(j)] > T(0))) dhidden[static_cast<size_t>(j)] = T(0);
  }

  for (int j = 0; j < d.hidden; ++j) grads.b1[static_cast<size_t>(j)] += dhidden[static_cast<size_t>(j)];

  std::vector<T> dpooled(static_cast<size_t>(d.embed));
  for (int i = 0; i < d.embed; ++i) {
    const T* w_row = p.W1.data() + static_cast<size_t>(i) * d.hidden;
    detail::axpy_t<T>(trace.pooled[static_cast<size_t>(i)], dhidden.data(),
                      grads.W1.data() + static_cast<size_t>(i) * d.hidden,
                      static_cast<size_t>(d.hidden));
    dpooled[static_cast<size_t>(i)] =
        static_cast<T>(detail::dot_t<T>(w_row, dhidden.data(), static_cast<size_t>(d.hidden)));
  }

  const T share = T(1) / static_cast<T>(trace.ids.size());
  for (const int id : trace.ids) {
    detail::axpy_t<T>(share, dpooled.data(),
                      grads.E.data() + static_cast<size_t>(id) * d.embed,
                      static_cast<size_t>(d.embed));
  }
}

template <class T>
ParamsT<T> backward(const ParamsT<T>& p, const ForwardTraceT<T>& trace,
                    std::span<const T> dlogits) {
  ParamsT<T> grads;
  grads.resize(p.dims);
  backward_into(p, trace, dlogits, grads);
  return grads;
}

// Xavier-uniform weights (+-sqrt(6/(fan_in+fan_out)) per matrix), zero biases.
ModelParams init_params(const EncoderDims& dims, uint64_t seed);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ModelParams params;
  Vocab vocab;
};

// Binary layout: magic "SCR1"; u32 vocab/embed/hidden/classes; vocab table
// (u32 byte length, token bytes, u64 frequency per entry); then row-major
// little-endian float32 tensors in the order E, W1, b1, W2, b2.
void save_checkpoint(const ModelParams& params, const Vocab& vocab,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace scr
