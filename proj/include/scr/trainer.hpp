#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "scr/augment.hpp"
#include "scr/corpus.hpp"
#include "scr/encoder.hpp"
#include "scr/kernels.hpp"
#include "scr/metrics.hpp"
#include "scr/objectives.hpp"

namespace scr {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamwConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <class T>
struct OptimizerStateT {
  ParamsT<T> m;  // first moment
  ParamsT<T> v;  // second moment
  int64_t step = 0;

  static OptimizerStateT zeros_like(const ParamsT<T>& params) {
    OptimizerStateT s;
    s.m.resize(params.dims);
    s.v.resize(params.dims);
    return s;
  }
};
using OptimizerState = OptimizerStateT<float>;

namespace detail {

template <class T>
void check_finite(const std::vector<T>& g, const char* tensor) {
  for (const T x : g) {
    if (!std::isfinite(static_cast<double>(x))) {
      throw TrainError(std::string("non-finite gradient in tensor ") + tensor);
    }
  }
}

}  // namespace detail

// Decoupled-weight-decay update with bias-corrected moments:
//   theta <- theta - lr * (mhat / (sqrt(vhat) + eps) + weight_decay * theta)
// The float instantiation runs through the dispatched kernels; the double one
// is the widened path used by the reference-trajectory tests.
template <class T>
void adamw_step(ParamsT<T>& params, const ParamsT<T>& grads,
                OptimizerStateT<T>& state, const AdamwConfig& cfg) {
  if (params.total_parameters() != grads.total_parameters() ||
      params.total_parameters() != state.m.total_parameters()) {
    throw TrainError("adamw_step: parameter/gradient/state shapes disagree");
  }
  detail::check_finite(grads.E, "E");
  detail::check_finite(grads.W1, "W1");
  detail::check_finite(grads.b1, "b1");
  detail::check_finite(grads.W2, "W2");
  detail::check_finite(grads.b2, "b2");

  state.step += 1;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  auto update = [&](std::vector<T>& w, const std::vector<T>& g, std::vector<T>& m,
                    std::vector<T>& v) {
    if constexpr (std::is_same_v<T, float>) {
      kernels::AdamwStep s{static_cast<float>(cfg.lr), static_cast<float>(cfg.beta1),
                           static_cast<float>(cfg.beta2), static_cast<float>(cfg.eps),
                           static_cast<float>(cfg.weight_decay), static_cast<float>(bias1),
                           static_cast<float>(bias2)};
      kernels::ops().adamw(w.data(), g.data(), m.data(), v.data(), w.size(), s);
    } else {
      kernels::detail::adamw_loop<T>(w.data(), g.data(), m.data(), v.data(), w.size(),
                                     static_cast<T>(cfg.lr), static_cast<T>(cfg.beta1),
                                     static_cast<T>(cfg.beta2), static_cast<T>(cfg.eps),
                                     static_cast<T>(cfg.weight_decay), static_cast<T>(bias1),
                                     static_cast<T>(bias2));
    }
  };
  update(params.E, grads.E, state.m.E, state.v.E);
  update(params.W1, grads.W1, state.m.W1, state.v.W1);
  update(params.b1, grads.b1, state.m.b1, state.v.b1);
  update(params.W2, grads.W2, state.m.W2, state.v.W2);
  update(params.b2, grads.b2, state.m.b2, state.v.b2);
}

struct TrainConfig {
  // > 1 closes both unlabeled gates (diagnostic runs); the CLI validates (0, 1]
  double tau = 0.98;
  int batch_labeled = 8;
  int batch_unlabeled = 8;
  AdamwConfig opt;
  int max_epochs = 1000;
  int patience = 10;
  LossKind loss_kind = LossKind::ce();
  uint64_t master_seed = 42;
  std::optional<Strategy> strategy;  // nullopt: supervised-only baseline
  bool use_shrink = true;            // re-assemble loss on/off (ablation switch)
};

struct EpochLog {
  int epoch = 0;
  double loss_sup = 0.0;
  double loss_con = 0.0;
  double loss_sh = 0.0;
  double loss_total = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  std::optional<double> pseudo_acc;
  MaskStats mask;
};

// Strong views come from cached candidates; weak views from the synonym
// lexicon. `candidates` must return k rewrites for every unlabeled text when
// a strategy is set (a miss is an error).
struct AugmentPlan {
  const SynonymLexicon* lexicon = nullptr;  // default lexicon when null
  double weak_p = 0.1;
  std::function<const std::vector<std::string>*(const Example&)> candidates;
};

// Test hook: per-batch tensors for independent loss recomputation.
struct BatchComputation {
  double loss_sup = 0.0;
  double loss_con = 0.0;
  double loss_sh = 0.0;
  std::vector<std::vector<float>> labeled_probs;
  std::vector<int> labels;
  UnlabeledBatchOutputs unlabeled;
};
using BatchObserver = std::function<void(const BatchComputation&)>;

EpochLog train_epoch(ModelParams& params, OptimizerState& opt, const Vocab& vocab,
                     const Dataset& labeled, const Dataset& unlabeled,
                     const AugmentPlan& plan, const TrainConfig& cfg, int epoch,
                     const BatchObserver& observer = nullptr);

MetricsBundle evaluate(const ModelParams& params, const Vocab& vocab,
                       const Dataset& dataset);

struct FitResult {
  ModelParams best_params;
  int best_epoch = -1;
  double best_val_acc = 0.0;
  std::vector<EpochLog> logs;
};

// Runs up to max_epochs, tracks best validation accuracy (ties count as
// non-improvement) and stops after `patience` consecutive non-improving
// epochs. Returns the best-epoch checkpoint, not the last.
// When epoch_csv_path is set, each epoch is appended to the CSV as it ends.
FitResult fit(ModelParams initial, const Vocab& vocab, const Dataset& labeled,
              const Dataset& unlabeled, const Dataset& val, const AugmentPlan& plan,
              const TrainConfig& cfg,
              const std::optional<std::string>& epoch_csv_path = std::nullopt);

inline constexpr const char* kEpochCsvHeader =
    "epoch,L_sup,L_con,L_sh,L,train_acc,val_acc,pseudo_acc,n_confident,n_shrunk,n_dropped";

std::string epoch_log_csv_row(const EpochLog& log);
void write_epoch_log_csv(const std::string& path, const std::vector<EpochLog>& logs);
std::vector<EpochLog> read_epoch_log_csv(const std::string& path);

}  // namespace scr
