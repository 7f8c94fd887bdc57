#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "scr/encoder.hpp"

// Training objective: supervised cross-entropy over the labeled batch, a
// confidence-thresholded consistency loss between weak and strong views of
// unlabeled rows, and a class re-assemble loss that retrains low-confidence
// rows inside a shrunk (C-1)-category space. Pseudo-labels come from the weak
// branch and are treated as constants: no gradient ever flows through it.
// All internal arithmetic is double; gradients are returned w.r.t. the logits
// that produced the probability rows.

namespace scr {

class ObjectiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossKind {
  enum class Kind { CE, Focal, Asymmetric };
  Kind kind = Kind::CE;
  double focal_gamma = 2.0;
  double asym_gamma_pos = 0.0;
  double asym_gamma_neg = 4.0;
  double asym_margin = 0.05;

  static LossKind ce() { return LossKind{}; }
  static LossKind focal(double gamma) {
    LossKind k;
    k.kind = Kind::Focal;
    k.focal_gamma = gamma;
    return k;
  }
  static LossKind asymmetric(double gamma_pos, double gamma_neg, double margin) {
    LossKind k;
    k.kind = Kind::Asymmetric;
    k.asym_gamma_pos = gamma_pos;
    k.asym_gamma_neg = gamma_neg;
    k.asym_margin = margin;
    return k;
  }
};

// Per-batch gate accounting. confident + shrunk + dropped == batch rows.
struct MaskStats {
  int n_confident = 0;
  int n_shrunk = 0;
  int n_dropped = 0;

  int total() const { return n_confident + n_shrunk + n_dropped; }
  MaskStats& operator+=(const MaskStats& o) {
    n_confident += o.n_confident;
    n_shrunk += o.n_shrunk;
    n_dropped += o.n_dropped;
    return *this;
  }
};

inline MaskStats make_mask_stats(int batch_rows, int n_confident, int n_shrunk) {
  return MaskStats{n_confident, n_shrunk, batch_rows - n_confident - n_shrunk};
}

namespace detail {

inline double safe_log(double p) { return std::log(std::max(p, 1e-300)); }

template <class T>
int argmax_smallest_tie(std::span<const T> v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace detail

template <class T>
struct PointLoss {
  double loss = 0.0;
  std::vector<T> dlogits;
};

// Loss of one probability row against a hard target, with the gradient taken
// w.r.t. the logits behind the row (probs assumed to be their softmax).
//   CE:         -log p_t
//   Focal:      -(1-p_t)^g log p_t
//   Asymmetric: one-vs-rest with probability shifting max(p-m, 0) on negatives
template <class T>
PointLoss<T> point_loss(std::span<const T> probs, int target, const LossKind& kind) {
  const int C = static_cast<int>(probs.size());
  if (target < 0 || target >= C) {
    throw ObjectiveError("point_loss: target " + std::to_string(target) +
                         " out of range [0, " + std::to_string(C) + ")");
  }
  std::vector<double> p(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) p[i] = static_cast<double>(probs[i]);
  const double pt = p[static_cast<size_t>(target)];

  PointLoss<T> out;
  out.dlogits.assign(probs.size(), T(0));

  switch (kind.kind) {
    case LossKind::Kind::CE: {
      out.loss = -detail::safe_log(pt);
      for (int j = 0; j < C; ++j) {
        out.dlogits[static_cast<size_t>(j)] =
            static_cast<T>(p[static_cast<size_t>(j)] - (j == target ? 1.0 : 0.0));
      }
      return out;
    }
    case LossKind::Kind::Focal: {
      const double g = kind.focal_gamma;
      const double om = std::max(1.0 - pt, 0.0);
      if (om == 0.0 && g > 0.0) {
        return out;  // exact hit: zero loss, zero gradient
      }
      const double logpt = detail::safe_log(pt);
      out.loss = -std::pow(om, g) * logpt;
      // dL/dz_j = A * (delta_tj - p_j), A = g*pt*(1-pt)^(g-1)*log(pt) - (1-pt)^g
      const double a =
          (g > 0.0 ? g * pt * std::pow(om, g - 1.0) * logpt : 0.0) - std::pow(om, g);
      for (int j = 0; j < C; ++j) {
        const double delta = (j == target) ? 1.0 : 0.0;
        out.dlogits[static_cast<size_t>(j)] = static_cast<T>(a * (delta - p[static_cast<size_t>(j)]));
      }
      return out;
    }
    case LossKind::Kind::Asymmetric: {
      const double gp = kind.asym_gamma_pos;
      const double gn = kind.asym_gamma_neg;
      const double m = kind.asym_margin;
      std::vector<double> dldp(p.size(), 0.0);
      double loss = 0.0;

      {  // positive term
        const double q = std::max(pt, 1e-300);
        const double om = std::max(1.0 - q, 0.0);
        const double logq = detail::safe_log(q);
        loss += -std::pow(om, gp) * logq;
        double dp = -std::pow(om, gp) / q;
        if (gp > 0.0 && om > 0.0) dp += gp * std::pow(om, gp - 1.0) * logq;
        dldp[static_cast<size_t>(target)] = dp;
      }
      for (int c = 0; c < C; ++c) {  // negative terms with margin shift
        if (c == target) continue;
        const double pm = std::max(p[static_cast<size_t>(c)] - m, 0.0);
        if (pm <= 0.0) continue;
        const double ompm = std::max(1.0 - pm, 1e-300);
        const double lg = std::log(ompm);
        loss += -std::pow(pm, gn) * lg;
        double dp = std::pow(pm, gn) / ompm;
        if (gn > 0.0) {
          dp += -gn * std::pow(pm, gn - 1.0) * lg;
        }
        dldp[static_cast<size_t>(c)] = dp;
      }
      out.loss = loss;
      // chain through softmax: dz_j = sum_c dldp_c * p_c * (delta_cj - p_j)
      double weighted = 0.0;
      for (int c = 0; c < C; ++c) weighted += dldp[static_cast<size_t>(c)] * p[static_cast<size_t>(c)];
      for (int j = 0; j < C; ++j) {
        out.dlogits[static_cast<size_t>(j)] =
            static_cast<T>(p[static_cast<size_t>(j)] * (dldp[static_cast<size_t>(j)] - weighted));
      }
      return out;
    }
  }
  throw ObjectiveError("point_loss: unknown loss kind");
}

struct PseudoLabel {
  int label = 0;
  double confidence = 0.0;
};

// argmax of the weak row (ties -> smallest index). The result is a constant:
// downstream losses never differentiate through it.
template <class T>
PseudoLabel pseudo_label(std::span<const T> weak_row) {
  const int lab = detail::argmax_smallest_tie(weak_row);
  return PseudoLabel{lab, static_cast<double>(weak_row[static_cast<size_t>(lab)])};
}

template <class T>
struct UnlabeledBatchOutputsT {
  std::vector<std::vector<T>> weak_probs;
  std::vector<std::vector<T>> strong_probs;
  std::vector<ForwardTraceT<T>> strong_traces;

  size_t rows() const { return weak_probs.size(); }
};
using UnlabeledBatchOutputs = UnlabeledBatchOutputsT<float>;

template <class T>
struct BranchLoss {
  double loss = 0.0;
  std::vector<std::vector<T>> strong_dlogits;  // zero rows where the gate is closed
  std::vector<uint8_t> gated;
  int n_gated = 0;
};

// Thresholded consistency loss: mean over all batch rows of
// 1(max weak >= tau) * point_loss(strong, pseudo(weak)). Rows failing the
// gate contribute zero; gradients flow through the strong branch only.
template <class T>
BranchLoss<T> consistency_loss(const UnlabeledBatchOutputsT<T>& batch, double tau,
                               const LossKind& kind) {
  const size_t B = batch.rows();
  if (batch.strong_probs.size() != B) {
    throw ObjectiveError("consistency_loss: weak/strong row counts differ");
  }
  BranchLoss<T> out;
  out.gated.assign(B, 0);
  out.strong_dlogits.resize(B);
  if (B == 0) return out;

  double loss_sum = 0.0;
  const T inv_b = T(1) / static_cast<T>(B);
  for (size_t i = 0; i < B; ++i) {
    const auto& weak = batch.weak_probs[i];
    out.strong_dlogits[i].assign(weak.size(), T(0));
    const PseudoLabel pl = pseudo_label<T>(weak);
    if (pl.confidence < tau) continue;
    auto point = point_loss<T>(batch.strong_probs[i], pl.label, kind);
    loss_sum += point.loss;
    for (size_t j = 0; j < point.dlogits.size(); ++j) {
      out.strong_dlogits[i][j] = point.dlogits[j] * inv_b;
    }
    out.gated[i] = 1;
    ++out.n_gated;
  }
  out.loss = loss_sum / static_cast<double>(B);
  return out;
}

struct ShrunkDistribution {
  std::vector<int> retained;   // ascending original indices, size C-1
  std::vector<double> probs;   // renormalized over retained, aligned with `retained`
  int excluded = -1;           // the dropped rank-2 category
};

// Drops the rank-2 category (the strongest confuser of the top-1) and
// renormalizes the rest. For C == 3 this retains exactly the top-1 and
// bottom-1 categories. Rank ties break toward the smaller index.
template <class T>
ShrunkDistribution shrink_distribution(std::span<const T> weak_row) {
  const int C = static_cast<int>(weak_row.size());
  if (C < 3) throw ObjectiveError("shrink_distribution requires C >= 3");

  std::vector<int> order(static_cast<size_t>(C));
  for (int i = 0; i < C; ++i) order[static_cast<size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return static_cast<double>(weak_row[static_cast<size_t>(a)]) >
           static_cast<double>(weak_row[static_cast<size_t>(b)]);
  });
  const int excluded = order[1];

  ShrunkDistribution out;
  out.excluded = excluded;
  double sum = 0.0;
  for (int i = 0; i < C; ++i) {
    if (i == excluded) continue;
    out.retained.push_back(i);
    sum += static_cast<double>(weak_row[static_cast<size_t>(i)]);
  }
  sum = std::max(sum, 1e-300);
  for (const int i : out.retained) {
    out.probs.push_back(static_cast<double>(weak_row[static_cast<size_t>(i)]) / sum);
  }
  return out;
}

// Normalized-confidence gate for uncertain rows: max / (max + min) > tau.
template <class T>
bool shrink_gate(std::span<const T> weak_row, double tau) {
  double mx = -1.0, mn = 2.0;
  for (const T v : weak_row) {
    mx = std::max(mx, static_cast<double>(v));
    mn = std::min(mn, static_cast<double>(v));
  }
  return mx / (mx + mn) > tau;
}

// Re-assemble loss over the shrunk class space: rows below the confidence
// threshold whose normalized confidence passes the gate are scored against
// the shrunk weak argmax, with the strong row restricted to the retained
// categories and renormalized. The renormalized restriction has the softmax
// Jacobian w.r.t. the retained logits (and zero w.r.t. the excluded one), so
// point_loss gradients scatter back to the full logits unchanged.
template <class T>
BranchLoss<T> shrink_loss(const UnlabeledBatchOutputsT<T>& batch, double tau,
                          const LossKind& kind) {
  const size_t B = batch.rows();
  if (batch.strong_probs.size() != B) {
    throw ObjectiveError("shrink_loss: weak/strong row counts differ");
  }
  BranchLoss<T> out;
  out.gated.assign(B, 0);
  out.strong_dlogits.resize(B);
  if (B == 0) return out;

  double loss_sum = 0.0;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (size_t i = 0; i < B; ++i) {
    const auto& weak = batch.weak_probs[i];
    const int C = static_cast<int>(weak.size());
    out.strong_dlogits[i].assign(weak.size(), T(0));
    const PseudoLabel pl = pseudo_label<T>(weak);
    if (pl.confidence >= tau) continue;  // confident rows belong to the consistency loss
    if (!shrink_gate<T>(weak, tau)) continue;
    if (C < 3) continue;

    const ShrunkDistribution sd = shrink_distribution<T>(weak);
    std::vector<double> target_probs(sd.probs);
    const int target =
        detail::argmax_smallest_tie<double>(std::span<const double>(target_probs));

    // restrict + renormalize the strong row
    const auto& strong = batch.strong_probs[i];
    std::vector<double> q(sd.retained.size());
    double mass = 0.0;
    for (size_t j = 0; j < sd.retained.size(); ++j) {
      q[j] = static_cast<double>(strong[static_cast<size_t>(sd.retained[j])]);
      mass += q[j];
    }
    mass = std::max(mass, 1e-300);
    for (auto& x : q) x /= mass;

    auto point = point_loss<double>(std::span<const double>(q), target, kind);
    loss_sum += point.loss;
    for (size_t j = 0; j < sd.retained.size(); ++j) {
      out.strong_dlogits[i][static_cast<size_t>(sd.retained[j])] =
          static_cast<T>(point.dlogits[j] * inv_b);
    }
    out.gated[i] = 1;
    ++out.n_gated;
  }
  out.loss = loss_sum * inv_b;
  return out;
}

template <class T>
struct SupervisedLoss {
  double loss = 0.0;
  std::vector<std::vector<T>> dlogits;
};

// Mean loss over the labeled batch (cross-entropy unless overridden).
template <class T>
SupervisedLoss<T> supervised_loss(const std::vector<std::vector<T>>& probs_rows,
                                  std::span<const int> labels,
                                  const LossKind& kind = LossKind::ce()) {
  if (probs_rows.size() != labels.size()) {
    throw ObjectiveError("supervised_loss: " + std::to_string(probs_rows.size()) +
                         " rows vs " + std::to_string(labels.size()) + " labels");
  }
  SupervisedLoss<T> out;
  out.dlogits.resize(probs_rows.size());
  if (probs_rows.empty()) return out;

  const double inv_b = 1.0 / static_cast<double>(probs_rows.size());
  double loss_sum = 0.0;
  for (size_t i = 0; i < probs_rows.size(); ++i) {
    auto point = point_loss<T>(probs_rows[i], labels[i], kind);
    loss_sum += point.loss;
    out.dlogits[i].resize(point.dlogits.size());
    for (size_t j = 0; j < point.dlogits.size(); ++j) {
      out.dlogits[i][j] = static_cast<T>(point.dlogits[j] * inv_b);
    }
  }
  out.loss = loss_sum * inv_b;
  return out;
}

// Overall objective: plain unweighted sum.
inline double total_loss(double sup, double con, double sh) { return sup + con + sh; }

}  // namespace scr
