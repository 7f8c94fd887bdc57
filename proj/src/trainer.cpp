#include "scr/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "scr/rng.hpp"

namespace scr {
namespace {

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::string(buf);
}

int predict(const ModelParams& params, const Vocab& vocab, const std::string& text) {
  const auto ids = tokenize(text, vocab);
  const auto fwd = forward<float>(params, ids);
  int best = 0;
  for (size_t c = 1; c < fwd.probs.size(); ++c) {
    if (fwd.probs[c] > fwd.probs[static_cast<size_t>(best)]) best = static_cast<int>(c);
  }
  return best;
}

}  // namespace

EpochLog train_epoch(ModelParams& params, OptimizerState& opt, const Vocab& vocab,
                     const Dataset& labeled, const Dataset& unlabeled,
                     const AugmentPlan& plan, const TrainConfig& cfg, int epoch,
                     const BatchObserver& observer) {
  const SynonymLexicon& lexicon = plan.lexicon ? *plan.lexicon : default_lexicon();
  const bool use_unlabeled = cfg.strategy.has_value();
  if (use_unlabeled && !plan.candidates) {
    throw TrainError("train_epoch: strategy set but no candidate source provided");
  }

  const uint64_t batches_seed =
      mix_seed(derive_seed(cfg.master_seed, seed_stream::kBatches), static_cast<uint64_t>(epoch));
  const auto batches = make_batches(labeled.size(), unlabeled.size(), cfg.batch_labeled,
                                    cfg.batch_unlabeled, batches_seed);

  EpochLog log;
  log.epoch = epoch;
  double sum_sup = 0.0, sum_con = 0.0, sum_sh = 0.0, sum_total = 0.0;
  int64_t train_hits = 0, train_rows = 0;
  int64_t pseudo_hits = 0, pseudo_rows = 0;

  ParamsT<float> grads;
  grads.resize(params.dims);

  for (const Batch& batch : batches) {
    grads.fill(0.0f);
    BatchComputation comp;

    // labeled rows: supervised CE
    std::vector<std::vector<float>> labeled_probs;
    std::vector<ForwardTrace> labeled_traces;
    std::vector<int> labels;
    labeled_probs.reserve(batch.labeled.size());
    for (const int idx : batch.labeled) {
      const Example& ex = labeled.examples[static_cast<size_t>(idx)];
      if (!ex.label) throw TrainError("labeled example without label, id " + std::to_string(ex.id));
      auto fwd = forward<float>(params, tokenize(ex.text, vocab));
      int pred = 0;
      for (size_t c = 1; c < fwd.probs.size(); ++c) {
        if (fwd.probs[c] > fwd.probs[static_cast<size_t>(pred)]) pred = static_cast<int>(c);
      }
      train_hits += (pred == *ex.label) ? 1 : 0;
      ++train_rows;
      labeled_probs.push_back(fwd.probs);
      labeled_traces.push_back(std::move(fwd.trace));
      labels.push_back(*ex.label);
    }
    const auto sup = supervised_loss<float>(labeled_probs, labels, LossKind::ce());
    for (size_t i = 0; i < labeled_traces.size(); ++i) {
      backward_into<float>(params, labeled_traces[i], sup.dlogits[i], grads);
    }

    double l_con = 0.0, l_sh = 0.0;
    MaskStats mask = make_mask_stats(static_cast<int>(batch.unlabeled.size()), 0, 0);

    if (use_unlabeled && !batch.unlabeled.empty()) {
      UnlabeledBatchOutputs ubo;
      std::vector<int> hidden;
      ubo.weak_probs.reserve(batch.unlabeled.size());
      for (const int idx : batch.unlabeled) {
        const Example& ex = unlabeled.examples[static_cast<size_t>(idx)];

        // weak branch: synonym view, no trace kept (pseudo-labels are constants)
        const uint64_t weak_seed =
            mix_seed(derive_seed(cfg.master_seed, seed_stream::kWeakAug),
                     static_cast<uint64_t>(epoch), static_cast<uint64_t>(ex.id));
        const std::string weak_text = weak_augment(ex.text, lexicon, plan.weak_p, weak_seed);
        ubo.weak_probs.push_back(forward<float>(params, tokenize(weak_text, vocab)).probs);

        // strong branch: seeded pick from the cached candidate set
        const std::vector<std::string>* candidates = plan.candidates(ex);
        if (candidates == nullptr || candidates->empty()) {
          throw TrainError("augmentation cache miss for unlabeled example id " +
                           std::to_string(ex.id));
        }
        const uint64_t select_seed =
            mix_seed(derive_seed(cfg.master_seed, seed_stream::kStrongSelect),
                     static_cast<uint64_t>(epoch), static_cast<uint64_t>(ex.id));
        const std::string strong_text = select_augmentation(*candidates, select_seed);
        auto strong = forward<float>(params, tokenize(strong_text, vocab));
        ubo.strong_probs.push_back(std::move(strong.probs));
        ubo.strong_traces.push_back(std::move(strong.trace));

        hidden.push_back(diagnostic_gold(ex).value_or(-1));
      }

      const auto con = consistency_loss<float>(ubo, cfg.tau, cfg.loss_kind);
      l_con = con.loss;
      for (size_t i = 0; i < ubo.strong_traces.size(); ++i) {
        if (con.gated[i]) backward_into<float>(params, ubo.strong_traces[i], con.strong_dlogits[i], grads);
      }

      int n_shrunk = 0;
      if (cfg.use_shrink && params.dims.classes >= 3) {
        const auto sh = shrink_loss<float>(ubo, cfg.tau, cfg.loss_kind);
        l_sh = sh.loss;
        n_shrunk = sh.n_gated;
        for (size_t i = 0; i < ubo.strong_traces.size(); ++i) {
          if (sh.gated[i]) backward_into<float>(params, ubo.strong_traces[i], sh.strong_dlogits[i], grads);
        }
      }
      mask = make_mask_stats(static_cast<int>(batch.unlabeled.size()), con.n_gated, n_shrunk);

      // pseudo-label accuracy over gated rows (diagnostic-only hidden labels)
      for (size_t i = 0; i < ubo.weak_probs.size(); ++i) {
        if (!con.gated[i] || hidden[i] < 0) continue;
        ++pseudo_rows;
        if (pseudo_label<float>(ubo.weak_probs[i]).label == hidden[i]) ++pseudo_hits;
      }

      if (observer) comp.unlabeled = std::move(ubo);
    }

    const double l_total = total_loss(sup.loss, l_con, l_sh);
    if (!std::isfinite(l_total)) {
      throw TrainError("non-finite loss at epoch " + std::to_string(epoch));
    }
    adamw_step<float>(params, grads, opt, cfg.opt);

    sum_sup += sup.loss;
    sum_con += l_con;
    sum_sh += l_sh;
    sum_total += l_total;
    log.mask += mask;

    if (observer) {
      comp.loss_sup = sup.loss;
      comp.loss_con = l_con;
      comp.loss_sh = l_sh;
      comp.labeled_probs = labeled_probs;
      comp.labels = labels;
      observer(comp);
    }
  }

  const double nb = static_cast<double>(batches.size());
  log.loss_sup = sum_sup / nb;
  log.loss_con = sum_con / nb;
  log.loss_sh = sum_sh / nb;
  log.loss_total = sum_total / nb;
  log.train_acc = train_rows > 0 ? static_cast<double>(train_hits) / static_cast<double>(train_rows) : 0.0;
  if (pseudo_rows > 0) {
    log.pseudo_acc = static_cast<double>(pseudo_hits) / static_cast<double>(pseudo_rows);
  }
  return log;
}

MetricsBundle evaluate(const ModelParams& params, const Vocab& vocab, const Dataset& dataset) {
  if (dataset.examples.empty()) throw TrainError("evaluate: empty dataset");
  std::vector<int> pred, gold;
  pred.reserve(dataset.size());
  for (const auto& ex : dataset.examples) {
    if (!ex.label) throw TrainError("evaluate: example id " + std::to_string(ex.id) + " has no label");
    pred.push_back(predict(params, vocab, ex.text));
    gold.push_back(*ex.label);
  }
  return compute_metrics(pred, gold, dataset.label_space.size());
}

FitResult fit(ModelParams initial, const Vocab& vocab, const Dataset& labeled,
              const Dataset& unlabeled, const Dataset& val, const AugmentPlan& plan,
              const TrainConfig& cfg, const std::optional<std::string>& epoch_csv_path) {
  if (val.examples.empty()) throw TrainError("fit: validation split is empty");
  if (cfg.max_epochs < 1 || cfg.patience < 1) {
    throw TrainError("fit: max_epochs and patience must be >= 1");
  }

  std::ofstream csv;
  if (epoch_csv_path) {
    csv.open(*epoch_csv_path, std::ios::trunc);
    if (!csv) throw TrainError("cannot write epoch log: " + *epoch_csv_path);
    csv << kEpochCsvHeader << "\n";
    csv.flush();
  }

  FitResult result;
  result.best_params = initial;
  ModelParams params = std::move(initial);
  OptimizerState opt = OptimizerState::zeros_like(params);

  int bad_epochs = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    EpochLog log = train_epoch(params, opt, vocab, labeled, unlabeled, plan, cfg, epoch);
    log.val_acc = evaluate(params, vocab, val).accuracy;
    result.logs.push_back(log);
    if (csv.is_open()) {
      csv << epoch_log_csv_row(log) << "\n";
      csv.flush();
    }

    if (log.val_acc > result.best_val_acc || result.best_epoch < 0) {
      result.best_val_acc = log.val_acc;
      result.best_epoch = epoch;
      result.best_params = params;
      bad_epochs = 0;
    } else {
      ++bad_epochs;  // ties count as non-improvement
      if (bad_epochs >= cfg.patience) break;
    }
  }
  return result;
}

std::string epoch_log_csv_row(const EpochLog& log) {
  std::ostringstream out;
  out << log.epoch << ',' << fmt_g(log.loss_sup) << ',' << fmt_g(log.loss_con) << ','
      << fmt_g(log.loss_sh) << ',' << fmt_g(log.loss_total) << ',' << fmt_g(log.train_acc)
      << ',' << fmt_g(log.val_acc) << ',';
  if (log.pseudo_acc) out << fmt_g(*log.pseudo_acc);
  out << ',' << log.mask.n_confident << ',' << log.mask.n_shrunk << ',' << log.mask.n_dropped;
  return out.str();
}

void write_epoch_log_csv(const std::string& path, const std::vector<EpochLog>& logs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw TrainError("cannot write epoch log: " + path);
  out << kEpochCsvHeader << "\n";
  for (const auto& log : logs) out << epoch_log_csv_row(log) << "\n";
}

std::vector<EpochLog> read_epoch_log_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TrainError("cannot open epoch log: " + path);
  std::string line;
  if (!std::getline(in, line)) throw TrainError("empty epoch log: " + path);
  if (line != kEpochCsvHeader) throw TrainError("unexpected epoch log header in " + path);

  std::vector<EpochLog> logs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() < 11) throw TrainError("short epoch log row in " + path);
    EpochLog log;
    log.epoch = std::stoi(f[0]);
    log.loss_sup = std::stod(f[1]);
    log.loss_con = std::stod(f[2]);
    log.loss_sh = std::stod(f[3]);
    log.loss_total = std::stod(f[4]);
    log.train_acc = std::stod(f[5]);
    log.val_acc = std::stod(f[6]);
    if (!f[7].empty()) log.pseudo_acc = std::stod(f[7]);
    log.mask.n_confident = std::stoi(f[8]);
    log.mask.n_shrunk = std::stoi(f[9]);
    log.mask.n_dropped = std::stoi(f[10]);
    logs.push_back(log);
  }
  return logs;
}

}  // namespace scr
