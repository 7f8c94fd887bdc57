#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "scr/augment.hpp"
#include "scr/config.hpp"
#include "scr/corpus.hpp"
#include "scr/digest.hpp"
#include "scr/encoder.hpp"
#include "scr/kernels.hpp"
#include "scr/metrics.hpp"
#include "scr/rng.hpp"
#include "scr/trainer.hpp"
#include "scr/version.hpp"

namespace fs = std::filesystem;
using namespace scr;

namespace {

RunConfig load_config(const std::string& path) {
  RunConfig cfg = RunConfig::from_file(path);
  cfg.validate();
  return cfg;
}

SynonymLexicon effective_lexicon(const RunConfig& cfg) {
  if (cfg.augmenter.lexicon_file) return SynonymLexicon::load_tsv(*cfg.augmenter.lexicon_file);
  return default_lexicon();
}

struct LoadedSplits {
  Dataset corpus;
  Dataset labeled;
  Dataset unlabeled;
  Dataset val;
  Dataset test;
};

LoadedSplits load_splits(const RunConfig& cfg, const OutPaths& paths) {
  LoadedSplits s;
  s.corpus = load_dataset(cfg.input, cfg.format, cfg.labels);
  const RegimeManifest regime = read_regime_manifest(paths.regime());
  s.labeled = subset_by_ids(s.corpus, regime.labeled_ids);
  Dataset unl = subset_by_ids(s.corpus, regime.unlabeled_ids);
  for (auto& ex : unl.examples) {
    ex.hidden_label = ex.label;
    ex.label.reset();
  }
  s.unlabeled = std::move(unl);
  s.val = subset_by_ids(s.corpus, read_id_manifest(paths.val_ids()));
  s.test = subset_by_ids(s.corpus, read_id_manifest(paths.test_ids()));
  return s;
}

int cmd_prepare(const std::string& config_path, const std::optional<std::string>& input,
                const std::optional<std::string>& format,
                const std::optional<std::string>& out_dir,
                const std::optional<int>& labels_per_class) {
  RunConfig cfg = load_config(config_path);
  if (input) cfg.input = *input;
  if (format) cfg.format = parse_corpus_format(*format);
  if (out_dir) cfg.out_dir = *out_dir;
  if (labels_per_class) cfg.labels_per_class = *labels_per_class;
  cfg.validate();

  const OutPaths paths{cfg.out_dir};
  fs::create_directories(paths.manifest_dir());

  const Dataset corpus = load_dataset(cfg.input, cfg.format, cfg.labels);
  const uint64_t split_seed = derive_seed(cfg.train.master_seed, seed_stream::kSplit);
  const Splits splits = split_train_val_test(corpus, cfg.test_frac, cfg.val_frac, split_seed);

  RegimeSpec spec;
  spec.labels_per_class = cfg.labels_per_class;
  spec.seed = derive_seed(cfg.train.master_seed, seed_stream::kRegime);
  const Regime regime = make_regime(splits.train, spec);

  write_id_manifest(paths.train_ids(), dataset_ids(splits.train));
  write_id_manifest(paths.val_ids(), dataset_ids(splits.val));
  write_id_manifest(paths.test_ids(), dataset_ids(splits.test));
  write_regime_manifest(paths.regime(),
                        RegimeManifest{dataset_ids(regime.labeled), dataset_ids(regime.unlabeled)});

  std::cout << "prepared " << corpus.size() << " rows: train " << splits.train.size()
            << " (labeled " << regime.labeled.size() << ", unlabeled " << regime.unlabeled.size()
            << "), val " << splits.val.size() << ", test " << splits.test.size() << "\n";
  std::cout << "manifests written to " << paths.manifest_dir() << "\n";
  return 0;
}

int cmd_augment(const std::string& config_path, const std::optional<std::string>& strategy_flag,
                const std::string& cache_path, bool offline_mock,
                const std::optional<std::string>& out_dir) {
  RunConfig cfg = load_config(config_path);
  if (out_dir) cfg.out_dir = *out_dir;

  std::optional<Strategy> strategy = cfg.strategy;
  if (strategy_flag) strategy = parse_strategy(*strategy_flag);
  if (!strategy) {
    throw ConfigError("augment needs a strategy: pass --strategy ee|ce or set train.strategy");
  }
  if (!offline_mock && !api_key_from_env()) {
    throw AugmentError("missing credential: set the " + std::string(kApiKeyEnvVar) +
                       " environment variable or pass --offline-mock");
  }

  const OutPaths paths{cfg.out_dir};
  const Dataset corpus = load_dataset(cfg.input, cfg.format, cfg.labels);
  const RegimeManifest regime = read_regime_manifest(paths.regime());
  const Dataset unlabeled = subset_by_ids(corpus, regime.unlabeled_ids);

  if (const auto parent = fs::path(cache_path).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  AugmentationCache cache(cache_path);

  SynonymLexicon lexicon = effective_lexicon(cfg);
  HttplibTransport transport(cfg.augmenter.timeout_s);
  MockBackend mock(&lexicon);
  LlmBackend llm(transport);
  AugmentBackend& backend = offline_mock ? static_cast<AugmentBackend&>(mock)
                                         : static_cast<AugmentBackend&>(llm);

  std::atomic<size_t> next{0};
  std::atomic<size_t> fetched{0};
  std::atomic<size_t> cached{0};
  std::atomic<bool> failed{false};
  std::mutex err_mu;
  std::string first_error;

  const size_t total = unlabeled.size();
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= total || failed.load()) return;
      const Example& ex = unlabeled.examples[i];
      try {
        const std::string key =
            record_key(ex.text, *strategy, cfg.augmenter.model_id, cfg.augmenter.k);
        const bool hit = cache.find(key) != nullptr;
        get_or_fetch(ex.text, *strategy, cfg.augmenter, cache, backend);
        (hit ? cached : fetched).fetch_add(1);
        const size_t done = cached.load() + fetched.load();
        if (done % 500 == 0) {
          std::cout << "augment progress: " << done << "/" << total << "\n" << std::flush;
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!failed.exchange(true)) first_error = e.what();
        return;
      }
    }
  };

  const int threads = std::max(1, std::min<int>(cfg.augmenter.concurrency_limit,
                                                static_cast<int>(total > 0 ? total : 1)));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  if (failed.load()) {
    std::cerr << "error: " << first_error << " (partial cache preserved at " << cache_path << ")\n";
    return 1;
  }
  std::cout << fetched.load() << " fetched, " << cached.load() << " cached ("
            << strategy_name(*strategy) << ", model " << cfg.augmenter.model_id << ", cache "
            << cache_path << ")\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::optional<std::string>& cache_path,
              const std::optional<std::string>& out_dir, bool force) {
  RunConfig cfg = load_config(config_path);
  if (out_dir) cfg.out_dir = *out_dir;
  cfg.train.strategy = cfg.strategy;

  const OutPaths paths{cfg.out_dir};
  fs::create_directories(paths.dir);

  if (cfg.strategy && !cache_path) {
    throw ConfigError("train with a strategy needs --cache (or set train.strategy to none)");
  }

  const nlohmann::json manifest = build_run_manifest(cfg, cache_path);
  if (const auto conflict = manifest_conflict(paths.run_manifest(), manifest); conflict && !force) {
    throw ConfigError("refusing to overwrite run: " + *conflict + " (pass --force to override)");
  }

  const LoadedSplits s = load_splits(cfg, paths);
  Dataset vocab_corpus;
  vocab_corpus.label_space = cfg.labels;
  vocab_corpus.examples = s.labeled.examples;
  vocab_corpus.examples.insert(vocab_corpus.examples.end(), s.unlabeled.examples.begin(),
                               s.unlabeled.examples.end());
  const Vocab vocab = build_vocab(vocab_corpus, cfg.max_vocab, cfg.min_freq);

  EncoderDims dims{vocab.size(), cfg.embed_dim, cfg.hidden_dim, cfg.labels.size()};
  ModelParams init = init_params(dims, derive_seed(cfg.train.master_seed, seed_stream::kInit));

  SynonymLexicon lexicon = effective_lexicon(cfg);
  std::optional<AugmentationCache> cache;
  AugmentPlan plan;
  plan.lexicon = &lexicon;
  plan.weak_p = cfg.augmenter.weak_p;
  if (cfg.strategy) {
    cache.emplace(*cache_path);
    const Strategy strat = *cfg.strategy;
    plan.candidates = [&cfg, &cache, strat](const Example& ex) -> const std::vector<std::string>* {
      const std::string key = record_key(ex.text, strat, cfg.augmenter.model_id, cfg.augmenter.k);
      const AugmentationRecord* rec = cache->find(key);
      return rec ? &rec->candidates : nullptr;
    };
  }

  std::cout << "training on " << s.labeled.size() << " labeled / " << s.unlabeled.size()
            << " unlabeled rows, vocab " << vocab.size() << ", kernels "
            << kernels::ops().name << "\n";

  const FitResult result =
      fit(std::move(init), vocab, s.labeled, s.unlabeled, s.val, plan, cfg.train, paths.epochs_csv());

  save_checkpoint(result.best_params, vocab, paths.checkpoint());
  save_vocab_tsv(vocab, paths.vocab_tsv());
  write_run_manifest(paths.run_manifest(), manifest);

  std::cout << "best epoch " << result.best_epoch << " (val accuracy " << result.best_val_acc
            << ") after " << result.logs.size() << " epochs; checkpoint " << paths.checkpoint()
            << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& split, const std::optional<std::string>& out_dir) {
  RunConfig cfg = load_config(config_path);
  if (out_dir) cfg.out_dir = *out_dir;
  const OutPaths paths{cfg.out_dir};

  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Dataset corpus = load_dataset(cfg.input, cfg.format, cfg.labels);

  std::string manifest_path;
  if (split == "test") manifest_path = paths.test_ids();
  else if (split == "val") manifest_path = paths.val_ids();
  else if (split == "train") manifest_path = paths.train_ids();
  else throw ConfigError("unknown split \"" + split + "\" (expected train, val or test)");

  const Dataset data = subset_by_ids(corpus, read_id_manifest(manifest_path));
  const MetricsBundle m = evaluate(ck.params, ck.vocab, data);

  fs::create_directories(paths.dir);
  write_metrics_csv(m, cfg.labels, paths.metrics_csv());
  write_confusion_csv(m.confusion, cfg.labels, paths.confusion_csv());

  std::cout << split << " accuracy " << m.accuracy << ", macro-F1 " << m.macro_f1 << " over "
            << data.size() << " rows; wrote " << paths.metrics_csv() << "\n";
  return 0;
}

int cmd_report(const std::string& log_dir, const std::optional<std::string>& cache_path,
               const std::optional<std::string>& config_path,
               const std::optional<std::string>& out_dir, size_t top_n) {
  const std::string epochs_path = log_dir + "/epochs.csv";
  if (!fs::exists(epochs_path)) {
    throw ConfigError("no epochs.csv under " + log_dir + "; run train first");
  }
  const std::string dest = out_dir.value_or(log_dir);
  fs::create_directories(dest);

  const auto logs = read_epoch_log_csv(epochs_path);
  {
    std::ofstream out(dest + "/trends.csv", std::ios::trunc);
    if (!out) throw ConfigError("cannot write trends.csv under " + dest);
    out << "epoch,train_acc,val_acc,pseudo_acc\n";
    char buf[64];
    auto fmt = [&buf](double v) {
      snprintf(buf, sizeof(buf), "%.9g", v);
      return std::string(buf);
    };
    for (const auto& log : logs) {
      out << log.epoch << ',' << fmt(log.train_acc) << ',' << fmt(log.val_acc) << ',';
      if (log.pseudo_acc) out << fmt(*log.pseudo_acc);
      out << "\n";
    }
  }
  std::cout << "trends.csv: " << logs.size() << " epochs\n";

  if (config_path) {
    const RunConfig cfg = load_config(*config_path);
    const Dataset corpus = load_dataset(cfg.input, cfg.format, cfg.labels);
    std::vector<std::string> texts;
    texts.reserve(corpus.size());
    for (const auto& ex : corpus.examples) texts.push_back(ex.text);
    write_token_freq_csv(token_frequency_report(texts, top_n), dest + "/token_freq_original.csv");
    std::cout << "token_freq_original.csv: top " << top_n << " tokens\n";
  }
  if (cache_path) {
    AugmentationCache cache(*cache_path);
    std::vector<std::string> texts;
    cache.for_each([&texts](const AugmentationRecord& rec) {
      for (const auto& c : rec.candidates) texts.push_back(c);
    });
    write_token_freq_csv(token_frequency_report(texts, top_n), dest + "/token_freq_augmented.csv");
    std::cout << "token_freq_augmented.csv: top " << top_n << " tokens\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised sentiment classification with LLM-augmented consistency training"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "split a corpus and carve the labeled regime");
  std::string prep_config;
  std::optional<std::string> prep_input, prep_format, prep_out;
  std::optional<int> prep_lpc;
  prepare->add_option("--config", prep_config, "run config JSON")->required();
  prepare->add_option("--input", prep_input, "corpus file (overrides config)");
  prepare->add_option("--format", prep_format, "csv|tsv|jsonl (overrides config)");
  prepare->add_option("--out-dir", prep_out, "output directory (overrides config)");
  prepare->add_option("--labels-per-class", prep_lpc, "labeled regime size (overrides config)");

  // augment
  auto* augment = app.add_subcommand("augment", "populate the LLM augmentation cache");
  std::string aug_config, aug_cache;
  std::optional<std::string> aug_strategy, aug_out;
  bool aug_mock = false;
  augment->add_option("--config", aug_config, "run config JSON")->required();
  augment->add_option("--cache", aug_cache, "augmentation cache JSONL")->required();
  augment->add_option("--strategy", aug_strategy, "ee|ce (overrides config)");
  augment->add_option("--out-dir", aug_out, "directory holding the manifests");
  augment->add_flag("--offline-mock", aug_mock, "use the deterministic offline mock");

  // train
  auto* train = app.add_subcommand("train", "run the semi-supervised training loop");
  std::string train_config;
  std::optional<std::string> train_cache, train_out;
  bool train_force = false;
  train->add_option("--config", train_config, "run config JSON")->required();
  train->add_option("--cache", train_cache, "augmentation cache JSONL");
  train->add_option("--out-dir", train_out, "output directory (overrides config)");
  train->add_flag("--force", train_force, "ignore a conflicting run manifest");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string eval_config, eval_checkpoint, eval_split = "test";
  std::optional<std::string> eval_out;
  eval->add_option("--config", eval_config, "run config JSON")->required();
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
  eval->add_option("--split", eval_split, "train|val|test (default test)");
  eval->add_option("--out-dir", eval_out, "output directory (overrides config)");

  // report
  auto* report = app.add_subcommand("report", "emit trend and token-frequency tables");
  std::string report_dir;
  std::optional<std::string> report_cache, report_config, report_out;
  size_t report_top_n = 100;
  report->add_option("--log-dir", report_dir, "directory with epochs.csv")->required();
  report->add_option("--cache", report_cache, "augmentation cache for augmented-text frequencies");
  report->add_option("--config", report_config, "run config for original-corpus frequencies");
  report->add_option("--out-dir", report_out, "destination (default: --log-dir)");
  report->add_option("--top-n", report_top_n, "tokens to keep (default 100)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) return cmd_prepare(prep_config, prep_input, prep_format, prep_out, prep_lpc);
    if (augment->parsed()) return cmd_augment(aug_config, aug_strategy, aug_cache, aug_mock, aug_out);
    if (train->parsed()) return cmd_train(train_config, train_cache, train_out, train_force);
    if (eval->parsed()) return cmd_eval(eval_config, eval_checkpoint, eval_split, eval_out);
    if (report->parsed()) return cmd_report(report_dir, report_cache, report_config, report_out, report_top_n);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}
