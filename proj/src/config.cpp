#include "scr/config.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include "scr/digest.hpp"
#include "scr/version.hpp"

namespace scr {
namespace {

using nlohmann::json;

std::string now_iso8601_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

LossKind loss_from_json(const json& t) {
  const std::string name = t.value("loss", "ce");
  if (name == "ce") return LossKind::ce();
  if (name == "focal") return LossKind::focal(t.value("focal_gamma", 2.0));
  if (name == "asymmetric") {
    return LossKind::asymmetric(t.value("asym_gamma_pos", 0.0), t.value("asym_gamma_neg", 4.0),
                                t.value("asym_margin", 0.05));
  }
  throw ConfigError("train.loss must be one of ce, focal, asymmetric (got \"" + name + "\")");
}

json loss_to_json(const LossKind& k) {
  json out;
  switch (k.kind) {
    case LossKind::Kind::CE:
      out["loss"] = "ce";
      break;
    case LossKind::Kind::Focal:
      out["loss"] = "focal";
      out["focal_gamma"] = k.focal_gamma;
      break;
    case LossKind::Kind::Asymmetric:
      out["loss"] = "asymmetric";
      out["asym_gamma_pos"] = k.asym_gamma_pos;
      out["asym_gamma_neg"] = k.asym_gamma_neg;
      out["asym_margin"] = k.asym_margin;
      break;
  }
  return out;
}

std::optional<std::string> file_digest_or_none(const std::string& path) {
  std::ifstream probe(path);
  if (!probe) return std::nullopt;
  probe.close();
  return sha256_hex_file(path);
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": invalid JSON: " + e.what());
  }
  return from_json(j);
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  try {
    if (j.contains("corpus")) {
      const auto& c = j.at("corpus");
      cfg.input = c.value("input", cfg.input);
      if (c.contains("format")) cfg.format = parse_corpus_format(c.at("format").get<std::string>());
      if (c.contains("labels")) cfg.labels.names = c.at("labels").get<std::vector<std::string>>();
      cfg.test_frac = c.value("test_frac", cfg.test_frac);
      cfg.val_frac = c.value("val_frac", cfg.val_frac);
    }
    if (j.contains("regime")) {
      cfg.labels_per_class = j.at("regime").value("labels_per_class", cfg.labels_per_class);
    }
    if (j.contains("augmenter")) {
      const auto& a = j.at("augmenter");
      auto& ag = cfg.augmenter;
      ag.k = a.value("k", ag.k);
      ag.model_id = a.value("model_id", ag.model_id);
      ag.endpoint_url = a.value("endpoint_url", ag.endpoint_url);
      ag.temperature = a.value("temperature", ag.temperature);
      ag.max_retries = a.value("max_retries", ag.max_retries);
      ag.concurrency_limit = a.value("concurrency_limit", ag.concurrency_limit);
      ag.timeout_s = a.value("timeout_s", ag.timeout_s);
      ag.weak_p = a.value("weak_p", ag.weak_p);
      if (a.contains("lexicon_file")) ag.lexicon_file = a.at("lexicon_file").get<std::string>();
      if (a.contains("ee_template_file")) ag.ee_template_file = a.at("ee_template_file").get<std::string>();
      if (a.contains("ce_template_file")) ag.ce_template_file = a.at("ce_template_file").get<std::string>();
    }
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      cfg.max_vocab = e.value("max_vocab", cfg.max_vocab);
      cfg.min_freq = e.value("min_freq", cfg.min_freq);
      cfg.embed_dim = e.value("dim", cfg.embed_dim);
      cfg.hidden_dim = e.value("hidden", cfg.hidden_dim);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      auto& tr = cfg.train;
      tr.tau = t.value("tau", tr.tau);
      tr.batch_labeled = t.value("batch_labeled", tr.batch_labeled);
      tr.batch_unlabeled = t.value("batch_unlabeled", tr.batch_unlabeled);
      tr.opt.lr = t.value("lr", tr.opt.lr);
      tr.opt.beta1 = t.value("beta1", tr.opt.beta1);
      tr.opt.beta2 = t.value("beta2", tr.opt.beta2);
      tr.opt.eps = t.value("eps", tr.opt.eps);
      tr.opt.weight_decay = t.value("weight_decay", tr.opt.weight_decay);
      tr.max_epochs = t.value("max_epochs", tr.max_epochs);
      tr.patience = t.value("patience", tr.patience);
      tr.master_seed = t.value("master_seed", tr.master_seed);
      tr.use_shrink = t.value("shrink", tr.use_shrink);
      tr.loss_kind = loss_from_json(t);
      if (t.contains("strategy")) {
        const std::string s = t.at("strategy").get<std::string>();
        if (s == "none") {
          cfg.strategy = std::nullopt;
        } else {
          cfg.strategy = parse_strategy(s);
        }
      }
    }
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

json RunConfig::to_json() const {
  json t = loss_to_json(train.loss_kind);
  t["tau"] = train.tau;
  t["batch_labeled"] = train.batch_labeled;
  t["batch_unlabeled"] = train.batch_unlabeled;
  t["lr"] = train.opt.lr;
  t["beta1"] = train.opt.beta1;
  t["beta2"] = train.opt.beta2;
  t["eps"] = train.opt.eps;
  t["weight_decay"] = train.opt.weight_decay;
  t["max_epochs"] = train.max_epochs;
  t["patience"] = train.patience;
  t["master_seed"] = train.master_seed;
  t["shrink"] = train.use_shrink;
  t["strategy"] = strategy ? std::string(strategy_name(*strategy)) : "none";

  json a;
  a["k"] = augmenter.k;
  a["model_id"] = augmenter.model_id;
  a["endpoint_url"] = augmenter.endpoint_url;
  a["temperature"] = augmenter.temperature;
  a["max_retries"] = augmenter.max_retries;
  a["concurrency_limit"] = augmenter.concurrency_limit;
  a["timeout_s"] = augmenter.timeout_s;
  a["weak_p"] = augmenter.weak_p;
  if (augmenter.lexicon_file) a["lexicon_file"] = *augmenter.lexicon_file;
  if (augmenter.ee_template_file) a["ee_template_file"] = *augmenter.ee_template_file;
  if (augmenter.ce_template_file) a["ce_template_file"] = *augmenter.ce_template_file;

  return json{{"corpus",
               {{"input", input},
                {"format", std::string(corpus_format_name(format))},
                {"labels", labels.names},
                {"test_frac", test_frac},
                {"val_frac", val_frac}}},
              {"regime", {{"labels_per_class", labels_per_class}}},
              {"augmenter", a},
              {"encoder",
               {{"max_vocab", max_vocab},
                {"min_freq", min_freq},
                {"dim", embed_dim},
                {"hidden", hidden_dim}}},
              {"train", t},
              {"out_dir", out_dir}};
}

void RunConfig::validate() const {
  labels.validate();
  if (input.empty()) throw ConfigError("corpus.input is required");
  if (!(test_frac > 0.0 && test_frac < 1.0)) throw ConfigError("corpus.test_frac must be in (0, 1)");
  if (!(val_frac >= 0.0 && val_frac < 1.0)) throw ConfigError("corpus.val_frac must be in [0, 1)");
  if (labels_per_class < 1) throw ConfigError("regime.labels_per_class must be >= 1");
  if (augmenter.k < 1) throw ConfigError("augmenter.k must be >= 1");
  if (augmenter.max_retries < 0) throw ConfigError("augmenter.max_retries must be >= 0");
  if (augmenter.concurrency_limit < 1) throw ConfigError("augmenter.concurrency_limit must be >= 1");
  if (!(augmenter.weak_p >= 0.0 && augmenter.weak_p <= 1.0)) {
    throw ConfigError("augmenter.weak_p must be in [0, 1]");
  }
  if (embed_dim < 1 || hidden_dim < 1) throw ConfigError("encoder dims must be positive");
  if (max_vocab < 2) throw ConfigError("encoder.max_vocab must be >= 2");
  if (!(train.tau > 0.0 && train.tau <= 1.0)) throw ConfigError("train.tau must be in (0, 1]");
  if (train.batch_labeled < 1 || train.batch_unlabeled < 1) {
    throw ConfigError("train batch sizes must be >= 1");
  }
  if (train.opt.lr <= 0.0) throw ConfigError("train.lr must be > 0");
  if (train.max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (train.patience < 1) throw ConfigError("train.patience must be >= 1");
  if (out_dir.empty()) throw ConfigError("out_dir is required");
}

json build_run_manifest(const RunConfig& cfg, const std::optional<std::string>& cache_path) {
  json inputs;
  if (const auto d = file_digest_or_none(cfg.input)) inputs["corpus"] = *d;
  if (cache_path) {
    if (const auto d = file_digest_or_none(*cache_path)) inputs["cache"] = *d;
  }
  json seeds;
  seeds["master"] = cfg.train.master_seed;
  seeds["split"] = derive_seed(cfg.train.master_seed, seed_stream::kSplit);
  seeds["regime"] = derive_seed(cfg.train.master_seed, seed_stream::kRegime);
  seeds["init"] = derive_seed(cfg.train.master_seed, seed_stream::kInit);
  return json{{"version", kVersion},
              {"created_at", now_iso8601_utc()},
              {"config", cfg.to_json()},
              {"seeds", seeds},
              {"input_digests", inputs}};
}

void write_run_manifest(const std::string& path, const json& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write run manifest: " + path);
  out << manifest.dump(2) << "\n";
}

std::optional<std::string> manifest_conflict(const std::string& path, const json& fresh) {
  std::ifstream in(path);
  if (!in) return std::nullopt;  // first run into this directory
  json previous;
  try {
    in >> previous;
  } catch (const json::exception&) {
    return "existing run manifest is unreadable: " + path;
  }
  const json prev_inputs = previous.value("input_digests", json::object());
  const json new_inputs = fresh.value("input_digests", json::object());
  for (const auto& [name, digest] : new_inputs.items()) {
    if (prev_inputs.contains(name) && prev_inputs.at(name) != digest) {
      return "input \"" + name + "\" changed since the recorded run (digest " +
             prev_inputs.at(name).get<std::string>().substr(0, 12) + "... -> " +
             digest.get<std::string>().substr(0, 12) + "...)";
    }
  }
  if (previous.value("config", json::object()) != fresh.value("config", json::object())) {
    return std::string("run configuration differs from the recorded manifest");
  }
  return std::nullopt;
}

}  // namespace scr
