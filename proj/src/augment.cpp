#include "scr/augment.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "scr/digest.hpp"
#include "scr/rng.hpp"
#include "scr/textutil.hpp"

namespace scr {
namespace {

using nlohmann::json;

std::string match_first_letter_case(const std::string& original, std::string replacement) {
  if (original.empty() || replacement.empty()) return replacement;
  const unsigned char o = static_cast<unsigned char>(original[0]);
  unsigned char& r = reinterpret_cast<unsigned char&>(replacement[0]);
  if (std::isupper(o) && std::islower(r)) r = static_cast<unsigned char>(std::toupper(r));
  else if (std::islower(o) && std::isupper(r)) r = static_cast<unsigned char>(std::tolower(r));
  return replacement;
}

std::string now_iso8601_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

// scheme://host[:port][/prefix] -> {scheme://host[:port], /prefix}
std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  const size_t scheme = url.find("://");
  if (scheme == std::string::npos) return {url, ""};
  const size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, ""};
  std::string prefix = url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, slash), prefix};
}

json record_to_json(const AugmentationRecord& rec) {
  return json{{"key", rec.key},
              {"source_text", rec.source_text},
              {"strategy", std::string(strategy_name(rec.strategy))},
              {"model_id", rec.model_id},
              {"k", rec.candidates.size()},
              {"candidates", rec.candidates},
              {"created_at", rec.created_at}};
}

AugmentationRecord record_from_json(const json& j) {
  AugmentationRecord rec;
  rec.key = j.at("key").get<std::string>();
  rec.source_text = j.at("source_text").get<std::string>();
  rec.strategy = parse_strategy(j.at("strategy").get<std::string>());
  rec.model_id = j.at("model_id").get<std::string>();
  rec.candidates = j.at("candidates").get<std::vector<std::string>>();
  rec.created_at = j.value("created_at", "");
  const size_t k = j.at("k").get<size_t>();
  if (k != rec.candidates.size() || rec.candidates.empty()) {
    throw AugmentError("record candidate count does not match k");
  }
  for (const auto& c : rec.candidates) {
    if (c.empty()) throw AugmentError("record contains an empty candidate");
  }
  return rec;
}

}  // namespace

const std::vector<std::string>* SynonymLexicon::find(std::string_view lowercase_token) const {
  const auto it = entries.find(std::string(lowercase_token));
  return it == entries.end() ? nullptr : &it->second;
}

void SynonymLexicon::add(std::string token, std::vector<std::string> synonyms) {
  token = to_lower_ascii(token);
  std::vector<std::string> clean;
  for (auto& s : synonyms) {
    if (s.empty()) continue;
    if (to_lower_ascii(s) == token) continue;  // no self-mapping
    if (std::find(clean.begin(), clean.end(), s) == clean.end()) clean.push_back(std::move(s));
  }
  if (clean.empty()) {
    throw AugmentError("lexicon entry \"" + token + "\" has no usable synonyms");
  }
  entries[std::move(token)] = std::move(clean);
}

SynonymLexicon SynonymLexicon::load_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw AugmentError("cannot open lexicon file: " + path);
  SynonymLexicon lex;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw AugmentError("lexicon " + path + " line " + std::to_string(lineno) +
                         ": expected token<TAB>syn1,syn2,...");
    }
    const std::string token = trim(line.substr(0, tab));
    std::vector<std::string> syns;
    std::stringstream ss(line.substr(tab + 1));
    std::string syn;
    while (std::getline(ss, syn, ',')) {
      syn = trim(syn);
      if (!syn.empty()) syns.push_back(syn);
    }
    try {
      lex.add(token, std::move(syns));
    } catch (const AugmentError& e) {
      throw AugmentError("lexicon " + path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return lex;
}

const SynonymLexicon& default_lexicon() {
  static const SynonymLexicon lex = [] {
    SynonymLexicon l;
    l.add("good", {"strong", "solid", "favorable"});
    l.add("great", {"excellent", "outstanding", "superb"});
    l.add("bad", {"poor", "weak", "unfavorable"});
    l.add("terrible", {"awful", "dreadful", "dismal"});
    l.add("rose", {"climbed", "increased", "gained"});
    l.add("fell", {"dropped", "declined", "slipped"});
    l.add("up", {"higher", "upward"});
    l.add("down", {"lower", "downward"});
    l.add("profit", {"earnings", "income"});
    l.add("loss", {"deficit", "shortfall"});
    l.add("growth", {"expansion", "increase"});
    l.add("decline", {"downturn", "drop"});
    l.add("strong", {"robust", "solid"});
    l.add("weak", {"soft", "fragile"});
    l.add("high", {"elevated", "steep"});
    l.add("low", {"depressed", "modest"});
    l.add("gain", {"increase", "improvement"});
    l.add("drop", {"fall", "slide"});
    l.add("positive", {"upbeat", "optimistic"});
    l.add("negative", {"downbeat", "pessimistic"});
    l.add("happy", {"pleased", "delighted"});
    l.add("sad", {"unhappy", "gloomy"});
    l.add("sharply", {"steeply", "markedly"});
    l.add("slightly", {"marginally", "modestly"});
    l.add("quickly", {"rapidly", "swiftly"});
    l.add("big", {"large", "sizable"});
    l.add("small", {"minor", "modest"});
    l.add("increased", {"grew", "expanded"});
    l.add("decreased", {"shrank", "contracted"});
    l.add("new", {"fresh", "recent"});
    return l;
  }();
  return lex;
}

std::string weak_augment(std::string_view text, const SynonymLexicon& lexicon,
                         double p, uint64_t seed) {
  if (p < 0.0 || p > 1.0) throw AugmentError("weak_augment: p must be in [0, 1]");
  Rng rng(seed);
  std::string out;
  out.reserve(text.size());
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    // copy whitespace run untouched
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) out.push_back(text[i++]);
    const size_t start = i;
    while (i < n && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == start) continue;
    const std::string token(text.substr(start, i - start));
    const double u = rng.uniform();  // one draw per token, hit or not
    const std::vector<std::string>* syns = lexicon.find(to_lower_ascii(token));
    if (syns != nullptr && u < p) {
      const size_t pick = static_cast<size_t>(rng.below(syns->size()));
      out += match_first_letter_case(token, (*syns)[pick]);
    } else {
      out += token;
    }
  }
  return out;
}

std::string_view strategy_name(Strategy s) { return s == Strategy::EE ? "ee" : "ce"; }

Strategy parse_strategy(std::string_view name) {
  if (name == "ee" || name == "EE") return Strategy::EE;
  if (name == "ce" || name == "CE") return Strategy::CE;
  throw AugmentError("unknown strategy: " + std::string(name) + " (expected ee or ce)");
}

void PromptTemplate::validate() const {
  auto count = [this](std::string_view needle) {
    size_t n = 0, pos = 0;
    while ((pos = user_template.find(needle, pos)) != std::string::npos) {
      ++n;
      pos += needle.size();
    }
    return n;
  };
  if (count("{TEXT}") != 1) throw AugmentError("user template must contain {TEXT} exactly once");
  if (count("{K}") != 1) throw AugmentError("user template must contain {K} exactly once");
}

PromptTemplate PromptTemplate::builtin(Strategy s) {
  PromptTemplate t;
  t.strategy = s;
  t.system_text =
      "You are a careful text augmentation assistant for sentiment datasets. "
      "Follow the instructions exactly and output only the requested list.";
  if (s == Strategy::EE) {
    t.user_template =
        "First identify every named entity and numerical value in the sentence "
        "between the triple quotes. Then write {K} rewrites of the sentence. "
        "Each rewrite must keep every identified entity and numerical value "
        "unchanged and must preserve the original meaning and sentiment. Do not "
        "add facts, do not visit external websites or cite outside sources, and "
        "do not output anything except the final numbered list of rewrites, one "
        "per line, in the form '1. <rewrite>'.\n\n\"\"\"{TEXT}\"\"\"";
  } else {
    t.user_template =
        "Write {K} paraphrases of the sentence between the triple quotes. Each "
        "paraphrase must preserve the meaning and the sentiment of the original "
        "while varying the wording and structure. Do not add facts, do not "
        "visit external websites or cite outside sources, and do not output "
        "anything except the numbered list of paraphrases, one per line, in the "
        "form '1. <paraphrase>'.\n\n\"\"\"{TEXT}\"\"\"";
  }
  t.validate();
  return t;
}

PromptTemplate PromptTemplate::load(Strategy s, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw AugmentError("cannot open prompt template: " + path);
  PromptTemplate t;
  t.strategy = s;
  std::string line;
  std::string* target = nullptr;
  std::string system_text, user_text;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == "[system]") {
      target = &system_text;
    } else if (line == "[user]") {
      target = &user_text;
    } else if (target != nullptr) {
      if (!target->empty()) target->push_back('\n');
      *target += line;
    }
  }
  if (system_text.empty() || user_text.empty()) {
    throw AugmentError("prompt template " + path + " must have [system] and [user] sections");
  }
  t.system_text = std::move(system_text);
  t.user_template = std::move(user_text);
  t.validate();
  return t;
}

RenderedPrompt render_prompt(const PromptTemplate& tmpl, std::string_view text, int k) {
  if (trim(text).empty()) throw AugmentError("cannot build a prompt for empty text");
  if (k < 1) throw AugmentError("candidate count must be >= 1");
  tmpl.validate();
  std::string user = tmpl.user_template;
  // {K} first: the source text may itself contain brace markers
  user.replace(user.find("{K}"), 3, std::to_string(k));
  user.replace(user.find("{TEXT}"), 6, std::string(text));
  return RenderedPrompt{tmpl.system_text, std::move(user)};
}

RenderedPrompt build_prompt(Strategy s, std::string_view text, int k) {
  return render_prompt(PromptTemplate::builtin(s), text, k);
}

std::string normalize_for_key(std::string_view text) { return collapse_whitespace(text); }

std::string record_key(std::string_view source_text, Strategy strategy,
                       std::string_view model_id, int k) {
  std::string material = normalize_for_key(source_text);
  material += '\n';
  material += strategy_name(strategy);
  material += '\n';
  material += model_id;
  material += '\n';
  material += std::to_string(k);
  return sha256_hex(material);
}

std::optional<std::string> api_key_from_env() {
  const char* v = std::getenv(kApiKeyEnvVar);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

HttpResponse HttplibTransport::post_json(const std::string& endpoint_url,
                                         const std::string& path, const std::string& body,
                                         const std::string& bearer_token) {
  if (bearer_token.empty()) {
    throw AugmentError("missing credential: set the " + std::string(kApiKeyEnvVar) +
                       " environment variable");
  }
  const auto [base, prefix] = split_endpoint(endpoint_url);
  httplib::Client client(base);
  const auto timeout_s = static_cast<time_t>(timeout_s_);
  const auto timeout_us = static_cast<time_t>((timeout_s_ - static_cast<double>(timeout_s)) * 1e6);
  client.set_connection_timeout(timeout_s, timeout_us);
  client.set_read_timeout(timeout_s, timeout_us);
  client.set_write_timeout(timeout_s, timeout_us);
  httplib::Headers headers{{"Authorization", "Bearer " + bearer_token}};

  auto res = client.Post(prefix + path, headers, body, "application/json");
  HttpResponse out;
  if (!res) {
    out.transport_error = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

std::vector<std::string> parse_candidate_list(std::string_view reply) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= reply.size()) {
    const size_t nl = reply.find('\n', pos);
    std::string_view line = reply.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? reply.size() + 1 : nl + 1;

    std::string trimmed = trim(line);
    if (trimmed.empty()) continue;

    std::string candidate;
    if (trimmed[0] == '-') {
      candidate = trim(std::string_view(trimmed).substr(1));
    } else if (std::isdigit(static_cast<unsigned char>(trimmed[0]))) {
      size_t d = 0;
      while (d < trimmed.size() && std::isdigit(static_cast<unsigned char>(trimmed[d]))) ++d;
      if (d < trimmed.size() && (trimmed[d] == '.' || trimmed[d] == ')')) {
        candidate = trim(std::string_view(trimmed).substr(d + 1));
      } else {
        continue;
      }
    } else {
      continue;  // preamble / commentary line
    }
    if (!candidate.empty()) out.push_back(std::move(candidate));
  }
  return out;
}

std::vector<std::string> query_llm(const RenderedPrompt& prompt,
                                   const AugmenterConfig& cfg, Transport& transport) {
  if (cfg.k < 1) throw AugmentError("query_llm: k must be >= 1");
  const json body = {
      {"model", cfg.model_id},
      {"messages",
       {{{"role", "system"}, {"content", prompt.system_text}},
        {{"role", "user"}, {"content", prompt.user_text}}}},
      {"temperature", cfg.temperature},
  };
  const std::string payload = body.dump();
  const std::string bearer = api_key_from_env().value_or("");

  std::string last_failure = "no attempt made";
  const int attempts = 1 + std::max(0, cfg.max_retries);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    const HttpResponse resp =
        transport.post_json(cfg.endpoint_url, "/v1/chat/completions", payload, bearer);
    if (!resp.transport_error.empty()) {
      last_failure = "transport failure: " + resp.transport_error;
      continue;
    }
    if (resp.status != 200) {
      last_failure = "http status " + std::to_string(resp.status) + "; body: " + resp.body;
      continue;
    }
    std::string content;
    try {
      const json reply = json::parse(resp.body);
      content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      last_failure = std::string("unparseable completion body: ") + e.what() + "; body: " + resp.body;
      continue;
    }
    auto candidates = parse_candidate_list(content);
    if (static_cast<int>(candidates.size()) >= cfg.k) {
      candidates.resize(static_cast<size_t>(cfg.k));
      return candidates;
    }
    last_failure = "malformed reply: parsed " + std::to_string(candidates.size()) + " of " +
                   std::to_string(cfg.k) + " candidates; body: " + content;
  }
  throw AugmentError("query_llm failed after " + std::to_string(attempts) +
                     " attempt(s); last failure: " + last_failure);
}

std::string select_augmentation(const std::vector<std::string>& candidates, uint64_t seed) {
  if (candidates.empty()) throw AugmentError("select_augmentation: empty candidate list");
  Rng rng(seed);
  return candidates[static_cast<size_t>(rng.below(candidates.size()))];
}

std::vector<std::string> mock_augment(std::string_view text, int k, uint64_t seed,
                                      const SynonymLexicon& lexicon) {
  if (k < 1) throw AugmentError("mock_augment: k must be >= 1");
  const std::vector<std::string> tokens = split_whitespace(text);

  struct Hit {
    size_t pos;
    const std::vector<std::string>* syns;
    size_t base;
  };
  std::vector<Hit> hits;
  std::vector<size_t> stops;
  Rng rng(seed);
  for (size_t i = 0; i < tokens.size(); ++i) {
    const std::string lower = to_lower_ascii(tokens[i]);
    if (const auto* syns = lexicon.find(lower)) {
      hits.push_back(Hit{i, syns, static_cast<size_t>(rng.below(syns->size()))});
    } else if (is_stopword(lower)) {
      stops.push_back(i);
    }
  }

  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(k));
  if (hits.empty() && stops.empty()) {
    out.assign(static_cast<size_t>(k), std::string(text));
    return out;
  }

  for (int j = 0; j < k; ++j) {
    std::vector<std::string> toks = tokens;
    // candidate index as mixed-radix digits over the synonym lists: distinct
    // j gives distinct synonym combinations while the lists have capacity
    size_t rem = static_cast<size_t>(j);
    for (const Hit& h : hits) {
      const size_t n = h.syns->size();
      const size_t digit = rem % n;
      rem /= n;
      const size_t idx = (h.base + digit) % n;
      toks[h.pos] = match_first_letter_case(tokens[h.pos], (*h.syns)[idx]);
    }
    // candidate-indexed rotation of non-lexicon stopwords
    if (stops.size() > 1) {
      std::vector<std::string> contents;
      contents.reserve(stops.size());
      for (const size_t s : stops) contents.push_back(toks[s]);
      for (size_t i = 0; i < stops.size(); ++i) {
        toks[stops[i]] = contents[(i + static_cast<size_t>(j)) % stops.size()];
      }
    }
    std::string joined;
    for (size_t i = 0; i < toks.size(); ++i) {
      if (i) joined.push_back(' ');
      joined += toks[i];
    }
    out.push_back(std::move(joined));
  }
  return out;
}

AugmentationCache::AugmentationCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;  // cold cache
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      AugmentationRecord rec = record_from_json(json::parse(line));
      records_[rec.key] = std::move(rec);
    } catch (const std::exception& e) {
      throw AugmentError("cache " + path_ + " line " + std::to_string(lineno) +
                         ": corrupt record: " + e.what());
    }
  }
}

const AugmentationRecord* AugmentationCache::find(const std::string& key) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = records_.find(key);
  return it == records_.end() ? nullptr : &it->second;
}

void AugmentationCache::append(const AugmentationRecord& rec) {
  std::lock_guard<std::mutex> lock(mu_);
  if (records_.count(rec.key)) return;  // lost a fetch race; keep the file clean
  std::ofstream out(path_, std::ios::app);
  if (!out) throw AugmentError("cannot append to cache: " + path_);
  out << record_to_json(rec).dump() << '\n';
  out.flush();
  if (!out) throw AugmentError("write error on cache: " + path_);
  records_[rec.key] = rec;
}

size_t AugmentationCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return records_.size();
}

PromptTemplate LlmBackend::template_for(Strategy s, const AugmenterConfig& cfg) const {
  if (s == Strategy::EE && cfg.ee_template_file) return PromptTemplate::load(s, *cfg.ee_template_file);
  if (s == Strategy::CE && cfg.ce_template_file) return PromptTemplate::load(s, *cfg.ce_template_file);
  return PromptTemplate::builtin(s);
}

std::vector<std::string> LlmBackend::fetch(const std::string& source_text, Strategy strategy,
                                           const AugmenterConfig& cfg) {
  const RenderedPrompt prompt = render_prompt(template_for(strategy, cfg), source_text, cfg.k);
  return query_llm(prompt, cfg, transport_);
}

std::vector<std::string> MockBackend::fetch(const std::string& source_text, Strategy strategy,
                                            const AugmenterConfig& cfg) {
  (void)strategy;  // the mock produces the same label-preserving rewrites for both
  const std::string digest = sha256_hex(normalize_for_key(source_text));
  const uint64_t text_seed = std::stoull(digest.substr(0, 16), nullptr, 16);
  const SynonymLexicon& lex = lexicon_ ? *lexicon_ : default_lexicon();
  return mock_augment(source_text, cfg.k, mix_seed(seed_stream::kMock, text_seed), lex);
}

AugmentationRecord get_or_fetch(const std::string& source_text, Strategy strategy,
                                const AugmenterConfig& cfg, AugmentationCache& cache,
                                AugmentBackend& backend) {
  const std::string key = record_key(source_text, strategy, cfg.model_id, cfg.k);
  if (const AugmentationRecord* hit = cache.find(key)) return *hit;

  AugmentationRecord rec;
  rec.key = key;
  rec.source_text = source_text;
  rec.strategy = strategy;
  rec.model_id = cfg.model_id;
  rec.candidates = backend.fetch(source_text, strategy, cfg);
  rec.created_at = now_iso8601_utc();
  if (static_cast<int>(rec.candidates.size()) != cfg.k) {
    throw AugmentError("backend returned " + std::to_string(rec.candidates.size()) +
                       " candidates, expected " + std::to_string(cfg.k));
  }
  for (const auto& c : rec.candidates) {
    if (c.empty()) throw AugmentError("backend returned an empty candidate");
  }
  cache.append(rec);
  if (const AugmentationRecord* stored = cache.find(key)) return *stored;
  return rec;
}

}  // namespace scr
