#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace scr {

class AugmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// lowercase token -> synonym list; no token maps to itself, lists non-empty
struct SynonymLexicon {
  std::unordered_map<std::string, std::vector<std::string>> entries;

  const std::vector<std::string>* find(std::string_view lowercase_token) const;
  void add(std::string token, std::vector<std::string> synonyms);
  size_t size() const { return entries.size(); }

  // TSV lines: token<TAB>syn1,syn2,...
  static SynonymLexicon load_tsv(const std::string& path);
};

// Small builtin lexicon so weak augmentation and the offline mock work out of
// the box.
const SynonymLexicon& default_lexicon();

// Weak view: each whitespace token whose lowercase form is in the lexicon is
// independently replaced with probability p by a uniformly chosen synonym,
// keeping the original first-letter casing. Token count is preserved exactly.
// Draw protocol (deterministic under seed): tokens left to right, one
// uniform() draw each; a hit takes one below(n_synonyms) draw.
std::string weak_augment(std::string_view text, const SynonymLexicon& lexicon,
                         double p, uint64_t seed);

enum class Strategy { EE, CE };
std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

struct PromptTemplate {
  Strategy strategy = Strategy::CE;
  std::string system_text;
  std::string user_template;  // must contain {TEXT} and {K} exactly once

  void validate() const;
  static PromptTemplate builtin(Strategy s);
  // Editable asset override. File format: a "[system]" line, system text,
  // a "[user]" line, then the user template.
  static PromptTemplate load(Strategy s, const std::string& path);
};

struct RenderedPrompt {
  std::string system_text;
  std::string user_text;
};

RenderedPrompt render_prompt(const PromptTemplate& tmpl, std::string_view text, int k);
// builtin template for the strategy
RenderedPrompt build_prompt(Strategy s, std::string_view text, int k);

struct AugmenterConfig {
  int k = 5;
  std::string model_id = "llama-2-7b-chat";
  std::string endpoint_url;  // e.g. http://127.0.0.1:8080
  double temperature = 0.7;
  int max_retries = 2;
  int concurrency_limit = 1;
  double timeout_s = 60.0;
  double weak_p = 0.1;
  std::optional<std::string> lexicon_file;
  std::optional<std::string> ee_template_file;
  std::optional<std::string> ce_template_file;
};

struct AugmentationRecord {
  std::string key;  // hex digest of (normalized source text, strategy, model id, k)
  std::string source_text;
  Strategy strategy = Strategy::CE;
  std::string model_id;
  std::vector<std::string> candidates;
  std::string created_at;  // ISO-8601 UTC
};

// trim + collapse internal whitespace; case preserved (it can carry sentiment)
std::string normalize_for_key(std::string_view text);
std::string record_key(std::string_view source_text, Strategy strategy,
                       std::string_view model_id, int k);

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string transport_error;  // non-empty when the request never completed

  bool ok() const { return transport_error.empty() && status == 200; }
};

// Wire abstraction so tests can inject scripted/counting transports.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post_json(const std::string& endpoint_url,
                                 const std::string& path, const std::string& body,
                                 const std::string& bearer_token) = 0;
};

// cpp-httplib transport. Reads the credential from SCR_API_KEY; requests fail
// with an authentication error when it is unset.
class HttplibTransport final : public Transport {
 public:
  explicit HttplibTransport(double timeout_s = 60.0) : timeout_s_(timeout_s) {}
  HttpResponse post_json(const std::string& endpoint_url, const std::string& path,
                         const std::string& body, const std::string& bearer_token) override;

 private:
  double timeout_s_;
};

inline constexpr const char* kApiKeyEnvVar = "SCR_API_KEY";
std::optional<std::string> api_key_from_env();

// Accepts "N.", "N)" and "-" list markers, one candidate per line; anything
// else (preambles, trailing commentary) is skipped.
std::vector<std::string> parse_candidate_list(std::string_view reply);

// Chat-completion round trip: POST {model, messages[system,user], temperature}
// to /v1/chat/completions, parse the reply as a numbered list, retry up to
// max_retries while fewer than k well-formed candidates come back. Returns
// exactly k candidates (extras truncated).
std::vector<std::string> query_llm(const RenderedPrompt& prompt,
                                   const AugmenterConfig& cfg, Transport& transport);

// Uniform pick from the candidate set (Rand over the k rewrites).
std::string select_augmentation(const std::vector<std::string>& candidates,
                                uint64_t seed);

// Offline deterministic stand-in for the LLM: synonym replacement with p=1
// (candidate-indexed choice) plus candidate-indexed rotation of non-lexicon
// stopwords. Never deletes tokens; candidates are pairwise distinct whenever
// the lexicon offers enough variety (the builtin one does).
std::vector<std::string> mock_augment(std::string_view text, int k, uint64_t seed,
                                      const SynonymLexicon& lexicon = default_lexicon());

// Append-only JSONL record store; one AugmentationRecord per line.
class AugmentationCache {
 public:
  explicit AugmentationCache(std::string path);

  const AugmentationRecord* find(const std::string& key) const;
  void append(const AugmentationRecord& rec);
  size_t size() const;
  const std::string& path() const { return path_; }

  template <class Fn>
  void for_each(Fn&& fn) const {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& [key, rec] : records_) fn(rec);
  }

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, AugmentationRecord> records_;
};

// Candidate source behind get_or_fetch.
class AugmentBackend {
 public:
  virtual ~AugmentBackend() = default;
  virtual std::vector<std::string> fetch(const std::string& source_text,
                                         Strategy strategy,
                                         const AugmenterConfig& cfg) = 0;
};

class LlmBackend final : public AugmentBackend {
 public:
  explicit LlmBackend(Transport& transport) : transport_(transport) {}
  std::vector<std::string> fetch(const std::string& source_text, Strategy strategy,
                                 const AugmenterConfig& cfg) override;

 private:
  PromptTemplate template_for(Strategy s, const AugmenterConfig& cfg) const;
  Transport& transport_;
};

class MockBackend final : public AugmentBackend {
 public:
  explicit MockBackend(const SynonymLexicon* lexicon = nullptr) : lexicon_(lexicon) {}
  std::vector<std::string> fetch(const std::string& source_text, Strategy strategy,
                                 const AugmenterConfig& cfg) override;

 private:
  const SynonymLexicon* lexicon_;
};

// Cache hit -> stored record, zero backend activity. Miss -> fetch, append
// atomically, return.
AugmentationRecord get_or_fetch(const std::string& source_text, Strategy strategy,
                                const AugmenterConfig& cfg, AugmentationCache& cache,
                                AugmentBackend& backend);

}  // namespace scr
