#include <map>
#include <set>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "scr/augment.hpp"
#include "scr/rng.hpp"
#include "scr/textutil.hpp"
#include "testutil.hpp"

using namespace scr;
using scrtest::ScriptedTransport;
using scrtest::TempDir;

namespace {

SynonymLexicon rose_lexicon() {
  SynonymLexicon lex;
  lex.add("rose", {"climbed", "increased"});
  return lex;
}

size_t token_count(const std::string& s) { return split_whitespace(s).size(); }

}  // namespace

TEST_CASE("weak_augment no-ops") {
  SynonymLexicon empty;
  CHECK(weak_augment("profit rose sharply", empty, 1.0, 1) == "profit rose sharply");
  CHECK(weak_augment("profit rose sharply", rose_lexicon(), 0.0, 1) == "profit rose sharply");
  // original spacing kept byte for byte
  CHECK(weak_augment("profit  rose\tsharply ", empty, 1.0, 1) == "profit  rose\tsharply ");
}

TEST_CASE("weak_augment replaces by the documented draw protocol") {
  const auto lex = rose_lexicon();
  // independent enumeration of the rng stream: one uniform per token, one
  // below(n) per hit
  for (const uint64_t seed : {1ull, 2ull, 99ull, 12345ull}) {
    Rng rng(seed);
    rng.uniform();  // "profit": not in lexicon
    const double u_rose = rng.uniform();
    std::string expected = "profit rose sharply";
    if (u_rose < 1.0) {
      const char* syn[2] = {"climbed", "increased"};
      expected = std::string("profit ") + syn[rng.below(2)] + " sharply";
    }
    CHECK(weak_augment("profit rose sharply", lex, 1.0, seed) == expected);
    // stable per seed
    CHECK(weak_augment("profit rose sharply", lex, 1.0, seed) ==
          weak_augment("profit rose sharply", lex, 1.0, seed));
  }
}

TEST_CASE("weak_augment keeps first-letter casing and token count") {
  const auto lex = rose_lexicon();
  const std::string out = weak_augment("Rose rose ROSE", lex, 1.0, 4);
  const auto toks = split_whitespace(out);
  REQUIRE(toks.size() == 3);
  CHECK(std::isupper(static_cast<unsigned char>(toks[0][0])));
  CHECK(std::islower(static_cast<unsigned char>(toks[1][0])));
  // property: token count preserved on arbitrary texts
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    std::string text;
    const size_t n = 1 + rng.below(12);
    for (size_t t = 0; t < n; ++t) {
      text += (rng.uniform() < 0.3 ? "rose" : "tok" + std::to_string(rng.below(20)));
      if (t + 1 < n) text += " ";
    }
    CHECK(token_count(weak_augment(text, lex, 0.5, i)) == token_count(text));
  }
}

TEST_CASE("prompt templates render and validate") {
  const auto ce = build_prompt(Strategy::CE, "Sales dipped.", 3);
  CHECK(ce.user_text.find("Sales dipped.") != std::string::npos);
  CHECK(ce.user_text.find("3") != std::string::npos);
  CHECK(ce.user_text.find("{TEXT}") == std::string::npos);
  CHECK(ce.user_text.find("{K}") == std::string::npos);

  const auto ee = build_prompt(Strategy::EE, "Q3 revenue of $4.2M beat forecasts", 5);
  CHECK(ee.user_text.find("Q3 revenue of $4.2M beat forecasts") != std::string::npos);
  CHECK(ee.user_text.find("entit") != std::string::npos);
  CHECK(ee.user_text.find("numerical") != std::string::npos);
  // extraction is instructed before rewriting
  CHECK(ee.user_text.find("identify") < ee.user_text.find("rewrites"));

  // same embedded text in both strategies
  const auto ce2 = build_prompt(Strategy::CE, "Q3 revenue of $4.2M beat forecasts", 5);
  CHECK(ce2.user_text.find("Q3 revenue of $4.2M beat forecasts") != std::string::npos);

  // brace markers inside the source text must not eat the template slots
  const auto tricky = build_prompt(Strategy::CE, "costs {K} and {TEXT} rose", 4);
  CHECK(tricky.user_text.find("costs {K} and {TEXT} rose") != std::string::npos);
  CHECK(tricky.user_text.find("4") != std::string::npos);

  PromptTemplate bad;
  bad.user_template = "no placeholders here";
  CHECK_THROWS_AS(bad.validate(), AugmentError);
  PromptTemplate twice;
  twice.user_template = "{TEXT} {TEXT} {K}";
  CHECK_THROWS_AS(twice.validate(), AugmentError);

  CHECK_THROWS_AS(build_prompt(Strategy::CE, "   ", 3), AugmentError);
}

TEST_CASE("prompt template file override") {
  TempDir tmp("tmpl");
  scrtest::write_file(tmp.file("ce.txt"),
                      "[system]\ncustom system\n[user]\nrewrite {TEXT} into {K} lines\n");
  const auto t = PromptTemplate::load(Strategy::CE, tmp.file("ce.txt"));
  CHECK(t.system_text == "custom system");
  const auto r = render_prompt(t, "hello", 2);
  CHECK(r.user_text == "rewrite hello into 2 lines");

  scrtest::write_file(tmp.file("bad.txt"), "[system]\nonly system\n");
  CHECK_THROWS_AS(PromptTemplate::load(Strategy::CE, tmp.file("bad.txt")), AugmentError);
}

TEST_CASE("parse_candidate_list accepts the three markers and skips noise") {
  const auto c = parse_candidate_list("Sure, here you go:\n1. A\n2) B\n- C\nthanks!\n");
  REQUIRE(c.size() == 3);
  CHECK(c[0] == "A");
  CHECK(c[1] == "B");
  CHECK(c[2] == "C");
  CHECK(parse_candidate_list("no list at all").empty());
  CHECK(parse_candidate_list("1.   \n2. x").size() == 1);  // blank candidate dropped
}

TEST_CASE("query_llm parses, truncates and reports malformed replies") {
  AugmenterConfig cfg;
  cfg.k = 3;
  cfg.max_retries = 0;
  cfg.endpoint_url = "http://test.invalid";

  {
    ScriptedTransport t({ScriptedTransport::completion("1. A\n2. B\n3. C")});
    const auto c = query_llm(build_prompt(Strategy::CE, "x", 3), cfg, t);
    CHECK(c == std::vector<std::string>{"A", "B", "C"});
    CHECK(t.calls == 1);
    CHECK(t.last_path == "/v1/chat/completions");
    const auto body = nlohmann::json::parse(t.last_body);
    CHECK(body.at("model") == cfg.model_id);
    CHECK(body.at("messages").size() == 2);
    CHECK(body.at("messages")[0].at("role") == "system");
    CHECK(body.at("temperature").get<double>() == doctest::Approx(0.7));
  }
  {
    // extras truncated, trailing commentary discarded
    ScriptedTransport t({ScriptedTransport::completion("1. A\n2. B\n3. C\n4. D\nhope this helps")});
    const auto c = query_llm(build_prompt(Strategy::CE, "x", 3), cfg, t);
    CHECK(c.size() == 3);
    CHECK(c[2] == "C");
  }
  {
    ScriptedTransport t({ScriptedTransport::completion("A\nB")});
    try {
      query_llm(build_prompt(Strategy::CE, "x", 3), cfg, t);
      FAIL("expected AugmentError");
    } catch (const AugmentError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("malformed reply") != std::string::npos);
      CHECK(msg.find("A\nB") != std::string::npos);  // offending raw body included
    }
    CHECK(t.calls == 1);
  }
}

TEST_CASE("query_llm retries recover and count attempts") {
  AugmenterConfig cfg;
  cfg.k = 2;
  cfg.max_retries = 2;
  cfg.endpoint_url = "http://test.invalid";

  {
    ScriptedTransport t({ScriptedTransport::completion("nah"),
                         ScriptedTransport::completion("1. A\n2. B")});
    const auto c = query_llm(build_prompt(Strategy::CE, "x", 2), cfg, t);
    CHECK(c.size() == 2);
    CHECK(t.calls == 2);
  }
  {
    HttpResponse fail;
    fail.transport_error = "connection refused";
    ScriptedTransport t({fail});
    CHECK_THROWS_WITH_AS(query_llm(build_prompt(Strategy::CE, "x", 2), cfg, t),
                         doctest::Contains("transport failure"), AugmentError);
    CHECK(t.calls == 3);  // initial + 2 retries
  }
  {
    HttpResponse denied;
    denied.status = 401;
    denied.body = "unauthorized";
    ScriptedTransport t({denied});
    CHECK_THROWS_WITH_AS(query_llm(build_prompt(Strategy::CE, "x", 2), cfg, t),
                         doctest::Contains("401"), AugmentError);
  }
}

TEST_CASE("select_augmentation is a seeded uniform choice") {
  CHECK(select_augmentation({"only"}, 9) == "only");
  CHECK(select_augmentation({"a", "b", "c"}, 4) == select_augmentation({"a", "b", "c"}, 4));
  CHECK_THROWS_AS(select_augmentation({}, 1), AugmentError);

  const std::vector<std::string> four{"a", "b", "c", "d"};
  std::map<std::string, int> freq;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) freq[select_augmentation(four, 1000 + i)]++;
  for (const auto& [_, n] : freq) {
    const double f = double(n) / draws;
    CHECK(f > 0.23);
    CHECK(f < 0.27);
  }
}

TEST_CASE("mock_augment determinism and distinctness") {
  // no eligible tokens: unchanged
  SynonymLexicon empty;
  const auto none = mock_augment("zzz qqq", 1, 3, empty);
  REQUIRE(none.size() == 1);
  CHECK(none[0] == "zzz qqq");

  const auto a = mock_augment("profit rose sharply today", 4, 11);
  const auto b = mock_augment("profit rose sharply today", 4, 11);
  CHECK(a == b);

  // six tokens, three lexicon hits -> three distinct candidates
  const auto c = mock_augment("profit rose sharply whereas demand persisted", 3, 5);
  REQUIRE(c.size() == 3);
  CHECK(std::set<std::string>(c.begin(), c.end()).size() == 3);
  for (const auto& cand : c) CHECK(token_count(cand) == 6);
}

TEST_CASE("record keys normalize whitespace but keep case") {
  const auto k1 = record_key("a  b\tc", Strategy::CE, "m", 5);
  const auto k2 = record_key("  a b c ", Strategy::CE, "m", 5);
  const auto k3 = record_key("A b c", Strategy::CE, "m", 5);
  CHECK(k1 == k2);
  CHECK(k1 != k3);
  CHECK(record_key("a", Strategy::CE, "m", 5) != record_key("a", Strategy::EE, "m", 5));
  CHECK(record_key("a", Strategy::CE, "m", 5) != record_key("a", Strategy::CE, "m2", 5));
  CHECK(record_key("a", Strategy::CE, "m", 5) != record_key("a", Strategy::CE, "m", 6));
  CHECK(k1.size() == 64);  // sha-256 hex
}

TEST_CASE("cache round trip, hits and corruption reporting") {
  TempDir tmp("cache");
  const std::string path = tmp.file("cache.jsonl");
  AugmenterConfig cfg;
  cfg.k = 2;
  cfg.model_id = "test-model";

  {
    AugmentationCache cache(path);
    CHECK(cache.size() == 0);
    ScriptedTransport transport({ScriptedTransport::completion("1. one\n2. two")});
    LlmBackend backend(transport);
    const auto rec = get_or_fetch("profit rose", Strategy::CE, cfg, cache, backend);
    CHECK(transport.calls == 1);
    CHECK(rec.candidates == std::vector<std::string>{"one", "two"});
    CHECK(rec.key == record_key("profit rose", Strategy::CE, "test-model", 2));

    // warm hit: zero network activity
    const auto rec2 = get_or_fetch("profit rose", Strategy::CE, cfg, cache, backend);
    CHECK(transport.calls == 1);
    CHECK(rec2.candidates == rec.candidates);

    // whitespace-normalized key also hits
    const auto rec3 = get_or_fetch("profit  rose ", Strategy::CE, cfg, cache, backend);
    CHECK(transport.calls == 1);
    CHECK(rec3.key == rec.key);
  }
  {
    // reload from disk: field-identical record, key recomputable
    AugmentationCache cache(path);
    CHECK(cache.size() == 1);
    const auto* rec = cache.find(record_key("profit rose", Strategy::CE, "test-model", 2));
    REQUIRE(rec != nullptr);
    CHECK(rec->source_text == "profit rose");
    CHECK(rec->model_id == "test-model");
    CHECK(rec->candidates == std::vector<std::string>{"one", "two"});
    CHECK(record_key(rec->source_text, rec->strategy, rec->model_id,
                     static_cast<int>(rec->candidates.size())) == rec->key);
  }
  {
    // corrupt line reported with its number
    std::ofstream out(path, std::ios::app);
    out << "{broken json\n";
    out.close();
    try {
      AugmentationCache cache(path);
      FAIL("expected AugmentError");
    } catch (const AugmentError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
}

TEST_CASE("httplib transport round trip against a loopback server") {
  httplib::Server server;
  std::string seen_auth, seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_content("{\"choices\":[{\"message\":{\"content\":\"1. alpha\\n2. beta\"}}]}",
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  if (port <= 0) return;  // sandbox without loopback: nothing to test
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  setenv(kApiKeyEnvVar, "test-key-123", 1);
  AugmenterConfig cfg;
  cfg.k = 2;
  cfg.max_retries = 0;
  cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port);
  HttplibTransport transport(10.0);
  const auto c = query_llm(build_prompt(Strategy::CE, "profit rose", 2), cfg, transport);
  CHECK(c == std::vector<std::string>{"alpha", "beta"});
  CHECK(seen_auth == "Bearer test-key-123");
  CHECK(nlohmann::json::parse(seen_body).at("messages")[1].at("content").get<std::string>().find(
            "profit rose") != std::string::npos);

  // missing credential is refused before any bytes hit the wire
  unsetenv(kApiKeyEnvVar);
  CHECK_THROWS_WITH_AS(query_llm(build_prompt(Strategy::CE, "x", 2), cfg, transport),
                       doctest::Contains("SCR_API_KEY"), AugmentError);

  server.stop();
  thread.join();
}

TEST_CASE("mock pipeline is network free") {
  TempDir tmp("mockcache");
  AugmenterConfig cfg;
  cfg.k = 3;
  ScriptedTransport transport;  // would fail if ever called
  AugmentationCache cache(tmp.file("cache.jsonl"));
  MockBackend backend;
  for (const char* text : {"profit rose sharply", "sales fell on weak demand", "a flat quarter"}) {
    const auto rec = get_or_fetch(text, Strategy::EE, cfg, cache, backend);
    CHECK(rec.candidates.size() == 3);
  }
  CHECK(transport.calls == 0);
  CHECK(cache.size() == 3);
}

TEST_CASE("concurrent get_or_fetch keeps the cache consistent") {
  TempDir tmp("conc");
  const std::string path = tmp.file("cache.jsonl");
  AugmenterConfig cfg;
  cfg.k = 2;
  std::vector<std::string> texts;
  for (int i = 0; i < 24; ++i) texts.push_back("profit rose in month " + std::to_string(i));
  {
    AugmentationCache cache(path);
    MockBackend backend;
    std::vector<std::thread> pool;
    for (int t = 0; t < 4; ++t) {
      pool.emplace_back([&, t] {
        // overlapping ranges so threads race on the same keys
        for (size_t i = 0; i < texts.size(); ++i) {
          get_or_fetch(texts[(i + static_cast<size_t>(t) * 7) % texts.size()], Strategy::CE, cfg,
                       cache, backend);
        }
      });
    }
    for (auto& t : pool) t.join();
    CHECK(cache.size() == texts.size());
  }
  // one line per unique key, all reloadable
  AugmentationCache reloaded(path);
  CHECK(reloaded.size() == texts.size());
  const std::string content = scrtest::read_file(path);
  size_t lines = 0;
  for (const char c : content) {
    if (c == '\n') ++lines;
  }
  CHECK(lines == texts.size());
}
