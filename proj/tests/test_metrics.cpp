#include <algorithm>

#include "doctest.h"
#include "scr/metrics.hpp"
#include "scr/rng.hpp"
#include "scr/textutil.hpp"
#include "testutil.hpp"

using namespace scr;

TEST_CASE("accuracy basics") {
  CHECK(accuracy(std::vector<int>{0, 1, 2}, std::vector<int>{0, 1, 2}) == 1.0);
  CHECK(accuracy(std::vector<int>{1, 2, 0}, std::vector<int>{0, 1, 2}) == 0.0);
  CHECK(accuracy(std::vector<int>{0, 1, 2, 2}, std::vector<int>{0, 1, 2, 0}) == 0.75);
  CHECK_THROWS(accuracy(std::vector<int>{0}, std::vector<int>{0, 1}));
  CHECK_THROWS(accuracy(std::vector<int>{}, std::vector<int>{}));
}

TEST_CASE("macro_f1 hand case and conventions") {
  {
    const auto [f1, macro] = macro_f1(std::vector<int>{0, 1, 2}, std::vector<int>{0, 1, 2}, 3);
    for (const double f : f1) CHECK(f == 1.0);
    CHECK(macro == 1.0);
  }
  {
    // gold (0,0,1,2), pred (0,1,1,1)
    const auto [f1, macro] = macro_f1(std::vector<int>{0, 1, 1, 1}, std::vector<int>{0, 0, 1, 2}, 3);
    CHECK(f1[0] == doctest::Approx(2.0 * (1.0 * 0.5) / 1.5).epsilon(1e-12));
    CHECK(f1[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(f1[2] == 0.0);
    CHECK(macro == doctest::Approx((2.0 / 3.0 + 0.5) / 3.0).epsilon(1e-9));
    CHECK(macro == doctest::Approx(0.3889).epsilon(1e-3));
  }
  {
    // a class absent from both gold and predictions scores 0 by the 0/0 rule
    const auto [f1, macro] = macro_f1(std::vector<int>{0, 1}, std::vector<int>{0, 1}, 3);
    CHECK(f1[2] == 0.0);
    CHECK(macro == doctest::Approx(2.0 / 3.0));
  }
}

TEST_CASE("metrics equal brute-force recomputation on random pairs") {
  Rng rng(41);
  for (const int classes : {3, 5}) {
    for (int rep = 0; rep < 20; ++rep) {
      const size_t n = 30 + rng.below(100);
      std::vector<int> pred(n), gold(n);
      for (size_t i = 0; i < n; ++i) {
        // leave some classes degenerate on purpose
        pred[i] = static_cast<int>(rng.below(static_cast<uint64_t>(classes)));
        gold[i] = static_cast<int>(rng.below(static_cast<uint64_t>(std::max(1, classes - 1))));
      }
      const auto m = compute_metrics(pred, gold, classes);
      CHECK(m.accuracy == scrtest::naive_accuracy(pred, gold));
      const auto [nf1, nmacro] = scrtest::naive_macro_f1(pred, gold, classes);
      for (int c = 0; c < classes; ++c) {
        CHECK(m.per_class_f1[static_cast<size_t>(c)] == nf1[static_cast<size_t>(c)]);
      }
      CHECK(m.macro_f1 == nmacro);
      // accuracy == trace / total
      CHECK(m.accuracy ==
            doctest::Approx(double(m.confusion.trace()) / double(m.confusion.total())));

      // permutation invariance of macro-F1
      std::vector<size_t> perm(n);
      for (size_t i = 0; i < n; ++i) perm[i] = i;
      Rng shuffler(rep);
      shuffler.shuffle(perm);
      std::vector<int> pred2(n), gold2(n);
      for (size_t i = 0; i < n; ++i) {
        pred2[i] = pred[perm[i]];
        gold2[i] = gold[perm[i]];
      }
      CHECK(macro_f1(pred2, gold2, classes).second == m.macro_f1);
    }
  }
}

TEST_CASE("pseudo_label_accuracy restricts to gated rows") {
  const std::vector<int> pseudo{0, 1, 2, 0};
  const std::vector<int> gold{0, 1, 0, 1};
  {
    const std::vector<uint8_t> none{0, 0, 0, 0};
    CHECK(!pseudo_label_accuracy(pseudo, none, gold).has_value());
  }
  {
    const std::vector<uint8_t> all{1, 1, 1, 1};
    CHECK(pseudo_label_accuracy(std::vector<int>{0, 1, 0, 1}, all, gold).value() == 1.0);
  }
  {
    const std::vector<uint8_t> two{1, 0, 1, 0};
    CHECK(pseudo_label_accuracy(pseudo, two, gold).value() == 0.5);
  }
}

TEST_CASE("token_frequency_report counts, filters stopwords, breaks ties") {
  CHECK(token_frequency_report({}, 10).empty());
  {
    const auto r = token_frequency_report({"up up down"}, 1);
    REQUIRE(r.size() == 1);
    CHECK(r[0].first == "up");
    CHECK(r[0].second == 2);
  }
  {
    // stopwords never appear; ties sort lexicographically
    const auto r = token_frequency_report({"the market beat the forecast", "beat market"}, 10);
    REQUIRE(r.size() == 3);
    CHECK(r[0].first == "beat");
    CHECK(r[1].first == "market");
    CHECK(r[2].first == "forecast");
  }
  {
    // brute-force recount oracle on random corpora
    Rng rng(17);
    std::vector<std::string> texts;
    for (int i = 0; i < 40; ++i) {
      std::string t;
      const size_t n = 1 + rng.below(8);
      for (size_t j = 0; j < n; ++j) t += "w" + std::to_string(rng.below(12)) + " ";
      texts.push_back(t);
    }
    const auto got = token_frequency_report(texts, 1000);
    std::map<std::string, int64_t> naive;
    for (const auto& t : texts) {
      for (const auto& tok : scr::word_tokenize(t)) naive[tok]++;
    }
    int64_t total_got = 0;
    for (const auto& [tok, n] : got) {
      CHECK(naive.at(tok) == n);
      total_got += n;
    }
    int64_t total_naive = 0;
    for (const auto& [_, n] : naive) total_naive += n;
    CHECK(total_got == total_naive);
  }
}

TEST_CASE("metrics csv writers") {
  scrtest::TempDir tmp("metrics");
  const auto m = compute_metrics(std::vector<int>{0, 1, 2, 0}, std::vector<int>{0, 1, 2, 2}, 3);
  write_metrics_csv(m, LabelSpace::sentiment3(), tmp.file("metrics.csv"));
  const auto text = scrtest::read_file(tmp.file("metrics.csv"));
  CHECK(text.find("metric,value") != std::string::npos);
  CHECK(text.find("accuracy,0.75") != std::string::npos);
  CHECK(text.find("f1_positive") != std::string::npos);

  write_confusion_csv(m.confusion, LabelSpace::sentiment3(), tmp.file("confusion.csv"));
  const auto grid = scrtest::read_file(tmp.file("confusion.csv"));
  CHECK(grid.find("gold\\pred,positive,neutral,negative") != std::string::npos);
}
