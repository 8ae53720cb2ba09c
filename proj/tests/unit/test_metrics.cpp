#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "edo/metrics.hpp"
#include "edo/rng.hpp"

namespace edo {
namespace {

TEST(DistinctN, HandExamples) {
  EXPECT_DOUBLE_EQ(distinct_n(std::vector<TokenSeq>{{1, 2, 3, 4, 5, 6}}, 4), 1.0);
  EXPECT_DOUBLE_EQ(distinct_n(std::vector<TokenSeq>{{0, 1, 0, 1, 0, 1}}, 2), 0.4);
  EXPECT_DOUBLE_EQ(distinct_n(std::vector<TokenSeq>{{1, 2, 3, 4, 5}, {1, 2, 3, 4, 5}}, 4), 0.5);
  // Short sequences contribute nothing.
  EXPECT_DOUBLE_EQ(distinct_n(std::vector<TokenSeq>{{1, 2}, {1, 2, 3, 4}}, 3), 1.0);
}

TEST(DistinctN, NoNgramsIsAnError) {
  try {
    distinct_n(std::vector<TokenSeq>{{1, 2}, {}}, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientTokens);
  }
}

TEST(DistinctN, PermutationInvariantAndDuplicatesNeverHelp) {
  RngStream rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TokenSeq> corpus(2 + rng.index(6));
    for (auto& s : corpus) {
      s.resize(4 + rng.index(5));
      for (auto& t : s) t = static_cast<Token>(rng.index(3));
    }
    const double base = distinct_n(corpus, 4);
    auto shuffled = corpus;
    rng.shuffle(std::span<TokenSeq>(shuffled));
    EXPECT_DOUBLE_EQ(distinct_n(shuffled, 4), base);
    auto extended = corpus;
    extended.push_back(corpus[rng.index(corpus.size())]);
    EXPECT_LE(distinct_n(extended, 4), base);
  }
}

DecodeResult decoded(TokenSeq tokens) {
  DecodeResult r;
  Candidate c;
  c.response.tokens = std::move(tokens);
  r.pool.push_back(c);
  return r;
}

TEST(Accuracy, FractionOfVerifiedChoices) {
  TaskSpec s;
  s.modulus = 5;
  s.n_train = 1;
  s.n_eval = 10;
  const Task task = make_task(s);
  const Vocab& v = task.vocab();
  std::vector<DecodeResult> right, mixed;
  for (std::size_t i = 0; i < task.eval().size(); ++i) {
    const Token truth = task.eval()[i].ground_truth[0];
    const Token wrong = static_cast<Token>((truth + 1) % 5);
    right.push_back(decoded({v.mark(), truth, v.end()}));
    mixed.push_back(decoded({v.mark(), i < 7 ? truth : wrong, v.end()}));
  }
  EXPECT_DOUBLE_EQ(accuracy(right, task.eval(), task), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(mixed, task.eval(), task), 0.7);
  std::vector<DecodeResult> none;
  for (std::size_t i = 0; i < task.eval().size(); ++i) none.push_back(decoded({0, 0}));
  EXPECT_DOUBLE_EQ(accuracy(none, task.eval(), task), 0.0);
  try {
    accuracy(std::span(right).first(3), task.eval(), task);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidInput);
  }
}

MetricsRecord record(double greedy, double sc, double bon, double search) {
  MetricsRecord r;
  r.mode = "ed-grpo";
  r.entropy = 1.2345678901234;
  r.accuracy_greedy = greedy;
  r.accuracy_sc = sc;
  r.accuracy_bon = bon;
  r.accuracy_search = search;
  r.distinct = {0.1, 0.2, 0.3, 1.0 / 3.0};
  r.pairs_emitted = 12;
  r.groups_kept = 5;
  return r;
}

TEST(AssembleReport, DeltasOverGreedy) {
  const std::vector<MetricsRecord> one = {record(0.5, 0.5, 0.5, 0.5)};
  const auto same = assemble_report(one);
  EXPECT_EQ(same[0].delta_sc, 0.0);
  EXPECT_EQ(same[0].delta_bon, 0.0);
  EXPECT_EQ(same[0].delta_search, 0.0);

  const std::vector<MetricsRecord> table = {record(0.728, 0.762, 0.70, 0.8)};
  const auto rows = assemble_report(table);
  EXPECT_NEAR(rows[0].delta_sc, 0.034, 1e-12);
  EXPECT_NEAR(rows[0].delta_bon + rows[0].record.accuracy_greedy, rows[0].record.accuracy_bon, 1e-12);
  EXPECT_NEAR(rows[0].delta_search + rows[0].record.accuracy_greedy, rows[0].record.accuracy_search, 1e-12);
}

TEST(MetricsCsv, RoundTripsAtTwelveDigits) {
  std::vector<MetricsRecord> rows = {record(0.25, 0.3125, 0.1, std::numeric_limits<double>::quiet_NaN()),
                                     record(1.0 / 7.0, 2.0 / 3.0, 0.0, 1.0)};
  rows[1].iteration = 3;
  std::stringstream buf;
  write_metrics_csv(buf, rows);
  const std::string text = buf.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "iteration,mode,entropy,accuracy_greedy,accuracy_sc,accuracy_bon,accuracy_search,distinct_1,distinct_2,"
            "distinct_3,distinct_4,pairs_emitted,groups_kept");
  std::stringstream in(text);
  const auto back = read_metrics_csv(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(std::isnan(back[0].accuracy_search));
  EXPECT_EQ(back[1].iteration, 3u);
  EXPECT_NEAR(back[1].accuracy_greedy, 1.0 / 7.0, 1e-12);
  EXPECT_NEAR(back[0].entropy, 1.2345678901234, 1e-11);
  // Writing what was read reproduces the bytes.
  std::stringstream again;
  write_metrics_csv(again, back);
  EXPECT_EQ(again.str(), text);
}

TEST(FormatReal, TwelveSignificantDigits) {
  EXPECT_EQ(format_real(0.1), "0.1");
  EXPECT_EQ(format_real(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(format_real(std::numeric_limits<double>::quiet_NaN()), "nan");
}

TEST(Spearman, KnownValues) {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  EXPECT_NEAR(spearman(x, std::vector<double>{2, 4, 6, 8, 10}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(x, std::vector<double>{5, 4, 3, 2, 1}), -1.0, 1e-15);
  // Ties share average ranks: y ranks (1, 2.5, 2.5, 4, 5).
  EXPECT_NEAR(spearman(x, std::vector<double>{1, 2, 2, 3, 4}), 0.9746794344808963, 1e-12);
  EXPECT_TRUE(std::isnan(spearman(x, std::vector<double>{1, 1, 1, 1, 1})));
}

}  // namespace
}  // namespace edo
