#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "edo/common.hpp"
#include "edo/tasks.hpp"
#include "edo/ttc.hpp"

namespace edo {

/// Distinct n-grams over total n-grams, pooled across the corpus. Sequences
/// shorter than n contribute nothing; throws kInsufficientTokens if no
/// sequence does.
double distinct_n(std::span<const TokenSeq> corpus, std::size_t n);

/// Fraction of decode results whose chosen response verifies against the
/// aligned prompt. Throws kInvalidInput on length mismatch or empty input.
double accuracy(std::span<const DecodeResult> results, std::span<const Prompt> prompts, const Task& task);

/// Accuracies that were not measured are NaN and serialize as "nan".
struct MetricsRecord {
  std::size_t iteration = 0;
  std::string mode;
  double entropy = 0.0;
  double accuracy_greedy = 0.0;
  double accuracy_sc = 0.0;
  double accuracy_bon = 0.0;
  double accuracy_search = 0.0;
  std::array<double, 4> distinct{};  ///< n = 1..4
  std::size_t pairs_emitted = 0;
  std::size_t groups_kept = 0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

struct ReportRow {
  MetricsRecord record;
  double delta_sc = 0.0;
  double delta_bon = 0.0;
  double delta_search = 0.0;
};

/// Per-strategy deltas over greedy decoding for every record.
std::vector<ReportRow> assemble_report(std::span<const MetricsRecord> records);

/// Fixed column order: iteration, mode, entropy, accuracy_greedy, accuracy_sc,
/// accuracy_bon, accuracy_search, distinct_1..distinct_4, pairs_emitted,
/// groups_kept. Reals are written with 12 significant digits.
void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> records);
std::vector<MetricsRecord> read_metrics_csv(std::istream& in);

/// Accuracy/delta summary as JSON, one object per record.
void write_report_json(std::ostream& out, std::span<const ReportRow> rows);

/// Shortest round-trippable-at-12-digits rendering used by every CSV writer.
std::string format_real(double v);

/// Spearman rank correlation with average ranks for ties. NaN when either
/// side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace edo
