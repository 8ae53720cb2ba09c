#include "edo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace edo {
namespace {

constexpr const char* kCsvHeader =
    "iteration,mode,entropy,accuracy_greedy,accuracy_sc,accuracy_bon,accuracy_search,"
    "distinct_1,distinct_2,distinct_3,distinct_4,pairs_emitted,groups_kept";

double parse_real(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw Error(ErrorCode::kIo, "malformed real '" + s + "'");
  return v;
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

nlohmann::json real_or_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

}  // namespace

double distinct_n(std::span<const TokenSeq> corpus, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidInput, "n-gram order must be >= 1");
  std::set<TokenSeq> distinct;
  std::size_t total = 0;
  for (const auto& seq : corpus) {
    if (seq.size() < n) continue;
    for (std::size_t i = 0; i + n <= seq.size(); ++i) {
      distinct.emplace(seq.begin() + static_cast<std::ptrdiff_t>(i),
                       seq.begin() + static_cast<std::ptrdiff_t>(i + n));
      ++total;
    }
  }
  if (total == 0) throw Error(ErrorCode::kInsufficientTokens, "corpus has no " + std::to_string(n) + "-grams");
  return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

double accuracy(std::span<const DecodeResult> results, std::span<const Prompt> prompts, const Task& task) {
  if (results.size() != prompts.size()) {
    throw Error(ErrorCode::kInvalidInput, "accuracy needs one decode result per prompt");
  }
  if (results.empty()) throw Error(ErrorCode::kInvalidInput, "accuracy over an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    correct += static_cast<std::size_t>(task.verify(results[i].chosen().tokens, prompts[i]));
  }
  return static_cast<double>(correct) / static_cast<double>(results.size());
}

std::vector<ReportRow> assemble_report(std::span<const MetricsRecord> records) {
  if (records.empty()) throw Error(ErrorCode::kInvalidInput, "report needs at least one record");
  std::vector<ReportRow> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    rows.push_back({r, r.accuracy_sc - r.accuracy_greedy, r.accuracy_bon - r.accuracy_greedy,
                    r.accuracy_search - r.accuracy_greedy});
  }
  return rows;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> records) {
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.iteration << ',' << r.mode << ',' << format_real(r.entropy) << ',' << format_real(r.accuracy_greedy)
        << ',' << format_real(r.accuracy_sc) << ',' << format_real(r.accuracy_bon) << ','
        << format_real(r.accuracy_search);
    for (double d : r.distinct) out << ',' << format_real(d);
    out << ',' << r.pairs_emitted << ',' << r.groups_kept << '\n';
  }
}

std::vector<MetricsRecord> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw Error(ErrorCode::kIo, "unexpected metrics CSV header");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 13) throw Error(ErrorCode::kIo, "metrics CSV row has " + std::to_string(f.size()) + " fields");
    MetricsRecord r;
    r.iteration = std::stoull(f[0]);
    r.mode = f[1];
    r.entropy = parse_real(f[2]);
    r.accuracy_greedy = parse_real(f[3]);
    r.accuracy_sc = parse_real(f[4]);
    r.accuracy_bon = parse_real(f[5]);
    r.accuracy_search = parse_real(f[6]);
    for (std::size_t n = 0; n < 4; ++n) r.distinct[n] = parse_real(f[7 + n]);
    r.pairs_emitted = std::stoull(f[11]);
    r.groups_kept = std::stoull(f[12]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_report_json(std::ostream& out, std::span<const ReportRow> rows) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    const auto& r = row.record;
    nlohmann::ordered_json j;
    j["iteration"] = r.iteration;
    j["mode"] = r.mode;
    j["entropy"] = real_or_null(r.entropy);
    j["greedy"] = {{"acc", real_or_null(r.accuracy_greedy)}, {"delta", 0.0}};
    j["sc"] = {{"acc", real_or_null(r.accuracy_sc)}, {"delta", real_or_null(row.delta_sc)}};
    j["bon"] = {{"acc", real_or_null(r.accuracy_bon)}, {"delta", real_or_null(row.delta_bon)}};
    j["search"] = {{"acc", real_or_null(r.accuracy_search)}, {"delta", real_or_null(row.delta_search)}};
    j["distinct_4"] = real_or_null(r.distinct[3]);
    doc.push_back(std::move(j));
  }
  out << doc.dump(2) << '\n';
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::kInvalidInput, "spearman needs aligned samples");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace edo
