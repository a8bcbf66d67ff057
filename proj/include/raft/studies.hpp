#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "raft/experiment.hpp"
#include "raft/synthetic.hpp"

namespace raft {

/// One trained (dataset, horizon, variant, config, seed) run.
struct MetricRow {
  std::string dataset;
  Index horizon = 0;
  std::string variant;
  std::string config;  // free label, e.g. metric name or training fraction
  std::uint64_t seed = 0;
  double mse = 0.0;
  double mae = 0.0;
  double val_mse = 0.0;
  double precompute_seconds = 0.0;
  double seconds_per_epoch = 0.0;
  double inference_seconds = 0.0;
};

struct MeanRow {
  std::string dataset;
  std::string horizon;  // a horizon or "avg"
  std::string variant;
  std::string config;
  std::size_t seeds = 0;
  double mse = 0.0;
  double mae = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;

  void add(const MetricRow& row) { rows.push_back(row); }
  void append(const MetricReport& other);

  /// Seed means per (dataset, horizon, variant, config) in first-seen order, plus one
  /// "avg" row per (dataset, variant, config) over its horizon means.
  std::vector<MeanRow> means() const;

  /// Per-seed metrics. Timings are kept out so reruns are byte-identical.
  void write_csv(const std::string& path) const;
  void write_means_csv(const std::string& path) const;
  void write_timings_csv(const std::string& path) const;
  /// JSON summary: mean rows plus per-seed values.
  std::string summary_json() const;
};

MetricRow make_row(const std::string& dataset, const ExperimentParams& params,
                   const std::string& config, std::uint64_t seed, const RunOutcome& run);

/// Trains and scores every (horizon, seed) pair. Retrieval is shared across seeds
/// when it does not depend on them.
MetricReport evaluate(const PreparedData& data, ExperimentParams params,
                      const std::vector<Index>& horizons, const std::vector<std::uint64_t>& seeds,
                      const std::string& config_label = "");

struct GridSpace {
  std::vector<double> learning_rates{1e-4, 1e-3, 1e-2};
  std::vector<Index> lookbacks{96, 192, 336, 720};
  std::vector<int> ms{1, 5, 10, 20};

  void validate() const;
};

struct GridPoint {
  double learning_rate = 0.0;
  Index lookback = 0;
  int m = 0;
  double val_mse = 0.0;  // mean over seeds

  auto key() const { return std::tuple(learning_rate, lookback, m); }
};

struct GridResult {
  std::vector<GridPoint> points;  // lexicographic (lr, L, m) order
  std::size_t best = 0;
  MetricReport selected;          // test metrics of the selected point only
};

/// Exhaustive search on validation MSE. The minimum wins; ties go to the
/// lexicographically smallest (lr, L, m).
GridResult grid_search(const PreparedData& data, const ExperimentParams& base, const GridSpace& space,
                       const std::vector<std::uint64_t>& seeds);

MetricReport run_ablation(const PreparedData& data, const ExperimentParams& base,
                          const std::vector<Variant>& variants, const std::vector<Index>& horizons,
                          const std::vector<std::uint64_t>& seeds);

struct StrideRow {
  Index stride = 1;
  Index candidates = 0;
  double precompute_seconds = 0.0;  // index build plus retrieval for every window
  double mse = 0.0;                 // mean over seeds
  double mae = 0.0;
};

std::vector<StrideRow> stride_study(const PreparedData& data, const ExperimentParams& base,
                                    const std::vector<Index>& strides,
                                    const std::vector<std::uint64_t>& seeds,
                                    MetricReport* report = nullptr);
void write_stride_csvs(const std::string& dir, const std::string& dataset,
                       const std::vector<StrideRow>& rows);

MetricReport similarity_study(const PreparedData& data, const ExperimentParams& base,
                              const std::vector<MetricKind>& metrics,
                              const std::vector<std::uint64_t>& seeds);

struct DiagnosticsRecord {
  Index query_start = 0;
  double key_similarity = 0.0;
  double value_similarity = 0.0;
  double mse_with = 0.0;
  double mse_without = 0.0;
  double mse_change_percent = 0.0;
};

struct Diagnostics {
  std::vector<DiagnosticsRecord> records;
  double spearman_key_value = 0.0;
  double spearman_value_change = 0.0;
};

/// Pearson similarities at period 1 between each test input and its retrieved keys,
/// and between its true future and the retrieved values.
DiagnosticsRecord diagnose_window(const PatchIndex& index, const RetrievalResult& retrieval,
                                  const Matrix& input, const Matrix& target,
                                  const Matrix& pred_with, const Matrix& pred_without);

/// Spearman coefficients over the records. Throws with fewer than 3 records.
Diagnostics summarize_diagnostics(std::vector<DiagnosticsRecord> records);

/// Trains the full model and the no-retrieval model with one seed and diagnoses every
/// test window.
Diagnostics diagnostics(const PreparedData& data, const ExperimentParams& params, std::uint64_t seed);

void write_diagnostics_csv(const std::string& path, const Diagnostics& diag);

/// Trailing-fraction truncation of the train split, with and without retrieval.
MetricReport training_length_study(const TimeSeries& raw, const SplitSpec& split,
                                   const std::string& name, const ExperimentParams& base,
                                   const std::vector<double>& fractions,
                                   const std::vector<std::uint64_t>& seeds);

struct SyntheticStudyConfig {
  synthetic::SyntheticSpec spec;          // seed is replaced per series
  std::vector<int> occurrences{1, 2, 4};
  int series_per_level = 20;
  std::uint64_t base_seed = 0;
  ExperimentParams params;                // periods forced to {1}
  bool verbose = false;
};

struct SyntheticLevel {
  int occurrences = 0;
  std::vector<double> mse_with;  // per series, on windows whose target meets a test span
  std::vector<double> mse_without;
  double mean_with = 0.0;
  double mean_without = 0.0;
  /// 100 * (mean_with - mean_without) / mean_without; negative is better.
  double change_percent = 0.0;
};

/// Absolute starts of the test windows whose target meets an annotated test span.
std::vector<Index> pattern_windows(const PreparedData& data,
                                   const std::vector<synthetic::PatternAnnotation>& notes,
                                   Index lookback, Index horizon);

std::vector<SyntheticLevel> synthetic_study(const SyntheticStudyConfig& config);
void write_synthetic_csv(const std::string& path, const std::string& kind,
                         const std::vector<SyntheticLevel>& levels);

}  // namespace raft
