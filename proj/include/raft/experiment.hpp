#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "raft/model.hpp"
#include "raft/retrieval.hpp"
#include "raft/series.hpp"
#include "raft/train.hpp"

namespace raft {

enum class Variant { full, random_retrieval, no_attention, one_period, no_retrieval };

Variant parse_variant(const std::string& name);
std::string to_string(Variant variant);

struct ExperimentParams {
  Index lookback = 96;
  Index horizon = 96;
  std::vector<int> periods{1, 2, 4};
  Index stride = 1;
  RetrievalParams retrieval;
  Variant variant = Variant::full;
  TrainConfig train;

  /// Periods the variant actually retrieves at (empty for no_retrieval).
  std::vector<int> effective_periods() const;
};

/// A standardized series with its train/val/test views. Statistics are fitted on
/// the train view only.
struct PreparedData {
  std::string name;
  std::shared_ptr<const TimeSeries> series;
  ChannelStats stats;
  std::array<SeriesView, 3> views;

  /// `train_fraction` < 1 keeps only the trailing fraction of the train split for
  /// fitting and retrieval; standardization still uses the full train split.
  static PreparedData from(const TimeSeries& raw, const SplitSpec& split, std::string name,
                           double train_fraction = 1.0);

  const SeriesView& train() const { return views[0]; }
  const SeriesView& val() const { return views[1]; }
  const SeriesView& test() const { return views[2]; }

  WindowSet train_windows(Index lookback, Index horizon) const;
  WindowSet val_windows(Index lookback, Index horizon) const;
  WindowSet test_windows(Index lookback, Index horizon) const;
};

/// Index plus precomputed retrieval for the train/val/test windows of one
/// configuration. Shared across seeds when retrieval does not depend on the seed.
struct RetrievalBundle {
  std::unique_ptr<PatchIndex> index;
  RetrievalSource source;
  std::optional<RetrievalCache> train_cache, val_cache, test_cache;
  double index_seconds = 0.0;
  double precompute_seconds = 0.0;

  bool active() const { return index != nullptr; }
};

/// Builds the index over the train view and, unless the metric is learned,
/// precomputes retrieval for every window. `test_starts` restricts the test set;
/// `with_test` false skips the test windows entirely.
RetrievalBundle build_retrieval(const PreparedData& data, const ExperimentParams& params,
                                std::uint64_t seed,
                                const std::vector<Index>* test_starts = nullptr,
                                bool with_test = true);

/// Whether a bundle built for one seed can be reused for another.
bool retrieval_depends_on_seed(const ExperimentParams& params);

struct RunOutcome {
  ForecastModel model;
  TrainHistory history;
  WindowMetrics val;
  WindowMetrics test;
  double precompute_seconds = 0.0;
  double seconds_per_epoch = 0.0;
  double inference_seconds = 0.0;
};

/// Trains one (config, seed) run and scores it on the test windows (or
/// `test_starts` when given). With `with_test` false the test split is never read.
RunOutcome run_experiment(const PreparedData& data, const ExperimentParams& params,
                          std::uint64_t seed, const RetrievalBundle* bundle = nullptr,
                          const std::vector<Index>* test_starts = nullptr,
                          bool with_test = true);

}  // namespace raft
