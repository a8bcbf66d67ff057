#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "raft/model.hpp"
#include "raft/retrieval.hpp"

namespace raft {

struct TrainConfig {
  double learning_rate = 1e-3;
  Index batch_size = 32;
  int max_epochs = 10;
  int patience = 3;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  AdamSettings adam;
  int jobs = 1;
  bool verbose = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  double retrieval_seconds = 0.0;
};

/// Forecast windows over a shared series, identified by the absolute start of the
/// input. Training windows exclude overlapping candidates during retrieval.
struct WindowSet {
  std::shared_ptr<const TimeSeries> series;
  std::vector<Index> starts;
  bool training_queries = false;

  Patch input(Index start, Index lookback) const { return extract_patch(*series, start, lookback); }
  Matrix target(Index start, Index lookback, Index horizon) const {
    return series->values().middleCols(start + lookback, horizon);
  }
  ExclusionRule exclusion(Index start) const {
    return training_queries ? ExclusionRule::training(start) : ExclusionRule::inference();
  }
};

enum class RetrievalMode { similarity, random };

/// Where a model's retrieved continuations come from.
struct RetrievalSource {
  const PatchIndex* index = nullptr;
  RetrievalParams params;
  RetrievalMode mode = RetrievalMode::similarity;
  std::uint64_t random_seed = 0;
  int jobs = 1;

  bool projected() const { return params.metric.kind == MetricKind::cosine_projected; }
  RetrievalResult run(const Patch& query, const ExclusionRule& exclusion) const;
};

/// Retrieval results for every window of `windows`. Not valid for projected metrics,
/// whose retrieval changes with the model.
RetrievalCache build_cache(const RetrievalSource& source, const WindowSet& windows);

struct TrainResult {
  ForecastModel model;
  TrainHistory history;
};

/// Mini-batch MSE training with early stopping on validation loss. Returns the
/// parameters of the best validation epoch. `source` is ignored (and may be null)
/// for the no-retrieval model. Caches, when given, must cover every window.
TrainResult train(ForecastModel model, const WindowSet& train_windows, const WindowSet& val_windows,
                  const RetrievalSource* source, const TrainConfig& config,
                  const RetrievalCache* train_cache = nullptr,
                  const RetrievalCache* val_cache = nullptr);

/// retrieve -> forward for one input window (inference-time exclusion).
Matrix predict(const ForecastModel& model, const RetrievalSource* source, const Patch& x);

struct WindowMetrics {
  double mse = 0.0;
  double mae = 0.0;
  Index windows = 0;
};

/// Forecasts for every window (C x F each), in `windows.starts` order.
std::vector<Matrix> forecast_windows(const ForecastModel& model, const WindowSet& windows,
                                     const RetrievalSource* source,
                                     const RetrievalCache* cache = nullptr);

WindowMetrics evaluate_windows(const ForecastModel& model, const WindowSet& windows,
                               const RetrievalSource* source,
                               const RetrievalCache* cache = nullptr);

}  // namespace raft
