#include "raft/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

namespace raft {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t value) {
  // splitmix64 finalizer
  std::uint64_t z = seed ^ (value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void require_source(const ForecastModel& model, const RetrievalSource* source) {
  if (!model.uses_retrieval()) return;
  if (!source || !source->index) throw Error("retrieval model needs a patch index");
  if (source->index->periods() != model.periods)
    throw Error("index periods do not match model periods");
  if (source->index->lookback() != model.lookback || source->index->horizon() != model.horizon)
    throw Error("index L/F do not match model L/F");
}

RetrievalSource with_model_heads(const RetrievalSource& source, const ForecastModel& model) {
  RetrievalSource out = source;
  out.params.metric.heads = model.projection_heads();
  return out;
}

// Forecasts for windows[first, last) in one batch; projected retrieval runs with the
// model's current heads.
Matrix forecast_block(const ForecastModel& model, const WindowSet& windows, std::size_t first,
                      std::size_t last, const RetrievalSource* source, const RetrievalCache* cache,
                      const std::vector<Matrix>* key_embeddings) {
  std::vector<Patch> inputs;
  std::vector<RetrievalResult> owned;
  std::vector<const RetrievalResult*> results;
  inputs.reserve(last - first);
  owned.reserve(last - first);
  for (std::size_t i = first; i < last; ++i) {
    const Index start = windows.starts[i];
    inputs.push_back(windows.input(start, model.lookback));
    if (!model.uses_retrieval()) {
      results.push_back(nullptr);
    } else if (cache) {
      results.push_back(&cache->get(start));
    } else if (key_embeddings) {
      owned.push_back(retrieve_projected(model, *source->index, *key_embeddings, inputs.back(),
                                         source->params, windows.exclusion(start))
                          .result);
      results.push_back(&owned.back());
    } else {
      owned.push_back(source->run(inputs.back(), windows.exclusion(start)));
      results.push_back(&owned.back());
    }
  }
  std::vector<Sample> samples;
  for (std::size_t k = 0; k < inputs.size(); ++k) samples.push_back({&inputs[k], results[k], nullptr});
  return forward_batch(model, make_batch(model, samples));
}

constexpr std::size_t kEvalBlock = 256;

}  // namespace

RetrievalResult RetrievalSource::run(const Patch& query, const ExclusionRule& exclusion) const {
  if (!index) throw Error("retrieval source has no index");
  if (mode == RetrievalMode::random)
    return random_retrieve(*index, query, params.m,
                           mix_seed(random_seed, static_cast<std::uint64_t>(query.start)), exclusion,
                           params.metric);
  return retrieve(*index, query, params, exclusion);
}

RetrievalCache build_cache(const RetrievalSource& source, const WindowSet& windows) {
  if (!source.index) throw Error("retrieval source has no index");
  if (source.projected()) throw Error("projected retrieval cannot be cached");
  const PatchIndex& index = *source.index;
  RetrievalCache cache(CacheFingerprint::of(index, source.params));
  if (source.mode == RetrievalMode::random) {
    for (Index start : windows.starts)
      cache.insert(start, {windows.training_queries,
                           source.run(windows.input(start, index.lookback()), windows.exclusion(start))});
    return cache;
  }
  constexpr std::size_t kChunk = 4096;
  std::vector<QuerySpec> specs;
  for (std::size_t first = 0; first < windows.starts.size(); first += kChunk) {
    const std::size_t last = std::min(windows.starts.size(), first + kChunk);
    specs.clear();
    for (std::size_t i = first; i < last; ++i) {
      const Index start = windows.starts[i];
      specs.push_back({windows.input(start, index.lookback()), windows.exclusion(start)});
    }
    RetrievalCache part = precompute(index, specs, source.params, source.jobs);
    for (auto& [start, entry] : part.entries()) cache.insert(start, entry);
  }
  return cache;
}

std::vector<Matrix> forecast_windows(const ForecastModel& model, const WindowSet& windows,
                                     const RetrievalSource* source, const RetrievalCache* cache) {
  require_source(model, source);
  std::optional<RetrievalSource> headed;
  std::vector<Matrix> key_embeddings;
  const bool projected = model.uses_retrieval() && source->projected() && !cache;
  if (projected) {
    headed = with_model_heads(*source, model);
    std::vector<Matrix> anchored;
    for (int p : model.periods) anchored.push_back(source->index->anchored_keys(p));
    key_embeddings = embed_keys(model, *source->index, anchored);
  }
  const RetrievalSource* src = headed ? &*headed : source;
  std::vector<Matrix> out;
  out.reserve(windows.starts.size());
  const Index channels = windows.series->channels();
  for (std::size_t first = 0; first < windows.starts.size(); first += kEvalBlock) {
    const std::size_t last = std::min(windows.starts.size(), first + kEvalBlock);
    const Matrix y = forecast_block(model, windows, first, last, src, cache,
                                    projected ? &key_embeddings : nullptr);
    for (std::size_t i = first; i < last; ++i)
      out.emplace_back(y.middleRows(static_cast<Index>(i - first) * channels, channels));
  }
  return out;
}

WindowMetrics evaluate_windows(const ForecastModel& model, const WindowSet& windows,
                               const RetrievalSource* source, const RetrievalCache* cache) {
  if (windows.starts.empty()) throw Error("no windows to evaluate");
  const auto forecasts = forecast_windows(model, windows, source, cache);
  double se = 0.0, ae = 0.0;
  Index count = 0;
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    const Matrix truth = windows.target(windows.starts[i], model.lookback, model.horizon);
    se += (forecasts[i] - truth).squaredNorm();
    ae += (forecasts[i] - truth).cwiseAbs().sum();
    count += truth.size();
  }
  return {se / static_cast<double>(count), ae / static_cast<double>(count),
          static_cast<Index>(forecasts.size())};
}

Matrix predict(const ForecastModel& model, const RetrievalSource* source, const Patch& x) {
  require_source(model, source);
  if (!model.uses_retrieval()) return forward(model, x, RetrievalResult{});
  const RetrievalSource headed = with_model_heads(*source, model);
  return forward(model, x, headed.run(x, ExclusionRule::inference()));
}

TrainResult train(ForecastModel model, const WindowSet& train_windows, const WindowSet& val_windows,
                  const RetrievalSource* source, const TrainConfig& config,
                  const RetrievalCache* train_cache, const RetrievalCache* val_cache) {
  if (train_windows.starts.empty()) throw Error("no training windows");
  if (val_windows.starts.empty()) throw Error("no validation windows");
  if (config.batch_size < 1) throw Error("batch size must be >= 1");
  if (config.max_epochs < 1) throw Error("max_epochs must be >= 1");
  require_source(model, source);

  TrainResult out;
  const auto t_retrieval = std::chrono::steady_clock::now();
  const bool projected = model.uses_retrieval() && source->projected();
  std::optional<RetrievalCache> own_train, own_val;
  std::vector<Matrix> anchored_keys;
  if (model.uses_retrieval() && !projected) {
    if (!train_cache) {
      own_train = build_cache(*source, train_windows);
      train_cache = &*own_train;
    }
    if (!val_cache) {
      own_val = build_cache(*source, val_windows);
      val_cache = &*own_val;
    }
  }
  if (projected)
    for (int p : model.periods) anchored_keys.push_back(source->index->anchored_keys(p));
  out.history.retrieval_seconds = seconds_since(t_retrieval);

  Optimizer optimizer(config.optimizer, config.learning_rate, config.adam);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_windows.starts.size());
  std::iota(order.begin(), order.end(), 0);

  ForecastModel best = model;
  int since_best = 0;
  const Index L = model.lookback, F = model.horizon;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    Index batches = 0;
    for (std::size_t first = 0; first < order.size();
         first += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t last =
          std::min(order.size(), first + static_cast<std::size_t>(config.batch_size));
      std::vector<Patch> inputs;
      std::vector<Matrix> targets;
      inputs.reserve(last - first);
      targets.reserve(last - first);
      for (std::size_t k = first; k < last; ++k) {
        const Index start = train_windows.starts[order[k]];
        inputs.push_back(train_windows.input(start, L));
        targets.push_back(train_windows.target(start, L, F));
      }
      LossGrad lg;
      if (projected) {
        std::vector<ProjectedSample> samples;
        for (std::size_t k = 0; k < inputs.size(); ++k)
          samples.push_back({&inputs[k], &targets[k],
                             train_windows.exclusion(train_windows.starts[order[first + k]])});
        lg = gradients_projected(model, *source->index, anchored_keys, source->params, samples);
      } else {
        std::vector<Sample> samples;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          const RetrievalResult* r =
              model.uses_retrieval() ? &train_cache->get(train_windows.starts[order[first + k]])
                                     : nullptr;
          samples.push_back({&inputs[k], r, &targets[k]});
        }
        lg = gradients(model, make_batch(model, samples));
      }
      if (!std::isfinite(lg.loss))
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                    ", batch " + std::to_string(batches + 1) + " (learning rate " +
                    std::to_string(config.learning_rate) + ")");
      optimizer.step(model.params, lg.grad);
      if (!model.params.all_finite())
        throw Error("training diverged: non-finite parameters after epoch " +
                    std::to_string(epoch + 1) + ", batch " + std::to_string(batches + 1));
      loss_sum += lg.loss;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.val_loss = evaluate_windows(model, val_windows, source, projected ? nullptr : val_cache).mse;
    rec.seconds = seconds_since(t0);
    out.history.epochs.push_back(rec);
    if (config.verbose)
      std::cerr << "epoch " << rec.epoch << " train " << rec.train_loss << " val " << rec.val_loss
                << " (" << rec.seconds << " s)\n";

    if (out.history.best_epoch < 0 || rec.val_loss < out.history.best_val_loss) {
      out.history.best_epoch = rec.epoch;
      out.history.best_val_loss = rec.val_loss;
      best = model;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  out.model = std::move(best);
  return out;
}

}  // namespace raft
