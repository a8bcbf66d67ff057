#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "raft/retrieval.hpp"
#include "raft/series.hpp"

namespace raft {

/// Trainable tensors of the forecaster. The same layout doubles as the gradient
/// container.
///
///   input head      f: R^L -> R^F
///   retrieval heads g_p: R^{F/p} -> R^F, one per period
///   fusion head     h: R^{2F} -> R^F, applied to [f(x) ; sum_p g_p(v_p)]
///   projection heads (cosine_projected only): query/key maps R^{C*L/p} -> R^E
struct Parameters {
  Matrix f_w;
  Vector f_b;
  std::vector<Matrix> g_w;
  std::vector<Vector> g_b;
  Matrix h_w;
  Vector h_b;
  std::vector<Matrix> proj_q;
  std::vector<Matrix> proj_k;

  /// Same shapes, all zero.
  Parameters zeros_like() const;
  Index size() const;
  bool all_finite() const;
};

/// Visits every tensor in checkpoint order as (name, data, element count).
template <typename Params, typename Fn>
void for_each_tensor(Params& params, Fn&& fn) {
  fn(std::string("f_w"), params.f_w.data(), params.f_w.size());
  fn(std::string("f_b"), params.f_b.data(), params.f_b.size());
  for (std::size_t i = 0; i < params.g_w.size(); ++i) {
    fn("g_w[" + std::to_string(i) + "]", params.g_w[i].data(), params.g_w[i].size());
    fn("g_b[" + std::to_string(i) + "]", params.g_b[i].data(), params.g_b[i].size());
  }
  fn(std::string("h_w"), params.h_w.data(), params.h_w.size());
  fn(std::string("h_b"), params.h_b.data(), params.h_b.size());
  for (std::size_t i = 0; i < params.proj_q.size(); ++i) {
    fn("proj_q[" + std::to_string(i) + "]", params.proj_q[i].data(), params.proj_q[i].size());
    fn("proj_k[" + std::to_string(i) + "]", params.proj_k[i].data(), params.proj_k[i].size());
  }
}

/// Channel-shared linear forecaster fused with retrieved continuations. An empty
/// period set is the no-retrieval model: h sees [f(x) ; 0], which collapses to a
/// single offset-anchored linear map.
struct ForecastModel {
  Index lookback = 0;
  Index horizon = 0;
  std::vector<int> periods;
  Index channels = 0;    // only meaningful with projection heads
  int embed_dim = 0;     // 0 = no projection heads
  Parameters params;

  bool uses_retrieval() const { return !periods.empty(); }
  bool has_projection() const { return embed_dim > 0; }
  /// Projection heads as a similarity metric input.
  std::shared_ptr<const ProjectionHeads> projection_heads() const;
};

struct ProjectionSpec {
  Index channels = 1;
  int embed_dim = 64;
};

/// Weights ~ U[-k, k], k = 1/sqrt(fan_in); biases zero. Deterministic in `seed`.
ForecastModel init_model(Index lookback, Index horizon, std::vector<int> periods,
                         std::uint64_t seed, std::optional<ProjectionSpec> projection = {});

/// Forecast for one window: x is the raw C x L input (period 1), retrieval the
/// aggregated continuations. Returns C x F.
Matrix forward(const ForecastModel& model, const Patch& x, const RetrievalResult& retrieval);

/// Rows are (sample, channel) pairs.
struct Batch {
  Matrix x_hat;                 // R x L, anchored inputs
  Vector offset;                // R
  std::vector<Matrix> values;   // per model period: R x F/p aggregated continuations
  Matrix target;                // R x F (empty when only forecasting)
  Index samples = 0;
  Index channels = 0;
};

struct Sample {
  const Patch* x = nullptr;
  const RetrievalResult* retrieval = nullptr;  // ignored by the no-retrieval model
  const Matrix* target = nullptr;              // C x F
};

Batch make_batch(const ForecastModel& model, std::span<const Sample> samples);

/// R x F forecasts in the original (offset-restored) scale.
Matrix forward_batch(const ForecastModel& model, const Batch& batch);

/// Mean squared error over all entries.
double loss(const Matrix& y, const Matrix& target);

struct LossGrad {
  double loss = 0.0;
  Parameters grad;
};

/// Exact gradients of the batch MSE with retrieval held fixed.
LossGrad gradients(const ForecastModel& model, const Batch& batch);

/// Per-query record of a retrieval scored with the model's projection heads, kept
/// for the backward pass through the softmax weights.
struct ProjectedRetrieval {
  RetrievalResult result;
  std::vector<Vector> query_embed;                // per period
  std::vector<std::vector<Vector>> key_embed;     // per period, per selected candidate
  std::vector<Vector> query_flat;                 // per period, anchored pooled query
};

/// Key embeddings (index.size() x E) per period, shareable across a batch.
std::vector<Matrix> embed_keys(const ForecastModel& model, const PatchIndex& index,
                               const std::vector<Matrix>& anchored_keys);
/// Scores every candidate with the model's projection heads.
ProjectedRetrieval retrieve_projected(const ForecastModel& model, const PatchIndex& index,
                                      const std::vector<Matrix>& key_embeddings,
                                      const Patch& query, const RetrievalParams& params,
                                      const ExclusionRule& exclusion);

struct ProjectedSample {
  const Patch* x = nullptr;
  const Matrix* target = nullptr;
  ExclusionRule exclusion;
};

/// Loss and gradients including the projection heads, which receive gradient only
/// through the softmax weights of the selected candidates.
LossGrad gradients_projected(const ForecastModel& model, const PatchIndex& index,
                             const std::vector<Matrix>& anchored_keys,
                             const RetrievalParams& params,
                             std::span<const ProjectedSample> samples);

enum class OptimizerKind { adam, sgd };

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, AdamSettings adam = {});
  void step(Parameters& params, const Parameters& grad);

 private:
  OptimizerKind kind_;
  double lr_;
  AdamSettings adam_;
  long t_ = 0;
  Parameters m_, v_;
  bool initialized_ = false;
};

void save_checkpoint(const std::string& path, const ForecastModel& model,
                     const std::string& config_echo = {});
ForecastModel load_checkpoint(const std::string& path, std::string* config_echo = nullptr);

}  // namespace raft
