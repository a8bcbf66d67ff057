#include "raft/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace raft {

Parameters Parameters::zeros_like() const {
  Parameters z;
  z.f_w = Matrix::Zero(f_w.rows(), f_w.cols());
  z.f_b = Vector::Zero(f_b.size());
  for (const auto& g : g_w) z.g_w.push_back(Matrix::Zero(g.rows(), g.cols()));
  for (const auto& g : g_b) z.g_b.push_back(Vector::Zero(g.size()));
  z.h_w = Matrix::Zero(h_w.rows(), h_w.cols());
  z.h_b = Vector::Zero(h_b.size());
  for (const auto& p : proj_q) z.proj_q.push_back(Matrix::Zero(p.rows(), p.cols()));
  for (const auto& p : proj_k) z.proj_k.push_back(Matrix::Zero(p.rows(), p.cols()));
  return z;
}

Index Parameters::size() const {
  Index n = 0;
  for_each_tensor(*this, [&](const std::string&, const double*, Index count) { n += count; });
  return n;
}

bool Parameters::all_finite() const {
  bool ok = true;
  for_each_tensor(*this, [&](const std::string&, const double* data, Index count) {
    for (Index i = 0; i < count && ok; ++i) ok = std::isfinite(data[i]);
  });
  return ok;
}

std::shared_ptr<const ProjectionHeads> ForecastModel::projection_heads() const {
  if (!has_projection()) return nullptr;
  auto heads = std::make_shared<ProjectionHeads>();
  for (std::size_t i = 0; i < periods.size(); ++i)
    (*heads)[periods[i]] = Projection{params.proj_q[i], params.proj_k[i]};
  return heads;
}

ForecastModel init_model(Index lookback, Index horizon, std::vector<int> periods,
                         std::uint64_t seed, std::optional<ProjectionSpec> projection) {
  if (lookback < 1 || horizon < 1) throw Error("L and F must be >= 1");
  std::sort(periods.begin(), periods.end());
  periods.erase(std::unique(periods.begin(), periods.end()), periods.end());
  for (int p : periods)
    if (p < 1 || p > std::min(lookback, horizon))
      throw Error("period " + std::to_string(p) + " outside [1, min(L, F)]");
  if (projection && periods.empty()) throw Error("projection heads need retrieval periods");
  if (projection && (projection->embed_dim < 1 || projection->channels < 1))
    throw Error("projection embed_dim and channels must be >= 1");

  std::mt19937_64 rng(seed);
  auto uniform = [&rng](Index rows, Index cols) {
    const double k = 1.0 / std::sqrt(static_cast<double>(cols));
    std::uniform_real_distribution<double> dist(-k, k);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
  };

  ForecastModel model;
  model.lookback = lookback;
  model.horizon = horizon;
  model.periods = periods;
  auto& p = model.params;
  p.f_w = uniform(horizon, lookback);
  p.f_b = Vector::Zero(horizon);
  for (int period : periods) {
    p.g_w.push_back(uniform(horizon, horizon / period));
    p.g_b.push_back(Vector::Zero(horizon));
  }
  p.h_w = uniform(horizon, 2 * horizon);
  p.h_b = Vector::Zero(horizon);
  if (projection) {
    model.channels = projection->channels;
    model.embed_dim = projection->embed_dim;
    for (int period : periods) {
      const Index in = projection->channels * (lookback / period);
      p.proj_q.push_back(uniform(projection->embed_dim, in));
      p.proj_k.push_back(uniform(projection->embed_dim, in));
    }
  }
  return model;
}

Batch make_batch(const ForecastModel& model, std::span<const Sample> samples) {
  if (samples.empty()) throw Error("empty batch");
  const Index channels = samples.front().x->values.rows();
  const Index rows = channels * static_cast<Index>(samples.size());
  const Index L = model.lookback, F = model.horizon;

  Batch batch;
  batch.samples = static_cast<Index>(samples.size());
  batch.channels = channels;
  batch.x_hat.resize(rows, L);
  batch.offset.resize(rows);
  for (int p : model.periods) batch.values.emplace_back(rows, F / p);
  const bool with_target = samples.front().target != nullptr;
  if (with_target) batch.target.resize(rows, F);

  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Sample& sample = samples[s];
    const Matrix& x = sample.x->values;
    if (x.rows() != channels || x.cols() != L)
      throw Error("input window shape " + std::to_string(x.rows()) + "x" +
                  std::to_string(x.cols()) + " does not match model L=" + std::to_string(L));
    const Index r0 = static_cast<Index>(s) * channels;
    for (Index c = 0; c < channels; ++c) {
      const double last = x(c, L - 1);
      batch.offset(r0 + c) = last;
      batch.x_hat.row(r0 + c) = x.row(c).array() - last;
    }
    if (model.uses_retrieval()) {
      if (!sample.retrieval) throw Error("retrieval model needs a retrieval result per sample");
      for (std::size_t k = 0; k < model.periods.size(); ++k) {
        const Matrix& agg = sample.retrieval->at_period(model.periods[k]).aggregate;
        if (agg.rows() != channels || agg.cols() != F / model.periods[k])
          throw Error("retrieved aggregate shape mismatch at period " +
                      std::to_string(model.periods[k]));
        batch.values[k].middleRows(r0, channels) = agg;
      }
    }
    if (with_target) {
      if (!sample.target || sample.target->rows() != channels || sample.target->cols() != F)
        throw Error("target shape does not match C x F");
      batch.target.middleRows(r0, channels) = *sample.target;
    }
  }
  return batch;
}

namespace {

struct ForwardCache {
  Matrix z;  // R x 2F, [f(x) ; sum_p g_p(v_p)]
  Matrix y;  // R x F
};

ForwardCache forward_cached(const ForecastModel& model, const Batch& batch) {
  const auto& p = model.params;
  const Index rows = batch.x_hat.rows();
  const Index F = model.horizon;
  ForwardCache fc;
  fc.z = Matrix::Zero(rows, 2 * F);
  fc.z.leftCols(F).noalias() = batch.x_hat * p.f_w.transpose();
  fc.z.leftCols(F).rowwise() += p.f_b.transpose();
  for (std::size_t k = 0; k < model.periods.size(); ++k) {
    fc.z.rightCols(F).noalias() += batch.values[k] * p.g_w[k].transpose();
    fc.z.rightCols(F).rowwise() += p.g_b[k].transpose();
  }
  fc.y.noalias() = fc.z * p.h_w.transpose();
  fc.y.rowwise() += p.h_b.transpose();
  fc.y.colwise() += batch.offset;
  return fc;
}

// Shared backward pass; also returns dL/d[sum_p g_p(v_p)] for the projection heads.
LossGrad backward(const ForecastModel& model, const Batch& batch, Matrix* d_retrieval) {
  if (batch.target.rows() != batch.x_hat.rows()) throw Error("batch has no targets");
  const auto& p = model.params;
  const Index F = model.horizon;
  const ForwardCache fc = forward_cached(model, batch);

  LossGrad out;
  const Matrix residual = fc.y - batch.target;
  out.loss = residual.squaredNorm() / static_cast<double>(residual.size());
  const Matrix dy = residual * (2.0 / static_cast<double>(residual.size()));

  Parameters& g = out.grad;
  g = p.zeros_like();
  g.h_w.noalias() = dy.transpose() * fc.z;
  g.h_b = dy.colwise().sum().transpose();
  const Matrix dz = dy * p.h_w;
  const auto da = dz.leftCols(F);
  const auto db = dz.rightCols(F);
  g.f_w.noalias() = da.transpose() * batch.x_hat;
  g.f_b = da.colwise().sum().transpose();
  for (std::size_t k = 0; k < model.periods.size(); ++k) {
    g.g_w[k].noalias() = db.transpose() * batch.values[k];
    g.g_b[k] = db.colwise().sum().transpose();
  }
  if (d_retrieval) *d_retrieval = db;
  return out;
}

}  // namespace

Matrix forward_batch(const ForecastModel& model, const Batch& batch) {
  return forward_cached(model, batch).y;
}

Matrix forward(const ForecastModel& model, const Patch& x, const RetrievalResult& retrieval) {
  const Sample sample{&x, &retrieval, nullptr};
  return forward_batch(model, make_batch(model, std::span<const Sample>(&sample, 1)));
}

double loss(const Matrix& y, const Matrix& target) {
  if (y.rows() != target.rows() || y.cols() != target.cols())
    throw Error("loss: shape mismatch");
  if (y.size() == 0) throw Error("loss of empty arrays");
  return (y - target).squaredNorm() / static_cast<double>(y.size());
}

LossGrad gradients(const ForecastModel& model, const Batch& batch) {
  return backward(model, batch, nullptr);
}

// ---------------------------------------------------------------------------
// Projection heads

std::vector<Matrix> embed_keys(const ForecastModel& model, const PatchIndex& /*index*/,
                               const std::vector<Matrix>& anchored_keys) {
  if (!model.has_projection()) throw Error("model has no projection heads");
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < model.periods.size(); ++k)
    out.emplace_back(anchored_keys[k] * model.params.proj_k[k].transpose());
  return out;
}

ProjectedRetrieval retrieve_projected(const ForecastModel& model, const PatchIndex& index,
                                      const std::vector<Matrix>& key_embeddings,
                                      const Patch& query, const RetrievalParams& params,
                                      const ExclusionRule& exclusion) {
  ProjectedRetrieval out;
  for (std::size_t k = 0; k < model.periods.size(); ++k) {
    const int period = model.periods[k];
    const AnchoredPatch anchored = subtract_offset(downsample(query, period));
    Vector qflat = Eigen::Map<const Vector>(anchored.values.data(), anchored.values.size());
    Vector eq = model.params.proj_q[k] * qflat;
    const Matrix& ek = key_embeddings[k];
    const double eqn = eq.norm();

    std::vector<double> scores(index.size(), 0.0);
    std::vector<std::uint8_t> admissible(index.size());
    for (Index i = 0; i < index.size(); ++i) {
      const double den = eqn * ek.row(i).norm();
      scores[i] = den > 0.0 ? std::clamp(ek.row(i).dot(eq) / den, -1.0, 1.0) : 0.0;
      admissible[i] = exclusion.admissible(index.starts()[i], index.lookback(), index.horizon());
    }

    PeriodRetrieval pr;
    pr.period = period;
    pr.candidates = top_m(scores, admissible, params.m, index.starts());
    std::vector<Vector> selected_embed;
    for (Index i : pr.candidates) {
      pr.starts.push_back(index.starts()[i]);
      pr.scores.push_back(scores[i]);
      selected_embed.emplace_back(ek.row(i).transpose());
    }
    if (pr.candidates.empty()) {
      pr.aggregate = Matrix::Zero(index.channels(), index.value_width(period));
      out.result.degenerate = true;
    } else {
      if (params.weighting == Weighting::softmax)
        pr.weights = softmax_weights(pr.scores, params.tau);
      else
        pr.weights.assign(pr.candidates.size(), 1.0 / static_cast<double>(pr.candidates.size()));
      pr.aggregate = index.aggregate(pr.candidates, pr.weights, period);
    }
    out.result.periods.push_back(std::move(pr));
    out.query_embed.push_back(std::move(eq));
    out.key_embed.push_back(std::move(selected_embed));
    out.query_flat.push_back(std::move(qflat));
  }
  return out;
}

LossGrad gradients_projected(const ForecastModel& model, const PatchIndex& index,
                             const std::vector<Matrix>& anchored_keys,
                             const RetrievalParams& params,
                             std::span<const ProjectedSample> samples) {
  if (!model.has_projection()) throw Error("model has no projection heads");
  const std::vector<Matrix> key_embeddings = embed_keys(model, index, anchored_keys);

  std::vector<ProjectedRetrieval> retrieved;
  retrieved.reserve(samples.size());
  for (const auto& s : samples)
    retrieved.push_back(retrieve_projected(model, index, key_embeddings, *s.x, params, s.exclusion));

  std::vector<Sample> plain;
  for (std::size_t s = 0; s < samples.size(); ++s)
    plain.push_back({samples[s].x, &retrieved[s].result, samples[s].target});
  const Batch batch = make_batch(model, plain);

  Matrix d_sum;  // R x F
  LossGrad out = backward(model, batch, &d_sum);
  if (params.weighting != Weighting::softmax) return out;

  const Index channels = batch.channels;
  for (std::size_t k = 0; k < model.periods.size(); ++k) {
    const int period = model.periods[k];
    const Matrix d_values = d_sum * model.params.g_w[k];  // R x F/p
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const PeriodRetrieval& pr = retrieved[s].result.periods[k];
      if (pr.candidates.empty()) continue;
      const auto d_agg = d_values.middleRows(static_cast<Index>(s) * channels, channels);

      // dL/dw_j, then back through the softmax to the scores.
      std::vector<double> dw(pr.candidates.size());
      double mean_dw = 0.0;
      for (std::size_t j = 0; j < pr.candidates.size(); ++j) {
        dw[j] = (d_agg.array() * index.value(pr.candidates[j], period).values.array()).sum();
        mean_dw += pr.weights[j] * dw[j];
      }
      const Vector& eq = retrieved[s].query_embed[k];
      const Vector& qflat = retrieved[s].query_flat[k];
      const double nq = eq.norm();
      for (std::size_t j = 0; j < pr.candidates.size(); ++j) {
        const double d_score = pr.weights[j] * (dw[j] - mean_dw) / params.tau;
        const Vector& ek = retrieved[s].key_embed[k][j];
        const double nk = ek.norm();
        if (nq == 0.0 || nk == 0.0) continue;
        const double cos = eq.dot(ek) / (nq * nk);
        const Vector d_eq = ek / (nq * nk) - cos * eq / (nq * nq);
        const Vector d_ek = eq / (nq * nk) - cos * ek / (nk * nk);
        out.grad.proj_q[k].noalias() += d_score * d_eq * qflat.transpose();
        out.grad.proj_k[k].noalias() +=
            d_score * d_ek * anchored_keys[k].row(pr.candidates[j]);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, AdamSettings adam)
    : kind_(kind), lr_(learning_rate), adam_(adam) {
  if (learning_rate < 0.0) throw Error("learning rate must be >= 0");
}

void Optimizer::step(Parameters& params, const Parameters& grad) {
  if (kind_ == OptimizerKind::sgd) {
    std::vector<const double*> g;
    for_each_tensor(grad, [&](const std::string&, const double* d, Index) { g.push_back(d); });
    std::size_t t = 0;
    for_each_tensor(params, [&](const std::string&, double* d, Index n) {
      const double* gd = g[t++];
      for (Index i = 0; i < n; ++i) d[i] -= lr_ * gd[i];
    });
    return;
  }
  if (!initialized_) {
    m_ = params.zeros_like();
    v_ = params.zeros_like();
    initialized_ = true;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(t_));

  std::vector<const double*> g;
  std::vector<double*> m, v;
  for_each_tensor(grad, [&](const std::string&, const double* d, Index) { g.push_back(d); });
  for_each_tensor(m_, [&](const std::string&, double* d, Index) { m.push_back(d); });
  for_each_tensor(v_, [&](const std::string&, double* d, Index) { v.push_back(d); });
  std::size_t t = 0;
  for_each_tensor(params, [&](const std::string&, double* d, Index n) {
    const double* gd = g[t];
    double* md = m[t];
    double* vd = v[t];
    ++t;
    for (Index i = 0; i < n; ++i) {
      md[i] = adam_.beta1 * md[i] + (1.0 - adam_.beta1) * gd[i];
      vd[i] = adam_.beta2 * vd[i] + (1.0 - adam_.beta2) * gd[i] * gd[i];
      const double mhat = md[i] / bc1;
      const double vhat = vd[i] / bc2;
      d[i] -= lr_ * mhat / (std::sqrt(vhat) + adam_.epsilon);
    }
  });
}

}  // namespace raft
