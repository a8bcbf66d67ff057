#include "raft/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace raft {

namespace {

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

// Sum_t (a[t] - (b[t] - shift))^2.
double sq_dist_shifted(const double* a, const double* b, double shift, Index n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  Index t = 0;
  for (; t + 4 <= n; t += 4) {
    const double d0 = a[t] - (b[t] - shift);
    const double d1 = a[t + 1] - (b[t + 1] - shift);
    const double d2 = a[t + 2] - (b[t + 2] - shift);
    const double d3 = a[t + 3] - (b[t + 3] - shift);
    s0 += d0 * d0;
    s1 += d1 * d1;
    s2 += d2 * d2;
    s3 += d3 * d3;
  }
  for (; t < n; ++t) {
    const double d = a[t] - (b[t] - shift);
    s0 += d * d;
  }
  return (s0 + s1) + (s2 + s3);
}

double centered_norm(const double* a, Index n, double mean) {
  double s = 0.0;
  for (Index t = 0; t < n; ++t) s += (a[t] - mean) * (a[t] - mean);
  return std::sqrt(s);
}

double ratio_or_zero(double num, double den) { return den > 0.0 ? num / den : 0.0; }

void require_same_shape(const AnchoredPatch& a, const AnchoredPatch& b) {
  if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols())
    throw Error("similarity: patch shapes differ (" + std::to_string(a.values.rows()) + "x" +
                std::to_string(a.values.cols()) + " vs " + std::to_string(b.values.rows()) + "x" +
                std::to_string(b.values.cols()) + ")");
}

const Projection& projection_for(const SimilarityMetric& metric, int period) {
  if (!metric.heads) throw Error("cosine_projected similarity requires projection heads");
  auto it = metric.heads->find(period);
  if (it == metric.heads->end())
    throw Error("no projection head for period " + std::to_string(period));
  return it->second;
}

double cosine_of(const Vector& a, const Vector& b) {
  return clamp_unit(ratio_or_zero(a.dot(b), a.norm() * b.norm()));
}

}  // namespace

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::pearson: return "pearson";
    case MetricKind::cosine: return "cosine";
    case MetricKind::cosine_projected: return "cosine_projected";
    case MetricKind::neg_l2: return "neg_l2";
  }
  return "unknown";
}

MetricKind parse_metric(const std::string& name) {
  if (name == "pearson") return MetricKind::pearson;
  if (name == "cosine") return MetricKind::cosine;
  if (name == "cosine_projected") return MetricKind::cosine_projected;
  if (name == "neg_l2" || name == "l2") return MetricKind::neg_l2;
  throw Error("unknown similarity metric '" + name + "'");
}

double dot(const double* a, const double* b, Index n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  Index t = 0;
  for (; t + 4 <= n; t += 4) {
    s0 += a[t] * b[t];
    s1 += a[t + 1] * b[t + 1];
    s2 += a[t + 2] * b[t + 2];
    s3 += a[t + 3] * b[t + 3];
  }
  for (; t < n; ++t) s0 += a[t] * b[t];
  return (s0 + s1) + (s2 + s3);
}

double similarity(const AnchoredPatch& query, const AnchoredPatch& key,
                  const SimilarityMetric& metric, int period) {
  require_same_shape(query, key);
  const Index channels = query.values.rows();
  const Index width = query.values.cols();
  const Index flat = channels * width;
  const double* q = query.values.data();
  const double* k = key.values.data();

  switch (metric.kind) {
    case MetricKind::pearson: {
      if (metric.reduction == ChannelReduction::flatten) {
        const double qm = query.values.mean();
        const double km = key.values.mean();
        double num = 0.0;
        for (Index i = 0; i < flat; ++i) num += (q[i] - qm) * (k[i] - km);
        return clamp_unit(ratio_or_zero(num, centered_norm(q, flat, qm) * centered_norm(k, flat, km)));
      }
      double total = 0.0;
      for (Index c = 0; c < channels; ++c) {
        const double* qc = q + c * width;
        const double* kc = k + c * width;
        const double qm = query.values.row(c).mean();
        const double km = key.values.row(c).mean();
        double num = 0.0;
        for (Index t = 0; t < width; ++t) num += (qc[t] - qm) * (kc[t] - km);
        total += clamp_unit(
            ratio_or_zero(num, centered_norm(qc, width, qm) * centered_norm(kc, width, km)));
      }
      return total / static_cast<double>(channels);
    }
    case MetricKind::cosine: {
      if (metric.reduction == ChannelReduction::flatten)
        return clamp_unit(ratio_or_zero(dot(q, k, flat), query.values.norm() * key.values.norm()));
      double total = 0.0;
      for (Index c = 0; c < channels; ++c)
        total += clamp_unit(ratio_or_zero(dot(q + c * width, k + c * width, width),
                                          query.values.row(c).norm() * key.values.row(c).norm()));
      return total / static_cast<double>(channels);
    }
    case MetricKind::neg_l2:
      return -std::sqrt(sq_dist_shifted(q, k, 0.0, flat));
    case MetricKind::cosine_projected: {
      const Projection& proj = projection_for(metric, period);
      if (proj.query.cols() != flat || proj.key.cols() != flat)
        throw Error("projection head input size does not match patch size");
      Eigen::Map<const Vector> qv(q, flat), kv(k, flat);
      return cosine_of(proj.query * qv, proj.key * kv);
    }
  }
  return 0.0;
}

bool ExclusionRule::admissible(Index candidate_start, Index lookback, Index horizon) const {
  if (!query_start) return true;
  const Index span = lookback + horizon;
  // [c, c + span) and [q, q + span) are disjoint
  return candidate_start + span <= *query_start || *query_start + span <= candidate_start;
}

// ---------------------------------------------------------------------------
// PatchIndex

PatchIndex PatchIndex::build(const TimeSeries& train, Index lookback, Index horizon, Index stride,
                             std::vector<int> periods, Index origin) {
  if (periods.empty()) throw Error("at least one retrieval period is required");
  std::sort(periods.begin(), periods.end());
  periods.erase(std::unique(periods.begin(), periods.end()), periods.end());
  for (int p : periods)
    if (p < 1 || p > std::min(lookback, horizon))
      throw Error("period " + std::to_string(p) + " must lie in [1, min(L, F)] = [1, " +
                  std::to_string(std::min(lookback, horizon)) + "]");

  PatchIndex index;
  index.lookback_ = lookback;
  index.horizon_ = horizon;
  index.stride_ = stride;
  index.channels_ = train.channels();
  index.origin_ = origin;
  index.starts_ = window_grid(train.length(), lookback, horizon, stride);
  for (Index& s : index.starts_) s += origin;
  index.periods_ = periods;
  index.data_hash_ = hash_values(train.values());

  const Matrix& s = train.values();
  const Index total = train.length();
  const Index channels = train.channels();
  const Index n = index.size();

  for (int p : periods) {
    PeriodData pd;
    pd.period = p;
    pd.phases.resize(p);
    for (int r = 0; r < p; ++r) {
      const Index len = r < total ? (total - r + p - 1) / p : 0;
      Matrix phase = Matrix::Zero(channels, len);
      for (Index k = 0; k < len; ++k) {
        const Index end = r + k * p;
        if (end < p - 1) continue;
        for (Index c = 0; c < channels; ++c)
          phase(c, k) = s.row(c).segment(end - p + 1, p).mean();
      }
      pd.phases[r] = std::move(phase);
    }

    const Index kw = lookback / p;
    pd.key_last.resize(n, channels);
    pd.key_center_norm.resize(n, channels);
    pd.key_anchor_norm.resize(n, channels);
    pd.flat_center_norm.resize(n);
    pd.flat_anchor_norm.resize(n);
    index.data_.push_back(std::move(pd));
    PeriodData& ref = index.data_.back();

    for (Index i = 0; i < n; ++i) {
      double flat_sum = 0.0;
      double anchor_sq = 0.0;
      for (Index c = 0; c < channels; ++c) {
        const double* k = index.key_ptr(ref, i, c);
        const double last = k[kw - 1];
        double sum = 0.0;
        for (Index t = 0; t < kw; ++t) sum += k[t];
        flat_sum += sum;
        ref.key_last(i, c) = last;
        ref.key_center_norm(i, c) = centered_norm(k, kw, sum / static_cast<double>(kw));
        ref.key_anchor_norm(i, c) = centered_norm(k, kw, last);
        anchor_sq += ref.key_anchor_norm(i, c) * ref.key_anchor_norm(i, c);
      }
      // Flattened centering acts on anchored keys, whose channels are shifted apart.
      double last_sum = 0.0;
      for (Index c = 0; c < channels; ++c) last_sum += ref.key_last(i, c);
      const double flat_mean = (flat_sum - static_cast<double>(kw) * last_sum) / static_cast<double>(kw * channels);
      double centered = 0.0;
      for (Index c = 0; c < channels; ++c) {
        const double* k = index.key_ptr(ref, i, c);
        const double last = ref.key_last(i, c);
        for (Index t = 0; t < kw; ++t) {
          const double d = k[t] - last - flat_mean;
          centered += d * d;
        }
      }
      ref.flat_center_norm(i) = std::sqrt(centered);
      ref.flat_anchor_norm(i) = std::sqrt(anchor_sq);
    }
  }
  return index;
}

const PatchIndex::PeriodData& PatchIndex::period_data(int period) const {
  for (const auto& pd : data_)
    if (pd.period == period) return pd;
  throw Error("period " + std::to_string(period) + " is not indexed");
}

const double* PatchIndex::key_ptr(const PeriodData& pd, Index candidate, Index channel) const {
  const int p = pd.period;
  const Index end = starts_[candidate] - origin_ + lookback_ - 1;
  const Index r = end % p;
  const Index k_end = (end - r) / p;
  return pd.phases[r].row(channel).data() + (k_end - (lookback_ / p) + 1);
}

const double* PatchIndex::value_ptr(const PeriodData& pd, Index candidate, Index channel) const {
  const int p = pd.period;
  const Index end = starts_[candidate] - origin_ + lookback_ + horizon_ - 1;
  const Index r = end % p;
  const Index k_end = (end - r) / p;
  return pd.phases[r].row(channel).data() + (k_end - (horizon_ / p) + 1);
}

AnchoredPatch PatchIndex::key(Index candidate, int period) const {
  const PeriodData& pd = period_data(period);
  const Index kw = key_width(period);
  AnchoredPatch out{Matrix(channels_, kw), Vector(channels_)};
  for (Index c = 0; c < channels_; ++c) {
    const double* k = key_ptr(pd, candidate, c);
    out.offset(c) = pd.key_last(candidate, c);
    for (Index t = 0; t < kw; ++t) out.values(c, t) = k[t] - out.offset(c);
  }
  return out;
}

AnchoredPatch PatchIndex::value(Index candidate, int period) const {
  const PeriodData& pd = period_data(period);
  const Index vw = value_width(period);
  AnchoredPatch out{Matrix(channels_, vw), Vector(channels_)};
  for (Index c = 0; c < channels_; ++c) {
    const double* v = value_ptr(pd, candidate, c);
    out.offset(c) = pd.key_last(candidate, c);
    for (Index t = 0; t < vw; ++t) out.values(c, t) = v[t] - out.offset(c);
  }
  return out;
}

Matrix PatchIndex::anchored_keys(int period) const {
  const PeriodData& pd = period_data(period);
  const Index kw = key_width(period);
  Matrix out(size(), channels_ * kw);
  for (Index i = 0; i < size(); ++i)
    for (Index c = 0; c < channels_; ++c) {
      const double* k = key_ptr(pd, i, c);
      for (Index t = 0; t < kw; ++t) out(i, c * kw + t) = k[t] - pd.key_last(i, c);
    }
  return out;
}

std::vector<double> PatchIndex::score(const AnchoredPatch& query, int period,
                                      const SimilarityMetric& metric) const {
  const Index kw = key_width(period);
  if (query.values.rows() != channels_ || query.values.cols() != kw)
    throw Error("query shape " + std::to_string(query.values.rows()) + "x" +
                std::to_string(query.values.cols()) + " does not match index shape " +
                std::to_string(channels_) + "x" + std::to_string(kw) + " at period " +
                std::to_string(period));
  const Index n = size();
  if (metric.kind == MetricKind::cosine_projected) {
    const Index flat = channels_ * kw;
    const Projection& proj = projection_for(metric, period);
    if (proj.query.cols() != flat || proj.key.cols() != flat)
      throw Error("projection head input size does not match patch size");
    Eigen::Map<const Vector> qv(query.values.data(), flat);
    const Vector eq = proj.query * qv;
    const Matrix ek = anchored_keys(period) * proj.key.transpose();
    const double eqn = eq.norm();
    std::vector<double> scores(n);
    for (Index i = 0; i < n; ++i)
      scores[i] = clamp_unit(ratio_or_zero(ek.row(i).dot(eq), ek.row(i).norm() * eqn));
    return scores;
  }
  const Matrix row = score_batch(std::span<const AnchoredPatch>(&query, 1), period, metric);
  return std::vector<double>(row.data(), row.data() + n);
}

namespace {

constexpr Index kLanes = 32;

// acc[j] = sum_t q[t] * kt[t][j] (or sum_t (q[t] - kt[t][j])^2), accumulated in
// increasing t for every lane, so a pair's score never depends on its neighbours.
template <bool SquaredDistance>
void lane_kernel(const double* q, const double* kt, Index width, double* acc) {
  double a[kLanes] = {};
  for (Index t = 0; t < width; ++t) {
    const double qt = q[t];
    const double* row = kt + t * kLanes;
    for (Index j = 0; j < kLanes; ++j) {
      if constexpr (SquaredDistance) {
        const double d = qt - row[j];
        a[j] += d * d;
      } else {
        a[j] += qt * row[j];
      }
    }
  }
  for (Index j = 0; j < kLanes; ++j) acc[j] = a[j];
}

double sequential_sum(const double* a, Index n) {
  double s = 0.0;
  for (Index t = 0; t < n; ++t) s += a[t];
  return s;
}

double sequential_norm(const double* a, Index n) {
  double s = 0.0;
  for (Index t = 0; t < n; ++t) s += a[t] * a[t];
  return std::sqrt(s);
}

}  // namespace

Matrix PatchIndex::score_batch(std::span<const AnchoredPatch> queries, int period,
                              const SimilarityMetric& metric) const {
  const Index nq = static_cast<Index>(queries.size());
  const Index n = size();
  Matrix out = Matrix::Zero(nq, n);
  if (nq == 0) return out;
  if (metric.kind == MetricKind::cosine_projected) {
    for (Index q = 0; q < nq; ++q) {
      const auto row = score(queries[q], period, metric);
      out.row(q) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), n);
    }
    return out;
  }
  const PeriodData& pd = period_data(period);
  const Index kw = key_width(period);
  const Index channels = channels_;
  const bool flat = metric.reduction == ChannelReduction::flatten;
  const bool l2 = metric.kind == MetricKind::neg_l2;
  const bool pearson = metric.kind == MetricKind::pearson;
  for (const auto& q : queries)
    if (q.values.rows() != channels || q.values.cols() != kw)
      throw Error("query shape does not match index shape at period " + std::to_string(period));

  // Prepared queries: prep[q] holds C rows of width kw (centered for pearson).
  std::vector<std::vector<double>> prep(static_cast<std::size_t>(nq));
  Matrix qnorm(nq, channels);
  Vector qflat(nq);
  for (Index q = 0; q < nq; ++q) {
    const Matrix& v = queries[q].values;
    auto& buf = prep[static_cast<std::size_t>(q)];
    buf.assign(v.data(), v.data() + channels * kw);
    if (pearson) {
      const double flat_mean = sequential_sum(buf.data(), channels * kw) / static_cast<double>(channels * kw);
      for (Index c = 0; c < channels; ++c) {
        double* row = buf.data() + c * kw;
        const double mu = flat ? flat_mean : sequential_sum(row, kw) / static_cast<double>(kw);
        for (Index t = 0; t < kw; ++t) row[t] -= mu;
      }
    }
    double flat_sq = 0.0;
    for (Index c = 0; c < channels; ++c) {
      qnorm(q, c) = sequential_norm(buf.data() + c * kw, kw);
      flat_sq += qnorm(q, c) * qnorm(q, c);
    }
    qflat(q) = std::sqrt(flat_sq);
  }

  Matrix kt(kw, kLanes);  // aligned, lane-contiguous anchored keys of one block
  Matrix flat_acc(nq, kLanes);
  double acc[kLanes];
  for (Index b0 = 0; b0 < n; b0 += kLanes) {
    const Index nb = std::min(kLanes, n - b0);
    if (flat || l2) flat_acc.setZero();
    for (Index c = 0; c < channels; ++c) {
      kt.setZero();
      for (Index j = 0; j < nb; ++j) {
        const double* k = key_ptr(pd, b0 + j, c);
        const double last = pd.key_last(b0 + j, c);
        for (Index t = 0; t < kw; ++t) kt(t, j) = k[t] - last;
      }
      const auto& den = pearson ? pd.key_center_norm : pd.key_anchor_norm;
      for (Index q = 0; q < nq; ++q) {
        const double* qc = prep[static_cast<std::size_t>(q)].data() + c * kw;
        if (l2)
          lane_kernel<true>(qc, kt.data(), kw, acc);
        else
          lane_kernel<false>(qc, kt.data(), kw, acc);
        if (flat || l2) {
          for (Index j = 0; j < nb; ++j) flat_acc(q, j) += acc[j];
          continue;
        }
        if (qnorm(q, c) == 0.0) continue;
        for (Index j = 0; j < nb; ++j)
          out(q, b0 + j) += clamp_unit(ratio_or_zero(acc[j], qnorm(q, c) * den(b0 + j, c)));
      }
    }
    if (l2) {
      for (Index q = 0; q < nq; ++q)
        for (Index j = 0; j < nb; ++j) out(q, b0 + j) = -std::sqrt(flat_acc(q, j));
    } else if (flat) {
      const auto& den = pearson ? pd.flat_center_norm : pd.flat_anchor_norm;
      for (Index q = 0; q < nq; ++q)
        for (Index j = 0; j < nb; ++j)
          out(q, b0 + j) = clamp_unit(ratio_or_zero(flat_acc(q, j), qflat(q) * den(b0 + j)));
    }
  }
  if (!flat && !l2) out /= static_cast<double>(channels);
  return out;
}

Matrix PatchIndex::aggregate(std::span<const Index> candidates, std::span<const double> weights,
                             int period) const {
  if (candidates.size() != weights.size()) throw Error("aggregate: candidate/weight size mismatch");
  const PeriodData& pd = period_data(period);
  const Index vw = value_width(period);
  Matrix out = Matrix::Zero(channels_, vw);
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    const Index i = candidates[j];
    const double w = weights[j];
    for (Index c = 0; c < channels_; ++c) {
      const double* v = value_ptr(pd, i, c);
      const double last = pd.key_last(i, c);
      double* o = out.row(c).data();
      for (Index t = 0; t < vw; ++t) o[t] += w * (v[t] - last);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring, selection and weighting

ScoreSet score_all(const PatchIndex& index, const AnchoredPatch& query, int period,
                   const SimilarityMetric& metric, const ExclusionRule& exclusion) {
  ScoreSet set;
  set.scores = index.score(query, period, metric);
  set.admissible.resize(index.size());
  for (Index i = 0; i < index.size(); ++i)
    set.admissible[i] = exclusion.admissible(index.starts()[i], index.lookback(), index.horizon());
  return set;
}

std::vector<Index> top_m(std::span<const double> scores, std::span<const std::uint8_t> admissible,
                         int m, std::span<const Index> starts) {
  if (m < 1) throw Error("top_m requires m >= 1");
  if (admissible.size() != scores.size()) throw Error("top_m: mask size mismatch");
  if (!starts.empty() && starts.size() != scores.size()) throw Error("top_m: starts size mismatch");
  std::vector<Index> pool;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (admissible[i]) pool.push_back(static_cast<Index>(i));
  auto tiebreak = [&](Index i) { return starts.empty() ? i : starts[i]; };
  auto better = [&](Index a, Index b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return tiebreak(a) < tiebreak(b);
  };
  const auto keep = std::min<std::size_t>(static_cast<std::size_t>(m), pool.size());
  if (keep < pool.size()) {
    std::nth_element(pool.begin(), pool.begin() + static_cast<Index>(keep), pool.end(), better);
    pool.resize(keep);
  }
  std::sort(pool.begin(), pool.end(), better);
  return pool;
}

std::vector<double> softmax_weights(std::span<const double> scores, double tau) {
  if (!(tau > 0.0)) throw Error("softmax temperature must be positive");
  if (scores.empty()) throw Error("softmax over an empty selection");
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> w(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    w[i] = std::exp((scores[i] - top) / tau);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

const PeriodRetrieval& RetrievalResult::at_period(int period) const {
  for (const auto& pr : periods)
    if (pr.period == period) return pr;
  throw Error("retrieval result has no period " + std::to_string(period));
}

namespace {

void check_query(const PatchIndex& index, const Patch& query) {
  if (query.period != 1) throw Error("retrieval query must be a period-1 patch");
  if (query.width() != index.lookback() || query.values.rows() != index.channels())
    throw Error("retrieval query shape " + std::to_string(query.values.rows()) + "x" +
                std::to_string(query.width()) + " does not match index " +
                std::to_string(index.channels()) + "x" + std::to_string(index.lookback()));
}

}  // namespace

namespace {

PeriodRetrieval select(const PatchIndex& index, int period, std::span<const double> scores,
                       const ExclusionRule& exclusion, const RetrievalParams& params) {
  std::vector<std::uint8_t> admissible(index.size());
  for (Index i = 0; i < index.size(); ++i)
    admissible[i] = exclusion.admissible(index.starts()[i], index.lookback(), index.horizon());
  PeriodRetrieval pr;
  pr.period = period;
  pr.candidates = top_m(scores, admissible, params.m, index.starts());
  if (pr.candidates.empty()) {
    pr.aggregate = Matrix::Zero(index.channels(), index.value_width(period));
    return pr;
  }
  for (Index i : pr.candidates) {
    pr.starts.push_back(index.starts()[i]);
    pr.scores.push_back(scores[i]);
  }
  if (params.weighting == Weighting::softmax)
    pr.weights = softmax_weights(pr.scores, params.tau);
  else
    pr.weights.assign(pr.candidates.size(), 1.0 / static_cast<double>(pr.candidates.size()));
  pr.aggregate = index.aggregate(pr.candidates, pr.weights, period);
  return pr;
}

constexpr std::size_t kQueryBlock = 256;

}  // namespace

RetrievalResult retrieve(const PatchIndex& index, const Patch& query, const RetrievalParams& params,
                         const ExclusionRule& exclusion) {
  check_query(index, query);
  RetrievalResult result;
  for (int p : index.periods()) {
    const AnchoredPatch anchored = subtract_offset(downsample(query, p));
    result.periods.push_back(select(index, p, index.score(anchored, p, params.metric), exclusion, params));
    if (result.periods.back().candidates.empty()) result.degenerate = true;
  }
  return result;
}

std::vector<RetrievalResult> retrieve_batch(const PatchIndex& index, std::span<const Patch> queries,
                                            const RetrievalParams& params,
                                            std::span<const ExclusionRule> exclusions) {
  if (queries.size() != exclusions.size()) throw Error("retrieve_batch: query/exclusion count mismatch");
  for (const auto& q : queries) check_query(index, q);
  std::vector<RetrievalResult> results(queries.size());
  for (std::size_t first = 0; first < queries.size(); first += kQueryBlock) {
    const std::size_t last = std::min(queries.size(), first + kQueryBlock);
    for (int p : index.periods()) {
      std::vector<AnchoredPatch> anchored;
      anchored.reserve(last - first);
      for (std::size_t q = first; q < last; ++q) anchored.push_back(subtract_offset(downsample(queries[q], p)));
      const Matrix scores = index.score_batch(anchored, p, params.metric);
      for (std::size_t q = first; q < last; ++q) {
        const auto row = scores.row(static_cast<Index>(q - first));
        auto& result = results[q];
        result.periods.push_back(
            select(index, p, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                   exclusions[q], params));
        if (result.periods.back().candidates.empty()) result.degenerate = true;
      }
    }
  }
  return results;
}

RetrievalResult random_retrieve(const PatchIndex& index, const Patch& query, int m,
                                std::uint64_t seed, const ExclusionRule& exclusion,
                                const SimilarityMetric& metric) {
  check_query(index, query);
  if (m < 1) throw Error("random retrieval requires m >= 1");
  std::vector<Index> pool;
  for (Index i = 0; i < index.size(); ++i)
    if (exclusion.admissible(index.starts()[i], index.lookback(), index.horizon())) pool.push_back(i);

  std::mt19937_64 rng(seed);
  const auto keep = std::min<std::size_t>(static_cast<std::size_t>(m), pool.size());
  for (std::size_t j = 0; j < keep; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
    std::swap(pool[j], pool[pick(rng)]);
  }
  pool.resize(keep);
  std::sort(pool.begin(), pool.end());

  RetrievalResult result;
  result.degenerate = pool.empty();
  for (int p : index.periods()) {
    PeriodRetrieval pr;
    pr.period = p;
    pr.candidates = pool;
    if (pool.empty()) {
      pr.aggregate = Matrix::Zero(index.channels(), index.value_width(p));
      result.periods.push_back(std::move(pr));
      continue;
    }
    const AnchoredPatch anchored = subtract_offset(downsample(query, p));
    for (Index i : pool) {
      pr.starts.push_back(index.starts()[i]);
      pr.scores.push_back(similarity(anchored, index.key(i, p), metric, p));
    }
    pr.weights.assign(pool.size(), 1.0 / static_cast<double>(pool.size()));
    pr.aggregate = index.aggregate(pr.candidates, pr.weights, p);
    result.periods.push_back(std::move(pr));
  }
  return result;
}

RetrievalResult empty_retrieval(const PatchIndex& index) {
  RetrievalResult result;
  result.degenerate = true;
  for (int p : index.periods()) {
    PeriodRetrieval pr;
    pr.period = p;
    pr.aggregate = Matrix::Zero(index.channels(), index.value_width(p));
    result.periods.push_back(std::move(pr));
  }
  return result;
}

std::uint64_t hash_values(const Matrix& values) {
  // FNV-1a over shape and raw bytes
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  const std::int64_t rows = values.rows(), cols = values.cols();
  mix(&rows, sizeof rows);
  mix(&cols, sizeof cols);
  mix(values.data(), sizeof(double) * static_cast<std::size_t>(values.size()));
  return h;
}

}  // namespace raft
