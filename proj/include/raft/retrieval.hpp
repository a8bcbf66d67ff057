#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "raft/series.hpp"

namespace raft {

enum class MetricKind { pearson, cosine, cosine_projected, neg_l2 };

/// How multichannel patches are reduced to one score. neg_l2 and cosine_projected
/// always work on the flattened patch.
enum class ChannelReduction { channel_mean, flatten };

std::string to_string(MetricKind kind);
MetricKind parse_metric(const std::string& name);

/// Query/key projections (embed_dim x C*W_p) for one period.
struct Projection {
  Matrix query;
  Matrix key;
};
using ProjectionHeads = std::map<int, Projection>;

struct SimilarityMetric {
  MetricKind kind = MetricKind::pearson;
  ChannelReduction reduction = ChannelReduction::channel_mean;
  int embed_dim = 64;
  std::shared_ptr<const ProjectionHeads> heads;  // cosine_projected only
};

/// Similarity between two anchored patches of identical shape. `period` selects the
/// projection pair for cosine_projected. Degenerate (zero-variance / zero-norm)
/// inputs score 0.
double similarity(const AnchoredPatch& query, const AnchoredPatch& key,
                  const SimilarityMetric& metric, int period = 1);

/// Dot product with a fixed accumulation order.
double dot(const double* a, const double* b, Index n);

/// Admissibility of candidates for one query. A training query excludes every
/// candidate whose key+value span intersects its own input+target span.
struct ExclusionRule {
  std::optional<Index> query_start;

  static ExclusionRule training(Index start) { return {start}; }
  static ExclusionRule inference() { return {}; }

  bool admissible(Index candidate_start, Index lookback, Index horizon) const;
};

/// Sliding-window key/value candidates of a training series, pooled per period.
///
/// Every candidate i (a start on the stride grid) has key steps [i, i+L) and value
/// steps [i+L, i+L+F). At period p both are average-pooled with trailing alignment
/// and anchored: keys by their own last pooled step, values by the key's last
/// pooled step, so a value reads as the continuation after its key.
class PatchIndex {
 public:
  /// `origin` is the absolute position of train's first step in the full series;
  /// candidate starts are reported in absolute positions.
  static PatchIndex build(const TimeSeries& train, Index lookback, Index horizon, Index stride,
                          std::vector<int> periods, Index origin = 0);

  Index lookback() const { return lookback_; }
  Index horizon() const { return horizon_; }
  Index stride() const { return stride_; }
  Index origin() const { return origin_; }
  Index channels() const { return channels_; }
  Index size() const { return static_cast<Index>(starts_.size()); }
  const std::vector<Index>& starts() const { return starts_; }
  const std::vector<int>& periods() const { return periods_; }
  std::uint64_t data_hash() const { return data_hash_; }

  Index key_width(int period) const { return lookback_ / period; }
  Index value_width(int period) const { return horizon_ / period; }

  AnchoredPatch key(Index candidate, int period) const;
  AnchoredPatch value(Index candidate, int period) const;

  /// All anchored keys at `period`, one flattened (channel-major) row per candidate.
  Matrix anchored_keys(int period) const;

  /// Scores of every candidate against an anchored, pooled query at `period`.
  std::vector<double> score(const AnchoredPatch& query, int period,
                            const SimilarityMetric& metric) const;

  /// Scores of many queries at once, one row per query. Row q is bit-identical to
  /// score(queries[q]).
  Matrix score_batch(std::span<const AnchoredPatch> queries, int period,
                     const SimilarityMetric& metric) const;

  /// Sum_i weights[i] * value(candidates[i], period).
  Matrix aggregate(std::span<const Index> candidates, std::span<const double> weights,
                   int period) const;

 private:
  struct PeriodData {
    int period = 1;
    // phases[r] row c holds pooled channel c at raw end positions r, r+p, r+2p, ...
    std::vector<Matrix> phases;
    Matrix key_last;         // N x C
    Matrix key_center_norm;  // N x C, ||k - mean(k)||
    Matrix key_anchor_norm;  // N x C, ||k - k_last||
    Vector flat_center_norm; // N
    Vector flat_anchor_norm; // N
  };

  const PeriodData& period_data(int period) const;
  const double* key_ptr(const PeriodData& pd, Index candidate, Index channel) const;
  const double* value_ptr(const PeriodData& pd, Index candidate, Index channel) const;

  Index lookback_ = 0;
  Index horizon_ = 0;
  Index stride_ = 1;
  Index origin_ = 0;
  Index channels_ = 0;
  std::vector<Index> starts_;
  std::vector<int> periods_;
  std::vector<PeriodData> data_;
  std::uint64_t data_hash_ = 0;
};

struct ScoreSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> admissible;
};

ScoreSet score_all(const PatchIndex& index, const AnchoredPatch& query, int period,
                   const SimilarityMetric& metric, const ExclusionRule& exclusion);

/// Positions of the min(m, #admissible) best admissible scores, best first. Ties go
/// to the smaller start index (`starts` defaults to the position itself).
std::vector<Index> top_m(std::span<const double> scores, std::span<const std::uint8_t> admissible,
                         int m, std::span<const Index> starts = {});

/// Temperature softmax with max subtraction.
std::vector<double> softmax_weights(std::span<const double> scores, double tau);

enum class Weighting { softmax, uniform };

struct RetrievalParams {
  int m = 20;
  double tau = 0.1;
  SimilarityMetric metric;
  Weighting weighting = Weighting::softmax;
};

struct PeriodRetrieval {
  int period = 1;
  std::vector<Index> candidates;  // positions in the index
  std::vector<Index> starts;      // absolute start indices of the selected candidates
  std::vector<double> scores;
  std::vector<double> weights;
  Matrix aggregate;  // C x floor(F/p)
};

struct RetrievalResult {
  std::vector<PeriodRetrieval> periods;
  bool degenerate = false;

  const PeriodRetrieval& at_period(int period) const;
};

/// Pool, anchor, score, select, weight and aggregate at every indexed period.
RetrievalResult retrieve(const PatchIndex& index, const Patch& query, const RetrievalParams& params,
                         const ExclusionRule& exclusion);

/// retrieve() for many queries, scored through PatchIndex::score_batch.
std::vector<RetrievalResult> retrieve_batch(const PatchIndex& index, std::span<const Patch> queries,
                                            const RetrievalParams& params,
                                            std::span<const ExclusionRule> exclusions);

/// Uniformly sampled admissible candidates with equal weights; one draw shared
/// across periods.
RetrievalResult random_retrieve(const PatchIndex& index, const Patch& query, int m,
                                std::uint64_t seed, const ExclusionRule& exclusion,
                                const SimilarityMetric& metric = {});

/// Zero aggregates at every period, flagged degenerate.
RetrievalResult empty_retrieval(const PatchIndex& index);

// ---------------------------------------------------------------------------
// Precomputation cache

struct CacheFingerprint {
  Index lookback = 0;
  Index horizon = 0;
  Index stride = 0;
  std::vector<int> periods;
  int m = 0;
  double tau = 0.0;
  MetricKind metric = MetricKind::pearson;
  ChannelReduction reduction = ChannelReduction::channel_mean;
  Weighting weighting = Weighting::softmax;
  std::uint64_t dataset_hash = 0;

  static CacheFingerprint of(const PatchIndex& index, const RetrievalParams& params);
  bool operator==(const CacheFingerprint&) const = default;
};

struct CachedQuery {
  bool excluded = false;  // training-time exclusion was applied
  RetrievalResult result;
};

/// Retrieval results keyed by absolute query start. Reads are thread-safe once built.
class RetrievalCache {
 public:
  static constexpr std::uint8_t kVersion = 1;

  explicit RetrievalCache(CacheFingerprint fingerprint) : fingerprint_(std::move(fingerprint)) {}

  const CacheFingerprint& fingerprint() const { return fingerprint_; }
  /// Throws when the cache was produced with different parameters or data.
  void check(const CacheFingerprint& expected) const;

  bool contains(Index query_start) const { return entries_.count(query_start) != 0; }
  const RetrievalResult& get(Index query_start) const;
  void insert(Index query_start, CachedQuery entry);
  Index size() const { return static_cast<Index>(entries_.size()); }
  const std::map<Index, CachedQuery>& entries() const { return entries_; }

  void save(const std::string& path) const;
  static RetrievalCache load(const std::string& path);

 private:
  CacheFingerprint fingerprint_;
  std::map<Index, CachedQuery> entries_;
};

struct QuerySpec {
  Patch query;
  ExclusionRule exclusion;
};

/// Runs retrieve() for every query across `jobs` worker threads.
RetrievalCache precompute(const PatchIndex& index, std::span<const QuerySpec> queries,
                          const RetrievalParams& params, int jobs = 1);

std::uint64_t hash_values(const Matrix& values);

}  // namespace raft
