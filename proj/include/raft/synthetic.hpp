#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "raft/series.hpp"

namespace raft::synthetic {

using Rng = std::mt19937_64;

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double draw(Rng& rng) const;
};

enum class PatternKind { ar, random_walk };

PatternKind parse_pattern_kind(const std::string& name);
std::string to_string(PatternKind kind);

/// Recipe for a univariate benchmark series: trend and seasonality sinusoids plus
/// short-term event patterns added at controlled positions.
struct SyntheticSpec {
  Index total_length = 18000;
  Range trend_period{1000, 4000};
  Range seasonality_period{500, 1000};
  Range trend_amplitude{200, 300};
  Range seasonality_amplitude{100, 200};
  Range offset{100, 200};
  Index pattern_length = 200;
  PatternKind pattern_kind = PatternKind::ar;
  int ar_order = 20;
  Range ar_param{-5, 5};
  Range ar_noise{-10, 10};
  Range rw_step{0, 20};
  Range clamp{-100, 100};
  int n_distinct_patterns = 3;
  int occurrences_per_pattern = 1;
  double train_fraction = 0.7;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  /// Throws on unordered ranges or infeasible sizes.
  void validate() const;
  /// 70/10/20 borders used for placement and evaluation.
  SplitSpec split() const;
};

struct Sinusoid {
  double period = 1.0;
  double amplitude = 0.0;
  double offset = 0.0;
  double at(Index t) const;
};

struct Background {
  Sinusoid trend;
  Sinusoid seasonality;
  std::vector<double> values;
};

/// Draw order: trend (period, amplitude, offset), then seasonality.
Background gen_background(const SyntheticSpec& spec, Rng& rng);

struct ArPattern {
  std::vector<double> phi;    // ar_order coefficients, phi[0] multiplies x_{t-1}
  std::vector<double> noise;  // one draw per step
  std::vector<double> values;
};

/// x_t = clamp(sum_i phi_i x_{t-i} + eps_t) with a zero history. The clamp sits
/// inside the recurrence; unclamped AR(20) with |phi| up to 5 overflows in a few
/// dozen steps.
ArPattern gen_ar_pattern(const SyntheticSpec& spec, Rng& rng);

/// Replays the AR recurrence from stored coefficients and noise.
std::vector<double> replay_ar(const std::vector<double>& phi, const std::vector<double>& noise,
                              Range clamp);

struct RwPattern {
  std::vector<double> steps;  // steps[0] is unused (walk starts at 0)
  std::vector<double> values;
};

/// Cumulative walk from 0 with uniform steps, clamped elementwise afterwards.
RwPattern gen_rw_pattern(const SyntheticSpec& spec, Rng& rng);

enum class Region { train, test };

struct PatternAnnotation {
  int pattern_id = 0;
  Index start = 0;
  Index length = 0;
  Region region = Region::train;
};

struct SyntheticSeries {
  TimeSeries series;
  std::vector<double> background;
  std::vector<std::vector<double>> patterns;
  std::vector<PatternAnnotation> annotations;  // sorted by start
};

/// Background plus `occurrences_per_pattern` copies of each distinct pattern at
/// non-overlapping uniform positions in the train region and one copy of each in
/// the test region. Everything is drawn from `spec.seed`.
SyntheticSeries assemble(const SyntheticSpec& spec);

void write_annotations_csv(const std::string& path, const std::vector<PatternAnnotation>& notes);

}  // namespace raft::synthetic
