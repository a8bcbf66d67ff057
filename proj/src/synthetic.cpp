#include "raft/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace raft::synthetic {

double Range::draw(Rng& rng) const {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

PatternKind parse_pattern_kind(const std::string& name) {
  if (name == "ar") return PatternKind::ar;
  if (name == "random_walk" || name == "rw") return PatternKind::random_walk;
  throw Error("unknown pattern kind '" + name + "' (expected ar or random_walk)");
}

std::string to_string(PatternKind kind) { return kind == PatternKind::ar ? "ar" : "random_walk"; }

void SyntheticSpec::validate() const {
  auto ordered = [](const Range& r, const char* name) {
    if (!(r.lo <= r.hi)) throw Error(std::string("synthetic range ") + name + " is not ordered");
  };
  ordered(trend_period, "trend_period");
  ordered(seasonality_period, "seasonality_period");
  ordered(trend_amplitude, "trend_amplitude");
  ordered(seasonality_amplitude, "seasonality_amplitude");
  ordered(offset, "offset");
  ordered(ar_param, "ar_param");
  ordered(ar_noise, "ar_noise");
  ordered(rw_step, "rw_step");
  ordered(clamp, "clamp");
  if (trend_period.lo <= 0.0 || seasonality_period.lo <= 0.0)
    throw Error("sinusoid periods must be positive");
  if (pattern_length < 1 || n_distinct_patterns < 1 || occurrences_per_pattern < 1 || ar_order < 1)
    throw Error("pattern length, counts and AR order must be >= 1");
  if (total_length < pattern_length * n_distinct_patterns * occurrences_per_pattern)
    throw Error("total_length too short for the requested pattern occurrences");
  if (!(train_fraction > 0.0 && test_fraction > 0.0 && train_fraction + test_fraction < 1.0))
    throw Error("train/test fractions must be positive and leave room for validation");
}

SplitSpec SyntheticSpec::split() const {
  SplitSpec s;
  s.train_end = static_cast<Index>(static_cast<double>(total_length) * train_fraction);
  s.val_end = total_length - static_cast<Index>(static_cast<double>(total_length) * test_fraction);
  return s;
}

double Sinusoid::at(Index t) const {
  return amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period) + offset;
}

Background gen_background(const SyntheticSpec& spec, Rng& rng) {
  Background bg;
  bg.trend.period = spec.trend_period.draw(rng);
  bg.trend.amplitude = spec.trend_amplitude.draw(rng);
  bg.trend.offset = spec.offset.draw(rng);
  bg.seasonality.period = spec.seasonality_period.draw(rng);
  bg.seasonality.amplitude = spec.seasonality_amplitude.draw(rng);
  bg.seasonality.offset = spec.offset.draw(rng);
  bg.values.resize(static_cast<std::size_t>(spec.total_length));
  for (Index t = 0; t < spec.total_length; ++t)
    bg.values[t] = bg.trend.at(t) + bg.seasonality.at(t);
  return bg;
}

std::vector<double> replay_ar(const std::vector<double>& phi, const std::vector<double>& noise,
                              Range clamp) {
  std::vector<double> x(noise.size());
  for (std::size_t t = 0; t < noise.size(); ++t) {
    double v = noise[t];
    for (std::size_t i = 1; i <= phi.size() && i <= t; ++i) v += phi[i - 1] * x[t - i];
    x[t] = std::clamp(v, clamp.lo, clamp.hi);
  }
  return x;
}

ArPattern gen_ar_pattern(const SyntheticSpec& spec, Rng& rng) {
  ArPattern pat;
  for (int i = 0; i < spec.ar_order; ++i) pat.phi.push_back(spec.ar_param.draw(rng));
  for (Index t = 0; t < spec.pattern_length; ++t) pat.noise.push_back(spec.ar_noise.draw(rng));
  pat.values = replay_ar(pat.phi, pat.noise, spec.clamp);
  return pat;
}

RwPattern gen_rw_pattern(const SyntheticSpec& spec, Rng& rng) {
  RwPattern pat;
  pat.steps.assign(static_cast<std::size_t>(spec.pattern_length), 0.0);
  pat.values.assign(static_cast<std::size_t>(spec.pattern_length), 0.0);
  double level = 0.0;
  for (Index t = 1; t < spec.pattern_length; ++t) {
    pat.steps[t] = spec.rw_step.draw(rng);
    level += pat.steps[t];
    pat.values[t] = level;
  }
  for (double& v : pat.values) v = std::clamp(v, spec.clamp.lo, spec.clamp.hi);
  return pat;
}

namespace {

bool overlaps(Index start, Index length, const std::vector<PatternAnnotation>& taken) {
  for (const auto& a : taken)
    if (start < a.start + a.length && a.start < start + length) return true;
  return false;
}

Index place(Rng& rng, Index begin, Index end, Index length,
            const std::vector<PatternAnnotation>& taken) {
  if (end - begin < length) throw Error("region too short to place a pattern");
  std::uniform_int_distribution<Index> pos(begin, end - length);
  constexpr int kRetries = 10000;
  for (int attempt = 0; attempt < kRetries; ++attempt) {
    const Index s = pos(rng);
    if (!overlaps(s, length, taken)) return s;
  }
  throw Error("could not place a non-overlapping pattern after " + std::to_string(kRetries) +
              " attempts");
}

}  // namespace

SyntheticSeries assemble(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const Background bg = gen_background(spec, rng);

  std::vector<std::vector<double>> patterns;
  for (int k = 0; k < spec.n_distinct_patterns; ++k) {
    if (spec.pattern_kind == PatternKind::ar)
      patterns.push_back(gen_ar_pattern(spec, rng).values);
    else
      patterns.push_back(gen_rw_pattern(spec, rng).values);
  }

  const SplitSpec borders = spec.split();
  std::vector<PatternAnnotation> notes;
  for (int k = 0; k < spec.n_distinct_patterns; ++k)
    for (int o = 0; o < spec.occurrences_per_pattern; ++o)
      notes.push_back({k, place(rng, 0, borders.train_end, spec.pattern_length, notes),
                       spec.pattern_length, Region::train});
  for (int k = 0; k < spec.n_distinct_patterns; ++k)
    notes.push_back({k, place(rng, borders.val_end, spec.total_length, spec.pattern_length, notes),
                     spec.pattern_length, Region::test});
  std::sort(notes.begin(), notes.end(),
            [](const auto& a, const auto& b) { return a.start < b.start; });

  Matrix values(1, spec.total_length);
  for (Index t = 0; t < spec.total_length; ++t) values(0, t) = bg.values[t];
  for (const auto& a : notes)
    for (Index t = 0; t < a.length; ++t) values(0, a.start + t) += patterns[a.pattern_id][t];

  std::vector<std::string> stamps;
  stamps.reserve(static_cast<std::size_t>(spec.total_length));
  for (Index t = 0; t < spec.total_length; ++t) stamps.push_back(std::to_string(t));
  return {TimeSeries(std::move(values), {"value"}, "step", std::move(stamps)), bg.values,
          std::move(patterns), std::move(notes)};
}

void write_annotations_csv(const std::string& path, const std::vector<PatternAnnotation>& notes) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "pattern_id,start,length,region\n";
  for (const auto& a : notes)
    out << a.pattern_id << ',' << a.start << ',' << a.length << ','
        << (a.region == Region::train ? "train" : "test") << '\n';
}

}  // namespace raft::synthetic
