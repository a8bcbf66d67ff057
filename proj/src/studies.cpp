#include "raft/studies.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "raft/metrics.hpp"

namespace raft {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void MetricReport::append(const MetricReport& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

std::vector<MeanRow> MetricReport::means() const {
  using Key = std::tuple<std::string, Index, std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::vector<const MetricRow*>> groups;
  for (const auto& r : rows) {
    Key k{r.dataset, r.horizon, r.variant, r.config};
    if (!groups.count(k)) order.push_back(k);
    groups[k].push_back(&r);
  }

  std::vector<MeanRow> out;
  using AvgKey = std::tuple<std::string, std::string, std::string>;
  std::vector<AvgKey> avg_order;
  std::map<AvgKey, std::vector<std::pair<double, double>>> per_horizon;
  std::map<AvgKey, std::size_t> seed_counts;
  for (const auto& k : order) {
    const auto& g = groups[k];
    MeanRow m{std::get<0>(k), std::to_string(std::get<1>(k)), std::get<2>(k), std::get<3>(k),
              g.size(), 0.0, 0.0};
    for (const auto* r : g) {
      m.mse += r->mse;
      m.mae += r->mae;
    }
    m.mse /= static_cast<double>(g.size());
    m.mae /= static_cast<double>(g.size());
    out.push_back(m);
    AvgKey a{m.dataset, m.variant, m.config};
    if (!per_horizon.count(a)) avg_order.push_back(a);
    per_horizon[a].emplace_back(m.mse, m.mae);
    seed_counts[a] = std::max(seed_counts[a], m.seeds);
  }
  for (const auto& a : avg_order) {
    const auto& h = per_horizon[a];
    MeanRow m{std::get<0>(a), "avg", std::get<1>(a), std::get<2>(a), seed_counts[a], 0.0, 0.0};
    for (const auto& [mse_v, mae_v] : h) {
      m.mse += mse_v;
      m.mae += mae_v;
    }
    m.mse /= static_cast<double>(h.size());
    m.mae /= static_cast<double>(h.size());
    out.push_back(m);
  }
  return out;
}

void MetricReport::write_csv(const std::string& path) const {
  auto out = open_out(path);
  out << "dataset,horizon,variant,config,seed,mse,mae,val_mse\n";
  for (const auto& r : rows)
    out << r.dataset << ',' << r.horizon << ',' << r.variant << ',' << r.config << ',' << r.seed << ','
        << fmt(r.mse) << ',' << fmt(r.mae) << ',' << fmt(r.val_mse) << '\n';
}

void MetricReport::write_means_csv(const std::string& path) const {
  auto out = open_out(path);
  out << "dataset,horizon,variant,config,seeds,mse,mae\n";
  for (const auto& m : means())
    out << m.dataset << ',' << m.horizon << ',' << m.variant << ',' << m.config << ',' << m.seeds
        << ',' << fmt(m.mse) << ',' << fmt(m.mae) << '\n';
}

void MetricReport::write_timings_csv(const std::string& path) const {
  auto out = open_out(path);
  out << "dataset,horizon,variant,config,seed,precompute_seconds,seconds_per_epoch,inference_seconds\n";
  for (const auto& r : rows)
    out << r.dataset << ',' << r.horizon << ',' << r.variant << ',' << r.config << ',' << r.seed << ','
        << fmt(r.precompute_seconds) << ',' << fmt(r.seconds_per_epoch) << ','
        << fmt(r.inference_seconds) << '\n';
}

std::string MetricReport::summary_json() const {
  nlohmann::ordered_json j;
  j["means"] = nlohmann::ordered_json::array();
  for (const auto& m : means()) {
    nlohmann::ordered_json row;
    row["dataset"] = m.dataset;
    row["horizon"] = m.horizon;
    row["variant"] = m.variant;
    row["config"] = m.config;
    row["seeds"] = m.seeds;
    row["mse"] = m.mse;
    row["mae"] = m.mae;
    j["means"].push_back(row);
  }
  j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["dataset"] = r.dataset;
    row["horizon"] = r.horizon;
    row["variant"] = r.variant;
    row["config"] = r.config;
    row["seed"] = r.seed;
    row["mse"] = r.mse;
    row["mae"] = r.mae;
    row["val_mse"] = r.val_mse;
    j["runs"].push_back(row);
  }
  return j.dump(2);
}

MetricRow make_row(const std::string& dataset, const ExperimentParams& params,
                   const std::string& config, std::uint64_t seed, const RunOutcome& run) {
  MetricRow r;
  r.dataset = dataset;
  r.horizon = params.horizon;
  r.variant = to_string(params.variant);
  r.config = config;
  r.seed = seed;
  r.mse = run.test.mse;
  r.mae = run.test.mae;
  r.val_mse = run.val.mse;
  r.precompute_seconds = run.precompute_seconds;
  r.seconds_per_epoch = run.seconds_per_epoch;
  r.inference_seconds = run.inference_seconds;
  return r;
}

MetricReport evaluate(const PreparedData& data, ExperimentParams params,
                      const std::vector<Index>& horizons, const std::vector<std::uint64_t>& seeds,
                      const std::string& config_label) {
  if (horizons.empty() || seeds.empty()) throw Error("evaluate needs at least one horizon and seed");
  MetricReport report;
  for (Index h : horizons) {
    params.horizon = h;
    RetrievalBundle shared;
    const bool share = !retrieval_depends_on_seed(params);
    if (share) shared = build_retrieval(data, params, seeds.front());
    for (auto seed : seeds) {
      const RunOutcome run = run_experiment(data, params, seed, share ? &shared : nullptr);
      report.add(make_row(data.name, params, config_label, seed, run));
      if (params.train.verbose)
        std::cerr << data.name << " F=" << h << ' ' << to_string(params.variant) << ' '
                  << config_label << " seed=" << seed << " mse=" << run.test.mse << '\n';
    }
  }
  return report;
}

void GridSpace::validate() const {
  if (learning_rates.empty() || lookbacks.empty() || ms.empty())
    throw Error("grid space axes must be nonempty");
}

GridResult grid_search(const PreparedData& data, const ExperimentParams& base, const GridSpace& space,
                       const std::vector<std::uint64_t>& seeds) {
  space.validate();
  if (seeds.empty()) throw Error("grid search needs at least one seed");
  std::vector<double> lrs = space.learning_rates;
  std::vector<Index> lookbacks = space.lookbacks;
  std::vector<int> ms = space.ms;
  std::sort(lrs.begin(), lrs.end());
  std::sort(lookbacks.begin(), lookbacks.end());
  std::sort(ms.begin(), ms.end());

  GridResult result;
  for (Index lookback : lookbacks) {
    for (int m : ms) {
      ExperimentParams params = base;
      params.lookback = lookback;
      params.retrieval.m = m;
      RetrievalBundle shared;
      const bool share = !retrieval_depends_on_seed(params);
      if (share) shared = build_retrieval(data, params, seeds.front(), nullptr, false);
      for (double lr : lrs) {
        params.train.learning_rate = lr;
        double val = 0.0;
        for (auto seed : seeds)
          val += run_experiment(data, params, seed, share ? &shared : nullptr, nullptr, false).val.mse;
        result.points.push_back({lr, lookback, m, val / static_cast<double>(seeds.size())});
        if (base.train.verbose)
          std::cerr << "grid lr=" << lr << " L=" << lookback << " m=" << m
                    << " val_mse=" << result.points.back().val_mse << '\n';
      }
    }
  }
  std::sort(result.points.begin(), result.points.end(),
            [](const GridPoint& a, const GridPoint& b) { return a.key() < b.key(); });
  for (std::size_t i = 1; i < result.points.size(); ++i)
    if (result.points[i].val_mse < result.points[result.best].val_mse) result.best = i;

  const GridPoint& best = result.points[result.best];
  ExperimentParams params = base;
  params.lookback = best.lookback;
  params.retrieval.m = best.m;
  params.train.learning_rate = best.learning_rate;
  std::ostringstream label;
  label << "lr=" << best.learning_rate << ";L=" << best.lookback << ";m=" << best.m;
  result.selected = evaluate(data, params, {params.horizon}, seeds, label.str());
  return result;
}

MetricReport run_ablation(const PreparedData& data, const ExperimentParams& base,
                          const std::vector<Variant>& variants, const std::vector<Index>& horizons,
                          const std::vector<std::uint64_t>& seeds) {
  MetricReport report;
  for (Variant v : variants) {
    ExperimentParams params = base;
    params.variant = v;
    report.append(evaluate(data, params, horizons, seeds));
  }
  return report;
}

std::vector<StrideRow> stride_study(const PreparedData& data, const ExperimentParams& base,
                                    const std::vector<Index>& strides,
                                    const std::vector<std::uint64_t>& seeds, MetricReport* report) {
  if (strides.empty() || seeds.empty()) throw Error("stride study needs strides and seeds");
  std::vector<StrideRow> rows;
  for (Index stride : strides) {
    if (stride < 1) throw Error("stride must be >= 1");
    ExperimentParams params = base;
    params.stride = stride;
    const auto t0 = std::chrono::steady_clock::now();
    RetrievalBundle shared;
    const bool share = !retrieval_depends_on_seed(params);
    if (share) shared = build_retrieval(data, params, seeds.front());
    StrideRow row;
    row.stride = stride;
    row.precompute_seconds = seconds_since(t0);
    row.candidates = shared.active() ? shared.index->size() : 0;
    for (auto seed : seeds) {
      const RunOutcome run = run_experiment(data, params, seed, share ? &shared : nullptr);
      row.mse += run.test.mse;
      row.mae += run.test.mae;
      if (report) report->add(make_row(data.name, params, "stride=" + std::to_string(stride), seed, run));
    }
    row.mse /= static_cast<double>(seeds.size());
    row.mae /= static_cast<double>(seeds.size());
    rows.push_back(row);
    if (base.train.verbose)
      std::cerr << "stride " << stride << " precompute=" << row.precompute_seconds
                << "s mse=" << row.mse << '\n';
  }
  return rows;
}

void write_stride_csvs(const std::string& dir, const std::string& dataset,
                       const std::vector<StrideRow>& rows) {
  const std::filesystem::path d(dir);
  auto time_out = open_out((d / "stride_walltime.csv").string());
  time_out << "dataset,stride,candidates,precompute_seconds\n";
  for (const auto& r : rows)
    time_out << dataset << ',' << r.stride << ',' << r.candidates << ',' << fmt(r.precompute_seconds)
             << '\n';
  auto mse_out = open_out((d / "stride_mse.csv").string());
  mse_out << "dataset,stride,mse,mae\n";
  for (const auto& r : rows)
    mse_out << dataset << ',' << r.stride << ',' << fmt(r.mse) << ',' << fmt(r.mae) << '\n';
}

MetricReport similarity_study(const PreparedData& data, const ExperimentParams& base,
                              const std::vector<MetricKind>& metrics,
                              const std::vector<std::uint64_t>& seeds) {
  MetricReport report;
  for (MetricKind kind : metrics) {
    ExperimentParams params = base;
    params.retrieval.metric.kind = kind;
    report.append(evaluate(data, params, {params.horizon}, seeds, to_string(kind)));
  }
  return report;
}

DiagnosticsRecord diagnose_window(const PatchIndex& index, const RetrievalResult& retrieval,
                                  const Matrix& input, const Matrix& target,
                                  const Matrix& pred_with, const Matrix& pred_without) {
  const PeriodRetrieval& pr = retrieval.at_period(1);
  SimilarityMetric metric;
  const AnchoredPatch query = subtract_offset(Patch{input, 0, 1});
  AnchoredPatch future{target, query.offset};
  for (Index c = 0; c < future.values.rows(); ++c) future.values.row(c).array() -= query.offset(c);

  DiagnosticsRecord rec;
  for (Index cand : pr.candidates) {
    rec.key_similarity += similarity(query, index.key(cand, 1), metric);
    rec.value_similarity += similarity(future, index.value(cand, 1), metric);
  }
  if (!pr.candidates.empty()) {
    rec.key_similarity /= static_cast<double>(pr.candidates.size());
    rec.value_similarity /= static_cast<double>(pr.candidates.size());
  }
  rec.mse_with = mse(pred_with, target);
  rec.mse_without = mse(pred_without, target);
  rec.mse_change_percent =
      rec.mse_without > 0.0 ? 100.0 * (rec.mse_with - rec.mse_without) / rec.mse_without : 0.0;
  return rec;
}

Diagnostics summarize_diagnostics(std::vector<DiagnosticsRecord> records) {
  if (records.size() < 3)
    throw Error("diagnostics need at least 3 records, got " + std::to_string(records.size()));
  Diagnostics d;
  std::vector<double> key, value, change;
  for (const auto& r : records) {
    key.push_back(r.key_similarity);
    value.push_back(r.value_similarity);
    change.push_back(r.mse_change_percent);
  }
  d.spearman_key_value = spearman(key, value);
  d.spearman_value_change = spearman(value, change);
  d.records = std::move(records);
  return d;
}

Diagnostics diagnostics(const PreparedData& data, const ExperimentParams& params, std::uint64_t seed) {
  ExperimentParams with = params;
  with.variant = Variant::full;
  if (with.retrieval.metric.kind == MetricKind::cosine_projected)
    throw Error("diagnostics need a fixed similarity metric");
  if (std::find(with.periods.begin(), with.periods.end(), 1) == with.periods.end())
    throw Error("diagnostics need period 1 in the period set");
  ExperimentParams without = params;
  without.variant = Variant::no_retrieval;

  const RetrievalBundle bundle = build_retrieval(data, with, seed);
  const RunOutcome run_with = run_experiment(data, with, seed, &bundle);
  const RunOutcome run_without = run_experiment(data, without, seed);

  const WindowSet test = data.test_windows(params.lookback, params.horizon);
  const auto pred_with = forecast_windows(run_with.model, test, &bundle.source, &*bundle.test_cache);
  const auto pred_without = forecast_windows(run_without.model, test, nullptr);
  std::vector<DiagnosticsRecord> records;
  for (std::size_t i = 0; i < test.starts.size(); ++i) {
    const Index s = test.starts[i];
    auto rec = diagnose_window(*bundle.index, bundle.test_cache->get(s),
                               test.input(s, params.lookback).values,
                               test.target(s, params.lookback, params.horizon), pred_with[i],
                               pred_without[i]);
    rec.query_start = s;
    records.push_back(rec);
  }
  return summarize_diagnostics(std::move(records));
}

void write_diagnostics_csv(const std::string& path, const Diagnostics& diag) {
  auto out = open_out(path);
  out << "query_start,key_similarity,value_similarity,mse_with,mse_without,mse_change_percent\n";
  for (const auto& r : diag.records)
    out << r.query_start << ',' << fmt(r.key_similarity) << ',' << fmt(r.value_similarity) << ','
        << fmt(r.mse_with) << ',' << fmt(r.mse_without) << ',' << fmt(r.mse_change_percent) << '\n';
}

MetricReport training_length_study(const TimeSeries& raw, const SplitSpec& split,
                                   const std::string& name, const ExperimentParams& base,
                                   const std::vector<double>& fractions,
                                   const std::vector<std::uint64_t>& seeds) {
  std::vector<PreparedData> prepared;
  for (double f : fractions) {
    prepared.push_back(PreparedData::from(raw, split, name, f));
    if (prepared.back().train().length() < base.lookback + base.horizon)
      throw Error("training fraction " + fmt(f) + " leaves " +
                  std::to_string(prepared.back().train().length()) +
                  " steps, shorter than L + F = " + std::to_string(base.lookback + base.horizon));
  }
  MetricReport report;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    for (Variant v : {Variant::full, Variant::no_retrieval}) {
      ExperimentParams params = base;
      params.variant = v;
      report.append(evaluate(prepared[i], params, {params.horizon}, seeds,
                             "fraction=" + fmt(fractions[i])));
    }
  }
  return report;
}

std::vector<Index> pattern_windows(const PreparedData& data,
                                   const std::vector<synthetic::PatternAnnotation>& notes,
                                   Index lookback, Index horizon) {
  std::vector<Index> out;
  for (Index s : data.test_windows(lookback, horizon).starts) {
    const Index t0 = s + lookback, t1 = s + lookback + horizon;
    for (const auto& a : notes) {
      if (a.region != synthetic::Region::test) continue;
      if (t0 < a.start + a.length && a.start < t1) {
        out.push_back(s);
        break;
      }
    }
  }
  return out;
}

std::vector<SyntheticLevel> synthetic_study(const SyntheticStudyConfig& config) {
  if (config.series_per_level < 1) throw Error("synthetic study needs at least one series per level");
  ExperimentParams with = config.params;
  with.periods = {1};
  with.variant = Variant::full;
  ExperimentParams without = with;
  without.variant = Variant::no_retrieval;

  std::vector<SyntheticLevel> levels;
  for (int occ : config.occurrences) {
    SyntheticLevel level;
    level.occurrences = occ;
    for (int i = 0; i < config.series_per_level; ++i) {
      synthetic::SyntheticSpec spec = config.spec;
      spec.occurrences_per_pattern = occ;
      spec.seed = config.base_seed + 1000 * static_cast<std::uint64_t>(occ) + static_cast<std::uint64_t>(i);
      const auto gen = synthetic::assemble(spec);
      const PreparedData data = PreparedData::from(gen.series, spec.split(), "synthetic");
      const auto starts = pattern_windows(data, gen.annotations, with.lookback, with.horizon);
      if (starts.empty()) throw Error("no test window meets an annotated pattern");
      const auto seed = static_cast<std::uint64_t>(i);
      const double a = run_experiment(data, with, seed, nullptr, &starts).test.mse;
      const double b = run_experiment(data, without, seed, nullptr, &starts).test.mse;
      level.mse_with.push_back(a);
      level.mse_without.push_back(b);
      if (config.verbose)
        std::cerr << "synthetic " << synthetic::to_string(spec.pattern_kind) << " occ=" << occ
                  << " series=" << i << " with=" << a << " without=" << b << '\n';
    }
    level.mean_with = mean(level.mse_with);
    level.mean_without = mean(level.mse_without);
    level.change_percent = 100.0 * (level.mean_with - level.mean_without) / level.mean_without;
    levels.push_back(std::move(level));
  }
  return levels;
}

void write_synthetic_csv(const std::string& path, const std::string& kind,
                         const std::vector<SyntheticLevel>& levels) {
  auto out = open_out(path);
  out << "kind,occurrences,series,mse_with,mse_without,change_percent\n";
  for (const auto& l : levels)
    out << kind << ',' << l.occurrences << ',' << l.mse_with.size() << ',' << fmt(l.mean_with) << ','
        << fmt(l.mean_without) << ',' << fmt(l.change_percent) << '\n';
}

}  // namespace raft
