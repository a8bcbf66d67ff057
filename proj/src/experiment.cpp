#include "raft/experiment.hpp"

#include <chrono>

namespace raft {

namespace {
double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}
}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "random_retrieval") return Variant::random_retrieval;
  if (name == "no_attention") return Variant::no_attention;
  if (name == "one_period") return Variant::one_period;
  if (name == "no_retrieval") return Variant::no_retrieval;
  throw Error("unknown variant '" + name +
              "' (expected full, random_retrieval, no_attention, one_period, no_retrieval)");
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::full: return "full";
    case Variant::random_retrieval: return "random_retrieval";
    case Variant::no_attention: return "no_attention";
    case Variant::one_period: return "one_period";
    case Variant::no_retrieval: return "no_retrieval";
  }
  return "unknown";
}

std::vector<int> ExperimentParams::effective_periods() const {
  switch (variant) {
    case Variant::no_retrieval: return {};
    case Variant::one_period: return {1};
    default: return periods;
  }
}

PreparedData PreparedData::from(const TimeSeries& raw, const SplitSpec& split_spec,
                                std::string name, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw Error("training fraction must lie in (0, 1]");
  PreparedData data;
  data.name = std::move(name);
  auto raw_ptr = std::make_shared<const TimeSeries>(raw);
  const auto raw_views = raft::split(raw_ptr, split_spec);
  data.stats = fit_standardize(raw_views[0].materialize());
  data.series = std::make_shared<const TimeSeries>(apply_standardize(data.stats, raw));
  data.views = raft::split(data.series, split_spec);
  if (train_fraction < 1.0) {
    SeriesView& tr = data.views[0];
    const Index keep = static_cast<Index>(static_cast<double>(tr.length()) * train_fraction);
    if (keep < 1) throw Error("training fraction leaves no training data");
    tr.begin = tr.end - keep;
    tr.reach_begin = tr.begin;
  }
  return data;
}

WindowSet PreparedData::train_windows(Index lookback, Index horizon) const {
  const auto& tr = train();
  if (tr.length() < lookback + horizon)
    throw Error("training split of length " + std::to_string(tr.length()) +
                " is shorter than L + F = " + std::to_string(lookback + horizon));
  WindowSet w{series, {}, true};
  for (Index s = tr.begin; s + lookback + horizon <= tr.end; ++s) w.starts.push_back(s);
  return w;
}

WindowSet PreparedData::val_windows(Index lookback, Index horizon) const {
  return {series, val().window_starts(lookback, horizon), false};
}

WindowSet PreparedData::test_windows(Index lookback, Index horizon) const {
  return {series, test().window_starts(lookback, horizon), false};
}

bool retrieval_depends_on_seed(const ExperimentParams& params) {
  return params.variant == Variant::random_retrieval ||
         params.retrieval.metric.kind == MetricKind::cosine_projected;
}

RetrievalBundle build_retrieval(const PreparedData& data, const ExperimentParams& params,
                                std::uint64_t seed, const std::vector<Index>* test_starts,
                                bool with_test) {
  RetrievalBundle bundle;
  const auto periods = params.effective_periods();
  if (periods.empty()) return bundle;

  auto t0 = std::chrono::steady_clock::now();
  const TimeSeries train_series = data.series->slice(data.train().begin, data.train().end);
  bundle.index = std::make_unique<PatchIndex>(PatchIndex::build(
      train_series, params.lookback, params.horizon, params.stride, periods, data.train().begin));
  bundle.index_seconds = seconds_since(t0);

  bundle.source.index = bundle.index.get();
  bundle.source.params = params.retrieval;
  bundle.source.jobs = params.train.jobs;
  if (params.variant == Variant::no_attention) bundle.source.params.weighting = Weighting::uniform;
  if (params.variant == Variant::random_retrieval) {
    bundle.source.mode = RetrievalMode::random;
    bundle.source.random_seed = seed;
  }
  if (bundle.source.projected()) return bundle;

  t0 = std::chrono::steady_clock::now();
  bundle.train_cache = build_cache(bundle.source, data.train_windows(params.lookback, params.horizon));
  bundle.val_cache = build_cache(bundle.source, data.val_windows(params.lookback, params.horizon));
  if (with_test) {
    WindowSet test = data.test_windows(params.lookback, params.horizon);
    if (test_starts) test.starts = *test_starts;
    bundle.test_cache = build_cache(bundle.source, test);
  }
  bundle.precompute_seconds = seconds_since(t0);
  return bundle;
}

RunOutcome run_experiment(const PreparedData& data, const ExperimentParams& params,
                          std::uint64_t seed, const RetrievalBundle* bundle,
                          const std::vector<Index>* test_starts, bool with_test) {
  RetrievalBundle own;
  if (!bundle || (retrieval_depends_on_seed(params) && bundle->source.random_seed != seed)) {
    own = build_retrieval(data, params, seed, test_starts, with_test);
    bundle = &own;
  }

  const auto periods = params.effective_periods();
  std::optional<ProjectionSpec> projection;
  if (!periods.empty() && params.retrieval.metric.kind == MetricKind::cosine_projected)
    projection = ProjectionSpec{data.series->channels(), params.retrieval.metric.embed_dim};
  ForecastModel model = init_model(params.lookback, params.horizon, periods, seed, projection);

  TrainConfig config = params.train;
  config.seed = seed;
  const RetrievalSource* source = bundle->active() ? &bundle->source : nullptr;
  const RetrievalCache* train_cache = bundle->train_cache ? &*bundle->train_cache : nullptr;
  const RetrievalCache* val_cache = bundle->val_cache ? &*bundle->val_cache : nullptr;
  const RetrievalCache* test_cache = bundle->test_cache ? &*bundle->test_cache : nullptr;

  const WindowSet train_w = data.train_windows(params.lookback, params.horizon);
  const WindowSet val_w = data.val_windows(params.lookback, params.horizon);
  RunOutcome out;
  TrainResult trained = train(std::move(model), train_w, val_w, source, config, train_cache, val_cache);
  out.model = std::move(trained.model);
  out.history = std::move(trained.history);
  out.precompute_seconds = bundle->precompute_seconds + out.history.retrieval_seconds;
  double epoch_total = 0.0;
  for (const auto& e : out.history.epochs) epoch_total += e.seconds;
  out.seconds_per_epoch = epoch_total / static_cast<double>(out.history.epochs.size());

  out.val = evaluate_windows(out.model, val_w, source, val_cache);
  if (!with_test) return out;
  WindowSet test_w = data.test_windows(params.lookback, params.horizon);
  if (test_starts) test_w.starts = *test_starts;
  const auto t0 = std::chrono::steady_clock::now();
  out.test = evaluate_windows(out.model, test_w, source, test_cache);
  out.inference_seconds = seconds_since(t0);
  return out;
}

}  // namespace raft
