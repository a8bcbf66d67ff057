#include "raft/config.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace raft {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& what) {
  throw Error("invalid value '" + value + "' for " + key + ": " + what);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) bad(key, raw, "not a number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  bad(key, raw, "expected true or false");
}

template <typename T, typename Fn>
std::vector<T> parse_list(const std::string& key, const std::string& raw, Fn&& item) {
  std::vector<T> out;
  std::stringstream ss(raw);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(item(tok));
  }
  if (out.empty()) bad(key, raw, "empty list");
  return out;
}

template <typename T>
std::vector<T> parse_numbers(const std::string& key, const std::string& raw) {
  return parse_list<T>(key, raw, [&](const std::string& t) { return parse_number<T>(key, t); });
}

template <typename T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

template <typename T>
std::string nums(const std::vector<T>& v) {
  return join<T>(v, [](const T& x) { return num(static_cast<double>(x)); });
}

template <typename Fn>
auto rethrow_named(const std::string& key, const std::string& raw, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    const std::string msg = e.what();
    if (msg.find(key) != std::string::npos) throw;
    bad(key, raw, msg);
  }
}

struct Setting {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::map<std::string, Setting>& settings() {
  using C = ExperimentConfig;
  using S = const std::string&;
  static const std::map<std::string, Setting> table = {
      {"data.path", {[](C& c, S, S v) { c.dataset_path = trim(v); },
                     [](const C& c) { return c.dataset_path; }}},
      {"data.name", {[](C& c, S, S v) { c.dataset_name = trim(v); },
                     [](const C& c) { return c.dataset_name; }}},
      {"data.target", {[](C& c, S, S v) {
                         const auto t = trim(v);
                         c.target = t.empty() ? std::nullopt : std::optional<std::string>(t);
                       },
                       [](const C& c) { return c.target.value_or(""); }}},
      {"data.train_end", {[](C& c, S k, S v) { c.train_end = parse_number<Index>(k, v); },
                          [](const C& c) { return c.train_end ? std::to_string(*c.train_end) : ""; }}},
      {"data.val_end", {[](C& c, S k, S v) { c.val_end = parse_number<Index>(k, v); },
                        [](const C& c) { return c.val_end ? std::to_string(*c.val_end) : ""; }}},
      {"data.test_end", {[](C& c, S k, S v) { c.test_end = parse_number<Index>(k, v); },
                         [](const C& c) { return c.test_end ? std::to_string(*c.test_end) : ""; }}},
      {"data.train_fraction", {[](C& c, S k, S v) { c.train_fraction = parse_number<double>(k, v); },
                               [](const C& c) { return num(c.train_fraction); }}},
      {"model.lookback", {[](C& c, S k, S v) { c.params.lookback = parse_number<Index>(k, v); },
                          [](const C& c) { return std::to_string(c.params.lookback); }}},
      {"model.horizons", {[](C& c, S k, S v) { c.horizons = parse_numbers<Index>(k, v); },
                          [](const C& c) { return nums(c.horizons); }}},
      {"model.periods", {[](C& c, S k, S v) { c.params.periods = parse_numbers<int>(k, v); },
                         [](const C& c) { return nums(c.params.periods); }}},
      {"model.variant",
       {[](C& c, S k, S v) { c.params.variant = rethrow_named(k, v, [&] { return parse_variant(trim(v)); }); },
        [](const C& c) { return to_string(c.params.variant); }}},
      {"retrieval.m", {[](C& c, S k, S v) { c.params.retrieval.m = parse_number<int>(k, v); },
                       [](const C& c) { return std::to_string(c.params.retrieval.m); }}},
      {"retrieval.tau", {[](C& c, S k, S v) { c.params.retrieval.tau = parse_number<double>(k, v); },
                         [](const C& c) { return num(c.params.retrieval.tau); }}},
      {"retrieval.metric",
       {[](C& c, S k, S v) {
          c.params.retrieval.metric.kind = rethrow_named(k, v, [&] { return parse_metric(trim(v)); });
        },
        [](const C& c) { return to_string(c.params.retrieval.metric.kind); }}},
      {"retrieval.reduction",
       {[](C& c, S k, S v) {
          const auto t = trim(v);
          if (t == "channel_mean") c.params.retrieval.metric.reduction = ChannelReduction::channel_mean;
          else if (t == "flatten") c.params.retrieval.metric.reduction = ChannelReduction::flatten;
          else bad(k, v, "expected channel_mean or flatten");
        },
        [](const C& c) {
          return std::string(c.params.retrieval.metric.reduction == ChannelReduction::flatten
                                 ? "flatten" : "channel_mean");
        }}},
      {"retrieval.embed_dim",
       {[](C& c, S k, S v) { c.params.retrieval.metric.embed_dim = parse_number<int>(k, v); },
        [](const C& c) { return std::to_string(c.params.retrieval.metric.embed_dim); }}},
      {"retrieval.stride", {[](C& c, S k, S v) { c.params.stride = parse_number<Index>(k, v); },
                            [](const C& c) { return std::to_string(c.params.stride); }}},
      {"train.learning_rate",
       {[](C& c, S k, S v) { c.params.train.learning_rate = parse_number<double>(k, v); },
        [](const C& c) { return num(c.params.train.learning_rate); }}},
      {"train.batch_size", {[](C& c, S k, S v) { c.params.train.batch_size = parse_number<Index>(k, v); },
                            [](const C& c) { return std::to_string(c.params.train.batch_size); }}},
      {"train.max_epochs", {[](C& c, S k, S v) { c.params.train.max_epochs = parse_number<int>(k, v); },
                            [](const C& c) { return std::to_string(c.params.train.max_epochs); }}},
      {"train.patience", {[](C& c, S k, S v) { c.params.train.patience = parse_number<int>(k, v); },
                          [](const C& c) { return std::to_string(c.params.train.patience); }}},
      {"train.optimizer",
       {[](C& c, S k, S v) {
          const auto t = trim(v);
          if (t == "adam") c.params.train.optimizer = OptimizerKind::adam;
          else if (t == "sgd") c.params.train.optimizer = OptimizerKind::sgd;
          else bad(k, v, "expected adam or sgd");
        },
        [](const C& c) {
          return std::string(c.params.train.optimizer == OptimizerKind::adam ? "adam" : "sgd");
        }}},
      {"train.seeds", {[](C& c, S k, S v) { c.seeds = parse_numbers<std::uint64_t>(k, v); },
                       [](const C& c) { return nums(c.seeds); }}},
      {"train.jobs", {[](C& c, S k, S v) { c.params.train.jobs = parse_number<int>(k, v); },
                      [](const C& c) { return std::to_string(c.params.train.jobs); }}},
      {"train.verbose", {[](C& c, S k, S v) { c.params.train.verbose = parse_bool(k, v); },
                         [](const C& c) { return std::string(c.params.train.verbose ? "true" : "false"); }}},
      {"study.variants",
       {[](C& c, S k, S v) {
          c.variants = parse_list<Variant>(k, v, [&](const std::string& t) {
            return rethrow_named(k, v, [&] { return parse_variant(t); });
          });
        },
        [](const C& c) { return join<Variant>(c.variants, [](const Variant& x) { return to_string(x); }); }}},
      {"study.strides", {[](C& c, S k, S v) { c.strides = parse_numbers<Index>(k, v); },
                         [](const C& c) { return nums(c.strides); }}},
      {"study.metrics",
       {[](C& c, S k, S v) {
          c.metrics = parse_list<MetricKind>(k, v, [&](const std::string& t) {
            return rethrow_named(k, v, [&] { return parse_metric(t); });
          });
        },
        [](const C& c) {
          return join<MetricKind>(c.metrics, [](const MetricKind& x) { return to_string(x); });
        }}},
      {"study.fractions", {[](C& c, S k, S v) { c.fractions = parse_numbers<double>(k, v); },
                           [](const C& c) { return nums(c.fractions); }}},
      {"grid.learning_rates", {[](C& c, S k, S v) { c.grid.learning_rates = parse_numbers<double>(k, v); },
                               [](const C& c) { return nums(c.grid.learning_rates); }}},
      {"grid.lookbacks", {[](C& c, S k, S v) { c.grid.lookbacks = parse_numbers<Index>(k, v); },
                          [](const C& c) { return nums(c.grid.lookbacks); }}},
      {"grid.ms", {[](C& c, S k, S v) { c.grid.ms = parse_numbers<int>(k, v); },
                   [](const C& c) { return nums(c.grid.ms); }}},
      {"synthetic.kind",
       {[](C& c, S k, S v) {
          c.synthetic.spec.pattern_kind =
              rethrow_named(k, v, [&] { return synthetic::parse_pattern_kind(trim(v)); });
        },
        [](const C& c) { return synthetic::to_string(c.synthetic.spec.pattern_kind); }}},
      {"synthetic.occurrences", {[](C& c, S k, S v) { c.synthetic.occurrences = parse_numbers<int>(k, v); },
                                 [](const C& c) { return nums(c.synthetic.occurrences); }}},
      {"synthetic.series", {[](C& c, S k, S v) { c.synthetic.series_per_level = parse_number<int>(k, v); },
                            [](const C& c) { return std::to_string(c.synthetic.series_per_level); }}},
      {"synthetic.seed", {[](C& c, S k, S v) { c.synthetic.base_seed = parse_number<std::uint64_t>(k, v); },
                          [](const C& c) { return std::to_string(c.synthetic.base_seed); }}},
      {"synthetic.length", {[](C& c, S k, S v) { c.synthetic.spec.total_length = parse_number<Index>(k, v); },
                            [](const C& c) { return std::to_string(c.synthetic.spec.total_length); }}},
      {"synthetic.patterns",
       {[](C& c, S k, S v) { c.synthetic.spec.n_distinct_patterns = parse_number<int>(k, v); },
        [](const C& c) { return std::to_string(c.synthetic.spec.n_distinct_patterns); }}},
      {"synthetic.pattern_length",
       {[](C& c, S k, S v) { c.synthetic.spec.pattern_length = parse_number<Index>(k, v); },
        [](const C& c) { return std::to_string(c.synthetic.spec.pattern_length); }}},
      {"synthetic.rw_step",
       {[](C& c, S k, S v) {
          const auto r = parse_numbers<double>(k, v);
          if (r.size() != 2) bad(k, v, "expected lo,hi");
          c.synthetic.spec.rw_step = {r[0], r[1]};
        },
        [](const C& c) { return num(c.synthetic.spec.rw_step.lo) + "," + num(c.synthetic.spec.rw_step.hi); }}},
      {"output.dir", {[](C& c, S, S v) { c.out_dir = trim(v); }, [](const C& c) { return c.out_dir; }}},
  };
  return table;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto& table = settings();
  const auto it = table.find(key);
  if (it == table.end()) throw Error("unknown config key '" + key + "'");
  it->second.set(*this, key, value);
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& what) {
    throw Error("invalid config " + key + ": " + what);
  };
  if (params.lookback < 1) fail("model.lookback", "must be >= 1");
  for (Index h : horizons)
    if (h < 1) fail("model.horizons", "must be >= 1");
  for (int p : params.periods)
    if (p < 1) fail("model.periods", "must be >= 1");
  for (int p : params.periods)
    if (p > params.lookback) fail("model.periods", "period exceeds the look-back window");
  if (params.retrieval.m < 1) fail("retrieval.m", "must be >= 1");
  if (!(params.retrieval.tau > 0.0)) fail("retrieval.tau", "must be > 0");
  if (params.stride < 1) fail("retrieval.stride", "must be >= 1");
  if (params.retrieval.metric.embed_dim < 1) fail("retrieval.embed_dim", "must be >= 1");
  if (!(params.train.learning_rate > 0.0)) fail("train.learning_rate", "must be > 0");
  if (params.train.batch_size < 1) fail("train.batch_size", "must be >= 1");
  if (params.train.max_epochs < 1) fail("train.max_epochs", "must be >= 1");
  if (params.train.patience < 1) fail("train.patience", "must be >= 1");
  if (params.train.jobs < 1) fail("train.jobs", "must be >= 1");
  if (seeds.empty()) fail("train.seeds", "must not be empty");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) fail("data.train_fraction", "must lie in (0, 1]");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0)) fail("study.fractions", "must lie in (0, 1]");
  for (Index s : strides)
    if (s < 1) fail("study.strides", "must be >= 1");
  if (train_end.has_value() != val_end.has_value())
    fail(train_end ? "data.val_end" : "data.train_end", "train_end and val_end go together");
  if (train_end && !(0 < *train_end && *train_end < *val_end))
    fail("data.val_end", "need 0 < train_end < val_end");
  if (test_end && val_end && *test_end < *val_end) fail("data.test_end", "must be >= val_end");
  if (!dataset_path.empty() && !std::filesystem::exists(dataset_path))
    fail("data.path", "file '" + dataset_path + "' does not exist");
}

std::vector<Index> ExperimentConfig::effective_horizons() const {
  if (!horizons.empty()) return horizons;
  return standard_horizons(dataset_name.empty() ? std::filesystem::path(dataset_path).stem().string()
                                                : dataset_name);
}

std::string ExperimentConfig::describe() const {
  std::string out;
  for (const auto& [key, s] : settings()) out += key + "=" + s.get(*this) + "\n";
  return out;
}

void load_config_file(const std::string& path, ExperimentConfig& config) {
  if (!std::filesystem::exists(path)) throw Error("config file '" + path + "' does not exist");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error("cannot parse config '" + path + "': " + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw Error("config key '" + section + "' must sit inside a [section]");
    for (const auto& [key, value] : body) config.set(section + "." + key, value.data());
  }
}

std::pair<TimeSeries, SplitSpec> load_dataset(const ExperimentConfig& config) {
  if (config.dataset_path.empty()) throw Error("no dataset given (data.path / --dataset)");
  CsvSchema schema;
  schema.target = config.target;
  TimeSeries raw = load_csv(config.dataset_path, schema);
  const std::string name = config.dataset_name.empty()
                               ? std::filesystem::path(config.dataset_path).stem().string()
                               : config.dataset_name;
  SplitSpec spec = standard_split(name, raw.length());
  if (config.train_end) {
    spec.train_end = *config.train_end;
    spec.val_end = *config.val_end;
    spec.test_end = config.test_end;
  }
  return {std::move(raw), spec};
}

PreparedData prepare_data(const ExperimentConfig& config) {
  auto [raw, spec] = load_dataset(config);
  const std::string name = config.dataset_name.empty()
                               ? std::filesystem::path(config.dataset_path).stem().string()
                               : config.dataset_name;
  return PreparedData::from(raw, spec, name, config.train_fraction);
}

std::string model_fingerprint(const ExperimentParams& params, const std::string& dataset,
                              std::uint64_t data_hash) {
  std::ostringstream os;
  os << "dataset=" << dataset << ";data_hash=" << data_hash << ";lookback=" << params.lookback
     << ";horizon=" << params.horizon << ";periods=" << nums(params.periods)
     << ";stride=" << params.stride << ";m=" << params.retrieval.m << ";tau=" << num(params.retrieval.tau)
     << ";metric=" << to_string(params.retrieval.metric.kind)
     << ";reduction="
     << (params.retrieval.metric.reduction == ChannelReduction::flatten ? "flatten" : "channel_mean")
     << ";variant=" << to_string(params.variant);
  return os.str();
}

std::vector<Index> standard_horizons(const std::string& dataset) {
  std::string lower = dataset;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower.find("illness") != std::string::npos || lower.find("ili") == 0) return {24, 36, 48, 60};
  return {96, 192, 336, 720};
}

}  // namespace raft
