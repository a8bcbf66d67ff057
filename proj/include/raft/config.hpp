#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "raft/experiment.hpp"
#include "raft/studies.hpp"
#include "raft/synthetic.hpp"

namespace raft {

/// Everything a CLI run needs. Filled from defaults, then an INI file, then
/// command-line overrides, each through `set`.
struct ExperimentConfig {
  // [data]
  std::string dataset_path;
  std::string dataset_name;  // defaults to the file stem
  std::optional<std::string> target;
  std::optional<Index> train_end, val_end, test_end;
  double train_fraction = 1.0;

  // [model], [retrieval], [train]
  ExperimentParams params;
  std::vector<Index> horizons;  // empty: the dataset's standard horizon set
  std::vector<std::uint64_t> seeds{0, 1, 2};

  // [study]
  std::vector<Variant> variants{Variant::full, Variant::random_retrieval, Variant::no_attention,
                                Variant::one_period, Variant::no_retrieval};
  std::vector<Index> strides{1, 2, 4, 8};
  std::vector<MetricKind> metrics{MetricKind::pearson, MetricKind::cosine, MetricKind::neg_l2,
                                  MetricKind::cosine_projected};
  std::vector<double> fractions{0.2, 0.6, 1.0};
  GridSpace grid;

  // [synthetic]
  SyntheticStudyConfig synthetic;

  // [output]
  std::string out_dir = "out";

  /// Assigns one "section.key" setting. Throws naming the key on unknown keys or
  /// unparsable values.
  void set(const std::string& key, const std::string& value);

  /// Cross-field checks, naming the offending key.
  void validate() const;

  /// Horizons to run: the configured set or the dataset's standard one.
  std::vector<Index> effective_horizons() const;

  /// Every setting as sorted "key=value" lines.
  std::string describe() const;
};

/// Reads a flat INI file ([section] then key = value lines) into `config`.
void load_config_file(const std::string& path, ExperimentConfig& config);

/// Loads the dataset named by the config, applies its split and standardizes.
PreparedData prepare_data(const ExperimentConfig& config);
/// Raw (unstandardized) series plus its split, for studies that re-prepare.
std::pair<TimeSeries, SplitSpec> load_dataset(const ExperimentConfig& config);

/// Stable description of the settings that shape a trained model on given data.
std::string model_fingerprint(const ExperimentParams& params, const std::string& dataset,
                              std::uint64_t data_hash);

/// Standard horizon set: {24,36,48,60} for illness data, {96,192,336,720} otherwise.
std::vector<Index> standard_horizons(const std::string& dataset);

}  // namespace raft
