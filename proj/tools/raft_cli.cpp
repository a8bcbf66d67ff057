#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "raft/config.hpp"
#include "raft/metrics.hpp"
#include "raft/studies.hpp"
#include "raft/synthetic.hpp"

#ifndef RAFT_VERSION
#define RAFT_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> sets;
  std::string dataset, horizon, lookback, seeds, m, tau, metric, stride, variant, out, jobs;
  bool no_retrieval = false;
  bool verbose = false;
  std::string checkpoint;
  std::string kind, occurrences, strides, variants, metrics, fractions, series;
  bool study = false;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "INI config file");
  cmd->add_option("--set", o.sets, "Override any config key: section.key=value");
  cmd->add_option("--dataset", o.dataset, "Dataset CSV (data.path)");
  cmd->add_option("--horizon,--horizons", o.horizon, "Forecast horizon(s), comma separated");
  cmd->add_option("--lookback", o.lookback, "Look-back window L");
  cmd->add_option("--seed,--seeds", o.seeds, "Seed(s), comma separated");
  cmd->add_option("--m", o.m, "Retrieved patches per period");
  cmd->add_option("--tau", o.tau, "Softmax temperature");
  cmd->add_option("--metric", o.metric, "pearson, cosine, cosine_projected or neg_l2");
  cmd->add_option("--stride", o.stride, "Candidate stride of the retrieval index");
  cmd->add_option("--variant", o.variant, "Model variant");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--jobs", o.jobs, "Retrieval worker threads");
  cmd->add_flag("--no-retrieval", o.no_retrieval, "Train the linear model without retrieval");
  cmd->add_flag("--verbose", o.verbose, "Progress on stderr");
}

/// Defaults, then the config file, then --set, then dedicated flags.
raft::ExperimentConfig resolve(const Options& o) {
  raft::ExperimentConfig c;
  if (!o.config_path.empty()) raft::load_config_file(o.config_path, c);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw raft::Error("--set expects section.key=value, got '" + s + "'");
    c.set(s.substr(0, eq), s.substr(eq + 1));
  }
  auto flag = [&](const std::string& value, const char* key) {
    if (!value.empty()) c.set(key, value);
  };
  flag(o.dataset, "data.path");
  flag(o.horizon, "model.horizons");
  flag(o.lookback, "model.lookback");
  flag(o.seeds, "train.seeds");
  flag(o.m, "retrieval.m");
  flag(o.tau, "retrieval.tau");
  flag(o.metric, "retrieval.metric");
  flag(o.stride, "retrieval.stride");
  flag(o.out, "output.dir");
  flag(o.jobs, "train.jobs");
  flag(o.kind, "synthetic.kind");
  flag(o.occurrences, "synthetic.occurrences");
  flag(o.series, "synthetic.series");
  flag(o.strides, "study.strides");
  flag(o.metrics, "study.metrics");
  flag(o.fractions, "study.fractions");
  if (!o.variant.empty()) {
    if (o.variant.find(',') != std::string::npos) c.set("study.variants", o.variant);
    else c.set("model.variant", o.variant);
  }
  flag(o.variants, "study.variants");
  if (o.no_retrieval) c.set("model.variant", "no_retrieval");
  if (o.verbose) c.set("train.verbose", "true");
  c.validate();
  return c;
}

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw raft::Error("cannot write '" + path.string() + "'");
  out << text;
}

fs::path output_dir(const raft::ExperimentConfig& c) {
  fs::create_directories(c.out_dir);
  return c.out_dir;
}

void write_manifest(const fs::path& dir, const std::string& command, const Options& o,
                    const raft::ExperimentConfig& c, const std::vector<std::string>& outputs) {
  json j;
  j["command"] = command;
  j["version"] = RAFT_VERSION;
  j["created"] = now_utc();
  j["inputs"] = {{"config", o.config_path}, {"dataset", c.dataset_path}};
  j["seeds"] = c.seeds;
  j["root_seed"] = c.seeds.empty() ? 0 : c.seeds.front();
  json settings = json::object();
  std::istringstream lines(c.describe());
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    settings[line.substr(0, eq)] = line.substr(eq + 1);
  }
  j["settings"] = settings;
  j["outputs"] = outputs;
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

void write_report(const fs::path& dir, const std::string& stem, const raft::MetricReport& report) {
  report.write_csv((dir / (stem + ".csv")).string());
  report.write_means_csv((dir / (stem + "_mean.csv")).string());
  report.write_timings_csv((dir / (stem + "_timings.csv")).string());
  write_text(dir / (stem + ".json"), report.summary_json() + "\n");
}

std::vector<std::string> report_files(const std::string& stem) {
  return {stem + ".csv", stem + "_mean.csv", stem + "_timings.csv", stem + ".json"};
}

int cmd_train(const Options& o) {
  auto c = resolve(o);
  const auto data = raft::prepare_data(c);
  raft::ExperimentParams params = c.params;
  params.horizon = c.effective_horizons().front();
  const auto seed = c.seeds.front();
  const auto run = raft::run_experiment(data, params, seed);
  const auto dir = output_dir(c);
  const std::string fp =
      raft::model_fingerprint(params, data.name, raft::hash_values(data.series->values()));
  const fs::path ckpt = o.checkpoint.empty() ? dir / "checkpoint.bin" : fs::path(o.checkpoint);
  raft::save_checkpoint(ckpt.string(), run.model, fp);
  write_text(dir / "fingerprint.txt", fp + "\n");
  std::ostringstream hist;
  hist << "epoch,train_loss,val_loss\n";
  hist.precision(10);
  for (const auto& e : run.history.epochs)
    hist << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
  write_text(dir / "history.csv", hist.str());
  raft::MetricReport report;
  report.add(raft::make_row(data.name, params, "", seed, run));
  write_report(dir, "metrics", report);
  auto outputs = report_files("metrics");
  outputs.insert(outputs.begin(), {ckpt.filename().string(), "fingerprint.txt", "history.csv"});
  write_manifest(dir, "train", o, c, outputs);
  std::cout << "trained " << to_string(params.variant) << " F=" << params.horizon << " best epoch "
            << run.history.best_epoch << " val_mse " << run.val.mse << " test_mse " << run.test.mse
            << "\n";
  return 0;
}

std::string fingerprint_diff(const std::string& expected, const std::string& actual) {
  auto fields = [](const std::string& s) {
    std::map<std::string, std::string> out;
    std::stringstream ss(s);
    for (std::string kv; std::getline(ss, kv, ';');) {
      const auto eq = kv.find('=');
      out[kv.substr(0, eq)] = eq == std::string::npos ? "" : kv.substr(eq + 1);
    }
    return out;
  };
  const auto a = fields(expected), b = fields(actual);
  std::string out;
  for (const auto& [k, v] : a) {
    const auto it = b.find(k);
    const std::string other = it == b.end() ? "<missing>" : it->second;
    if (other != v) out += " " + k + " (checkpoint " + other + ", config " + v + ")";
  }
  return out;
}

int cmd_evaluate(const Options& o) {
  auto c = resolve(o);
  const auto data = raft::prepare_data(c);
  const auto dir = output_dir(c);
  if (o.checkpoint.empty()) {
    const auto report = raft::evaluate(data, c.params, c.effective_horizons(), c.seeds);
    write_report(dir, "metrics", report);
    write_manifest(dir, "evaluate", o, c, report_files("metrics"));
    for (const auto& m : report.means())
      std::cout << m.dataset << " F=" << m.horizon << " mse " << m.mse << " mae " << m.mae << "\n";
    return 0;
  }

  std::string echo;
  const auto model = raft::load_checkpoint(o.checkpoint, &echo);
  raft::ExperimentParams params = c.params;
  params.horizon = model.horizon;
  const std::string fp =
      raft::model_fingerprint(params, data.name, raft::hash_values(data.series->values()));
  if (echo != fp)
    throw raft::Error("checkpoint '" + o.checkpoint + "' does not match the config:" +
                      fingerprint_diff(fp, echo));
  const auto bundle = raft::build_retrieval(data, params, c.seeds.front());
  const auto test = data.test_windows(params.lookback, params.horizon);
  const auto metrics = raft::evaluate_windows(model, test, bundle.active() ? &bundle.source : nullptr,
                                              bundle.test_cache ? &*bundle.test_cache : nullptr);
  raft::MetricReport report;
  raft::RunOutcome run;
  run.test = metrics;
  report.add(raft::make_row(data.name, params, "checkpoint", c.seeds.front(), run));
  write_report(dir, "metrics", report);
  write_manifest(dir, "evaluate", o, c, report_files("metrics"));
  std::cout << data.name << " F=" << params.horizon << " mse " << metrics.mse << " mae "
            << metrics.mae << "\n";
  return 0;
}

int cmd_gridsearch(const Options& o) {
  auto c = resolve(o);
  const auto data = raft::prepare_data(c);
  raft::ExperimentParams params = c.params;
  params.horizon = c.effective_horizons().front();
  const auto result = raft::grid_search(data, params, c.grid, c.seeds);
  const auto dir = output_dir(c);
  std::ostringstream csv;
  csv.precision(10);
  csv << "learning_rate,lookback,m,val_mse,selected\n";
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    const auto& p = result.points[i];
    csv << p.learning_rate << ',' << p.lookback << ',' << p.m << ',' << p.val_mse << ','
        << (i == result.best ? 1 : 0) << '\n';
  }
  write_text(dir / "grid.csv", csv.str());
  write_report(dir, "selected", result.selected);
  auto outputs = report_files("selected");
  outputs.insert(outputs.begin(), "grid.csv");
  write_manifest(dir, "gridsearch", o, c, outputs);
  const auto& b = result.points[result.best];
  std::cout << "selected lr=" << b.learning_rate << " L=" << b.lookback << " m=" << b.m
            << " val_mse " << b.val_mse << "\n";
  return 0;
}

int cmd_ablate(const Options& o) {
  auto c = resolve(o);
  const auto data = raft::prepare_data(c);
  std::vector<raft::Variant> variants = c.variants;
  if (!o.variant.empty() && o.variant.find(',') == std::string::npos) variants = {c.params.variant};
  if (std::find(variants.begin(), variants.end(), raft::Variant::full) == variants.end())
    variants.insert(variants.begin(), raft::Variant::full);
  const auto report = raft::run_ablation(data, c.params, variants, c.effective_horizons(), c.seeds);
  const auto dir = output_dir(c);
  write_report(dir, "ablation", report);
  write_manifest(dir, "ablate", o, c, report_files("ablation"));
  for (const auto& m : report.means())
    if (m.horizon == "avg") std::cout << m.variant << " mse " << m.mse << " mae " << m.mae << "\n";
  return 0;
}

int cmd_stride(const Options& o) {
  auto c = resolve(o);
  const auto data = raft::prepare_data(c);
  raft::ExperimentParams params = c.params;
  params.horizon = c.effective_horizons().front();
  raft::MetricReport report;
  const auto rows = raft::stride_study(data, params, c.strides, c.seeds, &report);
  const auto dir = output_dir(c);
  raft::write_stride_csvs(dir.string(), data.name, rows);
  report.write_csv((dir / "stride_runs.csv").string());
  write_manifest(dir, "stride", o, c, {"stride_walltime.csv", "stride_mse.csv", "stride_runs.csv"});
  for (const auto& r : rows)
    std::cout << "stride " << r.stride << " precompute " << r.precompute_seconds << "s mse " << r.mse
              << "\n";
  return 0;
}

int cmd_diagnose(const Options& o) {
  auto c = resolve(o);
  const auto data = raft::prepare_data(c);
  raft::ExperimentParams params = c.params;
  params.horizon = c.effective_horizons().front();
  const auto diag = raft::diagnostics(data, params, c.seeds.front());
  const auto dir = output_dir(c);
  raft::write_diagnostics_csv((dir / "diagnostics.csv").string(), diag);
  json j;
  j["records"] = diag.records.size();
  j["spearman_key_value"] = diag.spearman_key_value;
  j["spearman_value_change"] = diag.spearman_value_change;
  write_text(dir / "diagnostics.json", j.dump(2) + "\n");
  write_manifest(dir, "diagnose", o, c, {"diagnostics.csv", "diagnostics.json"});
  std::cout << "spearman(key, value) " << diag.spearman_key_value << "\nspearman(value, change) "
            << diag.spearman_value_change << "\n";
  return 0;
}

int cmd_synth(const Options& o) {
  auto c = resolve(o);
  const auto dir = output_dir(c);
  const std::string kind = raft::synthetic::to_string(c.synthetic.spec.pattern_kind);
  if (o.study) {
    raft::SyntheticStudyConfig sc = c.synthetic;
    sc.params = c.params;
    sc.params.horizon = c.horizons.empty() ? 96 : c.horizons.front();
    sc.verbose = c.params.train.verbose;
    const auto levels = raft::synthetic_study(sc);
    raft::write_synthetic_csv((dir / ("synthetic_" + kind + ".csv")).string(), kind, levels);
    write_manifest(dir, "synth", o, c, {"synthetic_" + kind + ".csv"});
    for (const auto& l : levels)
      std::cout << kind << " occurrences " << l.occurrences << " change " << l.change_percent << "%\n";
    return 0;
  }
  std::vector<std::string> outputs;
  for (int occ : c.synthetic.occurrences) {
    auto spec = c.synthetic.spec;
    spec.occurrences_per_pattern = occ;
    spec.seed = c.synthetic.base_seed;
    const auto gen = raft::synthetic::assemble(spec);
    const std::string stem = "synthetic_" + kind + "_occ" + std::to_string(occ);
    raft::write_csv((dir / (stem + ".csv")).string(), gen.series);
    raft::synthetic::write_annotations_csv((dir / (stem + "_annotations.csv")).string(),
                                           gen.annotations);
    outputs.push_back(stem + ".csv");
    outputs.push_back(stem + "_annotations.csv");
  }
  write_manifest(dir, "synth", o, c, outputs);
  for (const auto& f : outputs) std::cout << (dir / f).string() << "\n";
  return 0;
}

int cmd_similarity(const Options& o) {
  auto c = resolve(o);
  const auto data = raft::prepare_data(c);
  raft::ExperimentParams params = c.params;
  params.horizon = c.effective_horizons().front();
  const auto report = raft::similarity_study(data, params, c.metrics, c.seeds);
  const auto dir = output_dir(c);
  write_report(dir, "similarity", report);
  write_manifest(dir, "similarity-study", o, c, report_files("similarity"));
  for (const auto& m : report.means())
    if (m.horizon != "avg") std::cout << m.config << " mse " << m.mse << " mae " << m.mae << "\n";
  return 0;
}

int cmd_training_length(const Options& o) {
  auto c = resolve(o);
  auto [raw, split] = raft::load_dataset(c);
  const std::string name =
      c.dataset_name.empty() ? fs::path(c.dataset_path).stem().string() : c.dataset_name;
  raft::ExperimentParams params = c.params;
  params.horizon = c.effective_horizons().front();
  const auto report = raft::training_length_study(raw, split, name, params, c.fractions, c.seeds);
  const auto dir = output_dir(c);
  write_report(dir, "training_length", report);
  write_manifest(dir, "training-length-study", o, c, report_files("training_length"));
  for (const auto& m : report.means())
    if (m.horizon != "avg")
      std::cout << m.config << ' ' << m.variant << " mse " << m.mse << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented time-series forecasting"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "Train one model and write a checkpoint");
  add_common(train, o);
  train->add_option("--checkpoint", o.checkpoint, "Checkpoint path (default <out>/checkpoint.bin)");

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint, or train and score every horizon and seed");
  add_common(evaluate, o);
  evaluate->add_option("--checkpoint", o.checkpoint, "Checkpoint to score");

  auto* grid = app.add_subcommand("gridsearch", "Validation grid search over lr, L and m");
  add_common(grid, o);

  auto* ablate = app.add_subcommand("ablate", "Retrieval ablations");
  add_common(ablate, o);
  ablate->add_option("--variants", o.variants, "Variants, comma separated");

  auto* stride = app.add_subcommand("stride", "Precompute wall time and MSE per index stride");
  add_common(stride, o);
  stride->add_option("--strides", o.strides, "Strides, comma separated");

  auto* diagnose = app.add_subcommand("diagnose", "Key/value similarity diagnostics");
  add_common(diagnose, o);

  auto* synth = app.add_subcommand("synth", "Generate synthetic series, or run the synthetic study");
  add_common(synth, o);
  synth->add_option("--kind", o.kind, "ar or random_walk");
  synth->add_option("--occurrences", o.occurrences, "Pattern occurrences, comma separated");
  synth->add_option("--series", o.series, "Series per occurrence level (study)");
  synth->add_flag("--study", o.study, "Train with and without retrieval on generated series");

  auto* similarity = app.add_subcommand("similarity-study", "Compare similarity metrics");
  add_common(similarity, o);
  similarity->add_option("--metrics", o.metrics, "Metrics, comma separated");

  auto* length = app.add_subcommand("training-length-study", "Truncate the training split");
  add_common(length, o);
  length->add_option("--fractions", o.fractions, "Trailing fractions, comma separated");

  CLI11_PARSE(app, argc, argv);
  try {
    if (train->parsed()) return cmd_train(o);
    if (evaluate->parsed()) return cmd_evaluate(o);
    if (grid->parsed()) return cmd_gridsearch(o);
    if (ablate->parsed()) return cmd_ablate(o);
    if (stride->parsed()) return cmd_stride(o);
    if (diagnose->parsed()) return cmd_diagnose(o);
    if (synth->parsed()) return cmd_synth(o);
    if (similarity->parsed()) return cmd_similarity(o);
    if (length->parsed()) return cmd_training_length(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
