#include "raft/series.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace raft {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::optional<double> parse_double(const std::string& text) {
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || first == last) return std::nullopt;
  return value;
}

}  // namespace

TimeSeries::TimeSeries(Matrix values, std::vector<std::string> channel_names,
                       std::string frequency, std::vector<std::string> timestamps)
    : values_(std::move(values)),
      names_(std::move(channel_names)),
      frequency_(std::move(frequency)),
      timestamps_(std::move(timestamps)) {
  if (values_.rows() < 1 || values_.cols() < 1)
    throw Error("time series needs at least one channel and one step");
  if (static_cast<Index>(names_.size()) != values_.rows())
    throw Error("channel name count does not match channel count");
  if (!values_.allFinite()) throw Error("time series contains non-finite values");
  if (!timestamps_.empty() && static_cast<Index>(timestamps_.size()) != values_.cols())
    throw Error("timestamp count does not match series length");
}

TimeSeries TimeSeries::from_values(Matrix values) {
  std::vector<std::string> names;
  for (Index c = 0; c < values.rows(); ++c) names.push_back("ch" + std::to_string(c));
  return TimeSeries(std::move(values), std::move(names));
}

TimeSeries TimeSeries::slice(Index begin, Index end) const {
  if (begin < 0 || end > length() || begin >= end)
    throw Error("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                ") out of range for length " + std::to_string(length()));
  std::vector<std::string> ts;
  if (!timestamps_.empty()) ts.assign(timestamps_.begin() + begin, timestamps_.begin() + end);
  return TimeSeries(values_.middleCols(begin, end - begin), names_, frequency_, std::move(ts));
}

TimeSeries TimeSeries::select_channel(Index channel) const {
  if (channel < 0 || channel >= channels())
    throw Error("channel index " + std::to_string(channel) + " out of range");
  return TimeSeries(values_.row(channel), {names_[channel]}, frequency_, timestamps_);
}

TimeSeries TimeSeries::select_channel(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw Error("no channel named '" + std::string(name) + "'");
  return select_channel(static_cast<Index>(it - names_.begin()));
}

TimeSeries load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open CSV file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw Error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  auto header = split_fields(line);
  if (header.size() < 2) throw Error(path + ": header needs a time column and at least one channel");
  for (auto& h : header) h = trim(h);
  std::vector<std::string> names(header.begin() + 1, header.end());

  std::vector<std::string> timestamps;
  std::vector<std::vector<double>> columns(names.size());
  Index row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw Error(path + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                  " fields, expected " + std::to_string(header.size()));
    timestamps.push_back(trim(fields[0]));
    if (timestamps.back().empty())
      throw Error(path + ": row " + std::to_string(row) + " has an empty time column");
    for (std::size_t c = 1; c < fields.size(); ++c) {
      auto value = parse_double(trim(fields[c]));
      if (!value || !std::isfinite(*value))
        throw Error(path + ": row " + std::to_string(row) + ", column " + std::to_string(c + 1) +
                    " ('" + names[c - 1] + "') is not numeric: '" + fields[c] + "'");
      columns[c - 1].push_back(*value);
    }
  }
  if (row == 0 || timestamps.empty()) throw Error(path + ": no data rows");

  Matrix values(static_cast<Index>(names.size()), static_cast<Index>(timestamps.size()));
  for (std::size_t c = 0; c < names.size(); ++c)
    for (std::size_t t = 0; t < timestamps.size(); ++t) values(c, t) = columns[c][t];
  TimeSeries series(std::move(values), std::move(names), schema.frequency, std::move(timestamps));
  if (schema.target) return series.select_channel(*schema.target);
  return series;
}

void write_csv(const std::string& path, const TimeSeries& series) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write CSV file '" + path + "'");
  out << "date";
  for (const auto& n : series.channel_names()) out << ',' << n;
  out << '\n';
  out.precision(17);
  for (Index t = 0; t < series.length(); ++t) {
    if (series.timestamps().empty())
      out << t;
    else
      out << series.timestamps()[t];
    for (Index c = 0; c < series.channels(); ++c) out << ',' << series.values()(c, t);
    out << '\n';
  }
}

SplitSpec standard_split(std::string_view dataset, Index length) {
  SplitSpec spec;
  constexpr Index kMonth = 30 * 24;
  if (dataset.rfind("ETTh", 0) == 0) {
    spec.train_end = 12 * kMonth;
    spec.val_end = 16 * kMonth;
    spec.test_end = 20 * kMonth;
  } else if (dataset.rfind("ETTm", 0) == 0) {
    spec.train_end = 12 * kMonth * 4;
    spec.val_end = 16 * kMonth * 4;
    spec.test_end = 20 * kMonth * 4;
  } else {
    const Index train = static_cast<Index>(length * 0.7);
    const Index test = static_cast<Index>(length * 0.2);
    spec.train_end = train;
    spec.val_end = length - test;
  }
  if (spec.test_end && *spec.test_end > length)
    throw Error(std::string(dataset) + " standard split needs " + std::to_string(*spec.test_end) +
                " steps but the series has " + std::to_string(length));
  return spec;
}

std::vector<Index> SeriesView::window_starts(Index lookback, Index horizon, Index stride) const {
  if (lookback < 1 || horizon < 1 || stride < 1) throw Error("window sizes and stride must be >= 1");
  // Target [s + L, s + L + F) must lie in [begin, end); input must not precede reach_begin.
  const Index first = std::max(reach_begin, begin - lookback);
  const Index last = end - lookback - horizon;
  std::vector<Index> starts;
  for (Index s = first; s <= last; s += stride) starts.push_back(s);
  return starts;
}

std::array<SeriesView, 3> split(std::shared_ptr<const TimeSeries> series, const SplitSpec& spec) {
  const Index total = series->length();
  const Index test_end = spec.test_end.value_or(total);
  if (!(0 < spec.train_end && spec.train_end < spec.val_end && spec.val_end < test_end &&
        test_end <= total))
    throw Error("split borders (" + std::to_string(spec.train_end) + ", " +
                std::to_string(spec.val_end) + ", " + std::to_string(test_end) +
                ") invalid for series of length " + std::to_string(total));
  SeriesView train{series, 0, spec.train_end, 0};
  SeriesView val{series, spec.train_end, spec.val_end,
                 spec.lookback_overlap ? Index{0} : spec.train_end};
  SeriesView test{series, spec.val_end, test_end, spec.lookback_overlap ? Index{0} : spec.val_end};
  return {train, val, test};
}

ChannelStats fit_standardize(const TimeSeries& train) {
  const auto& v = train.values();
  ChannelStats stats;
  stats.mean = v.rowwise().mean();
  stats.std.resize(v.rows());
  for (Index c = 0; c < v.rows(); ++c) {
    const double var = (v.row(c).array() - stats.mean(c)).square().mean();
    const double sd = std::sqrt(var);
    stats.std(c) = sd > 0.0 ? sd : 1.0;
  }
  return stats;
}

TimeSeries apply_standardize(const ChannelStats& stats, const TimeSeries& series) {
  if (stats.mean.size() != series.channels()) throw Error("standardization stats channel mismatch");
  Matrix v = series.values();
  for (Index c = 0; c < v.rows(); ++c) v.row(c) = (v.row(c).array() - stats.mean(c)) / stats.std(c);
  return TimeSeries(std::move(v), series.channel_names(), series.frequency(), series.timestamps());
}

Patch downsample(const Patch& patch, int period) {
  if (period < 1) throw Error("pooling period must be >= 1");
  if (period == 1) return patch;
  if (patch.period != 1) throw Error("only period-1 patches can be downsampled");
  const Index width = patch.width();
  if (period > width)
    throw Error("pooling period " + std::to_string(period) + " exceeds patch width " +
                std::to_string(width));
  const Index pooled = width / period;
  const Index skip = width % period;
  Patch out;
  out.start = patch.start;
  out.period = period;
  out.values.resize(patch.values.rows(), pooled);
  for (Index c = 0; c < patch.values.rows(); ++c)
    for (Index j = 0; j < pooled; ++j)
      out.values(c, j) = patch.values.row(c).segment(skip + j * period, period).mean();
  return out;
}

AnchoredPatch subtract_offset(const Patch& patch) {
  if (patch.width() < 1) throw Error("cannot anchor an empty patch");
  AnchoredPatch out;
  out.offset = patch.values.col(patch.width() - 1);
  out.values = patch.values.colwise() - out.offset;
  return out;
}

Patch extract_patch(const TimeSeries& series, Index start, Index width) {
  if (start < 0 || width < 1 || start + width > series.length())
    throw Error("patch [" + std::to_string(start) + ", " + std::to_string(start + width) +
                ") outside series of length " + std::to_string(series.length()));
  return Patch{series.values().middleCols(start, width), start, 1};
}

std::vector<Index> window_grid(Index length, Index lookback, Index horizon, Index stride) {
  if (lookback < 1 || horizon < 1) throw Error("window and horizon lengths must be >= 1");
  if (stride < 1) throw Error("stride must be >= 1");
  if (length < lookback + horizon)
    throw Error("series of length " + std::to_string(length) + " is shorter than L + F = " +
                std::to_string(lookback + horizon));
  std::vector<Index> starts;
  for (Index s = 0; s <= length - lookback - horizon; s += stride) starts.push_back(s);
  return starts;
}

std::vector<WindowPair> sliding_windows(const TimeSeries& series, Index lookback, Index horizon,
                                        Index stride) {
  std::vector<WindowPair> pairs;
  for (Index s : window_grid(series.length(), lookback, horizon, stride))
    pairs.push_back({extract_patch(series, s, lookback), extract_patch(series, s + lookback, horizon)});
  return pairs;
}

}  // namespace raft
