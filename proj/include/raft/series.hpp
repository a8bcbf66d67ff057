#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace raft {

using Index = std::ptrdiff_t;
// Channel-major storage: row c holds channel c, so a channel's samples are contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Raised for malformed input data and violated run-time preconditions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A C x T real-valued series. Values are immutable once constructed.
class TimeSeries {
 public:
  TimeSeries(Matrix values, std::vector<std::string> channel_names,
             std::string frequency = {}, std::vector<std::string> timestamps = {});

  /// Unnamed channels get "ch0", "ch1", ...
  static TimeSeries from_values(Matrix values);

  Index channels() const { return values_.rows(); }
  Index length() const { return values_.cols(); }
  const Matrix& values() const { return values_; }
  const std::vector<std::string>& channel_names() const { return names_; }
  const std::string& frequency() const { return frequency_; }
  const std::vector<std::string>& timestamps() const { return timestamps_; }

  /// Time steps [begin, end) of every channel.
  TimeSeries slice(Index begin, Index end) const;
  TimeSeries select_channel(Index channel) const;
  TimeSeries select_channel(std::string_view name) const;

 private:
  Matrix values_;
  std::vector<std::string> names_;
  std::string frequency_;
  std::vector<std::string> timestamps_;
};

struct CsvSchema {
  /// When set, only this column is kept (univariate mode).
  std::optional<std::string> target;
  std::string frequency;
};

TimeSeries load_csv(const std::string& path, const CsvSchema& schema = {});
void write_csv(const std::string& path, const TimeSeries& series);

struct SplitSpec {
  Index train_end = 0;
  Index val_end = 0;
  /// Defaults to the series length. Benchmark borders (ETT) stop short of T.
  std::optional<Index> test_end;
  bool lookback_overlap = true;
};

/// Border convention used by the common long-horizon benchmark suite: ETTh* use
/// 12/4/4 months of hourly data, ETTm* the same at 15-minute resolution, and every
/// other dataset a 70/10/20 split.
SplitSpec standard_split(std::string_view dataset, Index length);

/// A contiguous partition of a shared series. Windows drawn from the view may read
/// input history back to `reach_begin`, but their targets stay inside [begin, end).
struct SeriesView {
  std::shared_ptr<const TimeSeries> base;
  Index begin = 0;
  Index end = 0;
  Index reach_begin = 0;

  Index length() const { return end - begin; }
  TimeSeries materialize() const { return base->slice(begin, end); }
  /// Absolute start indices of every (input, target) window of sizes (L, F).
  std::vector<Index> window_starts(Index lookback, Index horizon, Index stride = 1) const;
};

std::array<SeriesView, 3> split(std::shared_ptr<const TimeSeries> series, const SplitSpec& spec);

struct ChannelStats {
  Vector mean;
  Vector std;
};

/// Per-channel population z-score statistics. Constant channels get std = 1.
ChannelStats fit_standardize(const TimeSeries& train);
TimeSeries apply_standardize(const ChannelStats& stats, const TimeSeries& series);

struct Patch {
  Matrix values;  // C x W
  Index start = 0;
  int period = 1;

  Index width() const { return values.cols(); }
};

struct AnchoredPatch {
  Matrix values;  // C x W, last column zero
  Vector offset;  // C
};

/// Trailing-aligned average pooling: the oldest W mod p steps are dropped so the
/// last pooled step always averages the most recent p inputs.
Patch downsample(const Patch& patch, int period);

AnchoredPatch subtract_offset(const Patch& patch);

Patch extract_patch(const TimeSeries& series, Index start, Index width);

struct WindowPair {
  Patch key;
  Patch value;
};

/// Start indices {0, s, 2s, ...} up to T - (L + F).
std::vector<Index> window_grid(Index length, Index lookback, Index horizon, Index stride);

std::vector<WindowPair> sliding_windows(const TimeSeries& series, Index lookback,
                                        Index horizon, Index stride = 1);

}  // namespace raft
