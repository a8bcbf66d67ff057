#include "binary_io.hpp"
#include "raft/model.hpp"

namespace raft {

namespace {
constexpr std::uint8_t kCheckpointVersion = 1;
}

void save_checkpoint(const std::string& path, const ForecastModel& model,
                     const std::string& config_echo) {
  io::Writer w(path);
  w.put<std::uint8_t>(kCheckpointVersion);
  w.put<std::uint8_t>(1);  // heads shared across channels
  w.put<std::int64_t>(model.lookback);
  w.put<std::int64_t>(model.horizon);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.periods.size()));
  for (int p : model.periods) w.put<std::int32_t>(p);
  w.put<std::int64_t>(model.channels);
  w.put<std::int32_t>(model.embed_dim);
  const auto& p = model.params;
  w.put_matrix(p.f_w);
  w.put_matrix(p.f_b);
  for (std::size_t k = 0; k < p.g_w.size(); ++k) {
    w.put_matrix(p.g_w[k]);
    w.put_matrix(p.g_b[k]);
  }
  w.put_matrix(p.h_w);
  w.put_matrix(p.h_b);
  for (std::size_t k = 0; k < p.proj_q.size(); ++k) {
    w.put_matrix(p.proj_q[k]);
    w.put_matrix(p.proj_k[k]);
  }
  w.put_string(config_echo);
  w.close();
}

ForecastModel load_checkpoint(const std::string& path, std::string* config_echo) {
  io::Reader r(path);
  const auto version = r.get<std::uint8_t>();
  if (version != kCheckpointVersion)
    throw Error("'" + path + "' has checkpoint version " + std::to_string(version) +
                ", expected " + std::to_string(kCheckpointVersion));
  if (r.get<std::uint8_t>() != 1) throw Error("'" + path + "': unsupported channel layout");

  ForecastModel model;
  model.lookback = r.get<std::int64_t>();
  model.horizon = r.get<std::int64_t>();
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) model.periods.push_back(r.get<std::int32_t>());
  model.channels = r.get<std::int64_t>();
  model.embed_dim = r.get<std::int32_t>();

  const Index L = model.lookback, F = model.horizon;
  auto expect = [&](const Matrix& m, Index rows, Index cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols)
      throw Error("'" + path + "': tensor " + name + " has shape " + std::to_string(m.rows()) +
                  "x" + std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                  std::to_string(cols));
  };
  auto& p = model.params;
  Matrix m = r.get_matrix();
  expect(m, F, L, "f_w");
  p.f_w = m;
  m = r.get_matrix();
  expect(m, F, 1, "f_b");
  p.f_b = m.col(0);
  for (int period : model.periods) {
    m = r.get_matrix();
    expect(m, F, F / period, "g_w");
    p.g_w.push_back(m);
    m = r.get_matrix();
    expect(m, F, 1, "g_b");
    p.g_b.push_back(m.col(0));
  }
  m = r.get_matrix();
  expect(m, F, 2 * F, "h_w");
  p.h_w = m;
  m = r.get_matrix();
  expect(m, F, 1, "h_b");
  p.h_b = m.col(0);
  if (model.embed_dim > 0) {
    for (int period : model.periods) {
      m = r.get_matrix();
      expect(m, model.embed_dim, model.channels * (L / period), "proj_q");
      p.proj_q.push_back(m);
      m = r.get_matrix();
      expect(m, model.embed_dim, model.channels * (L / period), "proj_k");
      p.proj_k.push_back(m);
    }
  }
  std::string echo = r.get_string();
  if (!r.at_end()) throw Error("'" + path + "' has trailing bytes");
  if (config_echo) *config_echo = std::move(echo);
  return model;
}

}  // namespace raft
