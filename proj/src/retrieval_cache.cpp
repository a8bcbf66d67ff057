#include <algorithm>
#include <exception>
#include <functional>
#include <sstream>
#include <thread>

#include "binary_io.hpp"
#include "raft/retrieval.hpp"

namespace raft {

CacheFingerprint CacheFingerprint::of(const PatchIndex& index, const RetrievalParams& params) {
  CacheFingerprint fp;
  fp.lookback = index.lookback();
  fp.horizon = index.horizon();
  fp.stride = index.stride();
  fp.periods = index.periods();
  fp.m = params.m;
  fp.tau = params.tau;
  fp.metric = params.metric.kind;
  fp.reduction = params.metric.reduction;
  fp.weighting = params.weighting;
  fp.dataset_hash = index.data_hash();
  return fp;
}

namespace {

std::string describe(const CacheFingerprint& fp) {
  std::ostringstream out;
  out << "L=" << fp.lookback << " F=" << fp.horizon << " stride=" << fp.stride << " periods={";
  for (std::size_t i = 0; i < fp.periods.size(); ++i) out << (i ? "," : "") << fp.periods[i];
  out << "} m=" << fp.m << " tau=" << fp.tau << " metric=" << to_string(fp.metric)
      << " reduction=" << static_cast<int>(fp.reduction)
      << " weighting=" << static_cast<int>(fp.weighting) << " data=" << std::hex << fp.dataset_hash;
  return out.str();
}

}  // namespace

void RetrievalCache::check(const CacheFingerprint& expected) const {
  if (!(fingerprint_ == expected))
    throw Error("retrieval cache fingerprint mismatch: cache has [" + describe(fingerprint_) +
                "], run expects [" + describe(expected) + "]");
}

const RetrievalResult& RetrievalCache::get(Index query_start) const {
  auto it = entries_.find(query_start);
  if (it == entries_.end())
    throw Error("retrieval cache has no entry for query start " + std::to_string(query_start));
  return it->second.result;
}

void RetrievalCache::insert(Index query_start, CachedQuery entry) {
  entries_[query_start] = std::move(entry);
}

void RetrievalCache::save(const std::string& path) const {
  io::Writer w(path);
  w.put<std::uint8_t>(kVersion);
  w.put<std::int64_t>(fingerprint_.lookback);
  w.put<std::int64_t>(fingerprint_.horizon);
  w.put<std::int64_t>(fingerprint_.stride);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(fingerprint_.periods.size()));
  for (int p : fingerprint_.periods) w.put<std::int32_t>(p);
  w.put<std::int32_t>(fingerprint_.m);
  w.put<double>(fingerprint_.tau);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(fingerprint_.metric));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(fingerprint_.reduction));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(fingerprint_.weighting));
  w.put<std::uint64_t>(fingerprint_.dataset_hash);
  w.put<std::uint64_t>(entries_.size());
  for (const auto& [start, entry] : entries_) {
    w.put<std::int64_t>(start);
    w.put<std::uint8_t>(entry.excluded ? 1 : 0);
    w.put<std::uint8_t>(entry.result.degenerate ? 1 : 0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(entry.result.periods.size()));
    for (const auto& pr : entry.result.periods) {
      w.put<std::int32_t>(pr.period);
      w.put<std::uint32_t>(static_cast<std::uint32_t>(pr.candidates.size()));
      for (std::size_t j = 0; j < pr.candidates.size(); ++j) {
        w.put<std::int64_t>(pr.candidates[j]);
        w.put<std::int64_t>(pr.starts[j]);
        w.put<double>(pr.scores[j]);
        w.put<double>(pr.weights[j]);
      }
      w.put_matrix(pr.aggregate);
    }
  }
  w.close();
}

RetrievalCache RetrievalCache::load(const std::string& path) {
  io::Reader r(path);
  const auto version = r.get<std::uint8_t>();
  if (version != kVersion)
    throw Error("'" + path + "' has cache version " + std::to_string(version) + ", expected " +
                std::to_string(kVersion));
  CacheFingerprint fp;
  fp.lookback = r.get<std::int64_t>();
  fp.horizon = r.get<std::int64_t>();
  fp.stride = r.get<std::int64_t>();
  const auto n_periods = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_periods; ++i) fp.periods.push_back(r.get<std::int32_t>());
  fp.m = r.get<std::int32_t>();
  fp.tau = r.get<double>();
  fp.metric = static_cast<MetricKind>(r.get<std::uint8_t>());
  fp.reduction = static_cast<ChannelReduction>(r.get<std::uint8_t>());
  fp.weighting = static_cast<Weighting>(r.get<std::uint8_t>());
  fp.dataset_hash = r.get<std::uint64_t>();
  RetrievalCache cache(std::move(fp));
  const auto n_entries = r.get<std::uint64_t>();
  for (std::uint64_t e = 0; e < n_entries; ++e) {
    const auto start = r.get<std::int64_t>();
    CachedQuery entry;
    entry.excluded = r.get<std::uint8_t>() != 0;
    entry.result.degenerate = r.get<std::uint8_t>() != 0;
    const auto n = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < n; ++k) {
      PeriodRetrieval pr;
      pr.period = r.get<std::int32_t>();
      const auto count = r.get<std::uint32_t>();
      for (std::uint32_t j = 0; j < count; ++j) {
        pr.candidates.push_back(r.get<std::int64_t>());
        pr.starts.push_back(r.get<std::int64_t>());
        pr.scores.push_back(r.get<double>());
        pr.weights.push_back(r.get<double>());
      }
      pr.aggregate = r.get_matrix();
      entry.result.periods.push_back(std::move(pr));
    }
    cache.insert(start, std::move(entry));
  }
  if (!r.at_end()) throw Error("'" + path + "' has trailing bytes");
  return cache;
}

RetrievalCache precompute(const PatchIndex& index, std::span<const QuerySpec> queries,
                          const RetrievalParams& params, int jobs) {
  constexpr std::size_t kChunk = 256;
  std::vector<RetrievalResult> results(queries.size());
  auto work = [&](std::size_t first, std::size_t step, std::exception_ptr& error) {
    try {
      std::vector<Patch> patches;
      std::vector<ExclusionRule> rules;
      for (std::size_t c0 = first * kChunk; c0 < queries.size(); c0 += step * kChunk) {
        const std::size_t c1 = std::min(queries.size(), c0 + kChunk);
        patches.clear();
        rules.clear();
        for (std::size_t i = c0; i < c1; ++i) {
          patches.push_back(queries[i].query);
          rules.push_back(queries[i].exclusion);
        }
        auto batch = retrieve_batch(index, patches, params, rules);
        for (std::size_t i = c0; i < c1; ++i) results[i] = std::move(batch[i - c0]);
      }
    } catch (...) {
      error = std::current_exception();
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  std::vector<std::exception_ptr> errors(workers);
  if (workers == 1) {
    work(0, 1, errors[0]);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t)
      pool.emplace_back(work, t, workers, std::ref(errors[t]));
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  RetrievalCache cache(CacheFingerprint::of(index, params));
  for (std::size_t i = 0; i < queries.size(); ++i)
    cache.insert(queries[i].query.start,
                 {queries[i].exclusion.query_start.has_value(), std::move(results[i])});
  return cache;
}

}  // namespace raft
