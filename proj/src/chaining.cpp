#include "pseudocorr/chaining.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

namespace pseudocorr {

namespace {

std::uint64_t category_seed(std::uint64_t seed, const std::string& category) {
  // FNV-1a over the category name, mixed with the run seed.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : category) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h ^ (seed * 0x9E3779B97F4A7C15ULL);
}

}  // namespace

double d_circ(double a_deg, double b_deg) {
  const double d = std::fmod(std::abs(a_deg - b_deg), 360.0);
  return std::min(d, 360.0 - d);
}

bool valid_hop(const ImageRecord& a, const ImageRecord& b) {
  return a.azimuth_bin != b.azimuth_bin && d_circ(a.azimuth_deg, b.azimuth_deg) < kMaxHopDeg;
}

std::vector<Chain> sample_chains(const std::vector<ImageRecord>& records, int K, int count, std::uint64_t rng_seed) {
  if (K < 2) throw ValidationError("chain length K must be at least 2");
  std::vector<Chain> out;
  if (count <= 0) return out;
  for (const auto& [category, group] : by_category(records)) {
    if (static_cast<int>(group.size()) < K) {
      spdlog::warn("category {}: {} records, fewer than K={}; no chains", category, group.size(), K);
      continue;
    }
    std::mt19937_64 rng(category_seed(rng_seed, category));
    // Adjacency once per category; walks then only draw indices.
    const std::size_t n = group.size();
    std::vector<std::vector<std::size_t>> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j && valid_hop(*group[i], *group[j])) next[i].push_back(j);
      }
    }
    int emitted = 0;
    const long max_attempts = 50L * count;
    std::vector<std::size_t> walk;
    std::vector<std::size_t> options;
    for (long attempt = 0; attempt < max_attempts && emitted < count; ++attempt) {
      walk.assign(1, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
      while (static_cast<int>(walk.size()) < K) {
        options.clear();
        const std::size_t cur = walk.back();
        for (std::size_t j : next[cur]) {
          if (std::find(walk.begin(), walk.end(), j) != walk.end()) continue;
          if (walk.size() >= 2 && group[j]->azimuth_bin == group[walk[walk.size() - 2]]->azimuth_bin) continue;
          options.push_back(j);
        }
        if (options.empty()) break;
        walk.push_back(options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)]);
      }
      if (static_cast<int>(walk.size()) < K) continue;
      Chain chain{{}, category};
      for (std::size_t idx : walk) chain.images.push_back(group[idx]->image_id);
      out.push_back(std::move(chain));
      ++emitted;
    }
    if (emitted < count) {
      spdlog::debug("category {}: emitted {} of {} requested chains", category, emitted, count);
    }
  }
  return out;
}

std::string check_chain(const Chain& chain, const std::vector<ImageRecord>& records) {
  if (chain.images.size() < 2) return "chain shorter than 2";
  std::map<std::string, const ImageRecord*> index;
  for (const auto& r : records) index[r.image_id] = &r;
  std::set<std::string> seen;
  const ImageRecord* prev = nullptr;
  const ImageRecord* prev2 = nullptr;
  for (const auto& id : chain.images) {
    auto it = index.find(id);
    if (it == index.end()) return "unknown image " + id;
    const ImageRecord* rec = it->second;
    if (rec->category != chain.category) return "category mismatch at " + id;
    if (!seen.insert(id).second) return "repeated image " + id;
    if (prev) {
      if (rec->azimuth_bin == prev->azimuth_bin) return "zero viewpoint variation at " + id;
      const double gap = std::min(std::fmod(std::abs(rec->azimuth_deg - prev->azimuth_deg), 360.0),
                                  360.0 - std::fmod(std::abs(rec->azimuth_deg - prev->azimuth_deg), 360.0));
      if (!(gap < 90.0)) return "viewpoint gap >= 90 at " + id;
    }
    if (prev2 && prev2->azimuth_bin == rec->azimuth_bin) return "immediate return to previous bin at " + id;
    prev2 = prev;
    prev = rec;
  }
  return {};
}

std::vector<std::pair<std::string, std::string>> sample_naive_pairs(const std::vector<ImageRecord>& records, int count,
                                                                    std::uint64_t rng_seed, bool include_reverse) {
  std::vector<std::pair<std::string, std::string>> out;
  if (count <= 0) return out;
  for (const auto& [category, group] : by_category(records)) {
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (std::size_t i = 0; i < group.size(); ++i) {
      for (std::size_t j = i + 1; j < group.size(); ++j) all.emplace_back(i, j);
    }
    if (all.empty()) continue;
    std::mt19937_64 rng(category_seed(rng_seed, category) ^ 0xA5A5A5A5ULL);
    const std::size_t take = std::min(all.size(), static_cast<std::size_t>(count));
    // Partial Fisher-Yates: the first `take` entries become a uniform sample.
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(i, all.size() - 1)(rng);
      std::swap(all[i], all[j]);
    }
    if (take == all.size()) std::sort(all.begin(), all.end());
    for (std::size_t k = 0; k < take; ++k) {
      const auto& a = group[all[k].first]->image_id;
      const auto& b = group[all[k].second]->image_id;
      out.emplace_back(a, b);
      if (include_reverse) out.emplace_back(b, a);
    }
  }
  return out;
}

Propagation propagate(const Chain& chain, const ImageStore& store, const CycleFilter& hop_filter) {
  if (chain.images.size() < 2) throw ValidationError("chain must contain at least two images");
  Propagation out;
  const auto& first = store.at(chain.images.front());
  const std::vector<GridPoint> origin = masked_points(first.mask);

  // alive[i] indexes into `origin`; current[i] is that point's position in the current image.
  std::vector<std::size_t> alive(origin.size());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;
  std::vector<GridPoint> current = origin;

  for (std::size_t k = 0; k + 1 < chain.images.size(); ++k) {
    const auto& a = store.at(chain.images[k]);
    const auto& b = store.at(chain.images[k + 1]);
    const MatchSet hop = nn_match_all<float>(current, a.features, b.features, &b.mask);
    Filtered kept = hop_filter.apply(hop, a.features, b.features, &a.mask, &b.mask);
    out.hop_reports.push_back(kept.report);

    // Filters preserve order, so walk both lists together to recover indices.
    std::vector<std::size_t> next_alive;
    std::vector<GridPoint> next_current;
    std::size_t j = 0;
    for (std::size_t i = 0; i < hop.matches.size() && j < kept.matches.matches.size(); ++i) {
      if (hop.matches[i] == kept.matches.matches[j]) {
        next_alive.push_back(alive[i]);
        next_current.push_back(hop.matches[i].tgt);
        ++j;
      }
    }
    alive = std::move(next_alive);
    current = std::move(next_current);

    if (alive.empty()) {
      spdlog::debug("chain {}: no survivors after hop {}", chain.images.front(), k + 1);
      out.truncated = true;
      break;
    }
    MatchSet composed{chain.images.front(), chain.images[k + 1], {}};
    composed.matches.reserve(alive.size());
    for (std::size_t i = 0; i < alive.size(); ++i) {
      const GridPoint& p1 = origin[alive[i]];
      const double score = cosine_sim<float>(first.features.cell(cell_index(p1, first.features)),
                                             b.features.cell(cell_index(current[i], b.features)));
      composed.matches.push_back({p1, current[i], score});
    }
    out.composed.push_back(std::move(composed));
  }
  return out;
}

}  // namespace pseudocorr
