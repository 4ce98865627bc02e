#include "pseudocorr/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

namespace pseudocorr {

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

Filtered apply_sphere_reject(const MatchSet& matches, const SphereLookup& sphere, double theta_th) {
  std::vector<GridPoint> src, tgt;
  src.reserve(matches.size());
  tgt.reserve(matches.size());
  for (const Match& m : matches.matches) {
    src.push_back(m.src);
    tgt.push_back(m.tgt);
  }
  const auto ps = sphere(matches.src_image, src);
  const auto pt = sphere(matches.tgt_image, tgt);
  return sphere_reject(matches, ps, pt, theta_th);
}

std::string LabelConfig::describe() const {
  std::ostringstream os;
  os << "strategy=" << (chaining ? "chain" : "naive");
  if (chaining) os << " K=" << chain_length;
  os << " count=" << count << " filter=" << filter.describe() << " sphere_reject=" << (sphere_reject ? 1 : 0);
  if (sphere_reject) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", theta_th);
    os << " theta_th=" << buf;
  }
  os << " target_mask=" << (target_mask ? 1 : 0) << " seed=" << seed;
  return os.str();
}

std::size_t LabelSet::match_count() const {
  std::size_t n = 0;
  for (const auto& s : sets) n += s.size();
  return n;
}

namespace {

struct Unit {
  std::vector<MatchSet> sets;
  std::vector<std::string> specs;
  FilterReport cycle, sphere;
  bool truncated = false;
};

std::string join(const std::vector<std::string>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? ">" : "") + ids[i];
  return s;
}

}  // namespace

LabelSet generate_labels(const std::vector<ImageRecord>& records, const ImageStore& store, const LabelConfig& config,
                         const SphereLookup* sphere, int threads) {
  if (config.sphere_reject && !sphere) throw ValidationError("sphere rejection requested without sphere points");
  LabelSet out;
  out.provenance = config.describe();
  std::vector<Unit> units;

  auto reject = [&](Unit& u, MatchSet set) {
    if (config.sphere_reject) {
      Filtered f = apply_sphere_reject(set, *sphere, config.theta_th);
      u.sphere += f.report;
      set = std::move(f.matches);
    }
    return set;
  };

  if (config.chaining) {
    const auto chains = sample_chains(records, config.chain_length, config.count, config.seed);
    units.resize(chains.size());
    parallel_for(chains.size(), threads, [&](std::size_t i) {
      Unit& u = units[i];
      Propagation prop = propagate(chains[i], store, config.filter);
      for (const auto& r : prop.hop_reports) u.cycle += r;
      u.truncated = prop.truncated;
      const std::string spec = join(chains[i].images);
      for (auto& set : prop.composed) {
        u.sets.push_back(reject(u, std::move(set)));
        u.specs.push_back(spec);
      }
    });
  } else {
    const auto pairs = sample_naive_pairs(records, config.count, config.seed);
    units.resize(pairs.size());
    parallel_for(pairs.size(), threads, [&](std::size_t i) {
      Unit& u = units[i];
      const auto& a = store.at(pairs[i].first);
      const auto& b = store.at(pairs[i].second);
      const auto points = masked_points(a.mask);
      const MatchSet raw = nn_match_all<float>(points, a.features, b.features, config.target_mask ? &b.mask : nullptr);
      Filtered f = config.filter.apply(raw, a.features, b.features, &a.mask, config.target_mask ? &b.mask : nullptr);
      u.cycle += f.report;
      u.sets.push_back(reject(u, std::move(f.matches)));
      u.specs.push_back(pairs[i].first + ">" + pairs[i].second);
    });
  }
  for (auto& u : units) {
    out.cycle_report += u.cycle;
    out.sphere_report += u.sphere;
    out.truncated_chains += u.truncated ? 1 : 0;
    for (std::size_t k = 0; k < u.sets.size(); ++k) {
      out.sets.push_back(std::move(u.sets[k]));
      out.chain_specs.push_back(std::move(u.specs[k]));
    }
  }
  return out;
}

std::vector<std::vector<PixelPoint>> predict(const std::vector<EvalPair>& pairs, const FeatureLookup& features,
                                             const SoftArgmaxParams& params, int threads) {
  std::vector<std::vector<PixelPoint>> out(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const EvalPair& pair = pairs[i];
    const FeatureMap& src = features(pair.src_record.image_id);
    const FeatureMap& tgt = features(pair.tgt_record.image_id);
    int side = std::min(tgt.height(), tgt.width());
    if (side % 2 == 0) --side;
    const int window = std::min(params.window, side);
    for (const KeypointPair& kp : pair.gt) {
      GridPoint q = pixel_to_grid(kp.src, pair.src_record.patch_size);
      q.row = std::clamp(q.row, 0.0, static_cast<double>(src.height() - 1));
      q.col = std::clamp(q.col, 0.0, static_cast<double>(src.width() - 1));
      const GridPoint p = window_soft_argmax<float>(q, src, tgt, window, static_cast<float>(params.temperature));
      out[i].push_back(grid_to_pixel(p, pair.tgt_record.patch_size));
    }
  });
  return out;
}

std::map<std::string, FeatureMap> refine_all(const Adapter<float>& adapter, const ImageStore& store,
                                             const std::vector<std::string>& image_ids, int threads) {
  std::vector<FeatureMap> maps(image_ids.size());
  parallel_for(image_ids.size(), threads,
               [&](std::size_t i) { maps[i] = adapter.forward(store.features(image_ids[i])); });
  std::map<std::string, FeatureMap> out;
  for (std::size_t i = 0; i < image_ids.size(); ++i) out.emplace(image_ids[i], std::move(maps[i]));
  return out;
}

std::vector<TrainPair<float>> make_train_pairs(const LabelSet& labels, const ImageStore& store) {
  return make_train_pairs(labels.sets, store);
}

std::vector<TrainPair<float>> make_train_pairs(const std::vector<MatchSet>& sets, const ImageStore& store) {
  std::vector<TrainPair<float>> out;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const MatchSet& s = sets[i];
    if (s.empty()) continue;
    TrainPair<float> p;
    p.src = &store.features(s.src_image);
    p.tgt = &store.features(s.tgt_image);
    p.matches = s.matches;
    p.id = std::to_string(i) + ":" + s.src_image + ">" + s.tgt_image;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<AblationRow> ablation_rows() {
  return {
      {"baseline", false, false, false, false, false},
      {"pseudo", true, false, false, false, false},
      {"pseudo+cyc_cons", true, true, false, false, false},
      {"pseudo+relaxed", true, false, true, false, false},
      {"pseudo+relaxed+chaining", true, false, true, true, false},
      {"pseudo+sph_rej", true, false, false, false, true},
      {"full", true, false, true, true, true},
  };
}

std::vector<AblationResult> run_ablation(const AblationConfig& config,
                                         const std::function<void(const AblationResult&)>& on_result) {
  std::vector<AblationResult> results;
  for (std::uint64_t seed : config.seeds) {
    SynthConfig sc = config.synth;
    sc.seed = seed;
    const SynthDataset ds = generate(sc);
    const ImageStore store = ds.store();
    const auto train_records = ds.records(true, false);
    const auto eval = ds.eval_pairs(true);
    std::vector<std::string> test_ids;
    for (const auto& s : ds.scenes) {
      if (s.test) test_ids.push_back(s.record.image_id);
    }
    const SphereLookup sphere = [&ds](const std::string& id, std::span<const GridPoint> pts) {
      return ds.cell_sphere_points(id, pts);
    };

    for (const AblationRow& row : ablation_rows()) {
      AblationResult res;
      res.row = row.name;
      res.seed = seed;
      Adapter<float> adapter(config.shape, seed);
      if (row.pseudo) {
        LabelConfig lc = config.labels;
        lc.seed = seed;
        lc.chaining = row.chaining;
        lc.sphere_reject = row.sphere;
        lc.filter = row.cyc_cons ? CycleFilter::exact()
                    : row.relaxed ? CycleFilter::relaxed(config.r_max)
                                  : CycleFilter::none();
        const LabelSet labels = generate_labels(train_records, store, lc, &sphere, config.threads);
        const LabelQuality q = label_quality(labels.sets, ds);
        res.label_precision = q.precision;
        res.label_recall = q.recall;
        res.label_count = labels.match_count();
        const auto data = make_train_pairs(labels, store);
        if (data.empty()) {
          spdlog::warn("ablation row {} seed {}: no pseudo-labels survived, adapter left untrained", row.name, seed);
        } else {
          TrainConfig tc = config.train;
          tc.seed = seed;
          Trainer<float> trainer(std::move(adapter), tc, data);
          trainer.run();
          adapter = trainer.adapter();
        }
      }
      const auto refined = refine_all(adapter, store, test_ids, config.threads);
      const FeatureLookup lookup = [&refined](const std::string& id) -> const FeatureMap& { return refined.at(id); };
      const auto preds = predict(eval, lookup, config.eval, config.threads);
      res.pck_per_img = pck(preds, eval, config.alpha, PckMode::kPerImage).value;
      res.pck_per_kpt = pck(preds, eval, config.alpha, PckMode::kPerKeypoint).value;
      if (on_result) on_result(res);
      results.push_back(std::move(res));
    }
  }
  return results;
}

std::vector<BinnedPck> viewpoint_analysis(const SynthDataset& dataset, const SoftArgmaxParams& params, double alpha,
                                          PckMode mode, int threads) {
  const ImageStore store = dataset.store();
  const auto eval = dataset.eval_pairs(true);
  const FeatureLookup lookup = [&store](const std::string& id) -> const FeatureMap& { return store.features(id); };
  const auto preds = predict(eval, lookup, params, threads);
  return viewpoint_binned_pck(preds, eval, alpha, mode, table_view_bins());
}

}  // namespace pseudocorr
