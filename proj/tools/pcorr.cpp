// pcorr: command-line front end of the pseudo-label correspondence pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "pseudocorr/config.hpp"
#include "pseudocorr/io.hpp"

namespace fs = std::filesystem;
using namespace pseudocorr;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = ".";
  bool verbose = false;
};

struct Run {
  Config config;
  Globals g;
  Provenance prov;

  fs::path out(const std::string& name) {
    const fs::path p = fs::path(g.out_dir) / name;
    prov.outputs.push_back(p.string());
    return p;
  }
  void input(const std::string& path) { prov.inputs.push_back(path); }
};

Run start(const std::string& command, const Globals& g) {
  Run r;
  r.g = g;
  if (!g.config_path.empty()) r.config = Config::load(g.config_path);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    r.config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.threads <= 0) throw ValidationError("--threads must be positive");
  fs::create_directories(g.out_dir);
  r.prov.command = command;
  r.prov.seed = g.seed;
  r.prov.threads = g.threads;
  r.prov.config_hash = r.config.hash();
  r.prov.config_text = r.config.canonical();
  if (!g.config_path.empty()) r.input(g.config_path);
  return r;
}

void finish(Run& r) {
  write_file(fs::path(r.g.out_dir) / (r.prov.command + ".provenance.json"), provenance_json(r.prov));
}

Manifest open_manifest(Run& r, const std::string& path) {
  if (path.empty()) throw ValidationError("--manifest is required");
  r.input(path);
  return read_manifest(path);
}

SphereLookup sphere_lookup(Run& r, const Manifest& manifest, const ImageStore& store, const std::string& mapper_path) {
  const std::string& source = r.config.get_string("sphere.source");
  if (!mapper_path.empty() || source == "mapper") {
    if (mapper_path.empty()) throw ValidationError("sphere.source = mapper needs --mapper");
    r.input(mapper_path);
    auto file = std::make_shared<MapperFile>(read_mapper(mapper_path));
    return [file, &store](const std::string& id, std::span<const GridPoint> pts) {
      const FeatureMap& f = store.features(id);
      const int n = file->mapper.input_dim();
      if (file->channel_offset + n > f.channels()) throw ValidationError("mapper expects more channels than " + id + " has");
      std::vector<std::vector<float>> vecs;
      for (const auto& p : pts) {
        auto v = f.at(static_cast<int>(p.row), static_cast<int>(p.col));
        vecs.emplace_back(v.begin() + file->channel_offset, v.begin() + file->channel_offset + n);
      }
      return map_to_sphere(file->mapper, vecs);
    };
  }
  if (source != "oracle") throw ValidationError("sphere.source must be oracle or mapper");
  auto grids = std::make_shared<std::map<std::string, FeatureMap>>();
  for (const auto& rec : manifest.records) {
    if (rec.sphere_path.empty()) throw ValidationError("image " + rec.image_id + " has no sphere grid for oracle mode");
    grids->emplace(rec.image_id, read_features(manifest.resolve(rec.sphere_path)));
  }
  return [grids](const std::string& id, std::span<const GridPoint> pts) {
    const FeatureMap& g = grids->at(id);
    if (g.channels() != 3) throw ValidationError("sphere grid of " + id + " must have 3 channels");
    std::vector<SpherePoint> out;
    for (const auto& p : pts) {
      auto v = g.at(static_cast<int>(p.row), static_cast<int>(p.col));
      out.push_back(SpherePoint::normalized(v[0], v[1], v[2]));
    }
    return out;
  };
}

void log_report(const char* stage, const FilterReport& rep) {
  spdlog::info("{}: kept {} of {} matches", stage, rep.kept_count, rep.input_count);
}

int cmd_synth(const Globals& g) {
  Run r = start("synth", g);
  SynthConfig sc = synth_config(r.config);
  sc.seed = g.seed;
  const SynthDataset ds = generate(sc);
  write_synthetic(ds, g.out_dir);
  for (const char* f : {"train.tsv", "test.tsv", "test_pairs.txt"}) r.out(f);
  const PlantReport rep = plant_report(ds);
  spdlog::info("synth: {} scenes, visibility {:.3f} (expected {:.3f}), min symmetric separation {:.3f} rad",
               ds.scenes.size(), rep.visibility_rate, rep.expected_visibility_rate, rep.min_separation_rad);
  finish(r);
  return 0;
}

int cmd_labels(const Globals& g, const std::string& command, bool chaining, const std::string& manifest_path,
               const std::string& output) {
  Run r = start(command, g);
  const Manifest m = open_manifest(r, manifest_path);
  const ImageStore store = load_store(m);
  LabelConfig lc = label_config(r.config);
  lc.chaining = chaining;
  lc.sphere_reject = false;
  lc.seed = g.seed;
  const LabelSet labels = generate_labels(m.records, store, lc, nullptr, g.threads);
  log_report(command.c_str(), labels.cycle_report);
  if (labels.truncated_chains) spdlog::warn("{} chains ended early for lack of valid hops", labels.truncated_chains);
  write_labels(r.out(output), to_label_file(labels, store));
  finish(r);
  return 0;
}

int cmd_filter_sphere(const Globals& g, const std::string& manifest_path, const std::string& labels_path,
                      const std::string& mapper_path, const std::string& output) {
  Run r = start("filter-sphere", g);
  const Manifest m = open_manifest(r, manifest_path);
  const ImageStore store = load_store(m);
  r.input(labels_path);
  PseudoLabelFile file = read_labels(labels_path);
  const SphereLookup lookup = sphere_lookup(r, m, store, mapper_path);
  const double theta = r.config.get_real("labels.theta_th");
  FilterReport total;
  for (auto& b : file.blocks) {
    Filtered f = apply_sphere_reject(b.set, lookup, theta);
    total += f.report;
    b.set = std::move(f.matches);
  }
  log_report("filter-sphere", total);
  file.provenance += " | sphere_reject theta_th=" + format_double(theta) + " source=" +
                     (mapper_path.empty() ? r.config.get_string("sphere.source") : std::string("mapper"));
  write_labels(r.out(output), file);
  finish(r);
  return 0;
}

int cmd_train_sphere(const Globals& g, const std::string& manifest_path, const std::string& output) {
  Run r = start("train-sphere", g);
  const Manifest m = open_manifest(r, manifest_path);
  const ImageStore store = load_store(m);
  const int offset = static_cast<int>(r.config.get_int("sphere.channel_offset"));
  int channels = static_cast<int>(r.config.get_int("sphere.channels"));
  std::vector<SphereImage<float>> images;
  std::vector<int> category_of;
  std::map<std::string, int> cats;
  for (const auto& rec : m.records) {
    const FeatureMap& f = store.features(rec.image_id);
    if (channels == 0) channels = f.channels() - offset;
    if (offset < 0 || channels <= 0 || offset + channels > f.channels()) {
      throw ValidationError("sphere.channel_offset/channels exceed the feature channels of " + rec.image_id);
    }
    const auto pts = masked_points(store.mask(rec.image_id));
    if (pts.empty()) continue;
    SphereImage<float> img;
    img.features.resize(channels, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      auto v = f.at(static_cast<int>(pts[i].row), static_cast<int>(pts[i].col));
      for (int c = 0; c < channels; ++c) img.features(c, static_cast<Eigen::Index>(i)) = v[offset + c];
    }
    img.pose = rec.rotation ? rotation_to_sphere(*rec.rotation)
                            : SpherePoint::from_angles(std::numbers::pi / 2, rec.azimuth_deg * std::numbers::pi / 180);
    images.push_back(std::move(img));
    category_of.push_back(cats.emplace(rec.category, static_cast<int>(cats.size())).first->second);
  }
  if (images.size() < 2) throw ValidationError("train-sphere needs at least two masked images");
  std::vector<int> sizes{channels};
  for (int h : sphere_hidden_layers(r.config)) sizes.push_back(h);
  sizes.push_back(3);
  MapperFile file{SphereMapper<float>(sizes, g.seed), offset};
  SphereTrainConfig tc = sphere_train_config(r.config);
  tc.seed = g.seed;
  const SphereTrainLog log = train_sphere_mapper(file.mapper, images, category_of, tc);
  if (!log.losses.empty()) spdlog::info("train-sphere: final loss {:.6f}", log.losses.back());
  write_mapper(r.out(output), file);
  finish(r);
  return 0;
}

int cmd_train_adapter(const Globals& g, const std::string& manifest_path, const std::vector<std::string>& label_paths,
                      const std::string& output) {
  Run r = start("train-adapter", g);
  const Manifest m = open_manifest(r, manifest_path);
  const ImageStore store = load_store(m);
  if (label_paths.empty()) throw ValidationError("--labels is required");
  std::vector<MatchSet> sets;
  for (const auto& p : label_paths) {
    r.input(p);
    for (auto& s : match_sets(read_labels(p))) sets.push_back(std::move(s));
  }
  for (const auto& s : sets) {
    if (!store.contains(s.src_image) || !store.contains(s.tgt_image)) {
      throw ValidationError("labels reference " + s.src_image + ">" + s.tgt_image + " outside the manifest");
    }
  }
  const auto data = make_train_pairs(sets, store);
  if (data.empty()) throw ValidationError("no pseudo-labels to train on");
  const int channels = store.features(data.front().src->image_id()).channels();
  TrainConfig tc = train_config(r.config);
  tc.seed = g.seed;
  Trainer<float> trainer(Adapter<float>(adapter_shape(r.config, channels), g.seed), tc, data);
  std::string log;
  trainer.run([&](const StepRecord& s) {
    char line[160];
    std::snprintf(line, sizeof line, "{\"step\":%lld,\"lr\":%.9g,\"loss_sparse\":%.9g,\"loss_dense\":%.9g}\n",
                  static_cast<long long>(s.step), s.lr, s.loss_sparse, s.loss_dense);
    log += line;
  });
  write_file(r.out("train_log.jsonl"), log);
  Checkpoint ck{trainer.adapter().shape(), trainer.current_step(), r.config.hash(), trainer.adapter().parameters(),
                trainer.optimizer()};
  write_checkpoint(r.out(output), ck);
  finish(r);
  return 0;
}

std::optional<ImagePairs> open_pairs(Run& r, const std::string& path) {
  if (path.empty()) return std::nullopt;
  r.input(path);
  return decode_pairs(read_file(path), path);
}

int cmd_predict(const Globals& g, const std::string& manifest_path, const std::string& pairs_path,
                const std::string& checkpoint_path, const std::string& output) {
  Run r = start("predict", g);
  const Manifest m = open_manifest(r, manifest_path);
  const ImageStore store = load_store(m);
  const auto eval = build_eval_pairs(m, open_pairs(r, pairs_path));
  std::map<std::string, FeatureMap> refined;
  if (!checkpoint_path.empty()) {
    r.input(checkpoint_path);
    const Checkpoint ck = read_checkpoint(checkpoint_path);
    const Adapter<float> adapter(ck.shape, ck.params);
    std::vector<std::string> ids;
    for (const auto& rec : m.records) ids.push_back(rec.image_id);
    refined = refine_all(adapter, store, ids, g.threads);
  }
  const FeatureLookup lookup = [&](const std::string& id) -> const FeatureMap& {
    return checkpoint_path.empty() ? store.features(id) : refined.at(id);
  };
  const auto preds = predict(eval, lookup, eval_params(r.config), g.threads);
  std::vector<PredictionBlock> blocks;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    blocks.push_back({eval[i].src_record.image_id, eval[i].tgt_record.image_id, preds[i]});
  }
  write_file(r.out(output), encode_predictions(blocks));
  finish(r);
  return 0;
}

int cmd_eval(const Globals& g, const std::string& manifest_path, const std::string& pairs_path,
             const std::string& predictions_path) {
  Run r = start("eval", g);
  if (predictions_path.empty() || !fs::exists(predictions_path)) {
    throw ValidationError("missing predictions" + (predictions_path.empty() ? std::string() : ": " + predictions_path));
  }
  const Manifest m = open_manifest(r, manifest_path);
  const auto eval = build_eval_pairs(m, open_pairs(r, pairs_path));
  r.input(predictions_path);
  const auto preds = align_predictions(decode_predictions(read_file(predictions_path), predictions_path), eval);
  const double alpha = r.config.get_real("eval.alpha");
  std::string jsonl;
  for (PckMode mode : {PckMode::kPerKeypoint, PckMode::kPerImage}) {
    const PckResult res = pck(preds, eval, alpha, mode);
    jsonl += pck_json(res) + '\n';
    std::printf("PCK@%s %s = %.2f (%zu keypoints, %zu pairs)\n", format_double(alpha).c_str(), to_string(mode).c_str(),
                res.value, res.keypoints, res.pairs);
  }
  write_file(r.out("pck.jsonl"), jsonl);
  finish(r);
  return 0;
}

int cmd_analyze_viewpoint(const Globals& g, const std::string& manifest_path, const std::string& pairs_path,
                          const std::string& predictions_path) {
  Run r = start("analyze-viewpoint", g);
  const Manifest m = open_manifest(r, manifest_path);
  const auto eval = build_eval_pairs(m, open_pairs(r, pairs_path));
  std::vector<std::vector<PixelPoint>> preds;
  if (!predictions_path.empty()) {
    r.input(predictions_path);
    preds = align_predictions(decode_predictions(read_file(predictions_path), predictions_path), eval);
  } else {
    const ImageStore store = load_store(m);
    const FeatureLookup lookup = [&](const std::string& id) -> const FeatureMap& { return store.features(id); };
    preds = predict(eval, lookup, eval_params(r.config), g.threads);
  }
  const double alpha = r.config.get_real("eval.alpha");
  const PckMode mode = parse_pck_mode(r.config.get_string("eval.mode"));
  const auto bins = viewpoint_binned_pck(preds, eval, alpha, mode, table_view_bins());
  for (const auto& b : bins) {
    if (b.result) {
      std::printf("%-10s %6.2f  (%zu pairs)\n", b.bin.label().c_str(), b.result->value, b.result->pairs);
    } else {
      std::printf("%-10s      -  (0 pairs)\n", b.bin.label().c_str());
    }
  }
  write_file(r.out("viewpoint.csv"), binned_csv(bins, alpha, mode));
  write_file(r.out("viewpoint.jsonl"), binned_jsonl(bins, alpha, mode));
  finish(r);
  return 0;
}

int cmd_ablate(const Globals& g) {
  Run r = start("ablate", g);
  AblationConfig ac = ablation_config(r.config);
  ac.threads = g.threads;
  const auto results = run_ablation(ac, [](const AblationResult& res) {
    spdlog::info("seed {} {:<26} PCK per_img {:.2f} per_kpt {:.2f}", res.seed, res.row, res.pck_per_img,
                 res.pck_per_kpt);
  });
  write_file(r.out("ablation_runs.csv"), ablation_csv(results));
  const std::string summary = ablation_summary_csv(results);
  write_file(r.out("ablation.csv"), summary);
  std::fputs(summary.c_str(), stdout);
  finish(r);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-label semantic correspondence pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Globals g;
  app.add_option("--config", g.config_path, "flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "override one config key (key=value), repeatable");
  app.add_option("--seed", g.seed, "rng seed");
  app.add_option("--threads", g.threads, "worker threads");
  app.add_option("--out-dir", g.out_dir, "output directory");
  app.add_flag("-v,--verbose", g.verbose, "debug logging");

  std::string manifest, labels_in, mapper, pairs, checkpoint, predictions;
  std::string out_pairs, out_chain, out_fsph, out_tsph, out_tad, out_pred;
  std::vector<std::string> label_list;

  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark");
  auto* pairs_cmd = app.add_subcommand("pairs", "naive pair sampling, matching and cyclic filtering");
  auto* chain = app.add_subcommand("chain", "chains over azimuth bins, propagation and per-hop filtering");
  auto* fsph = app.add_subcommand("filter-sphere", "reject matches far apart on the sphere");
  auto* tsph = app.add_subcommand("train-sphere", "fit a feature-to-sphere mapper from poses");
  auto* tad = app.add_subcommand("train-adapter", "train the feature adapter on pseudo-labels");
  auto* pred = app.add_subcommand("predict", "predict target keypoints with window soft-argmax");
  auto* eval = app.add_subcommand("eval", "PCK of predictions");
  auto* view = app.add_subcommand("analyze-viewpoint", "PCK binned by azimuth difference");
  auto* ablate = app.add_subcommand("ablate", "run the ablation matrix on the synthetic benchmark");

  for (auto* c : {pairs_cmd, chain, fsph, tsph, tad, pred, eval, view}) {
    c->add_option("--manifest", manifest, "manifest file")->required();
  }
  pairs_cmd->add_option("-o,--output", out_pairs, "pseudo-label file")->default_val("pairs.ccpl");
  chain->add_option("-o,--output", out_chain, "pseudo-label file")->default_val("chain.ccpl");
  fsph->add_option("--labels", labels_in, "input pseudo-label file")->required();
  fsph->add_option("--mapper", mapper, "sphere mapper file (mapper mode)");
  fsph->add_option("-o,--output", out_fsph, "pseudo-label file")->default_val("sphere.ccpl");
  tsph->add_option("-o,--output", out_tsph, "mapper file")->default_val("mapper.ccs");
  tad->add_option("--labels", label_list, "pseudo-label files")->required();
  tad->add_option("-o,--output", out_tad, "checkpoint file")->default_val("adapter.cck");
  for (auto* c : {pred, eval, view}) c->add_option("--pairs", pairs, "evaluation pair list");
  pred->add_option("--checkpoint", checkpoint, "adapter checkpoint; raw features without it");
  pred->add_option("-o,--output", out_pred, "predictions file")->default_val("predictions.txt");
  eval->add_option("--predictions", predictions, "predictions file");
  view->add_option("--predictions", predictions, "predictions file; raw-feature predictions without it");

  const auto run = [&]() -> int {
    spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);
    if (synth->parsed()) return cmd_synth(g);
    if (pairs_cmd->parsed()) return cmd_labels(g, "pairs", false, manifest, out_pairs);
    if (chain->parsed()) return cmd_labels(g, "chain", true, manifest, out_chain);
    if (fsph->parsed()) return cmd_filter_sphere(g, manifest, labels_in, mapper, out_fsph);
    if (tsph->parsed()) return cmd_train_sphere(g, manifest, out_tsph);
    if (tad->parsed()) return cmd_train_adapter(g, manifest, label_list, out_tad);
    if (pred->parsed()) return cmd_predict(g, manifest, pairs, checkpoint, out_pred);
    if (eval->parsed()) return cmd_eval(g, manifest, pairs, predictions);
    if (view->parsed()) return cmd_analyze_viewpoint(g, manifest, pairs, predictions);
    if (ablate->parsed()) return cmd_ablate(g);
    return 1;
  };

  std::string command = "pcorr";
  try {
    app.parse(argc, argv);
    for (auto* c : app.get_subcommands()) command = c->get_name();
    return run();
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << error_json(command, "usage", e.what(), 1) << '\n';
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << error_json(command, "validation", e.what(), 1) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << error_json(command, "runtime", e.what(), 2) << '\n';
    return 2;
  }
}
