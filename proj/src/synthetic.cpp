#include "pseudocorr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace pseudocorr {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

using Vec = std::vector<double>;
using Vec3 = std::array<double, 3>;

double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 to_vec(const SpherePoint& p) { return {p.x, p.y, p.z}; }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + stream * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Vec gaussian(std::mt19937_64& rng, int n, double norm_scale) {
  std::normal_distribution<double> nd(0.0, norm_scale / std::sqrt(static_cast<double>(n)));
  Vec v(static_cast<std::size_t>(n));
  for (double& x : v) x = nd(rng);
  return v;
}

// `count` unit vectors in R^dim, mutually orthogonal while count <= dim.
std::vector<Vec> orthonormal_set(std::mt19937_64& rng, int count, int dim) {
  std::vector<Vec> out;
  std::normal_distribution<double> nd(0.0, 1.0);
  while (static_cast<int>(out.size()) < count) {
    Vec v(static_cast<std::size_t>(dim));
    for (double& x : v) x = nd(rng);
    if (static_cast<int>(out.size()) < dim) {
      for (const Vec& u : out) {
        double d = 0;
        for (int i = 0; i < dim; ++i) d += v[i] * u[i];
        for (int i = 0; i < dim; ++i) v[i] -= d * u[i];
      }
    }
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-6) continue;
    for (double& x : v) x /= n;
    out.push_back(std::move(v));
  }
  return out;
}

struct ViewFrame {
  Vec3 right, up, view;
};

ViewFrame view_frame(double azimuth_deg, double elevation_deg) {
  const double p = azimuth_deg * kDeg;
  const double e = elevation_deg * kDeg;
  return {{-std::sin(p), std::cos(p), 0.0},
          {-std::sin(e) * std::cos(p), -std::sin(e) * std::sin(p), std::cos(e)},
          {std::cos(e) * std::cos(p), std::cos(e) * std::sin(p), std::sin(e)}};
}

// Per-category feature directions, laid out in three channel blocks:
// semantic [0, C/2), side [C/2, 3C/4), view [3C/4, C).
struct CategoryCode {
  std::vector<Vec> base;   // per part (symmetric partners share one)
  std::vector<Vec> side;   // per symmetric pair
  std::vector<Vec> view_a;  // per part
  std::vector<Vec> view_b;  // per part, mirrored between partners
  Vec offset_row, offset_col;
  int sem0 = 0, sem_n = 0, side0 = 0, side_n = 0, view0 = 0, view_n = 0;
};

std::vector<SynthPart> sample_parts(std::mt19937_64& rng, const SynthConfig& cfg, int& pairs_out) {
  const int pairs = static_cast<int>(std::lround(cfg.parts * cfg.symmetric_fraction / 2.0));
  const int unpaired = cfg.parts - 2 * pairs;
  pairs_out = pairs;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double min_sep = 0.25 * std::numbers::pi;
  for (int attempt = 0;; ++attempt) {
    std::vector<SynthPart> parts;
    for (int k = 0; k < pairs; ++k) {
      const double y = cfg.pair_y_min + (cfg.pair_y_max - cfg.pair_y_min) * uni(rng);
      const double rest = std::sqrt(1.0 - y * y);
      const double a = 2.0 * std::numbers::pi * uni(rng);
      const double x = rest * std::cos(a);
      const double z = rest * std::sin(a);
      parts.push_back({SpherePoint::normalized(x, y, z), -1, k});
      parts.push_back({SpherePoint::normalized(x, -y, z), +1, k});
    }
    for (int k = 0; k < unpaired; ++k) {
      const double a = 2.0 * std::numbers::pi * uni(rng);
      const double y = 0.2 * (uni(rng) - 0.5);
      parts.push_back({SpherePoint::normalized(std::cos(a), y, std::sin(a)), 0, -1});
    }
    bool ok = true;
    for (std::size_t i = 0; i < parts.size() && ok; ++i) {
      for (std::size_t j = i + 1; j < parts.size(); ++j) {
        if (geodesic(parts[i].point, parts[j].point) < min_sep) {
          ok = false;
          break;
        }
      }
    }
    if (ok || attempt > 10000) return parts;
  }
}

void add_scaled(Vec& dst, const Vec& src, double s, int offset) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[offset + i] += s * src[i];
}

SpherePoint tangent_offset(const SpherePoint& s, double du, double dv) {
  Vec3 p = to_vec(s);
  Vec3 ref = std::abs(p[2]) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  const double d = dot3(ref, p);
  Vec3 t1{ref[0] - d * p[0], ref[1] - d * p[1], ref[2] - d * p[2]};
  const double n1 = std::sqrt(dot3(t1, t1));
  for (double& x : t1) x /= n1;
  const Vec3 t2{p[1] * t1[2] - p[2] * t1[1], p[2] * t1[0] - p[0] * t1[2], p[0] * t1[1] - p[1] * t1[0]};
  return SpherePoint::normalized(p[0] + du * t1[0] + dv * t2[0], p[1] + du * t1[1] + dv * t2[1],
                                 p[2] + du * t1[2] + dv * t2[2]);
}

GridPoint rounded(const GridPoint& p) { return {std::round(p.row), std::round(p.col)}; }

// Projected part centres (unrounded) and the grid layout of one scene.
struct Layout {
  double cy = 0, cx = 0, radius = 0;
  ViewFrame frame;
  GridPoint project(const SpherePoint& s) const {
    const Vec3 v = to_vec(s);
    return {cy - radius * dot3(v, frame.up), cx + radius * dot3(v, frame.right)};
  }
};

SynthScene render_scene(std::mt19937_64& rng, const SynthConfig& cfg, const SynthCategory& cat,
                        const CategoryCode& code, int category_index, int instance) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int G = cfg.grid;
  const int C = cfg.channels;
  const int P = static_cast<int>(cat.parts.size());

  SynthScene sc;
  sc.category = category_index;
  sc.test = instance >= cfg.instances - cfg.test_instances;
  const double azimuth = 360.0 * uni(rng);
  sc.elevation_deg = cfg.elevation_min_deg + (cfg.elevation_max_deg - cfg.elevation_min_deg) * uni(rng);
  Layout lay;
  lay.frame = view_frame(azimuth, sc.elevation_deg);
  lay.radius = cfg.object_radius * G;
  lay.cy = (G - 1) / 2.0 + (2.0 * uni(rng) - 1.0);
  lay.cx = (G - 1) / 2.0 + (2.0 * uni(rng) - 1.0);
  sc.pose = SpherePoint::normalized(lay.frame.view[0], lay.frame.view[1], lay.frame.view[2]);

  sc.part_present.assign(P, true);
  sc.part_front_facing.assign(P, false);
  for (int j = 0; j < P; ++j) {
    sc.part_present[j] = uni(rng) >= cfg.unmatchable_part_prob;
    sc.part_front_facing[j] = dot3(to_vec(cat.parts[j].point), lay.frame.view) > -cfg.visibility_margin;
  }
  auto usable = [&](int j) { return sc.part_present[j] && sc.part_front_facing[j]; };
  if (std::none_of(sc.part_front_facing.begin(), sc.part_front_facing.end(), [](bool b) { return b; })) {
    // cannot happen for a well-spread layout, but keep the mask non-empty
    int best = 0;
    for (int j = 1; j < P; ++j) {
      if (dot3(to_vec(cat.parts[j].point), lay.frame.view) > dot3(to_vec(cat.parts[best].point), lay.frame.view)) {
        best = j;
      }
    }
    sc.part_front_facing[best] = true;
  }
  bool any_usable = false;
  for (int j = 0; j < P; ++j) any_usable = any_usable || usable(j);
  if (!any_usable) {
    for (int j = 0; j < P; ++j) {
      if (sc.part_front_facing[j]) {
        sc.part_present[j] = true;
        break;
      }
    }
  }

  // Parts are stamped as discs around their projected anchors, back to front, so a
  // nearer part occludes the cells it overlaps. The mask is the union of the stamps.
  std::vector<GridPoint>& centre = sc.part_anchor;
  centre.assign(P, GridPoint{});
  for (int j = 0; j < P; ++j) centre[j] = rounded(lay.project(cat.parts[j].point));
  std::vector<int> order;
  for (int j = 0; j < P; ++j) {
    if (usable(j)) order.push_back(j);
  }
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return dot3(to_vec(cat.parts[x].point), lay.frame.view) < dot3(to_vec(cat.parts[y].point), lay.frame.view);
  });
  sc.part_of_cell.assign(static_cast<std::size_t>(G) * G, -1);
  sc.mask = Mask(G, G);
  const int reach = static_cast<int>(std::floor(cfg.part_radius));
  for (int j : order) {
    for (int dr = -reach; dr <= reach; ++dr) {
      for (int dc = -reach; dc <= reach; ++dc) {
        if (dr * dr + dc * dc > cfg.part_radius * cfg.part_radius) continue;
        const int r = static_cast<int>(centre[j].row) + dr;
        const int c = static_cast<int>(centre[j].col) + dc;
        if (r < 0 || r >= G || c < 0 || c >= G) continue;
        sc.part_of_cell[static_cast<std::size_t>(r) * G + c] = j;
        sc.mask.set(r, c);
      }
    }
  }
  sc.part_center.assign(P, std::nullopt);
  for (int j = 0; j < P; ++j) {
    const int r = static_cast<int>(centre[j].row);
    const int c = static_cast<int>(centre[j].col);
    if (usable(j) && r >= 0 && r < G && c >= 0 && c < G && sc.part_of_cell[static_cast<std::size_t>(r) * G + c] == j) {
      sc.part_center[j] = centre[j];
    }
  }

  // Features.
  std::vector<Vec> instance_noise(P);
  for (int j = 0; j < P; ++j) {
    instance_noise[j] = gaussian(rng, C, cfg.instance_noise);
    for (int k = code.side0; k < code.side0 + code.side_n; ++k) instance_noise[j][k] *= cfg.side_noise_scale;
  }
  const double cphi = std::cos(azimuth * kDeg);
  const double sphi = std::sin(azimuth * kDeg);
  const double side_mag = (1.0 - cfg.confusion) * cfg.side_scale;
  std::vector<float> data(static_cast<std::size_t>(G) * G * C);
  std::vector<float> sphere(static_cast<std::size_t>(G) * G * 3);
  std::normal_distribution<double> sphere_nd(0.0, cfg.sphere_noise);
  for (int cell = 0; cell < G * G; ++cell) {
    const int j = sc.part_of_cell[cell];
    Vec f = gaussian(rng, C, j < 0 ? 0.5 : cfg.cell_noise);
    SpherePoint psi;
    if (j >= 0) {
      const SynthPart& part = cat.parts[j];
      const double o_r = cell / G - centre[j].row;
      const double o_c = cell % G - centre[j].col;
      add_scaled(f, code.base[j], 1.0, code.sem0);
      add_scaled(f, code.offset_row, cfg.offset_scale * o_r, code.sem0);
      add_scaled(f, code.offset_col, cfg.offset_scale * o_c, code.sem0);
      if (part.pair >= 0) add_scaled(f, code.side[part.pair], part.side * side_mag, code.side0);
      add_scaled(f, code.view_a[j], cfg.view_noise_slope * cphi, code.view0);
      add_scaled(f, code.view_b[j], cfg.view_noise_slope * sphi, code.view0);
      for (int k = 0; k < C; ++k) f[k] += instance_noise[j][k];
      psi = tangent_offset(part.point, 0.02 * o_r + sphere_nd(rng), 0.02 * o_c + sphere_nd(rng));
    }
    for (int k = 0; k < C; ++k) data[static_cast<std::size_t>(cell) * C + k] = static_cast<float>(f[k]);
    sphere[static_cast<std::size_t>(cell) * 3 + 0] = static_cast<float>(psi.x);
    sphere[static_cast<std::size_t>(cell) * 3 + 1] = static_cast<float>(psi.y);
    sphere[static_cast<std::size_t>(cell) * 3 + 2] = static_cast<float>(psi.z);
  }

  char id[64];
  std::snprintf(id, sizeof id, "%s_%03d", cat.name.c_str(), instance);
  ImageRecord& rec = sc.record;
  rec.image_id = id;
  rec.category = cat.name;
  rec.azimuth_deg = normalize_azimuth(azimuth);
  rec.azimuth_bin = azimuth_bin_of(rec.azimuth_deg);
  Mat3 rot;
  for (int row = 0; row < 3; ++row) {
    rot[row * 3 + 0] = lay.frame.right[row];
    rot[row * 3 + 1] = lay.frame.up[row];
    rot[row * 3 + 2] = lay.frame.view[row];
  }
  rec.rotation = rot;
  int rmin = G, rmax = -1, cmin = G, cmax = -1;
  for (int r = 0; r < G; ++r) {
    for (int c = 0; c < G; ++c) {
      if (!sc.mask.test(r, c)) continue;
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
      cmin = std::min(cmin, c);
      cmax = std::max(cmax, c);
    }
  }
  rec.patch_size = cfg.patch_size;
  rec.bbox = {cmin * cfg.patch_size, rmin * cfg.patch_size, (cmax - cmin + 1) * cfg.patch_size,
              (rmax - rmin + 1) * cfg.patch_size};
  rec.feature_path = "features/" + rec.image_id + ".ccf";
  rec.mask_path = "masks/" + rec.image_id + ".ccm";
  rec.keypoints_path = "keypoints/" + rec.image_id + ".kp";
  rec.sphere_path = "sphere/" + rec.image_id + ".ccf";
  sc.features = FeatureMap(G, G, C, std::move(data), rec.image_id);
  sc.sphere = FeatureMap(G, G, 3, std::move(sphere), rec.image_id);
  return sc;
}

CategoryCode make_code(std::mt19937_64& rng, const SynthConfig& cfg, const SynthCategory& cat) {
  CategoryCode code;
  const int C = cfg.channels;
  code.sem0 = 0;
  code.sem_n = C / 2;
  code.side0 = code.sem_n;
  code.side_n = C / 4;
  code.view0 = code.side0 + code.side_n;
  code.view_n = C - code.view0;
  const int P = static_cast<int>(cat.parts.size());
  // Distinct semantic identities: one per unpaired part, one per symmetric pair, plus two offset axes.
  const int identities = P - cat.symmetric_pairs;
  auto sem = orthonormal_set(rng, identities + 2, code.sem_n);
  code.offset_row = sem[identities];
  code.offset_col = sem[identities + 1];
  auto side = orthonormal_set(rng, std::max(cat.symmetric_pairs, 1), code.side_n);
  code.side.assign(side.begin(), side.begin() + cat.symmetric_pairs);
  code.base.resize(P);
  code.view_a.resize(P);
  code.view_b.resize(P);
  int next_identity = 0;
  std::vector<int> pair_identity(cat.symmetric_pairs, -1);
  std::vector<Vec> pair_a(cat.symmetric_pairs), pair_b(cat.symmetric_pairs);
  for (int j = 0; j < P; ++j) {
    const SynthPart& part = cat.parts[j];
    if (part.pair < 0) {
      code.base[j] = sem[next_identity++];
      code.view_a[j] = orthonormal_set(rng, 1, code.view_n)[0];
      code.view_b[j] = orthonormal_set(rng, 1, code.view_n)[0];
      continue;
    }
    if (pair_identity[part.pair] < 0) {
      pair_identity[part.pair] = next_identity++;
      pair_a[part.pair] = orthonormal_set(rng, 1, code.view_n)[0];
      pair_b[part.pair] = orthonormal_set(rng, 1, code.view_n)[0];
    }
    code.base[j] = sem[pair_identity[part.pair]];
    code.view_a[j] = pair_a[part.pair];
    code.view_b[j] = pair_b[part.pair];
    // Mirrored partner: seen from azimuth -phi it looks like the other side seen from phi.
    if (cfg.mirrored_view && part.side > 0) {
      for (double& x : code.view_b[j]) x = -x;
    }
  }
  return code;
}

}  // namespace

void validate(const SynthConfig& c) {
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string("synth.") + name + " must be in [0, 1]");
  };
  unit(c.symmetric_fraction, "symmetric_fraction");
  unit(c.confusion, "confusion");
  unit(c.unmatchable_part_prob, "unmatchable_part_prob");
  if (c.grid < 8) throw ValidationError("synth.grid must be at least 8");
  if (c.categories <= 0) throw ValidationError("synth.categories must be positive");
  if (c.instances < 2) throw ValidationError("synth.instances must be at least 2");
  if (c.test_instances < 0 || c.test_instances > c.instances) {
    throw ValidationError("synth.test_instances must be in [0, instances]");
  }
  if (c.parts < 1) throw ValidationError("synth.parts must be positive");
  if (c.channels < 8) throw ValidationError("synth.channels must be at least 8");
  if (!(c.object_radius > 0.0 && c.object_radius <= 0.5)) throw ValidationError("synth.object_radius must be in (0, 0.5]");
  if (!(c.pair_y_min > 0.0 && c.pair_y_min <= c.pair_y_max && c.pair_y_max < 1.0)) {
    throw ValidationError("synth.pair_y_min/max must satisfy 0 < min <= max < 1");
  }
  if (!(c.visibility_margin >= 0.0 && c.visibility_margin < 1.0)) {
    throw ValidationError("synth.visibility_margin must be in [0, 1)");
  }
  if (!(c.part_radius >= 0.0)) throw ValidationError("synth.part_radius must be non-negative");
  if (!(c.view_noise_slope >= 0) || !(c.instance_noise >= 0) || !(c.cell_noise >= 0) || !(c.offset_scale >= 0) ||
      !(c.side_scale >= 0) || !(c.sphere_noise >= 0) || !(c.side_noise_scale >= 0)) {
    throw ValidationError("synth noise scales must be non-negative");
  }
  if (!(c.elevation_min_deg <= c.elevation_max_deg) || c.elevation_min_deg < -90 || c.elevation_max_deg > 90) {
    throw ValidationError("synth elevation range invalid");
  }
  if (!(c.patch_size > 0)) throw ValidationError("synth.patch_size must be positive");
}

SynthDataset generate(const SynthConfig& config) {
  validate(config);
  SynthDataset ds;
  ds.config = config;
  for (int k = 0; k < config.categories; ++k) {
    std::mt19937_64 rng(mix_seed(config.seed, static_cast<std::uint64_t>(k)));
    SynthCategory cat;
    cat.name = "cat" + std::to_string(k);
    cat.parts = sample_parts(rng, config, cat.symmetric_pairs);
    const CategoryCode code = make_code(rng, config, cat);
    for (int i = 0; i < config.instances; ++i) ds.scenes.push_back(render_scene(rng, config, cat, code, k, i));
    ds.categories.push_back(std::move(cat));
  }
  ds.build_index();
  return ds;
}

void SynthDataset::build_index() {
  index_.clear();
  for (std::size_t i = 0; i < scenes.size(); ++i) index_[scenes[i].record.image_id] = i;
}

const SynthScene& SynthDataset::scene(const std::string& image_id) const {
  auto it = index_.find(image_id);
  if (it == index_.end()) throw ValidationError("unknown synthetic image '" + image_id + "'");
  return scenes[it->second];
}

std::vector<ImageRecord> SynthDataset::records(bool include_train, bool include_test) const {
  std::vector<ImageRecord> out;
  for (const auto& s : scenes) {
    if ((s.test && include_test) || (!s.test && include_train)) out.push_back(s.record);
  }
  return out;
}

ImageStore SynthDataset::store() const {
  ImageStore st;
  for (const auto& s : scenes) st.insert(s.record.image_id, s.features, s.mask);
  return st;
}

std::optional<GridPoint> SynthDataset::map(const std::string& src_image, const std::string& tgt_image,
                                           const GridPoint& p) const {
  const SynthScene& a = scene(src_image);
  const SynthScene& b = scene(tgt_image);
  const int G = config.grid;
  if (p.row != std::round(p.row) || p.col != std::round(p.col)) return std::nullopt;
  const int r = static_cast<int>(p.row);
  const int c = static_cast<int>(p.col);
  if (r < 0 || r >= G || c < 0 || c >= G) return std::nullopt;
  const int j = a.part_of_cell[static_cast<std::size_t>(r) * G + c];
  if (j < 0 || !b.part_present[j] || !b.part_front_facing[j]) return std::nullopt;
  const int tr = r + static_cast<int>(b.part_anchor[j].row - a.part_anchor[j].row);
  const int tc = c + static_cast<int>(b.part_anchor[j].col - a.part_anchor[j].col);
  if (tr < 0 || tr >= G || tc < 0 || tc >= G) return std::nullopt;
  if (b.part_of_cell[static_cast<std::size_t>(tr) * G + tc] != j) return std::nullopt;
  return GridPoint{static_cast<double>(tr), static_cast<double>(tc)};
}

std::vector<GridPoint> SynthDataset::matchable_points(const std::string& src_image,
                                                      const std::string& tgt_image) const {
  std::vector<GridPoint> out;
  for (const GridPoint& p : masked_points(scene(src_image).mask)) {
    if (map(src_image, tgt_image, p)) out.push_back(p);
  }
  return out;
}

std::vector<EvalPair> SynthDataset::eval_pairs(bool test_split) const {
  std::vector<EvalPair> out;
  for (std::size_t k = 0; k < categories.size(); ++k) {
    std::vector<const SynthScene*> members;
    for (const auto& s : scenes) {
      if (s.category == static_cast<int>(k) && s.test == test_split) members.push_back(&s);
    }
    for (const SynthScene* a : members) {
      for (const SynthScene* b : members) {
        if (a == b) continue;
        EvalPair pair{a->record, b->record, {}, categories[k].name};
        for (std::size_t j = 0; j < a->part_center.size(); ++j) {
          if (!a->part_center[j] || !b->part_center[j]) continue;
          pair.gt.push_back({grid_to_pixel(*a->part_center[j], config.patch_size),
                             grid_to_pixel(*b->part_center[j], config.patch_size)});
        }
        out.push_back(std::move(pair));
      }
    }
  }
  return out;
}

std::vector<SpherePoint> SynthDataset::cell_sphere_points(const std::string& image_id,
                                                          std::span<const GridPoint> points) const {
  const SynthScene& s = scene(image_id);
  std::vector<SpherePoint> out;
  out.reserve(points.size());
  for (const GridPoint& p : points) {
    const auto v = s.sphere.cell(cell_index(p, s.sphere));
    out.push_back(SpherePoint::normalized(v[0], v[1], v[2]));
  }
  return out;
}

double symmetric_margin(double shared_norm_sq, double confusion, double side_scale) {
  const double s = (1.0 - confusion) * side_scale;
  const double denom = shared_norm_sq + s * s;
  return denom == 0.0 ? 0.0 : 2.0 * s * s / denom;
}

PlantReport plant_report(const SynthDataset& ds) {
  PlantReport rep;
  rep.min_separation_rad = std::numbers::pi;
  for (const auto& cat : ds.categories) {
    for (int k = 0; k < cat.symmetric_pairs; ++k) {
      const SynthPart* left = nullptr;
      const SynthPart* right = nullptr;
      for (const auto& p : cat.parts) {
        if (p.pair != k) continue;
        (p.side < 0 ? left : right) = &p;
      }
      if (!left || !right) continue;
      SymmetricPairRow row{cat.name, k, geodesic(left->point, right->point),
                           symmetric_margin(1.0, ds.config.confusion, ds.config.side_scale)};
      rep.min_separation_rad = std::min(rep.min_separation_rad, row.separation_rad);
      rep.symmetric_pairs.push_back(row);
    }
  }
  if (rep.symmetric_pairs.empty()) rep.min_separation_rad = 0.0;

  std::size_t visible = 0, present = 0, total = 0;
  for (const auto& s : ds.scenes) {
    for (std::size_t j = 0; j < s.part_front_facing.size(); ++j) {
      visible += s.part_front_facing[j] ? 1 : 0;
      present += s.part_present[j] ? 1 : 0;
      ++total;
    }
  }
  rep.visibility_rate = total == 0 ? 0.0 : static_cast<double>(visible) / total;
  rep.presence_rate = total == 0 ? 0.0 : static_cast<double>(present) / total;

  // For a part point s and elevation e, s.v = A cos(phi - phi0) + B with
  // A = cos(e) |s_xy| and B = sin(e) s_z; with margin m the visible azimuth fraction is
  // acos(-(B + m)/A) / pi.
  const int steps = 512;
  double expected = 0.0;
  std::size_t parts = 0;
  for (const auto& cat : ds.categories) {
    for (const auto& part : cat.parts) {
      const double rxy = std::hypot(part.point.x, part.point.y);
      double acc = 0.0;
      for (int i = 0; i < steps; ++i) {
        const double e =
            (ds.config.elevation_min_deg +
             (ds.config.elevation_max_deg - ds.config.elevation_min_deg) * (i + 0.5) / steps) *
            kDeg;
        const double A = std::cos(e) * rxy;
        const double B = std::sin(e) * part.point.z + ds.config.visibility_margin;
        double frac;
        if (A <= 1e-15) {
          frac = B > 0 ? 1.0 : 0.0;
        } else {
          frac = std::acos(std::clamp(-B / A, -1.0, 1.0)) / std::numbers::pi;
        }
        acc += frac;
      }
      expected += acc / steps;
      ++parts;
    }
  }
  rep.expected_visibility_rate = parts == 0 ? 0.0 : expected / parts;
  return rep;
}

}  // namespace pseudocorr
