#include "pseudocorr/config.hpp"

#include <algorithm>
#include <set>

#include "pseudocorr/io.hpp"

namespace pseudocorr {

namespace {

std::string num(double v) { return format_double(v); }
std::string num(std::int64_t v) { return std::to_string(v); }
std::string num(int v) { return std::to_string(v); }
std::string flag(bool b) { return b ? "true" : "false"; }

std::vector<ConfigKey> build_schema() {
  const SynthConfig s;
  const TrainConfig t;
  const AdapterShape a;
  const LabelConfig l;
  const SoftArgmaxParams e;
  const SphereTrainConfig st;
  using T = ConfigType;
  return {
      {"synth.categories", T::kInt, num(s.categories), "object categories"},
      {"synth.instances", T::kInt, num(s.instances), "instances per category, held-out ones included"},
      {"synth.test_instances", T::kInt, num(s.test_instances), "held-out instances per category"},
      {"synth.parts", T::kInt, num(s.parts), "parts per object"},
      {"synth.symmetric_fraction", T::kReal, num(s.symmetric_fraction), "fraction of parts in left/right pairs"},
      {"synth.confusion", T::kReal, num(s.confusion), "1 makes symmetric partners identical"},
      {"synth.side_scale", T::kReal, num(s.side_scale), "scale of the left/right component"},
      {"synth.side_noise_scale", T::kReal, num(s.side_noise_scale), "instance noise factor in the side block"},
      {"synth.mirrored_view", T::kBool, flag(s.mirrored_view), "mirror the right partner's view code"},
      {"synth.view_noise_slope", T::kReal, num(s.view_noise_slope), "azimuth-dependent feature drift"},
      {"synth.instance_noise", T::kReal, num(s.instance_noise), "per-instance part noise"},
      {"synth.cell_noise", T::kReal, num(s.cell_noise), "per-cell noise"},
      {"synth.offset_scale", T::kReal, num(s.offset_scale), "within-part position code"},
      {"synth.channels", T::kInt, num(s.channels), "feature channels"},
      {"synth.grid", T::kInt, num(s.grid), "grid side"},
      {"synth.object_radius", T::kReal, num(s.object_radius), "object radius as a grid fraction"},
      {"synth.pair_y_min", T::kReal, num(s.pair_y_min), "lowest |y| of symmetric part points"},
      {"synth.pair_y_max", T::kReal, num(s.pair_y_max), "highest |y| of symmetric part points"},
      {"synth.part_radius", T::kReal, num(s.part_radius), "part disc radius in cells"},
      {"synth.unmatchable_part_prob", T::kReal, num(s.unmatchable_part_prob), "per-instance part dropout"},
      {"synth.visibility_margin", T::kReal, num(s.visibility_margin), "visible while part . view > -margin"},
      {"synth.elevation_min_deg", T::kReal, num(s.elevation_min_deg), "camera elevation range"},
      {"synth.elevation_max_deg", T::kReal, num(s.elevation_max_deg), "camera elevation range"},
      {"synth.sphere_noise", T::kReal, num(s.sphere_noise), "noise on per-cell sphere points (rad)"},
      {"synth.patch_size", T::kReal, num(s.patch_size), "pixels per grid cell"},

      {"labels.count", T::kInt, num(l.count), "pairs or chains per category"},
      {"labels.chain_length", T::kInt, num(l.chain_length), "images per chain"},
      {"labels.chaining", T::kBool, flag(l.chaining), "compose labels through chains"},
      {"labels.filter", T::kString, "relaxed", "none, exact or relaxed"},
      {"labels.r_max", T::kReal, num(kDefaultRMax), "relaxed cyclic radius, strict"},
      {"labels.sphere_reject", T::kBool, flag(l.sphere_reject), "reject matches far apart on the sphere"},
      {"labels.theta_th", T::kReal, num(l.theta_th), "sphere rejection threshold (rad)"},
      {"labels.target_mask", T::kBool, flag(l.target_mask), "restrict matches to the target mask"},

      {"adapter.hidden", T::kInt, num(a.hidden), "bottleneck width"},
      {"adapter.blocks", T::kInt, num(a.blocks), "residual blocks"},
      {"adapter.out_channels", T::kInt, num(a.out_channels), "output projection width, 0 for none"},

      {"train.steps", T::kInt, num(t.steps), "optimizer steps"},
      {"train.peak_lr", T::kReal, num(t.peak_lr), "one-cycle peak learning rate"},
      {"train.weight_decay", T::kReal, num(t.weight_decay), "AdamW decoupled decay"},
      {"train.warmup_frac", T::kReal, num(t.warmup_frac), "one-cycle warmup fraction"},
      {"train.lambda_sparse", T::kReal, num(t.lambda_sparse), "sparse loss weight"},
      {"train.lambda_dense", T::kReal, num(t.lambda_dense), "dense loss weight"},
      {"train.sparse_temperature", T::kReal, num(t.sparse_temperature), "contrastive temperature"},
      {"train.window", T::kInt, num(t.window), "soft-argmax window in the dense loss"},
      {"train.softargmax_temperature", T::kReal, num(t.softargmax_temperature), "dense loss softmax temperature"},
      {"train.noise_sigma", T::kReal, num(t.noise_sigma), "target jitter in cells"},
      {"train.max_matches", T::kInt, num(t.max_matches), "labels drawn per pair"},
      {"train.pairs_per_step", T::kInt, num(t.pairs_per_step), "pairs averaged per step"},

      {"eval.window", T::kInt, num(e.window), "prediction soft-argmax window"},
      {"eval.temperature", T::kReal, num(e.temperature), "prediction softmax temperature"},
      {"eval.alpha", T::kReal, "0.1", "PCK threshold as a fraction of max(bbox w, h)"},
      {"eval.mode", T::kString, "per_img", "per_img or per_kpt"},

      {"sphere.hidden", T::kString, "64", "comma-separated hidden widths of the mapper"},
      {"sphere.channel_offset", T::kInt, "0", "first feature channel fed to the mapper"},
      {"sphere.channels", T::kInt, "0", "channels fed to the mapper, 0 for all from the offset"},
      {"sphere.steps", T::kInt, num(st.steps), "mapper training steps"},
      {"sphere.pairs_per_step", T::kInt, num(st.pairs_per_step), "image pairs per mapper step"},
      {"sphere.lr", T::kReal, num(st.lr), "mapper learning rate"},
      {"sphere.pose_bin_deg", T::kReal, num(st.loss.pose_bin_deg), "quantize pose azimuths, 0 for off"},
      {"sphere.source", T::kString, "oracle", "oracle (sphere grids) or mapper"},

      {"ablation.seeds", T::kString, "0,1,2,3,4", "comma-separated seeds"},
  };
}

const ConfigKey& key_of(const std::string& name) {
  for (const auto& k : config_schema()) {
    if (k.name == name) return k;
  }
  throw ValidationError("unknown config key '" + name + "'");
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string normalize(const ConfigKey& k, const std::string& value) {
  const std::string what = "config key " + k.name;
  switch (k.type) {
    case ConfigType::kInt:
      return std::to_string(parse_int(value, what));
    case ConfigType::kUInt: {
      const auto v = parse_int(value, what);
      if (v < 0) throw ValidationError(what + " must be non-negative");
      return std::to_string(v);
    }
    case ConfigType::kReal: {
      const double v = parse_double(value, what);
      if (!std::isfinite(v)) throw ValidationError(what + " must be finite");
      return format_double(v);
    }
    case ConfigType::kBool:
      if (value == "true" || value == "1") return "true";
      if (value == "false" || value == "0") return "false";
      throw ValidationError(what + ": '" + value + "' is not a boolean");
    case ConfigType::kString:
      if (value.find_first_of("\n\r") != std::string::npos) throw ValidationError(what + " contains a newline");
      return value;
  }
  return value;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto p = s.find(',', start);
    out.push_back(trim(s.substr(start, p == std::string::npos ? std::string::npos : p - start)));
    if (p == std::string::npos) break;
    start = p + 1;
  }
  return out;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = build_schema();
  return schema;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Config::Config() {
  for (const auto& k : config_schema()) values_[k.name] = k.default_value;
}

Config Config::parse(std::string_view text, const std::string& source) {
  Config c;
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw FormatError(source, "expected 'key = value'", std::nullopt, line_no);
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh) {
      throw FormatError(source, "key '" + key + "' repeats line " + std::to_string(it->second), std::nullopt, line_no);
    }
    try {
      c.set(key, value);
    } catch (const FormatError&) {
      throw;
    } catch (const ValidationError& e) {
      throw FormatError(source, e.what(), std::nullopt, line_no);
    }
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = normalize(key_of(key), value);
}

bool Config::is_default(const std::string& key) const { return values_.at(key) == key_of(key).default_value; }

const std::string& Config::raw(const std::string& key, ConfigType type) const {
  if (key_of(key).type != type) throw Error("config key " + key + " read with the wrong type");
  return values_.at(key);
}

std::int64_t Config::get_int(const std::string& key) const { return parse_int(raw(key, ConfigType::kInt), key); }
std::uint64_t Config::get_uint(const std::string& key) const {
  return static_cast<std::uint64_t>(parse_int(raw(key, ConfigType::kUInt), key));
}
double Config::get_real(const std::string& key) const { return parse_double(raw(key, ConfigType::kReal), key); }
bool Config::get_bool(const std::string& key) const { return raw(key, ConfigType::kBool) == "true"; }
const std::string& Config::get_string(const std::string& key) const { return raw(key, ConfigType::kString); }

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + '=' + v + '\n';
  return out;
}

SynthConfig synth_config(const Config& c) {
  SynthConfig s;
  s.categories = static_cast<int>(c.get_int("synth.categories"));
  s.instances = static_cast<int>(c.get_int("synth.instances"));
  s.test_instances = static_cast<int>(c.get_int("synth.test_instances"));
  s.parts = static_cast<int>(c.get_int("synth.parts"));
  s.symmetric_fraction = c.get_real("synth.symmetric_fraction");
  s.confusion = c.get_real("synth.confusion");
  s.side_scale = c.get_real("synth.side_scale");
  s.side_noise_scale = c.get_real("synth.side_noise_scale");
  s.mirrored_view = c.get_bool("synth.mirrored_view");
  s.view_noise_slope = c.get_real("synth.view_noise_slope");
  s.instance_noise = c.get_real("synth.instance_noise");
  s.cell_noise = c.get_real("synth.cell_noise");
  s.offset_scale = c.get_real("synth.offset_scale");
  s.channels = static_cast<int>(c.get_int("synth.channels"));
  s.grid = static_cast<int>(c.get_int("synth.grid"));
  s.object_radius = c.get_real("synth.object_radius");
  s.pair_y_min = c.get_real("synth.pair_y_min");
  s.pair_y_max = c.get_real("synth.pair_y_max");
  s.part_radius = c.get_real("synth.part_radius");
  s.unmatchable_part_prob = c.get_real("synth.unmatchable_part_prob");
  s.visibility_margin = c.get_real("synth.visibility_margin");
  s.elevation_min_deg = c.get_real("synth.elevation_min_deg");
  s.elevation_max_deg = c.get_real("synth.elevation_max_deg");
  s.sphere_noise = c.get_real("synth.sphere_noise");
  s.patch_size = c.get_real("synth.patch_size");
  validate(s);
  return s;
}

TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.steps = c.get_int("train.steps");
  t.peak_lr = c.get_real("train.peak_lr");
  t.weight_decay = c.get_real("train.weight_decay");
  t.warmup_frac = c.get_real("train.warmup_frac");
  t.lambda_sparse = c.get_real("train.lambda_sparse");
  t.lambda_dense = c.get_real("train.lambda_dense");
  t.sparse_temperature = c.get_real("train.sparse_temperature");
  t.window = static_cast<int>(c.get_int("train.window"));
  t.softargmax_temperature = c.get_real("train.softargmax_temperature");
  t.noise_sigma = c.get_real("train.noise_sigma");
  t.max_matches = static_cast<int>(c.get_int("train.max_matches"));
  t.pairs_per_step = static_cast<int>(c.get_int("train.pairs_per_step"));
  validate(t);
  return t;
}

AdapterShape adapter_shape(const Config& c, int in_channels) {
  AdapterShape a;
  a.in_channels = in_channels;
  a.hidden = static_cast<int>(c.get_int("adapter.hidden"));
  a.blocks = static_cast<int>(c.get_int("adapter.blocks"));
  a.out_channels = static_cast<int>(c.get_int("adapter.out_channels"));
  if (in_channels <= 0 || a.hidden <= 0 || a.blocks <= 0 || a.out_channels < 0) {
    throw ValidationError("adapter shape must have positive widths");
  }
  return a;
}

LabelConfig label_config(const Config& c) {
  LabelConfig l;
  l.count = static_cast<int>(c.get_int("labels.count"));
  l.chain_length = static_cast<int>(c.get_int("labels.chain_length"));
  l.chaining = c.get_bool("labels.chaining");
  const std::string& f = c.get_string("labels.filter");
  const double r = c.get_real("labels.r_max");
  if (f == "none") {
    l.filter = CycleFilter::none();
  } else if (f == "exact") {
    l.filter = CycleFilter::exact();
  } else if (f == "relaxed") {
    if (!(r >= 0)) throw ValidationError("labels.r_max must be non-negative");
    l.filter = CycleFilter::relaxed(r);
  } else {
    throw ValidationError("labels.filter must be none, exact or relaxed");
  }
  l.sphere_reject = c.get_bool("labels.sphere_reject");
  l.theta_th = c.get_real("labels.theta_th");
  l.target_mask = c.get_bool("labels.target_mask");
  if (l.count <= 0) throw ValidationError("labels.count must be positive");
  if (l.chain_length < 2) throw ValidationError("labels.chain_length must be at least 2");
  if (!(l.theta_th > 0)) throw ValidationError("labels.theta_th must be positive");
  return l;
}

SoftArgmaxParams eval_params(const Config& c) {
  SoftArgmaxParams p;
  p.window = static_cast<int>(c.get_int("eval.window"));
  p.temperature = c.get_real("eval.temperature");
  if (p.window <= 0 || p.window % 2 == 0) throw ValidationError("eval.window must be a positive odd number");
  if (!(p.temperature > 0)) throw ValidationError("eval.temperature must be positive");
  return p;
}

SphereTrainConfig sphere_train_config(const Config& c) {
  SphereTrainConfig s;
  s.steps = static_cast<int>(c.get_int("sphere.steps"));
  s.pairs_per_step = static_cast<int>(c.get_int("sphere.pairs_per_step"));
  s.lr = c.get_real("sphere.lr");
  s.loss.pose_bin_deg = c.get_real("sphere.pose_bin_deg");
  if (s.steps < 0 || s.pairs_per_step <= 0 || !(s.lr > 0) || s.loss.pose_bin_deg < 0) {
    throw ValidationError("invalid sphere.* training settings");
  }
  return s;
}

std::vector<int> sphere_hidden_layers(const Config& c) {
  std::vector<int> out;
  const std::string& s = c.get_string("sphere.hidden");
  if (trim(s).empty()) return out;
  for (const auto& part : split_list(s)) {
    const auto v = parse_int(part, "sphere.hidden");
    if (v <= 0) throw ValidationError("sphere.hidden widths must be positive");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

AblationConfig ablation_config(const Config& c) {
  AblationConfig a;
  a.synth = synth_config(c);
  a.train = train_config(c);
  a.shape = adapter_shape(c, a.synth.channels);
  a.labels = label_config(c);
  a.r_max = c.get_real("labels.r_max");
  a.eval = eval_params(c);
  a.alpha = c.get_real("eval.alpha");
  if (!(a.alpha > 0)) throw ValidationError("eval.alpha must be positive");
  a.seeds.clear();
  for (const auto& part : split_list(c.get_string("ablation.seeds"))) {
    const auto v = parse_int(part, "ablation.seeds");
    if (v < 0) throw ValidationError("ablation.seeds must be non-negative");
    a.seeds.push_back(static_cast<std::uint64_t>(v));
  }
  if (a.seeds.empty()) throw ValidationError("ablation.seeds is empty");
  return a;
}

}  // namespace pseudocorr
