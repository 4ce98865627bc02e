#include "pseudocorr/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace pseudocorr {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string describe(const std::string& source, const std::string& what, std::optional<std::uint64_t> offset,
                     std::optional<std::size_t> line) {
  std::string s = source;
  if (offset) s += " @ byte " + std::to_string(*offset);
  if (line) s += ":" + std::to_string(*line);
  return s + ": " + what;
}

}  // namespace

FormatError::FormatError(const std::string& source, const std::string& what, std::optional<std::uint64_t> offset,
                         std::optional<std::size_t> line)
    : ValidationError(describe(source, what, offset, line)), source_(source), offset_(offset), line_(line) {}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf;
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

double parse_double(std::string_view s, const std::string& what) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ValidationError(what + ": '" + std::string(s) + "' is not a number");
  }
  return v;
}

std::int64_t parse_int(std::string_view s, const std::string& what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ValidationError(what + ": '" + std::string(s) + "' is not an integer");
  }
  return v;
}

namespace {

// ---- binary helpers ----

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
 public:
  Reader(std::string_view bytes, std::string source) : b_(bytes), source_(std::move(source)) {}

  std::uint64_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

  void need(std::size_t n, const std::string& what) const {
    if (remaining() < n) {
      throw FormatError(source_, what + " truncated: expected " + std::to_string(n) + " bytes, got " +
                                     std::to_string(remaining()),
                        pos_, std::nullopt);
    }
  }
  void magic(const char* m) {
    need(4, "magic");
    if (b_.substr(pos_, 4) != std::string_view(m, 4)) {
      throw FormatError(source_, std::string("bad magic, expected \"") + m + "\"", pos_, std::nullopt);
    }
    pos_ += 4;
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const std::string& what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  void version(std::uint32_t expected) {
    const std::uint64_t at = pos_;
    const std::uint32_t v = u32("version");
    if (v != expected) {
      throw FormatError(source_, "unsupported version " + std::to_string(v) + ", expected " + std::to_string(expected),
                        at, std::nullopt);
    }
  }
  std::vector<float> f32s(std::uint64_t n, const std::string& what) {
    if (n > remaining() / 4) {
      throw FormatError(source_, what + " truncated: expected " + std::to_string(n * 4) + " bytes, got " +
                                     std::to_string(remaining()),
                        pos_, std::nullopt);
    }
    std::vector<float> out(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint32_t v = 0;
      for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + k])) << (8 * k);
      out[i] = std::bit_cast<float>(v);
      pos_ += 4;
    }
    return out;
  }
  std::string_view bytes(std::size_t n, const std::string& what) {
    need(n, what);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void end() const {
    if (remaining() != 0) {
      throw FormatError(source_, std::to_string(remaining()) + " trailing bytes", pos_, std::nullopt);
    }
  }
  [[noreturn]] void fail(const std::string& what, std::uint64_t at) const {
    throw FormatError(source_, what, at, std::nullopt);
  }

 private:
  std::string_view b_;
  std::string source_;
  std::uint64_t pos_ = 0;
};

// ---- text helpers ----

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = s.find(sep, start);
    if (p == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, p - start));
    start = p + 1;
  }
}

class Lines {
 public:
  Lines(std::string_view text, std::string source) : source_(std::move(source)) {
    lines_ = split(text, '\n');
    if (!lines_.empty() && lines_.back().empty()) lines_.pop_back();
  }
  bool done() const { return next_ >= lines_.size(); }
  std::size_t line() const { return next_; }  // 1-based number of the last line taken
  std::string_view take() { return lines_[next_++]; }
  std::string_view peek() const { return lines_[next_]; }
  [[noreturn]] void fail(const std::string& what) const { throw FormatError(source_, what, std::nullopt, next_); }
  [[noreturn]] void fail_at(std::size_t line, const std::string& what) const {
    throw FormatError(source_, what, std::nullopt, line);
  }
  void header(std::string_view expected) {
    if (done()) fail_at(1, "empty file, expected header \"" + std::string(expected) + "\"");
    if (take() != expected) fail("bad header, expected \"" + std::string(expected) + "\"");
  }
  std::vector<std::string_view> fields(std::size_t n) {
    auto f = split(take(), '\t');
    if (f.size() != n) fail("expected " + std::to_string(n) + " tab-separated fields, got " + std::to_string(f.size()));
    return f;
  }
  double num(std::string_view s, const std::string& what) const {
    try {
      return parse_double(s, what);
    } catch (const ValidationError& e) {
      fail(e.what());
    }
  }
  std::int64_t integer(std::string_view s, const std::string& what) const {
    try {
      return parse_int(s, what);
    } catch (const ValidationError& e) {
      fail(e.what());
    }
  }
  const std::string& source() const { return source_; }

 private:
  std::vector<std::string_view> lines_;
  std::size_t next_ = 0;
  std::string source_;
};

void check_field(const std::string& s, const std::string& what) {
  if (s.find_first_of("\t\n\r") != std::string::npos) {
    throw ValidationError(what + " contains a tab or newline: '" + s + "'");
  }
}

std::string dash(const std::string& s) { return s.empty() ? "-" : s; }
std::string undash(std::string_view s) { return s == "-" ? std::string() : std::string(s); }

std::uint32_t dim32(int v, const std::string& what) {
  if (v <= 0) throw ValidationError(what + " must be positive");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

// ---------------------------------------------------------------- features

std::string encode_features(const FeatureMap& map) {
  std::string out;
  out.reserve(20 + map.data().size() * 4);
  out.append("CCF1", 4);
  put_u32(out, kFeatureVersion);
  put_u32(out, dim32(map.height(), "height"));
  put_u32(out, dim32(map.width(), "width"));
  put_u32(out, dim32(map.channels(), "channels"));
  for (float v : map.data()) put_f32(out, v);
  return out;
}

FeatureMap decode_features(std::string_view bytes, const std::string& source) {
  Reader r(bytes, source);
  r.magic("CCF1");
  r.version(kFeatureVersion);
  const std::uint64_t dims_at = r.pos();
  const std::uint32_t h = r.u32("height");
  const std::uint32_t w = r.u32("width");
  const std::uint32_t c = r.u32("channels");
  if (h == 0 || w == 0 || c == 0) r.fail("zero dimension in header", dims_at);
  if (h > (1u << 20) || w > (1u << 20) || c > (1u << 20)) r.fail("implausible dimension in header", dims_at);
  const std::uint64_t n = static_cast<std::uint64_t>(h) * w * c;
  const std::uint64_t expected = n * 4;
  if (r.remaining() != expected) {
    r.fail((r.remaining() < expected ? "payload truncated: expected " : "payload too long: expected ") +
               std::to_string(expected) + " bytes, got " + std::to_string(r.remaining()),
           r.pos());
  }
  auto data = r.f32s(n, "payload");
  return FeatureMap(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c), std::move(data));
}

void write_features(const fs::path& path, const FeatureMap& map) { write_file(path, encode_features(map)); }

FeatureMap read_features(const fs::path& path) {
  FeatureMap m = decode_features(read_file(path), path.string());
  m.set_image_id(path.stem().string());
  return m;
}

// ---------------------------------------------------------------- masks

std::string encode_mask(const Mask& mask) {
  std::string out;
  out.append("CCM1", 4);
  put_u32(out, kMaskVersion);
  put_u32(out, dim32(mask.height(), "mask height"));
  put_u32(out, dim32(mask.width(), "mask width"));
  const std::size_t cells = static_cast<std::size_t>(mask.height()) * mask.width();
  std::string packed((cells + 7) / 8, '\0');
  for (std::size_t i = 0; i < cells; ++i) {
    if (mask.bits()[i]) packed[i / 8] = static_cast<char>(packed[i / 8] | (1 << (i % 8)));
  }
  out += packed;
  return out;
}

Mask decode_mask(std::string_view bytes, const std::string& source) {
  Reader r(bytes, source);
  r.magic("CCM1");
  r.version(kMaskVersion);
  const std::uint64_t dims_at = r.pos();
  const std::uint32_t h = r.u32("height");
  const std::uint32_t w = r.u32("width");
  if (h == 0 || w == 0) r.fail("zero dimension in header", dims_at);
  if (h > (1u << 20) || w > (1u << 20)) r.fail("implausible dimension in header", dims_at);
  const std::uint64_t cells = static_cast<std::uint64_t>(h) * w;
  const std::uint64_t payload_at = r.pos();
  auto packed = r.bytes((cells + 7) / 8, "bit payload");
  r.end();
  std::vector<std::uint8_t> bits(cells);
  for (std::uint64_t i = 0; i < cells; ++i) bits[i] = (static_cast<unsigned char>(packed[i / 8]) >> (i % 8)) & 1;
  if (cells % 8 != 0) {
    const auto last = static_cast<unsigned char>(packed.back());
    if (last >> (cells % 8)) r.fail("non-zero padding bits", payload_at + packed.size() - 1);
  }
  return Mask(static_cast<int>(h), static_cast<int>(w), std::move(bits));
}

void write_mask(const fs::path& path, const Mask& mask) { write_file(path, encode_mask(mask)); }
Mask read_mask(const fs::path& path) { return decode_mask(read_file(path), path.string()); }

// ---------------------------------------------------------------- manifest

namespace {

constexpr std::string_view kManifestHeader = "CCMANIFEST 1";
constexpr std::string_view kManifestColumns =
    "image_id\tcategory\tazimuth_deg\tazimuth_bin\trotation\tbbox\tpatch_size\tfeature_path\tmask_path\t"
    "keypoints_path\tsphere_path";

std::string join_doubles(std::span<const double> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

}  // namespace

std::string encode_manifest(const std::vector<ImageRecord>& records) {
  std::string out;
  out += kManifestHeader;
  out += '\n';
  out += kManifestColumns;
  out += '\n';
  std::set<std::string> seen;
  for (const ImageRecord& r : records) {
    validate_record(r);
    if (!seen.insert(r.image_id).second) throw ValidationError("duplicate image_id " + r.image_id);
    for (const std::string* f : {&r.image_id, &r.category, &r.feature_path, &r.mask_path, &r.keypoints_path,
                                 &r.sphere_path}) {
      check_field(*f, "manifest field of " + r.image_id);
    }
    if (r.category.empty() || r.feature_path.empty() || r.mask_path.empty()) {
      throw ValidationError("record " + r.image_id + " needs category, feature_path and mask_path");
    }
    const std::array<double, 4> bbox{r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h};
    out += r.image_id + '\t' + r.category + '\t' + (r.azimuth_from_bin ? "-" : format_double(r.azimuth_deg)) + '\t' +
           std::to_string(r.azimuth_bin) + '\t' + (r.rotation ? join_doubles(*r.rotation) : "-") + '\t' +
           join_doubles(bbox) + '\t' + format_double(r.patch_size) + '\t' + r.feature_path + '\t' + r.mask_path +
           '\t' + dash(r.keypoints_path) + '\t' + dash(r.sphere_path) + '\n';
  }
  return out;
}

std::vector<ImageRecord> decode_manifest(std::string_view text, const std::string& source) {
  Lines in(text, source);
  in.header(kManifestHeader);
  if (in.done() || in.take() != kManifestColumns) in.fail("bad column line");
  std::vector<ImageRecord> out;
  std::map<std::string, std::size_t> first_line;
  while (!in.done()) {
    auto f = in.fields(11);
    const std::size_t line = in.line();
    ImageRecord r;
    r.image_id = std::string(f[0]);
    if (auto [it, fresh] = first_line.emplace(r.image_id, line); !fresh) {
      in.fail("duplicate image_id '" + r.image_id + "' on lines " + std::to_string(it->second) + " and " +
              std::to_string(line));
    }
    r.category = std::string(f[1]);
    r.azimuth_bin = static_cast<int>(in.integer(f[3], "azimuth_bin"));
    if (f[2] == "-") {
      r.azimuth_from_bin = true;
      r.azimuth_deg = (r.azimuth_bin + 0.5) * kAzimuthBinDeg;
    } else {
      r.azimuth_deg = in.num(f[2], "azimuth_deg");
    }
    if (f[4] != "-") {
      auto parts = split(f[4], ',');
      if (parts.size() != 9) in.fail("rotation needs 9 comma-separated values");
      Mat3 m;
      for (int i = 0; i < 9; ++i) m[i] = in.num(parts[i], "rotation");
      r.rotation = m;
    }
    auto bb = split(f[5], ',');
    if (bb.size() != 4) in.fail("bbox needs 4 comma-separated values x,y,w,h");
    r.bbox = {in.num(bb[0], "bbox"), in.num(bb[1], "bbox"), in.num(bb[2], "bbox"), in.num(bb[3], "bbox")};
    r.patch_size = in.num(f[6], "patch_size");
    r.feature_path = std::string(f[7]);
    r.mask_path = std::string(f[8]);
    r.keypoints_path = undash(f[9]);
    r.sphere_path = undash(f[10]);
    if (r.category.empty() || r.feature_path.empty() || r.mask_path.empty()) {
      in.fail("empty category, feature_path or mask_path");
    }
    try {
      validate_record(r);
    } catch (const ValidationError& e) {
      in.fail(e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<ImageRecord>& records) {
  write_file(path, encode_manifest(records));
}

fs::path Manifest::resolve(const std::string& relative) const {
  const fs::path p(relative);
  return p.is_absolute() ? p : base_dir / p;
}

const ImageRecord& Manifest::find(const std::string& image_id) const {
  for (const auto& r : records) {
    if (r.image_id == image_id) return r;
  }
  throw ValidationError("image '" + image_id + "' is not in the manifest");
}

Manifest read_manifest(const fs::path& path, bool check_files) {
  Manifest m;
  m.records = decode_manifest(read_file(path), path.string());
  m.base_dir = path.parent_path();
  if (check_files) {
    for (const auto& r : m.records) {
      for (const std::string* f : {&r.feature_path, &r.mask_path}) {
        if (!fs::exists(m.resolve(*f))) {
          throw ValidationError(path.string() + ": " + r.image_id + " references missing file " + *f);
        }
      }
    }
  }
  return m;
}

ImageStore load_store(const Manifest& manifest) {
  ImageStore store;
  for (const auto& r : manifest.records) {
    FeatureMap f = read_features(manifest.resolve(r.feature_path));
    f.set_image_id(r.image_id);
    store.insert(r.image_id, std::move(f), read_mask(manifest.resolve(r.mask_path)));
  }
  return store;
}

// ---------------------------------------------------------------- pseudo-labels

std::size_t PseudoLabelFile::match_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.set.size();
  return n;
}

PseudoLabelFile to_label_file(const LabelSet& labels, const ImageStore& store) {
  PseudoLabelFile out;
  out.provenance = labels.provenance;
  for (std::size_t i = 0; i < labels.sets.size(); ++i) {
    const MatchSet& s = labels.sets[i];
    const FeatureMap& a = store.features(s.src_image);
    const FeatureMap& b = store.features(s.tgt_image);
    out.blocks.push_back({s, a.height(), a.width(), b.height(), b.width(),
                          i < labels.chain_specs.size() ? labels.chain_specs[i] : std::string()});
  }
  return out;
}

std::vector<MatchSet> match_sets(const PseudoLabelFile& file) {
  std::vector<MatchSet> out;
  for (const auto& b : file.blocks) out.push_back(b.set);
  return out;
}

namespace {
constexpr std::string_view kLabelHeader = "CCPL 1";

bool in_grid(const GridPoint& p, int h, int w) { return p.row >= 0 && p.row < h && p.col >= 0 && p.col < w; }
}  // namespace

std::string encode_labels(const PseudoLabelFile& file) {
  if (file.provenance.empty()) throw ValidationError("pseudo-label file needs a provenance line");
  check_field(file.provenance, "provenance");
  std::string out;
  out += kLabelHeader;
  out += "\nprovenance\t" + file.provenance + '\n';
  for (const auto& b : file.blocks) {
    check_field(b.set.src_image, "image id");
    check_field(b.set.tgt_image, "image id");
    check_field(b.chain, "chain spec");
    out += "pair\t" + b.set.src_image + '\t' + b.set.tgt_image + '\t' + std::to_string(b.src_height) + '\t' +
           std::to_string(b.src_width) + '\t' + std::to_string(b.tgt_height) + '\t' + std::to_string(b.tgt_width) +
           '\t' + std::to_string(b.set.size()) + '\t' + dash(b.chain) + '\n';
    for (const Match& m : b.set.matches) {
      if (!in_grid(m.src, b.src_height, b.src_width) || !in_grid(m.tgt, b.tgt_height, b.tgt_width)) {
        throw ValidationError("match outside the declared grid in " + b.set.src_image + ">" + b.set.tgt_image);
      }
      out += format_double(m.src.row) + '\t' + format_double(m.src.col) + '\t' + format_double(m.tgt.row) + '\t' +
             format_double(m.tgt.col) + '\t' + format_double(m.score) + '\n';
    }
  }
  return out;
}

PseudoLabelFile decode_labels(std::string_view text, const std::string& source) {
  Lines in(text, source);
  in.header(kLabelHeader);
  if (in.done()) in.fail_at(2, "missing provenance line");
  PseudoLabelFile out;
  {
    auto f = in.fields(2);
    if (f[0] != "provenance" || f[1].empty()) in.fail("expected 'provenance<TAB>text'");
    out.provenance = std::string(f[1]);
  }
  while (!in.done()) {
    auto f = in.fields(9);
    if (f[0] != "pair") in.fail("expected a 'pair' block header");
    PseudoLabelBlock b;
    b.set.src_image = std::string(f[1]);
    b.set.tgt_image = std::string(f[2]);
    b.src_height = static_cast<int>(in.integer(f[3], "src height"));
    b.src_width = static_cast<int>(in.integer(f[4], "src width"));
    b.tgt_height = static_cast<int>(in.integer(f[5], "tgt height"));
    b.tgt_width = static_cast<int>(in.integer(f[6], "tgt width"));
    if (b.src_height <= 0 || b.src_width <= 0 || b.tgt_height <= 0 || b.tgt_width <= 0) in.fail("non-positive grid");
    const std::int64_t n = in.integer(f[7], "record count");
    if (n < 0) in.fail("negative record count");
    b.chain = undash(f[8]);
    for (std::int64_t k = 0; k < n; ++k) {
      if (in.done()) in.fail("block ends after " + std::to_string(k) + " of " + std::to_string(n) + " records");
      auto r = in.fields(5);
      Match m{{in.num(r[0], "src_row"), in.num(r[1], "src_col")},
              {in.num(r[2], "tgt_row"), in.num(r[3], "tgt_col")},
              in.num(r[4], "score")};
      if (!in_grid(m.src, b.src_height, b.src_width)) in.fail("source point outside the declared grid");
      if (!in_grid(m.tgt, b.tgt_height, b.tgt_width)) in.fail("target point outside the declared grid");
      b.set.matches.push_back(m);
    }
    out.blocks.push_back(std::move(b));
  }
  return out;
}

void write_labels(const fs::path& path, const PseudoLabelFile& file) { write_file(path, encode_labels(file)); }
PseudoLabelFile read_labels(const fs::path& path) { return decode_labels(read_file(path), path.string()); }

// ---------------------------------------------------------------- checkpoints

std::string encode_checkpoint(const Checkpoint& c) {
  if (c.params.size() != c.shape.parameter_count()) throw ValidationError("checkpoint parameter count mismatch");
  std::string out;
  out.append("CCK1", 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, dim32(c.shape.in_channels, "in_channels"));
  put_u32(out, dim32(c.shape.hidden, "hidden"));
  put_u32(out, dim32(c.shape.blocks, "blocks"));
  put_u32(out, static_cast<std::uint32_t>(std::max(c.shape.out_channels, 0)));
  put_u64(out, static_cast<std::uint64_t>(c.step));
  put_u64(out, c.config_hash);
  put_u64(out, c.params.size());
  for (float v : c.params) put_f32(out, v);
  put_u32(out, c.optimizer ? 1 : 0);
  if (c.optimizer) {
    if (c.optimizer->m.size() != c.params.size() || c.optimizer->v.size() != c.params.size()) {
      throw ValidationError("optimizer state size differs from parameters");
    }
    put_u64(out, static_cast<std::uint64_t>(c.optimizer->step));
    for (float v : c.optimizer->m) put_f32(out, v);
    for (float v : c.optimizer->v) put_f32(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source) {
  Reader r(bytes, source);
  r.magic("CCK1");
  r.version(kCheckpointVersion);
  Checkpoint c;
  const std::uint64_t shape_at = r.pos();
  c.shape.in_channels = static_cast<int>(r.u32("in_channels"));
  c.shape.hidden = static_cast<int>(r.u32("hidden"));
  c.shape.blocks = static_cast<int>(r.u32("blocks"));
  c.shape.out_channels = static_cast<int>(r.u32("out_channels"));
  if (c.shape.in_channels <= 0 || c.shape.hidden <= 0 || c.shape.blocks <= 0 || c.shape.out_channels < 0) {
    r.fail("invalid adapter shape", shape_at);
  }
  c.step = static_cast<std::int64_t>(r.u64("step"));
  c.config_hash = r.u64("config hash");
  const std::uint64_t n_at = r.pos();
  const std::uint64_t n = r.u64("parameter count");
  if (n != c.shape.parameter_count()) {
    r.fail("parameter count " + std::to_string(n) + " does not match shape (" +
               std::to_string(c.shape.parameter_count()) + ")",
           n_at);
  }
  c.params = r.f32s(n, "parameters");
  const std::uint64_t flag_at = r.pos();
  const std::uint32_t has_opt = r.u32("optimizer flag");
  if (has_opt > 1) r.fail("optimizer flag must be 0 or 1", flag_at);
  if (has_opt) {
    AdamWState<float> s;
    s.step = static_cast<std::int64_t>(r.u64("optimizer step"));
    s.m = r.f32s(n, "first moments");
    s.v = r.f32s(n, "second moments");
    c.optimizer = std::move(s);
  }
  r.end();
  return c;
}

void write_checkpoint(const fs::path& path, const Checkpoint& c) { write_file(path, encode_checkpoint(c)); }
Checkpoint read_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path), path.string()); }

// ---------------------------------------------------------------- sphere mappers

std::string encode_mapper(const MapperFile& f) {
  const auto& sizes = f.mapper.layer_sizes();
  if (sizes.size() < 2 || sizes.back() != 3) throw ValidationError("mapper must end in 3 outputs");
  if (f.channel_offset < 0) throw ValidationError("mapper channel offset must be non-negative");
  std::string out;
  out.append("CCS1", 4);
  put_u32(out, kMapperVersion);
  put_u32(out, static_cast<std::uint32_t>(f.channel_offset));
  put_u32(out, static_cast<std::uint32_t>(sizes.size()));
  for (int s : sizes) put_u32(out, dim32(s, "layer size"));
  put_u64(out, f.mapper.parameter_count());
  for (float v : f.mapper.parameters()) put_f32(out, v);
  return out;
}

MapperFile decode_mapper(std::string_view bytes, const std::string& source) {
  Reader r(bytes, source);
  r.magic("CCS1");
  r.version(kMapperVersion);
  MapperFile f;
  f.channel_offset = static_cast<int>(r.u32("channel offset"));
  const std::uint64_t layers_at = r.pos();
  const std::uint32_t layers = r.u32("layer count");
  if (layers < 2 || layers > 64) r.fail("layer count must be in [2, 64]", layers_at);
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < layers; ++i) {
    const std::uint64_t at = r.pos();
    const std::uint32_t s = r.u32("layer size");
    if (s == 0 || s > (1u << 20)) r.fail("invalid layer size", at);
    sizes.push_back(static_cast<int>(s));
  }
  if (sizes.back() != 3) r.fail("last layer must have 3 outputs", layers_at);
  f.mapper = SphereMapper<float>(sizes, 0);
  const std::uint64_t n_at = r.pos();
  const std::uint64_t n = r.u64("parameter count");
  if (n != f.mapper.parameter_count()) r.fail("parameter count does not match layer sizes", n_at);
  f.mapper.parameters() = r.f32s(n, "parameters");
  r.end();
  return f;
}

void write_mapper(const fs::path& path, const MapperFile& f) { write_file(path, encode_mapper(f)); }
MapperFile read_mapper(const fs::path& path) { return decode_mapper(read_file(path), path.string()); }

// ---------------------------------------------------------------- keypoints, pairs, predictions

std::string encode_keypoints(const std::vector<Keypoint>& kps) {
  std::string out = "CCKP 1\n";
  std::set<std::string> seen;
  for (const auto& k : kps) {
    check_field(k.name, "keypoint name");
    if (k.name.empty() || !seen.insert(k.name).second) throw ValidationError("keypoint names must be unique and non-empty");
    out += k.name + '\t' + format_double(k.point.x) + '\t' + format_double(k.point.y) + '\n';
  }
  return out;
}

std::vector<Keypoint> decode_keypoints(std::string_view text, const std::string& source) {
  Lines in(text, source);
  in.header("CCKP 1");
  std::vector<Keypoint> out;
  std::set<std::string> seen;
  while (!in.done()) {
    auto f = in.fields(3);
    if (f[0].empty() || !seen.insert(std::string(f[0])).second) in.fail("empty or duplicate keypoint name");
    out.push_back({std::string(f[0]), {in.num(f[1], "x"), in.num(f[2], "y")}});
  }
  return out;
}

void write_keypoints(const fs::path& path, const std::vector<Keypoint>& kps) { write_file(path, encode_keypoints(kps)); }
std::vector<Keypoint> read_keypoints(const fs::path& path) { return decode_keypoints(read_file(path), path.string()); }

std::string encode_pairs(const ImagePairs& pairs) {
  std::string out = "CCEP 1\n";
  for (const auto& [a, b] : pairs) {
    check_field(a, "image id");
    check_field(b, "image id");
    out += a + '\t' + b + '\n';
  }
  return out;
}

ImagePairs decode_pairs(std::string_view text, const std::string& source) {
  Lines in(text, source);
  in.header("CCEP 1");
  ImagePairs out;
  while (!in.done()) {
    auto f = in.fields(2);
    out.emplace_back(std::string(f[0]), std::string(f[1]));
  }
  return out;
}

std::vector<EvalPair> build_eval_pairs(const Manifest& manifest, const std::optional<ImagePairs>& pairs) {
  std::map<std::string, std::vector<Keypoint>> cache;
  auto keypoints = [&](const ImageRecord& r) -> const std::vector<Keypoint>& {
    auto it = cache.find(r.image_id);
    if (it != cache.end()) return it->second;
    if (r.keypoints_path.empty()) throw ValidationError("image " + r.image_id + " has no keypoints file");
    return cache.emplace(r.image_id, read_keypoints(manifest.resolve(r.keypoints_path))).first->second;
  };
  ImagePairs list;
  if (pairs) {
    list = *pairs;
  } else {
    for (const auto& a : manifest.records) {
      for (const auto& b : manifest.records) {
        if (&a != &b && a.category == b.category) list.emplace_back(a.image_id, b.image_id);
      }
    }
  }
  std::vector<EvalPair> out;
  for (const auto& [sa, sb] : list) {
    const ImageRecord& a = manifest.find(sa);
    const ImageRecord& b = manifest.find(sb);
    EvalPair p{a, b, {}, a.category};
    const auto& kb = keypoints(b);
    for (const Keypoint& k : keypoints(a)) {
      for (const Keypoint& t : kb) {
        if (t.name == k.name) p.gt.push_back({k.point, t.point});
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string encode_predictions(const std::vector<PredictionBlock>& blocks) {
  std::string out = "CCPR 1\n";
  for (const auto& b : blocks) {
    check_field(b.src_image, "image id");
    check_field(b.tgt_image, "image id");
    out += "pair\t" + b.src_image + '\t' + b.tgt_image + '\t' + std::to_string(b.points.size()) + '\n';
    for (const auto& p : b.points) out += format_double(p.x) + '\t' + format_double(p.y) + '\n';
  }
  return out;
}

std::vector<PredictionBlock> decode_predictions(std::string_view text, const std::string& source) {
  Lines in(text, source);
  in.header("CCPR 1");
  std::vector<PredictionBlock> out;
  while (!in.done()) {
    auto f = in.fields(4);
    if (f[0] != "pair") in.fail("expected a 'pair' block header");
    PredictionBlock b{std::string(f[1]), std::string(f[2]), {}};
    const std::int64_t n = in.integer(f[3], "point count");
    if (n < 0) in.fail("negative point count");
    for (std::int64_t k = 0; k < n; ++k) {
      if (in.done()) in.fail("block ends after " + std::to_string(k) + " of " + std::to_string(n) + " points");
      auto r = in.fields(2);
      b.points.push_back({in.num(r[0], "x"), in.num(r[1], "y")});
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<std::vector<PixelPoint>> align_predictions(const std::vector<PredictionBlock>& blocks,
                                                       const std::vector<EvalPair>& pairs) {
  std::map<std::pair<std::string, std::string>, const PredictionBlock*> index;
  for (const auto& b : blocks) {
    if (!index.emplace(std::make_pair(b.src_image, b.tgt_image), &b).second) {
      throw ValidationError("predictions list pair " + b.src_image + ">" + b.tgt_image + " twice");
    }
  }
  std::vector<std::vector<PixelPoint>> out;
  for (const auto& p : pairs) {
    auto it = index.find({p.src_record.image_id, p.tgt_record.image_id});
    if (it == index.end()) {
      throw ValidationError("missing predictions for pair " + p.src_record.image_id + ">" + p.tgt_record.image_id);
    }
    out.push_back(it->second->points);
  }
  return out;
}

// ---------------------------------------------------------------- synthetic export

void write_synthetic(const SynthDataset& ds, const fs::path& dir) {
  std::vector<ImageRecord> train, test;
  for (const SynthScene& s : ds.scenes) {
    const ImageRecord& r = s.record;
    write_features(dir / r.feature_path, s.features);
    write_mask(dir / r.mask_path, s.mask);
    write_features(dir / r.sphere_path, s.sphere);
    std::vector<Keypoint> kps;
    for (std::size_t j = 0; j < s.part_center.size(); ++j) {
      if (s.part_center[j]) kps.push_back({"part" + std::to_string(j), grid_to_pixel(*s.part_center[j], r.patch_size)});
    }
    write_keypoints(dir / r.keypoints_path, kps);
    (s.test ? test : train).push_back(r);
  }
  write_manifest(dir / "train.tsv", train);
  write_manifest(dir / "test.tsv", test);
  ImagePairs pairs;
  for (const auto& p : ds.eval_pairs(true)) pairs.emplace_back(p.src_record.image_id, p.tgt_record.image_id);
  write_file(dir / "test_pairs.txt", encode_pairs(pairs));
}

// ---------------------------------------------------------------- results

namespace {

std::string opt_double(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

std::string ablation_csv(const std::vector<AblationResult>& results) {
  std::string out = "row,seed,pck_per_img,pck_per_kpt,label_precision,label_recall,label_count\n";
  for (const auto& r : results) {
    out += r.row + ',' + std::to_string(r.seed) + ',' + format_double(r.pck_per_img) + ',' +
           format_double(r.pck_per_kpt) + ',' + opt_double(r.label_precision) + ',' + format_double(r.label_recall) +
           ',' + std::to_string(r.label_count) + '\n';
  }
  return out;
}

std::string ablation_summary_csv(const std::vector<AblationResult>& results) {
  std::string out = "row,pseudo,cyc_cons,relaxed_cc,chaining,sph_rej,seeds,mean_pck_per_img,mean_pck_per_kpt\n";
  for (const AblationRow& row : ablation_rows()) {
    double img = 0, kpt = 0;
    int n = 0;
    for (const auto& r : results) {
      if (r.row != row.name) continue;
      img += r.pck_per_img;
      kpt += r.pck_per_kpt;
      ++n;
    }
    if (n == 0) continue;
    out += row.name + ',' + (row.pseudo ? "1" : "0") + ',' + (row.cyc_cons ? "1" : "0") + ',' +
           (row.relaxed ? "1" : "0") + ',' + (row.chaining ? "1" : "0") + ',' + (row.sphere ? "1" : "0") + ',' +
           std::to_string(n) + ',' + format_double(img / n) + ',' + format_double(kpt / n) + '\n';
  }
  return out;
}

std::string pck_json(const PckResult& r) {
  json j;
  j["alpha"] = r.alpha;
  j["mode"] = to_string(r.mode);
  j["value"] = r.value;
  j["correct"] = r.correct;
  j["keypoints"] = r.keypoints;
  j["pairs"] = r.pairs;
  j["macro_avg"] = r.macro_avg;
  j["micro_avg"] = r.micro_avg;
  json cats = json::object();
  for (const auto& [k, v] : r.per_category) cats[k] = v;
  j["per_category"] = cats;
  return j.dump();
}

std::string binned_csv(const std::vector<BinnedPck>& bins, double alpha, PckMode mode) {
  std::string out = "bin,alpha,mode,value,pairs\n";
  for (const auto& b : bins) {
    out += '"' + b.bin.label() + "\"," + format_double(alpha) + ',' + to_string(mode) + ',' +
           (b.result ? format_double(b.result->value) : std::string()) + ',' +
           std::to_string(b.result ? b.result->pairs : 0) + '\n';
  }
  return out;
}

std::string binned_jsonl(const std::vector<BinnedPck>& bins, double alpha, PckMode mode) {
  std::string out;
  for (const auto& b : bins) {
    json j;
    j["bin"] = b.bin.label();
    j["alpha"] = alpha;
    j["mode"] = to_string(mode);
    j["value"] = b.result ? json(b.result->value) : json(nullptr);
    j["pairs"] = b.result ? b.result->pairs : 0;
    out += j.dump() + '\n';
  }
  return out;
}

std::string provenance_json(const Provenance& p) {
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(p.config_hash));
  json j;
  j["command"] = p.command;
  j["version"] = kVersion;
  j["config_hash"] = hash;
  j["seed"] = p.seed;
  j["threads"] = p.threads;
  j["config"] = p.config_text;
  j["inputs"] = p.inputs;
  j["outputs"] = p.outputs;
  return j.dump(2) + '\n';
}

std::string error_json(const std::string& command, const std::string& kind, const std::string& message,
                       int exit_code) {
  json j;
  j["error"] = kind;
  j["command"] = command;
  j["message"] = message;
  j["exit_code"] = exit_code;
  return j.dump();
}

}  // namespace pseudocorr
