#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "pseudocorr/io.hpp"

using namespace pseudocorr;
namespace fs = std::filesystem;

namespace {

ImageRecord record(const std::string& id, const std::string& cat) {
  ImageRecord r;
  r.image_id = id;
  r.category = cat;
  r.azimuth_deg = 100.5;
  r.azimuth_bin = azimuth_bin_of(100.5);
  r.bbox = {1, 2, 30, 40};
  r.feature_path = "f/" + id + ".ccf";
  r.mask_path = "m/" + id + ".ccm";
  return r;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("pcorr_io_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

template <typename Fn>
FormatError format_error(Fn fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e;
  }
  ADD_FAILURE() << "no FormatError";
  return FormatError("", "", std::nullopt, std::nullopt);
}

}  // namespace

TEST(Numbers, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3, -2.5e-300, 1e21, 123456789.125, -0.0}) {
    EXPECT_EQ(parse_double(format_double(v), "v"), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_THROW(parse_double("1.5x", "v"), ValidationError);
  EXPECT_TRUE(std::isnan(parse_double("nan", "v")));
  EXPECT_THROW(parse_int("7.0", "n"), ValidationError);
}

TEST(FeatureFile, RoundTripBitIdentical) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> nd(0, 1);
  FeatureMap m(5, 3, 7);
  for (auto& x : m.data()) x = nd(rng);
  m.data()[4] = -0.0f;
  m.data()[5] = std::numeric_limits<float>::denorm_min();
  const std::string bytes = encode_features(m);
  EXPECT_EQ(bytes.size(), 20u + 4u * 5 * 3 * 7);
  const FeatureMap back = decode_features(bytes);
  EXPECT_EQ(encode_features(back), bytes);
  EXPECT_EQ(back.height(), 5);
  EXPECT_EQ(back.width(), 3);
  EXPECT_EQ(back.channels(), 7);
}

TEST(FeatureFile, TruncatedPayloadNamesLengths) {
  const std::string bytes = encode_features(FeatureMap(2, 2, 2));
  const FormatError e = format_error([&] { decode_features(bytes.substr(0, bytes.size() - 3), "x.ccf"); });
  EXPECT_EQ(e.offset(), 20u);
  EXPECT_NE(std::string(e.what()).find("expected 32"), std::string::npos) << e.what();
  EXPECT_NE(std::string(e.what()).find("29"), std::string::npos) << e.what();
  EXPECT_EQ(e.source(), "x.ccf");
}

TEST(FeatureFile, HeaderErrors) {
  std::string bytes = encode_features(FeatureMap(1, 1, 1));
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(format_error([&] { decode_features(bad); }).offset(), 0u);
  bad = bytes;
  bad[4] = 2;
  EXPECT_EQ(format_error([&] { decode_features(bad); }).offset(), 4u);
  EXPECT_THROW(decode_features(bytes.substr(0, 10)), FormatError);
  EXPECT_THROW(decode_features(bytes + "z"), FormatError);
}

TEST(MaskFile, RoundTripAndPadding) {
  Mask m(3, 5);
  m.set(0, 0);
  m.set(1, 2);
  m.set(2, 4);
  const std::string bytes = encode_mask(m);
  EXPECT_EQ(bytes.size(), 16u + 2u);
  EXPECT_EQ(decode_mask(bytes).bits(), m.bits());
  std::string bad = bytes;
  bad.back() = static_cast<char>(0xff);
  EXPECT_THROW(decode_mask(bad), FormatError);
}

TEST(Manifest, RoundTrip) {
  std::vector<ImageRecord> recs{record("a", "car"), record("b", "car"), record("c", "dog")};
  recs[1].azimuth_from_bin = true;
  recs[1].azimuth_bin = 3;
  recs[1].azimuth_deg = 157.5;
  recs[2].rotation = Mat3{1, 0, 0, 0, 1, 0, 0, 0, 1};
  recs[2].keypoints_path = "k/c.txt";
  recs[2].sphere_path = "s/c.ccf";
  const std::string text = encode_manifest(recs);
  EXPECT_EQ(decode_manifest(text), recs);
  EXPECT_EQ(encode_manifest(decode_manifest(text)), text);
}

TEST(Manifest, DuplicateIdNamesBothLines) {
  std::string text = encode_manifest({record("a", "car"), record("b", "car")});
  const std::size_t first = text.find("\na\t") + 1;
  text += text.substr(first, text.find('\n', first) + 1 - first);
  const FormatError e = format_error([&] { decode_manifest(text, "m.tsv"); });
  const std::string what = e.what();
  EXPECT_NE(what.find("lines 3 and 5"), std::string::npos) << what;
  EXPECT_EQ(e.line(), 5u);
}

TEST(Manifest, MissingFilesAndResolve) {
  TempDir dir;
  write_manifest(dir.path() / "manifest.tsv", {record("a", "car")});
  EXPECT_THROW(read_manifest(dir.path() / "manifest.tsv"), ValidationError);
  write_features(dir.path() / "f/a.ccf", FeatureMap(2, 2, 1));
  write_mask(dir.path() / "m/a.ccm", Mask(2, 2, true));
  const Manifest m = read_manifest(dir.path() / "manifest.tsv");
  EXPECT_EQ(m.resolve("f/a.ccf"), dir.path() / "f/a.ccf");
  EXPECT_EQ(load_store(m).size(), 1u);
  EXPECT_THROW(m.find("zz"), ValidationError);
}

namespace {

PseudoLabelFile three_records() {
  PseudoLabelFile f;
  f.provenance = "pairs filter=relaxed(1.5) seed=3";
  PseudoLabelBlock b;
  b.set = {"a", "b", {{{0, 1}, {2, 3}, 0.75}, {{4, 4}, {0, 0}, -0.125}, {{1, 0}, {1, 1}, 1}}};
  b.src_height = b.src_width = b.tgt_height = b.tgt_width = 5;
  b.chain = "a>c>b";
  f.blocks.push_back(b);
  return f;
}

}  // namespace

TEST(LabelFile, ThreeRecordRoundTripByteIdentical) {
  const PseudoLabelFile f = three_records();
  const std::string text = encode_labels(f);
  const PseudoLabelFile back = decode_labels(text);
  EXPECT_EQ(back, f);
  EXPECT_EQ(encode_labels(back), text);
  EXPECT_EQ(back.match_count(), 3u);
}

TEST(LabelFile, EmptyBodyLoadsAsEmpty) {
  PseudoLabelFile f;
  f.provenance = "empty";
  const PseudoLabelFile back = decode_labels(encode_labels(f));
  EXPECT_TRUE(back.blocks.empty());
  EXPECT_EQ(back.match_count(), 0u);
  EXPECT_TRUE(match_sets(back).empty());
}

TEST(LabelFile, ErrorsCarryLines) {
  const std::string text = encode_labels(three_records());
  // drop the last record: the block promises 3
  const std::string cut = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
  const FormatError e = format_error([&] { decode_labels(cut, "l.txt"); });
  EXPECT_TRUE(e.line().has_value());
  EXPECT_FALSE(e.offset().has_value());
  EXPECT_NE(std::string(e.what()).find("2 of 3"), std::string::npos) << e.what();

  PseudoLabelFile out_of_grid = three_records();
  out_of_grid.blocks[0].set.matches[0].tgt = {9, 9};
  EXPECT_THROW(encode_labels(out_of_grid), ValidationError);
}

TEST(CheckpointFile, RoundTripWithAndWithoutOptimizer) {
  Checkpoint c;
  c.shape = {4, 3, 2, 2};
  c.step = 17;
  c.config_hash = 0xdeadbeefcafef00dULL;
  c.params.resize(c.shape.parameter_count());
  for (std::size_t i = 0; i < c.params.size(); ++i) c.params[i] = 0.01f * static_cast<float>(i) - 0.3f;
  EXPECT_EQ(decode_checkpoint(encode_checkpoint(c)), c);
  AdamWState<float> opt;
  opt.reset(c.params.size());
  opt.m[2] = 0.5f;
  opt.v[3] = 0.25f;
  opt.step = 17;
  c.optimizer = opt;
  const std::string bytes = encode_checkpoint(c);
  EXPECT_EQ(decode_checkpoint(bytes), c);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), FormatError);
  c.params.pop_back();
  EXPECT_THROW(encode_checkpoint(c), ValidationError);
}

TEST(MapperFile, RoundTrip) {
  MapperFile f{SphereMapper<float>({6, 5, 3}, 2), 4};
  const std::string bytes = encode_mapper(f);
  const MapperFile back = decode_mapper(bytes);
  EXPECT_EQ(back.channel_offset, 4);
  EXPECT_EQ(back.mapper.layer_sizes(), f.mapper.layer_sizes());
  EXPECT_EQ(back.mapper.parameters(), f.mapper.parameters());
  EXPECT_EQ(encode_mapper(back), bytes);
}

TEST(KeypointFile, RoundTripAndDuplicates) {
  const std::vector<Keypoint> kps{{"nose", {10.5, 3}}, {"tail", {0, 99.25}}};
  EXPECT_EQ(decode_keypoints(encode_keypoints(kps)), kps);
  const std::vector<Keypoint> dup{{"nose", {1, 1}}, {"nose", {2, 2}}};
  EXPECT_THROW(decode_keypoints(encode_keypoints(dup)), ValidationError);
}

TEST(PairsAndPredictions, RoundTrip) {
  const ImagePairs pairs{{"a", "b"}, {"b", "a"}};
  EXPECT_EQ(decode_pairs(encode_pairs(pairs)), pairs);
  const std::vector<PredictionBlock> blocks{{"a", "b", {{1, 2}, {3.5, 4}}}, {"b", "a", {}}};
  const auto back = decode_predictions(encode_predictions(blocks));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].points, blocks[0].points);
  EXPECT_TRUE(back[1].points.empty());
}

TEST(Synthetic, WrittenTreeLoads) {
  TempDir dir;
  SynthConfig sc;
  sc.categories = 2;
  sc.instances = 4;
  sc.test_instances = 1;
  const SynthDataset ds = generate(sc);
  write_synthetic(ds, dir.path());
  const Manifest train = read_manifest(dir.path() / "train.tsv");
  const Manifest test = read_manifest(dir.path() / "test.tsv");
  EXPECT_EQ(train.records.size(), 6u);
  EXPECT_EQ(test.records.size(), 2u);
  const ImageStore store = load_store(train);
  const SynthScene& s = ds.scene(train.records[0].image_id);
  EXPECT_EQ(encode_features(store.features(s.record.image_id)), encode_features(s.features));
  const auto pairs = decode_pairs(read_file(dir.path() / "test_pairs.txt"));
  const auto eval = build_eval_pairs(test, pairs);
  EXPECT_EQ(eval.size(), pairs.size());
}

TEST(Json, ErrorRecord) {
  const std::string j = error_json("eval", "validation", "missing predictions: \"p.txt\"", 1);
  EXPECT_NE(j.find("\"exit_code\":1"), std::string::npos) << j;
  EXPECT_NE(j.find("\\\"p.txt\\\""), std::string::npos) << j;
}
