#include "pseudocorr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "pseudocorr/chaining.hpp"

namespace pseudocorr {

PixelPoint grid_to_pixel(const GridPoint& p, double patch_size) {
  return {(p.col + 0.5) * patch_size, (p.row + 0.5) * patch_size};
}

GridPoint pixel_to_grid(const PixelPoint& p, double patch_size) {
  if (!(patch_size > 0)) throw ValidationError("patch_size must be positive");
  return {std::floor(p.y / patch_size), std::floor(p.x / patch_size)};
}

std::string to_string(PckMode mode) { return mode == PckMode::kPerKeypoint ? "per_kpt" : "per_img"; }

PckMode parse_pck_mode(const std::string& s) {
  if (s == "per_kpt") return PckMode::kPerKeypoint;
  if (s == "per_img") return PckMode::kPerImage;
  throw ValidationError("unknown PCK mode '" + s + "' (expected per_kpt or per_img)");
}

namespace {

struct Tally {
  std::size_t correct = 0;
  std::size_t keypoints = 0;
  double rate_sum = 0.0;
  std::size_t pairs = 0;

  double value(PckMode mode) const {
    if (mode == PckMode::kPerKeypoint) return keypoints == 0 ? 0.0 : 100.0 * correct / keypoints;
    return pairs == 0 ? 0.0 : rate_sum / pairs;
  }
};

}  // namespace

PckResult pck(const std::vector<std::vector<PixelPoint>>& predictions, const std::vector<EvalPair>& pairs, double alpha,
              PckMode mode) {
  if (!(alpha > 0)) throw ValidationError("alpha must be positive");
  if (predictions.size() != pairs.size()) {
    throw ValidationError("predictions cover " + std::to_string(predictions.size()) + " pairs, expected " +
                          std::to_string(pairs.size()));
  }
  PckResult out;
  out.alpha = alpha;
  out.mode = mode;
  out.pair_rates.assign(pairs.size(), std::numeric_limits<double>::quiet_NaN());
  Tally all;
  std::map<std::string, Tally> by_cat;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const EvalPair& pair = pairs[i];
    if (predictions[i].size() != pair.gt.size()) {
      throw ValidationError("pair " + std::to_string(i) + ": " + std::to_string(predictions[i].size()) +
                            " predictions for " + std::to_string(pair.gt.size()) + " keypoints");
    }
    if (pair.gt.empty()) continue;
    const double radius = alpha * std::max(pair.tgt_record.bbox.w, pair.tgt_record.bbox.h);
    std::size_t ok = 0;
    for (std::size_t k = 0; k < pair.gt.size(); ++k) {
      const double d = std::hypot(predictions[i][k].x - pair.gt[k].tgt.x, predictions[i][k].y - pair.gt[k].tgt.y);
      if (d <= radius) ++ok;
    }
    const double rate = 100.0 * static_cast<double>(ok) / static_cast<double>(pair.gt.size());
    out.pair_rates[i] = rate;
    for (Tally* t : {&all, &by_cat[pair.category]}) {
      t->correct += ok;
      t->keypoints += pair.gt.size();
      t->rate_sum += rate;
      ++t->pairs;
    }
  }
  out.value = all.value(mode);
  out.correct = all.correct;
  out.keypoints = all.keypoints;
  out.pairs = all.pairs;
  out.micro_avg = out.value;
  double macro = 0.0;
  for (const auto& [cat, t] : by_cat) {
    out.per_category[cat] = t.value(mode);
    macro += out.per_category[cat];
  }
  out.macro_avg = by_cat.empty() ? 0.0 : macro / static_cast<double>(by_cat.size());
  return out;
}

std::string ViewBin::label() const {
  std::ostringstream os;
  os << (lo_closed ? '[' : '(') << lo << ',' << hi << (hi_closed ? ']' : ')');
  return os.str();
}

bool ViewBin::contains(double d) const {
  const bool above = lo_closed ? d >= lo : d > lo;
  const bool below = hi_closed ? d <= hi : d < hi;
  return above && below;
}

std::vector<ViewBin> table_view_bins() {
  return {{0, 45, true, false}, {0, 90, false, false}, {45, 135, false, false}, {90, 180, false, false},
          {135, 225, false, false}};
}

std::vector<BinnedPck> viewpoint_binned_pck(const std::vector<std::vector<PixelPoint>>& predictions,
                                            const std::vector<EvalPair>& pairs, double alpha, PckMode mode,
                                            const std::vector<ViewBin>& bins) {
  if (predictions.size() != pairs.size()) throw ValidationError("predictions and pairs differ in length");
  std::vector<BinnedPck> out;
  for (const ViewBin& bin : bins) {
    std::vector<std::vector<PixelPoint>> bin_pred;
    std::vector<EvalPair> bin_pairs;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const double delta = d_circ(pairs[i].src_record.azimuth_deg, pairs[i].tgt_record.azimuth_deg);
      if (bin.contains(delta)) {
        bin_pred.push_back(predictions[i]);
        bin_pairs.push_back(pairs[i]);
      }
    }
    BinnedPck b{bin, std::nullopt};
    if (!bin_pairs.empty()) b.result = pck(bin_pred, bin_pairs, alpha, mode);
    out.push_back(std::move(b));
  }
  return out;
}

LabelQuality& LabelQuality::operator+=(const LabelQuality& o) {
  emitted += o.emitted;
  correct += o.correct;
  matchable += o.matchable;
  recalled += o.recalled;
  return *this;
}

void LabelQuality::finalize() {
  precision = emitted == 0 ? std::nullopt : std::optional<double>(static_cast<double>(correct) / emitted);
  recall = matchable == 0 ? 0.0 : static_cast<double>(recalled) / static_cast<double>(matchable);
}

LabelQuality label_quality(const std::vector<MatchSet>& pseudo, const CorrespondenceOracle& oracle, double tol) {
  if (!(tol >= 0)) throw ValidationError("label_quality: tol must be non-negative");
  LabelQuality q;
  for (const MatchSet& set : pseudo) {
    std::set<std::pair<double, double>> recalled_src;
    for (const Match& m : set.matches) {
      ++q.emitted;
      const auto truth = oracle.map(set.src_image, set.tgt_image, m.src);
      if (truth && distance(*truth, m.tgt) <= tol) {
        ++q.correct;
        recalled_src.insert({m.src.row, m.src.col});
      }
    }
    q.matchable += oracle.matchable_points(set.src_image, set.tgt_image).size();
    q.recalled += recalled_src.size();
  }
  q.finalize();
  return q;
}

}  // namespace pseudocorr
