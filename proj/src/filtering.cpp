#include "pseudocorr/filtering.hpp"

#include <cmath>
#include <sstream>

namespace pseudocorr {

FilterReport& FilterReport::operator+=(const FilterReport& other) {
  input_count += other.input_count;
  kept_count += other.kept_count;
  rejected_count += other.rejected_count;
  for (const auto& [k, v] : other.rejection_reasons) rejection_reasons[k] += v;
  return *this;
}

Filtered cyclic_filter(const MatchSet& matches, const FeatureMap& src, const FeatureMap& tgt, const Mask* src_mask,
                       const Mask* tgt_mask) {
  Filtered out{{matches.src_image, matches.tgt_image, {}}, {}};
  if (matches.empty()) return out;
  const NearestNeighbor<float> forward(tgt, tgt_mask);
  const NearestNeighbor<float> backward(src, src_mask);
  for (const auto& m : matches.matches) {
    const Match fwd = forward.best(m.src, src.cell(cell_index(m.src, src)));
    if (!(fwd.tgt == m.tgt)) {
      out.report.reject(reason::kForwardMismatch);
      continue;
    }
    const Match back = backward.best(m.tgt, tgt.cell(cell_index(m.tgt, tgt)));
    if (!(back.tgt == m.src)) {
      out.report.reject(reason::kBackwardMismatch);
      continue;
    }
    out.matches.matches.push_back(m);
    out.report.keep();
  }
  return out;
}

Filtered relaxed_cyclic_filter(const MatchSet& matches, const FeatureMap& src, const FeatureMap& tgt,
                               const Mask* src_mask, const Mask* /*tgt_mask*/, double r_max) {
  if (!(r_max >= 0.0)) throw ValidationError("r_max must be non-negative");
  Filtered out{{matches.src_image, matches.tgt_image, {}}, {}};
  if (matches.empty()) return out;
  const NearestNeighbor<float> backward(src, src_mask);
  for (const auto& m : matches.matches) {
    const Match back = backward.best(m.tgt, tgt.cell(cell_index(m.tgt, tgt)));
    if (distance(back.tgt, m.src) < r_max) {
      out.matches.matches.push_back(m);
      out.report.keep();
    } else {
      out.report.reject(reason::kOutsideRadius);
    }
  }
  return out;
}

Filtered CycleFilter::apply(const MatchSet& matches, const FeatureMap& src, const FeatureMap& tgt,
                            const Mask* src_mask, const Mask* tgt_mask) const {
  switch (mode) {
    case Mode::kNone: {
      Filtered out{matches, {}};
      out.report.input_count = out.report.kept_count = matches.size();
      return out;
    }
    case Mode::kExact:
      return cyclic_filter(matches, src, tgt, src_mask, tgt_mask);
    case Mode::kRelaxed:
      return relaxed_cyclic_filter(matches, src, tgt, src_mask, tgt_mask, r_max);
  }
  throw Error("unknown cycle filter mode");
}

std::string CycleFilter::describe() const {
  switch (mode) {
    case Mode::kNone:
      return "none";
    case Mode::kExact:
      return "exact";
    case Mode::kRelaxed: {
      std::ostringstream os;
      os << "relaxed:" << r_max;
      return os.str();
    }
  }
  return "unknown";
}

}  // namespace pseudocorr
