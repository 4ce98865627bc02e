#include "pseudocorr/dataset.hpp"

#include <cmath>

namespace pseudocorr {

double normalize_azimuth(double deg) {
  double a = std::fmod(deg, 360.0);
  if (a < 0) a += 360.0;
  if (a >= 360.0) a -= 360.0;
  return a;
}

int azimuth_bin_of(double deg) {
  return static_cast<int>(std::floor(normalize_azimuth(deg) / kAzimuthBinDeg)) % 8;
}

bool is_rotation(const Mat3& r, double tol) {
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += r[k * 3 + i] * r[k * 3 + j];
      if (std::abs(s - (i == j ? 1.0 : 0.0)) > tol) return false;
    }
  }
  const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                     r[2] * (r[3] * r[7] - r[4] * r[6]);
  return std::abs(det - 1.0) <= tol;
}

void validate_record(const ImageRecord& record) {
  if (record.image_id.empty()) throw ValidationError("record has empty image_id");
  if (!std::isfinite(record.azimuth_deg) || record.azimuth_deg < 0.0 || record.azimuth_deg >= 360.0) {
    throw ValidationError("record " + record.image_id + ": azimuth outside [0, 360)");
  }
  if (record.azimuth_bin < 0 || record.azimuth_bin >= 8) {
    throw ValidationError("record " + record.image_id + ": azimuth bin outside [0, 8)");
  }
  if (!record.azimuth_from_bin && record.azimuth_bin != azimuth_bin_of(record.azimuth_deg)) {
    throw ValidationError("record " + record.image_id + ": azimuth bin does not match azimuth");
  }
  if (record.rotation && !is_rotation(*record.rotation)) {
    throw ValidationError("record " + record.image_id + ": rotation is not orthonormal with det +1");
  }
  if (!(record.patch_size > 0)) throw ValidationError("record " + record.image_id + ": patch_size must be positive");
}

void ImageStore::insert(const std::string& image_id, FeatureMap features, Mask mask) {
  if (!mask.matches(features)) throw ValidationError("mask dimensions differ from feature map for " + image_id);
  features.set_image_id(image_id);
  entries_[image_id] = Entry{std::move(features), std::move(mask)};
}

const ImageStore::Entry& ImageStore::at(const std::string& image_id) const {
  auto it = entries_.find(image_id);
  if (it == entries_.end()) throw ValidationError("unknown image id: " + image_id);
  return it->second;
}

std::map<std::string, std::vector<const ImageRecord*>> by_category(const std::vector<ImageRecord>& records) {
  std::map<std::string, std::vector<const ImageRecord*>> out;
  for (const auto& r : records) out[r.category].push_back(&r);
  return out;
}

}  // namespace pseudocorr
