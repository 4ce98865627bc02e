#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pseudocorr/tensor.hpp"

namespace pseudocorr {

inline constexpr double kAzimuthBinDeg = 45.0;

struct BoundingBox {
  double x = 0, y = 0, w = 0, h = 0;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

using Mat3 = std::array<double, 9>;  // row-major

/// One annotated image: identity, weak 3D labels and storage references.
struct ImageRecord {
  std::string image_id;
  std::string category;
  double azimuth_deg = 0.0;
  int azimuth_bin = 0;
  bool azimuth_from_bin = false;  // only the 45 degree bin is known; azimuth_deg is its centre
  std::optional<Mat3> rotation;
  BoundingBox bbox;
  double patch_size = 16.0;
  std::string feature_path;
  std::string mask_path;
  std::string keypoints_path;  // optional
  std::string sphere_path;     // optional per-cell sphere coordinates (oracle mode)

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

double normalize_azimuth(double deg);
int azimuth_bin_of(double deg);
bool is_rotation(const Mat3& r, double tol = 1e-6);

/// Throws ValidationError when a record violates its invariants.
void validate_record(const ImageRecord& record);

/// Loaded feature grids and masks keyed by image id.
class ImageStore {
 public:
  struct Entry {
    FeatureMap features;
    Mask mask;
  };

  void insert(const std::string& image_id, FeatureMap features, Mask mask);
  bool contains(const std::string& image_id) const { return entries_.count(image_id) > 0; }
  const Entry& at(const std::string& image_id) const;
  const FeatureMap& features(const std::string& image_id) const { return at(image_id).features; }
  const Mask& mask(const std::string& image_id) const { return at(image_id).mask; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, Entry> entries_;
};

/// Groups records by category, preserving input order within each group.
std::map<std::string, std::vector<const ImageRecord*>> by_category(const std::vector<ImageRecord>& records);

}  // namespace pseudocorr
