#pragma once

#include <array>
#include <string>
#include <vector>

#include "cyclemorph/tensor.hpp"

namespace cm {

// Scalar (or multi-channel) intensity grid; values laid out [C, spatial...].
struct Image {
  Tensor values;

  Image() = default;
  explicit Image(Tensor t);

  int channels() const { return values.shape[0]; }
  int spatial_rank() const { return values.rank() - 1; }
  std::vector<int> lattice() const {
    return {values.shape.begin() + 1, values.shape.end()};
  }
  std::int64_t voxels() const { return values.numel() / channels(); }
};

// Per-voxel displacement vectors in voxel units; values laid out [dim, spatial...],
// component d displaces along spatial axis d.
struct DisplacementField {
  Tensor values;

  DisplacementField() = default;
  explicit DisplacementField(Tensor t);
  static DisplacementField zeros(const std::vector<int>& lattice);

  int dim() const { return values.shape[0]; }
  std::vector<int> lattice() const {
    return {values.shape.begin() + 1, values.shape.end()};
  }
  std::int64_t voxels() const { return values.numel() / dim(); }
};

// Integer label per voxel; 0 is background.
struct LabelMap {
  std::vector<int> lattice;
  std::vector<std::int32_t> labels;

  std::int64_t voxels() const { return static_cast<std::int64_t>(labels.size()); }
  // stored as a rank-(spatial) float32 DTF tensor
  Tensor to_tensor() const;
  static LabelMap from_tensor(const Tensor& t);
};

// Point set in voxel coordinates, lattice axis order (axis 0 slowest).
struct LandmarkSet {
  int rank = 0;
  std::vector<std::array<double, 3>> points;

  size_t size() const { return points.size(); }
};

void write_landmarks_csv(const std::string& path, const LandmarkSet& set);
LandmarkSet read_landmarks_csv(const std::string& path);

// Binary PGM (P5, 8- or 16-bit) ingestion, maxval-normalized to [0,1].
Image read_pgm(const std::string& path);

void check_unit_range(const char* what, const Image& img);

}  // namespace cm
