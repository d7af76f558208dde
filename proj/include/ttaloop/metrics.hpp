#pragma once

#include <array>
#include <optional>
#include <vector>

#include "ttaloop/volume.hpp"

namespace ttaloop {

using Voxel = std::array<int, 3>;  // (z, y, x)

struct MetricResult {
  double dice = 0.0;
  std::optional<double> hausdorff95_mm;
  std::optional<double> assd2d_mm;
};

// 2|A∩B| / (|A|+|B|); two empty masks agree perfectly and score 1.
double dice(const Mask& a, const Mask& b);

// Dice restricted to slices z_lo..z_hi inclusive.
double dice_in_slices(const Mask& a, const Mask& b, int z_lo, int z_hi);

// voxel = 1 iff p >= threshold.
Mask binarize(const ProbMap& p, double threshold = 0.5);

// Foreground voxels with a 6-neighbour that is background or off-grid.
std::vector<Voxel> surface_voxels(const Mask& m);

// Foreground voxels of slice z with a 4-neighbour (in-plane) that is
// background or off-grid.
std::vector<Voxel> surface_voxels_in_slice(const Mask& m, int z);

// 95th percentile (nearest rank) of the pooled two-way surface distances.
// Empty result when either mask is empty.
std::optional<double> hausdorff95(const Mask& a, const Mask& b);

enum class OneSidedSlice {
  skip,              // slices with foreground in only one mask are ignored
  diagonal_penalty,  // they contribute the in-plane grid diagonal
};

// Per-slice average symmetric surface distance averaged over qualifying slices.
std::optional<double> assd2d(const Mask& a, const Mask& b,
                             OneSidedSlice one_sided = OneSidedSlice::skip);

MetricResult evaluate_metrics(const Mask& prediction, const Mask& truth);

// Squared physical distance from every voxel to the nearest site voxel
// (infinity where no site exists). Exact separable transform.
std::vector<double> squared_distance_to_sites(const Geometry& g, std::span<const std::uint8_t> sites);

}  // namespace ttaloop
