#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "ttaloop/quality.hpp"
#include "ttaloop/volume.hpp"

namespace ttaloop {

enum class Variability { low, high };
enum class ShiftKind { none, contrast_shift, crop_fov };

const char* to_string(Variability v);
const char* to_string(ShiftKind s);
Variability parse_variability(const std::string& s);
ShiftKind parse_shift(const std::string& s);

// Seeded phantom family. Low variability: one near-centred ellipsoid with
// narrow intensity spread. High variability: one to three ellipsoids with
// wide size, eccentricity and contrast ranges.
struct PhantomSpec {
  Geometry geometry{{48, 48, 48}, {1.0, 1.0, 1.0}};
  Variability variability = Variability::low;
  double fg_mean = 0.70;
  double fg_std = 0.03;  // spread of the per-case structure level
  double bg_mean = 0.30;
  double bg_std = 0.03;
  double noise_sigma = 0.20;
  double bias_field_amp = 0.20;
  ShiftKind shift = ShiftKind::none;
  double shift_magnitude = 0.0;

  void validate() const;
  bool operator==(const PhantomSpec&) const = default;
};

struct Phantom {
  Volume volume;
  Mask truth;
  std::optional<SliceRange> border;
};

// Deterministic per (spec, seed). Throws GenerationError when no structure
// voxel lands inside the grid.
Phantom gen_phantom(const PhantomSpec& spec, std::uint64_t seed);

nlohmann::json to_json(const PhantomSpec& s);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);
std::string spec_digest(const PhantomSpec& s);

// Lowest and highest z containing foreground; empty for an empty mask.
std::optional<SliceRange> oracle_border_slices(const Mask& truth);

struct OracleConfig {
  int jitter_voxels = 0;  // 0 = exact ground truth
  std::uint64_t seed = 0;
};

// Simulated annotator holding ground truth by case id.
class AnnotationOracle {
 public:
  void add(const std::string& case_id, Mask truth);
  bool has(const std::string& case_id) const { return truth_.count(case_id) > 0; }

  // Ground truth, optionally with each voxel within `jitter_voxels` steps of
  // the boundary flipped with probability 1/2.
  Mask annotate(const std::string& case_id, const OracleConfig& config = {}) const;
  std::optional<SliceRange> border_slices(const std::string& case_id) const;

 private:
  const Mask& truth(const std::string& case_id) const;
  std::map<std::string, Mask> truth_;
};

// 6-connected step distance from each voxel to the nearest voxel of the
// opposite label (0 where the mask is constant everywhere).
std::vector<int> boundary_distance(const Mask& m);

Mask jitter_boundary(const Mask& truth, int band, std::uint64_t seed);

// Soft map degraded from `truth`: morphological erosion or dilation, deleted
// and spurious blobs and a box blur, all scaled by severity in [0, 1].
// Severity 0 returns the truth as a 0/1 map.
ProbMap corrupt_prediction(const Mask& truth, double severity, std::uint64_t seed);

}  // namespace ttaloop
