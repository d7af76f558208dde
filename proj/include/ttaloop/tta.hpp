#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "ttaloop/segmenter.hpp"
#include "ttaloop/volume.hpp"

namespace ttaloop {

// Contrast change applied to min-max normalised intensities u in [0,1]:
// gamma maps u -> u^gamma, linear maps u -> scale*u + shift. The result is
// mapped back to the original intensity window.
struct IntensityOp {
  enum class Kind { none, gamma, linear };
  Kind kind = Kind::none;
  double gamma = 1.0;
  double scale = 1.0;
  double shift = 0.0;

  bool is_identity() const;
  bool operator==(const IntensityOp&) const = default;
};

struct TtaTransform {
  int id = 0;
  std::array<bool, 3> flip{false, false, false};  // (z, y, x), applied first
  int rot90_k = 0;                                // in-plane y-x rotations, then
  bool transpose_yx = false;                      // optional y-x transpose
  IntensityOp intensity;
  std::uint64_t seed = 0;

  bool is_geometric_identity() const;
  bool operator==(const TtaTransform&) const = default;
};

struct TtaEnsemble {
  std::vector<TtaTransform> transforms;
  std::size_t size() const { return transforms.size(); }
  bool operator==(const TtaEnsemble&) const = default;
};

struct TtaConfig {
  double gamma_min = 0.9, gamma_max = 1.1;
  double scale_min = 0.9, scale_max = 1.1;
  double shift_min = -0.05, shift_max = 0.05;

  void validate() const;  // ordered ranges, positive gamma and scale
  bool operator==(const TtaConfig&) const = default;
};

// Member 0 is the identity; members 1..n-1 walk a seeded shuffle of the 15
// distinct non-identity grid permutations (z flip x in-plane dihedral group),
// each paired with a seeded gamma or linear contrast op. Past 15 the
// permutations repeat with fresh contrast parameters.
TtaEnsemble enumerate_transforms(int n, std::uint64_t seed, const TtaConfig& config = {});

// Number of distinct voxel permutations reachable by the geometric grid.
int distinct_geometric_ops();

// Output geometry of the forward permutation.
Geometry forward_geometry(const TtaTransform& t, const Geometry& g);

// Permutation followed by the contrast op.
Volume apply_fwd(const TtaTransform& t, const Volume& v);

// Exact inverse permutation; contrast ops are not inverted.
template <GridKind Kind>
Grid<Kind> apply_inv_geom(const TtaTransform& t, const Grid<Kind>& g);

// As above, but first checks that `g` has the geometry the forward transform
// produces from `original` (ShapeError otherwise).
template <GridKind Kind>
Grid<Kind> apply_inv_geom(const TtaTransform& t, const Grid<Kind>& g, const Geometry& original);

// Forward permutation only (no contrast op), for any grid kind.
template <GridKind Kind>
Grid<Kind> apply_fwd_geom(const TtaTransform& t, const Grid<Kind>& g);

// Min-max window the contrast op normalises against.
struct IntensityWindow {
  float lo = 0.0f;
  float hi = 0.0f;
};
IntensityWindow intensity_window(const Volume& v);
Volume apply_intensity(const IntensityOp& op, const Volume& v);

// Runs the segmenter on every member and returns predictions mapped back to
// the original frame, ordered by member position (ids ascending).
std::vector<ProbMap> tta_infer(const Segmenter& seg, const Volume& v, const TtaEnsemble& e);

nlohmann::json to_json(const TtaTransform& t);
nlohmann::json to_json(const TtaEnsemble& e);
nlohmann::json to_json(const TtaConfig& c);
// Missing keys keep their defaults.
TtaConfig tta_config_from_json(const nlohmann::json& j);
TtaTransform transform_from_json(const nlohmann::json& j);
TtaEnsemble ensemble_from_json(const nlohmann::json& j);

}  // namespace ttaloop
