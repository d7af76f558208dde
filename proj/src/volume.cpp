#include "ttaloop/volume.hpp"

#include <cmath>
#include <sstream>

namespace ttaloop {

void Geometry::validate() const {
  for (int d = 0; d < 3; ++d) {
    if (shape[d] < 1) throw ValidationError("shape component < 1: " + describe());
    if (!(spacing_mm[d] > 0.0) || !std::isfinite(spacing_mm[d])) {
      throw ValidationError("spacing must be positive and finite: " + describe());
    }
  }
}

std::string Geometry::describe() const {
  std::ostringstream os;
  os << "(" << shape[0] << "x" << shape[1] << "x" << shape[2] << " @ " << spacing_mm[0] << ","
     << spacing_mm[1] << "," << spacing_mm[2] << " mm)";
  return os.str();
}

const char* to_string(GridKind kind) {
  switch (kind) {
    case GridKind::intensity:
      return "intensity";
    case GridKind::prob:
      return "prob";
    case GridKind::mask:
      return "mask";
  }
  return "?";
}

void validate(const Volume& v) {
  const auto d = v.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) {
      throw ValidationError("non-finite intensity at voxel " + std::to_string(i));
    }
  }
}

void validate(const ProbMap& p) {
  const auto d = p.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(d[i] >= 0.0f && d[i] <= 1.0f)) {
      throw ValidationError("probability outside [0,1] at voxel " + std::to_string(i));
    }
  }
}

void validate(const Mask& m) {
  const auto d = m.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 1) throw ValidationError("non-binary mask value at voxel " + std::to_string(i));
  }
}

void require_same_geometry(const Geometry& a, const Geometry& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": geometry mismatch " + a.describe() + " vs " +
                     b.describe());
  }
}

std::size_t count_foreground(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.data()) n += v;
  return n;
}

std::size_t count_foreground_in_slice(const Mask& m, int z) {
  const std::size_t plane = m.geometry().slice_voxels();
  const auto d = m.data().subspan(static_cast<std::size_t>(z) * plane, plane);
  std::size_t n = 0;
  for (auto v : d) n += v;
  return n;
}

}  // namespace ttaloop
