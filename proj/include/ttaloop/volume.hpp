#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "ttaloop/error.hpp"

namespace ttaloop {

// Axis order everywhere is (z, y, x); z is the slice axis.
struct Geometry {
  std::array<int, 3> shape{1, 1, 1};
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};

  int nz() const { return shape[0]; }
  int ny() const { return shape[1]; }
  int nx() const { return shape[2]; }

  std::size_t voxels() const {
    return static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
  }
  std::size_t slice_voxels() const { return static_cast<std::size_t>(shape[1]) * shape[2]; }

  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * shape[1] + y) * shape[2] + x;
  }

  bool contains(int z, int y, int x) const {
    return z >= 0 && y >= 0 && x >= 0 && z < shape[0] && y < shape[1] && x < shape[2];
  }

  bool operator==(const Geometry&) const = default;

  // Throws ValidationError unless every extent is >= 1 and every spacing > 0.
  void validate() const;
  std::string describe() const;
};

enum class GridKind { intensity, prob, mask };

const char* to_string(GridKind kind);

// Dense z-major scalar grid. The kind parameter keeps intensities, soft
// predictions and binary labels from being mixed up at compile time.
template <GridKind Kind>
class Grid {
 public:
  using value_type = std::conditional_t<Kind == GridKind::mask, std::uint8_t, float>;
  static constexpr GridKind kind = Kind;

  Grid() = default;

  explicit Grid(Geometry geometry, value_type fill = value_type{})
      : geometry_(geometry), data_((geometry.validate(), geometry.voxels()), fill) {}

  Grid(Geometry geometry, std::vector<value_type> data)
      : geometry_(geometry), data_(std::move(data)) {
    geometry_.validate();
    if (data_.size() != geometry_.voxels()) {
      throw ValidationError("grid payload has " + std::to_string(data_.size()) +
                            " values, geometry " + geometry_.describe() + " needs " +
                            std::to_string(geometry_.voxels()));
    }
  }

  const Geometry& geometry() const { return geometry_; }
  std::size_t size() const { return data_.size(); }

  std::span<value_type> data() { return data_; }
  std::span<const value_type> data() const { return data_; }

  value_type& operator[](std::size_t i) { return data_[i]; }
  value_type operator[](std::size_t i) const { return data_[i]; }

  value_type& at(int z, int y, int x) { return data_[geometry_.index(z, y, x)]; }
  value_type at(int z, int y, int x) const { return data_[geometry_.index(z, y, x)]; }

  bool operator==(const Grid&) const = default;

 private:
  Geometry geometry_;
  std::vector<value_type> data_;
};

using Volume = Grid<GridKind::intensity>;
using ProbMap = Grid<GridKind::prob>;
using Mask = Grid<GridKind::mask>;

// Invariant checks; each throws ValidationError on the first offending voxel.
void validate(const Volume& v);
void validate(const ProbMap& p);
void validate(const Mask& m);

void require_same_geometry(const Geometry& a, const Geometry& b, const char* what);

std::size_t count_foreground(const Mask& m);
std::size_t count_foreground_in_slice(const Mask& m, int z);

}  // namespace ttaloop
