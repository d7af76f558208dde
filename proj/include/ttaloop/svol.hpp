#pragma once

#include <filesystem>

#include "ttaloop/volume.hpp"

namespace ttaloop {

// "svol" storage: `<stem>.svol.json` holds
//   {"shape":[nz,ny,nx],"spacing_mm":[sz,sy,sx],"kind":"intensity|prob|mask","dtype":"f32le"}
// and the sibling `<stem>.svol.raw` holds nz*ny*nx little-endian float32
// values in z-major order. Masks are stored as 0.0 / 1.0.

// Sibling payload path of a header path (".json" replaced by ".raw").
std::filesystem::path svol_payload_path(const std::filesystem::path& header);

struct SvolHeader {
  Geometry geometry;
  GridKind kind = GridKind::intensity;
};

SvolHeader read_svol_header(const std::filesystem::path& header);

template <GridKind Kind>
void write_svol(const std::filesystem::path& header, const Grid<Kind>& grid);

// Reads and validates; throws ValidationError when the stored kind differs.
template <GridKind Kind>
Grid<Kind> read_svol(const std::filesystem::path& header);

inline Volume read_volume(const std::filesystem::path& p) { return read_svol<GridKind::intensity>(p); }
inline ProbMap read_probmap(const std::filesystem::path& p) { return read_svol<GridKind::prob>(p); }
inline Mask read_mask(const std::filesystem::path& p) { return read_svol<GridKind::mask>(p); }

}  // namespace ttaloop
