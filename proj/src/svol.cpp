#include "ttaloop/svol.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace ttaloop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

GridKind parse_kind(const std::string& s) {
  if (s == "intensity") return GridKind::intensity;
  if (s == "prob") return GridKind::prob;
  if (s == "mask") return GridKind::mask;
  throw ValidationError("unknown svol kind '" + s + "'");
}

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace

fs::path svol_payload_path(const fs::path& header) {
  fs::path raw = header;
  if (raw.extension() == ".json") {
    raw.replace_extension(".raw");
  } else {
    raw += ".raw";
  }
  return raw;
}

SvolHeader read_svol_header(const fs::path& header) {
  std::ifstream in(header);
  if (!in) throw IoError("cannot open svol header " + header.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("malformed svol header " + header.string() + ": " + e.what());
  }
  SvolHeader h;
  try {
    const auto shape = j.at("shape").get<std::vector<int>>();
    const auto spacing = j.at("spacing_mm").get<std::vector<double>>();
    if (shape.size() != 3 || spacing.size() != 3) {
      throw ValidationError("svol shape/spacing must have three entries");
    }
    for (int d = 0; d < 3; ++d) {
      h.geometry.shape[d] = shape[d];
      h.geometry.spacing_mm[d] = spacing[d];
    }
    h.kind = parse_kind(j.at("kind").get<std::string>());
    if (j.at("dtype").get<std::string>() != "f32le") {
      throw ValidationError("unsupported svol dtype in " + header.string());
    }
  } catch (const json::exception& e) {
    throw ValidationError("svol header " + header.string() + ": " + e.what());
  }
  h.geometry.validate();
  return h;
}

template <GridKind Kind>
void write_svol(const fs::path& header, const Grid<Kind>& grid) {
  const Geometry& g = grid.geometry();
  json j;
  j["shape"] = {g.shape[0], g.shape[1], g.shape[2]};
  j["spacing_mm"] = {g.spacing_mm[0], g.spacing_mm[1], g.spacing_mm[2]};
  j["kind"] = to_string(Kind);
  j["dtype"] = "f32le";
  if (header.has_parent_path()) fs::create_directories(header.parent_path());
  {
    std::ofstream out(header, std::ios::trunc);
    if (!out) throw IoError("cannot write " + header.string());
    out << j.dump() << "\n";
  }
  std::vector<std::uint32_t> words(grid.size());
  const auto d = grid.data();
  for (std::size_t i = 0; i < words.size(); ++i) {
    const float f = static_cast<float>(d[i]);
    words[i] = to_little_endian(std::bit_cast<std::uint32_t>(f));
  }
  std::ofstream raw(svol_payload_path(header), std::ios::binary | std::ios::trunc);
  if (!raw) throw IoError("cannot write payload for " + header.string());
  raw.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
}

template <GridKind Kind>
Grid<Kind> read_svol(const fs::path& header) {
  const SvolHeader h = read_svol_header(header);
  if (h.kind != Kind) {
    throw ValidationError(header.string() + " holds kind '" + to_string(h.kind) + "', expected '" +
                          to_string(Kind) + "'");
  }
  const fs::path raw_path = svol_payload_path(header);
  std::ifstream raw(raw_path, std::ios::binary);
  if (!raw) throw IoError("cannot open svol payload " + raw_path.string());
  const std::size_t n = h.geometry.voxels();
  std::vector<std::uint32_t> words(n);
  raw.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(n * 4));
  if (static_cast<std::size_t>(raw.gcount()) != n * 4 || raw.peek() != EOF) {
    throw ValidationError("svol payload " + raw_path.string() + " does not hold " +
                          std::to_string(n) + " float32 values");
  }
  using T = typename Grid<Kind>::value_type;
  std::vector<T> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float f = std::bit_cast<float>(to_little_endian(words[i]));
    if constexpr (Kind == GridKind::mask) {
      if (f != 0.0f && f != 1.0f) throw ValidationError("mask payload holds non-binary value");
      values[i] = f == 1.0f ? 1 : 0;
    } else {
      values[i] = f;
    }
  }
  Grid<Kind> grid(h.geometry, std::move(values));
  validate(grid);
  return grid;
}

template void write_svol<GridKind::intensity>(const fs::path&, const Volume&);
template void write_svol<GridKind::prob>(const fs::path&, const ProbMap&);
template void write_svol<GridKind::mask>(const fs::path&, const Mask&);
template Volume read_svol<GridKind::intensity>(const fs::path&);
template ProbMap read_svol<GridKind::prob>(const fs::path&);
template Mask read_svol<GridKind::mask>(const fs::path&);

}  // namespace ttaloop
