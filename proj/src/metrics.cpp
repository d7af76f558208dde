#include "ttaloop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ttaloop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher), weighted by the
// squared axis spacing. Infinite inputs are not sites.
void envelope_1d(std::span<const double> f, std::span<double> out, double w2,
                 std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  v.resize(n);
  z.resize(n + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double fq = f[q] + w2 * q * q;
    double s = -kInf;
    while (k >= 0) {
      const int p = v[k];
      s = (fq - (f[p] + w2 * p * p)) / (2.0 * w2 * (q - p));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -kInf : s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    out[q] = w2 * dq * dq + f[v[k]];
  }
}

void transform_axis(std::vector<double>& grid, const Geometry& g, int axis) {
  const int n = g.shape[axis];
  if (n == 1) return;
  const double w2 = g.spacing_mm[axis] * g.spacing_mm[axis];
  std::size_t stride = 1;
  for (int d = axis + 1; d < 3; ++d) stride *= g.shape[d];
  std::vector<double> line(n), out(n), z;
  std::vector<int> v;
  const std::size_t total = g.voxels();
  const std::size_t block = stride * n;
  for (std::size_t base = 0; base < total; base += block) {
    for (std::size_t off = 0; off < stride; ++off) {
      const std::size_t start = base + off;
      for (int i = 0; i < n; ++i) line[i] = grid[start + i * stride];
      envelope_1d(line, out, w2, v, z);
      for (int i = 0; i < n; ++i) grid[start + i * stride] = out[i];
    }
  }
}

std::vector<std::uint8_t> surface_flags(const Mask& m) {
  const Geometry& g = m.geometry();
  std::vector<std::uint8_t> flags(g.voxels(), 0);
  static constexpr int dz[6] = {-1, 1, 0, 0, 0, 0};
  static constexpr int dy[6] = {0, 0, -1, 1, 0, 0};
  static constexpr int dx[6] = {0, 0, 0, 0, -1, 1};
  for (int z = 0; z < g.nz(); ++z) {
    for (int y = 0; y < g.ny(); ++y) {
      for (int x = 0; x < g.nx(); ++x) {
        if (!m.at(z, y, x)) continue;
        for (int k = 0; k < 6; ++k) {
          const int zz = z + dz[k], yy = y + dy[k], xx = x + dx[k];
          if (!g.contains(zz, yy, xx) || !m.at(zz, yy, xx)) {
            flags[g.index(z, y, x)] = 1;
            break;
          }
        }
      }
    }
  }
  return flags;
}

// Surface flags of one slice, stored as a 1 x ny x nx plane.
std::vector<std::uint8_t> slice_surface_flags(const Mask& m, int z) {
  const Geometry& g = m.geometry();
  std::vector<std::uint8_t> flags(g.slice_voxels(), 0);
  static constexpr int dy[4] = {-1, 1, 0, 0};
  static constexpr int dx[4] = {0, 0, -1, 1};
  for (int y = 0; y < g.ny(); ++y) {
    for (int x = 0; x < g.nx(); ++x) {
      if (!m.at(z, y, x)) continue;
      for (int k = 0; k < 4; ++k) {
        const int yy = y + dy[k], xx = x + dx[k];
        if (yy < 0 || xx < 0 || yy >= g.ny() || xx >= g.nx() || !m.at(z, yy, xx)) {
          flags[static_cast<std::size_t>(y) * g.nx() + x] = 1;
          break;
        }
      }
    }
  }
  return flags;
}

// Distances from each flagged voxel of `from` to the nearest flagged voxel of `to`.
void directed_distances(const Geometry& g, const std::vector<std::uint8_t>& from,
                        const std::vector<std::uint8_t>& to, std::vector<double>& out) {
  const auto d2 = squared_distance_to_sites(g, to);
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i]) out.push_back(std::sqrt(d2[i]));
  }
}

}  // namespace

std::vector<double> squared_distance_to_sites(const Geometry& g,
                                              std::span<const std::uint8_t> sites) {
  std::vector<double> grid(g.voxels());
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = sites[i] ? 0.0 : kInf;
  for (int axis = 0; axis < 3; ++axis) transform_axis(grid, g, axis);
  return grid;
}

double dice(const Mask& a, const Mask& b) {
  require_same_geometry(a.geometry(), b.geometry(), "dice");
  return dice_in_slices(a, b, 0, a.geometry().nz() - 1);
}

double dice_in_slices(const Mask& a, const Mask& b, int z_lo, int z_hi) {
  require_same_geometry(a.geometry(), b.geometry(), "dice");
  const Geometry& g = a.geometry();
  if (z_lo < 0 || z_hi >= g.nz() || z_lo > z_hi) {
    throw ArgumentError("slice range [" + std::to_string(z_lo) + "," + std::to_string(z_hi) +
                        "] outside 0.." + std::to_string(g.nz() - 1));
  }
  const std::size_t begin = static_cast<std::size_t>(z_lo) * g.slice_voxels();
  const std::size_t end = static_cast<std::size_t>(z_hi + 1) * g.slice_voxels();
  std::size_t inter = 0, sum = 0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = begin; i < end; ++i) {
    inter += da[i] & db[i];
    sum += da[i] + db[i];
  }
  if (sum == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(sum);
}

Mask binarize(const ProbMap& p, double threshold) {
  Mask m(p.geometry());
  const auto src = p.data();
  auto dst = m.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= threshold ? 1 : 0;
  return m;
}

std::vector<Voxel> surface_voxels(const Mask& m) {
  const Geometry& g = m.geometry();
  const auto flags = surface_flags(m);
  std::vector<Voxel> out;
  for (int z = 0; z < g.nz(); ++z)
    for (int y = 0; y < g.ny(); ++y)
      for (int x = 0; x < g.nx(); ++x)
        if (flags[g.index(z, y, x)]) out.push_back({z, y, x});
  return out;
}

std::vector<Voxel> surface_voxels_in_slice(const Mask& m, int z) {
  const Geometry& g = m.geometry();
  if (z < 0 || z >= g.nz()) throw ArgumentError("slice index out of range");
  const auto flags = slice_surface_flags(m, z);
  std::vector<Voxel> out;
  for (int y = 0; y < g.ny(); ++y)
    for (int x = 0; x < g.nx(); ++x)
      if (flags[static_cast<std::size_t>(y) * g.nx() + x]) out.push_back({z, y, x});
  return out;
}

std::optional<double> hausdorff95(const Mask& a, const Mask& b) {
  require_same_geometry(a.geometry(), b.geometry(), "hausdorff95");
  if (count_foreground(a) == 0 || count_foreground(b) == 0) return std::nullopt;
  const Geometry& g = a.geometry();
  const auto sa = surface_flags(a);
  const auto sb = surface_flags(b);
  std::vector<double> pooled;
  directed_distances(g, sa, sb, pooled);
  directed_distances(g, sb, sa, pooled);
  std::sort(pooled.begin(), pooled.end());
  const std::size_t n = pooled.size();
  const std::size_t rank = (95 * n + 99) / 100;  // ceil(0.95 n)
  return pooled[std::max<std::size_t>(rank, 1) - 1];
}

std::optional<double> assd2d(const Mask& a, const Mask& b, OneSidedSlice one_sided) {
  require_same_geometry(a.geometry(), b.geometry(), "assd2d");
  const Geometry& g = a.geometry();
  Geometry plane = g;
  plane.shape[0] = 1;
  const double diagonal = std::hypot((g.ny() - 1) * g.spacing_mm[1], (g.nx() - 1) * g.spacing_mm[2]);
  double total = 0.0;
  int slices = 0;
  std::vector<double> dists;
  for (int z = 0; z < g.nz(); ++z) {
    const bool fa = count_foreground_in_slice(a, z) > 0;
    const bool fb = count_foreground_in_slice(b, z) > 0;
    if (!fa && !fb) continue;
    if (fa != fb) {
      if (one_sided == OneSidedSlice::diagonal_penalty) {
        total += diagonal;
        ++slices;
      }
      continue;
    }
    const auto sa = slice_surface_flags(a, z);
    const auto sb = slice_surface_flags(b, z);
    dists.clear();
    directed_distances(plane, sa, sb, dists);
    directed_distances(plane, sb, sa, dists);
    double sum = 0.0;
    for (double d : dists) sum += d;
    total += sum / static_cast<double>(dists.size());
    ++slices;
  }
  if (slices == 0) return std::nullopt;
  return total / slices;
}

MetricResult evaluate_metrics(const Mask& prediction, const Mask& truth) {
  MetricResult r;
  r.dice = dice(prediction, truth);
  r.hausdorff95_mm = hausdorff95(prediction, truth);
  r.assd2d_mm = assd2d(prediction, truth);
  return r;
}

}  // namespace ttaloop
