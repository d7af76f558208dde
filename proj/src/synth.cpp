#include "ttaloop/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "ttaloop/format.hpp"
#include "ttaloop/metrics.hpp"
#include "ttaloop/rng.hpp"

namespace ttaloop {

using nlohmann::json;

const char* to_string(Variability v) { return v == Variability::low ? "low" : "high"; }

const char* to_string(ShiftKind s) {
  switch (s) {
    case ShiftKind::none:
      return "none";
    case ShiftKind::contrast_shift:
      return "contrast-shift";
    case ShiftKind::crop_fov:
      return "crop-fov";
  }
  return "none";
}

Variability parse_variability(const std::string& s) {
  if (s == "low") return Variability::low;
  if (s == "high") return Variability::high;
  throw ValidationError("unknown variability '" + s + "'");
}

ShiftKind parse_shift(const std::string& s) {
  if (s == "none") return ShiftKind::none;
  if (s == "contrast-shift") return ShiftKind::contrast_shift;
  if (s == "crop-fov") return ShiftKind::crop_fov;
  throw ValidationError("unknown shift '" + s + "'");
}

void PhantomSpec::validate() const {
  geometry.validate();
  if (fg_std < 0 || bg_std < 0 || noise_sigma < 0 || bias_field_amp < 0) {
    throw GenerationError("phantom spread parameters must be non-negative");
  }
  if (!(fg_mean > bg_mean)) throw GenerationError("phantom needs fg_mean > bg_mean");
  if (bias_field_amp >= 1.0) throw GenerationError("bias field amplitude must be < 1");
  if (shift_magnitude < 0.0 || shift_magnitude >= 1.0) {
    throw GenerationError("shift magnitude must lie in [0, 1)");
  }
}

namespace {

struct Ellipsoid {
  std::array<double, 3> centre;  // voxel coordinates
  std::array<double, 3> radius;  // voxels
};

Mask rasterise(const Geometry& g, const std::vector<Ellipsoid>& shapes) {
  Mask m(g);
  for (int z = 0; z < g.nz(); ++z)
    for (int y = 0; y < g.ny(); ++y)
      for (int x = 0; x < g.nx(); ++x) {
        const double p[3] = {static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)};
        for (const auto& e : shapes) {
          double r2 = 0.0;
          for (int a = 0; a < 3; ++a) {
            const double d = (p[a] - e.centre[a]) / e.radius[a];
            r2 += d * d;
          }
          if (r2 <= 1.0) {
            m.at(z, y, x) = 1;
            break;
          }
        }
      }
  return m;
}

template <GridKind Kind>
Grid<Kind> crop_slices(const Grid<Kind>& g, int z_begin, int z_end) {
  Geometry out_geom = g.geometry();
  out_geom.shape[0] = z_end - z_begin;
  Grid<Kind> out(out_geom);
  const std::size_t plane = g.geometry().slice_voxels();
  std::copy_n(g.data().begin() + static_cast<std::ptrdiff_t>(z_begin * plane), out.size(),
              out.data().begin());
  return out;
}

}  // namespace

Phantom gen_phantom(const PhantomSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Geometry& g = spec.geometry;
  Rng rng(mix_seed(seed, "phantom"));
  const bool high = spec.variability == Variability::high;

  std::vector<Ellipsoid> shapes;
  const int count = high ? 1 + static_cast<int>(rng.below(3)) : 1;
  for (int s = 0; s < count; ++s) {
    Ellipsoid e;
    const double base = rng.uniform(0.22, 0.28);
    for (int a = 0; a < 3; ++a) {
      const double extent = g.shape[a] - 1;
      if (high) {
        e.centre[a] = extent * rng.uniform(0.3, 0.7);
        e.radius[a] = std::max(1.0, g.shape[a] * rng.uniform(0.08, 0.30));
      } else {
        e.centre[a] = extent * (0.5 + rng.uniform(-0.08, 0.08));
        e.radius[a] = std::max(1.0, g.shape[a] * base * rng.uniform(0.9, 1.1));
      }
    }
    shapes.push_back(e);
  }
  Mask truth = rasterise(g, shapes);

  double bg = rng.normal(spec.bg_mean, spec.bg_std);
  double fg = rng.normal(spec.fg_mean, spec.fg_std);
  double sigma = spec.noise_sigma;
  if (high) {
    fg = bg + (spec.fg_mean - spec.bg_mean) * rng.uniform(0.45, 1.3);
    sigma *= rng.uniform(0.8, 1.3);
  }

  // Smooth multiplicative bias: a linear ramp plus one low-frequency cosine.
  std::array<double, 3> dir{rng.normal(), rng.normal(), rng.normal()};
  const double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]) + 1e-12;
  for (auto& d : dir) d /= norm;
  const double phase = rng.uniform(0.0, 2.0 * M_PI);

  Volume vol(g);
  for (int z = 0; z < g.nz(); ++z)
    for (int y = 0; y < g.ny(); ++y)
      for (int x = 0; x < g.nx(); ++x) {
        const double u[3] = {g.nz() > 1 ? static_cast<double>(z) / (g.nz() - 1) - 0.5 : 0.0,
                             g.ny() > 1 ? static_cast<double>(y) / (g.ny() - 1) - 0.5 : 0.0,
                             g.nx() > 1 ? static_cast<double>(x) / (g.nx() - 1) - 0.5 : 0.0};
        const double proj = dir[0] * u[0] + dir[1] * u[1] + dir[2] * u[2];
        const double field = spec.bias_field_amp * (1.2 * proj + 0.4 * std::cos(2.0 * M_PI * proj + phase));
        const double level = truth.at(z, y, x) ? fg : bg;
        vol.at(z, y, x) = static_cast<float>(level * (1.0 + field) + rng.normal(0.0, sigma));
      }

  if (spec.shift == ShiftKind::contrast_shift) {
    const double m = spec.shift_magnitude;
    for (auto& v : vol.data()) {
      v = static_cast<float>((1.0 - 0.5 * m) * v + 0.3 * m + rng.normal(0.0, 0.5 * m * sigma));
    }
  } else if (spec.shift == ShiftKind::crop_fov) {
    const int drop = static_cast<int>(std::lround(spec.shift_magnitude * g.nz()));
    if (drop >= g.nz()) throw GenerationError("crop-fov removes every slice");
    const bool from_top = rng.uniform() < 0.5;
    const int z_begin = from_top ? drop : 0;
    const int z_end = from_top ? g.nz() : g.nz() - drop;
    vol = crop_slices(vol, z_begin, z_end);
    truth = crop_slices(truth, z_begin, z_end);
  }

  Phantom out{std::move(vol), std::move(truth), std::nullopt};
  out.border = oracle_border_slices(out.truth);
  if (!out.border) throw GenerationError("phantom structure lies outside the grid");
  return out;
}

json to_json(const PhantomSpec& s) {
  return json{{"shape", s.geometry.shape},
              {"spacing_mm", s.geometry.spacing_mm},
              {"variability", to_string(s.variability)},
              {"fg_mean", s.fg_mean},
              {"fg_std", s.fg_std},
              {"bg_mean", s.bg_mean},
              {"bg_std", s.bg_std},
              {"noise_sigma", s.noise_sigma},
              {"bias_field_amp", s.bias_field_amp},
              {"shift", to_string(s.shift)},
              {"shift_magnitude", s.shift_magnitude}};
}

PhantomSpec phantom_spec_from_json(const json& j) {
  PhantomSpec s;
  try {
    s.geometry.shape = j.at("shape").get<std::array<int, 3>>();
    s.geometry.spacing_mm = j.at("spacing_mm").get<std::array<double, 3>>();
    s.variability = parse_variability(j.at("variability").get<std::string>());
    s.fg_mean = j.at("fg_mean").get<double>();
    s.fg_std = j.at("fg_std").get<double>();
    s.bg_mean = j.at("bg_mean").get<double>();
    s.bg_std = j.at("bg_std").get<double>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    s.bias_field_amp = j.at("bias_field_amp").get<double>();
    s.shift = parse_shift(j.at("shift").get<std::string>());
    s.shift_magnitude = j.at("shift_magnitude").get<double>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("phantom spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string spec_digest(const PhantomSpec& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(to_json(s).dump())));
  return buf;
}

std::optional<SliceRange> oracle_border_slices(const Mask& truth) {
  std::optional<SliceRange> r;
  for (int z = 0; z < truth.geometry().nz(); ++z) {
    if (count_foreground_in_slice(truth, z) == 0) continue;
    if (!r) r = SliceRange{z, z};
    r->hi = z;
  }
  return r;
}

void AnnotationOracle::add(const std::string& case_id, Mask truth) {
  truth_[case_id] = std::move(truth);
}

const Mask& AnnotationOracle::truth(const std::string& case_id) const {
  const auto it = truth_.find(case_id);
  if (it == truth_.end()) throw ArgumentError("oracle has no ground truth for case '" + case_id + "'");
  return it->second;
}

Mask AnnotationOracle::annotate(const std::string& case_id, const OracleConfig& config) const {
  const Mask& t = truth(case_id);
  if (config.jitter_voxels <= 0) return t;
  return jitter_boundary(t, config.jitter_voxels, mix_seed(config.seed, case_id));
}

std::optional<SliceRange> AnnotationOracle::border_slices(const std::string& case_id) const {
  return oracle_border_slices(truth(case_id));
}

std::vector<int> boundary_distance(const Mask& m) {
  const Geometry& g = m.geometry();
  std::vector<int> dist(g.voxels(), 0);
  std::deque<std::size_t> queue;
  static constexpr int dz[6] = {-1, 1, 0, 0, 0, 0};
  static constexpr int dy[6] = {0, 0, -1, 1, 0, 0};
  static constexpr int dx[6] = {0, 0, 0, 0, -1, 1};
  for (int z = 0; z < g.nz(); ++z)
    for (int y = 0; y < g.ny(); ++y)
      for (int x = 0; x < g.nx(); ++x) {
        const auto v = m.at(z, y, x);
        for (int k = 0; k < 6; ++k) {
          const int zz = z + dz[k], yy = y + dy[k], xx = x + dx[k];
          if (g.contains(zz, yy, xx) && m.at(zz, yy, xx) != v) {
            dist[g.index(z, y, x)] = 1;
            queue.push_back(g.index(z, y, x));
            break;
          }
        }
      }
  const std::size_t plane = g.slice_voxels();
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const int z = static_cast<int>(i / plane);
    const int y = static_cast<int>((i % plane) / g.nx());
    const int x = static_cast<int>(i % g.nx());
    for (int k = 0; k < 6; ++k) {
      const int zz = z + dz[k], yy = y + dy[k], xx = x + dx[k];
      if (!g.contains(zz, yy, xx)) continue;
      const std::size_t j = g.index(zz, yy, xx);
      if (dist[j] == 0 && m[j] == m[i]) {
        dist[j] = dist[i] + 1;
        queue.push_back(j);
      }
    }
  }
  return dist;
}

Mask jitter_boundary(const Mask& truth, int band, std::uint64_t seed) {
  const auto dist = boundary_distance(truth);
  Rng rng(mix_seed(seed, "jitter"));
  Mask out = truth;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (dist[i] >= 1 && dist[i] <= band && rng.uniform() < 0.5) out[i] = 1 - out[i];
  }
  return out;
}

ProbMap corrupt_prediction(const Mask& truth, double severity, std::uint64_t seed) {
  if (severity < 0.0 || severity > 1.0) throw ArgumentError("severity must lie in [0, 1]");
  const Geometry& g = truth.geometry();
  ProbMap out(g);
  if (severity == 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = truth[i];
    return out;
  }
  Rng rng(mix_seed(seed, "corrupt"));
  const double fg = static_cast<double>(count_foreground(truth));
  const double eq_radius = std::cbrt(3.0 * std::max(fg, 1.0) / (4.0 * M_PI));

  // Erode or dilate by a severity-scaled radius (voxel units).
  Geometry unit = g;
  unit.spacing_mm = {1.0, 1.0, 1.0};
  Mask m = truth;
  const double r = severity * 0.35 * eq_radius;
  if (r >= 0.5) {
    const bool dilate = rng.uniform() < 0.5;
    std::vector<std::uint8_t> sites(g.voxels());
    for (std::size_t i = 0; i < sites.size(); ++i) sites[i] = dilate ? truth[i] : 1 - truth[i];
    const auto d2 = squared_distance_to_sites(unit, sites);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (dilate) {
        m[i] = d2[i] <= r * r ? 1 : 0;
      } else {
        m[i] = truth[i] && d2[i] > r * r ? 1 : 0;
      }
    }
  }

  // Delete blobs around random foreground voxels, add spurious ones elsewhere.
  auto stamp = [&](int cz, int cy, int cx, double radius, std::uint8_t value) {
    const int ir = static_cast<int>(std::ceil(radius));
    for (int z = cz - ir; z <= cz + ir; ++z)
      for (int y = cy - ir; y <= cy + ir; ++y)
        for (int x = cx - ir; x <= cx + ir; ++x) {
          if (!g.contains(z, y, x)) continue;
          const double d2 = (z - cz) * (z - cz) + (y - cy) * (y - cy) + (x - cx) * (x - cx);
          if (d2 <= radius * radius) m.at(z, y, x) = value;
        }
  };
  const int blobs = static_cast<int>(std::lround(3.0 * severity));
  const double blob_radius = std::max(1.0, severity * 0.5 * eq_radius);
  const std::size_t plane = g.slice_voxels();
  for (int b = 0; b < blobs; ++b) {
    std::vector<std::size_t> fg_idx;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i]) fg_idx.push_back(i);
    if (!fg_idx.empty()) {
      const std::size_t i = fg_idx[rng.below(fg_idx.size())];
      stamp(static_cast<int>(i / plane), static_cast<int>((i % plane) / g.nx()),
            static_cast<int>(i % g.nx()), blob_radius, 0);
    }
    const std::size_t j = rng.below(g.voxels());
    stamp(static_cast<int>(j / plane), static_cast<int>((j % plane) / g.nx()),
          static_cast<int>(j % g.nx()), 0.6 * blob_radius, 1);
  }

  // Box blur turns the mask into a soft map.
  const int blur = static_cast<int>(std::lround(2.0 * severity));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m[i];
  if (blur > 0) {
    ProbMap blurred(g);
    for (int z = 0; z < g.nz(); ++z)
      for (int y = 0; y < g.ny(); ++y)
        for (int x = 0; x < g.nx(); ++x) {
          double sum = 0.0;
          int n = 0;
          for (int a = -blur; a <= blur; ++a)
            for (int b = -blur; b <= blur; ++b)
              for (int c = -blur; c <= blur; ++c)
                if (g.contains(z + a, y + b, x + c)) {
                  sum += m.at(z + a, y + b, x + c);
                  ++n;
                }
          blurred.at(z, y, x) = static_cast<float>(sum / n);
        }
    out = std::move(blurred);
  }
  return out;
}

}  // namespace ttaloop
