#include "ttaloop/tta.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ttaloop/rng.hpp"

namespace ttaloop {

using nlohmann::json;

namespace {

template <GridKind Kind>
Grid<Kind> flip_axis(const Grid<Kind>& in, int axis) {
  const Geometry& g = in.geometry();
  Grid<Kind> out(g);
  for (int z = 0; z < g.nz(); ++z) {
    const int sz = axis == 0 ? g.nz() - 1 - z : z;
    for (int y = 0; y < g.ny(); ++y) {
      const int sy = axis == 1 ? g.ny() - 1 - y : y;
      for (int x = 0; x < g.nx(); ++x) {
        const int sx = axis == 2 ? g.nx() - 1 - x : x;
        out.at(z, y, x) = in.at(sz, sy, sx);
      }
    }
  }
  return out;
}

Geometry swap_yx(Geometry g) {
  std::swap(g.shape[1], g.shape[2]);
  std::swap(g.spacing_mm[1], g.spacing_mm[2]);
  return g;
}

// Counter-clockwise quarter turn in the y-x plane: out[z][i][j] = in[z][j][nx-1-i].
template <GridKind Kind>
Grid<Kind> rot90_once(const Grid<Kind>& in) {
  const Geometry& g = in.geometry();
  Grid<Kind> out(swap_yx(g));
  const int nx = g.nx();
  for (int z = 0; z < g.nz(); ++z)
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < g.ny(); ++j) out.at(z, i, j) = in.at(z, j, nx - 1 - i);
  return out;
}

template <GridKind Kind>
Grid<Kind> transpose_yx(const Grid<Kind>& in) {
  const Geometry& g = in.geometry();
  Grid<Kind> out(swap_yx(g));
  for (int z = 0; z < g.nz(); ++z)
    for (int i = 0; i < g.nx(); ++i)
      for (int j = 0; j < g.ny(); ++j) out.at(z, i, j) = in.at(z, j, i);
  return out;
}

// One representative parameter set per distinct permutation, plus all the
// parameter sets that realise it. Grid order: flip mask, rotation, transpose.
struct GeometricClass {
  std::vector<TtaTransform> members;
};

const std::vector<GeometricClass>& geometric_classes() {
  static const std::vector<GeometricClass> classes = [] {
    Geometry probe_geom;
    probe_geom.shape = {2, 3, 4};
    Volume probe(probe_geom);
    for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = static_cast<float>(i);
    std::map<std::pair<std::array<int, 3>, std::vector<float>>, std::size_t> index;
    std::vector<GeometricClass> out;
    for (int flips = 0; flips < 8; ++flips) {
      for (int rot = 0; rot < 4; ++rot) {
        for (int tr = 0; tr < 2; ++tr) {
          TtaTransform t;
          t.flip = {(flips & 1) != 0, (flips & 2) != 0, (flips & 4) != 0};
          t.rot90_k = rot;
          t.transpose_yx = tr != 0;
          const Volume moved = apply_fwd_geom(t, probe);
          auto key = std::make_pair(moved.geometry().shape,
                                    std::vector<float>(moved.data().begin(), moved.data().end()));
          auto [it, inserted] = index.emplace(std::move(key), out.size());
          if (inserted) out.emplace_back();
          out[it->second].members.push_back(t);
        }
      }
    }
    return out;
  }();
  return classes;
}

IntensityOp sample_intensity(Rng& rng, const TtaConfig& c) {
  IntensityOp op;
  if (rng.uniform() < 0.5) {
    op.kind = IntensityOp::Kind::gamma;
    op.gamma = rng.uniform(c.gamma_min, c.gamma_max);
  } else {
    op.kind = IntensityOp::Kind::linear;
    op.scale = rng.uniform(c.scale_min, c.scale_max);
    op.shift = rng.uniform(c.shift_min, c.shift_max);
  }
  return op;
}

const char* kind_name(IntensityOp::Kind k) {
  switch (k) {
    case IntensityOp::Kind::none:
      return "none";
    case IntensityOp::Kind::gamma:
      return "gamma";
    case IntensityOp::Kind::linear:
      return "linear";
  }
  return "none";
}

}  // namespace

bool IntensityOp::is_identity() const {
  switch (kind) {
    case Kind::none:
      return true;
    case Kind::gamma:
      return gamma == 1.0;
    case Kind::linear:
      return scale == 1.0 && shift == 0.0;
  }
  return true;
}

bool TtaTransform::is_geometric_identity() const {
  Geometry probe_geom;
  probe_geom.shape = {2, 3, 4};
  Volume probe(probe_geom);
  for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = static_cast<float>(i);
  return apply_fwd_geom(*this, probe) == probe;
}

int distinct_geometric_ops() { return static_cast<int>(geometric_classes().size()); }

void TtaConfig::validate() const {
  if (!(gamma_min > 0.0 && gamma_min <= gamma_max) || !(scale_min > 0.0 && scale_min <= scale_max)) {
    throw ValidationError("tta gamma and scale ranges must be positive and ordered");
  }
  if (!(shift_min <= shift_max)) throw ValidationError("tta shift range must be ordered");
}

TtaEnsemble enumerate_transforms(int n, std::uint64_t seed, const TtaConfig& config) {
  if (n < 1) throw ArgumentError("ensemble size must be >= 1");
  const auto& classes = geometric_classes();
  Rng rng(mix_seed(seed, "tta-ensemble"));

  // Class 0 is the identity (flip mask 0, rotation 0, no transpose).
  std::vector<std::size_t> order;
  for (std::size_t c = 1; c < classes.size(); ++c) order.push_back(c);
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  TtaEnsemble e;
  TtaTransform identity;
  identity.id = 0;
  identity.seed = mix_seed(seed, 0);
  e.transforms.push_back(identity);
  for (int i = 1; i < n; ++i) {
    const auto& cls = classes[order[(i - 1) % order.size()]];
    TtaTransform t = cls.members[rng.below(cls.members.size())];
    t.id = i;
    t.intensity = sample_intensity(rng, config);
    t.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    e.transforms.push_back(t);
  }
  return e;
}

Geometry forward_geometry(const TtaTransform& t, const Geometry& g) {
  Geometry out = g;
  int swaps = (t.rot90_k % 4) + (t.transpose_yx ? 1 : 0);
  if (swaps % 2 == 1) out = swap_yx(out);
  return out;
}

template <GridKind Kind>
Grid<Kind> apply_fwd_geom(const TtaTransform& t, const Grid<Kind>& in) {
  Grid<Kind> g = in;
  for (int axis = 0; axis < 3; ++axis)
    if (t.flip[axis]) g = flip_axis(g, axis);
  for (int k = 0; k < ((t.rot90_k % 4) + 4) % 4; ++k) g = rot90_once(g);
  if (t.transpose_yx) g = transpose_yx(g);
  return g;
}

template <GridKind Kind>
Grid<Kind> apply_inv_geom(const TtaTransform& t, const Grid<Kind>& in) {
  Grid<Kind> out = in;
  if (t.transpose_yx) out = transpose_yx(out);
  const int k = ((t.rot90_k % 4) + 4) % 4;
  for (int i = 0; i < (4 - k) % 4; ++i) out = rot90_once(out);
  for (int axis = 2; axis >= 0; --axis)
    if (t.flip[axis]) out = flip_axis(out, axis);
  return out;
}

template <GridKind Kind>
Grid<Kind> apply_inv_geom(const TtaTransform& t, const Grid<Kind>& in, const Geometry& original) {
  if (!(forward_geometry(t, original) == in.geometry())) {
    throw ShapeError("grid " + in.geometry().describe() + " is not the frame of transform " +
                     std::to_string(t.id) + " applied to " + original.describe());
  }
  return apply_inv_geom(t, in);
}

template Volume apply_fwd_geom(const TtaTransform&, const Volume&);
template ProbMap apply_fwd_geom(const TtaTransform&, const ProbMap&);
template Mask apply_fwd_geom(const TtaTransform&, const Mask&);
template Volume apply_inv_geom(const TtaTransform&, const Volume&);
template ProbMap apply_inv_geom(const TtaTransform&, const ProbMap&);
template Mask apply_inv_geom(const TtaTransform&, const Mask&);
template ProbMap apply_inv_geom(const TtaTransform&, const ProbMap&, const Geometry&);
template Mask apply_inv_geom(const TtaTransform&, const Mask&, const Geometry&);

IntensityWindow intensity_window(const Volume& v) {
  const auto d = v.data();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  return {*lo, *hi};
}

Volume apply_intensity(const IntensityOp& op, const Volume& v) {
  if (op.is_identity()) return v;
  const IntensityWindow w = intensity_window(v);
  if (!(w.hi > w.lo)) return v;
  const double lo = w.lo;
  const double range = static_cast<double>(w.hi) - lo;
  Volume out = v;
  for (auto& value : out.data()) {
    const double u = (value - lo) / range;
    double mapped;
    if (op.kind == IntensityOp::Kind::gamma) {
      mapped = std::pow(std::max(u, 0.0), op.gamma);
    } else {
      mapped = op.scale * u + op.shift;
    }
    value = static_cast<float>(lo + mapped * range);
  }
  return out;
}

Volume apply_fwd(const TtaTransform& t, const Volume& v) {
  return apply_intensity(t.intensity, apply_fwd_geom(t, v));
}

std::vector<ProbMap> tta_infer(const Segmenter& seg, const Volume& v, const TtaEnsemble& e) {
  if (e.transforms.empty()) return {};
  std::vector<Volume> moved;
  moved.reserve(e.size());
  for (const TtaTransform& t : e.transforms) moved.push_back(apply_fwd(t, v));
  std::vector<ProbMap> preds;
  try {
    preds = seg.predict_many(moved);
  } catch (const BatchItemError& ex) {
    const std::size_t i = std::min(ex.index(), e.size() - 1);
    throw SegmenterError(e.transforms[i].id, ex.what());
  } catch (const std::exception& ex) {
    throw SegmenterError(e.transforms.front().id, ex.what());
  }
  if (preds.size() != moved.size()) {
    throw SegmenterError(e.transforms[std::min(preds.size(), moved.size() - 1)].id,
                         "segmenter returned " + std::to_string(preds.size()) + " predictions for " +
                             std::to_string(moved.size()) + " inputs");
  }
  std::vector<ProbMap> out;
  out.reserve(e.size());
  for (std::size_t i = 0; i < moved.size(); ++i) {
    const TtaTransform& t = e.transforms[i];
    if (!(preds[i].geometry() == moved[i].geometry())) {
      throw SegmenterError(t.id, "prediction geometry " + preds[i].geometry().describe() +
                                     " differs from input " + moved[i].geometry().describe());
    }
    out.push_back(apply_inv_geom(t, preds[i], v.geometry()));
  }
  return out;
}

json to_json(const TtaTransform& t) {
  json flips = json::array();
  static constexpr const char* names[3] = {"z", "y", "x"};
  for (int a = 0; a < 3; ++a)
    if (t.flip[a]) flips.push_back(names[a]);
  json params = json::object();
  if (t.intensity.kind == IntensityOp::Kind::gamma) params["gamma"] = t.intensity.gamma;
  if (t.intensity.kind == IntensityOp::Kind::linear) {
    params["scale"] = t.intensity.scale;
    params["shift"] = t.intensity.shift;
  }
  return json{{"id", t.id},
              {"flip_axes", flips},
              {"rot90_k", t.rot90_k},
              {"transpose_yx", t.transpose_yx},
              {"intensity_op", kind_name(t.intensity.kind)},
              {"params", params},
              {"seed", t.seed}};
}

json to_json(const TtaEnsemble& e) {
  json arr = json::array();
  for (const auto& t : e.transforms) arr.push_back(to_json(t));
  return arr;
}

json to_json(const TtaConfig& c) {
  return json{{"gamma_min", c.gamma_min}, {"gamma_max", c.gamma_max}, {"scale_min", c.scale_min},
              {"scale_max", c.scale_max}, {"shift_min", c.shift_min}, {"shift_max", c.shift_max}};
}

TtaConfig tta_config_from_json(const json& j) {
  TtaConfig c;
  c.gamma_min = j.value("gamma_min", c.gamma_min);
  c.gamma_max = j.value("gamma_max", c.gamma_max);
  c.scale_min = j.value("scale_min", c.scale_min);
  c.scale_max = j.value("scale_max", c.scale_max);
  c.shift_min = j.value("shift_min", c.shift_min);
  c.shift_max = j.value("shift_max", c.shift_max);
  return c;
}

TtaTransform transform_from_json(const json& j) {
  TtaTransform t;
  try {
    t.id = j.at("id").get<int>();
    for (const auto& a : j.at("flip_axes")) {
      const auto s = a.get<std::string>();
      if (s == "z") t.flip[0] = true;
      else if (s == "y") t.flip[1] = true;
      else if (s == "x") t.flip[2] = true;
      else throw ValidationError("unknown flip axis '" + s + "'");
    }
    t.rot90_k = j.at("rot90_k").get<int>();
    if (t.rot90_k < 0 || t.rot90_k > 3) throw ValidationError("rot90_k must be 0..3");
    t.transpose_yx = j.at("transpose_yx").get<bool>();
    const auto kind = j.at("intensity_op").get<std::string>();
    const json& params = j.at("params");
    if (kind == "none") {
      t.intensity.kind = IntensityOp::Kind::none;
    } else if (kind == "gamma") {
      t.intensity.kind = IntensityOp::Kind::gamma;
      t.intensity.gamma = params.at("gamma").get<double>();
      if (!(t.intensity.gamma > 0.0)) throw ValidationError("gamma must be positive");
    } else if (kind == "linear") {
      t.intensity.kind = IntensityOp::Kind::linear;
      t.intensity.scale = params.at("scale").get<double>();
      t.intensity.shift = params.at("shift").get<double>();
      if (!(t.intensity.scale > 0.0)) throw ValidationError("linear scale must be positive");
    } else {
      throw ValidationError("unknown intensity op '" + kind + "'");
    }
    t.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    throw ValidationError(std::string("ensemble manifest entry: ") + ex.what());
  }
  return t;
}

TtaEnsemble ensemble_from_json(const json& j) {
  TtaEnsemble e;
  for (const auto& item : j) e.transforms.push_back(transform_from_json(item));
  return e;
}

}  // namespace ttaloop
