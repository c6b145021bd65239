#include "vertexgen/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <stdexcept>

#include "vertexgen/parallel.hpp"
#include "vertexgen/rng.hpp"

#include <nlohmann/json.hpp>

namespace vgen {

using nlohmann::ordered_json;

namespace {

constexpr double kEllipseAspect = 0.6;
constexpr double kRectAspect = 0.65;
constexpr double kStarInnerRatio = 0.45;
constexpr int kRoundVertices = 64;  // circle / ellipse / blob resolution
constexpr int kStarPoints = 5;

Vec2 rotate(Vec2 p, double c, double s) { return {p.i * c - p.j * s, p.i * s + p.j * c}; }

}  // namespace

Polygon shape_polygon(const ShapeSpec& s) {
  std::vector<Vec2> pts;
  switch (s.kind) {
    case kCircle:
    case kEllipse: {
      double b = s.kind == kEllipse ? kEllipseAspect * s.scale : s.scale;
      for (int k = 0; k < kRoundVertices; ++k) {
        double th = 2.0 * kPi * k / kRoundVertices;
        pts.push_back({s.scale * std::cos(th), b * std::sin(th)});
      }
      break;
    }
    case kTriangle:
      for (int m = 0; m < 3; ++m) {
        double th = 2.0 * kPi * m / 3;
        pts.push_back({s.scale * std::cos(th), s.scale * std::sin(th)});
      }
      break;
    case kRectangle: {
      double c = 1.0 / std::sqrt(1.0 + kRectAspect * kRectAspect);
      double hi = s.scale * c, hj = kRectAspect * s.scale * c;
      pts = {{hi, hj}, {-hi, hj}, {-hi, -hj}, {hi, -hj}};
      break;
    }
    case kStar:
      for (int m = 0; m < 2 * kStarPoints; ++m) {
        double r = (m % 2 == 0) ? s.scale : kStarInnerRatio * s.scale;
        double th = kPi * m / kStarPoints;
        pts.push_back({r * std::cos(th), r * std::sin(th)});
      }
      break;
    case kBlob: {
      if (s.blob_amp.size() != 3 || s.blob_phase.size() != 3)
        throw std::invalid_argument("blob shape needs 3 harmonic amplitudes and phases");
      for (int k = 0; k < kRoundVertices; ++k) {
        double th = 2.0 * kPi * k / kRoundVertices;
        double r = 1.0;
        for (int h = 0; h < 3; ++h) r += s.blob_amp[size_t(h)] * std::sin((h + 2) * th + s.blob_phase[size_t(h)]);
        r *= s.scale;
        pts.push_back({r * std::cos(th), r * std::sin(th)});
      }
      break;
    }
    default:
      throw std::invalid_argument("unknown shape kind");
  }
  double c = std::cos(s.rotation), sn = std::sin(s.rotation);
  for (Vec2& p : pts) p = rotate(p, c, sn) + s.center;
  return Polygon::make(std::move(pts));
}

double shape_radius(const ShapeSpec& s) {
  if (s.kind != kBlob) return s.scale;
  double amp = 0.0;
  for (double a : s.blob_amp) amp += std::abs(a);
  return s.scale * (1.0 + amp);
}

namespace {

bool superlative_holds(const SceneSample& s, int idx, int arg, bool positional) {
  const auto& me = s.shapes[size_t(idx)];
  for (int k = 0; k < int(s.shapes.size()); ++k) {
    if (k == idx) continue;
    const auto& other = s.shapes[size_t(k)];
    bool ok = true;
    if (!positional)
      ok = arg == 0 ? me.scale > other.scale : me.scale < other.scale;
    else
      switch (arg) {
        case 0: ok = me.center.i < other.center.i; break;
        case 1: ok = me.center.i > other.center.i; break;
        case 2: ok = me.center.j < other.center.j; break;
        case 3: ok = me.center.j > other.center.j; break;
        default: return false;
      }
    if (!ok) return false;
  }
  return true;
}

std::optional<SceneSample> try_scene(Rng& rng, int64_t scene_id, const DataConfig& cfg) {
  SceneSample s;
  s.scene_id = scene_id;
  int n = rng.uniform_int(cfg.min_shapes, cfg.max_shapes);

  int palette[kColorCount];
  for (int k = 0; k < kColorCount; ++k) palette[k] = k;
  for (int k = kColorCount - 1; k > 0; --k)
    std::swap(palette[k], palette[rng.uniform_int(0, k)]);

  s.target_index = rng.uniform_int(0, n - 1);
  double hard_draw = rng.uniform();
  int forced_kind = -1;
  if (hard_draw < cfg.star_share)
    forced_kind = kStar;
  else if (hard_draw < cfg.hard_quota)
    forced_kind = kBlob;

  for (int slot = 0; slot < n; ++slot) {
    ShapeSpec sh;
    sh.color = palette[slot];
    bool is_target = slot == s.target_index;
    sh.kind = (is_target && forced_kind >= 0) ? forced_kind : rng.uniform_int(0, kShapeKindCount - 1);
    auto roll_geometry = [&] {
      sh.scale = rng.uniform(cfg.min_scale, cfg.max_scale);
      sh.rotation = rng.uniform(0.0, 2.0 * kPi);
      sh.blob_amp.clear();
      sh.blob_phase.clear();
      if (sh.kind == kBlob)
        for (int h = 0; h < 3; ++h) {
          sh.blob_amp.push_back(rng.uniform(0.04, 0.11));
          sh.blob_phase.push_back(rng.uniform(0.0, 2.0 * kPi));
        }
    };
    roll_geometry();
    if (is_target && forced_kind == kBlob) {
      // A forced-hard blob must actually land in the hard regime.
      for (int tries = 0; difficulty_degree(shape_polygon(sh)) <= kHardSampleThreshold; ++tries) {
        if (tries >= 20) {
          sh.kind = kStar;
          roll_geometry();
          break;
        }
        roll_geometry();
      }
    }

    double radius = shape_radius(sh);
    double lo = cfg.border_margin + radius, hi = 1.0 - cfg.border_margin - radius;
    if (lo >= hi) return std::nullopt;
    bool placed = false;
    for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
      sh.center = {rng.uniform(lo, hi), rng.uniform(lo, hi)};
      placed = true;
      for (const ShapeSpec& other : s.shapes) {
        double need = radius + shape_radius(other) + cfg.min_gap;
        if (norm(sh.center - other.center) <= need) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) return std::nullopt;
    s.shapes.push_back(std::move(sh));
  }

  const ShapeSpec& target = s.shapes[size_t(s.target_index)];
  std::vector<std::pair<int, int>> candidates;
  candidates.emplace_back(kByColor, target.color);
  int kind_count = 0;
  for (const auto& sh : s.shapes) kind_count += sh.kind == target.kind;
  if (kind_count == 1) candidates.emplace_back(kByKind, target.kind);
  for (int arg = 0; arg < 2; ++arg) {
    bool ok = true;
    for (int k = 0; k < n && ok; ++k) {
      if (k == s.target_index) continue;
      double other = s.shapes[size_t(k)].scale;
      ok = arg == 0 ? target.scale >= cfg.size_margin * other
                    : cfg.size_margin * target.scale <= other;
    }
    if (ok) candidates.emplace_back(kBySupSize, arg);
  }
  for (int arg = 0; arg < 4; ++arg) {
    bool ok = true;
    for (int k = 0; k < n && ok; ++k) {
      if (k == s.target_index) continue;
      Vec2 o = s.shapes[size_t(k)].center;
      Vec2 t = target.center;
      switch (arg) {
        case 0: ok = t.i + cfg.position_margin <= o.i; break;
        case 1: ok = t.i >= o.i + cfg.position_margin; break;
        case 2: ok = t.j + cfg.position_margin <= o.j; break;
        case 3: ok = t.j >= o.j + cfg.position_margin; break;
      }
    }
    if (ok) candidates.emplace_back(kBySupPosition, arg);
  }
  auto pick = candidates[size_t(rng.uniform_int(0, int(candidates.size()) - 1))];
  s.query = {pick.first, pick.second};

  s.gt_polygon = shape_polygon(target);
  Vec2 lt{1e30, 1e30}, rb{-1e30, -1e30};
  for (const Vec2& p : s.gt_polygon.pts()) {
    lt.i = std::min(lt.i, p.i);
    lt.j = std::min(lt.j, p.j);
    rb.i = std::max(rb.i, p.i);
    rb.j = std::max(rb.j, p.j);
  }
  s.gt_box = Box::make(lt, rb);
  s.gt_center = (lt + rb) * 0.5;
  return s;
}

}  // namespace

SceneSample generate_scene(uint64_t seed, int64_t scene_id, const DataConfig& cfg) {
  Rng rng = Rng::derive(seed, "scene", uint64_t(scene_id));
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto s = try_scene(rng, scene_id, cfg);
    if (s) return std::move(*s);
  }
  throw std::runtime_error("scene generation: placement failed repeatedly");
}

std::vector<SceneSample> generate(uint64_t seed, int count, const DataConfig& cfg) {
  if (count < 1) throw std::invalid_argument("generate: count must be >= 1");
  std::vector<SceneSample> out(static_cast<size_t>(count));
  parallel_for(count, [&](int id) { out[size_t(id)] = generate_scene(seed, id, cfg); });
  return out;
}

bool query_matches(const SceneSample& s, const Query& q, int shape_index) {
  const auto& sh = s.shapes[size_t(shape_index)];
  switch (q.kind) {
    case kByColor: return sh.color == q.argument;
    case kByKind: return sh.kind == q.argument;
    case kBySupSize: return superlative_holds(s, shape_index, q.argument, false);
    case kBySupPosition: return superlative_holds(s, shape_index, q.argument, true);
    default: throw std::invalid_argument("unknown query kind");
  }
}

std::vector<float> encode_shape_tokens(const SceneSample& s) {
  std::vector<float> out;
  out.reserve(s.shapes.size() * kShapeFeatureDim);
  for (const auto& sh : s.shapes) {
    float f[kShapeFeatureDim] = {};
    f[sh.kind] = 1.0f;
    f[kShapeKindCount + sh.color] = 1.0f;
    f[14] = float(sh.center.i);
    f[15] = float(sh.center.j);
    f[16] = float(sh.scale);
    f[17] = float(std::sin(sh.rotation));
    f[18] = float(std::cos(sh.rotation));
    out.insert(out.end(), f, f + kShapeFeatureDim);
  }
  return out;
}

std::vector<float> encode_query_features(const Query& q) {
  std::vector<float> f(kQueryFeatureDim, 0.0f);
  f[size_t(q.kind)] = 1.0f;
  switch (q.kind) {
    case kByColor: f[size_t(4 + q.argument)] = 1.0f; break;
    case kByKind: f[size_t(12 + q.argument)] = 1.0f; break;
    case kBySupSize: f[size_t(18 + q.argument)] = 1.0f; break;
    case kBySupPosition: f[size_t(20 + q.argument)] = 1.0f; break;
    default: throw std::invalid_argument("unknown query kind");
  }
  return f;
}

CenterAnchor gt_anchor(const SceneSample& s, int grid_res) {
  return {{s.gt_center.i * grid_res, s.gt_center.j * grid_res}, double(grid_res), double(grid_res)};
}

GroundTruthPack build_ground_truth(const SceneSample& s, const CenterAnchor& anchor, int n_points,
                                   int heatmap_res, int angle_res) {
  GroundTruthPack pack;
  Polygon contour = sample_contour_vertices(s.gt_polygon, n_points);

  double res_i = anchor.h, res_j = anchor.w;
  auto store = [&](Vec2 scene_pt) {
    Vec2 v = normalize_point({scene_pt.i * res_i, scene_pt.j * res_j}, anchor);
    pack.vertex_vector.push_back(v.i);
    pack.vertex_vector.push_back(v.j);
  };
  store(s.gt_box.lt);
  store(s.gt_box.rb);
  for (const Vec2& p : contour.pts()) store(p);

  Vec2 center_cells{s.gt_center.i * heatmap_res, s.gt_center.j * heatmap_res};
  Vec2 box_cells{(s.gt_box.rb.i - s.gt_box.lt.i) * heatmap_res,
                 (s.gt_box.rb.j - s.gt_box.lt.j) * heatmap_res};
  pack.heatmap_target = gaussian_target(center_cells, box_cells, heatmap_res, heatmap_res);
  pack.angle_map_target = angle_map(contour.pts(), angle_res, angle_res);
  return pack;
}

std::vector<Vec2> decode_vertex_vector(const std::vector<double>& vv, const CenterAnchor& anchor) {
  if (vv.size() < 4 || vv.size() % 2 != 0)
    throw std::invalid_argument("vertex vector must hold the box plus coordinate pairs");
  std::vector<Vec2> out;
  out.reserve(vv.size() / 2);
  for (size_t k = 0; k + 1 < vv.size(); k += 2) {
    Vec2 cells = denormalize_point({vv[k], vv[k + 1]}, anchor);
    out.push_back({cells.i / anchor.h, cells.j / anchor.w});
  }
  return out;
}

std::vector<uint8_t> rasterize_scene(const SceneSample& s, int res) {
  std::vector<uint8_t> grid(size_t(res) * res, 0);
  for (const auto& sh : s.shapes) {
    BinaryMask m = rasterize(shape_polygon(sh), res, res);
    uint8_t paint = uint8_t(sh.color + 1);
    for (size_t k = 0; k < grid.size(); ++k)
      if (m.v[k]) grid[k] = paint;
  }
  return grid;
}

namespace {

std::vector<float> cell_features_impl(const std::vector<uint8_t>& raster, int res, bool parallel) {
  if (int64_t(raster.size()) != int64_t(res) * res)
    throw std::invalid_argument("cell_features: raster size mismatch");
  constexpr int kClasses = kColorCount + 1;
  constexpr int kWindows[3] = {3, 7, 15};

  // Per-class integral images over the raster, (res+1)^2 each.
  int stride = res + 1;
  std::vector<int> integral(size_t(kClasses) * stride * stride, 0);
  for (int k = 0; k < kClasses; ++k) {
    int* ii = integral.data() + size_t(k) * stride * stride;
    for (int r = 0; r < res; ++r)
      for (int c = 0; c < res; ++c)
        ii[(r + 1) * stride + c + 1] = ii[r * stride + c + 1] + ii[(r + 1) * stride + c] -
                                       ii[r * stride + c] + (raster[size_t(r) * res + c] == k);
  }

  std::vector<float> out(size_t(res) * res * kCellFeatureDim, 0.0f);
  auto body = [&](int r) {
    for (int c = 0; c < res; ++c) {
      float* f = out.data() + (size_t(r) * res + c) * kCellFeatureDim;
      f[raster[size_t(r) * res + c]] = 1.0f;
      f[kClasses] = float((r + 0.5) / res);
      f[kClasses + 1] = float((c + 0.5) / res);
      int off = kClasses + 2;
      for (int win : kWindows) {
        int half = win / 2;
        int r0 = std::max(0, r - half), r1 = std::min(res, r + half + 1);
        int c0 = std::max(0, c - half), c1 = std::min(res, c + half + 1);
        float inv_area = 1.0f / float((r1 - r0) * (c1 - c0));
        for (int k = 0; k < kClasses; ++k) {
          const int* ii = integral.data() + size_t(k) * stride * stride;
          int sum = ii[r1 * stride + c1] - ii[r0 * stride + c1] - ii[r1 * stride + c0] +
                    ii[r0 * stride + c0];
          f[off + k] = float(sum) * inv_area;
        }
        off += kClasses;
      }
    }
  };
  if (parallel)
    parallel_for(res, body);
  else
    serial_for(res, body);
  return out;
}

}  // namespace

std::vector<float> cell_features(const std::vector<uint8_t>& raster, int res) {
  return cell_features_impl(raster, res, true);
}

std::vector<float> cell_features_serial(const std::vector<uint8_t>& raster, int res) {
  return cell_features_impl(raster, res, false);
}

namespace {

ordered_json sample_to_json(const SceneSample& s) {
  ordered_json j;
  j["v"] = 1;
  j["scene_id"] = s.scene_id;
  ordered_json shapes = ordered_json::array();
  for (const auto& sh : s.shapes) {
    ordered_json e;
    e["kind"] = sh.kind;
    e["color"] = sh.color;
    e["center"] = {sh.center.i, sh.center.j};
    e["scale"] = sh.scale;
    e["rotation"] = sh.rotation;
    if (sh.kind == kBlob) {
      e["blob_amp"] = sh.blob_amp;
      e["blob_phase"] = sh.blob_phase;
    }
    shapes.push_back(std::move(e));
  }
  j["shapes"] = std::move(shapes);
  j["query"] = {{"kind", s.query.kind}, {"arg", s.query.argument}};
  j["target"] = s.target_index;
  std::vector<double> flat;
  for (const Vec2& p : s.gt_polygon.pts()) {
    flat.push_back(p.i);
    flat.push_back(p.j);
  }
  j["gt_polygon"] = std::move(flat);
  j["gt_box"] = {s.gt_box.lt.i, s.gt_box.lt.j, s.gt_box.rb.i, s.gt_box.rb.j};
  j["gt_center"] = {s.gt_center.i, s.gt_center.j};
  return j;
}

SceneSample sample_from_json(const ordered_json& j) {
  if (!j.contains("v") || !j["v"].is_number_integer() || j["v"].get<int>() != 1)
    throw std::runtime_error("dataset record: unsupported format version");
  SceneSample s;
  s.scene_id = j.at("scene_id").get<int64_t>();
  for (const auto& e : j.at("shapes")) {
    ShapeSpec sh;
    sh.kind = e.at("kind").get<int>();
    sh.color = e.at("color").get<int>();
    auto c = e.at("center").get<std::vector<double>>();
    sh.center = {c.at(0), c.at(1)};
    sh.scale = e.at("scale").get<double>();
    sh.rotation = e.at("rotation").get<double>();
    if (e.contains("blob_amp")) {
      sh.blob_amp = e.at("blob_amp").get<std::vector<double>>();
      sh.blob_phase = e.at("blob_phase").get<std::vector<double>>();
    }
    if (sh.kind < 0 || sh.kind >= kShapeKindCount || sh.color < 0 || sh.color >= kColorCount)
      throw std::runtime_error("dataset record: shape field out of range");
    s.shapes.push_back(std::move(sh));
  }
  s.query.kind = j.at("query").at("kind").get<int>();
  s.query.argument = j.at("query").at("arg").get<int>();
  s.target_index = j.at("target").get<int>();
  if (s.target_index < 0 || s.target_index >= int(s.shapes.size()))
    throw std::runtime_error("dataset record: target index out of range");
  auto flat = j.at("gt_polygon").get<std::vector<double>>();
  if (flat.size() < 6 || flat.size() % 2 != 0)
    throw std::runtime_error("dataset record: malformed polygon");
  std::vector<Vec2> pts;
  for (size_t k = 0; k + 1 < flat.size(); k += 2) pts.push_back({flat[k], flat[k + 1]});
  s.gt_polygon = Polygon::make(std::move(pts));
  auto box = j.at("gt_box").get<std::vector<double>>();
  s.gt_box = Box::make({box.at(0), box.at(1)}, {box.at(2), box.at(3)});
  auto ctr = j.at("gt_center").get<std::vector<double>>();
  s.gt_center = {ctr.at(0), ctr.at(1)};
  return s;
}

}  // namespace

void save_dataset(const std::string& path, const std::vector<SceneSample>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("dataset: cannot open for write: " + path);
  for (const auto& s : data) out << sample_to_json(s).dump() << '\n';
  if (!out) throw std::runtime_error("dataset: write failed: " + path);
}

std::vector<SceneSample> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("dataset: cannot open: " + path);
  std::vector<SceneSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(sample_from_json(ordered_json::parse(line)));
  }
  return out;
}

}  // namespace vgen
