#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vertexgen/anchor.hpp"
#include "vertexgen/geometry.hpp"

namespace vgen {

inline constexpr int kShapeKindCount = 6;
inline constexpr int kColorCount = 8;
inline constexpr int kShapeFeatureDim = 19;  // kind 6 | color 8 | center 2 | scale 1 | rot 2
inline constexpr int kQueryFeatureDim = 24;  // selector 4 | color 8 | kind 6 | size 2 | pos 4
inline constexpr int kCellFeatureDim = 38;   // color 9 | coords 2 | 3 windows x 9 fractions
inline constexpr int kSceneRasterRes = 64;

enum ShapeKind { kCircle = 0, kEllipse, kTriangle, kRectangle, kStar, kBlob };
enum QueryKind { kByColor = 0, kByKind, kBySupSize, kBySupPosition };

struct ShapeSpec {
  int kind = kCircle;
  int color = 0;
  Vec2 center{0.5, 0.5};  // scene units
  double scale = 0.1;     // bounding-circle radius before blob modulation
  double rotation = 0.0;
  std::vector<double> blob_amp;    // harmonics 2..4, blob only
  std::vector<double> blob_phase;
};

// argument: by-color -> color id; by-kind -> kind id; superlative-size ->
// 0 largest / 1 smallest; superlative-position -> 0 top / 1 bottom / 2 left / 3 right.
struct Query {
  int kind = kByColor;
  int argument = 0;
};

struct SceneSample {
  int64_t scene_id = 0;
  std::vector<ShapeSpec> shapes;
  Query query;
  int target_index = 0;
  Polygon gt_polygon = Polygon::make({{0, 0}, {1, 0}, {0, 1}});
  Box gt_box{{0, 0}, {1, 1}};
  Vec2 gt_center{0.5, 0.5};
};

struct DataConfig {
  int min_shapes = 2;
  int max_shapes = 5;
  double min_scale = 0.07;
  double max_scale = 0.18;
  double hard_quota = 0.4;   // fraction of scenes with a forced jagged target
  double star_share = 0.25;  // of the whole: forced-star share (rest of quota is blob)
  double border_margin = 0.03;
  double min_gap = 0.01;          // bounding-circle clearance between shapes
  double size_margin = 1.15;      // scale ratio for superlative-size queries
  double position_margin = 0.06;  // center separation for superlative-position queries
};

Polygon shape_polygon(const ShapeSpec& s);
double shape_radius(const ShapeSpec& s);

SceneSample generate_scene(uint64_t seed, int64_t scene_id, const DataConfig& cfg);
std::vector<SceneSample> generate(uint64_t seed, int count, const DataConfig& cfg = {});

// Margin-free query semantics; the generator guarantees a unique match.
bool query_matches(const SceneSample& s, const Query& q, int shape_index);

std::vector<float> encode_shape_tokens(const SceneSample& s);  // [n_shapes * 19]
std::vector<float> encode_query_features(const Query& q);      // [24]

struct GroundTruthPack {
  std::vector<double> vertex_vector;  // 4 box values then 2N contour values, all in [0,1]
  Heatmap heatmap_target;
  AngleMap angle_map_target;
};

// Anchor at the ground-truth box center, in cells of a grid_res heatmap.
CenterAnchor gt_anchor(const SceneSample& s, int grid_res);
GroundTruthPack build_ground_truth(const SceneSample& s, const CenterAnchor& anchor, int n_points,
                                   int heatmap_res, int angle_res);

// Stored vertex vector -> scene-unit points: box lt, box rb, then contour.
std::vector<Vec2> decode_vertex_vector(const std::vector<double>& vv, const CenterAnchor& anchor);

// Scene raster: color_id + 1 per covered cell, 0 for background.
std::vector<uint8_t> rasterize_scene(const SceneSample& s, int res);
// Per-cell features for the heatmap head: local color one-hot, normalized
// cell coordinates, and color fractions over 3x3 / 7x7 / 15x15 windows.
std::vector<float> cell_features(const std::vector<uint8_t>& raster, int res);
std::vector<float> cell_features_serial(const std::vector<uint8_t>& raster, int res);

void save_dataset(const std::string& path, const std::vector<SceneSample>& data);
std::vector<SceneSample> load_dataset(const std::string& path);

}  // namespace vgen
