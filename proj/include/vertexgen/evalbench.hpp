#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vertexgen/seqgen.hpp"
#include "vertexgen/training.hpp"

namespace vgen {

struct EvalOptions {
  int steps = kDefaultSampleSteps;  // diffusion steps (parallel paradigm only)
  uint64_t seed = 1;
  int raster_res = 256;  // mask IoU rasterization resolution
  bool timing = false;   // measure per-sample latency (excluded from reports otherwise)
  int warmup = 2;        // discarded timed iterations when timing
};

struct SampleRecord {
  int64_t scene_id = 0;
  double iou = 0.0;      // mask IoU at raster_res
  double box_iou = 0.0;
  bool det = false;      // box_iou > 0.5
  double difficulty = 0.0;
  uint64_t attention_flops = 0;
  bool padded = false;
  double latency_ms = 0.0;  // only meaningful when the run timed
};

struct EvalReport {
  double mask_iou_mean = 0.0;
  double det_acc = 0.0;   // fraction of samples with box_iou > 0.5
  double mask_acc = 0.0;  // fraction of samples with mask IoU > 0.5
  double hard_mask_iou_mean = 0.0;  // mean IoU over difficulty > threshold
  int hard_count = 0;
  int count = 0;
  int warmup_discarded = 0;
  bool has_timing = false;
  double latency_mean_ms = 0.0, latency_p50_ms = 0.0, latency_p95_ms = 0.0;
  std::vector<SampleRecord> records;
  nlohmann::ordered_json config;  // echo of the resolved run configuration
};

using PredictFn = std::function<Prediction(const SceneSample&, uint64_t seed)>;

// Core loop: per sample, predict -> rasterize at raster_res -> metrics.
// Deterministic given opt.seed (latency fields aside).
EvalReport evaluate_with(const PredictFn& predict, const std::vector<SceneSample>& data,
                         const EvalOptions& opt, nlohmann::ordered_json config_echo);

EvalReport evaluate_parallel(const ParallelModel& m, const std::vector<SceneSample>& data,
                             const EvalOptions& opt);
EvalReport evaluate_sequential(const SequentialModel& m, const std::vector<SceneSample>& data,
                               const EvalOptions& opt);
// Ground truth pushed through the full normalize -> store -> decode -> raster
// pipeline; bounds the representation loss of the pipeline itself.
EvalReport evaluate_oracle(const std::vector<SceneSample>& data, const EvalOptions& opt,
                           int n_points = kDefaultContourPoints,
                           int heatmap_res = kDefaultHeatmapRes);

nlohmann::ordered_json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::ordered_json& j);

// Normalized 2-D histogram over (difficulty, IoU). density is row-major
// [bins x bins]; row 0 is the highest-IoU band (ready for heat map display),
// columns run from difficulty 0 to 1.
struct DensityGrid {
  int bins = 16;
  std::vector<double> density;
  double hard_mean_iou = 0.0;  // conditional mean IoU for difficulty > threshold
  int hard_count = 0;
};
DensityGrid difficulty_density(const EvalReport& r, int bins = 16);
std::string density_svg(const DensityGrid& g, const std::string& title);

struct SweepRow {
  int n_points = 0;
  double mask_iou = 0.0;
  double det_acc = 0.0;
  double latency_mean_ms = 0.0;
  double attention_flops_mean = 0.0;
};

struct SweepResult {
  std::string paradigm;
  std::vector<SweepRow> rows;
  std::vector<EvalReport> reports;  // one per row
};

// Trains one model per point count (seeded identically) and evaluates it with
// timing on. Artifacts land under out_dir/<paradigm>-n<N>/.
SweepResult scaling_sweep(const std::string& paradigm, const std::vector<int>& point_counts,
                          const TrainConfig& base, const std::vector<SceneSample>& train_data,
                          const std::vector<SceneSample>& eval_data, const EvalOptions& eopt,
                          const std::string& out_dir);

nlohmann::ordered_json sweep_to_json(const std::vector<SweepResult>& results);
std::string sweep_iou_svg(const std::vector<SweepResult>& results);
std::string sweep_latency_svg(const std::vector<SweepResult>& results);

struct AblationRow {
  std::string name;  // neither | cam | asl | both
  bool cam = false;
  bool asl = false;
  double det_acc = 0.0;
  double mask_acc = 0.0;
  double mask_iou = 0.0;
};

// Trains the four center-anchor x angle-loss variants with paired seeds and
// evaluates each. Artifacts land under out_dir/ablate-<name>/.
std::vector<AblationRow> ablate(const TrainConfig& base, const std::vector<SceneSample>& train_data,
                                const std::vector<SceneSample>& eval_data, const EvalOptions& eopt,
                                const std::string& out_dir);

nlohmann::ordered_json ablation_to_json(const std::vector<AblationRow>& rows);

}  // namespace vgen
