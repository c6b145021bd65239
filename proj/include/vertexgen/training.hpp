#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vertexgen/checkpoint.hpp"
#include "vertexgen/datagen.hpp"
#include "vertexgen/denoiser.hpp"
#include "vertexgen/diffusion.hpp"

#include <nlohmann/json.hpp>

namespace vgen {

struct TrainConfig {
  std::string paradigm = "parallel";  // parallel | sequential
  int epochs = 30;
  int batch_size = 32;
  double lr = 5e-4;
  double weight_decay = 5e-2;
  double lr_decay_frac = 0.6;    // fraction of total steps after which lr drops
  double lr_decay_factor = 0.1;  // multiplier applied after the drop
  int t_train = 1000;
  int infer_steps = 4;
  int n_points = 36;
  double w_center = 1.0;
  double w_point = 1.0;
  double w_geom = 1.0;  // 0 disables the angle-map loss
  bool center_anchor = true;
  double anchor_jitter = 2.0;  // training anchor jitter, in heatmap cells
  uint64_t seed = 1;
  int model_dim = 64;
  int blocks = 2;
  int heads = 4;
  int heatmap_res = 64;
  int angle_grid = 64;
  int trunk_hidden = 96;
  int query_embed_dim = 32;
  int raster_res = 256;
  int n_bins = 64;  // sequential-baseline coordinate bins
  int checkpoint_every = 0;  // steps between checkpoints; 0 = end of run only
  int log_every = 1;

  // Round-trips through JSON with exactly these keys; unknown keys rejected.
  static TrainConfig from_json(const nlohmann::ordered_json& j);
  nlohmann::ordered_json to_json() const;
  // Applies one "key=value" override (CLI --set).
  void set_key(const std::string& key, const std::string& value);
  void validate() const;

  int tokens() const { return n_points + 2; }
  int vertex_dim() const { return 2 * n_points + 4; }
};

double lr_at_step(const TrainConfig& cfg, int64_t global_step, int64_t total_steps);

struct ParallelModel {
  TrainConfig cfg;
  ParamStore<float> store;
  DiffusionSchedule schedule;
  std::unique_ptr<ConditionEmbedder<float>> cond;
  std::unique_ptr<Denoiser<float>> denoiser;
  std::unique_ptr<CenterHead<float>> head;  // null when center_anchor is off

  static std::unique_ptr<ParallelModel> create(const TrainConfig& cfg);
};

void save_parallel(const ParallelModel& m, AdamW<float>* opt, int64_t global_step,
                   const std::string& path);
std::unique_ptr<ParallelModel> load_parallel(const std::string& path, AdamW<float>* opt = nullptr,
                                             int64_t* global_step = nullptr);

// Per-sample precomputed training inputs (anchor-independent parts cached
// once; normalization against the per-step anchor stays cheap).
struct SampleCache {
  int64_t scene_id = 0;
  std::vector<Vec2> scene_points;  // box lt, box rb, then n contour points (scene units)
  CenterAnchor base_anchor;        // ground-truth box center
  std::vector<float> heat_target;  // flattened gaussian target
  std::shared_ptr<AngleMap> angle_target;
  std::vector<uint8_t> raster;
  std::vector<float> shape_tokens;
  std::vector<float> query_feats;
};

SampleCache build_sample_cache(const SceneSample& s, const TrainConfig& cfg);

struct LossParts {
  double center = 0.0;
  double point = 0.0;
  double geom = 0.0;
  double total = 0.0;
};

LossParts train_step_parallel(ParallelModel& m, AdamW<float>& opt,
                              const std::vector<const SampleCache*>& batch, int64_t global_step,
                              int64_t total_steps);

// Ground-truth anchor with the per-step training jitter applied (both
// paradigms train against slightly perturbed anchors so they learn to
// condition on the imperfect anchors seen at inference).
CenterAnchor training_anchor(const SampleCache& sc, const TrainConfig& cfg, int64_t global_step,
                             int slot);
// Stored-value vertex vector (box lt, rb, contour; values in [0, 1]) of the
// cached scene points under the given anchor.
std::vector<double> normalized_vertex_vector(const SampleCache& sc, const CenterAnchor& anchor);
// Batched focal-loss graph over the center heatmap; shared by both paradigms.
Tape<float>::Id center_loss_graph(Tape<float>& tape, const CenterHead<float>& head,
                                  const std::vector<const SampleCache*>& batch, int heatmap_res);
// Heatmap-peak anchor for a scene; falls back to the grid center without a head.
CenterAnchor predict_center_with(const TrainConfig& cfg, const CenterHead<float>* head,
                                 const SceneSample& s);

// Full inference result for one scene.
struct Prediction {
  CenterAnchor anchor;
  std::vector<double> vertex_vector;  // stored [0,1] values, 4 + 2N
  std::vector<Vec2> points;           // scene units: box lt, box rb, contour
  uint64_t attention_flops = 0;
  bool padded = false;  // sequential decode ended early and was padded
};

CenterAnchor predict_center(const ParallelModel& m, const SceneSample& s);
// trace, when given, receives the decoded points after every denoising step.
Prediction predict_parallel(const ParallelModel& m, const SceneSample& s, int steps,
                            uint64_t seed, std::vector<std::vector<Vec2>>* trace = nullptr);

struct FitReport {
  int64_t global_step = 0;
  LossParts last;
  std::string checkpoint_path;
  std::string metrics_path;
};

// Training loop with per-step JSONL metrics and resumable checkpoints.
// Dispatches on cfg.paradigm.
FitReport fit(const TrainConfig& cfg, const std::vector<SceneSample>& data,
              const std::string& out_dir, const std::string& resume_path = "");

// Differentiable angle-map loss: mean over grid cells of the squared
// angle-sum mismatch, scaled by 1/360^2. scene_pts is an [n, 2] node of
// scene-unit contour vertices.
template <class S>
typename Tape<S>::Id angle_loss_node(Tape<S>& tape, typename Tape<S>::Id scene_pts,
                                     std::shared_ptr<const AngleMap> target);

extern template Tape<float>::Id angle_loss_node<float>(Tape<float>&, Tape<float>::Id,
                                                       std::shared_ptr<const AngleMap>);
extern template Tape<double>::Id angle_loss_node<double>(Tape<double>&, Tape<double>::Id,
                                                         std::shared_ptr<const AngleMap>);

}  // namespace vgen
