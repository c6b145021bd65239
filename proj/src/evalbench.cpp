#include "vertexgen/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>

#include "vertexgen/rng.hpp"
#include "vertexgen/svg.hpp"

namespace vgen {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  int idx = int(std::ceil(p * double(v.size()))) - 1;
  return v[size_t(std::clamp(idx, 0, int(v.size()) - 1))];
}

uint64_t sample_seed(uint64_t base, int64_t scene_id) {
  return Rng::derive(base, "eval.sample", uint64_t(scene_id)).next_u64();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

}  // namespace

EvalReport evaluate_with(const PredictFn& predict, const std::vector<SceneSample>& data,
                         const EvalOptions& opt, ordered_json config_echo) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (opt.raster_res < 8) throw std::invalid_argument("evaluate: raster_res too small");
  EvalReport rep;
  rep.config = std::move(config_echo);
  rep.has_timing = opt.timing;
  if (opt.timing) {
    for (int k = 0; k < opt.warmup; ++k) predict(data[0], sample_seed(opt.seed, data[0].scene_id));
    rep.warmup_discarded = opt.warmup;
  }

  double iou_sum = 0.0, hard_sum = 0.0;
  int det_hits = 0, mask_hits = 0;
  std::vector<double> latencies;
  for (const SceneSample& s : data) {
    auto t0 = std::chrono::steady_clock::now();
    Prediction p = predict(s, sample_seed(opt.seed, s.scene_id));
    auto t1 = std::chrono::steady_clock::now();

    SampleRecord r;
    r.scene_id = s.scene_id;
    BinaryMask gt = rasterize(s.gt_polygon, opt.raster_res, opt.raster_res);
    if (p.points.size() < 3) throw InvalidState("evaluate: malformed prediction");
    std::span<const Vec2> contour(p.points.data() + 2, p.points.size() - 2);
    BinaryMask pm = rasterize_points(contour, opt.raster_res, opt.raster_res);
    r.iou = mask_iou(pm, gt);
    Vec2 lt = p.points[0], rb = p.points[1];
    r.box_iou = (rb.i > lt.i && rb.j > lt.j) ? box_iou(Box::make(lt, rb), s.gt_box) : 0.0;
    r.det = r.box_iou > 0.5;
    r.difficulty = difficulty_degree(s.gt_polygon);
    r.attention_flops = p.attention_flops;
    r.padded = p.padded;
    if (opt.timing) {
      r.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      latencies.push_back(r.latency_ms);
    }

    iou_sum += r.iou;
    if (r.det) ++det_hits;
    if (r.iou > 0.5) ++mask_hits;
    if (r.difficulty > kHardSampleThreshold) {
      hard_sum += r.iou;
      ++rep.hard_count;
    }
    rep.records.push_back(r);
  }

  rep.count = int(data.size());
  rep.mask_iou_mean = iou_sum / rep.count;
  rep.det_acc = double(det_hits) / rep.count;
  rep.mask_acc = double(mask_hits) / rep.count;
  rep.hard_mask_iou_mean = rep.hard_count > 0 ? hard_sum / rep.hard_count : 0.0;
  if (opt.timing && !latencies.empty()) {
    double sum = 0.0;
    for (double v : latencies) sum += v;
    rep.latency_mean_ms = sum / double(latencies.size());
    rep.latency_p50_ms = percentile(latencies, 0.50);
    rep.latency_p95_ms = percentile(latencies, 0.95);
  }
  return rep;
}

EvalReport evaluate_parallel(const ParallelModel& m, const std::vector<SceneSample>& data,
                             const EvalOptions& opt) {
  ordered_json echo;
  echo["paradigm"] = "parallel";
  echo["steps"] = opt.steps;
  echo["seed"] = opt.seed;
  echo["raster_res"] = opt.raster_res;
  echo["model"] = m.cfg.to_json();
  PredictFn fn = [&](const SceneSample& s, uint64_t seed) {
    return predict_parallel(m, s, opt.steps, seed);
  };
  return evaluate_with(fn, data, opt, std::move(echo));
}

EvalReport evaluate_sequential(const SequentialModel& m, const std::vector<SceneSample>& data,
                               const EvalOptions& opt) {
  ordered_json echo;
  echo["paradigm"] = "sequential";
  echo["seed"] = opt.seed;
  echo["raster_res"] = opt.raster_res;
  echo["model"] = m.cfg.to_json();
  PredictFn fn = [&](const SceneSample& s, uint64_t) { return predict_sequential(m, s); };
  return evaluate_with(fn, data, opt, std::move(echo));
}

EvalReport evaluate_oracle(const std::vector<SceneSample>& data, const EvalOptions& opt,
                           int n_points, int heatmap_res) {
  ordered_json echo;
  echo["paradigm"] = "oracle";
  echo["seed"] = opt.seed;
  echo["raster_res"] = opt.raster_res;
  echo["n_points"] = n_points;
  echo["heatmap_res"] = heatmap_res;
  PredictFn fn = [&](const SceneSample& s, uint64_t) {
    CenterAnchor anchor = gt_anchor(s, heatmap_res);
    GroundTruthPack pack = build_ground_truth(s, anchor, n_points, heatmap_res, 2);
    Prediction p;
    p.anchor = anchor;
    p.vertex_vector = pack.vertex_vector;
    p.points = decode_vertex_vector(pack.vertex_vector, anchor);
    return p;
  };
  return evaluate_with(fn, data, opt, std::move(echo));
}

ordered_json report_to_json(const EvalReport& r) {
  ordered_json j;
  j["mask_iou_mean"] = r.mask_iou_mean;
  j["det_acc"] = r.det_acc;
  j["mask_acc"] = r.mask_acc;
  j["hard_mask_iou_mean"] = r.hard_mask_iou_mean;
  j["hard_count"] = r.hard_count;
  j["count"] = r.count;
  j["warmup_discarded"] = r.warmup_discarded;
  if (r.has_timing) {
    ordered_json t;
    t["mean"] = r.latency_mean_ms;
    t["p50"] = r.latency_p50_ms;
    t["p95"] = r.latency_p95_ms;
    j["timing_ms"] = t;
  }
  j["config"] = r.config;
  ordered_json samples = ordered_json::array();
  for (const SampleRecord& s : r.records) {
    ordered_json e;
    e["scene_id"] = s.scene_id;
    e["iou"] = s.iou;
    e["box_iou"] = s.box_iou;
    e["det"] = s.det;
    e["difficulty"] = s.difficulty;
    e["attention_flops"] = s.attention_flops;
    e["padded"] = s.padded;
    if (r.has_timing) e["latency_ms"] = s.latency_ms;
    samples.push_back(std::move(e));
  }
  j["samples"] = std::move(samples);
  return j;
}

EvalReport report_from_json(const ordered_json& j) {
  EvalReport r;
  r.mask_iou_mean = j.at("mask_iou_mean").get<double>();
  r.det_acc = j.at("det_acc").get<double>();
  r.mask_acc = j.at("mask_acc").get<double>();
  r.hard_mask_iou_mean = j.value("hard_mask_iou_mean", 0.0);
  r.hard_count = j.value("hard_count", 0);
  r.count = j.at("count").get<int>();
  r.warmup_discarded = j.value("warmup_discarded", 0);
  if (j.contains("timing_ms")) {
    r.has_timing = true;
    r.latency_mean_ms = j["timing_ms"].value("mean", 0.0);
    r.latency_p50_ms = j["timing_ms"].value("p50", 0.0);
    r.latency_p95_ms = j["timing_ms"].value("p95", 0.0);
  }
  if (j.contains("config")) r.config = j.at("config");
  for (const auto& e : j.at("samples")) {
    SampleRecord s;
    s.scene_id = e.at("scene_id").get<int64_t>();
    s.iou = e.at("iou").get<double>();
    s.box_iou = e.at("box_iou").get<double>();
    s.det = e.at("det").get<bool>();
    s.difficulty = e.at("difficulty").get<double>();
    s.attention_flops = e.value("attention_flops", uint64_t(0));
    s.padded = e.value("padded", false);
    s.latency_ms = e.value("latency_ms", 0.0);
    r.records.push_back(s);
  }
  return r;
}

DensityGrid difficulty_density(const EvalReport& r, int bins) {
  if (bins < 1) throw std::invalid_argument("density: bins must be >= 1");
  if (r.records.empty()) throw std::invalid_argument("density: empty report");
  DensityGrid g;
  g.bins = bins;
  g.density.assign(size_t(bins) * bins, 0.0);
  double hard_sum = 0.0;
  for (const SampleRecord& s : r.records) {
    int cd = std::clamp(int(s.difficulty * bins), 0, bins - 1);
    int ci = std::clamp(int(s.iou * bins), 0, bins - 1);
    // Row 0 holds the highest-IoU band so the grid renders upright.
    g.density[size_t(bins - 1 - ci) * bins + cd] += 1.0;
    if (s.difficulty > kHardSampleThreshold) {
      hard_sum += s.iou;
      ++g.hard_count;
    }
  }
  for (double& v : g.density) v /= double(r.records.size());
  g.hard_mean_iou = g.hard_count > 0 ? hard_sum / g.hard_count : 0.0;
  return g;
}

std::string density_svg(const DensityGrid& g, const std::string& title) {
  char note[128];
  std::snprintf(note, sizeof(note), "mean IoU at difficulty > %.1f: %.4f (n=%d)",
                kHardSampleThreshold, g.hard_mean_iou, g.hard_count);
  return heat_map_svg(g.density, g.bins, g.bins, title, note);
}

SweepResult scaling_sweep(const std::string& paradigm, const std::vector<int>& point_counts,
                          const TrainConfig& base, const std::vector<SceneSample>& train_data,
                          const std::vector<SceneSample>& eval_data, const EvalOptions& eopt,
                          const std::string& out_dir) {
  if (paradigm != "parallel" && paradigm != "sequential")
    throw std::invalid_argument("sweep: unknown paradigm " + paradigm);
  SweepResult result;
  result.paradigm = paradigm;
  for (int n : point_counts) {
    TrainConfig cfg = base;
    cfg.paradigm = paradigm;
    cfg.n_points = n;
    std::string run_dir = out_dir + "/" + paradigm + "-n" + std::to_string(n);
    FitReport fitted = fit(cfg, train_data, run_dir);

    EvalReport rep;
    if (paradigm == "parallel") {
      auto m = load_parallel(fitted.checkpoint_path);
      rep = evaluate_parallel(*m, eval_data, eopt);
    } else {
      auto m = load_sequential(fitted.checkpoint_path);
      rep = evaluate_sequential(*m, eval_data, eopt);
    }
    write_text(run_dir + "/report.json", report_to_json(rep).dump(2) + "\n");

    SweepRow row;
    row.n_points = n;
    row.mask_iou = rep.mask_iou_mean;
    row.det_acc = rep.det_acc;
    row.latency_mean_ms = rep.latency_mean_ms;
    double fsum = 0.0;
    for (const SampleRecord& s : rep.records) fsum += double(s.attention_flops);
    row.attention_flops_mean = fsum / double(rep.records.size());
    result.rows.push_back(row);
    result.reports.push_back(std::move(rep));
  }
  return result;
}

ordered_json sweep_to_json(const std::vector<SweepResult>& results) {
  ordered_json j = ordered_json::array();
  for (const SweepResult& r : results) {
    ordered_json e;
    e["paradigm"] = r.paradigm;
    ordered_json rows = ordered_json::array();
    for (const SweepRow& row : r.rows) {
      ordered_json o;
      o["n_points"] = row.n_points;
      o["mask_iou"] = row.mask_iou;
      o["det_acc"] = row.det_acc;
      o["latency_mean_ms"] = row.latency_mean_ms;
      o["attention_flops_mean"] = row.attention_flops_mean;
      rows.push_back(std::move(o));
    }
    e["rows"] = std::move(rows);
    j.push_back(std::move(e));
  }
  return j;
}

namespace {

std::string sweep_plot(const std::vector<SweepResult>& results, const std::string& title,
                       const std::string& y_label, double SweepRow::*field) {
  std::vector<Series> series;
  for (const SweepResult& r : results) {
    Series s;
    s.label = r.paradigm;
    for (const SweepRow& row : r.rows) {
      s.x.push_back(double(row.n_points));
      s.y.push_back(row.*field);
    }
    series.push_back(std::move(s));
  }
  return line_plot_svg(series, title, "contour points", y_label);
}

}  // namespace

std::string sweep_iou_svg(const std::vector<SweepResult>& results) {
  return sweep_plot(results, "mask IoU vs point count", "mask IoU", &SweepRow::mask_iou);
}

std::string sweep_latency_svg(const std::vector<SweepResult>& results) {
  return sweep_plot(results, "per-sample latency vs point count", "latency (ms)",
                    &SweepRow::latency_mean_ms);
}

std::vector<AblationRow> ablate(const TrainConfig& base, const std::vector<SceneSample>& train_data,
                                const std::vector<SceneSample>& eval_data, const EvalOptions& eopt,
                                const std::string& out_dir) {
  struct Variant {
    const char* name;
    bool cam;
    bool asl;
  };
  // Row order follows the diagnostic-table layout: no mechanism, center
  // anchoring only, angle loss only, both.
  const Variant variants[] = {{"neither", false, false},
                              {"cam", true, false},
                              {"asl", false, true},
                              {"both", true, true}};
  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    TrainConfig cfg = base;
    cfg.paradigm = "parallel";
    cfg.center_anchor = v.cam;
    if (!v.asl) cfg.w_geom = 0.0;
    // Anchor jitter only compensates center-prediction error; without the
    // center head the anchor is exact, so jitter is disabled for fairness.
    if (!v.cam) cfg.anchor_jitter = 0.0;
    std::string run_dir = out_dir + "/ablate-" + v.name;
    FitReport fitted = fit(cfg, train_data, run_dir);
    auto m = load_parallel(fitted.checkpoint_path);
    EvalReport rep = evaluate_parallel(*m, eval_data, eopt);
    write_text(run_dir + "/report.json", report_to_json(rep).dump(2) + "\n");

    AblationRow row;
    row.name = v.name;
    row.cam = v.cam;
    row.asl = v.asl;
    row.det_acc = rep.det_acc;
    row.mask_acc = rep.mask_acc;
    row.mask_iou = rep.mask_iou_mean;
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered_json ablation_to_json(const std::vector<AblationRow>& rows) {
  ordered_json j = ordered_json::array();
  for (const AblationRow& r : rows) {
    ordered_json e;
    e["variant"] = r.name;
    e["center_anchor"] = r.cam;
    e["angle_loss"] = r.asl;
    e["det_acc"] = r.det_acc;
    e["mask_acc"] = r.mask_acc;
    e["mask_iou"] = r.mask_iou;
    j.push_back(std::move(e));
  }
  return j;
}

}  // namespace vgen
