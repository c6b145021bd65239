#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vertexgen/checkpoint.hpp"
#include "vertexgen/datagen.hpp"
#include "vertexgen/evalbench.hpp"
#include "vertexgen/seqgen.hpp"
#include "vertexgen/svg.hpp"
#include "vertexgen/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace vgen;

namespace {

struct MissingFile : std::runtime_error {
  explicit MissingFile(const std::string& path) : std::runtime_error("missing file: " + path) {}
};

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw MissingFile(path);
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

ordered_json read_json_file(const std::string& path) {
  require_file(path);
  std::ifstream in(path);
  ordered_json j = ordered_json::parse(in, nullptr, true);
  return j;
}

std::string default_out_dir() {
  const char* env = std::getenv("VERTEXGEN_OUT");
  return env && *env ? env : ".";
}

// Shared per-subcommand options: defaults < --config file < --seed/--set flags.
struct CommonOpts {
  uint64_t seed = 1;
  std::string out = default_out_dir();
  std::string config_path;
  std::vector<std::string> sets;
  CLI::App* sub = nullptr;

  void attach(CLI::App* s) {
    sub = s;
    s->add_option("--seed", seed, "master random seed")->capture_default_str();
    s->add_option("--out", out, "output directory (env VERTEXGEN_OUT)")->capture_default_str();
    s->add_option("--config", config_path, "JSON config file");
    s->add_option("--set", sets, "config override key=value (repeatable)");
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = TrainConfig::from_json(read_json_file(config_path));
    if (sub->count("--seed")) cfg.seed = seed;
    for (const std::string& kv : sets) {
      auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw CLI::ValidationError("--set", "expected key=value, got: " + kv);
      cfg.set_key(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
  }

  void snapshot(const std::string& command, ordered_json resolved) const {
    fs::create_directories(out);
    resolved["command"] = command;
    write_text(out + "/" + command + ".run.json", resolved.dump(2) + "\n");
  }
};

EvalOptions eval_options(const TrainConfig& cfg, int steps, bool timing, int warmup) {
  EvalOptions opt;
  opt.steps = steps;
  opt.seed = cfg.seed;
  opt.raster_res = cfg.raster_res;
  opt.timing = timing;
  opt.warmup = warmup;
  return opt;
}

int run_gen_data(const CommonOpts& common, int count, const std::string& file_name) {
  TrainConfig cfg = common.resolve();
  std::vector<SceneSample> data = generate(cfg.seed, count);
  fs::create_directories(common.out);
  std::string path = common.out + "/" + file_name;
  save_dataset(path, data);

  ordered_json snap;
  snap["seed"] = cfg.seed;
  snap["count"] = count;
  snap["dataset"] = path;
  common.snapshot("gen-data", snap);
  std::printf("wrote %d scenes to %s\n", count, path.c_str());
  return 0;
}

int run_train(const CommonOpts& common, const std::string& data_path,
              const std::string& resume_path) {
  TrainConfig cfg = common.resolve();
  require_file(data_path);
  if (!resume_path.empty()) require_file(resume_path);
  std::vector<SceneSample> data = load_dataset(data_path);

  ordered_json snap;
  snap["data"] = data_path;
  if (!resume_path.empty()) snap["resume"] = resume_path;
  snap["train"] = cfg.to_json();
  common.snapshot("train", snap);

  FitReport rep = fit(cfg, data, common.out, resume_path);
  std::printf("trained %lld steps (loss %.6f = center %.6f + point %.6f + geom %.6f)\n",
              (long long)rep.global_step, rep.last.total, rep.last.center, rep.last.point,
              rep.last.geom);
  std::printf("checkpoint: %s\nmetrics: %s\n", rep.checkpoint_path.c_str(),
              rep.metrics_path.c_str());
  return 0;
}

int run_sample(const CommonOpts& common, const std::string& ckpt_path,
               const std::string& data_path, int64_t scene_id, int steps) {
  TrainConfig cli_cfg = common.resolve();
  require_file(ckpt_path);
  require_file(data_path);
  auto model = load_parallel(ckpt_path);
  std::vector<SceneSample> data = load_dataset(data_path);

  const SceneSample* scene = nullptr;
  for (const SceneSample& s : data)
    if (scene_id < 0 || s.scene_id == scene_id) {
      scene = &s;
      break;
    }
  if (!scene) throw std::runtime_error("scene id not found in dataset: " + std::to_string(scene_id));

  uint64_t seed = Rng::derive(cli_cfg.seed, "eval.sample", uint64_t(scene->scene_id)).next_u64();
  std::vector<std::vector<Vec2>> trace;
  Prediction pred = predict_parallel(*model, *scene, steps, seed, &trace);

  std::vector<std::vector<Vec2>> polygons;
  std::vector<int> colors;
  for (const ShapeSpec& sh : scene->shapes) {
    polygons.push_back(shape_polygon(sh).pts());
    colors.push_back(sh.color);
  }
  std::vector<OverlayChain> overlays;
  for (size_t k = 0; k < trace.size(); ++k) {
    OverlayChain ch;
    ch.points.assign(trace[k].begin() + 2, trace[k].end());
    bool final_step = k + 1 == trace.size();
    ch.color = final_step ? "#d62728" : "#555555";
    ch.opacity = final_step ? 1.0 : 0.25 + 0.5 * double(k + 1) / double(trace.size());
    overlays.push_back(std::move(ch));
  }
  OverlayChain box;
  Vec2 lt = pred.points[0], rb = pred.points[1];
  box.points = {lt, {lt.i, rb.j}, rb, {rb.i, lt.j}};
  box.color = "#1f77b4";
  overlays.push_back(std::move(box));
  OverlayChain gt;
  gt.points = sample_contour_vertices(scene->gt_polygon, model->cfg.n_points).pts();
  gt.color = "#2ca02c";
  gt.opacity = 0.9;
  overlays.push_back(std::move(gt));

  std::string title = "denoising trajectory, scene " + std::to_string(scene->scene_id) + " (" +
                      std::to_string(steps) + " steps)";
  fs::create_directories(common.out);
  std::string svg_path = common.out + "/sample-" + std::to_string(scene->scene_id) + ".svg";
  write_text(svg_path, scene_svg(polygons, colors, overlays, title));

  ordered_json snap;
  snap["checkpoint"] = ckpt_path;
  snap["data"] = data_path;
  snap["scene_id"] = scene->scene_id;
  snap["steps"] = steps;
  snap["seed"] = cli_cfg.seed;
  snap["svg"] = svg_path;
  common.snapshot("sample", snap);
  std::printf("wrote %s\n", svg_path.c_str());
  return 0;
}

int run_eval(const CommonOpts& common, const std::string& ckpt_path, bool oracle,
             const std::string& data_path, const std::string& report_name, int steps,
             double min_iou, bool timing, int warmup) {
  TrainConfig cli_cfg = common.resolve();
  require_file(data_path);
  std::vector<SceneSample> data = load_dataset(data_path);

  EvalReport rep;
  if (oracle) {
    EvalOptions opt = eval_options(cli_cfg, steps, timing, warmup);
    rep = evaluate_oracle(data, opt, cli_cfg.n_points, cli_cfg.heatmap_res);
  } else {
    if (ckpt_path.empty()) throw CLI::ValidationError("--checkpoint", "required unless --oracle");
    require_file(ckpt_path);
    Checkpoint ck = load_checkpoint(ckpt_path);
    std::string kind = ck.meta.value("model", "");
    if (kind == "parallel") {
      auto m = load_parallel(ckpt_path);
      EvalOptions opt = eval_options(m->cfg, steps, timing, warmup);
      if (common.sub->count("--seed")) opt.seed = cli_cfg.seed;
      rep = evaluate_parallel(*m, data, opt);
    } else if (kind == "sequential") {
      auto m = load_sequential(ckpt_path);
      EvalOptions opt = eval_options(m->cfg, steps, timing, warmup);
      if (common.sub->count("--seed")) opt.seed = cli_cfg.seed;
      rep = evaluate_sequential(*m, data, opt);
    } else {
      throw std::runtime_error("unknown model kind in checkpoint: " + ckpt_path);
    }
  }

  fs::create_directories(common.out);
  std::string report_path = common.out + "/" + report_name;
  write_text(report_path, report_to_json(rep).dump(2) + "\n");

  ordered_json snap;
  snap["data"] = data_path;
  if (!ckpt_path.empty()) snap["checkpoint"] = ckpt_path;
  snap["oracle"] = oracle;
  snap["steps"] = steps;
  snap["seed"] = cli_cfg.seed;
  snap["timing"] = timing;
  snap["min_iou"] = min_iou;
  snap["report"] = report_path;
  common.snapshot("eval", snap);

  std::printf("samples %d | mask IoU %.4f | det acc %.4f | mask acc %.4f | hard IoU %.4f (n=%d)\n",
              rep.count, rep.mask_iou_mean, rep.det_acc, rep.mask_acc, rep.hard_mask_iou_mean,
              rep.hard_count);
  if (rep.has_timing)
    std::printf("latency ms: mean %.2f | p50 %.2f | p95 %.2f (%d warm-up discarded)\n",
                rep.latency_mean_ms, rep.latency_p50_ms, rep.latency_p95_ms,
                rep.warmup_discarded);
  std::printf("report: %s\n", report_path.c_str());
  if (min_iou >= 0.0 && rep.mask_iou_mean < min_iou) {
    std::fprintf(stderr, "mask IoU %.4f below required %.4f\n", rep.mask_iou_mean, min_iou);
    return 3;
  }
  return 0;
}

int run_bench(const CommonOpts& common, const std::string& paradigm, std::vector<int> points,
              const std::string& train_path, const std::string& eval_path, int warmup) {
  TrainConfig base = common.resolve();
  require_file(train_path);
  require_file(eval_path);
  std::vector<SceneSample> train_data = load_dataset(train_path);
  std::vector<SceneSample> eval_data = load_dataset(eval_path);
  EvalOptions eopt = eval_options(base, base.infer_steps, true, warmup);

  ordered_json snap;
  snap["paradigm"] = paradigm;
  snap["points"] = points;
  snap["train_data"] = train_path;
  snap["eval_data"] = eval_path;
  snap["train"] = base.to_json();
  common.snapshot("bench", snap);

  std::vector<std::string> paradigms;
  if (paradigm == "both")
    paradigms = {"parallel", "sequential"};
  else
    paradigms = {paradigm};

  std::vector<SweepResult> results;
  for (const std::string& p : paradigms)
    results.push_back(scaling_sweep(p, points, base, train_data, eval_data, eopt, common.out));

  write_text(common.out + "/sweep.json", sweep_to_json(results).dump(2) + "\n");
  write_text(common.out + "/sweep-iou.svg", sweep_iou_svg(results));
  write_text(common.out + "/sweep-latency.svg", sweep_latency_svg(results));

  for (const SweepResult& r : results) {
    std::printf("%s:\n", r.paradigm.c_str());
    std::printf("  %8s %10s %10s %14s %18s\n", "points", "mask IoU", "det acc", "latency ms",
                "attention flops");
    for (const SweepRow& row : r.rows)
      std::printf("  %8d %10.4f %10.4f %14.2f %18.0f\n", row.n_points, row.mask_iou, row.det_acc,
                  row.latency_mean_ms, row.attention_flops_mean);
  }
  std::printf("table: %s/sweep.json\n", common.out.c_str());
  return 0;
}

int run_ablate(const CommonOpts& common, const std::string& train_path,
               const std::string& eval_path) {
  TrainConfig base = common.resolve();
  require_file(train_path);
  require_file(eval_path);
  std::vector<SceneSample> train_data = load_dataset(train_path);
  std::vector<SceneSample> eval_data = load_dataset(eval_path);
  EvalOptions eopt = eval_options(base, base.infer_steps, false, 0);

  ordered_json snap;
  snap["train_data"] = train_path;
  snap["eval_data"] = eval_path;
  snap["train"] = base.to_json();
  common.snapshot("ablate", snap);

  std::vector<AblationRow> rows = ablate(base, train_data, eval_data, eopt, common.out);
  write_text(common.out + "/ablation.json", ablation_to_json(rows).dump(2) + "\n");

  std::printf("%10s %6s %6s %10s %10s %10s\n", "variant", "cam", "asl", "det acc", "mask acc",
              "mask IoU");
  for (const AblationRow& r : rows)
    std::printf("%10s %6s %6s %10.4f %10.4f %10.4f\n", r.name.c_str(), r.cam ? "on" : "off",
                r.asl ? "on" : "off", r.det_acc, r.mask_acc, r.mask_iou);
  std::printf("table: %s/ablation.json\n", common.out.c_str());
  return 0;
}

int run_plot(const CommonOpts& common, const std::string& report_path, int bins,
             const std::string& svg_name) {
  EvalReport rep = report_from_json(read_json_file(report_path));
  DensityGrid grid = difficulty_density(rep, bins);
  fs::create_directories(common.out);
  std::string svg_path = common.out + "/" + svg_name;
  write_text(svg_path, density_svg(grid, "sample density: difficulty vs IoU"));

  ordered_json snap;
  snap["report"] = report_path;
  snap["bins"] = bins;
  snap["svg"] = svg_path;
  common.snapshot("plot", snap);
  std::printf("wrote %s (hard-sample mean IoU %.4f over %d samples)\n", svg_path.c_str(),
              grid.hard_mean_iou, grid.hard_count);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vertexgen: referring vertex generation on synthetic shape scenes"};
  app.require_subcommand(1);

  CommonOpts gd_common, tr_common, sa_common, ev_common, be_common, ab_common, pl_common;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic scene dataset");
  gd_common.attach(gen);
  int gd_count = 1000;
  std::string gd_file = "dataset.jsonl";
  gen->add_option("--count", gd_count, "number of scenes")->required();
  gen->add_option("--file", gd_file, "output file name")->capture_default_str();

  auto* train = app.add_subcommand("train", "train a model");
  tr_common.attach(train);
  std::string tr_data, tr_resume;
  train->add_option("--data", tr_data, "training dataset (JSONL)")->required();
  train->add_option("--resume", tr_resume, "checkpoint to resume from");

  auto* sample_cmd = app.add_subcommand("sample", "render one denoising trajectory as SVG");
  sa_common.attach(sample_cmd);
  std::string sa_ckpt, sa_data;
  int64_t sa_scene = -1;
  int sa_steps = kDefaultSampleSteps;
  sample_cmd->add_option("--checkpoint", sa_ckpt, "trained parallel-paradigm checkpoint")->required();
  sample_cmd->add_option("--data", sa_data, "dataset holding the scene")->required();
  sample_cmd->add_option("--scene-id", sa_scene, "scene id (default: first scene)");
  sample_cmd->add_option("--steps", sa_steps, "denoising steps")->capture_default_str();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or the oracle");
  ev_common.attach(eval_cmd);
  std::string ev_ckpt, ev_data, ev_report = "report.json";
  bool ev_oracle = false, ev_timing = false;
  int ev_steps = kDefaultSampleSteps, ev_warmup = 2;
  double ev_min_iou = -1.0;
  eval_cmd->add_option("--checkpoint", ev_ckpt, "checkpoint to evaluate");
  eval_cmd->add_flag("--oracle", ev_oracle, "evaluate the ground-truth pipeline instead");
  eval_cmd->add_option("--data", ev_data, "evaluation dataset")->required();
  eval_cmd->add_option("--report", ev_report, "report file name")->capture_default_str();
  eval_cmd->add_option("--steps", ev_steps, "denoising steps")->capture_default_str();
  eval_cmd->add_option("--min-iou", ev_min_iou, "exit nonzero if mask IoU falls below");
  eval_cmd->add_flag("--timing", ev_timing, "measure per-sample latency");
  eval_cmd->add_option("--warmup", ev_warmup, "discarded warm-up iterations when timing")
      ->capture_default_str();

  auto* bench = app.add_subcommand("bench", "train + evaluate across point counts");
  be_common.attach(bench);
  std::string be_paradigm = "both", be_train, be_eval;
  std::vector<int> be_points = {9, 18, 27, 36};
  int be_warmup = 2;
  bench->add_option("--paradigm", be_paradigm, "parallel | sequential | both")
      ->check(CLI::IsMember({"parallel", "sequential", "both"}))
      ->capture_default_str();
  bench->add_option("--points", be_points, "contour point counts")->delimiter(',');
  bench->add_option("--train-data", be_train, "training dataset")->required();
  bench->add_option("--eval-data", be_eval, "evaluation dataset")->required();
  bench->add_option("--warmup", be_warmup, "warm-up iterations per evaluation")
      ->capture_default_str();

  auto* ablate_cmd = app.add_subcommand("ablate", "train + evaluate the 4 mechanism variants");
  ab_common.attach(ablate_cmd);
  std::string ab_train, ab_eval;
  ablate_cmd->add_option("--train-data", ab_train, "training dataset")->required();
  ablate_cmd->add_option("--eval-data", ab_eval, "evaluation dataset")->required();

  auto* plot = app.add_subcommand("plot", "difficulty/IoU density heat map from a report");
  pl_common.attach(plot);
  std::string pl_report, pl_svg = "density.svg";
  int pl_bins = 16;
  plot->add_option("--report", pl_report, "evaluation report (JSON)")->required();
  plot->add_option("--bins", pl_bins, "histogram bins per axis")->capture_default_str();
  plot->add_option("--svg", pl_svg, "output SVG file name")->capture_default_str();

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return run_gen_data(gd_common, gd_count, gd_file);
    if (train->parsed()) return run_train(tr_common, tr_data, tr_resume);
    if (sample_cmd->parsed()) return run_sample(sa_common, sa_ckpt, sa_data, sa_scene, sa_steps);
    if (eval_cmd->parsed())
      return run_eval(ev_common, ev_ckpt, ev_oracle, ev_data, ev_report, ev_steps, ev_min_iou,
                      ev_timing, ev_warmup);
    if (bench->parsed())
      return run_bench(be_common, be_paradigm, be_points, be_train, be_eval, be_warmup);
    if (ablate_cmd->parsed()) return run_ablate(ab_common, ab_train, ab_eval);
    if (plot->parsed()) return run_plot(pl_common, pl_report, pl_bins, pl_svg);
    std::fprintf(stderr, "%s", app.help().c_str());
    return 2;
  } catch (const CLI::CallForHelp&) {
    std::printf("%s", app.help().c_str());
    return 0;
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const MissingFile& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
