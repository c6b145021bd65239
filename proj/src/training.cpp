#include "vertexgen/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>

#include "vertexgen/parallel.hpp"
#include "vertexgen/rng.hpp"
#include "vertexgen/seqgen.hpp"

namespace vgen {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

template <class T>
void read_field(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "paradigm",      "epochs",          "batch_size",    "lr",
      "weight_decay",  "lr_decay_frac",   "lr_decay_factor", "t_train",
      "infer_steps",   "n_points",        "w_center",      "w_point",
      "w_geom",        "center_anchor",   "anchor_jitter", "seed",
      "model_dim",     "blocks",          "heads",         "heatmap_res",
      "angle_grid",    "trunk_hidden",    "query_embed_dim", "raster_res",
      "n_bins",        "checkpoint_every", "log_every"};
  return keys;
}

}  // namespace

TrainConfig TrainConfig::from_json(const ordered_json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (const auto& item : j.items())
    if (!known_keys().count(item.key()))
      throw std::invalid_argument("unknown config key: " + item.key());
  TrainConfig c;
  read_field(j, "paradigm", c.paradigm);
  read_field(j, "epochs", c.epochs);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "lr", c.lr);
  read_field(j, "weight_decay", c.weight_decay);
  read_field(j, "lr_decay_frac", c.lr_decay_frac);
  read_field(j, "lr_decay_factor", c.lr_decay_factor);
  read_field(j, "t_train", c.t_train);
  read_field(j, "infer_steps", c.infer_steps);
  read_field(j, "n_points", c.n_points);
  read_field(j, "w_center", c.w_center);
  read_field(j, "w_point", c.w_point);
  read_field(j, "w_geom", c.w_geom);
  read_field(j, "center_anchor", c.center_anchor);
  read_field(j, "anchor_jitter", c.anchor_jitter);
  read_field(j, "seed", c.seed);
  read_field(j, "model_dim", c.model_dim);
  read_field(j, "blocks", c.blocks);
  read_field(j, "heads", c.heads);
  read_field(j, "heatmap_res", c.heatmap_res);
  read_field(j, "angle_grid", c.angle_grid);
  read_field(j, "trunk_hidden", c.trunk_hidden);
  read_field(j, "query_embed_dim", c.query_embed_dim);
  read_field(j, "raster_res", c.raster_res);
  read_field(j, "n_bins", c.n_bins);
  read_field(j, "checkpoint_every", c.checkpoint_every);
  read_field(j, "log_every", c.log_every);
  c.validate();
  return c;
}

ordered_json TrainConfig::to_json() const {
  ordered_json j;
  j["paradigm"] = paradigm;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["lr_decay_frac"] = lr_decay_frac;
  j["lr_decay_factor"] = lr_decay_factor;
  j["t_train"] = t_train;
  j["infer_steps"] = infer_steps;
  j["n_points"] = n_points;
  j["w_center"] = w_center;
  j["w_point"] = w_point;
  j["w_geom"] = w_geom;
  j["center_anchor"] = center_anchor;
  j["anchor_jitter"] = anchor_jitter;
  j["seed"] = seed;
  j["model_dim"] = model_dim;
  j["blocks"] = blocks;
  j["heads"] = heads;
  j["heatmap_res"] = heatmap_res;
  j["angle_grid"] = angle_grid;
  j["trunk_hidden"] = trunk_hidden;
  j["query_embed_dim"] = query_embed_dim;
  j["raster_res"] = raster_res;
  j["n_bins"] = n_bins;
  j["checkpoint_every"] = checkpoint_every;
  j["log_every"] = log_every;
  return j;
}

void TrainConfig::set_key(const std::string& key, const std::string& value) {
  ordered_json j = to_json();
  if (!j.contains(key)) throw std::invalid_argument("unknown config key: " + key);
  if (j.at(key).is_string()) {
    j[key] = value;
  } else if (j.at(key).is_boolean()) {
    if (value == "true" || value == "1")
      j[key] = true;
    else if (value == "false" || value == "0")
      j[key] = false;
    else
      throw std::invalid_argument("config key " + key + " expects true/false");
  } else {
    ordered_json v = ordered_json::parse(value, nullptr, false);
    if (v.is_discarded() || !v.is_number())
      throw std::invalid_argument("config key " + key + " expects a number");
    j[key] = v;
  }
  *this = from_json(j);
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (paradigm != "parallel" && paradigm != "sequential")
    fail("paradigm must be parallel or sequential");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr > 0)) fail("lr must be positive");
  if (weight_decay < 0) fail("weight_decay must be >= 0");
  if (lr_decay_frac < 0 || lr_decay_frac > 1) fail("lr_decay_frac must be in [0,1]");
  if (!(lr_decay_factor > 0)) fail("lr_decay_factor must be positive");
  if (t_train < 1) fail("t_train must be >= 1");
  if (infer_steps < 1 || infer_steps > t_train) fail("infer_steps must be in [1, t_train]");
  if (n_points < 3) fail("n_points must be >= 3");
  if (anchor_jitter < 0) fail("anchor_jitter must be >= 0");
  if (model_dim < 4 || model_dim % 2 != 0) fail("model_dim must be even and >= 4");
  if (heads < 1 || model_dim % heads != 0) fail("heads must divide model_dim");
  if (blocks < 1) fail("blocks must be >= 1");
  if (heatmap_res < 2) fail("heatmap_res must be >= 2");
  if (angle_grid < 2) fail("angle_grid must be >= 2");
  if (trunk_hidden < 1) fail("trunk_hidden must be >= 1");
  if (query_embed_dim < 1) fail("query_embed_dim must be >= 1");
  if (raster_res < 8) fail("raster_res must be >= 8");
  if (n_bins < 2) fail("n_bins must be >= 2");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (log_every < 1) fail("log_every must be >= 1");
}

double lr_at_step(const TrainConfig& cfg, int64_t global_step, int64_t total_steps) {
  int64_t boundary = int64_t(std::floor(cfg.lr_decay_frac * double(total_steps)));
  return global_step >= boundary ? cfg.lr * cfg.lr_decay_factor : cfg.lr;
}

std::unique_ptr<ParallelModel> ParallelModel::create(const TrainConfig& cfg) {
  cfg.validate();
  auto m = std::make_unique<ParallelModel>();
  m->cfg = cfg;
  m->schedule = make_schedule(cfg.t_train, 1.0);
  DenoiserConfig dc;
  dc.n_points = cfg.n_points;
  dc.model_dim = cfg.model_dim;
  dc.blocks = cfg.blocks;
  dc.heads = cfg.heads;
  dc.cond_dim = cfg.model_dim;
  dc.max_t = cfg.t_train;
  m->cond = std::make_unique<ConditionEmbedder<float>>(m->store, dc.cond_dim, cfg.seed, true);
  m->denoiser = std::make_unique<Denoiser<float>>(m->store, dc, cfg.seed, true);
  if (cfg.center_anchor) {
    CenterHeadConfig hc{kCellFeatureDim, kQueryFeatureDim, cfg.query_embed_dim, cfg.trunk_hidden};
    m->head = std::make_unique<CenterHead<float>>(m->store, hc, cfg.seed, true);
  }
  return m;
}

namespace {

void atomic_save(const Checkpoint& ckpt, const std::string& path) {
  std::string tmp = path + ".tmp";
  save_checkpoint(tmp, ckpt);
  fs::rename(tmp, path);
}

}  // namespace

void save_parallel(const ParallelModel& m, AdamW<float>* opt, int64_t global_step,
                   const std::string& path) {
  Checkpoint ckpt = pack_params(m.store);
  if (opt) pack_optimizer(ckpt, *opt, m.store);
  ckpt.meta["model"] = "parallel";
  ckpt.meta["global_step"] = global_step;
  ckpt.meta["config"] = m.cfg.to_json();
  atomic_save(ckpt, path);
}

std::unique_ptr<ParallelModel> load_parallel(const std::string& path, AdamW<float>* opt,
                                             int64_t* global_step) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.meta.value("model", "") != "parallel")
    throw std::runtime_error("checkpoint is not a parallel-paradigm model: " + path);
  TrainConfig cfg = TrainConfig::from_json(ckpt.meta.at("config"));
  auto m = ParallelModel::create(cfg);
  unpack_params(ckpt, m->store);
  if (opt) unpack_optimizer(ckpt, *opt, m->store);
  if (global_step) *global_step = ckpt.meta.value("global_step", int64_t(0));
  return m;
}

SampleCache build_sample_cache(const SceneSample& s, const TrainConfig& cfg) {
  SampleCache c;
  c.scene_id = s.scene_id;
  Polygon contour = sample_contour_vertices(s.gt_polygon, cfg.n_points);
  c.scene_points.push_back(s.gt_box.lt);
  c.scene_points.push_back(s.gt_box.rb);
  for (const Vec2& p : contour.pts()) c.scene_points.push_back(p);
  // Without the center head, inference anchors at the scene center, so
  // training must normalize against the same fixed anchor.
  if (cfg.center_anchor) {
    c.base_anchor = gt_anchor(s, cfg.heatmap_res);
  } else {
    double r = double(cfg.heatmap_res);
    c.base_anchor = {{0.5 * r, 0.5 * r}, r, r};
  }
  c.shape_tokens = encode_shape_tokens(s);
  c.query_feats = encode_query_features(s.query);
  if (cfg.center_anchor) {
    int res = cfg.heatmap_res;
    Vec2 center_cells{s.gt_center.i * res, s.gt_center.j * res};
    Vec2 box_cells{(s.gt_box.rb.i - s.gt_box.lt.i) * res, (s.gt_box.rb.j - s.gt_box.lt.j) * res};
    Heatmap hm = gaussian_target(center_cells, box_cells, res, res);
    c.heat_target.assign(hm.v.begin(), hm.v.end());
    c.raster = rasterize_scene(s, res);
  }
  if (cfg.paradigm == "parallel" && cfg.w_geom != 0.0) {
    std::span<const Vec2> cont(c.scene_points.data() + 2, size_t(cfg.n_points));
    c.angle_target = std::make_shared<AngleMap>(angle_map(cont, cfg.angle_grid, cfg.angle_grid));
  }
  return c;
}

template <class S>
typename Tape<S>::Id angle_loss_node(Tape<S>& tape, typename Tape<S>::Id scene_pts,
                                     std::shared_ptr<const AngleMap> target) {
  using Id = typename Tape<S>::Id;
  const auto& tv = tape.val(scene_pts);
  if (tv.cols() != 2 || tv.rows() < 3)
    throw std::invalid_argument("angle loss: need an [n, 2] point node with n >= 3");
  const int n = tv.rows();
  const int h = target->h, w = target->w;
  auto pts = std::make_shared<std::vector<Vec2>>(size_t(n));
  for (int k = 0; k < n; ++k)
    (*pts)[size_t(k)] = {double(tv.v[size_t(2 * k)]), double(tv.v[size_t(2 * k + 1)])};
  auto pred = std::make_shared<AngleMap>(angle_map(std::span<const Vec2>(*pts), h, w));
  double acc = 0.0;
  for (size_t k = 0; k < pred->v.size(); ++k) {
    double d = (pred->v[k] - target->v[k]) / 360.0;
    acc += d * d;
  }
  TensorData<S> out({1});
  out.v[0] = S(acc / double(h * w));

  return tape.make_node(
      std::move(out), {scene_pts}, [scene_pts, pts, pred, target, n, h, w](Tape<S>& t, Id self) {
        if (!t.tracked(scene_pts)) return;
        double go = double(t.grad_of(self)[0]);
        if (go == 0.0) return;
        std::vector<double> acc(size_t(2 * n), 0.0);
        const double rad2deg = 180.0 / kPi;
        const double scale = 2.0 / (360.0 * 360.0 * double(h) * double(w));
        for (int r = 0; r < h; ++r) {
          for (int c = 0; c < w; ++c) {
            double a = pred->at(r, c);
            // Values at the clamp bounds carry no gradient; a full 360 sum
            // also means the cell is interior, where the sum is locally flat.
            if (a >= 360.0 || a <= 1e-9) continue;
            double dl = go * scale * (a - target->at(r, c));
            if (dl == 0.0) continue;
            Vec2 p{(r + 0.5) / h, (c + 0.5) / w};
            for (int k = 0; k < n; ++k) {
              int k2 = (k + 1) % n;
              Vec2 u = (*pts)[size_t(k)] - p;
              Vec2 v2 = (*pts)[size_t(k2)] - p;
              bool zu = u.i == 0.0 && u.j == 0.0;
              bool zv = v2.i == 0.0 && v2.j == 0.0;
              if (zu) u = {1e-6, 0.0};
              if (zv) v2 = {1e-6, 0.0};
              double cr = cross(u, v2), dt = dot(u, v2);
              double q = cr * cr + dt * dt;
              if (q == 0.0) continue;
              double sgn = cr > 0 ? 1.0 : (cr < 0 ? -1.0 : 0.0);
              double d_cr = rad2deg * sgn * dt / q;
              double d_dt = -rad2deg * std::abs(cr) / q;
              if (!zu) {
                acc[size_t(2 * k)] += dl * (d_cr * v2.j + d_dt * v2.i);
                acc[size_t(2 * k + 1)] += dl * (-d_cr * v2.i + d_dt * v2.j);
              }
              if (!zv) {
                acc[size_t(2 * k2)] += dl * (-d_cr * u.j + d_dt * u.i);
                acc[size_t(2 * k2 + 1)] += dl * (d_cr * u.i + d_dt * u.j);
              }
            }
          }
        }
        S* gp = t.grad_buf(scene_pts);
        for (int k = 0; k < 2 * n; ++k) gp[k] += S(acc[size_t(k)]);
      });
}

template Tape<float>::Id angle_loss_node<float>(Tape<float>&, Tape<float>::Id,
                                                std::shared_ptr<const AngleMap>);
template Tape<double>::Id angle_loss_node<double>(Tape<double>&, Tape<double>::Id,
                                                  std::shared_ptr<const AngleMap>);

CenterAnchor training_anchor(const SampleCache& sc, const TrainConfig& cfg, int64_t global_step,
                             int slot) {
  CenterAnchor anchor = sc.base_anchor;
  if (cfg.anchor_jitter > 0) {
    Rng rng = Rng::derive(cfg.seed, "anchor", uint64_t(global_step), uint64_t(slot));
    anchor.center.i += rng.uniform(-cfg.anchor_jitter, cfg.anchor_jitter);
    anchor.center.j += rng.uniform(-cfg.anchor_jitter, cfg.anchor_jitter);
    anchor.center.i = std::clamp(anchor.center.i, 0.0, anchor.h - 1e-9);
    anchor.center.j = std::clamp(anchor.center.j, 0.0, anchor.w - 1e-9);
  }
  return anchor;
}

std::vector<double> normalized_vertex_vector(const SampleCache& sc, const CenterAnchor& anchor) {
  std::vector<double> vv;
  vv.reserve(sc.scene_points.size() * 2);
  for (const Vec2& p : sc.scene_points) {
    Vec2 v = normalize_point({p.i * anchor.h, p.j * anchor.w}, anchor);
    vv.push_back(v.i);
    vv.push_back(v.j);
  }
  return vv;
}

Tape<float>::Id center_loss_graph(Tape<float>& tape, const CenterHead<float>& head,
                                  const std::vector<const SampleCache*>& batch, int heatmap_res) {
  const int B = int(batch.size());
  const int cells = heatmap_res * heatmap_res;
  TensorData<float> cellsT({B * cells, kCellFeatureDim});
  TensorData<float> queries({B, kQueryFeatureDim});
  std::vector<float> target(size_t(B) * cells);
  for (int b = 0; b < B; ++b) {
    std::vector<float> feats = cell_features(batch[size_t(b)]->raster, heatmap_res);
    std::copy(feats.begin(), feats.end(), cellsT.v.begin() + int64_t(b) * cells * kCellFeatureDim);
    std::copy(batch[size_t(b)]->query_feats.begin(), batch[size_t(b)]->query_feats.end(),
              queries.v.begin() + int64_t(b) * kQueryFeatureDim);
    std::copy(batch[size_t(b)]->heat_target.begin(), batch[size_t(b)]->heat_target.end(),
              target.begin() + int64_t(b) * cells);
  }
  Tape<float>::Id scores = head.forward(tape, tape.constant(std::move(cellsT)),
                                        tape.constant(std::move(queries)), cells);
  return focal_graph(tape, scores, target);
}

CenterAnchor predict_center_with(const TrainConfig& cfg, const CenterHead<float>* head,
                                 const SceneSample& s) {
  const int res = cfg.heatmap_res;
  if (!head) return {{0.5 * res, 0.5 * res}, double(res), double(res)};
  std::vector<uint8_t> raster = rasterize_scene(s, res);
  std::vector<float> feats = cell_features(raster, res);
  Tape<float> tape;
  TensorData<float> cellsT({res * res, kCellFeatureDim});
  cellsT.v = std::move(feats);
  TensorData<float> query({1, kQueryFeatureDim});
  query.v = encode_query_features(s.query);
  auto scores = head->forward(tape, tape.constant(std::move(cellsT)),
                              tape.constant(std::move(query)), res * res);
  Heatmap hm;
  hm.h = res;
  hm.w = res;
  hm.v.resize(size_t(res) * res);
  const auto& sv = tape.val(scores).v;
  for (size_t k = 0; k < hm.v.size(); ++k) hm.v[k] = double(sv[k]);
  return extract_peak(hm);
}

LossParts train_step_parallel(ParallelModel& m, AdamW<float>& opt,
                              const std::vector<const SampleCache*>& batch, int64_t global_step,
                              int64_t total_steps) {
  const TrainConfig& cfg = m.cfg;
  const int B = int(batch.size());
  if (B < 1) throw std::invalid_argument("train step: empty batch");
  const int res = cfg.heatmap_res;
  const int T = cfg.tokens();

  Tape<float> tape;
  tape.attach(m.store);
  using Id = Tape<float>::Id;

  LossParts parts;
  Id total_loss = -1;
  auto add_term = [&](Id term, double weight) {
    Id scaled = tape.affine(term, float(weight), 0.0f);
    total_loss = total_loss < 0 ? scaled : tape.add(total_loss, scaled);
  };

  if (m.head && cfg.w_center != 0.0) {
    Id lc = center_loss_graph(tape, *m.head, batch, res);
    parts.center = double(tape.val(lc).v[0]);
    add_term(lc, cfg.w_center);
  }

  bool want_points = cfg.w_point != 0.0 || cfg.w_geom != 0.0;
  Id point_sum = -1, geom_sum = -1;
  if (want_points) {
    for (int b = 0; b < B; ++b) {
      const SampleCache& sc = *batch[size_t(b)];
      CenterAnchor anchor = training_anchor(sc, cfg, global_step, b);
      std::vector<double> x0 = scale_to_analog(normalized_vertex_vector(sc, anchor), m.schedule.b);

      Rng nrng = Rng::derive(cfg.seed, "noise", uint64_t(global_step), uint64_t(b));
      int t = nrng.uniform_int(1, cfg.t_train);
      std::vector<double> eps(x0.size());
      for (double& e : eps) e = nrng.normal();
      DiffusionState st = forward_diffuse(x0, t, eps, m.schedule);

      std::vector<float> anchor_pos{float(anchor.center.i / anchor.h),
                                    float(anchor.center.j / anchor.w)};
      Id cond = m.cond->forward(tape, sc.shape_tokens, sc.query_feats, anchor_pos);
      TensorData<float> xt({T, 2});
      for (size_t k = 0; k < st.x.size(); ++k) xt.v[k] = float(st.x[k]);
      Id pred = m.denoiser->forward(tape, tape.constant(std::move(xt)), t, cond);

      TensorData<float> clean({T, 2});
      for (size_t k = 0; k < x0.size(); ++k) clean.v[k] = float(x0[k]);
      Id diff = tape.sub(pred, tape.constant(std::move(clean)));
      Id lp = tape.mean(tape.mul(diff, diff));
      point_sum = point_sum < 0 ? lp : tape.add(point_sum, lp);

      if (cfg.w_geom != 0.0) {
        Id stored = tape.affine(pred, float(0.5 / m.schedule.b), 0.5f);
        Id contour = tape.slice_rows(stored, 2, T);
        Id scene = tape.affine(contour, 2.0f, -1.0f);
        TensorData<float> offset({1, 2});
        offset.v = {float(anchor.center.i / anchor.h), float(anchor.center.j / anchor.w)};
        scene = tape.add(scene, tape.constant(std::move(offset)));
        Id lg = angle_loss_node<float>(tape, scene, sc.angle_target);
        geom_sum = geom_sum < 0 ? lg : tape.add(geom_sum, lg);
      }
    }
  }
  if (point_sum >= 0) {
    parts.point = double(tape.val(point_sum).v[0]) / B;
    if (cfg.w_point != 0.0) add_term(point_sum, cfg.w_point / B);
  }
  if (geom_sum >= 0) {
    parts.geom = double(tape.val(geom_sum).v[0]) / B;
    add_term(geom_sum, cfg.w_geom / B);
  }
  if (total_loss < 0) throw InvalidState("train step: all loss terms disabled");
  parts.total = double(tape.val(total_loss).v[0]);

  tape.backward(total_loss);
  opt.step(m.store, lr_at_step(cfg, global_step, total_steps), cfg.weight_decay);
  m.store.zero_grad();
  return parts;
}

CenterAnchor predict_center(const ParallelModel& m, const SceneSample& s) {
  return predict_center_with(m.cfg, m.head.get(), s);
}

Prediction predict_parallel(const ParallelModel& m, const SceneSample& s, int steps,
                            uint64_t seed, std::vector<std::vector<Vec2>>* trace) {
  const TrainConfig& cfg = m.cfg;
  Prediction out;
  out.anchor = predict_center(m, s);

  Tape<float> tape;
  std::vector<float> anchor_pos{float(out.anchor.center.i / out.anchor.h),
                                float(out.anchor.center.j / out.anchor.w)};
  auto cond = m.cond->forward(tape, encode_shape_tokens(s), encode_query_features(s.query),
                              anchor_pos);
  DenoiseFn fn = [&](const std::vector<double>& x, int t) {
    std::vector<float> xf(x.begin(), x.end());
    std::vector<float> y = m.denoiser->predict(tape, xf, t, cond);
    return std::vector<double>(y.begin(), y.end());
  };
  std::vector<std::vector<double>> raw_trace;
  out.vertex_vector = sample(fn, 2 * cfg.tokens(), steps, m.schedule, seed,
                             trace ? &raw_trace : nullptr);
  out.points = decode_vertex_vector(out.vertex_vector, out.anchor);
  if (trace)
    for (const auto& snap : raw_trace) trace->push_back(decode_vertex_vector(snap, out.anchor));
  out.attention_flops = tape.attention_flops();
  return out;
}

FitReport fit(const TrainConfig& cfg, const std::vector<SceneSample>& data,
              const std::string& out_dir, const std::string& resume_path) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("fit: empty dataset");
  fs::create_directories(out_dir);
  const bool sequential = cfg.paradigm == "sequential";

  std::vector<SampleCache> caches(data.size());
  parallel_for(int(data.size()), [&](int k) {
    caches[size_t(k)] = build_sample_cache(data[size_t(k)], cfg);
  });

  AdamW<float> opt;
  int64_t start_step = 0;
  std::unique_ptr<ParallelModel> pm;
  std::unique_ptr<SequentialModel> sm;
  auto check_resume_config = [&](const TrainConfig& saved) {
    ordered_json a = saved.to_json(), b = cfg.to_json();
    for (const char* key : {"epochs", "checkpoint_every", "log_every"}) {
      a.erase(key);
      b.erase(key);
    }
    if (a != b)
      throw std::invalid_argument("resume: checkpoint config differs from requested config");
  };
  if (sequential) {
    if (resume_path.empty()) {
      sm = SequentialModel::create(cfg);
    } else {
      sm = load_sequential(resume_path, &opt, &start_step);
      check_resume_config(sm->cfg);
      sm->cfg = cfg;
    }
  } else {
    if (resume_path.empty()) {
      pm = ParallelModel::create(cfg);
    } else {
      pm = load_parallel(resume_path, &opt, &start_step);
      check_resume_config(pm->cfg);
      pm->cfg = cfg;
    }
  }

  const int n = int(data.size());
  const int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = steps_per_epoch * cfg.epochs;
  if (start_step > total_steps) throw std::invalid_argument("resume: checkpoint beyond total steps");

  FitReport report;
  report.metrics_path = out_dir + "/metrics.jsonl";
  report.checkpoint_path = out_dir + "/checkpoint.bin";
  std::ofstream metrics(report.metrics_path,
                        start_step > 0 ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::runtime_error("fit: cannot open " + report.metrics_path);

  auto save_now = [&](int64_t gstep, const std::string& path) {
    if (sequential)
      save_sequential(*sm, &opt, gstep, path);
    else
      save_parallel(*pm, &opt, gstep, path);
  };

  std::vector<int> perm(static_cast<size_t>(n));
  int64_t perm_epoch = -1;
  for (int64_t g = start_step; g < total_steps; ++g) {
    int64_t epoch = g / steps_per_epoch;
    if (epoch != perm_epoch) {
      for (int k = 0; k < n; ++k) perm[size_t(k)] = k;
      Rng srng = Rng::derive(cfg.seed, "shuffle", uint64_t(epoch));
      for (int k = n - 1; k > 0; --k) std::swap(perm[size_t(k)], perm[size_t(srng.uniform_int(0, k))]);
      perm_epoch = epoch;
    }
    int64_t lo = (g % steps_per_epoch) * cfg.batch_size;
    int64_t hi = std::min<int64_t>(lo + cfg.batch_size, n);
    std::vector<const SampleCache*> batch;
    batch.reserve(size_t(hi - lo));
    for (int64_t k = lo; k < hi; ++k) batch.push_back(&caches[size_t(perm[size_t(k)])]);

    LossParts parts = sequential ? train_step_sequential(*sm, opt, batch, g, total_steps)
                                 : train_step_parallel(*pm, opt, batch, g, total_steps);
    if (!std::isfinite(parts.total))
      throw std::runtime_error("fit: non-finite loss at step " + std::to_string(g) +
                               " (center=" + std::to_string(parts.center) +
                               ", point=" + std::to_string(parts.point) +
                               ", geom=" + std::to_string(parts.geom) + ")");
    report.last = parts;
    report.global_step = g + 1;

    if (g % cfg.log_every == 0 || g + 1 == total_steps) {
      ordered_json line;
      line["step"] = g;
      line["epoch"] = epoch;
      line["lr"] = lr_at_step(cfg, g, total_steps);
      line["loss"] = parts.total;
      line["center"] = parts.center;
      line["point"] = parts.point;
      line["geom"] = parts.geom;
      metrics << line.dump() << '\n';
      metrics.flush();
    }
    if (cfg.checkpoint_every > 0 && (g + 1) % cfg.checkpoint_every == 0 && g + 1 < total_steps)
      save_now(g + 1, report.checkpoint_path);
  }
  save_now(total_steps, report.checkpoint_path);
  return report;
}

}  // namespace vgen
