#include "vertexgen/seqgen.hpp"

#include <algorithm>
#include <cmath>

namespace vgen {

int tokenize_value(double v, int n_bins) {
  if (n_bins < 2) throw std::invalid_argument("tokenize: need at least 2 bins");
  int b = int(std::floor(v * n_bins));
  return std::clamp(b, 0, n_bins - 1);
}

double detokenize_value(int bin, int n_bins) {
  if (bin < 0 || bin >= n_bins) throw std::invalid_argument("detokenize: bin out of range");
  return (double(bin) + 0.5) / double(n_bins);
}

namespace {

SeqDecoderConfig seq_config(const TrainConfig& cfg) {
  SeqDecoderConfig dc;
  dc.coord_tokens = cfg.vertex_dim();
  dc.model_dim = cfg.model_dim;
  dc.blocks = cfg.blocks;
  dc.heads = cfg.heads;
  dc.cond_dim = cfg.model_dim;
  dc.n_bins = cfg.n_bins;
  return dc;
}

}  // namespace

std::unique_ptr<SequentialModel> SequentialModel::create(const TrainConfig& cfg) {
  cfg.validate();
  auto m = std::make_unique<SequentialModel>();
  m->cfg = cfg;
  SeqDecoderConfig dc = seq_config(cfg);
  m->cond = std::make_unique<ConditionEmbedder<float>>(m->store, dc.cond_dim, cfg.seed, true);
  m->decoder = std::make_unique<SeqDecoder<float>>(m->store, dc, cfg.seed, true);
  if (cfg.center_anchor) {
    CenterHeadConfig hc{kCellFeatureDim, kQueryFeatureDim, cfg.query_embed_dim, cfg.trunk_hidden};
    m->head = std::make_unique<CenterHead<float>>(m->store, hc, cfg.seed, true);
  }
  return m;
}

void save_sequential(const SequentialModel& m, AdamW<float>* opt, int64_t global_step,
                     const std::string& path) {
  Checkpoint ckpt = pack_params(m.store);
  if (opt) pack_optimizer(ckpt, *opt, m.store);
  ckpt.meta["model"] = "sequential";
  ckpt.meta["global_step"] = global_step;
  ckpt.meta["config"] = m.cfg.to_json();
  std::string tmp = path + ".tmp";
  save_checkpoint(tmp, ckpt);
  std::filesystem::rename(tmp, path);
}

std::unique_ptr<SequentialModel> load_sequential(const std::string& path, AdamW<float>* opt,
                                                 int64_t* global_step) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.meta.value("model", "") != "sequential")
    throw std::runtime_error("checkpoint is not a sequential-paradigm model: " + path);
  TrainConfig cfg = TrainConfig::from_json(ckpt.meta.at("config"));
  auto m = SequentialModel::create(cfg);
  unpack_params(ckpt, m->store);
  if (opt) unpack_optimizer(ckpt, *opt, m->store);
  if (global_step) *global_step = ckpt.meta.value("global_step", int64_t(0));
  return m;
}

LossParts train_step_sequential(SequentialModel& m, AdamW<float>& opt,
                                const std::vector<const SampleCache*>& batch,
                                int64_t global_step, int64_t total_steps) {
  const TrainConfig& cfg = m.cfg;
  const int B = int(batch.size());
  if (B < 1) throw std::invalid_argument("train step: empty batch");
  const SeqDecoderConfig dc = m.decoder->config();

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
    Id lc = center_loss_graph(tape, *m.head, batch, cfg.heatmap_res);
    parts.center = double(tape.val(lc).v[0]);
    add_term(lc, cfg.w_center);
  }

  if (cfg.w_point != 0.0) {
    Id ce_sum = -1;
    for (int b = 0; b < B; ++b) {
      const SampleCache& sc = *batch[size_t(b)];
      CenterAnchor anchor = training_anchor(sc, cfg, global_step, b);
      std::vector<double> vv = normalized_vertex_vector(sc, anchor);

      std::vector<int> input;
      input.reserve(vv.size() + 1);
      std::vector<int> target;
      target.reserve(vv.size() + 1);
      input.push_back(dc.bos());
      for (double v : vv) {
        int tok = tokenize_value(v, dc.n_bins);
        input.push_back(tok);
        target.push_back(tok);
      }
      target.push_back(dc.eos());

      std::vector<float> anchor_pos{float(anchor.center.i / anchor.h),
                                    float(anchor.center.j / anchor.w)};
      Id cond = m.cond->forward(tape, sc.shape_tokens, sc.query_feats, anchor_pos);
      Id logits = m.decoder->forward(tape, input, cond);
      Id ce = tape.cross_entropy(logits, target);
      ce_sum = ce_sum < 0 ? ce : tape.add(ce_sum, ce);
    }
    parts.point = double(tape.val(ce_sum).v[0]) / B;
    add_term(ce_sum, cfg.w_point / B);
  }

  if (total_loss < 0) throw InvalidState("train step: all loss terms disabled");
  parts.total = double(tape.val(total_loss).v[0]);

  tape.backward(total_loss);
  opt.step(m.store, lr_at_step(cfg, global_step, total_steps), cfg.weight_decay);
  m.store.zero_grad();
  return parts;
}

CenterAnchor predict_center(const SequentialModel& m, const SceneSample& s) {
  return predict_center_with(m.cfg, m.head.get(), s);
}

Prediction predict_sequential(const SequentialModel& m, const SceneSample& s,
                              const std::vector<double>* forced_prefix) {
  const SeqDecoderConfig dc = m.decoder->config();
  Prediction out;
  out.anchor = predict_center(m, s);

  std::vector<float> shape_toks = encode_shape_tokens(s);
  std::vector<float> query_feats = encode_query_features(s.query);
  std::vector<float> anchor_pos{float(out.anchor.center.i / out.anchor.h),
                                float(out.anchor.center.j / out.anchor.w)};

  std::vector<int> forced_toks;
  if (forced_prefix) {
    if (int(forced_prefix->size()) > dc.coord_tokens)
      throw std::invalid_argument("forced prefix longer than the coordinate sequence");
    for (double v : *forced_prefix) forced_toks.push_back(tokenize_value(v, dc.n_bins));
  }

  auto run_pass = [&](const std::vector<int>& prefix) {
    Tape<float> tape;
    auto cond = m.cond->forward(tape, shape_toks, query_feats, anchor_pos);
    auto logits = m.decoder->forward(tape, prefix, cond);
    const auto& lv = tape.val(logits);
    const float* row = lv.v.data() + int64_t(lv.rows() - 1) * lv.cols();
    int best = 0;
    for (int c = 1; c < lv.cols(); ++c)
      if (row[size_t(c)] > row[size_t(best)]) best = c;
    out.attention_flops += tape.attention_flops();
    return best;
  };

  std::vector<int> prefix{dc.bos()};
  std::vector<int> coords;
  for (int k = 0; k < dc.coord_tokens; ++k) {
    int next;
    if (k < int(forced_toks.size())) {
      next = forced_toks[size_t(k)];
    } else {
      next = run_pass(prefix);
      if (next == dc.eos() || next == dc.bos()) {
        out.padded = true;
        break;
      }
    }
    coords.push_back(next);
    prefix.push_back(next);
  }
  if (!out.padded) run_pass(prefix);  // closing pass; a well-trained model emits EOS here

  while (int(coords.size()) < dc.coord_tokens)
    coords.push_back(coords.empty() ? dc.n_bins / 2 : coords.back());

  out.vertex_vector.reserve(coords.size());
  for (int tok : coords) out.vertex_vector.push_back(detokenize_value(tok, dc.n_bins));
  out.points = decode_vertex_vector(out.vertex_vector, out.anchor);
  return out;
}

}  // namespace vgen
