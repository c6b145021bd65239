#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vertexgen/rng.hpp"
#include "vertexgen/tensor.hpp"

namespace vgen {

// Sinusoidal featurization of one scalar: `pairs` (sin, cos) pairs with
// geometrically descending frequencies from 2*pi down to 2*pi/10000, so that
// nearby values map to nearby feature vectors (cosine similarity ~1 for
// displacements of ~1e-3) while the top frequency still resolves the unit
// range.
template <class S>
void coord_sincos(double x, int pairs, S* out) {
  for (int q = 0; q < pairs; ++q) {
    double omega = 2.0 * kPi * std::pow(10000.0, -double(q) / double(pairs - 1));
    out[q] = S(std::sin(omega * x));
    out[pairs + q] = S(std::cos(omega * x));
  }
}

// Standard transformer timestep embedding: half sines, half cosines, with
// frequencies descending from 1 to 1/10000.
template <class S>
void time_sincos(double t, int dim, S* out) {
  int half = dim / 2;
  for (int q = 0; q < half; ++q) {
    double omega = std::pow(10000.0, -double(q) / double(half - 1));
    out[q] = S(std::sin(omega * t));
    out[half + q] = S(std::cos(omega * t));
  }
}

inline constexpr int kCoordFreqPairs = 16;  // per coordinate; 2 coords -> 64 features

struct DenoiserConfig {
  int n_points = 36;  // contour vertex count; token count is n_points + 2 box tokens
  int model_dim = 64;
  int blocks = 2;
  int heads = 4;
  int cond_dim = 64;
  double bit_scale = 1.0;
  int max_t = 1000;  // largest accepted timestep
  int tokens() const { return n_points + 2; }
  int coord_feat_dim() const { return 4 * kCoordFreqPairs; }
};

namespace detail {

enum class InitKind { kXavier, kZeros, kOnes, kSmallNormal };

template <class S>
Param<S>& get_param(ParamStore<S>& store, const std::string& name, std::vector<int> shape,
                    uint64_t init_seed, bool create, InitKind kind) {
  if (!create) {
    Param<S>& p = store.at(name);
    if (p.value.shape != shape)
      throw std::invalid_argument("parameter shape mismatch: " + name);
    return p;
  }
  Param<S>& p = store.add(name, shape);
  Rng rng = Rng::derive(init_seed, name.c_str());
  switch (kind) {
    case InitKind::kXavier:
      init_linear(p, rng);
      break;
    case InitKind::kZeros:
      break;
    case InitKind::kOnes:
      std::fill(p.value.v.begin(), p.value.v.end(), S(1));
      break;
    case InitKind::kSmallNormal:
      for (S& x : p.value.v) x = S(rng.normal() * 0.02);
      break;
  }
  return p;
}

}  // namespace detail

// Transformer denoiser over point tokens. Each token carries one (i, j)
// coordinate pair of the noisy vertex vector in analog range [-b, b]; the
// network predicts the clean pair per token, squashed back into (-b, b).
// Conditioning tokens enter through cross-attention; the diffusion timestep
// modulates each block through a zero-initialized scale/shift so the network
// starts as a plain (time-independent) transformer.
template <class S>
class Denoiser {
 public:
  using Id = typename Tape<S>::Id;

  Denoiser(ParamStore<S>& store, const DenoiserConfig& cfg, uint64_t init_seed, bool create)
      : cfg_(cfg) {
    using detail::InitKind;
    using detail::get_param;
    const int d = cfg.model_dim;
    const int cd = cfg.cond_dim;
    const int t = cfg.tokens();
    auto P = [&](const std::string& n, std::vector<int> sh, InitKind k) {
      return &get_param(store, n, std::move(sh), init_seed, create, k);
    };
    coord_w_ = P("den.coord.w", {cfg.coord_feat_dim(), d}, InitKind::kXavier);
    coord_b_ = P("den.coord.b", {d}, InitKind::kZeros);
    pos_ = P("den.pos", {t, d}, InitKind::kSmallNormal);
    time_w1_ = P("den.time.w1", {d, 4 * d}, InitKind::kXavier);
    time_b1_ = P("den.time.b1", {4 * d}, InitKind::kZeros);
    time_w2_ = P("den.time.w2", {4 * d, d}, InitKind::kXavier);
    time_b2_ = P("den.time.b2", {d}, InitKind::kZeros);
    blocks_.resize(size_t(cfg.blocks));
    for (int l = 0; l < cfg.blocks; ++l) {
      std::string pre = "den.blk" + std::to_string(l) + ".";
      Block& b = blocks_[size_t(l)];
      b.ln1_g = P(pre + "ln1.g", {d}, InitKind::kOnes);
      b.ln1_b = P(pre + "ln1.b", {d}, InitKind::kZeros);
      b.self_wq = P(pre + "self.wq", {d, d}, InitKind::kXavier);
      b.self_bq = P(pre + "self.bq", {d}, InitKind::kZeros);
      b.self_wk = P(pre + "self.wk", {d, d}, InitKind::kXavier);
      b.self_bk = P(pre + "self.bk", {d}, InitKind::kZeros);
      b.self_wv = P(pre + "self.wv", {d, d}, InitKind::kXavier);
      b.self_bv = P(pre + "self.bv", {d}, InitKind::kZeros);
      b.self_wo = P(pre + "self.wo", {d, d}, InitKind::kXavier);
      b.self_bo = P(pre + "self.bo", {d}, InitKind::kZeros);
      b.ln2_g = P(pre + "ln2.g", {d}, InitKind::kOnes);
      b.ln2_b = P(pre + "ln2.b", {d}, InitKind::kZeros);
      b.cross_wq = P(pre + "cross.wq", {d, d}, InitKind::kXavier);
      b.cross_bq = P(pre + "cross.bq", {d}, InitKind::kZeros);
      b.cross_wk = P(pre + "cross.wk", {cd, d}, InitKind::kXavier);
      b.cross_bk = P(pre + "cross.bk", {d}, InitKind::kZeros);
      b.cross_wv = P(pre + "cross.wv", {cd, d}, InitKind::kXavier);
      b.cross_bv = P(pre + "cross.bv", {d}, InitKind::kZeros);
      b.cross_wo = P(pre + "cross.wo", {d, d}, InitKind::kXavier);
      b.cross_bo = P(pre + "cross.bo", {d}, InitKind::kZeros);
      b.ln3_g = P(pre + "ln3.g", {d}, InitKind::kOnes);
      b.ln3_b = P(pre + "ln3.b", {d}, InitKind::kZeros);
      b.mlp_w1 = P(pre + "mlp.w1", {d, 4 * d}, InitKind::kXavier);
      b.mlp_b1 = P(pre + "mlp.b1", {4 * d}, InitKind::kZeros);
      b.mlp_w2 = P(pre + "mlp.w2", {4 * d, d}, InitKind::kXavier);
      b.mlp_b2 = P(pre + "mlp.b2", {d}, InitKind::kZeros);
      b.ln4_g = P(pre + "ln4.g", {d}, InitKind::kOnes);
      b.ln4_b = P(pre + "ln4.b", {d}, InitKind::kZeros);
      b.film_w = P(pre + "film.w", {d, 2 * d}, InitKind::kZeros);
      b.film_b = P(pre + "film.b", {2 * d}, InitKind::kZeros);
    }
    head_w_ = P("den.head.w", {d, 2}, InitKind::kXavier);
    head_b_ = P("den.head.b", {2}, InitKind::kZeros);
  }

  const DenoiserConfig& config() const { return cfg_; }

  // Builds a tape node holding the sinusoid features of a [tokens, 2]
  // coordinate node, differentiable through to the coordinates.
  Id featurize(Tape<S>& tape, Id coords) const {
    int t = cfg_.tokens();
    Id col = tape.reshape(coords, {2 * t, 1});
    TensorData<S> freq({1, kCoordFreqPairs});
    for (int q = 0; q < kCoordFreqPairs; ++q)
      freq.v[size_t(q)] =
          S(2.0 * kPi * std::pow(10000.0, -double(q) / double(kCoordFreqPairs - 1)));
    Id phase = tape.matmul(col, tape.constant(std::move(freq)));
    Id feats = tape.concat_cols({tape.sin_op(phase), tape.cos_op(phase)});
    return tape.reshape(feats, {t, cfg_.coord_feat_dim()});
  }

  // coords: [tokens, 2] analog values; t: diffusion timestep; cond: [n, cond_dim].
  // Returns the predicted clean coordinates, [tokens, 2] in (-b, b).
  Id forward(Tape<S>& tape, Id coords, int t, Id cond) const {
    if (t < 0 || t > cfg_.max_t)
      throw std::invalid_argument("denoiser: timestep out of range");
    const int d = cfg_.model_dim;
    Id x = tape.linear(featurize(tape, coords), tape.param(*coord_w_), tape.param(*coord_b_));
    x = tape.add(x, tape.param(*pos_));

    TensorData<S> tf({1, d});
    time_sincos(double(t), d, tf.v.data());
    Id temb = tape.linear(tape.constant(std::move(tf)), tape.param(*time_w1_), tape.param(*time_b1_));
    temb = tape.gelu(temb);
    temb = tape.linear(temb, tape.param(*time_w2_), tape.param(*time_b2_));

    for (const Block& b : blocks_) {
      Id h = tape.layer_norm(x, tape.param(*b.ln1_g), tape.param(*b.ln1_b));
      Id att = tape.attention(tape.linear(h, tape.param(*b.self_wq), tape.param(*b.self_bq)),
                              tape.linear(h, tape.param(*b.self_wk), tape.param(*b.self_bk)),
                              tape.linear(h, tape.param(*b.self_wv), tape.param(*b.self_bv)),
                              cfg_.heads, false);
      x = tape.add(x, tape.linear(att, tape.param(*b.self_wo), tape.param(*b.self_bo)));

      h = tape.layer_norm(x, tape.param(*b.ln2_g), tape.param(*b.ln2_b));
      att = tape.attention(tape.linear(h, tape.param(*b.cross_wq), tape.param(*b.cross_bq)),
                           tape.linear(cond, tape.param(*b.cross_wk), tape.param(*b.cross_bk)),
                           tape.linear(cond, tape.param(*b.cross_wv), tape.param(*b.cross_bv)),
                           cfg_.heads, false);
      x = tape.add(x, tape.linear(att, tape.param(*b.cross_wo), tape.param(*b.cross_bo)));

      h = tape.layer_norm(x, tape.param(*b.ln3_g), tape.param(*b.ln3_b));
      h = tape.gelu(tape.linear(h, tape.param(*b.mlp_w1), tape.param(*b.mlp_b1)));
      x = tape.add(x, tape.linear(h, tape.param(*b.mlp_w2), tape.param(*b.mlp_b2)));

      Id xn = tape.layer_norm(x, tape.param(*b.ln4_g), tape.param(*b.ln4_b));
      Id film = tape.linear(temb, tape.param(*b.film_w), tape.param(*b.film_b));
      Id scale = tape.affine(tape.slice_cols(film, 0, d), S(1), S(1));
      Id shift = tape.slice_cols(film, d, 2 * d);
      x = tape.add(tape.mul(xn, scale), shift);
    }

    Id out = tape.linear(x, tape.param(*head_w_), tape.param(*head_b_));
    S b = S(cfg_.bit_scale);
    return tape.affine(tape.sigmoid(out), S(2) * b, -b);
  }

  // Convenience wrapper for inference: raw coordinate values in, values out.
  std::vector<S> predict(Tape<S>& tape, const std::vector<S>& coords, int t, Id cond) const {
    TensorData<S> in({cfg_.tokens(), 2});
    if (int64_t(coords.size()) != in.numel())
      throw std::invalid_argument("denoiser: coordinate count mismatch");
    in.v = coords;
    Id out = forward(tape, tape.constant(std::move(in)), t, cond);
    return tape.val(out).v;
  }

 private:
  struct Block {
    Param<S>*ln1_g, *ln1_b, *self_wq, *self_bq, *self_wk, *self_bk, *self_wv, *self_bv,
        *self_wo, *self_bo, *ln2_g, *ln2_b, *cross_wq, *cross_bq, *cross_wk, *cross_bk,
        *cross_wv, *cross_bv, *cross_wo, *cross_bo, *ln3_g, *ln3_b, *mlp_w1, *mlp_b1, *mlp_w2,
        *mlp_b2, *ln4_g, *ln4_b, *film_w, *film_b;
  };
  DenoiserConfig cfg_;
  Param<S>*coord_w_, *coord_b_, *pos_, *time_w1_, *time_b1_, *time_w2_, *time_b2_, *head_w_,
      *head_b_;
  std::vector<Block> blocks_;
};

// Embeds per-shape features, the query, and the anchor position into the
// conditioning token sequence consumed by cross-attention.
template <class S>
class ConditionEmbedder {
 public:
  using Id = typename Tape<S>::Id;
  static constexpr int kShapeFeatDim = 19;
  static constexpr int kQueryFeatDim = 24;

  ConditionEmbedder(ParamStore<S>& store, int cond_dim, uint64_t init_seed, bool create) {
    using detail::InitKind;
    using detail::get_param;
    auto P = [&](const std::string& n, std::vector<int> sh, InitKind k) {
      return &get_param(store, n, std::move(sh), init_seed, create, k);
    };
    shape_w_ = P("cond.shape.w", {kShapeFeatDim, cond_dim}, InitKind::kXavier);
    shape_b_ = P("cond.shape.b", {cond_dim}, InitKind::kZeros);
    query_w_ = P("cond.query.w", {kQueryFeatDim, cond_dim}, InitKind::kXavier);
    query_b_ = P("cond.query.b", {cond_dim}, InitKind::kZeros);
    anchor_w_ = P("cond.anchor.w", {2, cond_dim}, InitKind::kXavier);
    anchor_b_ = P("cond.anchor.b", {cond_dim}, InitKind::kZeros);
  }

  // shape_feats: [n_shapes, 19]; query_feats: 24 values; anchor_pos: 2 values
  // (center as fractions of grid height/width). Returns [n_shapes + 2, cond_dim].
  Id forward(Tape<S>& tape, const std::vector<S>& shape_feats, const std::vector<S>& query_feats,
             const std::vector<S>& anchor_pos) const {
    if (shape_feats.size() % kShapeFeatDim != 0 || shape_feats.empty())
      throw std::invalid_argument("condition: shape feature length");
    if (int(query_feats.size()) != kQueryFeatDim)
      throw std::invalid_argument("condition: query feature length");
    if (anchor_pos.size() != 2) throw std::invalid_argument("condition: anchor position length");
    int n = int(shape_feats.size()) / kShapeFeatDim;
    TensorData<S> sf({n, kShapeFeatDim});
    sf.v = shape_feats;
    TensorData<S> qf({1, kQueryFeatDim});
    qf.v = query_feats;
    TensorData<S> af({1, 2});
    af.v = anchor_pos;
    Id st = tape.linear(tape.constant(std::move(sf)), tape.param(*shape_w_), tape.param(*shape_b_));
    Id qt = tape.linear(tape.constant(std::move(qf)), tape.param(*query_w_), tape.param(*query_b_));
    Id at = tape.linear(tape.constant(std::move(af)), tape.param(*anchor_w_), tape.param(*anchor_b_));
    return tape.concat_rows({st, qt, at});
  }

 private:
  Param<S>*shape_w_, *shape_b_, *query_w_, *query_b_, *anchor_w_, *anchor_b_;
};

struct CenterHeadConfig {
  int cell_feat_dim = 38;
  int query_feat_dim = 24;
  int query_embed_dim = 32;
  int hidden = 96;
};

// Per-cell scoring head for the center heatmap: each grid cell's features are
// concatenated with an embedded query and scored independently.
template <class S>
class CenterHead {
 public:
  using Id = typename Tape<S>::Id;

  CenterHead(ParamStore<S>& store, const CenterHeadConfig& cfg, uint64_t init_seed, bool create)
      : cfg_(cfg) {
    using detail::InitKind;
    using detail::get_param;
    auto P = [&](const std::string& n, std::vector<int> sh, InitKind k) {
      return &get_param(store, n, std::move(sh), init_seed, create, k);
    };
    int in = cfg.cell_feat_dim + cfg.query_embed_dim;
    q_w_ = P("head.q.w", {cfg.query_feat_dim, cfg.query_embed_dim}, InitKind::kXavier);
    q_b_ = P("head.q.b", {cfg.query_embed_dim}, InitKind::kZeros);
    l1_w_ = P("head.l1.w", {in, cfg.hidden}, InitKind::kXavier);
    l1_b_ = P("head.l1.b", {cfg.hidden}, InitKind::kZeros);
    l2_w_ = P("head.l2.w", {cfg.hidden, cfg.hidden}, InitKind::kXavier);
    l2_b_ = P("head.l2.b", {cfg.hidden}, InitKind::kZeros);
    out_w_ = P("head.out.w", {cfg.hidden, 1}, InitKind::kXavier);
    out_b_ = P("head.out.b", {1}, InitKind::kZeros);
  }

  const CenterHeadConfig& config() const { return cfg_; }

  // cells: [n_samples * cells_per_sample, cell_feat_dim]; queries: [n_samples,
  // query_feat_dim]. Returns per-cell scores in (0, 1), [rows, 1].
  Id forward(Tape<S>& tape, Id cells, Id queries, int cells_per_sample) const {
    Id q = tape.linear(queries, tape.param(*q_w_), tape.param(*q_b_));
    Id h = tape.concat_cols({cells, tape.repeat_rows(q, cells_per_sample)});
    h = tape.gelu(tape.linear(h, tape.param(*l1_w_), tape.param(*l1_b_)));
    h = tape.gelu(tape.linear(h, tape.param(*l2_w_), tape.param(*l2_b_)));
    return tape.sigmoid(tape.linear(h, tape.param(*out_w_), tape.param(*out_b_)));
  }

 private:
  CenterHeadConfig cfg_;
  Param<S>*q_w_, *q_b_, *l1_w_, *l1_b_, *l2_w_, *l2_b_, *out_w_, *out_b_;
};

// Penalty-reduced focal loss over predicted scores y in (0, 1) against a
// Gaussian-splatted target, built from tape ops (mean over all rows):
//   target == 1:  -(1-y)^2 log y
//   otherwise:    -(1-target)^4 y^2 log(1-y)
template <class S>
typename Tape<S>::Id focal_graph(Tape<S>& tape, typename Tape<S>::Id scores,
                                 const std::vector<S>& target) {
  const auto& ts = tape.val(scores);
  if (int64_t(target.size()) != ts.numel())
    throw std::invalid_argument("focal: target length mismatch");
  int n = int(target.size());
  TensorData<S> posw({n, 1}), negw({n, 1}), ones({n, 1}, S(1));
  for (int i = 0; i < n; ++i) {
    double t = double(target[size_t(i)]);
    bool pos = t == 1.0;
    posw.v[size_t(i)] = pos ? S(1) : S(0);
    double om = 1.0 - t;
    negw.v[size_t(i)] = pos ? S(0) : S(om * om * om * om);
  }
  typename Tape<S>::Id y =
      tape.clamp(tape.reshape(scores, {n, 1}), S(1e-6), S(1.0 - 1e-6));
  typename Tape<S>::Id one = tape.constant(std::move(ones));
  typename Tape<S>::Id omy = tape.sub(one, y);
  typename Tape<S>::Id lpos = tape.mul(tape.constant(std::move(posw)),
                                       tape.mul(tape.mul(omy, omy), tape.affine(tape.log_op(y), S(-1), S(0))));
  typename Tape<S>::Id lneg = tape.mul(tape.constant(std::move(negw)),
                                       tape.mul(tape.mul(y, y), tape.affine(tape.log_op(omy), S(-1), S(0))));
  return tape.mean(tape.add(lpos, lneg));
}

}  // namespace vgen
