#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vertexgen/training.hpp"

namespace vgen {

// Uniform coordinate quantization for the autoregressive baseline: stored
// values in [0, 1] map to one of n_bins tokens; detokenization returns the
// bin midpoint.
int tokenize_value(double v, int n_bins);
double detokenize_value(int bin, int n_bins);

struct SeqDecoderConfig {
  int coord_tokens = 76;  // one token per stored coordinate value, 4 + 2N
  int model_dim = 64;
  int blocks = 2;
  int heads = 4;
  int cond_dim = 64;
  int n_bins = 64;
  int vocab() const { return n_bins + 2; }
  int bos() const { return n_bins; }
  int eos() const { return n_bins + 1; }
  int seq_len() const { return coord_tokens + 2; }  // BOS + coords + EOS
};

// Causal transformer decoder over coordinate tokens with cross-attention to
// the conditioning sequence. Same block body as the parallel denoiser minus
// the timestep modulation; emits next-token logits per position.
template <class S>
class SeqDecoder {
 public:
  using Id = typename Tape<S>::Id;

  SeqDecoder(ParamStore<S>& store, const SeqDecoderConfig& cfg, uint64_t init_seed, bool create)
      : cfg_(cfg) {
    using detail::InitKind;
    using detail::get_param;
    const int d = cfg.model_dim;
    const int cd = cfg.cond_dim;
    auto P = [&](const std::string& n, std::vector<int> sh, InitKind k) {
      return &get_param(store, n, std::move(sh), init_seed, create, k);
    };
    embed_ = P("seq.embed", {cfg.vocab(), d}, InitKind::kSmallNormal);
    pos_ = P("seq.pos", {cfg.seq_len(), d}, InitKind::kSmallNormal);
    blocks_.resize(size_t(cfg.blocks));
    for (int l = 0; l < cfg.blocks; ++l) {
      std::string pre = "seq.blk" + std::to_string(l) + ".";
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
    }
    lnf_g_ = P("seq.lnf.g", {d}, InitKind::kOnes);
    lnf_b_ = P("seq.lnf.b", {d}, InitKind::kZeros);
    head_w_ = P("seq.head.w", {d, cfg.vocab()}, InitKind::kXavier);
    head_b_ = P("seq.head.b", {cfg.vocab()}, InitKind::kZeros);
  }

  const SeqDecoderConfig& config() const { return cfg_; }

  // tokens: prefix of the training sequence (BOS first). Returns next-token
  // logits, [len(tokens), vocab].
  Id forward(Tape<S>& tape, const std::vector<int>& tokens, Id cond) const {
    const int len = int(tokens.size());
    if (len < 1 || len > cfg_.seq_len())
      throw std::invalid_argument("sequence decoder: bad prefix length");
    Id x = tape.embed(tape.param(*embed_), tokens);
    x = tape.add(x, tape.slice_rows(tape.param(*pos_), 0, len));
    for (const Block& b : blocks_) {
      Id h = tape.layer_norm(x, tape.param(*b.ln1_g), tape.param(*b.ln1_b));
      Id att = tape.attention(tape.linear(h, tape.param(*b.self_wq), tape.param(*b.self_bq)),
                              tape.linear(h, tape.param(*b.self_wk), tape.param(*b.self_bk)),
                              tape.linear(h, tape.param(*b.self_wv), tape.param(*b.self_bv)),
                              cfg_.heads, true);
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
    }
    x = tape.layer_norm(x, tape.param(*lnf_g_), tape.param(*lnf_b_));
    return tape.linear(x, tape.param(*head_w_), tape.param(*head_b_));
  }

 private:
  struct Block {
    Param<S>*ln1_g, *ln1_b, *self_wq, *self_bq, *self_wk, *self_bk, *self_wv, *self_bv,
        *self_wo, *self_bo, *ln2_g, *ln2_b, *cross_wq, *cross_bq, *cross_wk, *cross_bk,
        *cross_wv, *cross_bv, *cross_wo, *cross_bo, *ln3_g, *ln3_b, *mlp_w1, *mlp_b1, *mlp_w2,
        *mlp_b2;
  };
  SeqDecoderConfig cfg_;
  Param<S>*embed_, *pos_, *lnf_g_, *lnf_b_, *head_w_, *head_b_;
  std::vector<Block> blocks_;
};

// Autoregressive baseline: same conditioning and center head as the parallel
// model, but vertices are decoded one coordinate token at a time.
struct SequentialModel {
  TrainConfig cfg;
  ParamStore<float> store;
  std::unique_ptr<ConditionEmbedder<float>> cond;
  std::unique_ptr<SeqDecoder<float>> decoder;
  std::unique_ptr<CenterHead<float>> head;  // null when center_anchor is off

  static std::unique_ptr<SequentialModel> create(const TrainConfig& cfg);
};

void save_sequential(const SequentialModel& m, AdamW<float>* opt, int64_t global_step,
                     const std::string& path);
std::unique_ptr<SequentialModel> load_sequential(const std::string& path,
                                                 AdamW<float>* opt = nullptr,
                                                 int64_t* global_step = nullptr);

LossParts train_step_sequential(SequentialModel& m, AdamW<float>& opt,
                                const std::vector<const SampleCache*>& batch,
                                int64_t global_step, int64_t total_steps);

CenterAnchor predict_center(const SequentialModel& m, const SceneSample& s);

// Greedy decode without a key/value cache: every emitted token re-runs the
// decoder over the whole prefix. `forced_prefix`, when given, supplies stored
// [0, 1] values for the first coordinates (tokenized and fed as if the model
// had emitted them) — used to probe error accumulation. A premature EOS/BOS
// pads the remaining coordinates and sets Prediction::padded.
Prediction predict_sequential(const SequentialModel& m, const SceneSample& s,
                              const std::vector<double>* forced_prefix = nullptr);

}  // namespace vgen
