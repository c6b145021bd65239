#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "vertexgen/common.hpp"
#include "vertexgen/kernels.hpp"
#include "vertexgen/rng.hpp"

namespace vgen {

// Dense row-major tensor. Rank-1 tensors behave as a single row (bias shape).
template <class S>
struct TensorData {
  std::vector<int> shape;
  std::vector<S> v;

  TensorData() = default;
  explicit TensorData(std::vector<int> sh, S fill = S(0)) : shape(std::move(sh)) {
    v.assign(size_t(numel_of(shape)), fill);
  }
  static int64_t numel_of(const std::vector<int>& sh) {
    int64_t n = 1;
    for (int d : sh) n *= d;
    return n;
  }
  int64_t numel() const { return int64_t(v.size()); }
  int cols() const { return shape.empty() ? 1 : shape.back(); }
  int rows() const {
    int64_t r = 1;
    for (size_t k = 0; k + 1 < shape.size(); ++k) r *= shape[k];
    return int(r);
  }
};

template <class S>
struct Param {
  std::string name;
  TensorData<S> value;
  TensorData<S> grad;  // persistent; backward accumulates into it
};

template <class S>
class ParamStore {
 public:
  Param<S>& add(const std::string& name, std::vector<int> shape) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    auto p = std::make_unique<Param<S>>();
    p->name = name;
    p->value = TensorData<S>(shape);
    p->grad = TensorData<S>(shape);
    index_[name] = int(params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
  }
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  Param<S>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return *params_[it->second];
  }
  const Param<S>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return *params_[it->second];
  }
  int count() const { return int(params_.size()); }
  Param<S>& by_index(int k) { return *params_[k]; }
  const Param<S>& by_index(int k) const { return *params_[k]; }
  int64_t scalar_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
  }
  void zero_grad() {
    for (auto& p : params_) std::fill(p->grad.v.begin(), p->grad.v.end(), S(0));
    backward_runs_ = 0;
  }
  void note_backward() { ++backward_runs_; }
  int backward_runs() const { return backward_runs_; }

 private:
  std::vector<std::unique_ptr<Param<S>>> params_;
  std::unordered_map<std::string, int> index_;
  int backward_runs_ = 0;
};

// Dynamic tape. Ops compute eagerly and record a backward closure; backward()
// walks the tape in reverse. Gradients follow sum semantics: node gradients
// are fresh per backward call, parameter gradients accumulate until
// zero_grad. One tape is single-threaded; distinct tapes are independent.
template <class S>
class Tape {
 public:
  using Id = int32_t;

  Id constant(TensorData<S> t) { return push(std::move(t), false, nullptr); }

  // Tracked leaf: participates in backward so grad_of(id) is populated, but
  // owns no parameter storage. Used to differentiate with respect to inputs.
  Id input(TensorData<S> t) { return push(std::move(t), true, nullptr); }

  Id param(Param<S>& p) {
    ParamStore<S>* store = store_;
    Param<S>* pp = &p;
    Id id = push(p.value, true, [pp, store](Tape& t, Id self) {
      const std::vector<S>& g = t.nodes_[self].grad;
      for (size_t k = 0; k < g.size(); ++k) pp->grad.v[k] += g[k];
      if (store) store->note_backward();
    });
    return id;
  }

  // Binds the tape to a store so backward marks gradients as populated.
  void attach(ParamStore<S>& store) { store_ = &store; }

  Id matmul(Id a, Id b) {
    auto& ta = val(a);
    auto& tb = val(b);
    require(ta.shape.size() == 2 && tb.shape.size() == 2, "matmul: rank-2 operands required");
    int m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    require(tb.shape[0] == k, "matmul: inner dimensions differ");
    TensorData<S> out({m, n});
    gemm_nn(m, n, k, ta.v.data(), k, tb.v.data(), n, out.v.data(), n, false);
    return push(std::move(out), tracked(a) || tracked(b),
                [a, b, m, n, k](Tape& t, Id self) {
                  const S* go = t.nodes_[self].grad.data();
                  if (t.tracked(a)) {
                    S* ga = t.grad_buf(a);
                    gemm_nt(m, k, n, go, n, t.val(b).v.data(), n, ga, k, true);
                  }
                  if (t.tracked(b)) {
                    S* gb = t.grad_buf(b);
                    gemm_tn(k, n, m, t.val(a).v.data(), k, go, n, gb, n, true);
                  }
                });
  }

  // x[m,k] * w[k,n] + bias[n]
  Id linear(Id x, Id w, Id bias) {
    auto& tx = val(x);
    auto& tw = val(w);
    auto& tb = val(bias);
    require(tw.shape.size() == 2, "linear: weight must be rank 2");
    int k = tw.shape[0], n = tw.shape[1];
    require(tx.cols() == k, "linear: input col count must match weight rows");
    require(tb.numel() == n, "linear: bias length must match weight cols");
    int m = tx.rows();
    TensorData<S> out({m, n});
    gemm_nn(m, n, k, tx.v.data(), k, tw.v.data(), n, out.v.data(), n, false);
    for (int i = 0; i < m; ++i) {
      S* row = out.v.data() + int64_t(i) * n;
      for (int j = 0; j < n; ++j) row[j] += tb.v[j];
    }
    return push(std::move(out), tracked(x) || tracked(w) || tracked(bias),
                [x, w, bias, m, n, k](Tape& t, Id self) {
                  const S* go = t.nodes_[self].grad.data();
                  if (t.tracked(x)) {
                    S* gx = t.grad_buf(x);
                    gemm_nt(m, k, n, go, n, t.val(w).v.data(), n, gx, k, true);
                  }
                  if (t.tracked(w)) {
                    S* gw = t.grad_buf(w);
                    gemm_tn(k, n, m, t.val(x).v.data(), k, go, n, gw, n, true);
                  }
                  if (t.tracked(bias)) {
                    S* gb = t.grad_buf(bias);
                    for (int j = 0; j < n; ++j) {
                      double acc = 0.0;
                      for (int i = 0; i < m; ++i) acc += double(go[int64_t(i) * n + j]);
                      gb[j] += S(acc);
                    }
                  }
                });
  }

  // Elementwise same-shape, or b broadcast across rows (b has one row / rank 1).
  Id add(Id a, Id b) { return bin_broadcast(a, b, /*is_mul=*/false); }
  Id mul(Id a, Id b) { return bin_broadcast(a, b, /*is_mul=*/true); }

  Id sub(Id a, Id b) {
    auto& ta = val(a);
    auto& tb = val(b);
    require(ta.shape == tb.shape, "sub: shape mismatch");
    TensorData<S> out = ta;
    for (size_t k = 0; k < out.v.size(); ++k) out.v[k] -= tb.v[k];
    return push(std::move(out), tracked(a) || tracked(b), [a, b](Tape& t, Id self) {
      const auto& g = t.nodes_[self].grad;
      if (t.tracked(a)) {
        S* ga = t.grad_buf(a);
        for (size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
      }
      if (t.tracked(b)) {
        S* gb = t.grad_buf(b);
        for (size_t k = 0; k < g.size(); ++k) gb[k] -= g[k];
      }
    });
  }

  Id affine(Id a, S scale, S shift) {
    TensorData<S> out = val(a);
    for (S& x : out.v) x = x * scale + shift;
    return push(std::move(out), tracked(a), [a, scale](Tape& t, Id self) {
      if (!t.tracked(a)) return;
      const auto& g = t.nodes_[self].grad;
      S* ga = t.grad_buf(a);
      for (size_t k = 0; k < g.size(); ++k) ga[k] += scale * g[k];
    });
  }

  Id sigmoid(Id a) {
    TensorData<S> out = val(a);
    for (S& x : out.v) {
      if (x >= S(0)) {
        x = S(1) / (S(1) + std::exp(-x));
      } else {
        S e = std::exp(x);
        x = e / (S(1) + e);
      }
    }
    return push(std::move(out), tracked(a), [a](Tape& t, Id self) {
      if (!t.tracked(a)) return;
      const auto& g = t.nodes_[self].grad;
      const auto& y = t.nodes_[self].val.v;
      S* ga = t.grad_buf(a);
      for (size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * y[k] * (S(1) - y[k]);
    });
  }

  Id gelu(Id a) {
    TensorData<S> out = val(a);
    for (S& x : out.v) x = S(0.5) * x * (S(1) + S(std::erf(double(x) * 0.7071067811865476)));
    return push(std::move(out), tracked(a), [a](Tape& t, Id self) {
      if (!t.tracked(a)) return;
      const auto& g = t.nodes_[self].grad;
      const auto& xin = t.val(a).v;
      S* ga = t.grad_buf(a);
      for (size_t k = 0; k < g.size(); ++k) {
        double x = double(xin[k]);
        double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865476));
        double pdf = std::exp(-0.5 * x * x) * 0.3989422804014327;
        ga[k] += g[k] * S(cdf + x * pdf);
      }
    });
  }

  Id sin_op(Id a) {
    TensorData<S> out = val(a);
    for (S& x : out.v) x = std::sin(x);
    return push(std::move(out), tracked(a), [a](Tape& t, Id self) {
      if (!t.tracked(a)) return;
      const auto& g = t.nodes_[self].grad;
      const auto& xin = t.val(a).v;
      S* ga = t.grad_buf(a);
      for (size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * std::cos(xin[k]);
    });
  }

  Id cos_op(Id a) {
    TensorData<S> out = val(a);
    for (S& x : out.v) x = std::cos(x);
    return push(std::move(out), tracked(a), [a](Tape& t, Id self) {
      if (!t.tracked(a)) return;
      const auto& g = t.nodes_[self].grad;
      const auto& xin = t.val(a).v;
      S* ga = t.grad_buf(a);
      for (size_t k = 0; k < g.size(); ++k) ga[k] -= g[k] * std::sin(xin[k]);
    });
  }

  Id log_op(Id a) {
    TensorData<S> out = val(a);
    for (S& x : out.v) x = std::log(x);
    return push(std::move(out), tracked(a), [a](Tape& t, Id self) {
      if (!t.tracked(a)) return;
      const auto& g = t.nodes_[self].grad;
      const auto& xin = t.val(a).v;
      S* ga = t.grad_buf(a);
      for (size_t k = 0; k < g.size(); ++k) ga[k] += g[k] / xin[k];
    });
  }

  // Gradient passes only strictly inside (lo, hi).
  Id clamp(Id a, S lo, S hi) {
    TensorData<S> out = val(a);
    for (S& x : out.v) x = x < lo ? lo : (x > hi ? hi : x);
    return push(std::move(out), tracked(a), [a, lo, hi](Tape& t, Id self) {
      if (!t.tracked(a)) return;
      const auto& g = t.nodes_[self].grad;
      const auto& xin = t.val(a).v;
      S* ga = t.grad_buf(a);
      for (size_t k = 0; k < g.size(); ++k)
        if (xin[k] > lo && xin[k] < hi) ga[k] += g[k];
    });
  }

  // Softmax over the last axis.
  Id softmax(Id a) {
    auto& ta = val(a);
    int rows = ta.rows(), cols = ta.cols();
    TensorData<S> out = ta;
    for (int i = 0; i < rows; ++i) softmax_row(out.v.data() + int64_t(i) * cols, cols);
    return push(std::move(out), tracked(a), [a, rows, cols](Tape& t, Id self) {
      if (!t.tracked(a)) return;
      const auto& g = t.nodes_[self].grad;
      const auto& y = t.nodes_[self].val.v;
      S* ga = t.grad_buf(a);
      for (int i = 0; i < rows; ++i) {
        int64_t off = int64_t(i) * cols;
        double d = 0.0;
        for (int j = 0; j < cols; ++j) d += double(g[off + j]) * double(y[off + j]);
        for (int j = 0; j < cols; ++j)
          ga[off + j] += S((double(g[off + j]) - d) * double(y[off + j]));
      }
    });
  }

  // Layer norm over the last axis with learned gain/bias, eps = 1e-5.
  Id layer_norm(Id x, Id gain, Id bias) {
    auto& tx = val(x);
    int rows = tx.rows(), cols = tx.cols();
    require(val(gain).numel() == cols && val(bias).numel() == cols,
            "layer_norm: gain/bias length must equal last axis");
    TensorData<S> out = tx;
    auto stats = std::make_shared<std::vector<double>>(size_t(rows) * 2);
    const S* gv = val(gain).v.data();
    const S* bv = val(bias).v.data();
    for (int i = 0; i < rows; ++i) {
      S* row = out.v.data() + int64_t(i) * cols;
      double mu = 0.0;
      for (int j = 0; j < cols; ++j) mu += double(row[j]);
      mu /= cols;
      double var = 0.0;
      for (int j = 0; j < cols; ++j) {
        double d = double(row[j]) - mu;
        var += d * d;
      }
      var /= cols;
      double rstd = 1.0 / std::sqrt(var + 1e-5);
      (*stats)[size_t(i) * 2] = mu;
      (*stats)[size_t(i) * 2 + 1] = rstd;
      for (int j = 0; j < cols; ++j)
        row[j] = S((double(row[j]) - mu) * rstd) * gv[j] + bv[j];
    }
    return push(std::move(out), tracked(x) || tracked(gain) || tracked(bias),
                [x, gain, bias, rows, cols, stats](Tape& t, Id self) {
                  const auto& g = t.nodes_[self].grad;
                  const auto& xin = t.val(x).v;
                  const S* gv = t.val(gain).v.data();
                  S* gx = t.tracked(x) ? t.grad_buf(x) : nullptr;
                  S* gg = t.tracked(gain) ? t.grad_buf(gain) : nullptr;
                  S* gb = t.tracked(bias) ? t.grad_buf(bias) : nullptr;
                  for (int i = 0; i < rows; ++i) {
                    int64_t off = int64_t(i) * cols;
                    double mu = (*stats)[size_t(i) * 2];
                    double rstd = (*stats)[size_t(i) * 2 + 1];
                    double s1 = 0.0, s2 = 0.0;
                    for (int j = 0; j < cols; ++j) {
                      double xh = (double(xin[off + j]) - mu) * rstd;
                      double dy = double(g[off + j]);
                      if (gg) gg[j] += S(dy * xh);
                      if (gb) gb[j] += S(dy);
                      double dyh = dy * double(gv[j]);
                      s1 += dyh;
                      s2 += dyh * xh;
                    }
                    if (gx) {
                      s1 /= cols;
                      s2 /= cols;
                      for (int j = 0; j < cols; ++j) {
                        double xh = (double(xin[off + j]) - mu) * rstd;
                        double dyh = double(g[off + j]) * double(gv[j]);
                        gx[off + j] += S((dyh - s1 - xh * s2) * rstd);
                      }
                    }
                  }
                });
  }

  Id sum(Id a) { return reduce(a, false); }
  Id mean(Id a) { return reduce(a, true); }

  Id slice_cols(Id a, int c0, int c1) {
    auto& ta = val(a);
    int rows = ta.rows(), cols = ta.cols();
    require(0 <= c0 && c0 < c1 && c1 <= cols, "slice_cols: bad range");
    int n = c1 - c0;
    TensorData<S> out({rows, n});
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < n; ++j) out.v[int64_t(i) * n + j] = ta.v[int64_t(i) * cols + c0 + j];
    return push(std::move(out), tracked(a), [a, c0, n, cols, rows](Tape& t, Id self) {
      if (!t.tracked(a)) return;
      const auto& g = t.nodes_[self].grad;
      S* ga = t.grad_buf(a);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < n; ++j) ga[int64_t(i) * cols + c0 + j] += g[int64_t(i) * n + j];
    });
  }

  Id slice_rows(Id a, int r0, int r1) {
    auto& ta = val(a);
    int rows = ta.rows(), cols = ta.cols();
    require(0 <= r0 && r0 < r1 && r1 <= rows, "slice_rows: bad range");
    int n = r1 - r0;
    TensorData<S> out({n, cols});
    std::copy(ta.v.begin() + int64_t(r0) * cols, ta.v.begin() + int64_t(r1) * cols,
              out.v.begin());
    return push(std::move(out), tracked(a), [a, r0, n, cols](Tape& t, Id self) {
      if (!t.tracked(a)) return;
      const auto& g = t.nodes_[self].grad;
      S* ga = t.grad_buf(a);
      for (int64_t k = 0; k < int64_t(n) * cols; ++k) ga[int64_t(r0) * cols + k] += g[k];
    });
  }

  Id concat_rows(const std::vector<Id>& parts) {
    require(!parts.empty(), "concat_rows: empty input");
    int cols = val(parts[0]).cols();
    int rows = 0;
    bool track = false;
    for (Id p : parts) {
      require(val(p).cols() == cols, "concat_rows: column mismatch");
      rows += val(p).rows();
      track = track || tracked(p);
    }
    TensorData<S> out({rows, cols});
    int64_t off = 0;
    for (Id p : parts) {
      const auto& tv = val(p).v;
      std::copy(tv.begin(), tv.end(), out.v.begin() + off);
      off += tv.size();
    }
    auto ps = std::make_shared<std::vector<Id>>(parts);
    return push(std::move(out), track, [ps, cols](Tape& t, Id self) {
      const auto& g = t.nodes_[self].grad;
      int64_t off = 0;
      for (Id p : *ps) {
        int64_t n = t.val(p).numel();
        if (t.tracked(p)) {
          S* gp = t.grad_buf(p);
          for (int64_t k = 0; k < n; ++k) gp[k] += g[off + k];
        }
        off += n;
      }
      (void)cols;
    });
  }

  Id concat_cols(const std::vector<Id>& parts) {
    require(!parts.empty(), "concat_cols: empty input");
    int rows = val(parts[0]).rows();
    int cols = 0;
    bool track = false;
    for (Id p : parts) {
      require(val(p).rows() == rows, "concat_cols: row mismatch");
      cols += val(p).cols();
      track = track || tracked(p);
    }
    TensorData<S> out({rows, cols});
    int64_t coff = 0;
    for (Id p : parts) {
      const auto& tp = val(p);
      int pc = tp.cols();
      for (int i = 0; i < rows; ++i)
        std::copy(tp.v.begin() + int64_t(i) * pc, tp.v.begin() + int64_t(i + 1) * pc,
                  out.v.begin() + int64_t(i) * cols + coff);
      coff += pc;
    }
    auto ps = std::make_shared<std::vector<Id>>(parts);
    return push(std::move(out), track, [ps, rows, cols](Tape& t, Id self) {
      const auto& g = t.nodes_[self].grad;
      int64_t coff = 0;
      for (Id p : *ps) {
        int pc = t.val(p).cols();
        if (t.tracked(p)) {
          S* gp = t.grad_buf(p);
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < pc; ++j)
              gp[int64_t(i) * pc + j] += g[int64_t(i) * cols + coff + j];
        }
        coff += pc;
      }
    });
  }

  Id reshape(Id a, std::vector<int> shape) {
    auto& ta = val(a);
    require(TensorData<S>::numel_of(shape) == ta.numel(), "reshape: element count mismatch");
    TensorData<S> out;
    out.shape = std::move(shape);
    out.v = ta.v;
    return push(std::move(out), tracked(a), [a](Tape& t, Id self) {
      if (!t.tracked(a)) return;
      const auto& g = t.nodes_[self].grad;
      S* ga = t.grad_buf(a);
      for (size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
    });
  }

  // [b, h] -> [b*times, h], each source row repeated over a contiguous block.
  Id repeat_rows(Id a, int times) {
    auto& ta = val(a);
    require(times >= 1, "repeat_rows: times must be >= 1");
    int rows = ta.rows(), cols = ta.cols();
    TensorData<S> out({rows * times, cols});
    for (int i = 0; i < rows; ++i)
      for (int rep = 0; rep < times; ++rep)
        std::copy(ta.v.begin() + int64_t(i) * cols, ta.v.begin() + int64_t(i + 1) * cols,
                  out.v.begin() + (int64_t(i) * times + rep) * cols);
    return push(std::move(out), tracked(a), [a, times, rows, cols](Tape& t, Id self) {
      if (!t.tracked(a)) return;
      const auto& g = t.nodes_[self].grad;
      S* ga = t.grad_buf(a);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
          double acc = 0.0;
          for (int rep = 0; rep < times; ++rep)
            acc += double(g[(int64_t(i) * times + rep) * cols + j]);
          ga[int64_t(i) * cols + j] += S(acc);
        }
    });
  }

  // Multi-head scaled dot-product attention. q is [tq, d]; k and v are
  // [tk, d]; per-head width d/heads; causal masking requires tq == tk.
  // Probabilities are cached for the backward pass.
  Id attention(Id q, Id k, Id v, int heads, bool causal) {
    auto& tq = val(q);
    auto& tk = val(k);
    auto& tv = val(v);
    require(tq.shape.size() == 2 && tk.shape.size() == 2 && tv.shape.size() == 2,
            "attention: rank-2 operands required");
    int d = tq.shape[1];
    require(tk.shape[1] == d && tv.shape[1] == d, "attention: width mismatch");
    require(heads >= 1 && d % heads == 0, "attention: width must divide heads");
    int nq = tq.shape[0], nk = tk.shape[0];
    require(!causal || nq == nk, "attention: causal masking needs tq == tk");
    int hd = d / heads;
    S alpha = S(1.0 / std::sqrt(double(hd)));

    auto probs = std::make_shared<std::vector<S>>(size_t(heads) * nq * nk);
    TensorData<S> out({nq, d}, S(0));
    std::vector<S> scores(size_t(nq) * nk);
    for (int h = 0; h < heads; ++h) {
      const S* qh = tq.v.data() + int64_t(h) * hd;
      const S* kh = tk.v.data() + int64_t(h) * hd;
      const S* vh = tv.v.data() + int64_t(h) * hd;
      gemm_nt(nq, nk, hd, qh, d, kh, d, scores.data(), nk, false);
      S* ph = probs->data() + size_t(h) * nq * nk;
      for (int i = 0; i < nq; ++i) {
        S* row = scores.data() + int64_t(i) * nk;
        int limit = causal ? i + 1 : nk;
        for (int j = 0; j < limit; ++j) row[j] *= alpha;
        for (int j = limit; j < nk; ++j) row[j] = -std::numeric_limits<S>::infinity();
        softmax_row(row, nk);
        std::copy(row, row + nk, ph + int64_t(i) * nk);
      }
      gemm_nn(nq, hd, nk, ph, nk, vh, d, out.v.data() + int64_t(h) * hd, d, false);
    }
    int64_t pairs = causal ? int64_t(nq) * (nq + 1) / 2 : int64_t(nq) * nk;
    attention_flops_ += uint64_t(4) * d * pairs;

    return push(std::move(out), tracked(q) || tracked(k) || tracked(v),
                [q, k, v, heads, nq, nk, hd, d, alpha, probs](Tape& t, Id self) {
                  const S* go = t.nodes_[self].grad.data();
                  const auto& tq = t.val(q);
                  const auto& tk = t.val(k);
                  const auto& tv = t.val(v);
                  S* gq = t.tracked(q) ? t.grad_buf(q) : nullptr;
                  S* gk = t.tracked(k) ? t.grad_buf(k) : nullptr;
                  S* gv = t.tracked(v) ? t.grad_buf(v) : nullptr;
                  std::vector<S> dp(size_t(nq) * nk), ds(size_t(nq) * nk);
                  for (int h = 0; h < heads; ++h) {
                    const S* ph = probs->data() + size_t(h) * nq * nk;
                    const S* goh = go + int64_t(h) * hd;
                    const S* qh = tq.v.data() + int64_t(h) * hd;
                    const S* kh = tk.v.data() + int64_t(h) * hd;
                    const S* vh = tv.v.data() + int64_t(h) * hd;
                    if (gv) gemm_tn(nk, hd, nq, ph, nk, goh, d, gv + int64_t(h) * hd, d, true);
                    if (!gq && !gk) continue;
                    gemm_nt(nq, nk, hd, goh, d, vh, d, dp.data(), nk, false);
                    for (int i = 0; i < nq; ++i) {
                      const S* prow = ph + int64_t(i) * nk;
                      const S* dprow = dp.data() + int64_t(i) * nk;
                      S* dsrow = ds.data() + int64_t(i) * nk;
                      double dotv = 0.0;
                      for (int j = 0; j < nk; ++j) dotv += double(dprow[j]) * double(prow[j]);
                      for (int j = 0; j < nk; ++j)
                        dsrow[j] = S((double(dprow[j]) - dotv) * double(prow[j])) * alpha;
                    }
                    if (gq) gemm_nn(nq, hd, nk, ds.data(), nk, kh, d, gq + int64_t(h) * hd, d, true);
                    if (gk) gemm_tn(nk, hd, nq, ds.data(), nk, qh, d, gk + int64_t(h) * hd, d, true);
                  }
                });
  }

  // Mean cross entropy over rows of logits against integer targets.
  Id cross_entropy(Id logits, std::vector<int> targets) {
    auto& tl = val(logits);
    require(tl.shape.size() == 2, "cross_entropy: logits must be rank 2");
    int rows = tl.shape[0], cols = tl.shape[1];
    require(int(targets.size()) == rows, "cross_entropy: one target per row");
    for (int tgt : targets) require(tgt >= 0 && tgt < cols, "cross_entropy: target out of range");
    auto probs = std::make_shared<std::vector<S>>(tl.v);
    double loss = 0.0;
    for (int i = 0; i < rows; ++i) {
      S* row = probs->data() + int64_t(i) * cols;
      double m = double(row[0]);
      for (int j = 1; j < cols; ++j) m = std::max(m, double(row[j]));
      double z = 0.0;
      for (int j = 0; j < cols; ++j) z += std::exp(double(row[j]) - m);
      double lse = m + std::log(z);
      loss += lse - double(row[targets[i]]);
      for (int j = 0; j < cols; ++j) row[j] = S(std::exp(double(row[j]) - lse));
    }
    TensorData<S> out({1});
    out.v[0] = S(loss / rows);
    auto tgts = std::make_shared<std::vector<int>>(std::move(targets));
    return push(std::move(out), tracked(logits),
                [logits, rows, cols, probs, tgts](Tape& t, Id self) {
                  if (!t.tracked(logits)) return;
                  S g = t.nodes_[self].grad[0] / S(rows);
                  S* gl = t.grad_buf(logits);
                  for (int i = 0; i < rows; ++i) {
                    const S* prow = probs->data() + int64_t(i) * cols;
                    S* grow = gl + int64_t(i) * cols;
                    for (int j = 0; j < cols; ++j) grow[j] += g * prow[j];
                    grow[(*tgts)[i]] -= g;
                  }
                });
  }

  // Row lookup into a table parameter: out[r, :] = table[ids[r], :].
  Id embed(Id table, std::vector<int> ids) {
    auto& tt = val(table);
    require(tt.shape.size() == 2, "embed: table must be rank 2");
    int rows = int(ids.size()), cols = tt.shape[1];
    for (int id : ids) require(id >= 0 && id < tt.shape[0], "embed: index out of range");
    TensorData<S> out({rows, cols});
    for (int i = 0; i < rows; ++i)
      std::copy(tt.v.begin() + int64_t(ids[i]) * cols, tt.v.begin() + int64_t(ids[i] + 1) * cols,
                out.v.begin() + int64_t(i) * cols);
    auto idv = std::make_shared<std::vector<int>>(std::move(ids));
    return push(std::move(out), tracked(table), [table, idv, cols](Tape& t, Id self) {
      if (!t.tracked(table)) return;
      const auto& g = t.nodes_[self].grad;
      S* gt = t.grad_buf(table);
      for (size_t i = 0; i < idv->size(); ++i)
        for (int j = 0; j < cols; ++j)
          gt[int64_t((*idv)[i]) * cols + j] += g[int64_t(i) * cols + j];
    });
  }

  // Escape hatch for fused custom ops: caller supplies the forward value and
  // a backward closure that routes grad(self) into the inputs' grad buffers.
  Id make_node(TensorData<S> value, const std::vector<Id>& inputs,
               std::function<void(Tape&, Id)> backward) {
    bool track = false;
    for (Id in : inputs) track = track || tracked(in);
    return push(std::move(value), track, track ? std::move(backward) : nullptr);
  }

  void backward(Id root) {
    if (nodes_.empty() || root < 0 || root >= Id(nodes_.size()))
      throw InvalidState("backward: no such node on this tape");
    if (val(root).numel() != 1)
      throw std::invalid_argument("backward: root must be a scalar");
    for (auto& n : nodes_) n.grad.clear();
    nodes_[root].grad.assign(1, S(1));
    for (Id id = root; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.track || !n.bw || n.grad.empty()) continue;
      n.bw(*this, id);
    }
  }

  const TensorData<S>& val(Id id) const { return nodes_[id].val; }
  bool tracked(Id id) const { return nodes_[id].track; }
  // Gradient buffer of a node, allocated (zeroed) on first use.
  S* grad_buf(Id id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(size_t(n.val.numel()), S(0));
    return n.grad.data();
  }
  const std::vector<S>& grad_of(Id id) const { return nodes_[id].grad; }
  size_t size() const { return nodes_.size(); }
  uint64_t attention_flops() const { return attention_flops_; }

 private:
  struct Node {
    TensorData<S> val;
    std::vector<S> grad;
    std::function<void(Tape&, Id)> bw;
    bool track = false;
  };

  static void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  }

  static void softmax_row(S* row, int n) {
    S m = row[0];
    for (int j = 1; j < n; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      double e = std::exp(double(row[j]) - double(m));
      row[j] = S(e);
      z += e;
    }
    double inv = 1.0 / z;
    for (int j = 0; j < n; ++j) row[j] = S(double(row[j]) * inv);
  }

  Id push(TensorData<S> val, bool track, std::function<void(Tape&, Id)> bw) {
    Node n;
    n.val = std::move(val);
    n.track = track;
    n.bw = track ? std::move(bw) : nullptr;
    nodes_.push_back(std::move(n));
    return Id(nodes_.size() - 1);
  }

  Id bin_broadcast(Id a, Id b, bool is_mul) {
    auto& ta = val(a);
    auto& tb = val(b);
    bool bcast = tb.numel() != ta.numel();
    if (bcast)
      require(tb.rows() == 1 && tb.cols() == ta.cols(),
              is_mul ? "mul: shapes must match or b must be one broadcast row"
                     : "add: shapes must match or b must be one broadcast row");
    else
      require(ta.shape == tb.shape || (ta.numel() == tb.numel() && ta.cols() == tb.cols()),
              is_mul ? "mul: shape mismatch" : "add: shape mismatch");
    int rows = ta.rows(), cols = ta.cols();
    TensorData<S> out = ta;
    for (int i = 0; i < rows; ++i) {
      S* orow = out.v.data() + int64_t(i) * cols;
      const S* brow = tb.v.data() + (bcast ? 0 : int64_t(i) * cols);
      if (is_mul)
        for (int j = 0; j < cols; ++j) orow[j] *= brow[j];
      else
        for (int j = 0; j < cols; ++j) orow[j] += brow[j];
    }
    return push(std::move(out), tracked(a) || tracked(b),
                [a, b, rows, cols, bcast, is_mul](Tape& t, Id self) {
                  const auto& g = t.nodes_[self].grad;
                  const auto& ta = t.val(a);
                  const auto& tb = t.val(b);
                  if (t.tracked(a)) {
                    S* ga = t.grad_buf(a);
                    for (int i = 0; i < rows; ++i) {
                      const S* brow = tb.v.data() + (bcast ? 0 : int64_t(i) * cols);
                      for (int j = 0; j < cols; ++j) {
                        int64_t k = int64_t(i) * cols + j;
                        ga[k] += is_mul ? g[k] * brow[j] : g[k];
                      }
                    }
                  }
                  if (t.tracked(b)) {
                    S* gb = t.grad_buf(b);
                    if (bcast) {
                      for (int j = 0; j < cols; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < rows; ++i) {
                          int64_t k = int64_t(i) * cols + j;
                          acc += is_mul ? double(g[k]) * double(ta.v[k]) : double(g[k]);
                        }
                        gb[j] += S(acc);
                      }
                    } else {
                      for (int64_t k = 0; k < int64_t(rows) * cols; ++k)
                        gb[k] += is_mul ? g[k] * ta.v[k] : g[k];
                    }
                  }
                });
  }

  Id reduce(Id a, bool is_mean) {
    auto& ta = val(a);
    int64_t n = ta.numel();
    require(n > 0, "reduce on empty tensor");
    double acc = 0.0;
    for (const S& x : ta.v) acc += double(x);
    TensorData<S> out({1});
    out.v[0] = S(is_mean ? acc / double(n) : acc);
    return push(std::move(out), tracked(a), [a, n, is_mean](Tape& t, Id self) {
      if (!t.tracked(a)) return;
      S g = t.nodes_[self].grad[0];
      if (is_mean) g = g / S(double(n));
      S* ga = t.grad_buf(a);
      for (int64_t k = 0; k < n; ++k) ga[k] += g;
    });
  }

  std::vector<Node> nodes_;
  ParamStore<S>* store_ = nullptr;
  uint64_t attention_flops_ = 0;
};

// Decoupled-weight-decay Adam with bias correction. Moment state lives here,
// keyed by parameter name, so it can be checkpointed alongside the weights.
template <class S>
class AdamW {
 public:
  explicit AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore<S>& store, double lr, double weight_decay) {
    if (store.backward_runs() == 0)
      throw InvalidState("adamw: gradients have not been populated");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, double(t_));
    double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (int k = 0; k < store.count(); ++k) {
      Param<S>& p = store.by_index(k);
      auto& st = state_[p.name];
      if (st.m.v.empty()) {
        st.m = TensorData<S>(p.value.shape);
        st.v = TensorData<S>(p.value.shape);
      }
      for (size_t i = 0; i < p.value.v.size(); ++i) {
        double g = double(p.grad.v[i]);
        double m = beta1_ * double(st.m.v[i]) + (1.0 - beta1_) * g;
        double v = beta2_ * double(st.v.v[i]) + (1.0 - beta2_) * g * g;
        st.m.v[i] = S(m);
        st.v.v[i] = S(v);
        double update = (m / bc1) / (std::sqrt(v / bc2) + eps_) + weight_decay * double(p.value.v[i]);
        p.value.v[i] = S(double(p.value.v[i]) - lr * update);
      }
    }
  }

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  TensorData<S>& moment1(const std::string& name) { return state_[name].m; }
  TensorData<S>& moment2(const std::string& name) { return state_[name].v; }

 private:
  struct Moments {
    TensorData<S> m, v;
  };
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::unordered_map<std::string, Moments> state_;
};

// Uniform Glorot-style init in +-sqrt(6 / (fan_in + fan_out)).
template <class S>
void init_linear(Param<S>& p, Rng rng) {
  int fan_in = p.value.shape.size() >= 1 ? p.value.shape[0] : 1;
  int fan_out = p.value.shape.size() >= 2 ? p.value.shape[1] : fan_in;
  double bound = std::sqrt(6.0 / double(fan_in + fan_out));
  for (S& x : p.value.v) x = S(rng.uniform(-bound, bound));
}

}  // namespace vgen
