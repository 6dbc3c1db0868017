#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "ocrrestore/error.hpp"
#include "ocrrestore/neural/tensor.hpp"
#include "ocrrestore/rng.hpp"

namespace ocrrestore {
namespace neural {

// Reverse-mode autodiff over a flat list of eagerly evaluated nodes.
// Node index order is the topological order used by backward(). A tape is
// built per mini-batch and cleared afterwards; it is single-owner and not
// thread-safe.
template <typename T>
class Tape {
 public:
  using Var = int;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  // Drops all nodes from index n on; earlier Vars stay valid. Lets decode
  // loops reuse one tape (leased params + encoder output) across steps.
  void truncate(std::size_t n) {
    require(n <= nodes_.size(), "tape truncate beyond size");
    nodes_.resize(n);
  }

  // When set, every op output is scanned for NaN/Inf.
  void set_guard(bool on) { guard_ = on; }

  const Tensor<T>& val(Var v) const { return nodes_[static_cast<std::size_t>(v)].val; }
  Tensor<T>& val(Var v) { return nodes_[static_cast<std::size_t>(v)].val; }
  const Tensor<T>& grad(Var v) const { return nodes_[static_cast<std::size_t>(v)].grad; }
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v)].needs_grad; }

  Var leaf(Tensor<T> value, bool needs_grad = false) {
    return push(std::move(value), needs_grad, "leaf");
  }

  // ---- elementwise ----

  Var add(Var a, Var b) {
    const Tensor<T>&A = val(a), &B = val(b);
    require(A.same_shape(B), "add " + A.shape_str() + " vs " + B.shape_str());
    Tensor<T> out = A;
    for (Index i = 0; i < out.numel(); ++i) out.at(i) += B.at(i);
    return unary_binary(std::move(out), a, b, [](Tape& t, Var o, Var pa, Var pb) {
      const Tensor<T>& g = t.grad_of(o);
      t.accumulate(pa, [&](Tensor<T>& d) {
        for (Index i = 0; i < g.numel(); ++i) d.at(i) += g.at(i);
      });
      t.accumulate(pb, [&](Tensor<T>& d) {
        for (Index i = 0; i < g.numel(); ++i) d.at(i) += g.at(i);
      });
    });
  }

  Var mul(Var a, Var b) {
    const Tensor<T>&A = val(a), &B = val(b);
    require(A.same_shape(B), "mul " + A.shape_str() + " vs " + B.shape_str());
    Tensor<T> out = A;
    for (Index i = 0; i < out.numel(); ++i) out.at(i) *= B.at(i);
    return unary_binary(std::move(out), a, b, [](Tape& t, Var o, Var pa, Var pb) {
      const Tensor<T>& g = t.grad_of(o);
      const Tensor<T>&A2 = t.val(pa), &B2 = t.val(pb);
      t.accumulate(pa, [&](Tensor<T>& d) {
        for (Index i = 0; i < g.numel(); ++i) d.at(i) += g.at(i) * B2.at(i);
      });
      t.accumulate(pb, [&](Tensor<T>& d) {
        for (Index i = 0; i < g.numel(); ++i) d.at(i) += g.at(i) * A2.at(i);
      });
    });
  }

  // alpha * x + beta
  Var affine(Var x, T alpha, T beta) {
    Tensor<T> out = val(x);
    for (T& v : out.data) v = alpha * v + beta;
    return unary(std::move(out), x, [alpha](Tape& t, Var o, Var p) {
      const Tensor<T>& g = t.grad_of(o);
      t.accumulate(p, [&](Tensor<T>& d) {
        for (Index i = 0; i < g.numel(); ++i) d.at(i) += alpha * g.at(i);
      });
    });
  }

  Var sigmoid(Var x) {
    Tensor<T> out = val(x);
    for (T& v : out.data) v = T{1} / (T{1} + std::exp(-v));
    return unary(std::move(out), x, [](Tape& t, Var o, Var p) {
      const Tensor<T>&g = t.grad_of(o), &y = t.val(o);
      t.accumulate(p, [&](Tensor<T>& d) {
        for (Index i = 0; i < g.numel(); ++i) d.at(i) += g.at(i) * y.at(i) * (T{1} - y.at(i));
      });
    });
  }

  Var tanh_act(Var x) {
    Tensor<T> out = val(x);
    for (T& v : out.data) v = std::tanh(v);
    return unary(std::move(out), x, [](Tape& t, Var o, Var p) {
      const Tensor<T>&g = t.grad_of(o), &y = t.val(o);
      t.accumulate(p, [&](Tensor<T>& d) {
        for (Index i = 0; i < g.numel(); ++i) d.at(i) += g.at(i) * (T{1} - y.at(i) * y.at(i));
      });
    });
  }

  Var relu(Var x) {
    Tensor<T> out = val(x);
    for (T& v : out.data) v = v > T{0} ? v : T{0};
    return unary(std::move(out), x, [](Tape& t, Var o, Var p) {
      const Tensor<T>&g = t.grad_of(o), &xin = t.val(p);
      t.accumulate(p, [&](Tensor<T>& d) {
        for (Index i = 0; i < g.numel(); ++i) d.at(i) += xin.at(i) > T{0} ? g.at(i) : T{0};
      });
    });
  }

  // elementwise reciprocal
  Var inv(Var x) {
    Tensor<T> out = val(x);
    for (T& v : out.data) v = T{1} / v;
    return unary(std::move(out), x, [](Tape& t, Var o, Var p) {
      const Tensor<T>&g = t.grad_of(o), &y = t.val(o);
      t.accumulate(p, [&](Tensor<T>& d) {
        for (Index i = 0; i < g.numel(); ++i) d.at(i) -= g.at(i) * y.at(i) * y.at(i);
      });
    });
  }

  // rows of x scaled by a constant per-row factor (no grad through m)
  Var mul_colvec(Var x, std::vector<T> m) {
    const Tensor<T>& X = val(x);
    require(X.ndim() == 2 && X.dim(0) == static_cast<Index>(m.size()), "mul_colvec rows");
    Tensor<T> out = X;
    for (Index r = 0; r < X.dim(0); ++r) {
      for (Index c = 0; c < X.dim(1); ++c) out.at(r, c) *= m[static_cast<std::size_t>(r)];
    }
    auto mv = std::make_shared<std::vector<T>>(std::move(m));
    return unary(std::move(out), x, [mv](Tape& t, Var o, Var p) {
      const Tensor<T>& g = t.grad_of(o);
      t.accumulate(p, [&](Tensor<T>& d) {
        for (Index r = 0; r < g.dim(0); ++r) {
          for (Index c = 0; c < g.dim(1); ++c) d.at(r, c) += g.at(r, c) * (*mv)[static_cast<std::size_t>(r)];
        }
      });
    });
  }

  // ---- linear algebra ----

  Var matmul(Var a, Var b) {
    const Tensor<T>&A = val(a), &B = val(b);
    require(A.ndim() == 2 && B.ndim() == 2 && A.dim(1) == B.dim(0),
            "matmul " + A.shape_str() + " x " + B.shape_str());
    Tensor<T> out({A.dim(0), B.dim(1)});
    gemm_nn(A.data.data(), B.data.data(), out.data.data(), A.dim(0), A.dim(1), B.dim(1));
    return unary_binary(std::move(out), a, b, [](Tape& t, Var o, Var pa, Var pb) {
      const Tensor<T>&g = t.grad_of(o), &A2 = t.val(pa), &B2 = t.val(pb);
      const Index m = A2.dim(0), k = A2.dim(1), n = B2.dim(1);
      t.accumulate(pa, [&](Tensor<T>& d) {
        gemm_nt(g.data.data(), B2.data.data(), d.data.data(), m, n, k);
      });
      t.accumulate(pb, [&](Tensor<T>& d) {
        gemm_tn(A2.data.data(), g.data.data(), d.data.data(), m, k, n);
      });
    });
  }

  // x[R,K] * w[K,N] + b[N]
  Var linear(Var x, Var w, Var b) {
    const Tensor<T>&X = val(x), &W = val(w), &B = val(b);
    require(X.ndim() == 2 && W.ndim() == 2 && X.dim(1) == W.dim(0) && B.numel() == W.dim(1),
            "linear " + X.shape_str() + " x " + W.shape_str());
    Tensor<T> out({X.dim(0), W.dim(1)});
    for (Index r = 0; r < out.dim(0); ++r) {
      for (Index c = 0; c < out.dim(1); ++c) out.at(r, c) = B.at(c);
    }
    gemm_nn(X.data.data(), W.data.data(), out.data.data(), X.dim(0), X.dim(1), W.dim(1));
    Var o = push(std::move(out), needs_grad(x) || needs_grad(w) || needs_grad(b), "linear");
    node(o).back = [x, w, b, o](Tape& t) {
      const Tensor<T>&g = t.grad_of(o), &X2 = t.val(x), &W2 = t.val(w);
      const Index m = X2.dim(0), k = X2.dim(1), n = W2.dim(1);
      t.accumulate(x, [&](Tensor<T>& d) {
        gemm_nt(g.data.data(), W2.data.data(), d.data.data(), m, n, k);
      });
      t.accumulate(w, [&](Tensor<T>& d) {
        gemm_tn(X2.data.data(), g.data.data(), d.data.data(), m, k, n);
      });
      t.accumulate(b, [&](Tensor<T>& d) {
        for (Index r = 0; r < m; ++r) {
          for (Index c = 0; c < n; ++c) d.at(c) += g.at(r, c);
        }
      });
    };
    return o;
  }

  // table[V,D] gathered by row ids -> [n,D]
  Var embedding_rows(Var table, std::vector<int> ids) {
    const Tensor<T>& Tb = val(table);
    require(Tb.ndim() == 2, "embedding table must be 2-d");
    for (int id : ids) require(id >= 0 && id < Tb.dim(0), "embedding id out of range");
    Tensor<T> out({static_cast<Index>(ids.size()), Tb.dim(1)});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (Index c = 0; c < Tb.dim(1); ++c) out.at(static_cast<Index>(i), c) = Tb.at(ids[i], c);
    }
    auto idv = std::make_shared<std::vector<int>>(std::move(ids));
    return unary(std::move(out), table, [idv](Tape& t, Var o, Var p) {
      const Tensor<T>& g = t.grad_of(o);
      t.accumulate(p, [&](Tensor<T>& d) {
        for (std::size_t i = 0; i < idv->size(); ++i) {
          for (Index c = 0; c < g.dim(1); ++c) d.at((*idv)[i], c) += g.at(static_cast<Index>(i), c);
        }
      });
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols of nothing");
    const Index rows = val(parts[0]).dim(0);
    Index cols = 0;
    bool any_grad = false;
    for (Var p : parts) {
      require(val(p).ndim() == 2 && val(p).dim(0) == rows, "concat_cols rows");
      cols += val(p).dim(1);
      any_grad = any_grad || needs_grad(p);
    }
    Tensor<T> out({rows, cols});
    Index offset = 0;
    for (Var p : parts) {
      const Tensor<T>& P = val(p);
      for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < P.dim(1); ++c) out.at(r, offset + c) = P.at(r, c);
      }
      offset += P.dim(1);
    }
    Var o = push(std::move(out), any_grad, "concat_cols");
    auto ps = std::make_shared<std::vector<Var>>(parts);
    node(o).back = [ps, o](Tape& t) {
      const Tensor<T>& g = t.grad_of(o);
      Index off = 0;
      for (Var p : *ps) {
        const Index pc = t.val(p).dim(1);
        t.accumulate(p, [&](Tensor<T>& d) {
          for (Index r = 0; r < g.dim(0); ++r) {
            for (Index c = 0; c < pc; ++c) d.at(r, c) += g.at(r, off + c);
          }
        });
        off += pc;
      }
    };
    return o;
  }

  Var concat_rows(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_rows of nothing");
    const Index cols = val(parts[0]).dim(1);
    Index rows = 0;
    bool any_grad = false;
    for (Var p : parts) {
      require(val(p).ndim() == 2 && val(p).dim(1) == cols, "concat_rows cols");
      rows += val(p).dim(0);
      any_grad = any_grad || needs_grad(p);
    }
    Tensor<T> out({rows, cols});
    Index offset = 0;
    for (Var p : parts) {
      const Tensor<T>& P = val(p);
      std::copy(P.data.begin(), P.data.end(), out.data.begin() + offset * cols);
      offset += P.dim(0);
    }
    Var o = push(std::move(out), any_grad, "concat_rows");
    auto ps = std::make_shared<std::vector<Var>>(parts);
    node(o).back = [ps, o](Tape& t) {
      const Tensor<T>& g = t.grad_of(o);
      const Index gcols = g.dim(1);
      Index off = 0;
      for (Var p : *ps) {
        const Index pr = t.val(p).dim(0);
        t.accumulate(p, [&](Tensor<T>& d) {
          for (Index r = 0; r < pr; ++r) {
            for (Index c = 0; c < gcols; ++c) d.at(r, c) += g.at(off + r, c);
          }
        });
        off += pr;
      }
    };
    return o;
  }

  Var slice_cols(Var x, Index lo, Index hi) {
    const Tensor<T>& X = val(x);
    require(X.ndim() == 2 && lo >= 0 && lo < hi && hi <= X.dim(1), "slice_cols bounds");
    Tensor<T> out({X.dim(0), hi - lo});
    for (Index r = 0; r < X.dim(0); ++r) {
      for (Index c = lo; c < hi; ++c) out.at(r, c - lo) = X.at(r, c);
    }
    return unary(std::move(out), x, [lo, hi](Tape& t, Var o, Var p) {
      const Tensor<T>& g = t.grad_of(o);
      t.accumulate(p, [&](Tensor<T>& d) {
        for (Index r = 0; r < g.dim(0); ++r) {
          for (Index c = lo; c < hi; ++c) d.at(r, c) += g.at(r, c - lo);
        }
      });
    });
  }

  Var slice_rows(Var x, Index lo, Index hi) {
    const Tensor<T>& X = val(x);
    require(X.ndim() == 2 && lo >= 0 && lo < hi && hi <= X.dim(0), "slice_rows bounds");
    Tensor<T> out({hi - lo, X.dim(1)});
    for (Index r = lo; r < hi; ++r) {
      for (Index c = 0; c < X.dim(1); ++c) out.at(r - lo, c) = X.at(r, c);
    }
    return unary(std::move(out), x, [lo, hi](Tape& t, Var o, Var p) {
      const Tensor<T>& g = t.grad_of(o);
      t.accumulate(p, [&](Tensor<T>& d) {
        for (Index r = lo; r < hi; ++r) {
          for (Index c = 0; c < g.dim(1); ++c) d.at(r, c) += g.at(r - lo, c);
        }
      });
    });
  }

  // ---- normalization, regularization, losses ----

  // Normalizes each row of x over the last dimension, then scales/shifts by
  // gamma/beta.
  Var layer_norm(Var x, Var gamma, Var beta, T eps = static_cast<T>(1e-5)) {
    const Tensor<T>&X = val(x), &G = val(gamma), &Bt = val(beta);
    require(X.ndim() == 2 && G.numel() == X.dim(1) && Bt.numel() == X.dim(1), "layer_norm shapes");
    const Index rows = X.dim(0), cols = X.dim(1);
    Tensor<T> out({rows, cols});
    auto xhat = std::make_shared<Tensor<T>>(std::vector<Index>{rows, cols});
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
    for (Index r = 0; r < rows; ++r) {
      T mean{0};
      for (Index c = 0; c < cols; ++c) mean += X.at(r, c);
      mean /= static_cast<T>(cols);
      T var{0};
      for (Index c = 0; c < cols; ++c) {
        const T d = X.at(r, c) - mean;
        var += d * d;
      }
      var /= static_cast<T>(cols);
      const T istd = T{1} / std::sqrt(var + eps);
      (*inv_std)[static_cast<std::size_t>(r)] = istd;
      for (Index c = 0; c < cols; ++c) {
        const T h = (X.at(r, c) - mean) * istd;
        xhat->at(r, c) = h;
        out.at(r, c) = G.at(c) * h + Bt.at(c);
      }
    }
    Var o = push(std::move(out), needs_grad(x) || needs_grad(gamma) || needs_grad(beta), "layer_norm");
    node(o).back = [x, gamma, beta, o, xhat, inv_std](Tape& t) {
      const Tensor<T>&g = t.grad_of(o), &G2 = t.val(gamma);
      const Index rows = g.dim(0), cols = g.dim(1);
      t.accumulate(gamma, [&](Tensor<T>& d) {
        for (Index r = 0; r < rows; ++r) {
          for (Index c = 0; c < cols; ++c) d.at(c) += g.at(r, c) * xhat->at(r, c);
        }
      });
      t.accumulate(beta, [&](Tensor<T>& d) {
        for (Index r = 0; r < rows; ++r) {
          for (Index c = 0; c < cols; ++c) d.at(c) += g.at(r, c);
        }
      });
      t.accumulate(x, [&](Tensor<T>& d) {
        for (Index r = 0; r < rows; ++r) {
          T sum_gy{0}, sum_gyh{0};
          for (Index c = 0; c < cols; ++c) {
            const T gy = g.at(r, c) * G2.at(c);
            sum_gy += gy;
            sum_gyh += gy * xhat->at(r, c);
          }
          const T inv_n = T{1} / static_cast<T>(cols);
          const T istd = (*inv_std)[static_cast<std::size_t>(r)];
          for (Index c = 0; c < cols; ++c) {
            const T gy = g.at(r, c) * G2.at(c);
            d.at(r, c) += istd * (gy - sum_gy * inv_n - xhat->at(r, c) * sum_gyh * inv_n);
          }
        }
      });
    };
    return o;
  }

  // Inverted dropout; identity when rate == 0 or not training.
  Var dropout(Var x, T rate, RandomSource& rng, bool training) {
    if (!training || rate <= T{0}) return x;
    const Tensor<T>& X = val(x);
    const T keep = T{1} - rate;
    auto mask = std::make_shared<std::vector<std::uint8_t>>(static_cast<std::size_t>(X.numel()));
    Tensor<T> out = X;
    for (Index i = 0; i < X.numel(); ++i) {
      const bool kept = static_cast<T>(rng.uniform()) >= rate;
      (*mask)[static_cast<std::size_t>(i)] = kept ? 1 : 0;
      out.at(i) = kept ? X.at(i) / keep : T{0};
    }
    return unary(std::move(out), x, [mask, keep](Tape& t, Var o, Var p) {
      const Tensor<T>& g = t.grad_of(o);
      t.accumulate(p, [&](Tensor<T>& d) {
        for (Index i = 0; i < g.numel(); ++i) {
          if ((*mask)[static_cast<std::size_t>(i)]) d.at(i) += g.at(i) / keep;
        }
      });
    });
  }

  Var log_softmax_rows(Var x) {
    const Tensor<T>& X = val(x);
    require(X.ndim() == 2, "log_softmax input must be 2-d");
    const Index rows = X.dim(0), cols = X.dim(1);
    Tensor<T> out({rows, cols});
    for (Index r = 0; r < rows; ++r) {
      T mx = X.at(r, 0);
      for (Index c = 1; c < cols; ++c) mx = std::max(mx, X.at(r, c));
      T sum{0};
      for (Index c = 0; c < cols; ++c) sum += std::exp(X.at(r, c) - mx);
      const T log_z = mx + std::log(sum);
      for (Index c = 0; c < cols; ++c) out.at(r, c) = X.at(r, c) - log_z;
    }
    return unary(std::move(out), x, [](Tape& t, Var o, Var p) {
      const Tensor<T>&g = t.grad_of(o), &y = t.val(o);
      t.accumulate(p, [&](Tensor<T>& d) {
        for (Index r = 0; r < g.dim(0); ++r) {
          T gsum{0};
          for (Index c = 0; c < g.dim(1); ++c) gsum += g.at(r, c);
          for (Index c = 0; c < g.dim(1); ++c) {
            d.at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * gsum;
          }
        }
      });
    });
  }

  // Weighted mean of -logp[r, ids[r]] over rows with weight > 0.
  Var masked_nll(Var logp, std::vector<int> ids, std::vector<T> weights) {
    const Tensor<T>& L = val(logp);
    require(L.ndim() == 2 && L.dim(0) == static_cast<Index>(ids.size()) &&
                ids.size() == weights.size(),
            "masked_nll shapes");
    T total_w{0};
    for (T w : weights) total_w += w;
    require(total_w > T{0}, "masked_nll needs at least one unmasked position");
    T loss{0};
    for (std::size_t r = 0; r < ids.size(); ++r) {
      require(ids[r] >= 0 && ids[r] < L.dim(1), "masked_nll id range");
      loss -= weights[r] * L.at(static_cast<Index>(r), ids[r]);
    }
    loss /= total_w;
    Tensor<T> out({1});
    out.at(0) = loss;
    auto idv = std::make_shared<std::vector<int>>(std::move(ids));
    auto wv = std::make_shared<std::vector<T>>(std::move(weights));
    return unary(std::move(out), logp, [idv, wv, total_w](Tape& t, Var o, Var p) {
      const T gscale = t.grad_of(o).at(0) / total_w;
      t.accumulate(p, [&](Tensor<T>& d) {
        for (std::size_t r = 0; r < idv->size(); ++r) {
          d.at(static_cast<Index>(r), (*idv)[r]) -= gscale * (*wv)[r];
        }
      });
    });
  }

  // ---- scaled dot-product attention ----
  //
  // q: [B*Lq, d], k, v: [B*Lk, d] with d = heads*dh. The additive mask has
  // shape [B, Lq, Lk] and is shared across heads (0 = attend, large
  // negative = blocked). Softmax weights are kept for the backward pass.
  Var attention(Var q, Var k, Var v, Tensor<T> mask, Index batch, Index heads, T dropout_rate,
                RandomSource& rng, bool training) {
    const Tensor<T>&Q = val(q), &K = val(k), &V = val(v);
    require(Q.ndim() == 2 && K.ndim() == 2 && V.ndim() == 2, "attention inputs 2-d");
    const Index d = Q.dim(1);
    require(d == K.dim(1) && d == V.dim(1) && d % heads == 0, "attention head split");
    require(Q.dim(0) % batch == 0 && K.dim(0) % batch == 0, "attention batch split");
    require(K.dim(0) == V.dim(0), "attention k/v rows");
    const Index lq = Q.dim(0) / batch, lk = K.dim(0) / batch;
    require(mask.ndim() == 3 && mask.dim(0) == batch && mask.dim(1) == lq && mask.dim(2) == lk,
            "attention mask shape");
    const Index dh = d / heads;
    const T scale = T{1} / std::sqrt(static_cast<T>(dh));
    const T keep = T{1} - dropout_rate;
    const bool do_drop = training && dropout_rate > T{0};

    auto weights = std::make_shared<Tensor<T>>(std::vector<Index>{batch * heads, lq, lk});
    auto drop_mask = std::make_shared<std::vector<std::uint8_t>>();
    if (do_drop) drop_mask->assign(static_cast<std::size_t>(batch * heads * lq * lk), 1);

    Tensor<T> out({batch * lq, d});
    std::vector<T> scores(static_cast<std::size_t>(lk));
    for (Index b = 0; b < batch; ++b) {
      for (Index h = 0; h < heads; ++h) {
        const Index bh = b * heads + h;
        for (Index i = 0; i < lq; ++i) {
          const T* qrow = &Q.at(b * lq + i, h * dh);
          T mx = -std::numeric_limits<T>::infinity();
          for (Index j = 0; j < lk; ++j) {
            const T* krow = &K.at(b * lk + j, h * dh);
            T s{0};
            for (Index c = 0; c < dh; ++c) s += qrow[c] * krow[c];
            s = s * scale + mask.at(b, i, j);
            scores[static_cast<std::size_t>(j)] = s;
            mx = std::max(mx, s);
          }
          T sum{0};
          for (Index j = 0; j < lk; ++j) {
            const T e = std::exp(scores[static_cast<std::size_t>(j)] - mx);
            weights->at(bh, i, j) = e;
            sum += e;
          }
          const T inv_sum = T{1} / sum;
          T* orow = &out.at(b * lq + i, h * dh);
          for (Index c = 0; c < dh; ++c) orow[c] = T{0};
          for (Index j = 0; j < lk; ++j) {
            T w = weights->at(bh, i, j) * inv_sum;
            weights->at(bh, i, j) = w;
            T w_eff = w;
            if (do_drop) {
              const bool kept = static_cast<T>(rng.uniform()) >= dropout_rate;
              (*drop_mask)[static_cast<std::size_t>(((bh * lq) + i) * lk + j)] = kept ? 1 : 0;
              w_eff = kept ? w / keep : T{0};
            }
            if (w_eff == T{0}) continue;
            const T* vrow = &V.at(b * lk + j, h * dh);
            for (Index c = 0; c < dh; ++c) orow[c] += w_eff * vrow[c];
          }
        }
      }
    }

    auto mask_ptr = std::make_shared<Tensor<T>>(std::move(mask));
    Var o = push(std::move(out), needs_grad(q) || needs_grad(k) || needs_grad(v), "attention");
    node(o).back = [q, k, v, o, weights, drop_mask, batch, heads, lq, lk, dh, scale, keep,
                    do_drop](Tape& t) {
      const Tensor<T>& g = t.grad_of(o);
      const Tensor<T>&Q2 = t.val(q), &K2 = t.val(k), &V2 = t.val(v);
      Tensor<T> dq({batch * lq, heads * dh});
      Tensor<T> dk({batch * lk, heads * dh});
      Tensor<T> dv({batch * lk, heads * dh});
      std::vector<T> dw(static_cast<std::size_t>(lk));
      for (Index b = 0; b < batch; ++b) {
        for (Index h = 0; h < heads; ++h) {
          const Index bh = b * heads + h;
          for (Index i = 0; i < lq; ++i) {
            const T* grow = &g.at(b * lq + i, h * dh);
            // dv, dw
            for (Index j = 0; j < lk; ++j) {
              T w = weights->at(bh, i, j);
              T w_eff = w;
              if (do_drop) {
                const bool kept = (*drop_mask)[static_cast<std::size_t>(((bh * lq) + i) * lk + j)] != 0;
                w_eff = kept ? w / keep : T{0};
              }
              const T* vrow = &V2.at(b * lk + j, h * dh);
              T dot{0};
              for (Index c = 0; c < dh; ++c) dot += grow[c] * vrow[c];
              if (w_eff != T{0}) {
                T* dvr = &dv.at(b * lk + j, h * dh);
                for (Index c = 0; c < dh; ++c) dvr[c] += w_eff * grow[c];
              }
              // chain through dropout into the softmax weight
              T dwj = dot;
              if (do_drop) {
                const bool kept = (*drop_mask)[static_cast<std::size_t>(((bh * lq) + i) * lk + j)] != 0;
                dwj = kept ? dot / keep : T{0};
              }
              dw[static_cast<std::size_t>(j)] = dwj;
            }
            // softmax jacobian: ds = w*(dw - sum_j dw_j w_j)
            T row_dot{0};
            for (Index j = 0; j < lk; ++j) {
              row_dot += dw[static_cast<std::size_t>(j)] * weights->at(bh, i, j);
            }
            T* dqr = &dq.at(b * lq + i, h * dh);
            for (Index j = 0; j < lk; ++j) {
              const T w = weights->at(bh, i, j);
              const T ds = w * (dw[static_cast<std::size_t>(j)] - row_dot) * scale;
              if (ds == T{0}) continue;
              const T* krow = &K2.at(b * lk + j, h * dh);
              const T* qrow = &Q2.at(b * lq + i, h * dh);
              T* dkr = &dk.at(b * lk + j, h * dh);
              for (Index c = 0; c < dh; ++c) {
                dqr[c] += ds * krow[c];
                dkr[c] += ds * qrow[c];
              }
            }
          }
        }
      }
      t.accumulate(q, [&](Tensor<T>& d) {
        for (Index i = 0; i < d.numel(); ++i) d.at(i) += dq.at(i);
      });
      t.accumulate(k, [&](Tensor<T>& d) {
        for (Index i = 0; i < d.numel(); ++i) d.at(i) += dk.at(i);
      });
      t.accumulate(v, [&](Tensor<T>& d) {
        for (Index i = 0; i < d.numel(); ++i) d.at(i) += dv.at(i);
      });
    };
    (void)mask_ptr;
    return o;
  }

  // ---- backward ----

  void backward(Var root) {
    require(val(root).numel() == 1, "backward root must be scalar");
    Node& r = node(root);
    if (!r.needs_grad) return;
    if (r.grad.numel() == 0) r.grad = Tensor<T>::zeros(r.val.shape);
    r.grad.at(0) = T{1};
    for (Var i = root; i >= 0; --i) {
      Node& n = node(i);
      if (!n.needs_grad || !n.back || n.grad.numel() == 0) continue;
      n.back(*this);
    }
  }

 private:
  struct Node {
    Tensor<T> val;
    Tensor<T> grad;  // allocated on first accumulation
    bool needs_grad = false;
    std::function<void(Tape&)> back;
  };

  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v)]; }

  const Tensor<T>& grad_of(Var v) { return nodes_[static_cast<std::size_t>(v)].grad; }

  // Runs fn on the parent's gradient tensor, allocating it on demand.
  // Parents that do not need gradients are skipped.
  template <typename Fn>
  void accumulate(Var parent, Fn&& fn) {
    Node& p = node(parent);
    if (!p.needs_grad) return;
    if (p.grad.numel() == 0) p.grad = Tensor<T>::zeros(p.val.shape);
    fn(p.grad);
  }

  Var push(Tensor<T> value, bool needs_grad, const char* op_name) {
    if (guard_) check_finite(value, op_name);
    nodes_.push_back(Node{std::move(value), Tensor<T>(), needs_grad, nullptr});
    return static_cast<Var>(nodes_.size() - 1);
  }

  template <typename Back>
  Var unary(Tensor<T> out, Var p, Back&& back_fn) {
    Var o = push(std::move(out), needs_grad(p), "op");
    if (node(o).needs_grad) {
      node(o).back = [p, o, back_fn](Tape& t) { back_fn(t, o, p); };
    }
    return o;
  }

  template <typename Back>
  Var unary_binary(Tensor<T> out, Var a, Var b, Back&& back_fn) {
    Var o = push(std::move(out), needs_grad(a) || needs_grad(b), "op");
    if (node(o).needs_grad) {
      node(o).back = [a, b, o, back_fn](Tape& t) { back_fn(t, o, a, b); };
    }
    return o;
  }

  std::vector<Node> nodes_;
  bool guard_ = true;
};

}  // namespace neural
}  // namespace ocrrestore
