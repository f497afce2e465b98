#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hahe/tensor.hpp"

namespace hahe::ad {

// Guard for L2 norms: vectors with norm at or below this are treated as zero
// by normalize/cosine, and their subgradient there is defined as zero.
inline constexpr double kNormEps = 1e-12;

// Floor applied by clamp_min in loss computations so ln never sees 0.
inline constexpr double kLogFloor = 1e-12;

class Tape;

// Handle to a node on a Tape. Cheap to copy; owns nothing.
class Value {
 public:
  Value() = default;
  int id() const { return id_; }
  bool valid() const { return id_ >= 0; }

 private:
  friend class Tape;
  explicit Value(int id) : id_(id) {}
  int id_ = -1;
};

// Define-by-run gradient tape over dense tensors. Creation order is a
// topological order, so the backward pass is a single reverse sweep that
// touches each node exactly once. The tape is meant to be rebuilt per
// minibatch; there is no graph reuse across calls.
class Tape {
 public:
  // A differentiable input.
  Value leaf(Tensor v) { return push(std::move(v), {}, nullptr, true); }

  // A fixed input; no gradient is tracked through it.
  Value constant(Tensor v) { return push(std::move(v), {}, nullptr, false); }

  const Tensor& value(Value v) const { return nodes_[check(v)].value; }

  std::size_t size() const { return nodes_.size(); }

  bool requires_grad(Value v) const { return nodes_[check(v)].requires_grad; }

  // ---- primitives --------------------------------------------------------

  Value matmul(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(),
            "matmul: incompatible shapes " + A.shape_str() + " " +
                B.shape_str());
    const std::size_t r = A.rows(), k = A.cols(), c = B.cols();
    Tensor C({r, c});
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = A.at(i, kk);
        if (av == 0.0) continue;
        for (std::size_t j = 0; j < c; ++j) {
          C.at(i, j) += av * B.at(kk, j);
        }
      }
    }
    const int ai = a.id(), bi = b.id();
    return push(std::move(C), {ai, bi},
                [ai, bi, r, k, c](Tape& t, const Tensor& g) {
                  const Tensor& A = t.nodes_[ai].value;
                  const Tensor& B = t.nodes_[bi].value;
                  if (t.nodes_[ai].requires_grad) {
                    Tensor& ga = t.grad_buf(ai);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < c; ++j) {
                        const double gv = g.at(i, j);
                        if (gv == 0.0) continue;
                        for (std::size_t kk = 0; kk < k; ++kk)
                          ga.at(i, kk) += gv * B.at(kk, j);
                      }
                  }
                  if (t.nodes_[bi].requires_grad) {
                    Tensor& gb = t.grad_buf(bi);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t kk = 0; kk < k; ++kk) {
                        const double av = A.at(i, kk);
                        if (av == 0.0) continue;
                        for (std::size_t j = 0; j < c; ++j)
                          gb.at(kk, j) += av * g.at(i, j);
                      }
                  }
                });
  }

  Value matvec(Value m, Value x) {
    const Tensor& M = val(m);
    const Tensor& X = val(x);
    require(M.rank() == 2 && X.rank() == 1 && M.cols() == X.numel(),
            "matvec: incompatible shapes " + M.shape_str() + " " +
                X.shape_str());
    const std::size_t r = M.rows(), k = M.cols();
    Tensor out({r});
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += M.at(i, kk) * X[kk];
      out[i] = acc;
    }
    const int mi = m.id(), xi = x.id();
    return push(std::move(out), {mi, xi},
                [mi, xi, r, k](Tape& t, const Tensor& g) {
                  const Tensor& M = t.nodes_[mi].value;
                  const Tensor& X = t.nodes_[xi].value;
                  if (t.nodes_[mi].requires_grad) {
                    Tensor& gm = t.grad_buf(mi);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t kk = 0; kk < k; ++kk)
                        gm.at(i, kk) += g[i] * X[kk];
                  }
                  if (t.nodes_[xi].requires_grad) {
                    Tensor& gx = t.grad_buf(xi);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t kk = 0; kk < k; ++kk)
                        gx[kk] += g[i] * M.at(i, kk);
                  }
                });
  }

  Value vecmat(Value x, Value m) {
    const Tensor& X = val(x);
    const Tensor& M = val(m);
    require(X.rank() == 1 && M.rank() == 2 && X.numel() == M.rows(),
            "vecmat: incompatible shapes " + X.shape_str() + " " +
                M.shape_str());
    const std::size_t k = M.rows(), c = M.cols();
    Tensor out({c});
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double xv = X[kk];
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < c; ++j) out[j] += xv * M.at(kk, j);
    }
    const int xi = x.id(), mi = m.id();
    return push(std::move(out), {xi, mi},
                [xi, mi, k, c](Tape& t, const Tensor& g) {
                  const Tensor& X = t.nodes_[xi].value;
                  const Tensor& M = t.nodes_[mi].value;
                  if (t.nodes_[xi].requires_grad) {
                    Tensor& gx = t.grad_buf(xi);
                    for (std::size_t kk = 0; kk < k; ++kk) {
                      double acc = 0.0;
                      for (std::size_t j = 0; j < c; ++j)
                        acc += g[j] * M.at(kk, j);
                      gx[kk] += acc;
                    }
                  }
                  if (t.nodes_[mi].requires_grad) {
                    Tensor& gm = t.grad_buf(mi);
                    for (std::size_t kk = 0; kk < k; ++kk) {
                      const double xv = X[kk];
                      if (xv == 0.0) continue;
                      for (std::size_t j = 0; j < c; ++j)
                        gm.at(kk, j) += xv * g[j];
                    }
                  }
                });
  }

  Value dot(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.rank() == 1 && B.rank() == 1 && A.numel() == B.numel(),
            "dot: incompatible shapes " + A.shape_str() + " " + B.shape_str());
    double acc = 0.0;
    for (std::size_t i = 0; i < A.numel(); ++i) acc += A[i] * B[i];
    const int ai = a.id(), bi = b.id();
    return push(Tensor::scalar(acc), {ai, bi},
                [ai, bi](Tape& t, const Tensor& g) {
                  const Tensor& A = t.nodes_[ai].value;
                  const Tensor& B = t.nodes_[bi].value;
                  const double gv = g[0];
                  if (t.nodes_[ai].requires_grad) {
                    Tensor& ga = t.grad_buf(ai);
                    for (std::size_t i = 0; i < A.numel(); ++i)
                      ga[i] += gv * B[i];
                  }
                  if (t.nodes_[bi].requires_grad) {
                    Tensor& gb = t.grad_buf(bi);
                    for (std::size_t i = 0; i < B.numel(); ++i)
                      gb[i] += gv * A[i];
                  }
                });
  }

  Value add(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.same_shape(B), "add: shape mismatch " + A.shape_str() + " " +
                                 B.shape_str());
    Tensor out = A;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += B[i];
    const int ai = a.id(), bi = b.id();
    return push(std::move(out), {ai, bi}, [ai, bi](Tape& t, const Tensor& g) {
      t.accumulate(ai, g);
      t.accumulate(bi, g);
    });
  }

  Value sub(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.same_shape(B), "sub: shape mismatch " + A.shape_str() + " " +
                                 B.shape_str());
    Tensor out = A;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= B[i];
    const int ai = a.id(), bi = b.id();
    return push(std::move(out), {ai, bi}, [ai, bi](Tape& t, const Tensor& g) {
      t.accumulate(ai, g);
      if (t.nodes_[bi].requires_grad) {
        Tensor& gb = t.grad_buf(bi);
        for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
      }
    });
  }

  // Elementwise product.
  Value mul(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.same_shape(B), "mul: shape mismatch " + A.shape_str() + " " +
                                 B.shape_str());
    Tensor out = A;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= B[i];
    const int ai = a.id(), bi = b.id();
    return push(std::move(out), {ai, bi}, [ai, bi](Tape& t, const Tensor& g) {
      const Tensor& A = t.nodes_[ai].value;
      const Tensor& B = t.nodes_[bi].value;
      if (t.nodes_[ai].requires_grad) {
        Tensor& ga = t.grad_buf(ai);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * B[i];
      }
      if (t.nodes_[bi].requires_grad) {
        Tensor& gb = t.grad_buf(bi);
        for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * A[i];
      }
    });
  }

  Value scale(Value x, double c) {
    Tensor out = val(x);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
    const int xi = x.id();
    return push(std::move(out), {xi}, [xi, c](Tape& t, const Tensor& g) {
      if (!t.nodes_[xi].requires_grad) return;
      Tensor& gx = t.grad_buf(xi);
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += c * g[i];
    });
  }

  Value add_const(Value x, double c) {
    Tensor out = val(x);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c;
    const int xi = x.id();
    return push(std::move(out), {xi}, [xi](Tape& t, const Tensor& g) {
      t.accumulate(xi, g);
    });
  }

  // Divide every element of x by the scalar node s.
  Value div_scalar(Value x, Value s) {
    const Tensor& X = val(x);
    const Tensor& S = val(s);
    require(S.numel() == 1, "div_scalar: divisor must be scalar");
    const double sv = S[0];
    Tensor out = X;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] /= sv;
    const int xi = x.id(), si = s.id();
    return push(std::move(out), {xi, si},
                [xi, si, sv](Tape& t, const Tensor& g) {
                  const Tensor& X = t.nodes_[xi].value;
                  if (t.nodes_[xi].requires_grad) {
                    Tensor& gx = t.grad_buf(xi);
                    for (std::size_t i = 0; i < g.numel(); ++i)
                      gx[i] += g[i] / sv;
                  }
                  if (t.nodes_[si].requires_grad) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < g.numel(); ++i)
                      acc += g[i] * X[i];
                    t.grad_buf(si)[0] -= acc / (sv * sv);
                  }
                });
  }

  // Concatenate two vectors.
  Value concat(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    require(A.rank() == 1 && B.rank() == 1, "concat: expects vectors");
    const std::size_t n = A.numel(), m = B.numel();
    Tensor out({n + m});
    for (std::size_t i = 0; i < n; ++i) out[i] = A[i];
    for (std::size_t i = 0; i < m; ++i) out[n + i] = B[i];
    const int ai = a.id(), bi = b.id();
    return push(std::move(out), {ai, bi},
                [ai, bi, n, m](Tape& t, const Tensor& g) {
                  if (t.nodes_[ai].requires_grad) {
                    Tensor& ga = t.grad_buf(ai);
                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                  }
                  if (t.nodes_[bi].requires_grad) {
                    Tensor& gb = t.grad_buf(bi);
                    for (std::size_t i = 0; i < m; ++i) gb[i] += g[n + i];
                  }
                });
  }

  Value tanh(Value x) {
    Tensor out = val(x);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
    const int xi = x.id();
    const int yi = next_id();
    return push(std::move(out), {xi}, [xi, yi](Tape& t, const Tensor& g) {
      if (!t.nodes_[xi].requires_grad) return;
      const Tensor& Y = t.nodes_[yi].value;
      Tensor& gx = t.grad_buf(xi);
      for (std::size_t i = 0; i < g.numel(); ++i)
        gx[i] += g[i] * (1.0 - Y[i] * Y[i]);
    });
  }

  Value sigmoid(Value x) {
    Tensor out = val(x);
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const double v = out[i];
      out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
    }
    const int xi = x.id();
    const int yi = next_id();
    return push(std::move(out), {xi}, [xi, yi](Tape& t, const Tensor& g) {
      if (!t.nodes_[xi].requires_grad) return;
      const Tensor& Y = t.nodes_[yi].value;
      Tensor& gx = t.grad_buf(xi);
      for (std::size_t i = 0; i < g.numel(); ++i)
        gx[i] += g[i] * Y[i] * (1.0 - Y[i]);
    });
  }

  Value log(Value x) {
    const Tensor& X = val(x);
    Tensor out = X;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
    const int xi = x.id();
    return push(std::move(out), {xi}, [xi](Tape& t, const Tensor& g) {
      if (!t.nodes_[xi].requires_grad) return;
      const Tensor& X = t.nodes_[xi].value;
      Tensor& gx = t.grad_buf(xi);
      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] / X[i];
    });
  }

  // max(x, floor) elementwise; gradient passes through where x >= floor.
  Value clamp_min(Value x, double floor) {
    Tensor out = val(x);
    for (std::size_t i = 0; i < out.numel(); ++i)
      out[i] = std::max(out[i], floor);
    const int xi = x.id();
    return push(std::move(out), {xi}, [xi, floor](Tape& t, const Tensor& g) {
      if (!t.nodes_[xi].requires_grad) return;
      const Tensor& X = t.nodes_[xi].value;
      Tensor& gx = t.grad_buf(xi);
      for (std::size_t i = 0; i < g.numel(); ++i)
        if (X[i] >= floor) gx[i] += g[i];
    });
  }

  // Numerically stable softmax over a nonempty vector.
  Value softmax(Value x) {
    const Tensor& X = val(x);
    require(X.rank() == 1, "softmax: expects a vector");
    if (X.numel() == 0) {
      throw std::invalid_argument("softmax: empty input");
    }
    const double m = *std::max_element(X.data().begin(), X.data().end());
    Tensor out = X;
    double sum = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) {
      out[i] = std::exp(out[i] - m);
      sum += out[i];
    }
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] /= sum;
    const int xi = x.id();
    const int yi = next_id();
    return push(std::move(out), {xi}, [xi, yi](Tape& t, const Tensor& g) {
      if (!t.nodes_[xi].requires_grad) return;
      const Tensor& Y = t.nodes_[yi].value;
      double s = 0.0;
      for (std::size_t i = 0; i < g.numel(); ++i) s += g[i] * Y[i];
      Tensor& gx = t.grad_buf(xi);
      for (std::size_t i = 0; i < g.numel(); ++i)
        gx[i] += Y[i] * (g[i] - s);
    });
  }

  // x / max(||x||, kNormEps). Below the guard the output is ~0 and the
  // subgradient is defined as zero.
  Value l2_normalize(Value x) {
    const Tensor& X = val(x);
    require(X.rank() == 1, "l2_normalize: expects a vector");
    double r = norm2(X.data().data(), X.numel());
    Tensor out = X;
    const double denom = std::max(r, kNormEps);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] /= denom;
    const int xi = x.id();
    const int yi = next_id();
    return push(std::move(out), {xi}, [xi, yi, r](Tape& t, const Tensor& g) {
      if (!t.nodes_[xi].requires_grad) return;
      if (r <= kNormEps) return;  // zero subgradient at the guard
      const Tensor& Y = t.nodes_[yi].value;
      double yg = 0.0;
      for (std::size_t i = 0; i < g.numel(); ++i) yg += Y[i] * g[i];
      Tensor& gx = t.grad_buf(xi);
      for (std::size_t i = 0; i < g.numel(); ++i)
        gx[i] += (g[i] - Y[i] * yg) / r;
    });
  }

  // Per-row L2 normalization of a matrix, same guard as l2_normalize.
  Value rowwise_l2_normalize(Value m) {
    const Tensor& M = val(m);
    require(M.rank() == 2, "rowwise_l2_normalize: expects a matrix");
    const std::size_t r = M.rows(), c = M.cols();
    Tensor out = M;
    std::vector<double> norms(r);
    for (std::size_t i = 0; i < r; ++i) {
      norms[i] = norm2(&M.data()[i * c], c);
      const double denom = std::max(norms[i], kNormEps);
      for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= denom;
    }
    const int mi = m.id();
    const int yi = next_id();
    return push(std::move(out), {mi},
                [mi, yi, r, c, norms](Tape& t, const Tensor& g) {
                  if (!t.nodes_[mi].requires_grad) return;
                  const Tensor& Y = t.nodes_[yi].value;
                  Tensor& gm = t.grad_buf(mi);
                  for (std::size_t i = 0; i < r; ++i) {
                    if (norms[i] <= kNormEps) continue;
                    double yg = 0.0;
                    for (std::size_t j = 0; j < c; ++j)
                      yg += Y.at(i, j) * g.at(i, j);
                    for (std::size_t j = 0; j < c; ++j)
                      gm.at(i, j) += (g.at(i, j) - Y.at(i, j) * yg) / norms[i];
                  }
                });
  }

  Value sum(Value x) {
    const Tensor& X = val(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < X.numel(); ++i) acc += X[i];
    const int xi = x.id();
    return push(Tensor::scalar(acc), {xi}, [xi](Tape& t, const Tensor& g) {
      if (!t.nodes_[xi].requires_grad) return;
      Tensor& gx = t.grad_buf(xi);
      const double gv = g[0];
      for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += gv;
    });
  }

  Value mean(Value x) {
    const Tensor& X = val(x);
    require(X.numel() > 0, "mean: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < X.numel(); ++i) acc += X[i];
    const std::size_t n = X.numel();
    const int xi = x.id();
    return push(Tensor::scalar(acc / static_cast<double>(n)), {xi},
                [xi, n](Tape& t, const Tensor& g) {
                  if (!t.nodes_[xi].requires_grad) return;
                  Tensor& gx = t.grad_buf(xi);
                  const double gv = g[0] / static_cast<double>(n);
                  for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += gv;
                });
  }

  // Select rows of a matrix. Duplicate indices accumulate on backward.
  Value gather_rows(Value m, std::vector<std::size_t> idx) {
    const Tensor& M = val(m);
    require(M.rank() == 2, "gather_rows: expects a matrix");
    const std::size_t c = M.cols();
    Tensor out({idx.size(), c});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      require(idx[i] < M.rows(), "gather_rows: row index out of range");
      for (std::size_t j = 0; j < c; ++j) out.at(i, j) = M.at(idx[i], j);
    }
    const int mi = m.id();
    return push(std::move(out), {mi},
                [mi, idx = std::move(idx), c](Tape& t, const Tensor& g) {
                  if (!t.nodes_[mi].requires_grad) return;
                  Tensor& gm = t.grad_buf(mi);
                  for (std::size_t i = 0; i < idx.size(); ++i)
                    for (std::size_t j = 0; j < c; ++j)
                      gm.at(idx[i], j) += g.at(i, j);
                });
  }

  // Extract one row of a matrix as a vector.
  Value row(Value m, std::size_t i) {
    const Tensor& M = val(m);
    require(M.rank() == 2 && i < M.rows(), "row: index out of range");
    const std::size_t c = M.cols();
    Tensor out({c});
    for (std::size_t j = 0; j < c; ++j) out[j] = M.at(i, j);
    const int mi = m.id();
    return push(std::move(out), {mi}, [mi, i, c](Tape& t, const Tensor& g) {
      if (!t.nodes_[mi].requires_grad) return;
      Tensor& gm = t.grad_buf(mi);
      for (std::size_t j = 0; j < c; ++j) gm.at(i, j) += g[j];
    });
  }

  // Stack equal-shaped parts along a new leading axis. Scalars become a
  // vector, vectors become a matrix.
  Value stack(const std::vector<Value>& parts) {
    require(!parts.empty(), "stack: empty input");
    const Tensor& first = val(parts[0]);
    std::vector<std::size_t> shape;
    shape.push_back(parts.size());
    for (std::size_t d : first.shape()) shape.push_back(d);
    const std::size_t stride = first.numel();
    Tensor out(shape);
    std::vector<int> ids;
    ids.reserve(parts.size());
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const Tensor& part = val(parts[p]);
      require(part.same_shape(first), "stack: shape mismatch");
      for (std::size_t i = 0; i < stride; ++i)
        out[p * stride + i] = part[i];
      ids.push_back(parts[p].id());
    }
    return push(std::move(out), ids,
                [ids, stride](Tape& t, const Tensor& g) {
                  for (std::size_t p = 0; p < ids.size(); ++p) {
                    if (!t.nodes_[ids[p]].requires_grad) continue;
                    Tensor& gp = t.grad_buf(ids[p]);
                    for (std::size_t i = 0; i < stride; ++i)
                      gp[i] += g[p * stride + i];
                  }
                });
  }

  // Columnwise maximum of a matrix. Gradient flows to the first argmax row.
  Value colwise_max(Value m) {
    const Tensor& M = val(m);
    require(M.rank() == 2 && M.rows() > 0, "colwise_max: empty matrix");
    const std::size_t r = M.rows(), c = M.cols();
    Tensor out({c});
    std::vector<std::size_t> arg(c, 0);
    for (std::size_t j = 0; j < c; ++j) {
      double best = M.at(0, j);
      for (std::size_t i = 1; i < r; ++i) {
        if (M.at(i, j) > best) {
          best = M.at(i, j);
          arg[j] = i;
        }
      }
      out[j] = best;
    }
    const int mi = m.id();
    return push(std::move(out), {mi},
                [mi, arg = std::move(arg), c](Tape& t, const Tensor& g) {
                  if (!t.nodes_[mi].requires_grad) return;
                  Tensor& gm = t.grad_buf(mi);
                  for (std::size_t j = 0; j < c; ++j)
                    gm.at(arg[j], j) += g[j];
                });
  }

  // Cosine similarity with the kNormEps guard on both norms.
  Value cosine(Value u, Value v) {
    return dot(l2_normalize(u), l2_normalize(v));
  }

  // ---- backward ----------------------------------------------------------

  // Reverse sweep from a scalar loss. Gradients of all reachable
  // differentiable nodes become available through grad().
  void backward(Value loss) {
    const Tensor& L = value(loss);
    if (L.numel() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  L.shape_str());
    }
    grads_.assign(nodes_.size(), Tensor{});
    grad_buf(loss.id())[0] = 1.0;
    for (int i = loss.id(); i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.pull) continue;
      if (grads_[i].empty()) continue;  // not an ancestor of the loss
      n.pull(*this, grads_[i]);
    }
    ran_backward_ = true;
  }

  // Gradient of the loss w.r.t. a differentiable node. Zero if the loss
  // does not depend on it.
  const Tensor& grad(Value v) {
    if (!ran_backward_) {
      throw std::logic_error("grad: backward() has not been run");
    }
    std::size_t id = check(v);
    if (!nodes_[id].requires_grad) {
      throw std::invalid_argument("grad: node is detached (non-differentiable)");
    }
    return grad_buf(static_cast<int>(id));
  }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    std::function<void(Tape&, const Tensor&)> pull;
  };

  std::size_t check(Value v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
      throw std::invalid_argument("invalid tape value handle");
    }
    return static_cast<std::size_t>(v.id());
  }

  const Tensor& val(Value v) const { return nodes_[check(v)].value; }

  int next_id() const { return static_cast<int>(nodes_.size()); }

  Value push(Tensor value, const std::vector<int>& parents,
             std::function<void(Tape&, const Tensor&)> pull,
             bool force_requires = false) {
    bool rg = force_requires;
    for (int p : parents) rg = rg || nodes_[p].requires_grad;
    Node n;
    n.value = std::move(value);
    n.requires_grad = rg;
    if (rg) n.pull = std::move(pull);
    nodes_.push_back(std::move(n));
    return Value(next_id() - 1);
  }

  Tensor& grad_buf(int id) {
    if (grads_[id].empty()) {
      grads_[id] = Tensor(nodes_[id].value.shape());
    }
    return grads_[id];
  }

  void accumulate(int id, const Tensor& g) {
    if (!nodes_[id].requires_grad) return;
    Tensor& buf = grad_buf(id);
    for (std::size_t i = 0; i < g.numel(); ++i) buf[i] += g[i];
  }

  static double norm2(const double* p, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += p[i] * p[i];
    return std::sqrt(acc);
  }

  static void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
  }

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool ran_backward_ = false;
};

// Builds a scalar loss from leaf handles created over the given parameters.
using BuildFn = std::function<Value(Tape&, const std::vector<Value>&)>;

// Compares analytic gradients against central finite differences
// (f(x+h) - f(x-h)) / 2h per coordinate. Returns the maximum relative error
// |a - n| / max(|a|, |n|, 1e-8) over all coordinates.
inline double grad_check(const BuildFn& build, std::vector<Tensor> params,
                         double h = 1e-5) {
  Tape tape;
  std::vector<Value> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p));
  tape.backward(build(tape, leaves));

  auto eval = [&](const std::vector<Tensor>& at) {
    Tape t;
    std::vector<Value> vs;
    vs.reserve(at.size());
    for (const Tensor& p : at) vs.push_back(t.constant(p));
    return t.value(build(t, vs)).scalar_value();
  };

  double max_rel = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& analytic = tape.grad(leaves[i]);
    for (std::size_t j = 0; j < params[i].numel(); ++j) {
      const double saved = params[i][j];
      params[i][j] = saved + h;
      const double fp = eval(params);
      params[i][j] = saved - h;
      const double fm = eval(params);
      params[i][j] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[j];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric),
                                            1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace hahe::ad
