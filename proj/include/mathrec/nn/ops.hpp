#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "mathrec/nn/graph.hpp"

namespace mathrec::nn {

namespace detail {

inline void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw ShapeError(std::string(op) + ": " + detail);
}

template <typename Scalar>
std::string shapes(const Var<Scalar>& a, const Var<Scalar>& b) {
  return shape_string(a.rows(), a.cols()) + " vs " + shape_string(b.rows(), b.cols());
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.cols() == b.rows(), "matmul", detail::shapes(a, b));
  const auto ia = a.id();
  const auto ib = b.id();
  return a.graph().record(a.value() * b.value(), {a, b}, [ia, ib](Graph<Scalar>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    if (g.requires_grad(ia)) g.grad_slot(ia).noalias() += gy * g.value(ib).transpose();
    if (g.requires_grad(ib)) g.grad_slot(ib).noalias() += g.value(ia).transpose() * gy;
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add", detail::shapes(a, b));
  const auto ia = a.id();
  const auto ib = b.id();
  return a.graph().record(a.value() + b.value(), {a, b}, [ia, ib](Graph<Scalar>& g, std::size_t self) {
    if (g.requires_grad(ia)) g.grad_slot(ia) += g.grad(self);
    if (g.requires_grad(ib)) g.grad_slot(ib) += g.grad(self);
  });
}

/// a + row, broadcasting a 1 x cols row over every row of a.
template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& a, const Var<Scalar>& row) {
  detail::require(row.rows() == 1 && row.cols() == a.cols(), "add_row", detail::shapes(a, row));
  const auto ia = a.id();
  const auto ir = row.id();
  Matrix<Scalar> y = a.value().rowwise() + row.value().row(0);
  return a.graph().record(std::move(y), {a, row}, [ia, ir](Graph<Scalar>& g, std::size_t self) {
    if (g.requires_grad(ia)) g.grad_slot(ia) += g.grad(self);
    if (g.requires_grad(ir)) g.grad_slot(ir) += g.grad(self).colwise().sum();
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  const auto ia = a.id();
  return a.graph().record(a.value() * s, {a}, [ia, s](Graph<Scalar>& g, std::size_t self) {
    g.grad_slot(ia) += g.grad(self) * s;
  });
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> multiply(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "multiply", detail::shapes(a, b));
  const auto ia = a.id();
  const auto ib = b.id();
  Matrix<Scalar> y = a.value().cwiseProduct(b.value());
  return a.graph().record(std::move(y), {a, b}, [ia, ib](Graph<Scalar>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    if (g.requires_grad(ia)) g.grad_slot(ia) += gy.cwiseProduct(g.value(ib));
    if (g.requires_grad(ib)) g.grad_slot(ib) += gy.cwiseProduct(g.value(ia));
  });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  const auto ia = a.id();
  Matrix<Scalar> y = a.value().array().tanh().matrix();
  return a.graph().record(std::move(y), {a}, [ia](Graph<Scalar>& g, std::size_t self) {
    const auto& y = g.value(self);
    g.grad_slot(ia).array() += g.grad(self).array() * (Scalar(1) - y.array().square());
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  const auto ia = a.id();
  Matrix<Scalar> y = a.value().cwiseMax(Scalar(0));
  return a.graph().record(std::move(y), {a}, [ia](Graph<Scalar>& g, std::size_t self) {
    g.grad_slot(ia).array() += (g.value(ia).array() > Scalar(0)).select(g.grad(self).array(), Scalar(0));
  });
}

template <typename Scalar>
Matrix<Scalar> softmax_rows_value(const Matrix<Scalar>& x) {
  Matrix<Scalar> y = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  y.array().colwise() /= y.rowwise().sum().array();
  return y;
}

template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& a) {
  detail::require(a.cols() > 0, "softmax_rows", "rows must be nonempty");
  const auto ia = a.id();
  return a.graph().record(softmax_rows_value(a.value()), {a}, [ia](Graph<Scalar>& g, std::size_t self) {
    const auto& y = g.value(self);
    const auto& gy = g.grad(self);
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = gy.cwiseProduct(y).rowwise().sum();
    g.grad_slot(ia).array() += y.array() * (gy.colwise() - dot).array();
  });
}

/// Row-wise normalisation to zero mean / unit variance, then gamma * x + beta.
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Scalar eps = Scalar(1e-5)) {
  detail::require(gamma.rows() == 1 && gamma.cols() == x.cols(), "layer_norm", detail::shapes(x, gamma));
  detail::require(beta.rows() == 1 && beta.cols() == x.cols(), "layer_norm", detail::shapes(x, beta));
  const auto& xv = x.value();
  const Eigen::Index d = xv.cols();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean = xv.rowwise().mean();
  Matrix<Scalar> centered = xv.colwise() - mean;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std =
      ((centered.array().square().rowwise().sum() / Scalar(d)) + eps).rsqrt().matrix();
  auto xhat = std::make_shared<Matrix<Scalar>>((centered.array().colwise() * inv_std.array()).matrix());
  Matrix<Scalar> y = (xhat->array().rowwise() * gamma.value().row(0).array()).matrix();
  y.rowwise() += beta.value().row(0);
  const auto ix = x.id();
  const auto ig = gamma.id();
  const auto ib = beta.id();
  return x.graph().record(std::move(y), {x, gamma, beta},
                          [ix, ig, ib, xhat, inv_std, d](Graph<Scalar>& g, std::size_t self) {
                            const auto& gy = g.grad(self);
                            if (g.requires_grad(ig)) g.grad_slot(ig) += gy.cwiseProduct(*xhat).colwise().sum();
                            if (g.requires_grad(ib)) g.grad_slot(ib) += gy.colwise().sum();
                            if (g.requires_grad(ix)) {
                              Matrix<Scalar> gxhat = (gy.array().rowwise() * g.value(ig).row(0).array()).matrix();
                              const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> m1 = gxhat.rowwise().mean();
                              const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> m2 =
                                  gxhat.cwiseProduct(*xhat).rowwise().sum() / Scalar(d);
                              Matrix<Scalar> gx = gxhat.colwise() - m1;
                              gx -= (xhat->array().colwise() * m2.array()).matrix();
                              g.grad_slot(ix).array() += gx.array().colwise() * inv_std.array();
                            }
                          });
}

/// Feature-map geometry for images flattened to rows as channel-major C*H*W.
struct MapShape {
  int channels = 1;
  int height = 1;
  int width = 1;

  int size() const { return channels * height * width; }
};

namespace detail {

// Column matrix (C*k*k, n*H*W) for a stride-1 'same' convolution.
template <typename Scalar>
Matrix<Scalar> im2col(const Matrix<Scalar>& x, const MapShape& s, int k) {
  const int pad = k / 2;
  const int hw = s.height * s.width;
  const Eigen::Index n = x.rows();
  Matrix<Scalar> col = Matrix<Scalar>::Zero(s.channels * k * k, n * hw);
  for (Eigen::Index img = 0; img < n; ++img) {
    const Scalar* src = x.row(img).data();
    for (int c = 0; c < s.channels; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          Scalar* dst = col.row((c * k + ky) * k + kx).data() + img * hw;
          for (int y = 0; y < s.height; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= s.height) continue;
            for (int xx = 0; xx < s.width; ++xx) {
              const int sx = xx + kx - pad;
              if (sx < 0 || sx >= s.width) continue;
              dst[y * s.width + xx] = src[(c * s.height + sy) * s.width + sx];
            }
          }
        }
      }
    }
  }
  return col;
}

template <typename Scalar>
void col2im_add(const Matrix<Scalar>& col, const MapShape& s, int k, Matrix<Scalar>& gx) {
  const int pad = k / 2;
  const int hw = s.height * s.width;
  for (Eigen::Index img = 0; img < gx.rows(); ++img) {
    Scalar* dst = gx.row(img).data();
    for (int c = 0; c < s.channels; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const Scalar* src = col.row((c * k + ky) * k + kx).data() + img * hw;
          for (int y = 0; y < s.height; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= s.height) continue;
            for (int xx = 0; xx < s.width; ++xx) {
              const int sx = xx + kx - pad;
              if (sx < 0 || sx >= s.width) continue;
              dst[(c * s.height + sy) * s.width + sx] += src[y * s.width + xx];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Stride-1 zero-padded 'same' convolution with square odd kernels.
/// x: (n, C*H*W); weight: (C_out, C*k*k); bias: (1, C_out). Output (n, C_out*H*W).
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, const MapShape& in,
                   int kernel = 3) {
  detail::require(kernel % 2 == 1, "conv2d", "kernel size must be odd");
  detail::require(x.cols() == in.size(), "conv2d", "input " + shape_string(x.rows(), x.cols()) +
                                                       " does not match map size " + std::to_string(in.size()));
  detail::require(weight.cols() == in.channels * kernel * kernel, "conv2d", detail::shapes(x, weight));
  detail::require(bias.rows() == 1 && bias.cols() == weight.rows(), "conv2d", detail::shapes(weight, bias));
  const Eigen::Index n = x.rows();
  const int hw = in.height * in.width;
  const Eigen::Index cout = weight.rows();
  auto col = std::make_shared<Matrix<Scalar>>(detail::im2col(x.value(), in, kernel));
  Matrix<Scalar> prod = weight.value() * (*col);  // (C_out, n*HW)
  prod.colwise() += bias.value().row(0).transpose();
  Matrix<Scalar> y(n, cout * hw);
  for (Eigen::Index img = 0; img < n; ++img)
    for (Eigen::Index c = 0; c < cout; ++c) y.row(img).segment(c * hw, hw) = prod.row(c).segment(img * hw, hw);

  const auto ix = x.id();
  const auto iw = weight.id();
  const auto ib = bias.id();
  return x.graph().record(std::move(y), {x, weight, bias},
                          [ix, iw, ib, col, in, kernel, n, hw, cout](Graph<Scalar>& g, std::size_t self) {
                            const auto& gy = g.grad(self);
                            Matrix<Scalar> gprod(cout, n * hw);
                            for (Eigen::Index img = 0; img < n; ++img)
                              for (Eigen::Index c = 0; c < cout; ++c)
                                gprod.row(c).segment(img * hw, hw) = gy.row(img).segment(c * hw, hw);
                            if (g.requires_grad(iw)) g.grad_slot(iw).noalias() += gprod * col->transpose();
                            if (g.requires_grad(ib)) g.grad_slot(ib) += gprod.rowwise().sum().transpose();
                            if (g.requires_grad(ix)) {
                              const Matrix<Scalar> gcol = g.value(iw).transpose() * gprod;
                              detail::col2im_add(gcol, in, kernel, g.grad_slot(ix));
                            }
                          });
}

/// Non-overlapping max pooling with window = stride = `size`; trailing rows
/// and columns that do not fill a window are dropped. Ties go to the first
/// maximum in raster order.
template <typename Scalar>
Var<Scalar> max_pool2d(const Var<Scalar>& x, const MapShape& in, int size = 2) {
  detail::require(x.cols() == in.size(), "max_pool2d", "input does not match map size");
  const int oh = in.height / size;
  const int ow = in.width / size;
  detail::require(oh > 0 && ow > 0, "max_pool2d", "map smaller than pooling window");
  const Eigen::Index n = x.rows();
  const auto& xv = x.value();
  Matrix<Scalar> y(n, in.channels * oh * ow);
  auto argmax = std::make_shared<std::vector<Eigen::Index>>(static_cast<std::size_t>(y.size()));
  for (Eigen::Index img = 0; img < n; ++img) {
    for (int c = 0; c < in.channels; ++c) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          Eigen::Index best = (c * in.height + oy * size) * in.width + ox * size;
          for (int dy = 0; dy < size; ++dy)
            for (int dx = 0; dx < size; ++dx) {
              const Eigen::Index idx = (c * in.height + oy * size + dy) * in.width + ox * size + dx;
              if (xv(img, idx) > xv(img, best)) best = idx;
            }
          const Eigen::Index o = (c * oh + oy) * ow + ox;
          y(img, o) = xv(img, best);
          (*argmax)[static_cast<std::size_t>(img * y.cols() + o)] = best;
        }
      }
    }
  }
  const auto ix = x.id();
  return x.graph().record(std::move(y), {x}, [ix, argmax](Graph<Scalar>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    auto& gx = g.grad_slot(ix);
    for (Eigen::Index img = 0; img < gy.rows(); ++img)
      for (Eigen::Index o = 0; o < gy.cols(); ++o)
        gx(img, (*argmax)[static_cast<std::size_t>(img * gy.cols() + o)]) += gy(img, o);
  });
}

/// Rows of `table` selected by ids, in order.
template <typename Scalar>
Var<Scalar> embedding_lookup(const Var<Scalar>& table, const std::vector<int>& ids) {
  const auto& tv = table.value();
  Matrix<Scalar> y(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows())
      throw ShapeError("embedding_lookup: index " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(tv.rows()) + " rows");
    y.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  const auto it = table.id();
  return table.graph().record(std::move(y), {table}, [it, ids](Graph<Scalar>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    auto& gt = g.grad_slot(it);
    for (std::size_t i = 0; i < ids.size(); ++i) gt.row(ids[i]) += gy.row(static_cast<Eigen::Index>(i));
  });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  detail::require(!parts.empty(), "concat_cols", "no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == rows, "concat_cols", detail::shapes(parts[0], p));
    cols += p.cols();
  }
  Matrix<Scalar> y(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;  // (id, offset)
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    y.middleCols(off, p.cols()) = p.value();
    spans.emplace_back(p.id(), off);
    off += p.cols();
  }
  return parts[0].graph().record(std::move(y), parts, [spans](Graph<Scalar>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    for (const auto& [id, offset] : spans)
      if (g.requires_grad(id)) g.grad_slot(id) += gy.middleCols(offset, g.value(id).cols());
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  detail::require(!parts.empty(), "concat_rows", "no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == cols, "concat_rows", detail::shapes(parts[0], p));
    rows += p.rows();
  }
  Matrix<Scalar> y(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    y.middleRows(off, p.rows()) = p.value();
    spans.emplace_back(p.id(), off);
    off += p.rows();
  }
  return parts[0].graph().record(std::move(y), parts, [spans](Graph<Scalar>& g, std::size_t self) {
    const auto& gy = g.grad(self);
    for (const auto& [id, offset] : spans)
      if (g.requires_grad(id)) g.grad_slot(id) += gy.middleRows(offset, g.value(id).rows());
  });
}

/// Column block [start, start + count).
template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& a, Eigen::Index start, Eigen::Index count) {
  detail::require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols",
                  "range outside " + shape_string(a.rows(), a.cols()));
  const auto ia = a.id();
  Matrix<Scalar> y = a.value().middleCols(start, count);
  return a.graph().record(std::move(y), {a}, [ia, start, count](Graph<Scalar>& g, std::size_t self) {
    g.grad_slot(ia).middleCols(start, count) += g.grad(self);
  });
}

/// Row-major reinterpretation with the same number of entries.
template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Eigen::Index rows, Eigen::Index cols) {
  detail::require(rows * cols == a.value().size(), "reshape",
                  shape_string(a.rows(), a.cols()) + " to " + shape_string(rows, cols));
  const auto ia = a.id();
  Matrix<Scalar> y = Eigen::Map<const Matrix<Scalar>>(a.value().data(), rows, cols);
  return a.graph().record(std::move(y), {a}, [ia](Graph<Scalar>& g, std::size_t self) {
    auto& ga = g.grad_slot(ia);
    ga += Eigen::Map<const Matrix<Scalar>>(g.grad(self).data(), ga.rows(), ga.cols());
  });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  const auto ia = a.id();
  Matrix<Scalar> y = a.value().transpose();
  return a.graph().record(std::move(y), {a}, [ia](Graph<Scalar>& g, std::size_t self) {
    g.grad_slot(ia) += g.grad(self).transpose();
  });
}

/// Replaces entries where mask is true by `fill`; those entries pass no gradient.
template <typename Scalar>
Var<Scalar> masked_fill(const Var<Scalar>& a, const Mask& mask, Scalar fill) {
  detail::require(mask.rows() == a.rows() && mask.cols() == a.cols(), "masked_fill",
                  shape_string(a.rows(), a.cols()) + " vs mask " + shape_string(mask.rows(), mask.cols()));
  const auto ia = a.id();
  Matrix<Scalar> y = mask.select(fill, a.value().array()).matrix();
  return a.graph().record(std::move(y), {a}, [ia, mask](Graph<Scalar>& g, std::size_t self) {
    g.grad_slot(ia).array() += mask.select(Scalar(0), g.grad(self).array());
  });
}

/// Large negative logit used for masked attention; exp underflows to exactly 0.
template <typename Scalar>
constexpr Scalar masked_logit() {
  return Scalar(-1e30);
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  const auto ia = a.id();
  Matrix<Scalar> y(1, 1);
  y(0, 0) = a.value().sum();
  return a.graph().record(std::move(y), {a}, [ia](Graph<Scalar>& g, std::size_t self) {
    g.grad_slot(ia).array() += g.grad(self)(0, 0);
  });
}

/// Sum over rows of -log softmax(logits)[row, target]; rows with a negative
/// target are skipped.
template <typename Scalar>
Var<Scalar> cross_entropy(const Var<Scalar>& logits, const std::vector<int>& targets) {
  detail::require(static_cast<Eigen::Index>(targets.size()) == logits.rows(), "cross_entropy",
                  "target count does not match logit rows");
  const auto& lv = logits.value();
  auto probs = std::make_shared<Matrix<Scalar>>(softmax_rows_value(lv));
  Matrix<Scalar> y = Matrix<Scalar>::Zero(1, 1);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] < 0) continue;
    detail::require(targets[t] < lv.cols(), "cross_entropy", "target id outside logits");
    const auto row = lv.row(static_cast<Eigen::Index>(t));
    const Scalar m = row.maxCoeff();
    const Scalar lse = m + std::log((row.array() - m).exp().sum());
    y(0, 0) += lse - row(targets[t]);
  }
  const auto il = logits.id();
  return logits.graph().record(std::move(y), {logits}, [il, probs, targets](Graph<Scalar>& g, std::size_t self) {
    const Scalar s = g.grad(self)(0, 0);
    auto& gl = g.grad_slot(il);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (targets[t] < 0) continue;
      const auto r = static_cast<Eigen::Index>(t);
      gl.row(r) += s * probs->row(r);
      gl(r, targets[t]) -= s;
    }
  });
}

}  // namespace mathrec::nn
