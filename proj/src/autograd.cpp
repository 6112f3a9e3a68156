#include "idc/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

namespace idc {

namespace {

std::atomic<bool> g_conv_sign_fault{false};

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

void set_conv_backward_sign_fault(bool enabled) noexcept { g_conv_sign_fault = enabled; }
bool conv_backward_sign_fault() noexcept { return g_conv_sign_fault; }

// ---------------------------------------------------------------------------
// Tape

template <class T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("leaf value contains NaN or Inf");
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <class T>
Var<T> Tape<T>::record(const char* op, Tensor<T> value, std::span<const Var<T>> inputs,
                       BackwardFn backward) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": output contains NaN or Inf");
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.tape != this) throw ContractError(std::string(op) + ": input from a different tape");
    needs = needs || nodes_[in.id].requires_grad;
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs;
  node.is_leaf = false;
  node.op = op;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <class T>
const Tensor<T>* Tape<T>::grad(Var<T> v) const {
  const Node& n = nodes_.at(v.id);
  return n.grad ? &*n.grad : nullptr;
}

template <class T>
Tensor<T>* Tape<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return nullptr;
  if (!n.grad) n.grad.emplace(n.value.shape(), T{0});
  return &*n.grad;
}

template <class T>
void Tape<T>::accumulate(std::size_t id, const Tensor<T>& g) {
  Tensor<T>* buf = grad_buffer(id);
  if (!buf) return;
  if (buf->shape() != g.shape())
    throw ContractError("gradient shape " + shape_str(g.shape()) + " does not match value " +
                        shape_str(buf->shape()));
  auto dst = buf->values();
  auto src = g.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <class T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw ContractError("backward: loss from a different tape");
  if (value(loss.id).size() != 1) throw ContractError("backward: loss must be a scalar");
  for (auto& n : nodes_) n.grad.reset();
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad.emplace(nodes_[loss.id].value.shape(), T{1});
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad || !n.backward) continue;
    // the closure may grow grad buffers of other nodes but never this one
    const Tensor<T> g = std::move(*n.grad);
    n.grad.reset();
    n.backward(g, *this);
  }
  for (auto& n : nodes_) {
    if (!n.is_leaf) {
      n.grad.reset();
    } else if (n.grad && !n.grad->all_finite()) {
      throw NumericError("backward: non-finite gradient on a leaf");
    }
  }
}

// ---------------------------------------------------------------------------
// ops

namespace ops {

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w, cout, k, pad;
  std::size_t patch() const { return c * k * k; }
  std::size_t plane() const { return h * w; }
};

template <class T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& filter) {
  require_rank(input, 4, "conv2d input");
  require_rank(filter, 4, "conv2d filter");
  const std::size_t k = filter.dim(2);
  if (filter.dim(3) != k) throw ConfigError("conv2d: filter must be square");
  if (k % 2 == 0) throw ConfigError("conv2d: filter size must be odd, got " + std::to_string(k));
  if (filter.dim(1) != input.dim(1))
    throw ConfigError("conv2d: filter expects " + std::to_string(filter.dim(1)) +
                      " input channels, got " + std::to_string(input.dim(1)));
  return {input.dim(0), input.dim(1), input.dim(2), input.dim(3), filter.dim(0), k, (k - 1) / 2};
}

// col[(ci*k + ky)*k + kx, y*w + x] = in[ci, y+ky-pad, x+kx-pad]
template <class T>
void im2col(const T* in, const ConvGeometry& g, T* col) {
  const auto hw = g.plane();
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((ci * g.k + ky) * g.k + kx) * hw;
        const T* plane = in + ci * hw;
        for (std::size_t y = 0; y < g.h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t x = 0; x < g.w; ++x) {
            const auto sx =
                static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(g.h) &&
                                sx < static_cast<std::ptrdiff_t>(g.w);
            row[y * g.w + x] = inside ? plane[sy * g.w + sx] : T{0};
          }
        }
      }
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, T* out) {
  const auto hw = g.plane();
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((ci * g.k + ky) * g.k + kx) * hw;
        T* plane = out + ci * hw;
        for (std::size_t y = 0; y < g.h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t x = 0; x < g.w; ++x) {
            const auto sx =
                static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(g.w)) continue;
            plane[sy * g.w + sx] += row[y * g.w + x];
          }
        }
      }
}

struct TileGeometry {
  std::size_t n, c, h, w, p, gh, gw;
  std::size_t tiles() const { return n * gh * gw; }
};

template <class T>
TileGeometry tile_geometry(const Tensor<T>& input, std::size_t p) {
  require_rank(input, 4, "partition");
  if (p == 0) throw ConfigError("partition: tile size must be >= 1");
  const std::size_t h = input.dim(2), w = input.dim(3);
  return {input.dim(0), input.dim(1), h, w, p, (h + p - 1) / p, (w + p - 1) / p};
}

// Visits every (tile, in-tile position) and the source offset, or npos when
// the position falls in the zero padding.
template <class F>
void for_each_tile_cell(const TileGeometry& g, F&& f) {
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t ty = 0; ty < g.gh; ++ty)
      for (std::size_t tx = 0; tx < g.gw; ++tx) {
        const std::size_t tile = (n * g.gh + ty) * g.gw + tx;
        for (std::size_t py = 0; py < g.p; ++py)
          for (std::size_t px = 0; px < g.p; ++px) {
            const std::size_t y = ty * g.p + py, x = tx * g.p + px;
            const std::size_t cell = py * g.p + px;
            if (y < g.h && x < g.w) {
              f(tile, cell, n, y * g.w + x);
            } else {
              f(tile, cell, n, npos);
            }
          }
      }
}

}  // namespace

template <class T>
Var<T> conv2d(Var<T> input, const Tensor<T>& filter) {
  const Tensor<T>& x = input.value();
  const ConvGeometry g = conv_geometry(x, filter);
  Tensor<T> out({g.n, g.cout, g.h, g.w});
  std::vector<T> col(g.patch() * g.plane());
  Eigen::Map<const RowMat<T>> wmat(filter.data(), g.cout, g.patch());
  Eigen::Map<const RowMat<T>> cmat(col.data(), g.patch(), g.plane());
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(x.data() + n * g.c * g.plane(), g, col.data());
    Eigen::Map<RowMat<T>> omat(out.data() + n * g.cout * g.plane(), g.cout, g.plane());
    omat.noalias() = wmat * cmat;
  }
  const Var<T> inputs[] = {input};
  return input.tape->record(
      "conv2d", std::move(out), inputs,
      [g, filter, in_id = input.id](const Tensor<T>& gout, Tape<T>& tape) {
        Tensor<T>* gin = tape.grad_buffer(in_id);
        if (!gin) return;
        std::vector<T> gcol(g.patch() * g.plane());
        Eigen::Map<const RowMat<T>> wmat(filter.data(), g.cout, g.patch());
        Eigen::Map<RowMat<T>> gcmat(gcol.data(), g.patch(), g.plane());
        const T sign = conv_backward_sign_fault() ? T{-1} : T{1};
        for (std::size_t n = 0; n < g.n; ++n) {
          Eigen::Map<const RowMat<T>> gomat(gout.data() + n * g.cout * g.plane(), g.cout,
                                            g.plane());
          gcmat.noalias() = wmat.transpose() * gomat;
          if (sign < 0) gcmat *= sign;
          col2im_add(gcol.data(), g, gin->data() + n * g.c * g.plane());
        }
      });
}

template <class T>
Var<T> leaky_relu(Var<T> input, T slope) {
  const Tensor<T>& x = input.value();
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T{0} ? x[i] : slope * x[i];
  const Var<T> inputs[] = {input};
  return input.tape->record("leaky_relu", std::move(out), inputs,
                            [slope, in_id = input.id](const Tensor<T>& gout, Tape<T>& tape) {
                              Tensor<T>* gin = tape.grad_buffer(in_id);
                              if (!gin) return;
                              const Tensor<T>& x = tape.value(in_id);
                              for (std::size_t i = 0; i < x.size(); ++i)
                                (*gin)[i] += x[i] > T{0} ? gout[i] : slope * gout[i];
                            });
}

template <class T>
Var<T> batch_norm(Var<T> features, const ChannelStats<T>& stats) {
  const Tensor<T>& x = features.value();
  require_rank(x, 4, "batch_norm");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (stats.mean.size() != c || stats.var.size() != c)
    throw ConfigError("batch_norm: stats have " + std::to_string(stats.mean.size()) +
                      " channels, features have " + std::to_string(c));
  std::vector<T> inv(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (stats.var[ch] < T{0}) throw ConfigError("batch_norm: negative variance");
    inv[ch] = T{1} / std::sqrt(stats.var[ch] + static_cast<T>(kBatchNormEps));
  }
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j)
        out[base + j] = (x[base + j] - stats.mean[ch]) * inv[ch];
    }
  const Var<T> inputs[] = {features};
  return features.tape->record(
      "batch_norm", std::move(out), inputs,
      [n, c, plane, inv, in_id = features.id](const Tensor<T>& gout, Tape<T>& tape) {
        Tensor<T>* gin = tape.grad_buffer(in_id);
        if (!gin) return;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (i * c + ch) * plane;
            for (std::size_t j = 0; j < plane; ++j) (*gin)[base + j] += gout[base + j] * inv[ch];
          }
      });
}

template <class T>
Var<T> partition_unfold(Var<T> input, std::size_t p) {
  const Tensor<T>& x = input.value();
  const TileGeometry g = tile_geometry(x, p);
  const std::size_t cells = p * p, plane = g.h * g.w;
  Tensor<T> out({g.tiles() * cells, g.c});
  for_each_tile_cell(g, [&](std::size_t tile, std::size_t cell, std::size_t n, std::size_t src) {
    if (src == static_cast<std::size_t>(-1)) return;
    T* row = out.data() + (tile * cells + cell) * g.c;
    for (std::size_t ch = 0; ch < g.c; ++ch) row[ch] = x[(n * g.c + ch) * plane + src];
  });
  const Var<T> inputs[] = {input};
  return input.tape->record(
      "partition_unfold", std::move(out), inputs,
      [g, cells, plane, in_id = input.id](const Tensor<T>& gout, Tape<T>& tape) {
        Tensor<T>* gin = tape.grad_buffer(in_id);
        if (!gin) return;
        for_each_tile_cell(
            g, [&](std::size_t tile, std::size_t cell, std::size_t n, std::size_t src) {
              if (src == static_cast<std::size_t>(-1)) return;
              const T* row = gout.data() + (tile * cells + cell) * g.c;
              for (std::size_t ch = 0; ch < g.c; ++ch)
                (*gin)[(n * g.c + ch) * plane + src] += row[ch];
            });
      });
}

template <class T>
Var<T> partition_flatten(Var<T> input, std::size_t p) {
  const Tensor<T>& x = input.value();
  const TileGeometry g = tile_geometry(x, p);
  const std::size_t cells = p * p, plane = g.h * g.w, width = g.c * cells;
  Tensor<T> out({g.tiles(), width});
  for_each_tile_cell(g, [&](std::size_t tile, std::size_t cell, std::size_t n, std::size_t src) {
    if (src == static_cast<std::size_t>(-1)) return;
    T* row = out.data() + tile * width;
    for (std::size_t ch = 0; ch < g.c; ++ch) row[ch * cells + cell] = x[(n * g.c + ch) * plane + src];
  });
  const Var<T> inputs[] = {input};
  return input.tape->record(
      "partition_flatten", std::move(out), inputs,
      [g, cells, plane, width, in_id = input.id](const Tensor<T>& gout, Tape<T>& tape) {
        Tensor<T>* gin = tape.grad_buffer(in_id);
        if (!gin) return;
        for_each_tile_cell(
            g, [&](std::size_t tile, std::size_t cell, std::size_t n, std::size_t src) {
              if (src == static_cast<std::size_t>(-1)) return;
              const T* row = gout.data() + tile * width;
              for (std::size_t ch = 0; ch < g.c; ++ch)
                (*gin)[(n * g.c + ch) * plane + src] += row[ch * cells + cell];
            });
      });
}

template <class T>
Var<T> gather_rows(Var<T> rows, std::span<const std::size_t> indices) {
  const Tensor<T>& x = rows.value();
  require_rank(x, 2, "gather_rows");
  const std::size_t width = x.dim(1);
  Tensor<T> out({indices.size(), width});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.dim(0)) throw ConfigError("gather_rows: index out of range");
    std::copy_n(x.data() + indices[i] * width, width, out.data() + i * width);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const Var<T> inputs[] = {rows};
  return rows.tape->record(
      "gather_rows", std::move(out), inputs,
      [idx = std::move(idx), width, in_id = rows.id](const Tensor<T>& gout, Tape<T>& tape) {
        Tensor<T>* gin = tape.grad_buffer(in_id);
        if (!gin) return;
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t j = 0; j < width; ++j) (*gin)[idx[i] * width + j] += gout[i * width + j];
      });
}

template <class T>
Var<T> sum(Var<T> input) {
  const Tensor<T>& x = input.value();
  T total{0};
  for (const T v : x.values()) total += v;
  const Var<T> inputs[] = {input};
  return input.tape->record("sum", Tensor<T>({}, std::vector<T>{total}), inputs,
                            [in_id = input.id](const Tensor<T>& gout, Tape<T>& tape) {
                              Tensor<T>* gin = tape.grad_buffer(in_id);
                              if (!gin) return;
                              for (auto& v : gin->values()) v += gout[0];
                            });
}

template <class T>
Var<T> scale(Var<T> input, T factor) {
  Tensor<T> out = input.value();
  for (auto& v : out.values()) v *= factor;
  const Var<T> inputs[] = {input};
  return input.tape->record("scale", std::move(out), inputs,
                            [factor, in_id = input.id](const Tensor<T>& gout, Tape<T>& tape) {
                              Tensor<T>* gin = tape.grad_buffer(in_id);
                              if (!gin) return;
                              for (std::size_t i = 0; i < gin->size(); ++i)
                                (*gin)[i] += factor * gout[i];
                            });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape())
    throw ConfigError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const Var<T> inputs[] = {a, b};
  return a.tape->record("add", std::move(out), inputs,
                        [ia = a.id, ib = b.id](const Tensor<T>& gout, Tape<T>& tape) {
                          tape.accumulate(ia, gout);
                          tape.accumulate(ib, gout);
                        });
}

template <class T>
Var<T> l1_mean(Var<T> input, const Tensor<T>& target) {
  const Tensor<T>& x = input.value();
  require_shape(target, x.shape(), "l1_mean target");
  if (x.empty()) throw ContractError("l1_mean: empty input");
  T total{0};
  for (std::size_t i = 0; i < x.size(); ++i) total += std::abs(x[i] - target[i]);
  const T inv_n = T{1} / static_cast<T>(x.size());
  const Var<T> inputs[] = {input};
  return input.tape->record(
      "l1_mean", Tensor<T>({}, std::vector<T>{total * inv_n}), inputs,
      [target, inv_n, in_id = input.id](const Tensor<T>& gout, Tape<T>& tape) {
        Tensor<T>* gin = tape.grad_buffer(in_id);
        if (!gin) return;
        const Tensor<T>& x = tape.value(in_id);
        for (std::size_t i = 0; i < x.size(); ++i) {
          const T d = x[i] - target[i];
          const T s = d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0});
          (*gin)[i] += s * inv_n * gout[0];
        }
      });
}

}  // namespace ops

template <class T>
ChannelStats<T> channel_stats(const Tensor<T>& features) {
  require_rank(features, 4, "channel_stats");
  const std::size_t n = features.dim(0), c = features.dim(1),
                    plane = features.dim(2) * features.dim(3);
  ChannelStats<T> s{std::vector<T>(c, T{0}), std::vector<T>(c, T{0})};
  const double count = static_cast<double>(n * plane);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < plane; ++j) {
        const double v = features[(i * c + ch) * plane + j];
        acc += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    // clamped so that a constant channel gets its exact value
    const double mean = std::clamp(acc / count, lo, hi);
    double sq = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < plane; ++j) {
        const double d = features[(i * c + ch) * plane + j] - mean;
        sq += d * d;
      }
    s.mean[ch] = static_cast<T>(mean);
    s.var[ch] = static_cast<T>(sq / count);
  }
  return s;
}

#define IDC_INSTANTIATE(T)                                                               \
  template class Tape<T>;                                                                \
  template Var<T> ops::conv2d(Var<T>, const Tensor<T>&);                                 \
  template Var<T> ops::leaky_relu(Var<T>, T);                                            \
  template Var<T> ops::batch_norm(Var<T>, const ChannelStats<T>&);                       \
  template Var<T> ops::partition_unfold(Var<T>, std::size_t);                            \
  template Var<T> ops::partition_flatten(Var<T>, std::size_t);                           \
  template Var<T> ops::gather_rows(Var<T>, std::span<const std::size_t>);                \
  template Var<T> ops::sum(Var<T>);                                                      \
  template Var<T> ops::scale(Var<T>, T);                                                 \
  template Var<T> ops::add(Var<T>, Var<T>);                                              \
  template Var<T> ops::l1_mean(Var<T>, const Tensor<T>&);                                \
  template ChannelStats<T> channel_stats(const Tensor<T>&);

IDC_INSTANTIATE(float)
IDC_INSTANTIATE(double)

#undef IDC_INSTANTIATE

}  // namespace idc
