#include "ivfuse/autodiff.hpp"

#include <atomic>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "ivfuse/errors.hpp"

namespace ivfuse::nn {

namespace {

std::atomic<uint64_t> g_seq{0};

NodePtr make_node(Tensor value, std::vector<NodePtr> inputs,
                  std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  bool rg = false;
  for (const auto& in : inputs) rg = rg || (in && in->requires_grad);
  n->requires_grad = rg;
  if (rg) {
    n->inputs = std::move(inputs);
    n->backprop = std::move(backprop);
  }
  return n;
}

void accumulate(Node& dst, const double* g, int64_t n) {
  Tensor& t = dst.ensure_grad();
  for (int64_t i = 0; i < n; ++i) t.data[i] += g[i];
}

// Replicate-pads {C,H,W} by p on each spatial side.
std::vector<double> replicate_pad(const Tensor& x, int p) {
  const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
  const int Hp = H + 2 * p, Wp = W + 2 * p;
  std::vector<double> out(static_cast<size_t>(C) * Hp * Wp);
  for (int c = 0; c < C; ++c) {
    for (int py = 0; py < Hp; ++py) {
      int sy = std::min(std::max(py - p, 0), H - 1);
      const double* src = &x.data[(static_cast<size_t>(c) * H + sy) * W];
      double* dst = &out[(static_cast<size_t>(c) * Hp + py) * Wp];
      for (int px = 0; px < Wp; ++px) {
        int sx = std::min(std::max(px - p, 0), W - 1);
        dst[px] = src[sx];
      }
    }
  }
  return out;
}

// Adjoint of replicate_pad: folds the padded gradient back onto the image.
void fold_pad_grad(const std::vector<double>& pg, int C, int H, int W, int p,
                   Tensor& gx) {
  const int Hp = H + 2 * p, Wp = W + 2 * p;
  for (int c = 0; c < C; ++c) {
    for (int py = 0; py < Hp; ++py) {
      int sy = std::min(std::max(py - p, 0), H - 1);
      const double* src = &pg[(static_cast<size_t>(c) * Hp + py) * Wp];
      double* dst = &gx.data[(static_cast<size_t>(c) * H + sy) * W];
      for (int px = 0; px < Wp; ++px) {
        int sx = std::min(std::max(px - p, 0), W - 1);
        dst[sx] += src[px];
      }
    }
  }
}

void conv_core_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                       Tensor& out) {
  const int Cin = x.shape[0], H = x.shape[1], W = x.shape[2];
  const int Cout = w.shape[0], K = w.shape[2];
  const int p = (K - 1) / 2;
  const int Hp = H + 2 * p, Wp = W + 2 * p;
  std::vector<double> pad = replicate_pad(x, p);
  for (int co = 0; co < Cout; ++co) {
    double* outp = &out.data[static_cast<size_t>(co) * H * W];
    const double bias = b.data.empty() ? 0.0 : b.data[co];
    for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i) outp[i] = bias;
    for (int ci = 0; ci < Cin; ++ci) {
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          const double wv =
              w.data[((static_cast<size_t>(co) * Cin + ci) * K + ky) * K + kx];
          if (wv == 0.0) continue;
          const double* src =
              &pad[(static_cast<size_t>(ci) * Hp + ky) * Wp + kx];
          double* dst = outp;
          for (int y = 0; y < H; ++y) {
            for (int x2 = 0; x2 < W; ++x2) dst[x2] += wv * src[x2];
            dst += W;
            src += Wp;
          }
        }
      }
    }
  }
}

void conv_core_backward(const Tensor& x, const Tensor& w, const Tensor& g,
                        Tensor* gx, Tensor* gw, Tensor* gb) {
  const int Cin = x.shape[0], H = x.shape[1], W = x.shape[2];
  const int Cout = w.shape[0], K = w.shape[2];
  const int p = (K - 1) / 2;
  const int Hp = H + 2 * p, Wp = W + 2 * p;
  std::vector<double> pad = replicate_pad(x, p);
  std::vector<double> pg;
  if (gx) pg.assign(static_cast<size_t>(Cin) * Hp * Wp, 0.0);

  for (int co = 0; co < Cout; ++co) {
    const double* gout = &g.data[static_cast<size_t>(co) * H * W];
    if (gb) {
      double acc = 0.0;
      for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i) acc += gout[i];
      gb->data[co] += acc;
    }
    for (int ci = 0; ci < Cin; ++ci) {
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          const size_t widx =
              ((static_cast<size_t>(co) * Cin + ci) * K + ky) * K + kx;
          if (gw) {
            const double* src =
                &pad[(static_cast<size_t>(ci) * Hp + ky) * Wp + kx];
            const double* gp = gout;
            double acc = 0.0;
            for (int y = 0; y < H; ++y) {
              for (int x2 = 0; x2 < W; ++x2) acc += gp[x2] * src[x2];
              gp += W;
              src += Wp;
            }
            gw->data[widx] += acc;
          }
          if (gx) {
            const double wv = w.data[widx];
            if (wv == 0.0) continue;
            double* dst = &pg[(static_cast<size_t>(ci) * Hp + ky) * Wp + kx];
            const double* gp = gout;
            for (int y = 0; y < H; ++y) {
              for (int x2 = 0; x2 < W; ++x2) dst[x2] += wv * gp[x2];
              dst += Wp;
              gp += W;
            }
          }
        }
      }
    }
  }
  if (gx) fold_pad_grad(pg, Cin, H, W, p, *gx);
}

const double kLaplacianKernel[3][3] = {{0, 1, 0}, {1, -4, 1}, {0, 1, 0}};

}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.data.empty()) grad = Tensor::zeros(value.shape);
  return grad;
}

Value Value::leaf(Tensor t, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = requires_grad;
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return Value(n);
}

void backward(const Value& root, double seed) {
  Node* r = root.node().get();
  if (r == nullptr) throw ValidationError("backward: undefined root");
  if (r->value.numel() != 1)
    throw ValidationError("backward: root must be scalar");
  if (!r->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(r, 0);
  visited.insert(r);
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->inputs.size()) {
      Node* c = n->inputs[idx++].get();
      if (c && c->requires_grad && visited.insert(c).second)
        stack.emplace_back(c, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  r->ensure_grad().data[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->grad.data.empty()) n->backprop(*n);
  }
}

Value add(const Value& a, const Value& b) {
  check_same_shape(a.val(), b.val(), "add");
  Tensor out = a.val();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] += b.val().data[i];
  return Value(make_node(std::move(out), {a.node(), b.node()}, [](Node& n) {
    for (int k = 0; k < 2; ++k)
      if (n.inputs[k]->requires_grad)
        accumulate(*n.inputs[k], n.grad.data.data(), n.grad.numel());
  }));
}

Value sub(const Value& a, const Value& b) {
  check_same_shape(a.val(), b.val(), "sub");
  Tensor out = a.val();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] -= b.val().data[i];
  return Value(make_node(std::move(out), {a.node(), b.node()}, [](Node& n) {
    if (n.inputs[0]->requires_grad)
      accumulate(*n.inputs[0], n.grad.data.data(), n.grad.numel());
    if (n.inputs[1]->requires_grad) {
      Tensor& gb = n.inputs[1]->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i)
        gb.data[i] -= n.grad.data[i];
    }
  }));
}

Value mul(const Value& a, const Value& b) {
  check_same_shape(a.val(), b.val(), "mul");
  Tensor out = a.val();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] *= b.val().data[i];
  return Value(make_node(std::move(out), {a.node(), b.node()}, [](Node& n) {
    const Tensor& av = n.inputs[0]->value;
    const Tensor& bv = n.inputs[1]->value;
    if (n.inputs[0]->requires_grad) {
      Tensor& ga = n.inputs[0]->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i)
        ga.data[i] += bv.data[i] * n.grad.data[i];
    }
    if (n.inputs[1]->requires_grad) {
      Tensor& gb = n.inputs[1]->ensure_grad();
      for (int64_t i = 0; i < n.grad.numel(); ++i)
        gb.data[i] += av.data[i] * n.grad.data[i];
    }
  }));
}

Value affine(const Value& x, double mul, double off) {
  Tensor out = x.val();
  for (double& v : out.data) v = mul * v + off;
  return Value(make_node(std::move(out), {x.node()}, [mul](Node& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor& gx = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      gx.data[i] += mul * n.grad.data[i];
  }));
}

Value tanh_op(const Value& x) {
  Tensor out = x.val();
  for (double& v : out.data) v = std::tanh(v);
  return Value(make_node(std::move(out), {x.node()}, [](Node& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor& gx = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      const double t = n.value.data[i];
      gx.data[i] += (1.0 - t * t) * n.grad.data[i];
    }
  }));
}

Value relu(const Value& x) { return leaky_relu(x, 0.0); }

Value leaky_relu(const Value& x, double slope) {
  Tensor out = x.val();
  for (double& v : out.data) v = v > 0.0 ? v : slope * v;
  return Value(make_node(std::move(out), {x.node()}, [slope](Node& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor& gx = n.inputs[0]->ensure_grad();
    const Tensor& xin = n.inputs[0]->value;
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      gx.data[i] += (xin.data[i] > 0.0 ? 1.0 : slope) * n.grad.data[i];
  }));
}

Value concat_channels(const std::vector<Value>& xs) {
  require(!xs.empty(), "concat_channels: empty input list");
  const int H = xs[0].val().shape[1], W = xs[0].val().shape[2];
  int C = 0;
  std::vector<NodePtr> inputs;
  for (const auto& x : xs) {
    require(x.val().rank() == 3 && x.val().shape[1] == H &&
                x.val().shape[2] == W,
            "concat_channels: spatial shape mismatch");
    C += x.val().shape[0];
    inputs.push_back(x.node());
  }
  Tensor out({C, H, W});
  size_t off = 0;
  for (const auto& x : xs) {
    const auto& d = x.val().data;
    std::copy(d.begin(), d.end(), out.data.begin() + off);
    off += d.size();
  }
  return Value(make_node(std::move(out), std::move(inputs), [](Node& n) {
    size_t off = 0;
    for (auto& in : n.inputs) {
      const int64_t cnt = in->value.numel();
      if (in->requires_grad) accumulate(*in, n.grad.data.data() + off, cnt);
      off += static_cast<size_t>(cnt);
    }
  }));
}

Value slice_channels(const Value& x, int begin, int count) {
  const Tensor& xv = x.val();
  require(xv.rank() == 3, "slice_channels: rank-3 input expected");
  require(begin >= 0 && count >= 0 && begin + count <= xv.shape[0],
          "slice_channels: range out of bounds");
  const int H = xv.shape[1], W = xv.shape[2];
  const size_t plane = static_cast<size_t>(H) * W;
  Tensor out({count, H, W});
  std::copy(xv.data.begin() + begin * plane,
            xv.data.begin() + (begin + count) * plane, out.data.begin());
  return Value(make_node(std::move(out), {x.node()}, [begin, plane](Node& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor& gx = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      gx.data[begin * plane + i] += n.grad.data[i];
  }));
}

Value permute_channels(const Value& x, const std::vector<int>& perm) {
  const Tensor& xv = x.val();
  require(xv.rank() == 3, "permute_channels: rank-3 input expected");
  const int C = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
  require(static_cast<int>(perm.size()) == C,
          "permute_channels: permutation length mismatch");
  const size_t plane = static_cast<size_t>(H) * W;
  Tensor out({C, H, W});
  for (int i = 0; i < C; ++i) {
    require(perm[i] >= 0 && perm[i] < C, "permute_channels: index out of range");
    std::copy(xv.data.begin() + perm[i] * plane,
              xv.data.begin() + (perm[i] + 1) * plane,
              out.data.begin() + i * plane);
  }
  return Value(make_node(std::move(out), {x.node()}, [perm, plane, C](Node& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor& gx = n.inputs[0]->ensure_grad();
    for (int i = 0; i < C; ++i)
      for (size_t j = 0; j < plane; ++j)
        gx.data[perm[i] * plane + j] += n.grad.data[i * plane + j];
  }));
}

Value detach(const Value& x) { return Value::constant(x.val()); }

Value reduce_sum(const Value& x) {
  double acc = 0.0;
  for (double v : x.val().data) acc += v;
  return Value(make_node(Tensor::scalar(acc), {x.node()}, [](Node& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor& gx = n.inputs[0]->ensure_grad();
    const double g = n.grad.data[0];
    for (double& v : gx.data) v += g;
  }));
}

Value conv2d(const Value& x, const Value& w, const Value& b) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  const Tensor& bv = b.val();
  require(xv.rank() == 3, "conv2d: input must be {C,H,W}");
  require(wv.rank() == 4 && wv.shape[2] == wv.shape[3] && wv.shape[2] % 2 == 1,
          "conv2d: kernel must be {Cout,Cin,K,K} with odd K");
  if (wv.shape[1] != xv.shape[0])
    throw ValidationError("conv2d: channel mismatch, kernel expects " +
                          std::to_string(wv.shape[1]) + " got " +
                          std::to_string(xv.shape[0]));
  require(bv.numel() == wv.shape[0], "conv2d: bias length mismatch");

  Tensor out({wv.shape[0], xv.shape[1], xv.shape[2]});
  conv_core_forward(xv, wv, bv, out);
  return Value(make_node(std::move(out), {x.node(), w.node(), b.node()},
                         [](Node& n) {
    Node& xn = *n.inputs[0];
    Node& wn = *n.inputs[1];
    Node& bn = *n.inputs[2];
    Tensor* gx = xn.requires_grad ? &xn.ensure_grad() : nullptr;
    Tensor* gw = wn.requires_grad ? &wn.ensure_grad() : nullptr;
    Tensor* gb = bn.requires_grad ? &bn.ensure_grad() : nullptr;
    conv_core_backward(xn.value, wn.value, n.grad, gx, gw, gb);
  }));
}

Tensor laplacian(const Tensor& x) {
  require(x.rank() == 2 || (x.rank() == 3 && x.shape[0] == 1),
          "laplacian: single-channel input expected");
  const int H = x.rank() == 2 ? x.shape[0] : x.shape[1];
  const int W = x.rank() == 2 ? x.shape[1] : x.shape[2];
  Tensor x3({1, H, W});
  x3.data = x.data;
  Tensor w({1, 1, 3, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) w.data[i * 3 + j] = kLaplacianKernel[i][j];
  Tensor b({1});
  Tensor out({1, H, W});
  conv_core_forward(x3, w, b, out);
  out.shape = x.shape;
  return out;
}

Value laplacian(const Value& x) {
  Tensor out = laplacian(x.val());
  return Value(make_node(std::move(out), {x.node()}, [](Node& n) {
    if (!n.inputs[0]->requires_grad) return;
    const auto& shape = n.inputs[0]->value.shape;
    const int H = shape.size() == 2 ? shape[0] : shape[1];
    const int W = shape.size() == 2 ? shape[1] : shape[2];
    Tensor w({1, 1, 3, 3});
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) w.data[i * 3 + j] = kLaplacianKernel[i][j];
    Tensor g3({1, H, W});
    g3.data = n.grad.data;
    Tensor x3({1, H, W});
    x3.data = n.inputs[0]->value.data;
    Tensor gx3({1, H, W});
    conv_core_backward(x3, w, g3, &gx3, nullptr, nullptr);
    Tensor& gx = n.inputs[0]->ensure_grad();
    for (int64_t i = 0; i < gx.numel(); ++i) gx.data[i] += gx3.data[i];
  }));
}

Value gram(const Value& a, const Value& b, double inv_scale) {
  check_same_shape(a.val(), b.val(), "gram");
  require(a.val().rank() == 3, "gram: rank-3 inputs expected");
  const int C = a.val().shape[0];
  const size_t plane =
      static_cast<size_t>(a.val().shape[1]) * a.val().shape[2];
  Tensor out({C, C});
  for (int i = 0; i < C; ++i) {
    const double* ai = &a.val().data[i * plane];
    for (int j = 0; j < C; ++j) {
      const double* bj = &b.val().data[j * plane];
      double acc = 0.0;
      for (size_t k = 0; k < plane; ++k) acc += ai[k] * bj[k];
      out.data[static_cast<size_t>(i) * C + j] = inv_scale * acc;
    }
  }
  return Value(make_node(std::move(out), {a.node(), b.node()},
                         [inv_scale, C, plane](Node& n) {
    const Tensor& av = n.inputs[0]->value;
    const Tensor& bv = n.inputs[1]->value;
    if (n.inputs[0]->requires_grad) {
      Tensor& ga = n.inputs[0]->ensure_grad();
      for (int i = 0; i < C; ++i)
        for (int j = 0; j < C; ++j) {
          const double g =
              inv_scale * n.grad.data[static_cast<size_t>(i) * C + j];
          if (g == 0.0) continue;
          double* dst = &ga.data[i * plane];
          const double* src = &bv.data[j * plane];
          for (size_t k = 0; k < plane; ++k) dst[k] += g * src[k];
        }
    }
    if (n.inputs[1]->requires_grad) {
      Tensor& gb = n.inputs[1]->ensure_grad();
      for (int i = 0; i < C; ++i)
        for (int j = 0; j < C; ++j) {
          const double g =
              inv_scale * n.grad.data[static_cast<size_t>(i) * C + j];
          if (g == 0.0) continue;
          double* dst = &gb.data[j * plane];
          const double* src = &av.data[i * plane];
          for (size_t k = 0; k < plane; ++k) dst[k] += g * src[k];
        }
    }
  }));
}

Value softmax_rows(const Value& a) {
  const Tensor& av = a.val();
  require(av.rank() == 2, "softmax_rows: rank-2 input expected");
  const int R = av.shape[0], C = av.shape[1];
  Tensor out({R, C});
  for (int r = 0; r < R; ++r) {
    const double* row = &av.data[static_cast<size_t>(r) * C];
    double* orow = &out.data[static_cast<size_t>(r) * C];
    double mx = row[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int c = 0; c < C; ++c) {
      orow[c] = std::exp(row[c] - mx);
      sum += orow[c];
    }
    for (int c = 0; c < C; ++c) orow[c] /= sum;
  }
  return Value(make_node(std::move(out), {a.node()}, [R, C](Node& n) {
    if (!n.inputs[0]->requires_grad) return;
    Tensor& ga = n.inputs[0]->ensure_grad();
    for (int r = 0; r < R; ++r) {
      const double* s = &n.value.data[static_cast<size_t>(r) * C];
      const double* g = &n.grad.data[static_cast<size_t>(r) * C];
      double dot = 0.0;
      for (int c = 0; c < C; ++c) dot += g[c] * s[c];
      double* dst = &ga.data[static_cast<size_t>(r) * C];
      for (int c = 0; c < C; ++c) dst[c] += s[c] * (g[c] - dot);
    }
  }));
}

Value channel_mix(const Value& a, const Value& v) {
  const Tensor& av = a.val();
  const Tensor& vv = v.val();
  require(av.rank() == 2 && vv.rank() == 3 && av.shape[0] == av.shape[1] &&
              av.shape[1] == vv.shape[0],
          "channel_mix: {C,C} and {C,H,W} expected");
  const int C = vv.shape[0];
  const size_t plane = static_cast<size_t>(vv.shape[1]) * vv.shape[2];
  Tensor out({C, vv.shape[1], vv.shape[2]});
  for (int i = 0; i < C; ++i) {
    double* dst = &out.data[i * plane];
    for (int j = 0; j < C; ++j) {
      const double w = av.data[static_cast<size_t>(i) * C + j];
      if (w == 0.0) continue;
      const double* src = &vv.data[j * plane];
      for (size_t k = 0; k < plane; ++k) dst[k] += w * src[k];
    }
  }
  return Value(make_node(std::move(out), {a.node(), v.node()},
                         [C, plane](Node& n) {
    const Tensor& av2 = n.inputs[0]->value;
    const Tensor& vv2 = n.inputs[1]->value;
    if (n.inputs[0]->requires_grad) {
      Tensor& ga = n.inputs[0]->ensure_grad();
      for (int i = 0; i < C; ++i) {
        const double* gi = &n.grad.data[i * plane];
        for (int j = 0; j < C; ++j) {
          const double* src = &vv2.data[j * plane];
          double acc = 0.0;
          for (size_t k = 0; k < plane; ++k) acc += gi[k] * src[k];
          ga.data[static_cast<size_t>(i) * C + j] += acc;
        }
      }
    }
    if (n.inputs[1]->requires_grad) {
      Tensor& gv = n.inputs[1]->ensure_grad();
      for (int i = 0; i < C; ++i) {
        const double* gi = &n.grad.data[i * plane];
        for (int j = 0; j < C; ++j) {
          const double w = av2.data[static_cast<size_t>(i) * C + j];
          if (w == 0.0) continue;
          double* dst = &gv.data[j * plane];
          for (size_t k = 0; k < plane; ++k) dst[k] += w * gi[k];
        }
      }
    }
  }));
}

Value l1_mean(const Value& a, const Value& b) {
  check_same_shape(a.val(), b.val(), "l1_mean");
  const int64_t n = a.val().numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i)
    acc += std::fabs(a.val().data[i] - b.val().data[i]);
  const double inv_n = 1.0 / static_cast<double>(n);
  return Value(make_node(Tensor::scalar(acc * inv_n), {a.node(), b.node()},
                         [inv_n](Node& nd) {
    const double g = nd.grad.data[0] * inv_n;
    const Tensor& av = nd.inputs[0]->value;
    const Tensor& bv = nd.inputs[1]->value;
    Tensor* ga = nd.inputs[0]->requires_grad ? &nd.inputs[0]->ensure_grad()
                                             : nullptr;
    Tensor* gb = nd.inputs[1]->requires_grad ? &nd.inputs[1]->ensure_grad()
                                             : nullptr;
    for (int64_t i = 0; i < av.numel(); ++i) {
      const double d = av.data[i] - bv.data[i];
      const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      if (ga) ga->data[i] += g * s;
      if (gb) gb->data[i] -= g * s;
    }
  }));
}

Value l1_mean(const Value& a, const Tensor& b) {
  return l1_mean(a, Value::constant(b));
}

Value l1_mean(const Tensor& a, const Value& b) {
  return l1_mean(Value::constant(a), b);
}

Value kl_from_target(const Tensor& p_img, const Value& q_img, double eps) {
  check_same_shape(p_img, q_img.val(), "kl_from_target");
  const int64_t n = p_img.numel();
  std::vector<double> p(static_cast<size_t>(n));
  double psum = 0.0;
  for (int64_t i = 0; i < n; ++i) psum += p_img.data[i] + eps;
  for (int64_t i = 0; i < n; ++i) p[i] = (p_img.data[i] + eps) / psum;

  const Tensor& qv = q_img.val();
  double qsum = 0.0;
  for (int64_t i = 0; i < n; ++i) qsum += qv.data[i] + eps;
  double kl = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double qhat = (qv.data[i] + eps) / qsum;
    kl += p[i] * (std::log(p[i]) - std::log(qhat));
  }
  return Value(make_node(Tensor::scalar(kl), {q_img.node()},
                         [p = std::move(p), eps, qsum](Node& nd) {
    if (!nd.inputs[0]->requires_grad) return;
    Tensor& gq = nd.inputs[0]->ensure_grad();
    const Tensor& qv2 = nd.inputs[0]->value;
    const double g = nd.grad.data[0];
    for (int64_t i = 0; i < qv2.numel(); ++i) {
      const double qhat = (qv2.data[i] + eps) / qsum;
      gq.data[i] += g * (1.0 - p[i] / qhat) / qsum;
    }
  }));
}

}  // namespace ivfuse::nn
