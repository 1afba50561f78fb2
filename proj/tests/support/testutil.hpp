#pragma once

// Shared helpers for the test suites: random tensors, structured synthetic
// image pairs, and the central-difference gradient checker every block and
// loss is validated against.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ivfuse/autodiff.hpp"
#include "ivfuse/image.hpp"
#include "ivfuse/rng.hpp"
#include "ivfuse/tensor.hpp"

namespace ivfuse::testutil {

inline Tensor rand_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                          double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

inline GrayImage rand_image(int h, int w, Rng& rng, double lo = 0.05,
                            double hi = 0.95) {
  GrayImage img(h, w);
  for (double& v : img.data) v = quantize_unit(rng.uniform(lo, hi));
  return img;
}

// Scalar projection with fixed random weights; probes all output entries
// with mixed signs so Jacobian errors cannot cancel.
inline nn::Value project(const nn::Value& out, uint64_t seed) {
  Rng rng(seed);
  Tensor w = rand_tensor(out.shape(), rng, -1.0, 1.0);
  return nn::reduce_sum(nn::mul(out, nn::Value::constant(w)));
}

struct GradCheck {
  double max_err = 0.0;      // max normalized deviation over all coordinates
  std::string where;         // input index / coordinate of the worst entry
  bool ok(double tol) const { return max_err <= tol; }
};

// Central finite differences (step h) against the analytic gradients of
// `build`, which must construct the scalar expression from the given leaf
// values. `inputs` lists the tensors to differentiate with respect to.
inline GradCheck check_gradients(
    const std::function<nn::Value(const std::vector<nn::Value>&)>& build,
    std::vector<Tensor> inputs, double h = 1e-4, double atol = 1e-6) {
  using nn::Value;

  std::vector<Value> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(Value::leaf(t, true));
  Value root = build(leaves);
  nn::backward(root);

  auto eval = [&](const std::vector<Tensor>& ts) {
    std::vector<Value> ls;
    ls.reserve(ts.size());
    for (const auto& t : ts) ls.push_back(Value::constant(t));
    return build(ls).item();
  };

  GradCheck result;
  for (size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& analytic = leaves[k].node()->ensure_grad();
    for (int64_t i = 0; i < inputs[k].numel(); ++i) {
      std::vector<Tensor> probe = inputs;
      const double orig = probe[k].data[i];
      probe[k].data[i] = orig + h;
      const double fp = eval(probe);
      probe[k].data[i] = orig - h;
      const double fm = eval(probe);
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic.data[i];
      const double err =
          std::fabs(a - numeric) /
          std::max({std::fabs(a), std::fabs(numeric), atol / 1e-3});
      if (err > result.max_err) {
        result.max_err = err;
        result.where = "input " + std::to_string(k) + " coord " +
                       std::to_string(i) + " analytic " + std::to_string(a) +
                       " numeric " + std::to_string(numeric);
      }
    }
  }
  return result;
}

// Registered synthetic pair: shared scene geometry, modality-specific
// rendering. The infrared side gets bright filled shapes on a smooth
// background, the visible side textured background plus shape outlines.
inline void synth_pair(int h, int w, uint64_t seed, GrayImage* ir,
                       GrayImage* vis) {
  Rng rng(seed);
  *ir = GrayImage(h, w);
  *vis = GrayImage(h, w);

  const double fx = rng.uniform(0.15, 0.45), fy = rng.uniform(0.05, 0.3);
  const double phase = rng.uniform(0.0, 6.28);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      ir->at(r, c) = 0.18 + 0.08 * std::sin(0.05 * r + 0.5 * phase);
      vis->at(r, c) =
          0.45 + 0.18 * std::sin(fx * c + phase) * std::cos(fy * r);
    }

  const int shapes = 3 + static_cast<int>(rng.uniform_int(3));
  for (int s = 0; s < shapes; ++s) {
    const int sh = 4 + static_cast<int>(rng.uniform_int(std::max(1, h / 3)));
    const int sw = 4 + static_cast<int>(rng.uniform_int(std::max(1, w / 3)));
    const int r0 = static_cast<int>(rng.uniform_int(std::max(1, h - sh)));
    const int c0 = static_cast<int>(rng.uniform_int(std::max(1, w - sw)));
    const double hot = rng.uniform(0.6, 0.95);
    const double tone = rng.uniform(0.2, 0.8);
    for (int r = r0; r < r0 + sh && r < h; ++r)
      for (int c = c0; c < c0 + sw && c < w; ++c) {
        ir->at(r, c) = hot;
        const bool border = r == r0 || c == c0 || r == r0 + sh - 1 ||
                            c == c0 + sw - 1;
        if (border)
          vis->at(r, c) = tone > 0.5 ? 0.05 : 0.95;  // crisp outline
        else
          vis->at(r, c) = 0.5 * vis->at(r, c) + 0.5 * tone;
      }
  }

  for (double& v : ir->data) v = quantize_unit(v + rng.uniform(-0.01, 0.01));
  for (double& v : vis->data) v = quantize_unit(v + rng.uniform(-0.01, 0.01));
}

}  // namespace ivfuse::testutil
