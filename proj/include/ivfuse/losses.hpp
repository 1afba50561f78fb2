#pragma once

#include <map>
#include <string>

#include "ivfuse/autodiff.hpp"
#include "ivfuse/image.hpp"

namespace ivfuse {

// Training objectives. Network outputs arrive as autodiff Values; source
// images are constants, so gradients only ever flow into what the network
// produced. All ‖·‖₁ terms are mean-normalized, making the lambdas
// patch-size independent.

struct SaliencyPair {
  Tensor w_ir;   // {1,H,W}, in [0,1]
  Tensor w_vis;  // 1 - w_ir elementwise, exactly
};

using LossBundle = std::map<std::string, double>;

// Histogram-contrast saliency: S(x) = sum_j hist_j * |I(x)*255 - j| over the
// image's own 256-bin histogram; weights w_ir = S_ir/(S_ir+S_vis+eps).
SaliencyPair saliency_weights(const GrayImage& i_ir, const GrayImage& i_vis);

// Elementwise larger-magnitude Laplacian of the two sources, sign kept;
// ties go to the infrared side.
Tensor signed_max_gradient(const GrayImage& i_ir, const GrayImage& i_vis);

// The blend w_ir.*ir + w_vis.*vis used by the intensity/content terms.
Tensor saliency_blend(const GrayImage& i_ir, const GrayImage& i_vis);

nn::Value loss_jgrad(const nn::Value& fused, const GrayImage& i_ir,
                     const GrayImage& i_vis);
nn::Value loss_int(const nn::Value& fused, const GrayImage& i_ir,
                   const GrayImage& i_vis);
// total = int + lambda_jg * jgrad; component values reported in `out`.
nn::Value loss_mit(const nn::Value& fused, const GrayImage& i_ir,
                   const GrayImage& i_vis, double lambda_jg, LossBundle* out);

nn::Value loss_rec(const nn::Value& rec1, const nn::Value& rec2,
                   const GrayImage& i_ir, const GrayImage& i_vis);
nn::Value loss_grad(const nn::Value& edge1, const nn::Value& edge2,
                    const GrayImage& i_ir, const GrayImage& i_vis);
nn::Value loss_en(const nn::Value& rec_en, const GrayImage& i_ir,
                  const GrayImage& i_vis, double lambda_edge);

// KL of the (detached) fused image against both auxiliary reconstructions.
nn::Value loss_inter(const Tensor& fused_label, const nn::Value& rec_en_ir,
                     const nn::Value& rec_en_vis);

constexpr double kSaliencyEps = 1e-8;
constexpr double kKlEps = 1e-8;

}  // namespace ivfuse
