#include "ivfuse/losses.hpp"

#include <array>
#include <cmath>

#include "ivfuse/errors.hpp"

namespace ivfuse {

using nn::Value;

namespace {

void check_pair(const GrayImage& a, const GrayImage& b, const char* who) {
  require(a.height == b.height && a.width == b.width,
          std::string(who) + ": image dimensions differ");
}

// Per-pixel histogram-contrast salience: S(x) = sum_j hist_j * |I(x)*255 - j|
// over the image's own 256-bin histogram. Prefix sums over bins make each
// pixel O(1) and match the direct sum to rounding.
std::vector<double> histogram_contrast(const GrayImage& img) {
  std::array<double, 256> hist{};
  for (double v : img.data) {
    int b = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    hist[static_cast<size_t>(b)] += 1.0;
  }
  std::array<double, 256> cum_cnt{}, cum_sum{};
  double run_cnt = 0.0, run_sum = 0.0;
  for (int j = 0; j < 256; ++j) {
    run_cnt += hist[static_cast<size_t>(j)];
    run_sum += j * hist[static_cast<size_t>(j)];
    cum_cnt[static_cast<size_t>(j)] = run_cnt;
    cum_sum[static_cast<size_t>(j)] = run_sum;
  }
  const double tot_cnt = run_cnt, tot_sum = run_sum;

  std::vector<double> s(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) {
    const double x = std::clamp(img.data[i], 0.0, 1.0) * 255.0;
    const size_t f = static_cast<size_t>(std::floor(x));
    // bins at or below x contribute x - j, the rest j - x
    s[i] = x * cum_cnt[f] - cum_sum[f] + (tot_sum - cum_sum[f]) -
           x * (tot_cnt - cum_cnt[f]);
  }
  return s;
}

}  // namespace

SaliencyPair saliency_weights(const GrayImage& i_ir, const GrayImage& i_vis) {
  check_pair(i_ir, i_vis, "saliency_weights");
  std::vector<double> s_ir = histogram_contrast(i_ir);
  std::vector<double> s_vis = histogram_contrast(i_vis);
  SaliencyPair out;
  out.w_ir = Tensor({1, i_ir.height, i_ir.width});
  out.w_vis = Tensor({1, i_ir.height, i_ir.width});
  for (size_t i = 0; i < s_ir.size(); ++i) {
    const double w = s_ir[i] / (s_ir[i] + s_vis[i] + kSaliencyEps);
    out.w_ir.data[i] = w;
    out.w_vis.data[i] = 1.0 - w;
  }
  return out;
}

Tensor signed_max_gradient(const GrayImage& i_ir, const GrayImage& i_vis) {
  check_pair(i_ir, i_vis, "signed_max_gradient");
  Tensor g_ir = nn::laplacian(to_tensor(i_ir));
  Tensor g_vis = nn::laplacian(to_tensor(i_vis));
  Tensor out({1, i_ir.height, i_ir.width});
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data[i] = std::fabs(g_ir.data[i]) >= std::fabs(g_vis.data[i])
                      ? g_ir.data[i]
                      : g_vis.data[i];
  return out;
}

Tensor saliency_blend(const GrayImage& i_ir, const GrayImage& i_vis) {
  SaliencyPair w = saliency_weights(i_ir, i_vis);
  Tensor out({1, i_ir.height, i_ir.width});
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data[i] =
        w.w_ir.data[i] * i_ir.data[i] + w.w_vis.data[i] * i_vis.data[i];
  return out;
}

Value loss_jgrad(const Value& fused, const GrayImage& i_ir,
                 const GrayImage& i_vis) {
  return nn::l1_mean(signed_max_gradient(i_ir, i_vis), nn::laplacian(fused));
}

Value loss_int(const Value& fused, const GrayImage& i_ir,
               const GrayImage& i_vis) {
  return nn::l1_mean(saliency_blend(i_ir, i_vis), fused);
}

Value loss_mit(const Value& fused, const GrayImage& i_ir,
               const GrayImage& i_vis, double lambda_jg, LossBundle* out) {
  require(lambda_jg >= 0.0, "loss_mit: lambda must be >= 0");
  Value li = loss_int(fused, i_ir, i_vis);
  Value lj = loss_jgrad(fused, i_ir, i_vis);
  Value total = nn::add(li, nn::affine(lj, lambda_jg, 0.0));
  if (out) {
    (*out)["int"] = li.item();
    (*out)["jgrad"] = lj.item();
    (*out)["mit_total"] = total.item();
  }
  return total;
}

Value loss_rec(const Value& rec1, const Value& rec2, const GrayImage& i_ir,
               const GrayImage& i_vis) {
  return nn::add(nn::l1_mean(rec1, to_tensor(i_ir)),
                 nn::l1_mean(rec2, to_tensor(i_vis)));
}

Value loss_grad(const Value& edge1, const Value& edge2, const GrayImage& i_ir,
                const GrayImage& i_vis) {
  return nn::add(
      nn::l1_mean(nn::laplacian(edge1), nn::laplacian(to_tensor(i_ir))),
      nn::l1_mean(nn::laplacian(edge2), nn::laplacian(to_tensor(i_vis))));
}

Value loss_en(const Value& rec_en, const GrayImage& i_ir,
              const GrayImage& i_vis, double lambda_edge) {
  require(lambda_edge >= 0.0, "loss_en: lambda must be >= 0");
  Value content = nn::l1_mean(saliency_blend(i_ir, i_vis), rec_en);
  Value edge =
      nn::l1_mean(signed_max_gradient(i_ir, i_vis), nn::laplacian(rec_en));
  return nn::add(content, nn::affine(edge, lambda_edge, 0.0));
}

Value loss_inter(const Tensor& fused_label, const Value& rec_en_ir,
                 const Value& rec_en_vis) {
  return nn::add(nn::kl_from_target(fused_label, rec_en_ir, kKlEps),
                 nn::kl_from_target(fused_label, rec_en_vis, kKlEps));
}

}  // namespace ivfuse
