#include "ivfuse/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <set>
#include <thread>

#include <fftw3.h>

#include "ivfuse/errors.hpp"

namespace fs = std::filesystem;

namespace ivfuse {

namespace {

constexpr double kPi = 3.14159265358979323846;

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;  // zero-variance convention
  return sab / std::sqrt(saa * sbb);
}

void check_triple(const GrayImage& fused, const GrayImage& ir,
                  const GrayImage& vis) {
  require(fused.height == ir.height && fused.width == ir.width &&
              fused.height == vis.height && fused.width == vis.width,
          "metrics: triple dimensions differ");
  require(fused.height > 0 && fused.width > 0, "metrics: empty image");
}

struct GradientField {
  std::vector<double> mag;
  std::vector<double> ang;  // atan(gv/gh) in [-pi/2, pi/2]
};

// Sobel with replicate border.
void sobel(const GrayImage& img, std::vector<double>* gh,
           std::vector<double>* gv) {
  const int h = img.height, w = img.width;
  gh->assign(static_cast<size_t>(h) * w, 0.0);
  gv->assign(static_cast<size_t>(h) * w, 0.0);
  auto px = [&](int r, int c) {
    r = std::clamp(r, 0, h - 1);
    c = std::clamp(c, 0, w - 1);
    return img.at(r, c);
  };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double tl = px(r - 1, c - 1), tc = px(r - 1, c), tr = px(r - 1, c + 1);
      const double ml = px(r, c - 1), mr = px(r, c + 1);
      const double bl = px(r + 1, c - 1), bc = px(r + 1, c), br = px(r + 1, c + 1);
      (*gh)[static_cast<size_t>(r) * w + c] =
          (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
      (*gv)[static_cast<size_t>(r) * w + c] =
          (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr);
    }
  }
}

GradientField gradient_field(const GrayImage& img) {
  std::vector<double> gh, gv;
  sobel(img, &gh, &gv);
  GradientField f;
  f.mag.resize(gh.size());
  f.ang.resize(gh.size());
  for (size_t i = 0; i < gh.size(); ++i) {
    f.mag[i] = std::sqrt(gh[i] * gh[i] + gv[i] * gv[i]);
    if (gh[i] != 0.0)
      f.ang[i] = std::atan(gv[i] / gh[i]);
    else
      f.ang[i] = gv[i] == 0.0 ? 0.0 : (gv[i] > 0.0 ? kPi / 2 : -kPi / 2);
  }
  return f;
}

// Xydeas-Petrovic sigmoid constants.
constexpr double kGammaG = 0.9994, kKappaG = -15.0, kSigmaG = 0.5;
constexpr double kGammaA = 0.9879, kKappaA = -22.0, kSigmaA = 0.8;

double edge_preservation(double g_src, double a_src, double g_f, double a_f) {
  const double mx = std::max(g_src, g_f);
  const double ratio = mx > 0.0 ? std::min(g_src, g_f) / mx : 0.0;
  const double align = 1.0 - std::fabs(a_src - a_f) / (kPi / 2);
  const double qg = kGammaG / (1.0 + std::exp(kKappaG * (ratio - kSigmaG)));
  const double qa = kGammaA / (1.0 + std::exp(kKappaA * (align - kSigmaA)));
  return qg * qa;
}

std::mutex g_fftw_mutex;  // FFTW planning is not thread-safe

// Filters img through the Mannos-Sakrison contrast sensitivity function in
// the frequency domain, assuming 32 pixels per visual degree.
std::vector<double> csf_filter(const std::vector<double>& img, int h, int w) {
  const size_t n = static_cast<size_t>(h) * w;
  fftw_complex* buf;
  fftw_plan fwd, bwd;
  {
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    buf = fftw_alloc_complex(n);
    fwd = fftw_plan_dft_2d(h, w, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_2d(h, w, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  for (size_t i = 0; i < n; ++i) {
    buf[i][0] = img[i];
    buf[i][1] = 0.0;
  }
  fftw_execute(fwd);

  constexpr double kPixelsPerDegree = 32.0;
  for (int v = 0; v < h; ++v) {
    const double fv = (v <= h / 2 ? v : v - h) / static_cast<double>(h);
    for (int u = 0; u < w; ++u) {
      const double fu = (u <= w / 2 ? u : u - w) / static_cast<double>(w);
      const double f = kPixelsPerDegree * std::sqrt(fu * fu + fv * fv);
      const double a =
          2.6 * (0.0192 + 0.114 * f) * std::exp(-std::pow(0.114 * f, 1.1));
      buf[static_cast<size_t>(v) * w + u][0] *= a;
      buf[static_cast<size_t>(v) * w + u][1] *= a;
    }
  }
  fftw_execute(bwd);

  std::vector<double> out(n);
  const double inv = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) out[i] = buf[i][0] * inv;
  {
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(buf);
  }
  return out;
}

constexpr int kQcvRegion = 16;

// Region-weighted CSF distortion of one source against the fused image.
double qcv_one_source(const GrayImage& src, const GrayImage& fused) {
  const int h = src.height, w = src.width;
  std::vector<double> gh, gv;
  sobel(src, &gh, &gv);
  std::vector<double> diff(src.data.size());
  for (size_t i = 0; i < diff.size(); ++i)
    diff[i] = src.data[i] - fused.data[i];
  std::vector<double> filt = csf_filter(diff, h, w);

  double num = 0.0, den = 0.0;
  for (int r0 = 0; r0 < h; r0 += kQcvRegion) {
    for (int c0 = 0; c0 < w; c0 += kQcvRegion) {
      const int r1 = std::min(r0 + kQcvRegion, h);
      const int c1 = std::min(c0 + kQcvRegion, w);
      double mag_sum = 0.0, sq = 0.0;
      for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) {
          const size_t i = static_cast<size_t>(r) * w + c;
          mag_sum += std::sqrt(gh[i] * gh[i] + gv[i] * gv[i]);
          sq += filt[i] * filt[i];
        }
      const double lambda = mag_sum * mag_sum;
      const double distortion = sq / ((r1 - r0) * (c1 - c0));
      num += lambda * distortion;
      den += lambda;
    }
  }
  return den > 0.0 ? num / den : 0.0;
}

// 11x11 Gaussian window, sigma 1.5, normalized to unit sum.
std::vector<double> ssim_window(int size, double sigma) {
  std::vector<double> win(static_cast<size_t>(size) * size);
  const int half = size / 2;
  double sum = 0.0;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double dr = r - half, dc = c - half;
      const double v = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      win[static_cast<size_t>(r) * size + c] = v;
      sum += v;
    }
  for (double& v : win) v /= sum;
  return win;
}

double ssim_single(const GrayImage& a, const GrayImage& b) {
  constexpr double kC1 = 0.01 * 0.01;  // (k1*L)^2, L = 1
  constexpr double kC2 = 0.03 * 0.03;
  const int h = a.height, w = a.width;
  int win_h = std::min(11, h), win_w = std::min(11, w);
  // Images narrower than the window fall back to one full-image window.
  const int size = std::min(win_h, win_w) == 11 ? 11 : std::min(win_h, win_w);
  std::vector<double> win;
  if (size == 11) {
    win = ssim_window(11, 1.5);
    win_h = win_w = 11;
  } else {
    win_h = h;
    win_w = w;
    win.assign(static_cast<size_t>(h) * w, 0.0);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    double sum = 0.0;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double v = std::exp(-((r - cy) * (r - cy) + (c - cx) * (c - cx)) /
                                  (2.0 * 1.5 * 1.5));
        win[static_cast<size_t>(r) * w + c] = v;
        sum += v;
      }
    for (double& v : win) v /= sum;
  }

  double total = 0.0;
  int count = 0;
  for (int r0 = 0; r0 + win_h <= h; ++r0) {
    for (int c0 = 0; c0 + win_w <= w; ++c0) {
      double mu_a = 0.0, mu_b = 0.0;
      for (int r = 0; r < win_h; ++r)
        for (int c = 0; c < win_w; ++c) {
          const double wv = win[static_cast<size_t>(r) * win_w + c];
          mu_a += wv * a.at(r0 + r, c0 + c);
          mu_b += wv * b.at(r0 + r, c0 + c);
        }
      double va = 0.0, vb = 0.0, vab = 0.0;
      for (int r = 0; r < win_h; ++r)
        for (int c = 0; c < win_w; ++c) {
          const double wv = win[static_cast<size_t>(r) * win_w + c];
          const double da = a.at(r0 + r, c0 + c) - mu_a;
          const double db = b.at(r0 + r, c0 + c) - mu_b;
          va += wv * da * da;
          vb += wv * db * db;
          vab += wv * da * db;
        }
      const double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * vab + kC2);
      const double den = (mu_a * mu_a + mu_b * mu_b + kC1) * (va + vb + kC2);
      total += num / den;
      ++count;
    }
  }
  return count > 0 ? total / count : 0.0;
}

}  // namespace

double metric_cc(const GrayImage& fused, const GrayImage& ir,
                 const GrayImage& vis) {
  check_triple(fused, ir, vis);
  return 0.5 * (pearson(fused.data, ir.data) + pearson(fused.data, vis.data));
}

double metric_en(const GrayImage& fused) {
  require(fused.numel() > 0, "metric_en: empty image");
  std::array<double, 256> hist{};
  for (double v : fused.data) {
    int b = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    hist[static_cast<size_t>(b)] += 1.0;
  }
  const double n = static_cast<double>(fused.numel());
  double h = 0.0;
  for (double c : hist) {
    if (c <= 0.0) continue;
    const double p = c / n;
    h -= p * std::log2(p);
  }
  return h;
}

double metric_qabf(const GrayImage& fused, const GrayImage& ir,
                   const GrayImage& vis) {
  check_triple(fused, ir, vis);
  GradientField gf = gradient_field(fused);
  GradientField ga = gradient_field(ir);
  GradientField gb = gradient_field(vis);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < gf.mag.size(); ++i) {
    const double wa = ga.mag[i], wb = gb.mag[i];
    if (wa > 0.0)
      num += edge_preservation(wa, ga.ang[i], gf.mag[i], gf.ang[i]) * wa;
    if (wb > 0.0)
      num += edge_preservation(wb, gb.ang[i], gf.mag[i], gf.ang[i]) * wb;
    den += wa + wb;
  }
  return den > 0.0 ? num / den : 0.0;
}

double metric_qcv(const GrayImage& fused, const GrayImage& ir,
                  const GrayImage& vis) {
  check_triple(fused, ir, vis);
  return 0.5 * (qcv_one_source(ir, fused) + qcv_one_source(vis, fused));
}

double metric_scd(const GrayImage& fused, const GrayImage& ir,
                  const GrayImage& vis) {
  check_triple(fused, ir, vis);
  std::vector<double> d_vis(fused.data.size()), d_ir(fused.data.size());
  for (size_t i = 0; i < fused.data.size(); ++i) {
    d_vis[i] = fused.data[i] - vis.data[i];
    d_ir[i] = fused.data[i] - ir.data[i];
  }
  return pearson(d_vis, ir.data) + pearson(d_ir, vis.data);
}

double metric_ssim(const GrayImage& fused, const GrayImage& ir,
                   const GrayImage& vis) {
  check_triple(fused, ir, vis);
  return ssim_single(fused, ir) + ssim_single(fused, vis);
}

std::map<std::string, double> evaluate_triple(const GrayImage& fused,
                                              const GrayImage& ir,
                                              const GrayImage& vis) {
  return {{"cc", metric_cc(fused, ir, vis)},
          {"en", metric_en(fused)},
          {"qabf", metric_qabf(fused, ir, vis)},
          {"qcv", metric_qcv(fused, ir, vis)},
          {"scd", metric_scd(fused, ir, vis)},
          {"ssim", metric_ssim(fused, ir, vis)}};
}

MetricsReport evaluate_corpus(const std::string& fused_dir,
                              const std::string& ir_dir,
                              const std::string& vis_dir, int jobs) {
  auto listing = [](const std::string& dir) {
    if (!fs::is_directory(dir))
      throw ValidationError("evaluate_corpus: not a directory: " + dir);
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file()) names.insert(e.path().filename().string());
    return names;
  };
  std::set<std::string> f_names = listing(fused_dir);
  std::set<std::string> i_names = listing(ir_dir);
  std::set<std::string> v_names = listing(vis_dir);

  MetricsReport report;
  std::vector<std::string> matched;
  std::set<std::string> all;
  all.insert(f_names.begin(), f_names.end());
  all.insert(i_names.begin(), i_names.end());
  all.insert(v_names.begin(), v_names.end());
  for (const auto& n : all) {
    if (f_names.count(n) && i_names.count(n) && v_names.count(n))
      matched.push_back(n);
    else
      report.unmatched.push_back(n);
  }

  report.rows.resize(matched.size());
  auto work = [&](size_t begin, size_t end) {
    for (size_t k = begin; k < end; ++k) {
      const std::string& n = matched[k];
      GrayImage f = load_gray((fs::path(fused_dir) / n).string());
      GrayImage i = load_gray((fs::path(ir_dir) / n).string());
      GrayImage v = load_gray((fs::path(vis_dir) / n).string());
      report.rows[k] = MetricsRow{n, evaluate_triple(f, i, v)};
    }
  };
  jobs = std::max(1, jobs);
  if (jobs == 1 || matched.size() <= 1) {
    work(0, matched.size());
  } else {
    std::vector<std::thread> pool;
    const size_t chunk = (matched.size() + jobs - 1) / jobs;
    for (int t = 0; t < jobs; ++t) {
      const size_t b = std::min(static_cast<size_t>(t) * chunk, matched.size());
      const size_t e = std::min(b + chunk, matched.size());
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }

  for (const auto& name : metric_names()) {
    double mean = 0.0;
    for (const auto& row : report.rows) mean += row.values.at(name);
    if (!report.rows.empty()) mean /= static_cast<double>(report.rows.size());
    double var = 0.0;
    for (const auto& row : report.rows) {
      const double d = row.values.at(name) - mean;
      var += d * d;
    }
    if (!report.rows.empty()) var /= static_cast<double>(report.rows.size());
    report.mean[name] = mean;
    report.stddev[name] = std::sqrt(var);
  }
  return report;
}

namespace {
std::string format_row(const std::string& label,
                       const std::map<std::string, double>& values) {
  std::string line = label;
  char buf[64];
  for (const auto& name : metric_names()) {
    std::snprintf(buf, sizeof(buf), ",%.6f", values.at(name));
    line += buf;
  }
  return line + "\n";
}
}  // namespace

std::string report_to_csv(const MetricsReport& report) {
  std::string out = "file";
  for (const auto& name : metric_names()) out += "," + name;
  out += "\n";
  for (const auto& row : report.rows) out += format_row(row.file, row.values);
  out += format_row("mean", report.mean);
  out += format_row("std", report.stddev);
  return out;
}

std::string report_to_table(const MetricsReport& report) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-28s %10s %10s %10s %12s %10s %10s\n",
                "file", "cc", "en", "qabf", "qcv", "scd", "ssim");
  out += buf;
  auto line = [&](const std::string& label,
                  const std::map<std::string, double>& v) {
    std::snprintf(buf, sizeof(buf),
                  "%-28s %10.4f %10.4f %10.4f %12.4f %10.4f %10.4f\n",
                  label.c_str(), v.at("cc"), v.at("en"), v.at("qabf"),
                  v.at("qcv"), v.at("scd"), v.at("ssim"));
    out += buf;
  };
  for (const auto& row : report.rows) line(row.file, row.values);
  line("mean", report.mean);
  line("std", report.stddev);
  return out;
}

}  // namespace ivfuse
