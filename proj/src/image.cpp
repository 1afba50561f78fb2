#include "ivfuse/image.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "ivfuse/errors.hpp"
#include "ivfuse/rng.hpp"

namespace fs = std::filesystem;

namespace ivfuse {

namespace {
constexpr double kGrid = 1048576.0;  // 2^20
constexpr int kMinNetSize = 8;
}  // namespace

double quantize_unit(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return std::round(x * kGrid) / kGrid;
}

LoadedImage load_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw IoError("cannot read image: " + path);
  if (m.rows <= 0 || m.cols <= 0)
    throw ValidationError("zero-sized image: " + path);

  int depth = m.depth();
  if (depth != CV_8U && depth != CV_16U)
    throw ValidationError("unsupported bit depth in " + path +
                          " (8/16-bit rasters expected)");
  const double scale = depth == CV_8U ? 255.0 : 65535.0;
  const int ch = m.channels();
  if (ch != 1 && ch != 3 && ch != 4)
    throw ValidationError("unsupported channel count in " + path);

  LoadedImage out;
  out.channels = ch;
  out.bit_depth = depth == CV_8U ? 8 : 16;
  out.gray = GrayImage(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) {
      double v;
      if (ch == 1) {
        v = depth == CV_8U ? m.at<uint8_t>(r, c) : m.at<uint16_t>(r, c);
      } else {
        // OpenCV stores BGR(A)
        double b, g, rr;
        if (depth == CV_8U) {
          const uint8_t* px = m.ptr<uint8_t>(r) + static_cast<size_t>(c) * ch;
          b = px[0], g = px[1], rr = px[2];
        } else {
          const uint16_t* px =
              m.ptr<uint16_t>(r) + static_cast<size_t>(c) * ch;
          b = px[0], g = px[1], rr = px[2];
        }
        v = 0.299 * rr + 0.587 * g + 0.114 * b;
      }
      out.gray.at(r, c) = quantize_unit(v / scale);
    }
  }
  return out;
}

GrayImage load_gray(const std::string& path) { return load_image(path).gray; }

void save_png(const GrayImage& img, const std::string& path) {
  require(img.height > 0 && img.width > 0, "save_png: empty image");
  cv::Mat m(img.height, img.width, CV_8UC1);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      double v = std::clamp(img.at(r, c), 0.0, 1.0);
      m.at<uint8_t>(r, c) = static_cast<uint8_t>(std::lround(v * 255.0));
    }
  if (!cv::imwrite(path, m)) throw IoError("cannot write image: " + path);
}

GrayImage invert(const GrayImage& img) {
  GrayImage out(img.height, img.width);
  for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = 1.0 - img.data[i];
  return out;
}

DualInput make_dual_input(const GrayImage& img) {
  require(img.height >= kMinNetSize && img.width >= kMinNetSize,
          "make_dual_input: images entering the network must be at least 8x8");
  DualInput d;
  d.height = img.height;
  d.width = img.width;
  d.data = Tensor({2, img.height, img.width});
  const size_t plane = img.data.size();
  for (size_t i = 0; i < plane; ++i) {
    d.data.data[i] = img.data[i];
    d.data.data[plane + i] = 1.0 - img.data[i];
  }
  return d;
}

GrayImage crop(const GrayImage& img, int row, int col, int h, int w) {
  require(row >= 0 && col >= 0 && row + h <= img.height && col + w <= img.width,
          "crop: window out of bounds");
  GrayImage out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out.at(r, c) = img.at(row + r, col + c);
  return out;
}

std::vector<PatchPair> crop_patches(const GrayImage& ir, const GrayImage& vis,
                                    int patch, int count, uint64_t seed,
                                    const std::string& source_id) {
  require(ir.height == vis.height && ir.width == vis.width,
          "crop_patches: source pair must share dimensions");
  require(patch >= kMinNetSize, "crop_patches: patch must be at least 8");
  require(ir.height >= patch && ir.width >= patch,
          "crop_patches: image smaller than patch");
  require(count >= 1, "crop_patches: count must be >= 1");

  Rng rng(seed);
  std::vector<PatchPair> out;
  out.reserve(static_cast<size_t>(count));
  const int max_r = ir.height - patch;
  const int max_c = ir.width - patch;
  for (int i = 0; i < count; ++i) {
    PatchPair pp;
    pp.row = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(max_r) + 1));
    pp.col = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(max_c) + 1));
    pp.ir_raw = crop(ir, pp.row, pp.col, patch, patch);
    pp.vis_raw = crop(vis, pp.row, pp.col, patch, patch);
    pp.ir_patch = make_dual_input(pp.ir_raw);
    pp.vis_patch = make_dual_input(pp.vis_raw);
    pp.source_id = source_id;
    out.push_back(std::move(pp));
  }
  return out;
}

std::vector<DatasetPair> load_dataset(const std::string& ir_dir,
                                      const std::string& vis_dir) {
  if (!fs::is_directory(ir_dir))
    throw ValidationError("dataset: not a directory: " + ir_dir);
  if (!fs::is_directory(vis_dir))
    throw ValidationError("dataset: not a directory: " + vis_dir);

  std::set<std::string> ir_names, vis_names;
  for (const auto& e : fs::directory_iterator(ir_dir))
    if (e.is_regular_file()) ir_names.insert(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(vis_dir))
    if (e.is_regular_file()) vis_names.insert(e.path().filename().string());

  std::string unmatched;
  for (const auto& n : ir_names)
    if (!vis_names.count(n)) unmatched += " ir/" + n;
  for (const auto& n : vis_names)
    if (!ir_names.count(n)) unmatched += " vis/" + n;
  if (!unmatched.empty())
    throw ValidationError("dataset: unmatched files:" + unmatched);
  require(!ir_names.empty(), "dataset: no image pairs found");

  std::vector<DatasetPair> out;
  for (const auto& n : ir_names) {  // std::set: sorted, deterministic order
    DatasetPair p;
    p.name = n;
    p.ir = load_gray((fs::path(ir_dir) / n).string());
    p.vis = load_gray((fs::path(vis_dir) / n).string());
    require(p.ir.height == p.vis.height && p.ir.width == p.vis.width,
            "dataset: dimension mismatch for pair " + n);
    out.push_back(std::move(p));
  }
  return out;
}

Tensor to_tensor(const GrayImage& img) {
  Tensor t({1, img.height, img.width});
  t.data = img.data;
  return t;
}

GrayImage gray_from_tensor(const Tensor& t) {
  require(t.rank() == 2 || (t.rank() == 3 && t.shape[0] == 1),
          "gray_from_tensor: single-channel tensor expected");
  const int h = t.rank() == 2 ? t.shape[0] : t.shape[1];
  const int w = t.rank() == 2 ? t.shape[1] : t.shape[2];
  GrayImage img(h, w);
  img.data = t.data;
  return img;
}

}  // namespace ivfuse
