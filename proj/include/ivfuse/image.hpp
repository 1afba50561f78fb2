#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ivfuse/tensor.hpp"

namespace ivfuse {

// Single-channel intensity raster in [0,1], row-major. Loaded pixels are
// snapped to a dyadic 2^-20 grid so that inversion (1 - x) is exact in
// double arithmetic while staying lossless through 8/16-bit quantization.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  GrayImage() = default;
  GrayImage(int h, int w) : height(h), width(w), data(size_t(h) * w, 0.0) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
  double at(int r, int c) const {
    return data[static_cast<size_t>(r) * width + c];
  }
  int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

// Two-channel stack [original, inverted]; the network's input currency.
struct DualInput {
  int height = 0;
  int width = 0;
  Tensor data;  // {2,H,W}, channel 1 == 1 - channel 0
};

struct PatchPair {
  DualInput ir_patch;
  DualInput vis_patch;
  GrayImage ir_raw;
  GrayImage vis_raw;
  std::string source_id;
  int row = 0;
  int col = 0;
};

struct LoadedImage {
  GrayImage gray;
  int channels = 0;
  int bit_depth = 0;
};

double quantize_unit(double x);  // clamp to [0,1], snap to the 2^-20 grid

// Decodes PNG/JPEG/BMP; multi-channel input is reduced with BT.601
// luminance (0.299 R + 0.587 G + 0.114 B), 8/16-bit scaled to [0,1].
LoadedImage load_image(const std::string& path);
GrayImage load_gray(const std::string& path);

void save_png(const GrayImage& img, const std::string& path);  // 8-bit

GrayImage invert(const GrayImage& img);
DualInput make_dual_input(const GrayImage& img);

// `count` aligned random crops with offsets drawn uniformly (with
// replacement) from the valid positions, deterministic in `seed`.
std::vector<PatchPair> crop_patches(const GrayImage& ir, const GrayImage& vis,
                                    int patch, int count, uint64_t seed,
                                    const std::string& source_id = "");

struct DatasetPair {
  std::string name;
  GrayImage ir;
  GrayImage vis;
};

// Loads a registered dataset laid out as <ir_dir>/<name> + <vis_dir>/<name>.
// Any name present on one side only is an error.
std::vector<DatasetPair> load_dataset(const std::string& ir_dir,
                                      const std::string& vis_dir);

Tensor to_tensor(const GrayImage& img);          // {1,H,W}
GrayImage gray_from_tensor(const Tensor& t);     // {H,W} or {1,H,W}
GrayImage crop(const GrayImage& img, int row, int col, int h, int w);

}  // namespace ivfuse
