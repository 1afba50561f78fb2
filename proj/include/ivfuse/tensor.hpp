#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ivfuse {

// Dense row-major tensor of doubles. Rank 0 (empty shape) is a scalar.
// Feature maps are {C,H,W}, conv kernels {Cout,Cin,K,K}, images {1,H,W}.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  double& at3(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  double at3(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;

  void fill(double v);
  void zero() { fill(0.0); }
};

int64_t numel_of(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Throws ValidationError naming `who` when shapes differ.
void check_same_shape(const Tensor& a, const Tensor& b, const char* who);

}  // namespace ivfuse
