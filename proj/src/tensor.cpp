#include "ivfuse/tensor.hpp"

#include <cmath>
#include <sstream>

#include "ivfuse/errors.hpp"

namespace ivfuse {

int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ValidationError("negative tensor dimension");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
}

Tensor Tensor::scalar(double v) {
  Tensor t{std::vector<int>{}};
  t.data[0] = v;
  return t;
}

Tensor Tensor::full(std::vector<int> s, double v) {
  Tensor t(std::move(s));
  t.fill(v);
  return t;
}

void Tensor::fill(double v) {
  for (double& x : data) x = v;
}

bool Tensor::all_finite() const {
  for (double x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b))
    throw ValidationError(std::string(who) + ": shape mismatch " +
                          shape_str(a.shape) + " vs " + shape_str(b.shape));
}

}  // namespace ivfuse
