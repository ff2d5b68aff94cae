#include "odm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "odm/error.hpp"

namespace odm {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw DimensionError("negative extent in shape " + shape.str());
  }
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_.str());
  }
}

Tensor Tensor::channel_vector(std::span<const float> v) {
  return Tensor({1, static_cast<int>(v.size()), 1, 1}, std::vector<float>(v.begin(), v.end()));
}

float Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_.str());
  return data_[0];
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void Tensor::check_finite(std::string_view where) const {
  if (!all_finite()) throw ContractViolation("non-finite value in " + std::string(where));
}

Tensor Tensor::slice_batch(int begin, int end) const {
  if (begin < 0 || end > shape_.n || begin > end) throw DimensionError("batch slice out of range");
  const std::size_t per = static_cast<std::size_t>(shape_.c) * shape_.plane();
  Shape s = shape_;
  s.n = end - begin;
  return Tensor(s, std::vector<float>(data_.begin() + static_cast<std::ptrdiff_t>(begin * per),
                                      data_.begin() + static_cast<std::ptrdiff_t>(end * per)));
}

Tensor Tensor::concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  Shape s = parts.front().shape();
  s.n = 0;
  std::vector<float> data;
  for (const auto& p : parts) {
    if (p.shape().c != s.c || p.shape().h != s.h || p.shape().w != s.w) {
      throw DimensionError("concat of " + p.shape().str() + " onto " + parts.front().shape().str());
    }
    s.n += p.shape().n;
    data.insert(data.end(), p.storage().begin(), p.storage().end());
  }
  return Tensor(s, std::move(data));
}

Parameter::Parameter(std::string name, Shape shape, float fill)
    : name_(std::move(name)), shape_(shape), values_(shape.numel(), fill) {
  grads_[0].assign(values_.size(), 0.0f);
  grads_[1].assign(values_.size(), 0.0f);
}

void Parameter::fill_grad(GradSlot slot, float v) {
  auto& g = grads_[static_cast<int>(slot)];
  std::fill(g.begin(), g.end(), v);
  mark_populated(slot);
}

void Parameter::zero_grad() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0f);
  populated_[0] = populated_[1] = false;
}

void Parameter::assign(std::span<const float> v) {
  if (v.size() != values_.size()) {
    throw DimensionError("assigning " + std::to_string(v.size()) + " values to parameter '" + name_ + "' of shape " +
                         shape_.str());
  }
  std::copy(v.begin(), v.end(), values_.begin());
}

double mean_of(std::span<const float> v) {
  if (v.empty()) throw DimensionError("mean of empty tensor");
  double s = 0.0;
  for (float x : v) s += x;
  return s / static_cast<double>(v.size());
}

double population_std(std::span<const float> v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (float x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace odm
