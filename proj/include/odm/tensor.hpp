#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace odm {

/// Extents of a dense (batch, channel, height, width) array.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Row-major NCHW float32 array. Gradients live on the tape, not here.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float v) { return Tensor({1, 1, 1, 1}, v); }
  /// (1, C, 1, 1) tensor holding a per-channel vector.
  static Tensor channel_vector(std::span<const float> v);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  float& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  float at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  /// Scalar value of a one-element tensor.
  float item() const;

  void fill(float v);
  bool all_finite() const;
  /// Throws ContractViolation naming `where` if any element is NaN/Inf.
  void check_finite(std::string_view where) const;

  /// Samples [begin, end) along the batch axis.
  Tensor slice_batch(int begin, int end) const;
  static Tensor concat_batch(std::span<const Tensor> parts);

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  Shape shape_;
  std::vector<float> data_;
};

enum class GradSlot : int { Reconstruction = 0, Variance = 1 };

/// Trainable values with separate gradient buffers for the reconstruction
/// and variance losses.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Shape shape, float fill = 0.0f);

  const std::string& name() const { return name_; }
  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }
  std::span<float> grad(GradSlot slot) { return grads_[static_cast<int>(slot)]; }
  std::span<const float> grad(GradSlot slot) const { return grads_[static_cast<int>(slot)]; }

  /// True once a backward pass (or an explicit fill) has written the slot
  /// since the last zero_grad().
  bool populated(GradSlot slot) const { return populated_[static_cast<int>(slot)]; }
  void mark_populated(GradSlot slot) { populated_[static_cast<int>(slot)] = true; }
  void fill_grad(GradSlot slot, float v);
  void zero_grad();

  Tensor as_tensor() const { return Tensor(shape_, values_); }
  void assign(std::span<const float> v);

 private:
  std::string name_;
  Shape shape_;
  std::vector<float> values_;
  std::vector<float> grads_[2];
  bool populated_[2] = {false, false};
};

double mean_of(std::span<const float> v);
/// Population standard deviation (divide by N).
double population_std(std::span<const float> v);

}  // namespace odm
