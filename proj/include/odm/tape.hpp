#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "odm/tensor.hpp"

namespace odm {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  int id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Gradient accumulators for the inputs of one recorded op. Entry i is null
/// when input i does not need a gradient.
using InputGrads = std::span<Tensor* const>;
using BackwardFn = std::function<void(const Tensor& grad_out, InputGrads grad_in)>;

struct LossRoot {
  Var loss;
  GradSlot slot;
};

/// Records primitive ops in execution order and replays them in reverse.
///
/// A tape is consumed by a single call to backward(). That call may carry
/// several loss roots; each root is swept independently and its parameter
/// gradients land in the root's GradSlot, so two losses over one forward
/// produce separate gradient buffers.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var constant(Tensor value);
  /// Differentiable leaf not tied to a Parameter; read back with grad().
  Var leaf(Tensor value);
  /// Leaf bound to a Parameter. Repeated calls return the same node.
  Var parameter(Parameter& p);

  /// Appends an op. `backward` may be empty when no input needs a gradient.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  void backward(Var loss, GradSlot slot = GradSlot::Reconstruction);
  void backward(std::span<const LossRoot> roots);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }
  /// Gradient of the most recently swept root w.r.t. `v` (zeros if unreached).
  Tensor grad(Var v) const;

 private:
  struct Node {
    Tensor value;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };

  void sweep(const LossRoot& root);
  void check_owned(const Var& v) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::unordered_map<Parameter*, int> param_nodes_;
  bool consumed_ = false;
};

// Differentiable primitives. Every op records onto the tape of its first
// Var argument; all Var arguments must share that tape.

/// Cross-correlation with zero padding. `bias` may be an invalid Var.
Var conv2d(const Var& input, const Var& weight, const Var& bias, int stride, int padding);
Var relu(const Var& x);
Var add(const Var& x, const Var& y);
Var sub(const Var& x, const Var& y);
Var mul_scalar(const Var& x, float c);
/// Adds v[c] to every element of channel c. `v` has shape (1, C, 1, 1).
Var broadcast_add_channel(const Var& x, const Var& v);
Var broadcast_mul_channel(const Var& x, const Var& v);

/// Scalar mean over all elements.
Var mean(const Var& x);
/// Scalar population standard deviation over all elements. The backward pass
/// at zero variance yields a zero gradient.
Var std_dev(const Var& x);
/// (1, C, 1, 1) statistics over the batch and spatial axes.
Var channel_mean(const Var& x);
Var channel_std(const Var& x);

/// (B, C, H, W) -> (B, C/r^2, H*r, W*r).
Var pixel_shuffle(const Var& x, int r);
Var pixel_unshuffle(const Var& x, int r);

/// Mean absolute difference.
Var l1_loss(const Var& a, const Var& b);
/// Mean squared difference.
Var mse_loss(const Var& a, const Var& b);
/// Divides each sample by max(||sample||_2, eps).
Var normalize_per_sample(const Var& x, float eps = 1e-8f);
/// Sum of scalar Vars.
Var sum_scalars(std::span<const Var> xs);

/// Training-mode batch normalization over (B, H, W) per channel.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, float eps = 1e-5f);

// Forward-only tensor kernels shared by the ops and by tests.
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias, int stride, int padding);
Tensor pixel_shuffle_forward(const Tensor& x, int r);
Tensor pixel_unshuffle_forward(const Tensor& x, int r);
std::vector<double> channel_means(const Tensor& x);
std::vector<double> channel_stds(const Tensor& x);

}  // namespace odm
