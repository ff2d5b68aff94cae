#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "odm/mismatch.hpp"
#include "odm/model.hpp"

namespace odm {

/// A stored tensor of the model and its element count.
struct TensorSpec {
  std::string name;
  std::size_t count = 0;
};

/// Every stored tensor of the network `config` describes, including the
/// offset vectors named by `plan`. Names match SRModel::parameters().
std::vector<TensorSpec> model_tensors(const SRModelConfig& config, const OffsetPlan& plan = {});

/// Precision of every stored tensor and of every quantized conv input
/// ("body.<i>.input").
class BitAssignment {
 public:
  void set(const std::string& name, int bits);
  /// Throws AccountingError if `name` is not assigned.
  int at(const std::string& name) const;
  bool contains(const std::string& name) const { return bits_.contains(name); }

  /// Slot weights and inputs at config.weight_bits / config.act_bits,
  /// offsets at 4 bits, everything else at 32 bits.
  static BitAssignment for_model(const SRModelConfig& config, const OffsetPlan& plan = {});

 private:
  std::map<std::string, int> bits_;
};

struct LayerCost {
  std::string layer;
  std::size_t params = 0;
  double storage_bits = 0.0;
  double macs = 0.0;
  double bitops = 0.0;
};

struct ComplexityReport {
  std::vector<LayerCost> layers;

  double params_k() const;
  /// Parameters weighted by bits / 32, in thousands.
  double storage_k() const;
  double macs() const;
  /// Bit operations in units of 1e12.
  double bitops_t() const;

  /// "layer,params_k,storage_k,macs,bitops_t" plus one row per layer and a
  /// total row.
  std::string csv() const;
  /// Same columns as an aligned text table.
  std::string table() const;
};

/// Per-layer storage and BitOPs for producing one out_w x out_h image.
/// Each MAC counts as two operations weighted by b_weight * b_act; residual
/// adds are weighted by b_act^2 and offset ops by 4 * 32.
ComplexityReport complexity_report(const SRModelConfig& config, const BitAssignment& bits, const OffsetPlan& plan,
                                   int out_w, int out_h);

double storage_size(const SRModelConfig& config, const BitAssignment& bits, const OffsetPlan& plan = {});
double bitops(const SRModelConfig& config, const BitAssignment& bits, const OffsetPlan& plan, int out_w, int out_h);

/// A plan with the offset-set sizes of select_offset_layers; the layers
/// themselves do not matter for accounting.
OffsetPlan accounting_offset_plan(int slot_count, double p, TopPRule rule = TopPRule::SharedBudget);

}  // namespace odm
