#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vaest/tensor.hpp"

namespace vaest {

enum class ParamGroup { backbone, head };

struct AdamWConfig {
  double head_lr = 1e-4;
  double backbone_lr = 3e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;

  void validate() const;
};

// Adam with decoupled weight decay over named parameter tensors. Each
// parameter carries a group tag selecting its learning rate; the backbone
// group is live plumbing even though the shipped models register every tensor
// under the head group (features arrive precomputed).
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {});

  void add_param(std::string name, TensorPtr param, ParamGroup group = ParamGroup::head);

  // One update over every parameter holding a gradient. A non-finite gradient
  // anywhere skips the whole step (logged, counted); parameters without a
  // gradient buffer are untouched. Returns true when the update was applied.
  bool step();
  void zero_grad();

  std::uint64_t steps_applied() const { return t_; }
  std::uint64_t steps_skipped() const { return skipped_; }
  const AdamWConfig& config() const { return config_; }

 private:
  struct Slot {
    std::string name;
    TensorPtr param;
    ParamGroup group;
    std::vector<double> m, v;
  };

  AdamWConfig config_;
  std::vector<Slot> slots_;
  std::uint64_t t_ = 0;
  std::uint64_t skipped_ = 0;
};

}  // namespace vaest
