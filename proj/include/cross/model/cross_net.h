#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "cross/model/gfe.h"
#include "cross/model/moe.h"
#include "cross/model/pcc.h"

namespace cross::model {

enum class Role { Actor, Critic };

// One full GFE -> PCC -> MoE -> head stack with its own parameters. The actor
// and the critic are two independent instances.
class CrossNet {
 public:
  CrossNet(const ModelConfig& cfg, Role role, std::uint64_t seed);

  struct Forward {
    Gfe::Out gfe;
    std::optional<Pcc::Out> pcc;
    Moe::Out moe;
    ad::Tensor log_probs;  // actor: [B x 8], masked phases are 0 and excluded
    ad::Tensor value;      // critic: [B]
  };
  Forward forward(const Batch& b) const;

  const ModelConfig& config() const { return cfg_; }
  Role role() const { return role_; }
  ad::ParamStore& params() { return store_; }
  const ad::ParamStore& params() const { return store_; }

 private:
  ModelConfig cfg_;
  Role role_;
  ad::ParamStore store_;
  Gfe gfe_;
  std::optional<Pcc> pcc_;
  Moe moe_;
  Dense head_;
};

const char* role_name(Role r);

}  // namespace cross::model
