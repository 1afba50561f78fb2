#pragma once

#include <map>
#include <string>
#include <vector>

#include "ivfuse/autodiff.hpp"

namespace ivfuse {

// Named store of every learnable tensor. Keys are hierarchical dotted paths
// ("mit.enc_ir.rdb.layer0.w"); a dotted prefix addresses a subtree for
// freezing and optimizer dispatch. The tree owns the autodiff leaf nodes,
// so gradients land here and persist across forward graphs.
class ParamTree {
 public:
  nn::Value create(const std::string& key, Tensor init);
  nn::Value param(const std::string& key) const;
  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  const Tensor& value(const std::string& key) const;
  Tensor& mutable_value(const std::string& key);
  const Tensor& grad(const std::string& key) const;

  // frozen == !requires_grad: frozen subtrees neither accumulate gradients
  // nor get optimizer updates, but activations still flow through them.
  void set_frozen(const std::string& prefix, bool frozen);
  bool is_frozen(const std::string& key) const;

  void zero_grad();

  std::vector<std::string> keys() const;
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  size_t size() const { return entries_.size(); }

 private:
  static bool in_subtree(const std::string& key, const std::string& prefix);
  std::map<std::string, nn::NodePtr> entries_;  // ordered: deterministic walks
};

}  // namespace ivfuse
