#include "ivfuse/params.hpp"

#include "ivfuse/errors.hpp"

namespace ivfuse {

nn::Value ParamTree::create(const std::string& key, Tensor init) {
  require(entries_.find(key) == entries_.end(),
          "ParamTree: duplicate key " + key);
  nn::Value v = nn::Value::leaf(std::move(init), /*requires_grad=*/true);
  entries_[key] = v.node();
  return v;
}

nn::Value ParamTree::param(const std::string& key) const {
  auto it = entries_.find(key);
  require(it != entries_.end(), "ParamTree: unknown key " + key);
  return nn::Value(it->second);
}

const Tensor& ParamTree::value(const std::string& key) const {
  auto it = entries_.find(key);
  require(it != entries_.end(), "ParamTree: unknown key " + key);
  return it->second->value;
}

Tensor& ParamTree::mutable_value(const std::string& key) {
  auto it = entries_.find(key);
  require(it != entries_.end(), "ParamTree: unknown key " + key);
  return it->second->value;
}

const Tensor& ParamTree::grad(const std::string& key) const {
  auto it = entries_.find(key);
  require(it != entries_.end(), "ParamTree: unknown key " + key);
  return it->second->ensure_grad();
}

bool ParamTree::in_subtree(const std::string& key, const std::string& prefix) {
  if (prefix.empty()) return true;
  if (key.size() < prefix.size() || key.compare(0, prefix.size(), prefix) != 0)
    return false;
  return key.size() == prefix.size() || key[prefix.size()] == '.' ||
         prefix.back() == '.';
}

void ParamTree::set_frozen(const std::string& prefix, bool frozen) {
  bool any = false;
  for (auto& [key, node] : entries_) {
    if (in_subtree(key, prefix)) {
      node->requires_grad = !frozen;
      any = true;
    }
  }
  require(any, "ParamTree: no keys under prefix " + prefix);
}

bool ParamTree::is_frozen(const std::string& key) const {
  auto it = entries_.find(key);
  require(it != entries_.end(), "ParamTree: unknown key " + key);
  return !it->second->requires_grad;
}

void ParamTree::zero_grad() {
  for (auto& [key, node] : entries_)
    if (!node->grad.data.empty()) node->grad.zero();
}

std::vector<std::string> ParamTree::keys() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [key, node] : entries_) out.push_back(key);
  return out;
}

std::vector<std::string> ParamTree::keys_with_prefix(
    const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [key, node] : entries_)
    if (in_subtree(key, prefix)) out.push_back(key);
  return out;
}

}  // namespace ivfuse
