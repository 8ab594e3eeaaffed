#include "abanet/param_store.hpp"

#include "abanet/errors.hpp"

namespace abanet {

void ParamStore::add(const std::string& name, Tensor init, bool trainable) {
  if (entries_.count(name) || aliases_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  Entry e;
  e.grad = Tensor(init.shape());
  e.value = std::move(init);
  e.trainable = trainable;
  entries_.emplace(name, std::move(e));
}

void ParamStore::alias(const std::string& alias_name, const std::string& canonical) {
  if (entries_.count(alias_name) || aliases_.count(alias_name)) {
    throw ConfigError("alias name already in use: " + alias_name);
  }
  aliases_.emplace(alias_name, resolve(canonical));
}

bool ParamStore::contains(const std::string& name) const {
  return entries_.count(name) > 0 || aliases_.count(name) > 0;
}

const std::string& ParamStore::resolve(const std::string& name) const {
  if (auto it = aliases_.find(name); it != aliases_.end()) return it->second;
  if (auto it = entries_.find(name); it != entries_.end()) return it->first;
  throw ConfigError("unknown parameter: " + name);
}

ParamStore::Entry& ParamStore::entry(const std::string& name) { return entries_.at(resolve(name)); }

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  return entries_.at(resolve(name));
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) {
    for (double& g : e.grad.data()) g = 0.0;
  }
}

std::size_t ParamStore::num_trainable_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) {
    if (e.trainable) n += e.value.size();
  }
  return n;
}

}  // namespace abanet
