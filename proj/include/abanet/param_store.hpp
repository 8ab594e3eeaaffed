#pragma once

#include <map>
#include <string>
#include <vector>

#include "abanet/tensor.hpp"

namespace abanet {

// Named trainable tensors with gradient slots. Aliases let several names
// resolve to one slot, which is how weight tying is expressed: every use site
// that fetches an aliased name reads and accumulates into the same storage.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
    bool trainable = true;
  };

  void add(const std::string& name, Tensor init, bool trainable = true);
  void alias(const std::string& alias_name, const std::string& canonical);

  bool contains(const std::string& name) const;
  const std::string& resolve(const std::string& name) const;

  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;
  Tensor& value(const std::string& name) { return entry(name).value; }
  const Tensor& value(const std::string& name) const { return entry(name).value; }
  Tensor& grad(const std::string& name) { return entry(name).grad; }
  bool trainable(const std::string& name) const { return entry(name).trainable; }
  void set_trainable(const std::string& name, bool trainable) { entry(name).trainable = trainable; }

  // Canonical names in lexicographic order.
  std::vector<std::string> names() const;
  const std::map<std::string, std::string>& aliases() const { return aliases_; }

  void zero_grad();
  std::size_t num_trainable_scalars() const;

 private:
  std::map<std::string, Entry> entries_;
  std::map<std::string, std::string> aliases_;
};

}  // namespace abanet
