#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "abanet/param_store.hpp"
#include "abanet/tensor.hpp"

namespace abanet {

class Tape;

// Handle to a value recorded on a tape. Cheap to copy; valid while the tape
// that produced it is alive. References returned by value() survive later
// recording on the same tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// What a backward rule sees: the output gradient and, per input, its forward
// value and a gradient accumulator (nullptr when that input needs no grad).
class BackwardContext {
 public:
  BackwardContext(const Tensor& grad_out, const Tensor& output, std::vector<const Tensor*> inputs,
                  std::vector<Tensor*> grads)
      : grad_out_(grad_out), output_(output), inputs_(std::move(inputs)), grads_(std::move(grads)) {}

  const Tensor& grad_out() const { return grad_out_; }
  const Tensor& output() const { return output_; }
  const Tensor& input(std::size_t k) const { return *inputs_[k]; }
  Tensor* grad(std::size_t k) const { return grads_[k]; }

 private:
  const Tensor& grad_out_;
  const Tensor& output_;
  std::vector<const Tensor*> inputs_;
  std::vector<Tensor*> grads_;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

// Define-by-run record of a forward computation. Nodes are appended in
// creation order, so the node list is already topologically sorted.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  // Leaf for a stored parameter. One leaf per canonical name per tape, so
  // tied names share a gradient. Non-trainable parameters become constants.
  Var parameter(const ParamStore& store, const std::string& name);

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op_name);

  // Reverse sweep from a scalar. Node gradients stay readable via grad().
  void backward(Var loss);

  const Tensor* grad(Var v) const;
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& input_ids(std::size_t id) const { return nodes_[id].inputs; }

  // Adds every parameter leaf's gradient into the store's gradient slots.
  void accumulate_param_grads(ParamStore& store) const;

  // Index of the first node holding a non-finite value.
  std::optional<std::size_t> first_non_finite() const;

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::string op;
    bool requires_grad = false;
    Tensor grad;
  };

  std::deque<Node> nodes_;
  std::unordered_map<std::string, std::size_t> param_leaves_;
};

// Runs the reverse sweep and deposits dLoss/dParam in the store.
void backward(Tape& tape, Var loss, ParamStore& params);

using Rng = std::mt19937_64;

// Forward-pass mode. Training enables dropout and stochastic depth and needs
// a generator; evaluation is a pure function of inputs and parameters.
struct Context {
  bool training = false;
  Rng* rng = nullptr;

  static Context eval() { return {}; }
  static Context train(Rng& rng) { return {true, &rng}; }
};

namespace debug {
// Test hook: scales every input gradient produced by backward rules of the
// named op by `factor`. An empty name disables injection.
void inject_backward_fault(const std::string& op_name, double factor = 1.5);
const std::string& injected_fault();
}  // namespace debug

}  // namespace abanet
