#include "abanet/tape.hpp"

#include "abanet/errors.hpp"

namespace abanet {

namespace {

std::string g_fault_op;
double g_fault_factor = 1.0;

}  // namespace

namespace debug {

void inject_backward_fault(const std::string& op_name, double factor) {
  g_fault_op = op_name;
  g_fault_factor = factor;
}

const std::string& injected_fault() { return g_fault_op; }

}  // namespace debug

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, "constant", false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, "variable", true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const ParamStore& store, const std::string& name) {
  const std::string& canonical = store.resolve(name);
  if (auto it = param_leaves_.find(canonical); it != param_leaves_.end()) return Var(this, it->second);
  const auto& e = store.entry(canonical);
  nodes_.push_back(Node{e.value, {}, {}, (e.trainable ? "parameter " : "constant ") + canonical, e.trainable, {}});
  const std::size_t id = nodes_.size() - 1;
  param_leaves_.emplace(canonical, id);
  return Var(this, id);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op_name) {
  Node node;
  node.value = std::move(value);
  node.op = op_name;
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.tape_ != this) throw Error(std::string(op_name) + ": input recorded on a different tape");
    node.inputs.push_back(v.id_);
    node.requires_grad = node.requires_grad || nodes_[v.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw Error("backward: loss recorded on a different tape");
  const Tensor& lv = nodes_[loss.id_].value;
  if (lv.size() != 1) throw DimensionError("backward: loss must be scalar, got shape " + shape_str(lv.shape()));
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id_].requires_grad) return;
  nodes_[loss.id_].grad = Tensor(lv.shape(), 1.0);

  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
    std::vector<const Tensor*> inputs;
    std::vector<Tensor*> grads;
    inputs.reserve(node.inputs.size());
    grads.reserve(node.inputs.size());
    for (std::size_t in : node.inputs) {
      Node& src = nodes_[in];
      inputs.push_back(&src.value);
      if (src.requires_grad) {
        if (src.grad.empty()) src.grad = Tensor(src.value.shape());
        grads.push_back(&src.grad);
      } else {
        grads.push_back(nullptr);
      }
    }
    const bool faulty = !g_fault_op.empty() && node.op == g_fault_op;
    std::vector<Tensor> before;
    if (faulty) {
      for (Tensor* g : grads) before.push_back(g ? *g : Tensor());
    }
    node.backward(BackwardContext(node.grad, node.value, std::move(inputs), grads));
    if (faulty) {
      for (std::size_t k = 0; k < grads.size(); ++k) {
        if (!grads[k]) continue;
        auto out = grads[k]->data();
        auto prev = before[k].data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = prev[i] + g_fault_factor * (out[i] - prev[i]);
      }
    }
  }
}

const Tensor* Tape::grad(Var v) const {
  const Node& n = nodes_[v.id_];
  return n.grad.empty() ? nullptr : &n.grad;
}

void Tape::accumulate_param_grads(ParamStore& store) const {
  for (const auto& [name, id] : param_leaves_) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    Tensor& slot = store.grad(name);
    auto dst = slot.data();
    auto src = n.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

std::optional<std::size_t> Tape::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.all_finite()) return i;
  }
  return std::nullopt;
}

void backward(Tape& tape, Var loss, ParamStore& params) {
  tape.backward(loss);
  tape.accumulate_param_grads(params);
}

}  // namespace abanet
