#include "lcm/tape.hpp"

namespace lcm {

template <typename T>
Var Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.op = "constant";
  n.owned = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::param(ParamBlock<T>& block) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].param == &block) return Var{static_cast<int>(i)};
  }
  Node n;
  n.op = "param";
  n.ref = &block.value;
  n.param = &block;
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::frozen(const ParamBlock<T>& block) {
  Node n;
  n.op = "frozen";
  n.ref = &block.value;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::record(std::string_view op, Tensor<T> value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.op = std::string(op);
  n.owned = std::move(value);
  for (Var in : inputs) {
    if (in.id < 0 || static_cast<std::size_t>(in.id) >= nodes_.size()) {
      throw ContractError("tape input " + std::to_string(in.id) + " does not precede '" + n.op + "'");
    }
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.ref ? *n.ref : n.owned;
}

template <typename T>
T Tape<T>::scalar(Var v) const {
  const Tensor<T>& t = value(v);
  if (t.size() != 1) throw ContractError("expected scalar, got " + t.shape().str());
  return t[0];
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) n.grad = Tensor<T>(value(v).shape());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var loss) {
  if (value(loss).size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + value(loss).shape().str());
  }
  for (auto& n : nodes_) n.grad = Tensor<T>();
  grad_buffer(loss)[0] = T{1};
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, Var{i});
  }
  for (auto& n : nodes_) {
    if (!n.param) continue;
    n.param->grad = n.grad.empty() ? Tensor<T>(n.param->value.shape()) : n.grad;
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace lcm
