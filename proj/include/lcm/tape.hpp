#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "lcm/tensor.hpp"

namespace lcm {

// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode recording of primitive applications. Entries are appended in
// evaluation order, so every input of entry k has an index below k.
//
// Leaves are either constants, trainable parameters (ParamBlock with
// gradient written back by backward()), or frozen parameters that are read
// in place and never receive gradients.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  Var constant(Tensor<T> value);
  // Registering the same block twice returns the existing handle.
  Var param(ParamBlock<T>& block);
  Var frozen(const ParamBlock<T>& block);
  Var record(std::string_view op, Tensor<T> value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor<T>& value(Var v) const;
  T scalar(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::string_view op(Var v) const { return nodes_.at(v.id).op; }
  const std::vector<Var>& inputs(Var v) const { return nodes_.at(v.id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of the loss w.r.t. v; a null tensor means "no contribution yet".
  const Tensor<T>& grad(Var v) const { return nodes_.at(v.id).grad; }
  // Zero-initialized on first access. Only valid while backward() runs or after it.
  Tensor<T>& grad_buffer(Var v);

  // Propagates d(loss)/d(.) through the tape and overwrites the grad of
  // every trainable ParamBlock on it. Throws ContractError for non-scalar loss.
  void backward(Var loss);

 private:
  struct Node {
    std::string op;
    Tensor<T> owned;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    std::vector<Var> inputs;
    BackwardFn backward;
    ParamBlock<T>* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace lcm
