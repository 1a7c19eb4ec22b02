#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "omega/numerics/tensor.hpp"

namespace omega::numerics {

inline std::uint64_t next_tape_serial() {
  static std::atomic<std::uint64_t> serial{1};
  return serial.fetch_add(1, std::memory_order_relaxed);
}

/// Records primitive operations in execution order so gradients can be
/// propagated by a single reverse sweep.
///
/// Node ids are assigned sequentially and every recorded operation only
/// refers to ids that already exist, so the record list is topologically
/// ordered by construction. A tape is single-writer.
template <class T>
class BasicTape {
 public:
  using TensorT = BasicTensor<T>;

  struct Var {
    std::uint64_t tape = 0;
    std::size_t id = 0;
  };

  using BackwardFn = std::function<void(BasicTape&, std::span<const T>)>;

  struct Record {
    const char* op;
    std::vector<std::size_t> inputs;
    std::size_t output;
  };

  explicit BasicTape(bool grad_enabled = true)
      : serial_(next_tape_serial()), grad_enabled_(grad_enabled) {}

  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(TensorT value) {
    Node node;
    node.op = "constant";
    node.value = std::move(value);
    return push(std::move(node));
  }

  /// Borrowed constant; the tensor must outlive the tape's use of it.
  Var constant_ref(const TensorT& value) {
    Node node;
    node.op = "constant";
    node.external = &value;
    return push(std::move(node));
  }

  /// Trainable leaf. After backward the node gradient is added into the
  /// tensor's own grad buffer.
  Var parameter(TensorT& param) {
    Node node;
    node.op = "parameter";
    node.external = &param;
    node.param = &param;
    node.requires_grad = grad_enabled_;
    return push(std::move(node));
  }

  Var record(const char* op, std::initializer_list<Var> inputs, TensorT out,
             BackwardFn backward) {
    Node node;
    node.op = op;
    node.value = std::move(out);
    for (Var in : inputs) {
      check(in);
      node.inputs.push_back(in.id);
      node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
    }
    node.requires_grad = node.requires_grad && grad_enabled_;
    if (node.requires_grad) node.backward = std::move(backward);
    return push(std::move(node));
  }

  const TensorT& value(Var v) const {
    check(v);
    const Node& n = nodes_[v.id];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(Var v) const {
    check(v);
    return nodes_[v.id].requires_grad;
  }

  /// Mutable gradient accumulator for a node, allocated on first use.
  std::span<T> grad_buffer(Var v) {
    check(v);
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad.assign(value(v).numel(), T{0});
    return n.grad;
  }

  std::span<const T> grad(Var v) const {
    check(v);
    const Node& n = nodes_[v.id];
    if (n.grad.empty()) {
      throw ContractError("node " + std::to_string(v.id) + " has no gradient");
    }
    return n.grad;
  }

  std::vector<Record> records() const {
    std::vector<Record> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].inputs.empty()) continue;
      out.push_back({nodes_[i].op, nodes_[i].inputs, i});
    }
    return out;
  }

  /// Reverse sweep from a scalar loss; each record is visited at most once.
  void backward(Var loss) {
    check(loss);
    if (value(loss).numel() != 1) {
      throw ContractError("backward needs a scalar loss, got shape " +
                          shape_str(value(loss).shape()));
    }
    if (!nodes_[loss.id].requires_grad) return;
    grad_buffer(loss)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      if (n.backward) {
        // The callback may allocate grads of earlier nodes; deque keeps this
        // node's storage stable.
        n.backward(*this, std::span<const T>(n.grad));
      }
      if (n.param) {
        std::span<T> dst = n.param->ensure_grad();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += n.grad[j];
      }
    }
  }

  /// Frees values and gradients held by intermediate nodes.
  void release_intermediates() {
    for (Node& n : nodes_) {
      if (n.external) continue;
      n.value = TensorT();
      n.grad.clear();
      n.grad.shrink_to_fit();
      n.backward = nullptr;
    }
  }

 private:
  struct Node {
    const char* op = "";
    std::vector<std::size_t> inputs;
    TensorT value;
    const TensorT* external = nullptr;
    TensorT* param = nullptr;
    bool requires_grad = false;
    std::vector<T> grad;
    BackwardFn backward;
  };

  Var push(Node&& node) {
    nodes_.push_back(std::move(node));
    return Var{serial_, nodes_.size() - 1};
  }

  void check(Var v) const {
    if (v.tape != serial_ || v.id >= nodes_.size()) {
      throw UnknownNodeError("variable " + std::to_string(v.id) +
                             " is not recorded on this tape");
    }
  }

  std::uint64_t serial_;
  bool grad_enabled_;
  std::deque<Node> nodes_;
};

using Tape = BasicTape<float>;

}  // namespace omega::numerics
