#pragma once

#include <functional>
#include <vector>

#include "oddity/tensor.hpp"

namespace oddity {

/// Reverse-mode computation tape.
///
/// Operations append nodes in execution order, which is automatically a
/// topological order of the dataflow graph. backward() walks the nodes in
/// reverse, seeding d(loss)/d(loss) = 1 and calling each node's closure to
/// accumulate gradients into its inputs.
///
/// Gradients of intermediate (non-leaf) tensors are released as soon as the
/// node that produced them has run, since every consumer node has already
/// executed by then; leaf parameters keep their gradient buffers and
/// accumulate across repeated backward() calls. A tape belongs to a single
/// training worker and is not thread-safe.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(BackwardFn fn, std::vector<Tensor<T>> outputs) {
    for (auto& t : outputs) t.mark_on_tape();
    nodes_.push_back(Node{std::move(fn), std::move(outputs)});
  }

  /// Runs reverse-mode accumulation from `loss` (must be a scalar produced
  /// on this tape or a leaf). With release = true the saved forward context
  /// of each node is destroyed right after its backward step, freeing
  /// activation memory as the walk proceeds; the tape cannot be replayed
  /// afterwards.
  void backward(Tensor<T>& loss, bool release = false) {
    if (!loss.defined() || loss.size() != 1)
      throw ValueError("backward: loss must be a scalar tensor");
    loss.grad()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->fn) it->fn();
      for (auto& out : it->outputs)
        if (out.on_tape() && !out.requires_grad()) out.drop_grad();
      if (release) it->fn = nullptr;
    }
  }

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    BackwardFn fn;
    std::vector<Tensor<T>> outputs;
  };
  std::vector<Node> nodes_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace oddity
