#pragma once
#include <functional>
#include <unordered_map>
#include <vector>

#include "fp/tensor.hpp"

namespace fp {

// Reverse-mode tape. Ops append nodes in forward execution order, which is
// already a topological order, so backward is a single reverse sweep over the
// node list. backward()/grad_wrt() clear the tape afterwards for reuse.
class Tape {
 public:
  int size() const { return static_cast<int>(nodes_.size()); }
  uint64_t generation() const { return gen_; }

  // Node id for `t`: its producer node if it was computed on this tape, a
  // fresh leaf node if it requires grad, otherwise -1 (constant).
  int node_of(const Tensor& t);

  // back receives the gradient of the loss w.r.t. this node's output and
  // must accumulate() into the parents it captured.
  using BackFn = std::function<void(Tape&, const std::vector<double>&)>;
  int emit(BackFn back);
  void attach_output(const Tensor& out, int node);

  // Publishes d(loss)/d(leaf) into .grad of every requires-grad leaf.
  void backward(const Tensor& loss);

  // Gradient of loss w.r.t. one recorded tensor; no tensor's .grad is touched.
  Tensor grad_wrt(const Tensor& loss, const Tensor& input);

  std::vector<double>& gbuf(int id);
  bool has_gbuf(int id) const { return !gbuf_[id].empty(); }
  void accumulate(int id, const std::vector<double>& g);
  void accumulate(int id, const double* g, size_t n);

 private:
  struct Node {
    BackFn back;
    std::shared_ptr<detail::TensorState> leaf;  // set for leaf (source) nodes
    int64_t out_size = 0;
  };

  void run_backward(int loss_node);
  void reset();

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> gbuf_;
  std::unordered_map<detail::TensorState*, int> leaves_;
  uint64_t gen_ = 1;
};

}  // namespace fp
