#include "fp/tape.hpp"

#include "fp/util.hpp"

namespace fp {

int Tape::node_of(const Tensor& t) {
  check(t.defined(), "use of undefined tensor");
  detail::TensorState* s = t.state();
  if (s->tape == this && s->tape_gen == gen_) return s->node;
  if (!s->requires_grad) return -1;
  auto it = leaves_.find(s);
  if (it != leaves_.end()) return it->second;
  Node n;
  n.leaf = t.shared_state();
  n.out_size = static_cast<int64_t>(s->data.size());
  int id = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(n));
  gbuf_.emplace_back();
  leaves_.emplace(s, id);
  return id;
}

int Tape::emit(BackFn back) {
  Node n;
  n.back = std::move(back);
  int id = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(n));
  gbuf_.emplace_back();
  return id;
}

void Tape::attach_output(const Tensor& out, int node) {
  detail::TensorState* s = out.state();
  s->tape = this;
  s->tape_gen = gen_;
  s->node = node;
  nodes_[node].out_size = static_cast<int64_t>(s->data.size());
}

std::vector<double>& Tape::gbuf(int id) { return gbuf_[id]; }

void Tape::accumulate(int id, const double* g, size_t n) {
  if (id < 0) return;
  std::vector<double>& buf = gbuf_[id];
  if (buf.empty()) buf.assign(n, 0.0);
  for (size_t i = 0; i < n; ++i) buf[i] += g[i];
}

void Tape::accumulate(int id, const std::vector<double>& g) {
  accumulate(id, g.data(), g.size());
}

void Tape::run_backward(int loss_node) {
  gbuf_[loss_node].assign(1, 1.0);
  for (int i = loss_node; i >= 0; --i) {
    if (gbuf_[i].empty()) continue;
    if (nodes_[i].back) nodes_[i].back(*this, gbuf_[i]);
  }
}

void Tape::backward(const Tensor& loss) {
  check(size() > 0, "backward on an empty tape");
  check(loss.size() == 1, cat("backward needs a scalar loss, got shape ", shape_str(loss.shape())));
  detail::TensorState* s = loss.state();
  check(s->tape == this && s->tape_gen == gen_, "loss was not recorded on this tape");
  run_backward(s->node);
  for (auto& [state, id] : leaves_) {
    if (!state->requires_grad) continue;
    if (gbuf_[id].empty())
      state->grad.assign(state->data.size(), 0.0);
    else
      state->grad = std::move(gbuf_[id]);
  }
  reset();
}

Tensor Tape::grad_wrt(const Tensor& loss, const Tensor& input) {
  check(size() > 0, "backward on an empty tape");
  check(loss.size() == 1, cat("backward needs a scalar loss, got shape ", shape_str(loss.shape())));
  detail::TensorState* ls = loss.state();
  check(ls->tape == this && ls->tape_gen == gen_, "loss was not recorded on this tape");
  detail::TensorState* is = input.state();
  int in_node = -1;
  if (is->tape == this && is->tape_gen == gen_) {
    in_node = is->node;
  } else {
    auto it = leaves_.find(is);
    check(it != leaves_.end(), "input was not recorded on this tape");
    in_node = it->second;
  }
  run_backward(ls->node);
  Tensor g(input.shape());
  if (!gbuf_[in_node].empty()) g.values() = std::move(gbuf_[in_node]);
  reset();
  return g;
}

void Tape::reset() {
  nodes_.clear();
  gbuf_.clear();
  leaves_.clear();
  ++gen_;
}

}  // namespace fp
