#pragma once
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace fp {

using Shape = std::vector<int>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

namespace detail {
struct TensorState {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass publishes into it
  bool requires_grad = false;
  // producer bookkeeping: which tape node created this value, if any
  Tape* tape = nullptr;
  uint64_t tape_gen = 0;
  int node = -1;
};
}  // namespace detail

// Dense f64 tensor with value semantics on the handle: copies share storage,
// detached_copy() deep-copies. Values are treated as immutable once the
// tensor has entered a forward pass.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);
  static Tensor scalar(double v);
  static Tensor full(Shape shape, double v);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const;
  int64_t size() const;
  int dim(int i) const;

  const std::vector<double>& values() const;
  std::vector<double>& values();

  double item() const;  // scalar tensors only

  bool requires_grad() const;
  const Tensor& set_requires_grad(bool b) const;

  bool has_grad() const;
  const std::vector<double>& grad() const;
  void clear_grad() const;

  Tensor detached_copy() const;

  detail::TensorState* state() const { return s_.get(); }
  const std::shared_ptr<detail::TensorState>& shared_state() const { return s_; }

 private:
  std::shared_ptr<detail::TensorState> s_;
};

}  // namespace fp
