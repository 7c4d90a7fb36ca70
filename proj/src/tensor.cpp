#include "fp/tensor.hpp"

#include "fp/util.hpp"

namespace fp {

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    check(d > 0, cat("non-positive dimension in shape ", shape_str(s)));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape shape) : s_(std::make_shared<detail::TensorState>()) {
  s_->shape = std::move(shape);
  s_->data.assign(static_cast<size_t>(numel(s_->shape)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : s_(std::make_shared<detail::TensorState>()) {
  int64_t n = numel(shape);
  check(static_cast<int64_t>(values.size()) == n,
        cat("value count ", values.size(), " does not match shape ", shape_str(shape)));
  s_->shape = std::move(shape);
  s_->data = std::move(values);
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  for (auto& x : t.s_->data) x = v;
  return t;
}

const Shape& Tensor::shape() const {
  check(defined(), "use of undefined tensor");
  return s_->shape;
}

int64_t Tensor::size() const { return static_cast<int64_t>(values().size()); }

int Tensor::dim(int i) const {
  const Shape& sh = shape();
  check(i >= 0 && i < static_cast<int>(sh.size()), "dim index out of range");
  return sh[i];
}

const std::vector<double>& Tensor::values() const {
  check(defined(), "use of undefined tensor");
  return s_->data;
}

std::vector<double>& Tensor::values() {
  check(defined(), "use of undefined tensor");
  return s_->data;
}

double Tensor::item() const {
  check(size() == 1, cat("item() on non-scalar tensor of shape ", shape_str(shape())));
  return s_->data[0];
}

bool Tensor::requires_grad() const { return defined() && s_->requires_grad; }

const Tensor& Tensor::set_requires_grad(bool b) const {
  check(defined(), "use of undefined tensor");
  s_->requires_grad = b;
  return *this;
}

bool Tensor::has_grad() const { return defined() && !s_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  check(has_grad(), "tensor has no gradient");
  return s_->grad;
}

void Tensor::clear_grad() const {
  if (defined()) s_->grad.clear();
}

Tensor Tensor::detached_copy() const {
  check(defined(), "use of undefined tensor");
  Tensor t(s_->shape, s_->data);
  return t;
}

}  // namespace fp
