#include "csmae/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "csmae/errors.hpp"

namespace csmae {

namespace {

std::uint64_t next_tensor_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

thread_local Tape* active_tape = nullptr;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << "x";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Buffer& TensorNode::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), Real(0));
  return grad;
}

Tensor::Tensor(Shape shape, Buffer data, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dims must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  node_ = std::make_shared<TensorNode>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
  node_->id = next_tensor_id();
}

Tensor::Tensor(Shape shape, const std::vector<Real>& data, bool requires_grad)
    : Tensor(std::move(shape), Buffer(data.begin(), data.end()), requires_grad) {}

Tensor::Tensor(Shape shape, std::initializer_list<Real> data, bool requires_grad)
    : Tensor(std::move(shape), Buffer(data), requires_grad) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), Real(0), requires_grad); }

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), Buffer(n, value), requires_grad);
}

Tensor Tensor::scalar(Real value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw DimensionError("expected a 2-D tensor, got " + shape_str(shape()));
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw DimensionError("expected a 2-D tensor, got " + shape_str(shape()));
  return node_->shape[1];
}

std::span<Real> Tensor::data() { return node_->data; }
std::span<const Real> Tensor::data() const { return node_->data; }

Real Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
  return node_->data[0];
}

Real Tensor::at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }
std::span<const Real> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::clone() const { return Tensor(shape(), node_->data, requires_grad()); }

std::uint64_t Tensor::id() const { return node_->id; }

Tape::Scope::Scope(Tape& tape) : previous_(active_tape) { active_tape = &tape; }
Tape::Scope::~Scope() { active_tape = previous_; }

Tape* Tape::active() { return active_tape; }

void Tape::record(std::string_view op, std::initializer_list<const Tensor*> inputs, const Tensor& output,
                  std::function<void()> backward) {
  Record rec;
  rec.op = std::string(op);
  for (const Tensor* t : inputs) rec.inputs.push_back(t->id());
  rec.output = output.id();
  rec.backward = std::move(backward);
  records_.push_back(std::move(rec));
  outputs_.push_back(output.node());
}

void Tape::record(std::string_view op, const std::vector<Tensor>& inputs, const Tensor& output,
                  std::function<void()> backward) {
  Record rec;
  rec.op = std::string(op);
  for (const Tensor& t : inputs) rec.inputs.push_back(t.id());
  rec.output = output.id();
  rec.backward = std::move(backward);
  records_.push_back(std::move(rec));
  outputs_.push_back(output.node());
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined tensor")));
  }
  if (!loss.requires_grad()) return;
  loss.node()->grad_buffer()[0] += Real(1);
  for (std::size_t i = records_.size(); i-- > 0;) {
    if (outputs_[i]->grad.empty()) continue;  // not reachable from loss
    records_[i].backward();
  }
}

}  // namespace csmae
