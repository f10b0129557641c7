#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csmae {

#ifdef CSMAE_REAL_F64
using Real = double;
#else
using Real = float;
#endif

using Shape = std::vector<std::size_t>;

// 64-byte aligned allocation. Eigen picks its vectorized peeling from the buffer
// address, so unaligned storage makes float results depend on where malloc lands.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<Real, AlignedAllocator<Real>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Storage plus autograd bookkeeping. Shared between Tensor handles and tape records.
struct TensorNode {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::uint64_t id = 0;

  // Zero-initialized gradient buffer, allocated on first use.
  Buffer& grad_buffer();
};

// Reference-semantics handle (like a framework tensor). Copies alias the same node;
// use clone() for an independent copy of the values.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Buffer data, bool requires_grad = false);
  Tensor(Shape shape, const std::vector<Real>& data, bool requires_grad = false);
  Tensor(Shape shape, std::initializer_list<Real> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  // Rows/cols of a 2-D tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<Real> data();
  std::span<const Real> data() const;
  Real item() const;
  Real at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const Real> grad() const;
  void zero_grad();

  Tensor clone() const;
  std::uint64_t id() const;
  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Define-by-run record of differentiable operations for one step. Operations
// executed while a Tape::Scope is active, with at least one input that requires
// grad, append a record here; backward() replays them in reverse.
class Tape {
 public:
  struct Record {
    std::string op;
    std::vector<std::uint64_t> inputs;
    std::uint64_t output = 0;
    std::function<void()> backward;
  };

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active();

  void record(std::string_view op, std::initializer_list<const Tensor*> inputs, const Tensor& output,
              std::function<void()> backward);
  void record(std::string_view op, const std::vector<Tensor>& inputs, const Tensor& output,
              std::function<void()> backward);

  // Seeds d(loss)=1 and runs every reachable record once, newest first.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }
  void clear() { records_.clear(); }

 private:
  std::vector<Record> records_;
  std::vector<std::shared_ptr<TensorNode>> outputs_;
};

}  // namespace csmae
