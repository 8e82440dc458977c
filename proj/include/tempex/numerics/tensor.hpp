#pragma once

// Dense f64 tensors with a dynamic reverse-mode graph.
//
// A Tensor is a cheap handle onto a shared node. Operations whose inputs
// require gradients record a backward rule on the output node; the graph is
// kept alive by the output handle and discarded when the last handle goes.
// Backward propagation is driven by a Tape assembled from a scalar loss.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tempex::num {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised when operand shapes are incompatible. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const Shape& lhs, const Shape& rhs);
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised by log/division on values outside their domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {
struct Node;
}

/// View handed to a backward rule for each recorded input. `grad` is empty
/// when the input does not take part in differentiation.
struct OpInput {
  std::span<const double> value;
  std::span<double> grad;
  [[nodiscard]] bool wants_grad() const { return !grad.empty(); }
};

using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<OpInput> inputs)>;

class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  /// Trainable leaf.
  static Tensor parameter(Shape shape, std::vector<double> values, std::string name = {});

  [[nodiscard]] const Shape& shape() const;
  [[nodiscard]] std::size_t rank() const { return shape().size(); }
  [[nodiscard]] std::size_t dim(std::size_t axis) const;
  [[nodiscard]] std::size_t size() const;

  [[nodiscard]] std::span<const double> values() const;
  /// Direct write access. Intended for leaves (optimizer updates, in-place
  /// projection); writing into an interior node invalidates its backward rule.
  [[nodiscard]] std::span<double> mutable_values();
  [[nodiscard]] std::vector<double> to_vector() const;
  [[nodiscard]] double item() const;
  [[nodiscard]] double operator[](std::size_t flat) const;

  [[nodiscard]] bool requires_grad() const;
  [[nodiscard]] bool is_leaf() const;
  /// Leaves only.
  Tensor& set_requires_grad(bool on = true);

  [[nodiscard]] bool has_grad() const;
  /// Throws if no gradient has been accumulated.
  [[nodiscard]] std::span<const double> grad() const;
  void zero_grad();
  void clear_grad();

  [[nodiscard]] const std::string& name() const;
  Tensor& set_name(std::string name);

  /// Copy of the values with no graph attached.
  [[nodiscard]] Tensor detach() const;
  [[nodiscard]] Tensor clone() const { return detach(); }

  [[nodiscard]] const char* op_name() const;
  [[nodiscard]] bool valid() const { return static_cast<bool>(node_); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend class Tape;
  friend Tensor custom_op(const char*, Shape, std::vector<double>, std::vector<Tensor>,
                          BackwardFn);
};

/// Records an operation. If no input requires a gradient the result is a
/// plain constant and `backward` is dropped.
Tensor custom_op(const char* op, Shape shape, std::vector<double> values,
                 std::vector<Tensor> inputs, BackwardFn backward);

/// Ordered list of recorded operations reachable from a root, in creation
/// (topological) order. Built fresh for every backward pass.
///
/// Policy: gradients accumulate into leaves across calls until cleared by
/// the caller (see Adam::zero_grad). Interior gradient buffers are released
/// once backward finishes; the graph itself lives as long as the root.
class Tape {
 public:
  explicit Tape(const Tensor& root);

  [[nodiscard]] std::size_t size() const { return ops_.size(); }
  [[nodiscard]] bool empty() const { return ops_.empty(); }
  [[nodiscard]] std::vector<std::string> op_names() const;

  /// Seeds d(root)/d(root) = 1 and replays each op's backward rule once, in
  /// reverse order. Root must be a scalar.
  void backward();

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<detail::Node*> ops_;
};

/// Shorthand for Tape(loss).backward().
void backward(const Tensor& loss);

}  // namespace tempex::num
