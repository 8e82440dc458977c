#include "tempex/numerics/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace tempex::num {

namespace detail {

struct Node {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::string name;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

namespace {
std::atomic<std::uint64_t> next_id{1};

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + to_string(shape) + " cannot hold " +
                     std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->id = next_id.fetch_add(1, std::memory_order_relaxed);
  node->shape = std::move(shape);
  node->value = std::move(values);
  return node;
}
}  // namespace

}  // namespace detail

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

ShapeError::ShapeError(const std::string& op, const Shape& lhs, const Shape& rhs)
    : std::invalid_argument(op + ": shape mismatch " + to_string(lhs) + " vs " +
                            to_string(rhs)) {}

Tensor::Tensor() : node_(detail::make_node({}, {0.0})) {}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = numel(shape);
  return Tensor(detail::make_node(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  return Tensor(detail::make_node(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return Tensor(detail::make_node({}, {value})); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values, std::string name) {
  Tensor t(detail::make_node(std::move(shape), std::move(values)));
  t.node_->requires_grad = true;
  t.node_->name = std::move(name);
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return node_->value.size(); }
std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }
std::vector<double> Tensor::to_vector() const { return node_->value; }

double Tensor::item() const {
  if (node_->value.size() != 1) {
    throw ShapeError("item() requires a single-element tensor, got " + to_string(shape()));
  }
  return node_->value[0];
}

double Tensor::operator[](std::size_t flat) const { return node_->value.at(flat); }

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->leaf; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_->leaf) throw std::logic_error("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
  return *this;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty()) {
    throw std::logic_error("tensor '" + node_->name + "' " + to_string(shape()) +
                           " has no gradient");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0);
}

void Tensor::clear_grad() { node_->grad.clear(); }

const std::string& Tensor::name() const { return node_->name; }

Tensor& Tensor::set_name(std::string name) {
  node_->name = std::move(name);
  return *this;
}

Tensor Tensor::detach() const { return from(node_->shape, node_->value); }

const char* Tensor::op_name() const { return node_->op; }

Tensor custom_op(const char* op, Shape shape, std::vector<double> values,
                 std::vector<Tensor> inputs, BackwardFn backward) {
  auto node = detail::make_node(std::move(shape), std::move(values));
  node->op = op;
  node->leaf = false;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(std::move(in.node_));
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tape::Tape(const Tensor& root) : root_(root.node_) {
  // Gather every recorded op reachable from the root. Node ids are assigned
  // in creation order, so sorting by id yields a topological order.
  std::vector<detail::Node*> stack{root_.get()};
  std::unordered_set<const detail::Node*> seen{root_.get()};
  while (!stack.empty()) {
    auto* node = stack.back();
    stack.pop_back();
    if (!node->backward) continue;
    ops_.push_back(node);
    for (const auto& in : node->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(ops_.begin(), ops_.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id < b->id; });
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(ops_.size());
  for (const auto* op : ops_) names.emplace_back(op->op);
  return names;
}

void Tape::backward() {
  if (root_->value.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + to_string(root_->shape));
  }
  if (ops_.empty()) {
    throw std::logic_error("backward: loss is not connected to any trainable tensor");
  }
  root_->ensure_grad();
  root_->grad[0] += 1.0;

  std::vector<OpInput> views;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    detail::Node* node = *it;
    if (node->grad.empty()) continue;
    views.clear();
    for (const auto& in : node->inputs) {
      OpInput view{in->value, {}};
      if (in->requires_grad) view.grad = in->ensure_grad();
      views.push_back(view);
    }
    node->backward(node->grad, views);
  }
  for (auto* node : ops_) node->grad.clear();
}

void backward(const Tensor& loss) { Tape(loss).backward(); }

}  // namespace tempex::num
