#include "rtkd/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "rtkd/errors.hpp"

namespace rtkd {

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index extent : shape) {
    if (extent <= 0) throw DimensionError("non-positive extent in shape " + shape_string(shape));
    n *= extent;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, bool requires_grad) : node_(std::make_shared<NodeType>()) {
  const Index n = shape_numel(shape);
  node_->shape = std::move(shape);
  node_->value = Buffer<Scalar>::Zero(n);
  node_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Buffer<Scalar> values, bool requires_grad)
    : node_(std::make_shared<NodeType>()) {
  const Index n = shape_numel(shape);
  if (values.size() != n) {
    throw DimensionError("shape " + shape_string(shape) + " needs " + std::to_string(n) +
                         " values, got " + std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_matrix(const RowMatrix<Scalar>& m, bool requires_grad) {
  Buffer<Scalar> values(m.size());
  Eigen::Map<RowMatrix<Scalar>>(values.data(), m.rows(), m.cols()) = m;
  return Tensor(Shape{m.rows(), m.cols()}, std::move(values), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_values(Shape shape, std::initializer_list<Scalar> values,
                                           bool requires_grad) {
  Buffer<Scalar> buffer(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar v : values) buffer[i++] = v;
  return Tensor(std::move(shape), std::move(buffer), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::scalar(Scalar v, bool requires_grad) {
  Buffer<Scalar> buffer(1);
  buffer[0] = v;
  return Tensor(Shape{1}, std::move(buffer), requires_grad);
}

template <typename Scalar>
typename Tensor<Scalar>::ConstMatrixMap Tensor<Scalar>::matrix() const {
  const Index cols = node_->shape.back();
  return ConstMatrixMap(node_->value.data(), node_->value.size() / cols, cols);
}

template <typename Scalar>
typename Tensor<Scalar>::MatrixMap Tensor<Scalar>::mutable_matrix() {
  const Index cols = node_->shape.back();
  return MatrixMap(node_->value.data(), node_->value.size() / cols, cols);
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

template <typename Scalar>
Buffer<Scalar> Tensor<Scalar>::grad() const {
  if (has_grad()) return node_->grad;
  return Buffer<Scalar>::Zero(numel());
}

template <typename Scalar>
typename Tensor<Scalar>::ConstMatrixMap Tensor<Scalar>::grad_matrix() const {
  if (!has_grad()) node_->grad = Buffer<Scalar>::Zero(numel());
  const Index cols = node_->shape.back();
  return ConstMatrixMap(node_->grad.data(), node_->grad.size() / cols, cols);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
  return Tensor(node_->shape, node_->value, false);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::clone() const {
  Tensor copy(node_->shape, node_->value, node_->requires_grad);
  if (has_grad()) copy.node_->grad = node_->grad;
  return copy;
}

template <typename Scalar>
void Tensor<Scalar>::backward() const {
  if (numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<NodeType*> order;
  std::unordered_set<NodeType*> visited;
  std::vector<std::pair<NodeType*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeType* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeType* node : order) {
    if (!node->is_leaf()) node->grad.resize(0);
  }
  node_->accumulate(Buffer<Scalar>::Ones(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeType* node = *it;
    if (node->is_leaf() || node->grad.size() == 0) continue;
    node->backward(*node);
  }
  for (NodeType* node : order) {
    if (!node->is_leaf()) node->grad.resize(0);
  }
}

namespace {

template <typename Scalar, typename Range>
Tensor<Scalar> build_result(Shape shape, Buffer<Scalar> value, const Range& inputs,
                            std::function<void(detail::Node<Scalar>&)> backward) {
  Tensor<Scalar> out(std::move(shape), std::move(value), false);
  bool any = false;
  for (const Tensor<Scalar>* input : inputs) any = any || input->requires_grad();
  if (any) {
    auto& node = *out.node();
    node.requires_grad = true;
    for (const Tensor<Scalar>* input : inputs) {
      if (input->requires_grad()) node.parents.push_back(input->node());
    }
    node.backward = std::move(backward);
  }
  return out;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> make_result(Shape shape, Buffer<Scalar> value,
                           std::initializer_list<const Tensor<Scalar>*> inputs,
                           std::function<void(detail::Node<Scalar>&)> backward) {
  return build_result<Scalar>(std::move(shape), std::move(value), inputs, std::move(backward));
}

template <typename Scalar>
Tensor<Scalar> make_result(Shape shape, Buffer<Scalar> value,
                           const std::vector<Tensor<Scalar>>& inputs,
                           std::function<void(detail::Node<Scalar>&)> backward) {
  std::vector<const Tensor<Scalar>*> pointers;
  pointers.reserve(inputs.size());
  for (const auto& t : inputs) pointers.push_back(&t);
  return build_result<Scalar>(std::move(shape), std::move(value), pointers, std::move(backward));
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, Buffer<float>, std::initializer_list<const Tensor<float>*>,
                                   std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result(Shape, Buffer<double>,
                                    std::initializer_list<const Tensor<double>*>,
                                    std::function<void(detail::Node<double>&)>);
template Tensor<float> make_result(Shape, Buffer<float>, const std::vector<Tensor<float>>&,
                                   std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result(Shape, Buffer<double>, const std::vector<Tensor<double>>&,
                                    std::function<void(detail::Node<double>&)>);

}  // namespace rtkd
