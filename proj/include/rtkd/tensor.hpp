#pragma once

#include <Eigen/Core>

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rtkd {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

/// One vertex of the recorded computation graph. Leaves have no backward
/// function; interior nodes hold references to their inputs through it.
template <typename Scalar>
struct Node {
  Shape shape;
  Buffer<Scalar> value;
  Buffer<Scalar> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }

  template <typename Derived>
  void accumulate(const Eigen::ArrayBase<Derived>& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

}  // namespace detail

/// Dense row-major array with optional reverse-mode gradient.
///
/// A Tensor is a handle: copies share storage and graph position, which is
/// what lets one parameter feed several streams. Use clone() for a deep copy
/// and detach() to cut the graph.
template <typename Scalar>
class Tensor {
 public:
  using NodeType = detail::Node<Scalar>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, Buffer<Scalar> values, bool requires_grad = false);

  static Tensor from_matrix(const RowMatrix<Scalar>& m, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::initializer_list<Scalar> values,
                            bool requires_grad = false);
  static Tensor scalar(Scalar v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(Index axis) const { return node_->shape.at(static_cast<std::size_t>(axis)); }
  Index numel() const { return node_->value.size(); }

  const Buffer<Scalar>& values() const { return node_->value; }
  /// Mutable access for initializers and optimizers. Writing through it
  /// after the tensor has been used in a forward pass invalidates that graph.
  Buffer<Scalar>& mutable_values() { return node_->value; }
  Scalar operator[](Index i) const { return node_->value[i]; }

  /// The data viewed as (numel / last extent) x (last extent).
  ConstMatrixMap matrix() const;
  MatrixMap mutable_matrix();

  Scalar item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  /// Gradient values; zeros if nothing has been accumulated.
  Buffer<Scalar> grad() const;
  ConstMatrixMap grad_matrix() const;
  void zero_grad() { node_->grad.resize(0); }

  Tensor detach() const;
  Tensor clone() const;

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  /// calls; interior gradients are reset at the start of each sweep.
  void backward() const;

  const std::shared_ptr<NodeType>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<NodeType> node_;
};

/// Builds a result node. The backward closure is kept only if some input
/// requires a gradient, so constant subgraphs record nothing.
template <typename Scalar>
Tensor<Scalar> make_result(Shape shape, Buffer<Scalar> value,
                           std::initializer_list<const Tensor<Scalar>*> inputs,
                           std::function<void(detail::Node<Scalar>&)> backward);

template <typename Scalar>
Tensor<Scalar> make_result(Shape shape, Buffer<Scalar> value,
                           const std::vector<Tensor<Scalar>>& inputs,
                           std::function<void(detail::Node<Scalar>&)> backward);

/// Converts between scalar types; the result is a fresh leaf.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  return Tensor<To>(t.shape(), t.values().template cast<To>().eval(), t.requires_grad());
}

}  // namespace rtkd
