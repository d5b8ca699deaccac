#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rtkd/errors.hpp"
#include "rtkd/rng.hpp"
#include "rtkd/tensor.hpp"

namespace rtkd {

template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> tensor;
};

/// Named, ordered collection of trainable tensors. Order is creation order,
/// which fixes both initialization draws and checkpoint layout.
template <typename Scalar>
class ParameterSet {
 public:
  /// Registers a zero-filled tensor that requires gradients.
  Tensor<Scalar> add(const std::string& name, Shape shape);

  const Tensor<Scalar>& get(std::string_view name) const;
  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

  const std::vector<Parameter<Scalar>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  Index total_elements() const;

  void zero_grad();
  void set_requires_grad(bool flag);

  /// Copies values by name from a set with the same names and shapes.
  template <typename Other>
  void copy_values_from(const ParameterSet<Other>& other) {
    if (other.size() != entries_.size()) {
      throw DimensionError("parameter count mismatch: " + std::to_string(other.size()) + " vs " +
                           std::to_string(entries_.size()));
    }
    for (const auto& p : other.entries()) {
      Tensor<Scalar> dst = get(p.name);
      if (dst.shape() != p.tensor.shape()) {
        throw DimensionError("parameter " + p.name + " shape " + shape_string(p.tensor.shape()) +
                             " vs " + shape_string(dst.shape()));
      }
      dst.mutable_values() = p.tensor.values().template cast<Scalar>();
    }
  }

 private:
  std::vector<Parameter<Scalar>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Learning-rate group of a parameter.
enum class ParamGroup { kBackbone, kOther };

/// Routes a parameter by name: embedding, encoder layers and the final norm
/// are backbone; prompters, the reduction layer and the head are other.
/// Unknown names throw ValidationError.
ParamGroup parameter_group(std::string_view name);

/// Fills every parameter according to its name: norm gains 1, biases 0,
/// zero-started prompter projections, and truncated normal (sigma 0.02)
/// for everything else. Draws happen in registration order.
template <typename Scalar>
void initialize_parameters(ParameterSet<Scalar>& params, Rng& rng);

}  // namespace rtkd
