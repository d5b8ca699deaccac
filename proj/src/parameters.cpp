#include "rtkd/parameters.hpp"

#include <cmath>
#include <regex>

#include "rtkd/config.hpp"

namespace rtkd {

void ModelConfig::validate() const {
  auto positive = [](Index v, const char* what) {
    if (v <= 0) throw DomainError(std::string(what) + " must be positive, got " + std::to_string(v));
  };
  positive(search_size, "search_size");
  positive(template_size, "template_size");
  positive(patch, "patch");
  positive(channels, "channels");
  positive(dim, "dim");
  positive(layers, "layers");
  positive(heads, "heads");
  positive(mlp_ratio, "mlp_ratio");
  positive(head_channels, "head_channels");
  positive(reduction, "reduction");
  if (search_size % patch != 0 || template_size % patch != 0) {
    throw DomainError("search_size " + std::to_string(search_size) + " and template_size " +
                      std::to_string(template_size) + " must be divisible by patch " +
                      std::to_string(patch));
  }
  if (dim % heads != 0) {
    throw DomainError("dim " + std::to_string(dim) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (!(fovea_lambda > 0.0)) throw DomainError("fovea_lambda must be positive");
}

template <typename Scalar>
Tensor<Scalar> ParameterSet<Scalar>::add(const std::string& name, Shape shape) {
  if (contains(name)) throw ValidationError("duplicate parameter name " + name);
  Tensor<Scalar> t(std::move(shape), true);
  index_.emplace(name, entries_.size());
  entries_.push_back({name, t});
  return t;
}

template <typename Scalar>
const Tensor<Scalar>& ParameterSet<Scalar>::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ValidationError("unknown parameter " + std::string(name));
  return entries_[it->second].tensor;
}

template <typename Scalar>
Index ParameterSet<Scalar>::total_elements() const {
  Index n = 0;
  for (const auto& p : entries_) n += p.tensor.numel();
  return n;
}

template <typename Scalar>
void ParameterSet<Scalar>::zero_grad() {
  for (auto& p : entries_) p.tensor.zero_grad();
}

template <typename Scalar>
void ParameterSet<Scalar>::set_requires_grad(bool flag) {
  for (auto& p : entries_) p.tensor.set_requires_grad(flag);
}

ParamGroup parameter_group(std::string_view name) {
  static const std::regex backbone(
      R"(^[a-z]+/(embed/.+|final_norm/.+|layer[0-9]+/(norm1|norm2|attn|mlp)/.+)$)");
  static const std::regex other(R"(^[a-z]+/(dr/.+|head/.+|layer[0-9]+/mmmp_(rgb|tir)/.+)$)");
  const std::string s(name);
  if (std::regex_match(s, backbone)) return ParamGroup::kBackbone;
  if (std::regex_match(s, other)) return ParamGroup::kOther;
  throw ValidationError("parameter " + s + " belongs to no group");
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename Scalar>
void initialize_parameters(ParameterSet<Scalar>& params, Rng& rng) {
  // Score logits start at a 0.1 foreground prior.
  const double score_prior = -std::log((1.0 - 0.1) / 0.1);
  for (const auto& p : params.entries()) {
    Tensor<Scalar> t = p.tensor;
    Buffer<Scalar>& v = t.mutable_values();
    const std::string& n = p.name;
    if (ends_with(n, "/gamma")) {
      v.setOnes();
    } else if (n.find("/g_s2/") != std::string::npos || ends_with(n, "/g_t/weight")) {
      v.setZero();
    } else if (ends_with(n, "/g_t/bias")) {
      v.setOnes();
    } else if (ends_with(n, "head/score/conv3/bias")) {
      v.setConstant(static_cast<Scalar>(score_prior));
    } else if (ends_with(n, "/bias") || ends_with(n, "/beta")) {
      v.setZero();
    } else {
      for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(rng.truncated_normal(0.02));
    }
  }
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template void initialize_parameters(ParameterSet<float>&, Rng&);
template void initialize_parameters(ParameterSet<double>&, Rng&);

}  // namespace rtkd
