#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gsmt/autodiff.hpp"
#include "gsmt/tensor.hpp"

// Weight structs are templates over their field type: W<Tensor> stores
// parameters, W<Var> is the same set bound to a tape. Each struct provides
//   visit(prefix, f)  -- f(name, field&) for every populated field
//   map<U>(prefix, f) -- W<U> with field = f(name, field)
// Unpopulated fields (mechanism arms not in use) are skipped by both.
namespace gsmt {

inline bool is_set(const Tensor& t) noexcept { return !t.empty(); }
inline bool is_set(const Var& v) noexcept { return v.valid(); }

namespace detail {

template <class U, class T, class F>
U map_field(const std::string& name, const T& field, F& f) {
  if (!is_set(field)) return U{};
  return f(name, field);
}

template <class T, class F>
void visit_field(const std::string& name, T& field, F& f) {
  if (is_set(field)) f(name, field);
}

}  // namespace detail

// Common mappers.
inline auto as_parameters(Tape& tape) {
  return [&tape](const std::string&, const Tensor& t) { return tape.parameter(t); };
}
inline auto as_constants(Tape& tape) {
  return [&tape](const std::string&, const Tensor& t) { return tape.constant(t); };
}
inline auto gradients_of() {
  return [](const std::string&, const Var& v) { return v.grad(); };
}

// Flattened (name, tensor) view of a weight struct, in visit order.
template <class W>
std::vector<std::pair<std::string, Tensor*>> named_tensors(W& weights) {
  std::vector<std::pair<std::string, Tensor*>> out;
  weights.visit("", [&out](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
  return out;
}

}  // namespace gsmt
