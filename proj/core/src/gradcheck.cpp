#include "gsmt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gsmt/error.hpp"

namespace gsmt {

GradCheckResult finite_diff_check(const ScalarFn& f, std::span<const double> x, std::span<const double> analytic,
                                  double h) {
  if (analytic.size() != x.size()) {
    throw DimensionError("finite_diff_check: " + std::to_string(analytic.size()) + " gradient entries for " +
                         std::to_string(x.size()) + " coordinates");
  }
  GradCheckResult result;
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> numeric(x.size());
  double scale = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    numeric[i] = (up - down) / (2.0 * h);
    scale = std::max(scale, std::abs(numeric[i]));
  }
  scale = std::max(scale, 1e-12);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = analytic[i], fd = numeric[i];
    const double err = std::abs(a - fd) / scale;
    if (err > result.max_rel_error || i == 0) {
      result.max_rel_error = err;
      result.worst_index = i;
      result.analytic = a;
      result.numeric = fd;
    }
    const double coord = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-12});
    result.max_coord_error = std::max(result.max_coord_error, coord);
  }
  return result;
}

namespace {

std::vector<Tensor> unflatten(std::span<const double> flat, const std::vector<Tensor>& like) {
  std::vector<Tensor> out;
  out.reserve(like.size());
  std::size_t offset = 0;
  for (const Tensor& t : like) {
    out.emplace_back(t.shape(), flat.subspan(offset, t.size()));
    offset += t.size();
  }
  return out;
}

}  // namespace

GradCheckResult tape_grad_check(const LossBuilder& build, const std::vector<Tensor>& params, double h) {
  std::vector<double> flat;
  for (const Tensor& p : params) flat.insert(flat.end(), p.data().begin(), p.data().end());

  std::vector<double> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : params) leaves.push_back(tape.parameter(p));
    Var loss = build(tape, leaves);
    tape.backward(loss);
    for (const Var& v : leaves) analytic.insert(analytic.end(), v.grad().data().begin(), v.grad().data().end());
  }

  auto f = [&](std::span<const double> x) {
    Tape tape;
    std::vector<Var> leaves;
    for (Tensor& p : unflatten(x, params)) leaves.push_back(tape.parameter(std::move(p)));
    return build(tape, leaves).value()[0];
  };
  return finite_diff_check(f, flat, analytic, h);
}

}  // namespace gsmt
