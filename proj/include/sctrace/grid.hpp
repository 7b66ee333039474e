#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sctrace/errors.hpp"

namespace sctrace {

enum class GridKind { Uniform, LogSpaced };

/// Quadrature grid: strictly increasing nodes with positive weights.
/// Uniform grids carry composite-trapezoid weights; log-spaced grids carry
/// trapezoid weights of the mapped variable t = log x (i.e. w_i ~ x_i dt).
struct Grid {
  std::vector<double> nodes;
  std::vector<double> weights;
  GridKind kind = GridKind::Uniform;

  std::size_t size() const { return nodes.size(); }
  double front() const { return nodes.front(); }
  double back() const { return nodes.back(); }
  double spacing() const { return nodes.size() > 1 ? nodes[1] - nodes[0] : 0.0; }
};

inline Grid make_grid(double xmin, double xmax, std::size_t count, GridKind kind) {
  if (!(xmin < xmax)) throw ParameterError("make_grid: xmin must be < xmax");
  if (count < 2) throw ParameterError("make_grid: need at least 2 nodes");
  if (kind == GridKind::LogSpaced && !(xmin > 0))
    throw ParameterError("make_grid: log-spaced grid requires xmin > 0");

  Grid g;
  g.kind = kind;
  g.nodes.resize(count);
  g.weights.resize(count);
  const std::size_t n = count;
  if (kind == GridKind::Uniform) {
    const double dx = (xmax - xmin) / double(n - 1);
    for (std::size_t i = 0; i < n; ++i) g.nodes[i] = xmin + double(i) * dx;
    g.nodes.back() = xmax;
    for (std::size_t i = 0; i < n; ++i) g.weights[i] = dx;
    g.weights.front() = 0.5 * dx;
    g.weights.back() = 0.5 * dx;
  } else {
    const double t0 = std::log(xmin), t1 = std::log(xmax);
    const double dt = (t1 - t0) / double(n - 1);
    for (std::size_t i = 0; i < n; ++i) g.nodes[i] = std::exp(t0 + double(i) * dt);
    g.nodes.back() = xmax;
    for (std::size_t i = 0; i < n; ++i) g.weights[i] = g.nodes[i] * dt;
    g.weights.front() *= 0.5;
    g.weights.back() *= 0.5;
  }
  return g;
}

/// Interior-node grid for Dirichlet problems on (xmin, xmax): nodes at
/// xmin + i*dx, i = 1..count, with dx = (xmax-xmin)/(count+1). With zero
/// boundary values the composite trapezoid rule degenerates to weight dx
/// at every interior node.
inline Grid dirichlet_grid(double xmin, double xmax, std::size_t count) {
  if (!(xmin < xmax)) throw ParameterError("dirichlet_grid: xmin must be < xmax");
  if (count < 2) throw ParameterError("dirichlet_grid: need at least 2 nodes");
  Grid g;
  g.kind = GridKind::Uniform;
  const double dx = (xmax - xmin) / double(count + 1);
  g.nodes.resize(count);
  g.weights.assign(count, dx);
  for (std::size_t i = 0; i < count; ++i) g.nodes[i] = xmin + double(i + 1) * dx;
  return g;
}

/// Kahan-compensated sum in fixed ascending index order.
inline double kahan_sum(std::span<const double> v) {
  double s = 0.0, c = 0.0;
  for (double x : v) {
    const double y = x - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

/// Weighted quadrature of sampled values; fixed summation order with
/// compensated accumulation for run-to-run reproducibility.
inline double integrate(std::span<const double> values, const Grid& grid) {
  if (values.size() != grid.size())
    throw ParameterError("integrate: value/grid length mismatch");
  double s = 0.0, c = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double y = values[i] * grid.weights[i] - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

template <class F>
double integrate_fn(F&& f, const Grid& grid) {
  double s = 0.0, c = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double y = f(grid.nodes[i]) * grid.weights[i] - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

}  // namespace sctrace
