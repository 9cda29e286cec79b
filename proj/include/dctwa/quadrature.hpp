#pragma once

// Gauss-Legendre rules (Golub-Welsch) and an adaptive bisection integrator
// for smooth integrands with values in any vector space.

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "dctwa/error.hpp"

namespace dctwa::quad {

struct Rule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;  // sum to 2
};

inline Rule make_gauss_legendre(int n) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  Rule r;
  r.nodes.resize(static_cast<std::size_t>(n));
  r.weights.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    r.nodes[static_cast<std::size_t>(k)] = es.eigenvalues()(k);
    const double v = es.eigenvectors()(0, k);
    r.weights[static_cast<std::size_t>(k)] = 2.0 * v * v;
  }
  return r;
}

/// Cached n-point rule; safe to call concurrently.
inline const Rule& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, Rule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make_gauss_legendre(n)).first;
  return it->second;
}

/// Fixed-order rule mapped to [a, b].
template <class F>
auto fixed(F&& f, double a, double b, int n) {
  const Rule& r = gauss_legendre(n);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  using R = std::decay_t<decltype(f(mid))>;
  R acc = f(mid + half * r.nodes[0]) * (half * r.weights[0]);
  for (std::size_t k = 1; k < r.nodes.size(); ++k) acc += f(mid + half * r.nodes[k]) * (half * r.weights[k]);
  return acc;
}

/// Periodic trapezoid rule over [0, period) with n equally spaced nodes.
template <class F>
auto periodic_trapezoid(F&& f, double period, int n) {
  const double h = period / n;
  using R = std::decay_t<decltype(f(0.0))>;
  R acc = f(0.0) * h;
  for (int k = 1; k < n; ++k) acc += f(k * h) * h;
  return acc;
}

struct AdaptiveOptions {
  int order = 20;
  double abs_tol = 1e-9;
  int max_depth = 24;
};

namespace detail {

template <class V>
double magnitude(const V& v) {
  if constexpr (requires { v.cwiseAbs().maxCoeff(); }) {
    return v.cwiseAbs().maxCoeff();
  } else {
    return std::abs(v);
  }
}

template <class F, class V>
V adaptive_step(F& f, double a, double b, const V& whole, const AdaptiveOptions& opt, double tol, int depth,
                double& err_acc) {
  const double m = 0.5 * (a + b);
  V left = fixed(f, a, m, opt.order);
  V right = fixed(f, m, b, opt.order);
  V both = left + right;
  const double err = magnitude(V(both - whole));
  if (err <= tol || b - a < 1e-14) {
    err_acc += err;
    return both;
  }
  if (depth >= opt.max_depth) {
    throw Error(ErrorCode::QuadratureFailure,
                "adaptive Gauss-Legendre did not converge on [" + std::to_string(a) + ", " + std::to_string(b) + "]");
  }
  return adaptive_step(f, a, m, left, opt, 0.5 * tol, depth + 1, err_acc) +
         adaptive_step(f, m, b, right, opt, 0.5 * tol, depth + 1, err_acc);
}

}  // namespace detail

/// Adaptive Gauss-Legendre by interval bisection. Throws QuadratureFailure when
/// the local error estimate stays above tolerance at max depth.
template <class F>
auto adaptive(F&& f, double a, double b, const AdaptiveOptions& opt = {}, double* error_estimate = nullptr) {
  using V = decltype(fixed(f, a, b, opt.order));
  V whole = fixed(f, a, b, opt.order);
  double err = 0.0;
  V result = detail::adaptive_step(f, a, b, whole, opt, opt.abs_tol, 0, err);
  if (error_estimate != nullptr) *error_estimate = err;
  return result;
}

}  // namespace dctwa::quad
