#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ladderlab/errors.hpp"

namespace ladderlab {

using Complex = std::complex<double>;

inline constexpr Complex kI{0.0, 1.0};

/// A point of 1D or 2D phase space.
///
/// Flat coordinates are ordered (x1, p1[, x2, p2]); this is the ordering used by
/// gradients and by the integrator state vector.
class PhaseState {
 public:
  PhaseState(std::span<const double> positions, std::span<const double> momenta) {
    if (positions.size() != momenta.size() || positions.empty() || positions.size() > 2) {
      throw std::invalid_argument("PhaseState: positions and momenta must both have length 1 or 2");
    }
    dim_ = static_cast<int>(positions.size());
    for (int i = 0; i < dim_; ++i) {
      coords_[2 * i] = positions[i];
      coords_[2 * i + 1] = momenta[i];
    }
    check_finite();
  }

  static PhaseState one_d(double x, double p) {
    const std::array<double, 1> q{x}, m{p};
    return PhaseState(q, m);
  }
  static PhaseState two_d(double x1, double p1, double x2, double p2) {
    const std::array<double, 2> q{x1, x2}, m{p1, p2};
    return PhaseState(q, m);
  }
  /// Builds a state from flat (x1,p1[,x2,p2]) coordinates.
  static PhaseState from_flat(std::span<const double> flat) {
    if (flat.size() == 2) return one_d(flat[0], flat[1]);
    if (flat.size() == 4) return two_d(flat[0], flat[1], flat[2], flat[3]);
    throw std::invalid_argument("PhaseState: flat coordinate vector must have length 2 or 4");
  }

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(2 * dim_); }
  double x(int axis = 0) const { return coords_.at(static_cast<std::size_t>(2 * axis)); }
  double p(int axis = 0) const { return coords_.at(static_cast<std::size_t>(2 * axis + 1)); }
  double coord(std::size_t k) const { return coords_.at(k); }
  std::span<const double> flat() const noexcept { return {coords_.data(), size()}; }

  /// Copy with one flat coordinate replaced. Finite-difference stencils use this.
  PhaseState with_coord(std::size_t k, double value) const {
    PhaseState s = *this;
    s.coords_.at(k) = value;
    return s;
  }

  friend bool operator==(const PhaseState& a, const PhaseState& b) {
    return a.dim_ == b.dim_ && a.coords_ == b.coords_;
  }

 private:
  void check_finite() const {
    for (std::size_t k = 0; k < size(); ++k) {
      if (!std::isfinite(coords_[k])) throw std::invalid_argument("PhaseState: non-finite component");
    }
  }

  int dim_ = 1;
  std::array<double, 4> coords_{};
};

using Gradient = std::vector<Complex>;

/// A complex-valued phase-space function with an optional analytic gradient.
class Observable {
 public:
  using EvalFn = std::function<Complex(const PhaseState&)>;
  using GradFn = std::function<Gradient(const PhaseState&)>;

  Observable() = default;
  Observable(int arity, EvalFn eval, GradFn gradient = {}, std::string name = {})
      : arity_(arity), eval_(std::move(eval)), grad_(std::move(gradient)), name_(std::move(name)) {
    if (arity_ != 1 && arity_ != 2) throw std::invalid_argument("Observable: arity must be 1 or 2");
  }

  int arity() const noexcept { return arity_; }
  const std::string& name() const noexcept { return name_; }
  bool has_gradient() const noexcept { return static_cast<bool>(grad_); }

  Complex operator()(const PhaseState& s) const {
    require_arity(s);
    return eval_(s);
  }
  Gradient analytic_gradient(const PhaseState& s) const {
    require_arity(s);
    return grad_(s);
  }

  Observable named(std::string name) const {
    Observable o = *this;
    o.name_ = std::move(name);
    return o;
  }

  friend Observable operator+(const Observable& f, const Observable& g) {
    GradFn grad;
    if (f.has_gradient() && g.has_gradient()) {
      grad = [f, g](const PhaseState& s) {
        Gradient a = f.grad_(s);
        const Gradient b = g.grad_(s);
        for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
        return a;
      };
    }
    return Observable(f.arity_, [f, g](const PhaseState& s) { return f.eval_(s) + g.eval_(s); }, grad,
                      "(" + f.name_ + "+" + g.name_ + ")");
  }

  friend Observable operator*(const Observable& f, const Observable& g) {
    GradFn grad;
    if (f.has_gradient() && g.has_gradient()) {
      grad = [f, g](const PhaseState& s) {
        const Complex fv = f.eval_(s), gv = g.eval_(s);
        Gradient a = f.grad_(s);
        const Gradient b = g.grad_(s);
        for (std::size_t k = 0; k < a.size(); ++k) a[k] = a[k] * gv + fv * b[k];
        return a;
      };
    }
    return Observable(f.arity_, [f, g](const PhaseState& s) { return f.eval_(s) * g.eval_(s); }, grad,
                      f.name_ + "*" + g.name_);
  }

  friend Observable operator*(Complex scale, const Observable& f) {
    GradFn grad;
    if (f.has_gradient()) {
      grad = [f, scale](const PhaseState& s) {
        Gradient a = f.grad_(s);
        for (auto& v : a) v *= scale;
        return a;
      };
    }
    return Observable(f.arity_, [f, scale](const PhaseState& s) { return scale * f.eval_(s); }, grad, f.name_);
  }

 private:
  void require_arity(const PhaseState& s) const {
    if (!eval_) throw std::logic_error("Observable: empty evaluator");
    if (s.dim() != arity_) throw std::invalid_argument("Observable: arity does not match phase state");
  }

  int arity_ = 1;
  EvalFn eval_;
  GradFn grad_;
  std::string name_;
};

/// Base relative step of the finite-difference stencils.
inline constexpr double kDefaultBracketStep = 1e-5;

namespace detail {

inline std::string coord_label(std::size_t k) {
  return std::string(k % 2 == 0 ? "x" : "p") + std::to_string(k / 2 + 1);
}

inline Complex checked_eval(const Observable& f, const PhaseState& s, std::size_t k) {
  Complex v;
  try {
    v = f(s);
  } catch (const DomainError& e) {
    throw EvaluationError("partial d/d" + coord_label(k) + " of '" + f.name() + "': " + e.what());
  }
  if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
    throw EvaluationError("non-finite value in partial d/d" + coord_label(k) + " of '" + f.name() + "'");
  }
  return v;
}

}  // namespace detail

/// Central-difference gradient with one Richardson level (steps h and h/2).
///
/// The step for coordinate c is h * max(1, |c|).
inline Gradient estimate_gradient(const Observable& f, const PhaseState& s, double h = kDefaultBracketStep) {
  if (!(h > 0.0)) throw std::invalid_argument("estimate_gradient: step must be positive");
  Gradient grad(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double c = s.coord(k);
    const double step = h * std::max(1.0, std::abs(c));
    auto central = [&](double dh) {
      const Complex fp = detail::checked_eval(f, s.with_coord(k, c + dh), k);
      const Complex fm = detail::checked_eval(f, s.with_coord(k, c - dh), k);
      return (fp - fm) / (2.0 * dh);
    };
    const Complex coarse = central(step);
    const Complex fine = central(0.5 * step);
    grad[k] = (4.0 * fine - coarse) / 3.0;
    if (!std::isfinite(grad[k].real()) || !std::isfinite(grad[k].imag())) {
      throw EvaluationError("non-finite partial d/d" + detail::coord_label(k) + " of '" + f.name() + "'");
    }
  }
  return grad;
}

/// Analytic gradient when the observable has one, otherwise the finite-difference estimate.
inline Gradient gradient_of(const Observable& f, const PhaseState& s, double h = kDefaultBracketStep) {
  if (f.has_gradient()) {
    Gradient g = f.analytic_gradient(s);
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g[k].real()) || !std::isfinite(g[k].imag())) {
        throw EvaluationError("non-finite analytic partial d/d" + detail::coord_label(k) + " of '" + f.name() + "'");
      }
    }
    return g;
  }
  return estimate_gradient(f, s, h);
}

/// {f, g} = sum_i df/dx_i dg/dp_i - df/dp_i dg/dx_i.
inline Complex poisson_bracket(const Observable& f, const Observable& g, const PhaseState& s,
                               double h = kDefaultBracketStep) {
  if (!(h > 0.0)) throw std::invalid_argument("poisson_bracket: step must be positive");
  if (f.arity() != s.dim() || g.arity() != s.dim()) {
    throw std::invalid_argument("poisson_bracket: observable arity does not match phase state");
  }
  const Gradient df = gradient_of(f, s, h);
  const Gradient dg = gradient_of(g, s, h);
  Complex sum{0.0, 0.0};
  for (int i = 0; i < s.dim(); ++i) {
    const auto xi = static_cast<std::size_t>(2 * i), pi = xi + 1;
    sum += df[xi] * dg[pi] - df[pi] * dg[xi];
  }
  return sum;
}

// Elementary observables.

inline Observable position_observable(int arity = 1, int axis = 0) {
  return Observable(
      arity, [axis](const PhaseState& s) { return Complex(s.x(axis)); },
      [axis](const PhaseState& s) {
        Gradient g(s.size(), 0.0);
        g[static_cast<std::size_t>(2 * axis)] = 1.0;
        return g;
      },
      "x" + std::to_string(axis + 1));
}

inline Observable momentum_observable(int arity = 1, int axis = 0) {
  return Observable(
      arity, [axis](const PhaseState& s) { return Complex(s.p(axis)); },
      [axis](const PhaseState& s) {
        Gradient g(s.size(), 0.0);
        g[static_cast<std::size_t>(2 * axis + 1)] = 1.0;
        return g;
      },
      "p" + std::to_string(axis + 1));
}

/// H = p^2/2 + w^2 x^2/2 with analytic gradient.
inline Observable harmonic_hamiltonian(double omega) {
  return Observable(
      1, [omega](const PhaseState& s) { return Complex(0.5 * s.p() * s.p() + 0.5 * omega * omega * s.x() * s.x()); },
      [omega](const PhaseState& s) { return Gradient{omega * omega * s.x(), s.p()}; }, "H_harmonic");
}

}  // namespace ladderlab
