#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace ladderlab {

/// Dense univariate polynomial, coefficients stored lowest degree first.
template <typename T>
class Polynomial {
 public:
  Polynomial() : coeffs_{T{0}} {}
  explicit Polynomial(std::vector<T> ascending) : coeffs_(std::move(ascending)) {
    if (coeffs_.empty()) coeffs_.push_back(T{0});
  }
  Polynomial(std::initializer_list<T> ascending) : Polynomial(std::vector<T>(ascending)) {}

  static Polynomial from_highest_first(std::span<const T> coeffs) {
    return Polynomial(std::vector<T>(coeffs.rbegin(), coeffs.rend()));
  }

  /// kappa * prod_i (E - root_i).
  static Polynomial from_roots(std::span<const double> roots, T kappa = T{1}) {
    std::vector<T> c{kappa};
    for (double r : roots) {
      std::vector<T> next(c.size() + 1, T{0});
      for (std::size_t k = 0; k < c.size(); ++k) {
        next[k + 1] += c[k];
        next[k] -= c[k] * r;
      }
      c = std::move(next);
    }
    return Polynomial(std::move(c));
  }

  std::size_t degree() const noexcept { return coeffs_.size() - 1; }
  const std::vector<T>& coefficients() const noexcept { return coeffs_; }
  T operator[](std::size_t k) const { return k < coeffs_.size() ? coeffs_[k] : T{0}; }
  T leading() const { return coeffs_.back(); }

  template <typename U>
  auto operator()(U x) const {
    using R = decltype(T{} * x);
    R acc{0};
    for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * x + *it;
    return acc;
  }

  /// Sum of |c_k| |x|^k, the natural scale for judging a residual p(x).
  double magnitude_at(double x) const {
    double acc = 0.0;
    const double ax = std::abs(x);
    for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * ax + std::abs(*it);
    return acc;
  }

  Polynomial derivative(std::size_t times = 1) const {
    std::vector<T> c = coeffs_;
    for (std::size_t t = 0; t < times; ++t) {
      if (c.size() == 1) return Polynomial();
      std::vector<T> d(c.size() - 1);
      for (std::size_t k = 1; k < c.size(); ++k) d[k - 1] = c[k] * static_cast<double>(k);
      c = std::move(d);
    }
    return Polynomial(std::move(c));
  }

  /// Drops exactly-zero leading coefficients.
  Polynomial trimmed() const {
    std::vector<T> c = coeffs_;
    while (c.size() > 1 && c.back() == T{0}) c.pop_back();
    return Polynomial(std::move(c));
  }

  friend Polynomial operator+(const Polynomial& a, const Polynomial& b) {
    std::vector<T> c(std::max(a.coeffs_.size(), b.coeffs_.size()), T{0});
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = a[k] + b[k];
    return Polynomial(std::move(c));
  }
  friend Polynomial operator-(const Polynomial& a, const Polynomial& b) {
    std::vector<T> c(std::max(a.coeffs_.size(), b.coeffs_.size()), T{0});
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = a[k] - b[k];
    return Polynomial(std::move(c));
  }
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    std::vector<T> c(a.coeffs_.size() + b.coeffs_.size() - 1, T{0});
    for (std::size_t i = 0; i < a.coeffs_.size(); ++i)
      for (std::size_t j = 0; j < b.coeffs_.size(); ++j) c[i + j] += a.coeffs_[i] * b.coeffs_[j];
    return Polynomial(std::move(c));
  }
  friend Polynomial operator*(T s, const Polynomial& a) {
    std::vector<T> c = a.coeffs_;
    for (auto& v : c) v *= s;
    return Polynomial(std::move(c));
  }

 private:
  std::vector<T> coeffs_;
};

/// e_0..e_n of the given values (e_0 = 1).
inline std::vector<double> elementary_symmetric(std::span<const double> values) {
  std::vector<double> e(values.size() + 1, 0.0);
  e[0] = 1.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t k = i + 1; k >= 1; --k) e[k] += e[k - 1] * values[i];
  }
  return e;
}

/// G(V, x) = sum_{k,j} c[k][j] V^k x^j. The eliminants that define the potential branches.
class BivariatePolynomial {
 public:
  BivariatePolynomial(std::size_t v_degree, std::size_t x_degree)
      : coeffs_(v_degree + 1, std::vector<double>(x_degree + 1, 0.0)) {}

  double& at(std::size_t k, std::size_t j) { return coeffs_.at(k).at(j); }
  double at(std::size_t k, std::size_t j) const { return coeffs_.at(k).at(j); }
  std::size_t v_degree() const noexcept { return coeffs_.size() - 1; }
  std::size_t x_degree() const noexcept { return coeffs_.front().size() - 1; }

  /// G(., x) as a polynomial in V.
  Polynomial<double> in_v(double x) const {
    std::vector<double> c(coeffs_.size());
    for (std::size_t k = 0; k < coeffs_.size(); ++k) c[k] = horner(coeffs_[k], x);
    return Polynomial<double>(std::move(c));
  }

  /// sum_j |c_kj| |x|^j per power of V: the term magnitudes behind in_v(x).
  Polynomial<double> magnitude_in_v(double x) const {
    std::vector<double> c(coeffs_.size());
    for (std::size_t k = 0; k < coeffs_.size(); ++k) {
      double acc = 0.0;
      for (auto it = coeffs_[k].rbegin(); it != coeffs_[k].rend(); ++it) acc = acc * std::abs(x) + std::abs(*it);
      c[k] = acc;
    }
    return Polynomial<double>(std::move(c));
  }

  /// dG/dx (., x) as a polynomial in V.
  Polynomial<double> dx_in_v(double x) const {
    std::vector<double> c(coeffs_.size());
    for (std::size_t k = 0; k < coeffs_.size(); ++k) {
      const auto& row = coeffs_[k];
      double acc = 0.0;
      for (std::size_t j = row.size() - 1; j >= 1; --j) acc = acc * x + row[j] * static_cast<double>(j);
      c[k] = acc;
    }
    return Polynomial<double>(std::move(c));
  }

 private:
  static double horner(const std::vector<double>& row, double x) {
    double acc = 0.0;
    for (auto it = row.rbegin(); it != row.rend(); ++it) acc = acc * x + *it;
    return acc;
  }

  std::vector<std::vector<double>> coeffs_;
};

}  // namespace ladderlab
