#pragma once

// Independent reference implementations shared by the unit and acceptance
// tests. Deliberately naive.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "asdmeta/tabular.hpp"

namespace oracle {

using asdmeta::kASD;
using asdmeta::Label;
using asdmeta::Matrix;

// Textbook greedy CART: exhaustive scan, exact rational comparison of the
// weighted child impurity, first candidate (lowest feature, then lowest
// threshold) kept on ties.
struct CartNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1, right = -1;
  std::int64_t c0 = 0, c1 = 0;
};

inline int greedy_cart(const Matrix& X, const std::vector<Label>& y, const std::vector<std::size_t>& rows,
                 std::vector<CartNode>& out) {
  int index = static_cast<int>(out.size());
  out.emplace_back();
  std::int64_t c0 = 0, c1 = 0;
  for (auto r : rows) (y[r] == kASD ? c1 : c0)++;
  out[index].c0 = c0;
  out[index].c1 = c1;
  if (c0 == 0 || c1 == 0) return index;

  // Child impurity  n - (S_l/n_l + S_r/n_r)  is minimized by the largest
  // S_l/n_l + S_r/n_r = num/den.
  bool found = false;
  std::int64_t best_num = 0, best_den = 1;
  std::size_t best_f = 0;
  double best_t = 0;
  for (std::size_t f = 0; f < X.cols(); ++f) {
    std::vector<double> values;
    for (auto r : rows) values.push_back(X(r, f));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t v = 0; v + 1 < values.size(); ++v) {
      double t = (values[v] + values[v + 1]) / 2.0;
      std::int64_t l0 = 0, l1 = 0, r0 = 0, r1 = 0;
      for (auto r : rows) {
        bool left = X(r, f) <= t;
        bool asd = y[r] == kASD;
        (left ? (asd ? l1 : l0) : (asd ? r1 : r0))++;
      }
      std::int64_t nl = l0 + l1, nr = r0 + r1;
      std::int64_t num = (l0 * l0 + l1 * l1) * nr + (r0 * r0 + r1 * r1) * nl;
      std::int64_t den = nl * nr;
      if (!found || num * best_den > best_num * den) {
        found = true;
        best_num = num;
        best_den = den;
        best_f = f;
        best_t = t;
      }
    }
  }
  if (!found) return index;
  std::vector<std::size_t> left, right;
  for (auto r : rows) (X(r, best_f) <= best_t ? left : right).push_back(r);
  out[index].feature = static_cast<int>(best_f);
  out[index].threshold = best_t;
  int l = greedy_cart(X, y, left, out);
  int r = greedy_cart(X, y, right, out);
  out[index].left = l;
  out[index].right = r;
  return index;
}

/// Single-pass computational formula in extended precision.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  long double n = static_cast<long double>(x.size());
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    long double a = x[i], b = y[i];
    sx += a;
    sy += b;
    sxx += a * a;
    syy += b * b;
    sxy += a * b;
  }
  long double num = n * sxy - sx * sy;
  long double den = std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  return static_cast<double>(num / den);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double fa, double fm, double fb, double whole, double tol, int depth) {
  double m = (a + b) / 2, lm = (a + m) / 2, rm = (m + b) / 2;
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6 * (fa + 4 * flm + fm);
  double right = (b - m) / 6 * (fm + 4 * frm + fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15 * tol) return left + right + delta / 15;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  double fa = f(a), fb = f(b), fm = f((a + b) / 2);
  return adaptive_simpson(f, a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol, 50);
}

inline double t_density(double t, double df) {
  double log_c = std::lgamma((df + 1) / 2) - std::lgamma(df / 2) - 0.5 * std::log(df * std::numbers::pi);
  return std::exp(log_c - (df + 1) / 2 * std::log1p(t * t / df));
}

/// Two-sided p-value of a sample correlation by quadrature of the t-density.
inline double pearson_p_quadrature(double r, std::size_t n) {
  double df = static_cast<double>(n - 2);
  double t = std::fabs(r) * std::sqrt(df / (1 - r * r));
  double central = integrate([df](double u) { return t_density(u, df); }, 0.0, t, 1e-13);
  return 1.0 - 2.0 * central;
}

}  // namespace oracle
