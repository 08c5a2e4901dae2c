#pragma once

#include <cmath>
#include <functional>
#include <limits>

namespace mecor {

struct ScalarMaxResult {
  double x = 0.0;
  double fx = -std::numeric_limits<double>::infinity();
  int evaluations = 0;
};

// Bracketed scalar maximization on [lo, hi] by Brent's method
// (golden-section steps with parabolic interpolation when stable).
// The objective may return -inf on part of the interval; such points
// simply never become the incumbent. Terminates when the bracket is
// within 2*xtol of the incumbent.
template <typename F>
ScalarMaxResult maximize_scalar(F&& f, double lo, double hi, double xtol,
                                int max_iter = 200) {
  const double golden = 0.5 * (3.0 - std::sqrt(5.0));
  ScalarMaxResult res;

  auto eval = [&](double x) {
    ++res.evaluations;
    double v = f(x);
    return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
  };

  double a = lo, b = hi;
  double x = a + golden * (b - a);
  double w = x, v = x;
  double fx = eval(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;

  for (int iter = 0; iter < max_iter; ++iter) {
    const double m = 0.5 * (a + b);
    const double tol1 = xtol;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - m) <= tol2 - 0.5 * (b - a)) break;

    bool use_golden = true;
    if (std::abs(e) > tol1 && std::isfinite(fx) && std::isfinite(fw) && std::isfinite(fv)) {
      // Parabola through (x,fx), (w,fw), (v,fv).
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double pnum = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) pnum = -pnum;
      q = std::abs(q);
      const double e_prev = e;
      e = d;
      if (std::abs(pnum) < std::abs(0.5 * q * e_prev) && pnum > q * (a - x) &&
          pnum < q * (b - x)) {
        d = pnum / q;
        double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = (x < m) ? tol1 : -tol1;
        use_golden = false;
      }
    }
    if (use_golden) {
      e = (x < m) ? b - x : a - x;
      d = golden * e;
    }

    const double u = (std::abs(d) >= tol1) ? x + d : x + (d > 0 ? tol1 : -tol1);
    const double fu = eval(u);

    if (fu >= fx) {
      if (u < x) b = x; else a = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu >= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu >= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }

  res.x = x;
  res.fx = fx;
  return res;
}

}  // namespace mecor
