#pragma once

// Test-side reference implementations, deliberately independent of the
// library's computation paths.

#include <cmath>
#include <functional>
#include <vector>

#include "bood/tensor.hpp"

namespace oracles {

// Plain six-loop cross-correlation, NHWC / [kh,kw,C,F].
inline bood::Tensor<double> conv_reference(const bood::Tensor<double>& x,
                                           const bood::Tensor<double>& w, int stride,
                                           bool same_pad) {
  const int B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
  const int kh = w.shape[0], kw = w.shape[1], F = w.shape[3];
  int OH, OW, pt = 0, pl = 0;
  if (same_pad) {
    OH = (H + stride - 1) / stride;
    OW = (W + stride - 1) / stride;
    pt = std::max((OH - 1) * stride + kh - H, 0) / 2;
    pl = std::max((OW - 1) * stride + kw - W, 0) / 2;
  } else {
    OH = (H - kh) / stride + 1;
    OW = (W - kw) / stride + 1;
  }
  bood::Tensor<double> out({B, OH, OW, F});
  for (int b = 0; b < B; ++b)
    for (int oy = 0; oy < OH; ++oy)
      for (int ox = 0; ox < OW; ++ox)
        for (int f = 0; f < F; ++f) {
          double acc = 0;
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx)
              for (int c = 0; c < C; ++c) {
                const int iy = oy * stride - pt + ky;
                const int ix = ox * stride - pl + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x.data[((static_cast<std::size_t>(b) * H + iy) * W + ix) * C + c] *
                       w.data[((static_cast<std::size_t>(ky) * kw + kx) * C + c) * F + f];
              }
          out.data[((static_cast<std::size_t>(b) * OH + oy) * OW + ox) * F + f] = acc;
        }
  return out;
}

// Central finite difference of a scalar function of one coordinate.
inline double central_diff(const std::function<double()>& eval, double& param, double h) {
  const double orig = param;
  param = orig + h;
  const double fp = eval();
  param = orig - h;
  const double fm = eval();
  param = orig;
  return (fp - fm) / (2.0 * h);
}

// Adaptive Simpson quadrature.
inline double simpson(const std::function<double(double)>& f, double a, double b, double fa,
                      double fb, double fm, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson(f, a, m, fa, fm, flm, left, tol / 2, depth - 1) +
         simpson(f, m, b, fm, fb, frm, right, tol / 2, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-11) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4 * fm + fb);
  return simpson(f, a, b, fa, fb, fm, whole, tol, 28);
}

// KL( N(mu, sigma^2) || N(0,1) ) by numerical integration of q log(q/p),
// with the log-ratio expanded in log space so density underflow at the
// interval ends cannot poison the sum.
inline double kl_by_quadrature(double mu, double sigma) {
  const double log_norm_q = -std::log(sigma * std::sqrt(2.0 * M_PI));
  const double log_norm_p = -std::log(std::sqrt(2.0 * M_PI));
  auto integrand = [&](double w) {
    const double z = (w - mu) / sigma;
    const double log_q = -0.5 * z * z + log_norm_q;
    const double log_p = -0.5 * w * w + log_norm_p;
    return std::exp(log_q) * (log_q - log_p);
  };
  const double lo = mu - 14.0 * sigma, hi = mu + 14.0 * sigma;
  return integrate(integrand, lo, hi, 1e-11);
}

// Exhaustive nearest-rank-above percentile: smallest sample value v such
// that at least ceil((1-alpha)*m) sample values are <= v.
inline double percentile_by_rank_check(std::vector<double> sample, double alpha) {
  std::sort(sample.begin(), sample.end());
  const std::size_t m = sample.size();
  std::size_t need = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(m)));
  if (need < 1) need = 1;
  for (double v : sample) {
    std::size_t at_or_below = 0;
    for (double u : sample)
      if (u <= v) ++at_or_below;
    if (at_or_below >= need) return v;
  }
  return sample.back();
}

// Spearman rank correlation straight from the definition (average ranks,
// then Pearson on ranks) — written independently of the library version.
inline double spearman_reference(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t less = 0, equal = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (v[j] < v[i]) ++less;
        if (v[j] == v[i]) ++equal;
      }
      r[i] = less + 0.5 * (equal + 1);
    }
    return r;
  };
  auto rx = ranks(x), ry = ranks(y);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= rx.size();
  my /= ry.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace oracles
