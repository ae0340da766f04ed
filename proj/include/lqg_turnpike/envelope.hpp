// Exponential envelope fits g(t) ~ K (e^{-lambda t} + e^{-lambda (T-t)}) and
// small statistics helpers.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace lqgtp {

enum class Branch { left, right, two_sided };

inline const char* branch_name(Branch b) {
  switch (b) {
    case Branch::left: return "left";
    case Branch::right: return "right";
    default: return "two-sided";
  }
}

enum class FitStatus { ok, fit_fail, degenerate, exact_zero };

inline const char* fit_status_name(FitStatus s) {
  switch (s) {
    case FitStatus::ok: return "ok";
    case FitStatus::fit_fail: return "fit-fail";
    case FitStatus::degenerate: return "degenerate";
    default: return "exact-zero";
  }
}

struct DecayFit {
  FitStatus status = FitStatus::degenerate;
  Branch branch = Branch::left;
  double Khat = 0.0;
  double lambdahat = 0.0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  double rms = 0.0;       // log space
  std::size_t points = 0;
  double Kenv = 0.0;      // smallest K making the two-sided envelope dominate g on the window

  bool ok() const { return status == FitStatus::ok; }
};

inline constexpr double kZeroFloor = 1e-30;
inline constexpr double kExactZeroRel = 1e-14;
inline constexpr std::size_t kMinFitPoints = 8;

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double rms = 0.0;
};

inline LineFit least_squares_line(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  LineFit f;
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  double ss = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = y[k] - (f.intercept + f.slope * x[k]);
    ss += r * r;
  }
  f.rms = std::sqrt(ss / n);
  return f;
}

inline double two_sided_shape(double lambda, double t, double T) {
  return std::exp(-lambda * t) + std::exp(-lambda * (T - t));
}

/// Fits one branch or the sum model. `reference` sets the scale for the
/// exact-zero test (max g <= 1e-14 * reference).
inline DecayFit fit_envelope(const std::vector<double>& t, const std::vector<double>& g, double T, Branch branch,
                             double reference = 1.0) {
  DecayFit fit;
  fit.branch = branch;
  double gmax = 0.0;
  for (double v : g) gmax = std::max(gmax, std::abs(v));
  if (gmax <= kExactZeroRel * reference) {
    fit.status = FitStatus::exact_zero;
    return fit;
  }
  switch (branch) {
    case Branch::left: fit.window_lo = 0.05 * T, fit.window_hi = 0.45 * T; break;
    case Branch::right: fit.window_lo = 0.55 * T, fit.window_hi = 0.95 * T; break;
    default: fit.window_lo = 0.05 * T, fit.window_hi = 0.95 * T; break;
  }
  const double eps = 1e-12 * T;
  std::vector<double> ts, logs;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < fit.window_lo - eps || t[k] > fit.window_hi + eps) continue;
    if (!(g[k] > kZeroFloor)) continue;
    ts.push_back(t[k]);
    logs.push_back(std::log(g[k]));
  }
  fit.points = ts.size();
  if (ts.size() < kMinFitPoints) {
    fit.status = FitStatus::degenerate;
    return fit;
  }

  auto finish = [&](double K, double lambda) {
    fit.Khat = K;
    fit.lambdahat = lambda;
    double ss = 0.0, kenv = 0.0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const double shape = two_sided_shape(lambda, ts[k], T);
      const double r = logs[k] - std::log(K * shape);
      ss += r * r;
      kenv = std::max(kenv, std::exp(logs[k]) / shape);
    }
    fit.rms = std::sqrt(ss / static_cast<double>(ts.size()));
    fit.Kenv = kenv;
    fit.status = (lambda > 0.0 && std::isfinite(lambda) && std::isfinite(K)) ? FitStatus::ok : FitStatus::fit_fail;
  };

  if (branch == Branch::left || branch == Branch::right) {
    std::vector<double> x(ts.size());
    for (std::size_t k = 0; k < ts.size(); ++k) x[k] = branch == Branch::left ? ts[k] : T - ts[k];
    const auto lf = least_squares_line(x, logs);
    finish(std::exp(lf.intercept), -lf.slope);
    fit.rms = lf.rms;
    return fit;
  }

  // Sum model: log K is closed-form for fixed lambda; lambda by golden section.
  auto profile = [&](double lambda, double& logK) {
    double s = 0.0;
    for (std::size_t k = 0; k < ts.size(); ++k) s += logs[k] - std::log(two_sided_shape(lambda, ts[k], T));
    logK = s / static_cast<double>(ts.size());
    double ss = 0.0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const double r = logs[k] - logK - std::log(two_sided_shape(lambda, ts[k], T));
      ss += r * r;
    }
    return ss;
  };
  const auto left = fit_envelope(t, g, T, Branch::left, reference);
  const auto right = fit_envelope(t, g, T, Branch::right, reference);
  double init = 0.0;
  int cnt = 0;
  for (const auto* f : {&left, &right})
    if (f->ok()) init += f->lambdahat, ++cnt;
  if (cnt == 0) init = 1.0 / T;
  else init /= cnt;
  double a = init / 8.0, b = init * 8.0;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double logK = 0.0;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = profile(c, logK), fd = profile(d, logK);
  for (int it = 0; it < 200 && (b - a) > 1e-12 * init; ++it) {
    if (fc < fd) {
      b = d, d = c, fd = fc;
      c = b - phi * (b - a);
      fc = profile(c, logK);
    } else {
      a = c, c = d, fc = fd;
      d = a + phi * (b - a);
      fd = profile(d, logK);
    }
  }
  const double lambda = 0.5 * (a + b);
  profile(lambda, logK);
  finish(std::exp(logK), lambda);
  return fit;
}

/// Branch selection: a side counts as present when the series near that end
/// exceeds 100x its mid-horizon minimum.
inline Branch detect_branch(const std::vector<double>& t, const std::vector<double>& g, double T, bool& any) {
  double mid = std::numeric_limits<double>::infinity();
  double at_left = 0.0, at_right = 0.0;
  double best_l = std::numeric_limits<double>::infinity(), best_r = best_l;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] >= 0.4 * T && t[k] <= 0.6 * T) mid = std::min(mid, g[k]);
    if (std::abs(t[k] - 0.05 * T) < best_l) best_l = std::abs(t[k] - 0.05 * T), at_left = g[k];
    if (std::abs(t[k] - 0.95 * T) < best_r) best_r = std::abs(t[k] - 0.95 * T), at_right = g[k];
  }
  const double floor = std::max(mid, kZeroFloor);
  const bool l = at_left > 100.0 * floor;
  const bool r = at_right > 100.0 * floor;
  any = l || r;
  if (l && r) return Branch::two_sided;
  return l ? Branch::left : Branch::right;
}

/// Average ranks with ties (|a-b| <= tol) sharing their mean rank.
inline std::vector<double> ranks(const std::vector<double>& v, double tol = 1e-9) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && std::abs(v[idx[j + 1]] - v[idx[i]]) <= tol * std::max(1.0, std::abs(v[idx[i]]))) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

/// Spearman rank correlation; 0 when either series is constant.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x), ry = ranks(y);
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace lqgtp
