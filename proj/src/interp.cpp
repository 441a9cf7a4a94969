#include "labor/interp.hpp"

#include <algorithm>
#include <cmath>

#include "labor/errors.hpp"

namespace labor {

const char* to_string(InterpMethod m) {
  switch (m) {
    case InterpMethod::akima: return "akima";
    case InterpMethod::pchip: return "pchip";
    case InterpMethod::linear: return "linear";
  }
  return "linear";
}

namespace {

std::size_t locate(const std::vector<double>& x, double q) {
  // Index i with x[i] <= q <= x[i+1]; callers guarantee q inside [x0, xn].
  auto it = std::upper_bound(x.begin(), x.end(), q);
  std::size_t i = static_cast<std::size_t>(it - x.begin());
  if (i == 0) return 0;
  if (i >= x.size()) return x.size() - 2;
  return i - 1;
}

// Cubic Hermite evaluation given node values and node derivatives.
std::vector<double> hermite_eval(const std::vector<double>& x, const std::vector<double>& y,
                                 const std::vector<double>& d, const std::vector<double>& xq) {
  std::vector<double> out(xq.size());
  for (std::size_t q = 0; q < xq.size(); ++q) {
    std::size_t i = locate(x, xq[q]);
    double h = x[i + 1] - x[i];
    double t = (xq[q] - x[i]) / h;
    double t2 = t * t, t3 = t2 * t;
    double h00 = 2 * t3 - 3 * t2 + 1;
    double h10 = t3 - 2 * t2 + t;
    double h01 = -2 * t3 + 3 * t2;
    double h11 = t3 - t2;
    out[q] = h00 * y[i] + h10 * h * d[i] + h01 * y[i + 1] + h11 * h * d[i + 1];
  }
  return out;
}

}  // namespace

std::vector<double> interp_linear(const std::vector<double>& x, const std::vector<double>& y,
                                  const std::vector<double>& xq) {
  if (x.size() < 2) throw DomainError("linear interpolation needs >= 2 anchors");
  std::vector<double> out(xq.size());
  for (std::size_t q = 0; q < xq.size(); ++q) {
    std::size_t i = locate(x, xq[q]);
    double t = (xq[q] - x[i]) / (x[i + 1] - x[i]);
    out[q] = y[i] + t * (y[i + 1] - y[i]);
  }
  return out;
}

std::vector<double> interp_pchip(const std::vector<double>& x, const std::vector<double>& y,
                                 const std::vector<double>& xq) {
  std::size_t n = x.size();
  if (n < 3) throw DomainError("pchip needs >= 3 anchors");
  std::vector<double> h(n - 1), m(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    m[i] = (y[i + 1] - y[i]) / h[i];
  }
  std::vector<double> d(n, 0.0);
  // Interior: weighted harmonic mean when secants share sign, else 0.
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (m[i - 1] == 0.0 || m[i] == 0.0 || (m[i - 1] > 0) != (m[i] > 0)) {
      d[i] = 0.0;
    } else {
      double w1 = 2 * h[i] + h[i - 1];
      double w2 = h[i] + 2 * h[i - 1];
      d[i] = (w1 + w2) / (w1 / m[i - 1] + w2 / m[i]);
    }
  }
  // Ends: one-sided three-point estimate with the Fritsch-Carlson clamp.
  auto end_slope = [](double h0, double h1, double m0, double m1) {
    double d0 = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if ((d0 > 0) != (m0 > 0) || m0 == 0.0)
      d0 = 0.0;
    else if ((m0 > 0) != (m1 > 0) && std::abs(d0) > 3 * std::abs(m0))
      d0 = 3 * m0;
    return d0;
  };
  d[0] = end_slope(h[0], h[1], m[0], m[1]);
  d[n - 1] = end_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
  return hermite_eval(x, y, d, xq);
}

std::vector<double> interp_akima(const std::vector<double>& x, const std::vector<double>& y,
                                 const std::vector<double>& xq) {
  std::size_t n = x.size();
  if (n < 5) throw DomainError("akima needs >= 5 anchors");
  // Secant slopes with two quadratic-extension ghosts at each end.
  std::vector<double> m(n + 3);
  for (std::size_t i = 0; i + 1 < n; ++i) m[i + 2] = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
  m[1] = 2 * m[2] - m[3];
  m[0] = 2 * m[1] - m[2];
  m[n + 1] = 2 * m[n] - m[n - 1];
  m[n + 2] = 2 * m[n + 1] - m[n];

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    double w1 = std::abs(m[i + 3] - m[i + 2]);
    double w2 = std::abs(m[i + 1] - m[i]);
    if (w1 + w2 == 0.0)
      d[i] = 0.5 * (m[i + 1] + m[i + 2]);  // classical tie rule
    else
      d[i] = (w1 * m[i + 1] + w2 * m[i + 2]) / (w1 + w2);
  }
  return hermite_eval(x, y, d, xq);
}

InterpResult interpolate(const Series& anchors, const std::vector<MonthKey>& grid,
                         InterpMethod method) {
  if (anchors.frequency() != Frequency::annual)
    throw FrequencyError("interpolate: anchors must be an annual series");
  if (anchors.size() < 2) throw DomainError("interpolate: need >= 2 anchors");

  std::vector<double> x, y;
  for (const auto& [k, v] : anchors.points()) {
    x.push_back(static_cast<double>(k.index()));
    y.push_back(v);
  }
  for (MonthKey g : grid) {
    double gi = static_cast<double>(g.index());
    if (gi < x.front() || gi > x.back())
      throw ExtrapolationError("interpolate: grid point " + g.str() + " outside anchor span");
  }

  InterpResult result;
  result.method_used = method;
  if (method == InterpMethod::akima && anchors.size() < 5) {
    result.method_used = anchors.size() >= 3 ? InterpMethod::pchip : InterpMethod::linear;
    result.degraded = true;
  }
  if (result.method_used == InterpMethod::pchip && anchors.size() < 3) {
    result.method_used = InterpMethod::linear;
    result.degraded = true;
  }
  if (method == InterpMethod::pchip && anchors.size() < 3) {
    result.method_used = InterpMethod::linear;
    result.degraded = true;
  }

  std::vector<double> xq;
  xq.reserve(grid.size());
  for (MonthKey g : grid) xq.push_back(static_cast<double>(g.index()));

  std::vector<double> vals;
  switch (result.method_used) {
    case InterpMethod::akima: vals = interp_akima(x, y, xq); break;
    case InterpMethod::pchip: vals = interp_pchip(x, y, xq); break;
    case InterpMethod::linear: vals = interp_linear(x, y, xq); break;
  }
  result.series.set_frequency(Frequency::monthly);
  for (std::size_t i = 0; i < grid.size(); ++i) result.series.set(grid[i], vals[i]);
  return result;
}

}  // namespace labor
