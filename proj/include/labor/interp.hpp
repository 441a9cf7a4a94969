#pragma once

#include <string>
#include <vector>

#include "labor/series.hpp"

namespace labor {

enum class InterpMethod { akima, pchip, linear };

const char* to_string(InterpMethod m);

struct InterpResult {
  Series series;              // monthly, values at the requested grid
  InterpMethod method_used;   // after graceful degradation
  bool degraded = false;
};

// Interpolates annual anchors onto a monthly grid. Anchors sit at their
// month-12 sentinel positions on the month axis. Needs >= 5 anchors for
// Akima and >= 3 for PCHIP; with fewer the method degrades (akima -> pchip
// -> linear) and the result records it. The grid must lie inside the anchor
// span; extrapolation is refused.
InterpResult interpolate(const Series& anchors, const std::vector<MonthKey>& grid,
                         InterpMethod method);

// Scalar interpolators on arbitrary abscissae, used by interpolate() and by
// tests that probe construction details directly.
std::vector<double> interp_linear(const std::vector<double>& x, const std::vector<double>& y,
                                  const std::vector<double>& xq);
// Fritsch-Carlson slope-limited Hermite; monotone on monotone segments.
std::vector<double> interp_pchip(const std::vector<double>& x, const std::vector<double>& y,
                                 const std::vector<double>& xq);
// Classical Akima (1970) weights with the tie rule s_i = (m_{i-1}+m_i)/2
// when both weights vanish.
std::vector<double> interp_akima(const std::vector<double>& x, const std::vector<double>& y,
                                 const std::vector<double>& xq);

}  // namespace labor
