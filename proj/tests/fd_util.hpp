#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

// Central finite differences, the independent oracle for every analytic
// gradient in the test suite.
namespace fd {

inline double central(const std::function<double(const std::vector<double>&)>& f,
                      std::vector<double> x, std::size_t idx, double h = 1e-4) {
    x[idx] += h;
    const double fp = f(x);
    x[idx] -= 2.0 * h;
    const double fm = f(x);
    return (fp - fm) / (2.0 * h);
}

inline double rel_err(double analytic, const double fd_value) {
    const double denom = std::max({1e-6, std::abs(fd_value), std::abs(analytic)});
    return std::abs(analytic - fd_value) / denom;
}

// Max relative error over a stride-sampled subset of coordinates.
inline double max_rel_err(const std::function<double(const std::vector<double>&)>& f,
                          const std::vector<double>& x, const std::vector<double>& grad,
                          std::size_t max_checks = 64, double h = 1e-4) {
    const std::size_t n = x.size();
    const std::size_t stride = std::max<std::size_t>(1, n / max_checks);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; i += stride)
        worst = std::max(worst, rel_err(grad[i], central(f, x, i, h)));
    return worst;
}

}  // namespace fd
