#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace addiv {

// Clamped cubic B-spline basis on [lo, hi] with the given interior knots.
class CubicBSpline {
public:
  CubicBSpline() = default;
  CubicBSpline(double lo, double hi, std::vector<double> interior) : lo_(lo), hi_(hi) {
    for (int r = 0; r < 4; ++r) t_.push_back(lo);
    for (double k : interior)
      if (k > lo && k < hi && (t_.size() == 4 || k > t_.back())) t_.push_back(k);
    for (int r = 0; r < 4; ++r) t_.push_back(hi);
  }

  // Interior knots at empirical quantiles; duplicates collapse.
  static CubicBSpline at_quantiles(const Eigen::VectorXd& x, int interior) {
    std::vector<double> v(x.data(), x.data() + x.size());
    std::sort(v.begin(), v.end());
    const double lo = v.front(), hi = v.back();
    std::vector<double> knots;
    for (int k = 1; k <= interior; ++k) {
      const double pos = static_cast<double>(k) / (interior + 1) * static_cast<double>(v.size() - 1);
      const auto i = static_cast<std::size_t>(std::floor(pos));
      const double frac = pos - static_cast<double>(i);
      const double q = i + 1 < v.size() ? v[i] * (1 - frac) + v[i + 1] * frac : v[i];
      knots.push_back(q);
    }
    return CubicBSpline(lo, hi, knots);
  }

  int size() const { return static_cast<int>(t_.size()) - 4; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<double>& knots() const { return t_; }

  // Basis values (deriv = 0) or derivatives (deriv = 1, 2) at x, clamped into [lo, hi].
  Eigen::VectorXd eval(double x, int deriv = 0) const {
    x = std::clamp(x, lo_, hi_);
    const int m = static_cast<int>(t_.size());
    // Degree-0 indicator on the half-open span containing x; the right end uses the last span.
    std::vector<double> n0(static_cast<std::size_t>(m - 1), 0.0);
    int span = -1;
    for (int i = 0; i < m - 1; ++i)
      if (t_[i] < t_[i + 1] && x >= t_[i] && x < t_[i + 1]) span = i;
    if (span < 0)
      for (int i = m - 2; i >= 0; --i)
        if (t_[i] < t_[i + 1]) {
          span = i;
          break;
        }
    n0[static_cast<std::size_t>(span)] = 1.0;
    std::vector<std::vector<double>> table{n0};
    for (int p = 1; p <= 3; ++p) {
      const auto& prev = table.back();
      std::vector<double> cur(static_cast<std::size_t>(m - 1 - p), 0.0);
      for (int i = 0; i < m - 1 - p; ++i) {
        double v = 0.0;
        const double d1 = t_[i + p] - t_[i], d2 = t_[i + p + 1] - t_[i + 1];
        if (d1 > 0) v += (x - t_[i]) / d1 * prev[static_cast<std::size_t>(i)];
        if (d2 > 0) v += (t_[i + p + 1] - x) / d2 * prev[static_cast<std::size_t>(i + 1)];
        cur[static_cast<std::size_t>(i)] = v;
      }
      table.push_back(std::move(cur));
    }
    // Differentiate: d/dx N_{i,p} = p (N_{i,p-1}/(t_{i+p}-t_i) - N_{i+1,p-1}/(t_{i+p+1}-t_{i+1})).
    std::vector<double> cur = table[static_cast<std::size_t>(3 - deriv)];
    for (int p = 3 - deriv + 1; p <= 3; ++p) {
      std::vector<double> next(static_cast<std::size_t>(m - 1 - p), 0.0);
      for (int i = 0; i < m - 1 - p; ++i) {
        double v = 0.0;
        const double d1 = t_[i + p] - t_[i], d2 = t_[i + p + 1] - t_[i + 1];
        if (d1 > 0) v += cur[static_cast<std::size_t>(i)] / d1;
        if (d2 > 0) v -= cur[static_cast<std::size_t>(i + 1)] / d2;
        next[static_cast<std::size_t>(i)] = p * v;
      }
      cur = std::move(next);
    }
    return Eigen::Map<Eigen::VectorXd>(cur.data(), static_cast<Eigen::Index>(cur.size()));
  }

  // Gram matrix of second derivatives: integral over [lo, hi] of B_i'' B_j''.
  Eigen::MatrixXd curvature_penalty() const {
    const int k = size();
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(k, k);
    const double g = 1.0 / std::sqrt(3.0);
    for (std::size_t i = 0; i + 1 < t_.size(); ++i) {
      const double a = t_[i], b = t_[i + 1];
      if (!(b > a)) continue;
      const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
      for (double node : {mid - half * g, mid + half * g}) {
        const Eigen::VectorXd d2 = eval(node, 2);
        s.noalias() += half * d2 * d2.transpose();
      }
    }
    return s;
  }

private:
  double lo_ = 0.0, hi_ = 1.0;
  std::vector<double> t_;
};

}  // namespace addiv
