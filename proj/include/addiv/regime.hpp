#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "common.hpp"
#include "data.hpp"

namespace addiv {

// Empirical quantile with linear interpolation between order statistics.
inline double empirical_quantile(std::vector<double> v, double q) {
  if (v.empty()) throw InvalidArgument("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// One period of a treatment regime: a fixed level, the natural (observed) treatment, or a
// threshold on one history coordinate. A threshold rule assigns level 1 when the coordinate
// lies on the named side of its cutpoint and level 0 otherwise.
struct RegimeRule {
  enum class Kind { Level, Natural, Threshold };
  Kind kind = Kind::Natural;
  int level = 0;
  std::string coordinate;
  double quantile = 0.5;
  bool below = true;

  static RegimeRule fixed(int a) {
    RegimeRule r;
    r.kind = Kind::Level;
    r.level = a;
    return r;
  }
  static RegimeRule natural() { return {}; }
  static RegimeRule threshold(std::string coordinate, double q, bool below) {
    if (!(q > 0.0 && q < 1.0)) throw InvalidArgument("threshold quantile must lie in (0, 1)");
    RegimeRule r;
    r.kind = Kind::Threshold;
    r.coordinate = std::move(coordinate);
    r.quantile = q;
    r.below = below;
    return r;
  }

  // "1", "x" (natural), "below:l1_0:0.8", "above:l1_0:0.2".
  static RegimeRule parse(const std::string& s) {
    if (s == "x" || s == "X" || s == "natural") return natural();
    if (s.rfind("below:", 0) == 0 || s.rfind("above:", 0) == 0) {
      const auto c2 = s.find(':', 6);
      if (c2 == std::string::npos) throw InvalidArgument("bad threshold rule '" + s + "', expected below:<column>:<quantile>");
      double q = 0.0;
      try {
        std::size_t used = 0;
        q = std::stod(s.substr(c2 + 1), &used);
        if (used != s.size() - c2 - 1) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw InvalidArgument("bad threshold quantile in rule '" + s + "'");
      }
      return threshold(s.substr(6, c2 - 6), q, s[0] == 'b');
    }
    try {
      std::size_t used = 0;
      const int a = std::stoi(s, &used);
      if (used == s.size() && a >= 0) return fixed(a);
    } catch (const std::exception&) {
    }
    throw InvalidArgument("bad regime rule '" + s + "', expected a level, 'x', or below:/above:<column>:<quantile>");
  }

  std::string describe(int t) const {
    switch (kind) {
      case Kind::Level: return std::to_string(level);
      case Kind::Natural: return "A" + std::to_string(t);
      case Kind::Threshold:
        return std::string(below ? "below:" : "above:") + coordinate + ":" + format_quantile();
    }
    return {};
  }

private:
  std::string format_quantile() const {
    std::string s = std::to_string(quantile);
    while (s.size() > 1 && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  }
};

struct Regime {
  std::vector<RegimeRule> rules;

  static Regime fixed(const std::vector<int>& levels) {
    Regime r;
    for (int a : levels) r.rules.push_back(RegimeRule::fixed(a));
    return r;
  }

  // Comma-separated rules, one per period: "0,1", "x,1", "x,below:l1_0:0.8".
  static Regime parse(const std::string& s) {
    Regime r;
    std::string cur;
    for (char c : s + ",") {
      if (c == ',') {
        if (cur.empty()) throw InvalidArgument("empty rule in regime '" + s + "'");
        r.rules.push_back(RegimeRule::parse(cur));
        cur.clear();
      } else if (c != ' ' && c != '(' && c != ')') {
        cur += c;
      }
    }
    return r;
  }

  int horizon() const { return static_cast<int>(rules.size()) - 1; }

  bool is_static() const {
    return std::all_of(rules.begin(), rules.end(), [](const RegimeRule& r) { return r.kind == RegimeRule::Kind::Level; });
  }

  std::vector<int> levels() const {
    std::vector<int> out;
    for (const auto& r : rules) out.push_back(r.level);
    return out;
  }

  std::string describe() const {
    std::string out = "(";
    for (std::size_t t = 0; t < rules.size(); ++t) out += (t ? "," : "") + rules[t].describe(static_cast<int>(t));
    return out + ")";
  }
};

// A rule made concrete on one training fold: threshold cutpoints are training-fold quantiles.
struct FittedRule {
  RegimeRule rule;
  Index column = -1;
  double cut = 0.0;

  int apply(double coordinate_value, int observed) const {
    switch (rule.kind) {
      case RegimeRule::Kind::Level: return rule.level;
      case RegimeRule::Kind::Natural: return observed;
      case RegimeRule::Kind::Threshold:
        return (rule.below ? coordinate_value < cut : coordinate_value > cut) ? 1 : 0;
    }
    return observed;
  }

  // I{A_t = g_t(H_t)} on every row.
  Eigen::VectorXd indicator(const Eigen::MatrixXd& h, const Eigen::VectorXd& a) const {
    Eigen::VectorXd d(a.size());
    for (Index i = 0; i < a.size(); ++i) {
      const int observed = static_cast<int>(a(i));
      d(i) = observed == apply(column >= 0 ? h(i, column) : 0.0, observed) ? 1.0 : 0.0;
    }
    return d;
  }
};

inline Index history_column(const std::vector<std::string>& names, const std::string& coordinate, int t) {
  const auto it = std::find(names.begin(), names.end(), coordinate);
  if (it == names.end()) {
    std::string avail;
    for (const auto& n : names) avail += (avail.empty() ? "" : ", ") + n;
    throw InvalidArgument("regime rule at t=" + std::to_string(t) + " references '" + coordinate +
                          "', not in the history (available: " + avail + ")");
  }
  return static_cast<Index>(it - names.begin());
}

inline FittedRule fit_rule(const RegimeRule& rule, const std::vector<std::string>& names, const Eigen::MatrixXd& h,
                           const Rows& train, int t) {
  FittedRule f{rule, -1, 0.0};
  if (rule.kind != RegimeRule::Kind::Threshold) return f;
  f.column = history_column(names, rule.coordinate, t);
  std::vector<double> v;
  v.reserve(train.size());
  for (Index i : train) v.push_back(h(i, f.column));
  f.cut = empirical_quantile(std::move(v), rule.quantile);
  return f;
}

inline void validate_regime(const Regime& regime, const PanelDataset& data) {
  if (regime.horizon() != data.horizon())
    throw InvalidArgument("regime has " + std::to_string(regime.rules.size()) + " periods, data has " +
                          std::to_string(data.horizon() + 1));
  for (int t = 0; t <= data.horizon(); ++t) {
    const auto& r = regime.rules[static_cast<std::size_t>(t)];
    if (r.kind == RegimeRule::Kind::Level && (r.level < 0 || r.level >= data.treatment_levels(t)))
      throw InvalidArgument("regime level " + std::to_string(r.level) + " invalid at t=" + std::to_string(t));
    if (r.kind == RegimeRule::Kind::Threshold) {
      if (data.treatment_levels(t) != 2)
        throw InvalidArgument("threshold rules need a binary treatment at t=" + std::to_string(t));
      history_column(data.history_names(t), r.coordinate, t);
    }
  }
}

}  // namespace addiv
