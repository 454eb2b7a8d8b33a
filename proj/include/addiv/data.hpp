#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace addiv {

using Index = Eigen::Index;
using Rows = std::vector<Index>;

struct PointSample {
  Eigen::VectorXd z;
  int a = 0;
  double y = 0.0;
  Eigen::VectorXd l;
};

// Column-typed point-exposure data. treatment_levels == 0 marks a continuous treatment.
class PointDataset {
public:
  PointDataset() = default;

  PointDataset(Eigen::MatrixXd z, Eigen::VectorXd a, Eigen::VectorXd y, Eigen::MatrixXd l,
               int treatment_levels)
      : z_(std::move(z)), a_(std::move(a)), y_(std::move(y)), l_(std::move(l)),
        levels_(treatment_levels) {
    validate();
  }

  static PointDataset from_samples(const std::vector<PointSample>& samples, int treatment_levels) {
    if (samples.empty()) throw DataError("dataset must contain at least one sample");
    const Index n = static_cast<Index>(samples.size());
    const Index p = samples[0].z.size(), q = samples[0].l.size();
    Eigen::MatrixXd z(n, p), l(n, q);
    Eigen::VectorXd a(n), y(n);
    for (Index i = 0; i < n; ++i) {
      const auto& s = samples[static_cast<std::size_t>(i)];
      if (s.z.size() != p || s.l.size() != q)
        throw DataError("sample " + std::to_string(i) + " has inconsistent dimensions");
      z.row(i) = s.z.transpose();
      l.row(i) = s.l.transpose();
      a(i) = s.a;
      y(i) = s.y;
    }
    return PointDataset(std::move(z), std::move(a), std::move(y), std::move(l), treatment_levels);
  }

  Index n() const { return y_.size(); }
  Index z_dim() const { return z_.cols(); }
  Index l_dim() const { return l_.cols(); }
  int treatment_levels() const { return levels_; }
  bool continuous_treatment() const { return levels_ == 0; }

  const Eigen::MatrixXd& z() const { return z_; }
  const Eigen::VectorXd& a() const { return a_; }
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::MatrixXd& l() const { return l_; }
  int level(Index i) const { return static_cast<int>(a_(i)); }

  Eigen::VectorXd indicator(int level) const {
    return (a_.array() == static_cast<double>(level)).cast<double>().matrix();
  }

  PointSample sample(Index i) const {
    return PointSample{z_.row(i).transpose(), level(i), y_(i), l_.row(i).transpose()};
  }

  PointDataset subset(const Rows& rows) const {
    PointDataset out;
    out.z_ = z_(rows, Eigen::all);
    out.l_ = l_(rows, Eigen::all);
    out.a_ = a_(rows);
    out.y_ = y_(rows);
    out.levels_ = levels_;
    out.level_labels = level_labels;
    if (latent_u) out.latent_u = Eigen::VectorXd((*latent_u)(rows));
    return out;
  }

  PointDataset with_outcome(Eigen::VectorXd y) const {
    PointDataset out = *this;
    out.y_ = std::move(y);
    out.validate();
    return out;
  }

  PointDataset with_instrument(Eigen::MatrixXd z) const {
    PointDataset out = *this;
    out.z_ = std::move(z);
    out.validate();
    return out;
  }

  std::vector<std::string> level_labels;
  std::vector<std::string> warnings;
  std::optional<Eigen::VectorXd> latent_u;

private:
  void validate() {
    const Index n = y_.size();
    if (n < 1) throw DataError("dataset must contain at least one sample");
    if (z_.rows() != n || a_.size() != n || l_.rows() != n)
      throw DataError("column lengths disagree");
    if (z_.cols() < 1) throw DataError("instrument dimension must be at least 1");
    if (levels_ < 0) throw DataError("treatment_levels must be non-negative");
    for (Index i = 0; i < n; ++i) {
      if (!std::isfinite(y_(i)) || !std::isfinite(a_(i)) || !z_.row(i).allFinite() ||
          !l_.row(i).allFinite())
        throw DataError("row " + std::to_string(i + 1) + ": non-finite value");
      if (levels_ > 0) {
        const double a = a_(i);
        if (a != std::floor(a) || a < 0 || a > levels_ - 1)
          throw DataError("row " + std::to_string(i + 1) + ": treatment level " +
                          std::to_string(a) + " outside 0.." + std::to_string(levels_ - 1));
      }
    }
    warnings.clear();
    if (levels_ > 0) {
      std::vector<Index> counts(static_cast<std::size_t>(levels_), 0);
      for (Index i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(a_(i))];
      for (int m = 0; m < levels_; ++m)
        if (counts[static_cast<std::size_t>(m)] == 0)
          warnings.push_back("treatment level " + std::to_string(m) + " never occurs");
    }
  }

  Eigen::MatrixXd z_;
  Eigen::VectorXd a_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd l_;
  int levels_ = 2;
};

struct PanelSample {
  std::string id;
  std::vector<Eigen::VectorXd> z;
  std::vector<int> a;
  std::vector<Eigen::VectorXd> l;
  double y = 0.0;
};

// Longitudinal data with periods t = 0..T and a terminal outcome.
class PanelDataset {
public:
  PanelDataset() = default;

  PanelDataset(std::vector<std::string> ids, std::vector<Eigen::MatrixXd> z,
               std::vector<Eigen::VectorXd> a, std::vector<Eigen::MatrixXd> l, Eigen::VectorXd y,
               std::vector<int> treatment_levels)
      : ids_(std::move(ids)), z_(std::move(z)), a_(std::move(a)), l_(std::move(l)),
        y_(std::move(y)), levels_(std::move(treatment_levels)) {
    validate();
  }

  static PanelDataset from_panels(const std::vector<PanelSample>& panels,
                                  std::vector<int> treatment_levels) {
    if (panels.empty()) throw DataError("panel dataset must contain at least one subject");
    const std::size_t periods = panels[0].a.size();
    const Index n = static_cast<Index>(panels.size());
    std::vector<Eigen::MatrixXd> z(periods), l(periods);
    std::vector<Eigen::VectorXd> a(periods, Eigen::VectorXd(n));
    for (std::size_t t = 0; t < periods; ++t) {
      z[t].resize(n, panels[0].z[t].size());
      l[t].resize(n, panels[0].l[t].size());
    }
    Eigen::VectorXd y(n);
    std::vector<std::string> ids;
    for (Index i = 0; i < n; ++i) {
      const auto& p = panels[static_cast<std::size_t>(i)];
      if (p.a.size() != periods || p.z.size() != periods || p.l.size() != periods)
        throw DataError("subject " + p.id + ": ragged horizon");
      for (std::size_t t = 0; t < periods; ++t) {
        if (p.z[t].size() != z[t].cols() || p.l[t].size() != l[t].cols())
          throw DataError("subject " + p.id + ": inconsistent dimension at t=" + std::to_string(t));
        z[t].row(i) = p.z[t].transpose();
        l[t].row(i) = p.l[t].transpose();
        a[t](i) = p.a[t];
      }
      y(i) = p.y;
      ids.push_back(p.id);
    }
    return PanelDataset(std::move(ids), std::move(z), std::move(a), std::move(l), std::move(y),
                        std::move(treatment_levels));
  }

  Index n() const { return y_.size(); }
  int horizon() const { return static_cast<int>(a_.size()) - 1; }
  const std::vector<std::string>& ids() const { return ids_; }
  const Eigen::MatrixXd& z(int t) const { return z_.at(static_cast<std::size_t>(t)); }
  const Eigen::VectorXd& a(int t) const { return a_.at(static_cast<std::size_t>(t)); }
  const Eigen::MatrixXd& l(int t) const { return l_.at(static_cast<std::size_t>(t)); }
  const Eigen::VectorXd& y() const { return y_; }
  int treatment_levels(int t) const { return levels_.at(static_cast<std::size_t>(t)); }
  const std::vector<int>& treatment_levels() const { return levels_; }

  // H_t = [Z_0..Z_{t-1}, A_0..A_{t-1}, L_0..L_t].
  std::vector<std::string> history_names(int t) const {
    std::vector<std::string> names;
    for (int s = 0; s < t; ++s)
      for (Index j = 0; j < z(s).cols(); ++j)
        names.push_back("z" + std::to_string(s) + "_" + std::to_string(j));
    for (int s = 0; s < t; ++s) names.push_back("a" + std::to_string(s));
    for (int s = 0; s <= t; ++s)
      for (Index j = 0; j < l(s).cols(); ++j)
        names.push_back("l" + std::to_string(s) + "_" + std::to_string(j));
    return names;
  }

  Eigen::MatrixXd history(int t) const {
    Index cols = 0;
    for (int s = 0; s < t; ++s) cols += z(s).cols() + 1;
    for (int s = 0; s <= t; ++s) cols += l(s).cols();
    Eigen::MatrixXd h(n(), cols);
    Index c = 0;
    for (int s = 0; s < t; ++s) {
      h.middleCols(c, z(s).cols()) = z(s);
      c += z(s).cols();
    }
    for (int s = 0; s < t; ++s) h.col(c++) = a(s);
    for (int s = 0; s <= t; ++s) {
      h.middleCols(c, l(s).cols()) = l(s);
      c += l(s).cols();
    }
    return h;
  }

  PanelSample panel(Index i) const {
    PanelSample p;
    p.id = ids_[static_cast<std::size_t>(i)];
    for (int t = 0; t <= horizon(); ++t) {
      p.z.push_back(z(t).row(i).transpose());
      p.a.push_back(static_cast<int>(a(t)(i)));
      p.l.push_back(l(t).row(i).transpose());
    }
    p.y = y_(i);
    return p;
  }

  PanelDataset subset(const Rows& rows) const {
    PanelDataset out;
    for (Index r : rows) out.ids_.push_back(ids_[static_cast<std::size_t>(r)]);
    for (int t = 0; t <= horizon(); ++t) {
      out.z_.push_back(z(t)(rows, Eigen::all));
      out.a_.push_back(a(t)(rows));
      out.l_.push_back(l(t)(rows, Eigen::all));
    }
    out.y_ = y_(rows);
    out.levels_ = levels_;
    return out;
  }

  PanelDataset with_outcome(Eigen::VectorXd y) const {
    PanelDataset out = *this;
    out.y_ = std::move(y);
    out.validate();
    return out;
  }

private:
  void validate() {
    const Index n = y_.size();
    if (n < 1) throw DataError("panel dataset must contain at least one subject");
    if (a_.empty()) throw DataError("panel dataset needs at least one period");
    if (z_.size() != a_.size() || l_.size() != a_.size() || levels_.size() != a_.size())
      throw DataError("ragged horizon: per-period blocks disagree");
    if (ids_.size() != static_cast<std::size_t>(n)) throw DataError("id column length mismatch");
    for (std::size_t t = 0; t < a_.size(); ++t) {
      if (z_[t].rows() != n || a_[t].size() != n || l_[t].rows() != n)
        throw DataError("period " + std::to_string(t) + ": column lengths disagree");
      if (!z_[t].allFinite() || !a_[t].allFinite() || !l_[t].allFinite())
        throw DataError("period " + std::to_string(t) + ": non-finite value");
      if (z_[t].cols() < 1) throw DataError("period " + std::to_string(t) + ": empty instrument");
      for (Index i = 0; i < n; ++i) {
        const double v = a_[t](i);
        if (v != std::floor(v) || v < 0 || v > levels_[t] - 1)
          throw DataError("subject " + ids_[static_cast<std::size_t>(i)] + " period " +
                          std::to_string(t) + ": treatment level outside range");
      }
    }
    if (!y_.allFinite()) throw DataError("non-finite terminal outcome");
  }

  std::vector<std::string> ids_;
  std::vector<Eigen::MatrixXd> z_;
  std::vector<Eigen::VectorXd> a_;
  std::vector<Eigen::MatrixXd> l_;
  Eigen::VectorXd y_;
  std::vector<int> levels_;
};

struct FoldAssignment {
  std::vector<int> fold;
  int K = 0;
  std::uint64_t seed = 0;

  Index n() const { return static_cast<Index>(fold.size()); }

  Rows rows(int k) const {
    Rows out;
    for (std::size_t i = 0; i < fold.size(); ++i)
      if (fold[i] == k) out.push_back(static_cast<Index>(i));
    return out;
  }

  Rows complement(int k) const {
    Rows out;
    for (std::size_t i = 0; i < fold.size(); ++i)
      if (fold[i] != k) out.push_back(static_cast<Index>(i));
    return out;
  }

  std::vector<Index> sizes() const {
    std::vector<Index> s(static_cast<std::size_t>(K), 0);
    for (int f : fold) ++s[static_cast<std::size_t>(f)];
    return s;
  }
};

inline FoldAssignment make_folds(Index n, int K, std::uint64_t seed) {
  if (K < 2) throw InvalidArgument("fold count K must be at least 2");
  if (K > n) throw InvalidArgument("fold count K exceeds the number of observations");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  CounterRng rng(seed, Stream::Folds);
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  FoldAssignment f;
  f.K = K;
  f.seed = seed;
  f.fold.assign(static_cast<std::size_t>(n), 0);
  for (Index pos = 0; pos < n; ++pos)
    f.fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos)])] = static_cast<int>(pos % K);
  return f;
}

struct EstimateReport {
  std::string estimand;
  double psi_hat = 0.0;
  double sigma_hat_sq = 0.0;
  double std_error = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  Index n = 0;
  int K = 0;
  std::uint64_t seed = 0;
  std::string variance_method = "influence-function";
  std::vector<double> per_fold_variance;
  std::map<std::string, double> diagnostics;
  nlohmann::json provenance = nlohmann::json::object();
};

inline EstimateReport make_report(std::string estimand, double psi, double sigma_sq, Index n, int K,
                                  std::uint64_t seed) {
  EstimateReport r;
  r.estimand = std::move(estimand);
  r.psi_hat = psi;
  r.sigma_hat_sq = std::max(sigma_sq, 0.0);
  r.n = n;
  r.K = K;
  r.seed = seed;
  r.std_error = std::sqrt(r.sigma_hat_sq / static_cast<double>(n));
  r.ci_lower = psi - kZ975 * r.std_error;
  r.ci_upper = psi + kZ975 * r.std_error;
  return r;
}

inline void to_json(nlohmann::json& j, const EstimateReport& r) {
  j = nlohmann::json{{"schema_version", kSchemaVersion},
                     {"estimand", r.estimand},
                     {"psi_hat", r.psi_hat},
                     {"sigma_hat_sq", r.sigma_hat_sq},
                     {"std_error", r.std_error},
                     {"ci_lower", r.ci_lower},
                     {"ci_upper", r.ci_upper},
                     {"n", r.n},
                     {"K", r.K},
                     {"seed", r.seed},
                     {"variance_method", r.variance_method},
                     {"per_fold_variance", r.per_fold_variance},
                     {"diagnostics", r.diagnostics},
                     {"provenance", r.provenance}};
}

inline void from_json(const nlohmann::json& j, EstimateReport& r) {
  if (j.at("schema_version").get<int>() != kSchemaVersion)
    throw DataError("unsupported report schema_version");
  j.at("estimand").get_to(r.estimand);
  j.at("psi_hat").get_to(r.psi_hat);
  j.at("sigma_hat_sq").get_to(r.sigma_hat_sq);
  j.at("std_error").get_to(r.std_error);
  j.at("ci_lower").get_to(r.ci_lower);
  j.at("ci_upper").get_to(r.ci_upper);
  j.at("n").get_to(r.n);
  j.at("K").get_to(r.K);
  j.at("seed").get_to(r.seed);
  j.at("variance_method").get_to(r.variance_method);
  j.at("per_fold_variance").get_to(r.per_fold_variance);
  j.at("diagnostics").get_to(r.diagnostics);
  r.provenance = j.value("provenance", nlohmann::json::object());
}

}  // namespace addiv
