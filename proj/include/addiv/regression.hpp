#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "common.hpp"
#include "data.hpp"
#include "spline.hpp"

namespace addiv {

enum class Basis { PenalizedCubicBSpline, LocalLinearKernel };
enum class Link { Identity, ClippedProbability };

// Penalties are relative to the Gram scale; the top end reaches the linear limit of each term.
inline std::vector<double> default_penalty_grid() {
  std::vector<double> g;
  for (int k = 0; k <= 18; ++k) g.push_back(std::pow(10.0, -6.0 + 0.75 * k));
  return g;
}

struct RegressorSpec {
  Basis basis = Basis::PenalizedCubicBSpline;
  int interior_knots = 20;
  // Interior knots per margin of the optional tensor-product term.
  int tensor_knots = 6;
  // Replace the smooths of inputs 0 and 1 by one tensor-product smooth when both are continuous.
  bool tensor_leading_pair = false;
  std::vector<double> penalty_grid = default_penalty_grid();
  int cv_folds = 5;
  Link link = Link::Identity;
  double prob_clip = 0.01;
  // Inputs with at most this many distinct values enter as indicators.
  int max_discrete_levels = 6;
  // Local-linear bandwidth: scale * sd * n^(-1/5) per coordinate.
  double bandwidth_scale = 1.06;

  void validate() const {
    if (penalty_grid.empty()) throw InvalidArgument("penalty grid must be non-empty");
    for (double v : penalty_grid)
      if (!(v > 0) || !std::isfinite(v)) throw InvalidArgument("penalty grid values must be positive");
    if (!(prob_clip > 0 && prob_clip < 0.5)) throw InvalidArgument("probability clip must lie in (0, 0.5)");
    if (interior_knots < 1 || tensor_knots < 1) throw InvalidArgument("knot counts must be positive");
    if (cv_folds < 2) throw InvalidArgument("cv_folds must be at least 2");
    if (!(bandwidth_scale > 0)) throw InvalidArgument("bandwidth scale must be positive");
  }

  RegressorSpec with_link(Link l) const {
    RegressorSpec s = *this;
    s.link = l;
    return s;
  }
  RegressorSpec with_tensor(bool on) const {
    RegressorSpec s = *this;
    s.tensor_leading_pair = on;
    return s;
  }
};

inline nlohmann::json to_json(const RegressorSpec& s) {
  return {{"basis", s.basis == Basis::PenalizedCubicBSpline ? "penalized-cubic-bspline" : "local-linear-kernel"},
          {"interior_knots", s.interior_knots},
          {"tensor_knots", s.tensor_knots},
          {"tensor_leading_pair", s.tensor_leading_pair},
          {"penalty_grid", s.penalty_grid},
          {"cv_folds", s.cv_folds},
          {"link", s.link == Link::Identity ? "identity" : "clipped-probability"},
          {"prob_clip", s.prob_clip},
          {"max_discrete_levels", s.max_discrete_levels},
          {"bandwidth_scale", s.bandwidth_scale}};
}

namespace detail {

struct Term {
  enum class Kind { Spline, Indicator, Tensor };
  Kind kind = Kind::Spline;
  int coord = 0, coord2 = -1;
  CubicBSpline s1, s2;
  std::vector<double> levels;
  Index offset = 0, width = 0;
  Eigen::VectorXd center;
};

inline int nearest_level(const std::vector<double>& levels, double x) {
  int best = 0;
  for (std::size_t i = 1; i < levels.size(); ++i)
    if (std::abs(levels[i] - x) < std::abs(levels[static_cast<std::size_t>(best)] - x)) best = static_cast<int>(i);
  return best;
}

// Additive design: intercept plus centred terms with one redundant column dropped each.
class AdditiveBasis {
public:
  std::vector<Term> terms;
  Index width = 1;
  Eigen::MatrixXd penalty;

  Eigen::VectorXd raw_row(const Term& t, const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    switch (t.kind) {
      case Term::Kind::Spline: return t.s1.eval(x(t.coord));
      case Term::Kind::Indicator: {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Index>(t.levels.size()));
        v(nearest_level(t.levels, x(t.coord))) = 1.0;
        return v;
      }
      case Term::Kind::Tensor: {
        const Eigen::VectorXd a = t.s1.eval(x(t.coord)), b = t.s2.eval(x(t.coord2));
        Eigen::VectorXd v(a.size() * b.size());
        for (Index i = 0; i < a.size(); ++i) v.segment(i * b.size(), b.size()) = a(i) * b;
        return v;
      }
    }
    return {};
  }

  Eigen::MatrixXd design(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(x.rows(), width);
    out.col(0).setOnes();
    for (Index i = 0; i < x.rows(); ++i)
      for (const auto& t : terms) {
        const Eigen::VectorXd r = raw_row(t, x.row(i));
        out.row(i).segment(t.offset, t.width) = (r.head(t.width) - t.center).transpose();
      }
    return out;
  }
};

inline std::vector<double> unique_values(const Eigen::VectorXd& v, std::size_t cap) {
  std::set<double> s;
  for (Index i = 0; i < v.size(); ++i) {
    s.insert(v(i));
    if (s.size() > cap) break;
  }
  return {s.begin(), s.end()};
}

enum class Role { Constant, Discrete, Continuous };

inline std::vector<Role> classify(const Eigen::MatrixXd& x, int max_levels) {
  std::vector<Role> roles;
  for (Index j = 0; j < x.cols(); ++j) {
    const auto u = unique_values(x.col(j), static_cast<std::size_t>(max_levels));
    if (u.size() <= 1) roles.push_back(Role::Constant);
    else if (u.size() <= static_cast<std::size_t>(max_levels)) roles.push_back(Role::Discrete);
    else roles.push_back(Role::Continuous);
  }
  return roles;
}

inline std::shared_ptr<AdditiveBasis> build_basis(const Eigen::MatrixXd& x, const Eigen::VectorXd& w,
                                                  const RegressorSpec& spec, int knots, int tknots) {
  auto basis = std::make_shared<AdditiveBasis>();
  const auto roles = classify(x, spec.max_discrete_levels);
  const bool tensor = spec.tensor_leading_pair && x.cols() >= 2 && roles[0] == Role::Continuous &&
                      roles[1] == Role::Continuous;
  std::vector<Eigen::MatrixXd> pens;
  auto add = [&](Term t, const Eigen::MatrixXd& raw_pen, Index raw_width) {
    t.width = raw_width - 1;
    t.offset = basis->width;
    basis->width += t.width;
    pens.push_back(raw_pen.topLeftCorner(t.width, t.width));
    basis->terms.push_back(std::move(t));
  };
  if (tensor) {
    Term t;
    t.kind = Term::Kind::Tensor;
    t.coord = 0;
    t.coord2 = 1;
    t.s1 = CubicBSpline::at_quantiles(x.col(0), tknots);
    t.s2 = CubicBSpline::at_quantiles(x.col(1), tknots);
    const Index k1 = t.s1.size(), k2 = t.s2.size();
    const Eigen::MatrixXd p1 = t.s1.curvature_penalty(), p2 = t.s2.curvature_penalty();
    Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(k1 * k2, k1 * k2);
    for (Index i = 0; i < k1; ++i)
      for (Index j = 0; j < k1; ++j)
        for (Index r = 0; r < k2; ++r) pen(i * k2 + r, j * k2 + r) += p1(i, j);
    for (Index i = 0; i < k1; ++i) pen.block(i * k2, i * k2, k2, k2) += p2;
    add(std::move(t), pen, k1 * k2);
  }
  for (Index j = tensor ? 2 : 0; j < x.cols(); ++j) {
    const auto role = roles[static_cast<std::size_t>(j)];
    if (role == Role::Constant) continue;
    Term t;
    t.coord = static_cast<int>(j);
    if (role == Role::Discrete) {
      t.kind = Term::Kind::Indicator;
      t.levels = unique_values(x.col(j), static_cast<std::size_t>(spec.max_discrete_levels));
      const Index k = static_cast<Index>(t.levels.size());
      add(std::move(t), Eigen::MatrixXd::Zero(k, k), k);
    } else {
      t.kind = Term::Kind::Spline;
      t.s1 = CubicBSpline::at_quantiles(x.col(j), knots);
      const Eigen::MatrixXd pen = t.s1.curvature_penalty();
      add(std::move(t), pen, t.s1.size());
    }
  }
  // Centre each term at its weighted training mean so the intercept carries the level.
  const double wsum = w.sum();
  for (auto& t : basis->terms) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(t.width);
    for (Index i = 0; i < x.rows(); ++i) mean += w(i) * basis->raw_row(t, x.row(i)).head(t.width);
    t.center = mean / wsum;
  }
  basis->penalty = Eigen::MatrixXd::Zero(basis->width, basis->width);
  for (std::size_t k = 0; k < basis->terms.size(); ++k) {
    const auto& t = basis->terms[k];
    basis->penalty.block(t.offset, t.offset, t.width, t.width) = pens[k];
  }
  return basis;
}

}  // namespace detail

// Fitted x -> E[target | x]. Immutable once fitted.
class ConditionalMeanModel {
public:
  enum class Kind { Constant, Additive, Cells, LocalLinear };

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd out = predict_raw(x);
    if (clip_) out = out.cwiseMax(clip_eps_).cwiseMin(1.0 - clip_eps_);
    return out;
  }

  double predict_one(const Eigen::RowVectorXd& x) const {
    Eigen::MatrixXd m = x;
    return predict(m)(0);
  }

  Kind kind() const { return kind_; }
  double lambda() const { return lambda_; }
  double constant() const { return constant_; }
  const Eigen::VectorXd& coefficients() const { return beta_; }
  int training_fold = -1;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["kind"] = kind_ == Kind::Constant ? "constant"
                : kind_ == Kind::Additive ? "additive"
                : kind_ == Kind::Cells ? "cells"
                                        : "local-linear";
    j["training_fold"] = training_fold;
    j["clip"] = clip_ ? nlohmann::json(clip_eps_) : nlohmann::json(nullptr);
    if (kind_ == Kind::Constant) j["constant"] = constant_;
    if (basis_) {
      j["lambda"] = lambda_;
      j["coefficients"] = std::vector<double>(beta_.data(), beta_.data() + beta_.size());
      nlohmann::json terms = nlohmann::json::array();
      for (const auto& t : basis_->terms) {
        nlohmann::json tj{{"input", t.coord}, {"offset", t.offset}, {"width", t.width}};
        if (t.kind == detail::Term::Kind::Indicator) {
          tj["type"] = "indicator";
          tj["levels"] = t.levels;
        } else {
          tj["type"] = t.kind == detail::Term::Kind::Spline ? "cubic-bspline" : "tensor-cubic-bspline";
          tj["knots"] = t.s1.knots();
          if (t.kind == detail::Term::Kind::Tensor) {
            tj["input2"] = t.coord2;
            tj["knots2"] = t.s2.knots();
          }
        }
        tj["center"] = std::vector<double>(t.center.data(), t.center.data() + t.center.size());
        terms.push_back(tj);
      }
      j["terms"] = terms;
    }
    if (kind_ == Kind::Cells) j["cells"] = cells_.size();
    if (kind_ == Kind::LocalLinear) j["bandwidths"] = std::vector<double>(bw_.data(), bw_.data() + bw_.size());
    return j;
  }

private:
  friend std::vector<ConditionalMeanModel> fit_conditional_means(const Eigen::MatrixXd&,
                                                                 const Eigen::MatrixXd&,
                                                                 const RegressorSpec&,
                                                                 const Eigen::VectorXd*);

  Eigen::VectorXd predict_raw(const Eigen::MatrixXd& x) const {
    if (x.cols() != dim_) throw InvalidArgument("prediction input has wrong dimension");
    switch (kind_) {
      case Kind::Constant: return Eigen::VectorXd::Constant(x.rows(), constant_);
      case Kind::Additive: return basis_->design(x) * beta_;
      case Kind::Cells: {
        Eigen::VectorXd out(x.rows());
        Eigen::VectorXd fb;
        bool have_fb = false;
        for (Index i = 0; i < x.rows(); ++i) {
          std::vector<double> key(x.row(i).data(), x.row(i).data() + 0);
          key.clear();
          for (int j : cell_coords_) key.push_back(x(i, j));
          auto it = cells_.find(key);
          if (it != cells_.end()) {
            out(i) = it->second;
          } else {
            if (!have_fb) {
              fb = basis_->design(x) * beta_;
              have_fb = true;
            }
            out(i) = fb(i);
          }
        }
        return out;
      }
      case Kind::LocalLinear: return local_linear(x);
    }
    return {};
  }

  Eigen::VectorXd local_linear(const Eigen::MatrixXd& x) const {
    const Index d = train_x_.cols();
    Eigen::VectorXd out(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
      Eigen::RowVectorXd q(d);
      for (Index j = 0; j < d; ++j) q(j) = std::clamp(x(i, ll_coords_[static_cast<std::size_t>(j)]), lo_(j), hi_(j));
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d + 1, d + 1);
      Eigen::VectorXd b = Eigen::VectorXd::Zero(d + 1);
      Eigen::VectorXd row(d + 1);
      for (Index r = 0; r < train_x_.rows(); ++r) {
        double u = 0.0;
        for (Index j = 0; j < d; ++j) {
          const double s = (train_x_(r, j) - q(j)) / bw_(j);
          u += s * s;
        }
        const double k = train_w_(r) * std::exp(-0.5 * u);
        if (k < 1e-300) continue;
        row(0) = 1.0;
        row.tail(d) = (train_x_.row(r) - q).transpose();
        a.noalias() += k * row * row.transpose();
        b.noalias() += k * train_y_(r) * row;
      }
      a.diagonal().array() += 1e-10 * (a(0, 0) + 1e-300);
      out(i) = a(0, 0) > 0 ? a.ldlt().solve(b)(0) : constant_;
    }
    return out;
  }

  Kind kind_ = Kind::Constant;
  Index dim_ = 0;
  double constant_ = 0.0;
  double lambda_ = 0.0;
  bool clip_ = false;
  double clip_eps_ = 0.0;
  std::shared_ptr<const detail::AdditiveBasis> basis_;
  Eigen::VectorXd beta_;
  std::map<std::vector<double>, double> cells_;
  std::vector<int> cell_coords_;
  std::vector<int> ll_coords_;
  Eigen::MatrixXd train_x_;
  Eigen::VectorXd train_y_, train_w_, bw_, lo_, hi_;
};

// Fits one model per column of targets on shared inputs, sharing basis construction and
// factorizations. The penalty is chosen per target by K-fold CV over the grid.
inline std::vector<ConditionalMeanModel> fit_conditional_means(const Eigen::MatrixXd& x,
                                                               const Eigen::MatrixXd& targets,
                                                               const RegressorSpec& spec,
                                                               const Eigen::VectorXd* weights = nullptr) {
  spec.validate();
  const Index n = x.rows(), m = targets.cols();
  if (targets.rows() != n) throw InvalidArgument("inputs and targets have different row counts");
  if (n < 10) throw InvalidArgument("insufficient rows for regression: need at least 10, have " + std::to_string(n));
  if (!x.allFinite() || !targets.allFinite()) throw InvalidArgument("regression inputs must be finite");
  const Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);
  if (w.size() != n || (w.array() < 0).any() || !(w.sum() > 0)) throw InvalidArgument("bad regression weights");
  const double wsum = w.sum();

  std::vector<ConditionalMeanModel> models(static_cast<std::size_t>(m));
  for (auto& mod : models) {
    mod.dim_ = x.cols();
    mod.clip_ = spec.link == Link::ClippedProbability;
    mod.clip_eps_ = spec.prob_clip;
  }
  std::vector<Index> todo;
  for (Index c = 0; c < m; ++c) {
    auto& mod = models[static_cast<std::size_t>(c)];
    const double mean = w.dot(targets.col(c)) / wsum;
    mod.constant_ = mean;
    const double first = targets(0, c);
    if ((targets.col(c).array() == first).all()) {
      mod.constant_ = first;
      continue;
    }
    todo.push_back(c);
  }
  const auto roles = detail::classify(x, spec.max_discrete_levels);
  std::vector<int> active;
  for (std::size_t j = 0; j < roles.size(); ++j)
    if (roles[j] != detail::Role::Constant) active.push_back(static_cast<int>(j));
  if (todo.empty() || active.empty()) return models;

  if (spec.basis == Basis::LocalLinearKernel) {
    const Index d = static_cast<Index>(active.size());
    Eigen::MatrixXd xs(n, d);
    Eigen::VectorXd bw(d), lo(d), hi(d);
    for (Index j = 0; j < d; ++j) {
      xs.col(j) = x.col(active[static_cast<std::size_t>(j)]);
      const double mu = w.dot(xs.col(j)) / wsum;
      const double sd = std::sqrt(w.dot((xs.col(j).array() - mu).square().matrix()) / wsum);
      bw(j) = spec.bandwidth_scale * (sd > 0 ? sd : 1.0) * std::pow(static_cast<double>(n), -1.0 / (4.0 + d));
      lo(j) = xs.col(j).minCoeff();
      hi(j) = xs.col(j).maxCoeff();
    }
    for (Index c : todo) {
      auto& mod = models[static_cast<std::size_t>(c)];
      mod.kind_ = ConditionalMeanModel::Kind::LocalLinear;
      mod.ll_coords_ = active;
      mod.train_x_ = xs;
      mod.train_y_ = targets.col(c);
      mod.train_w_ = w;
      mod.bw_ = bw;
      mod.lo_ = lo;
      mod.hi_ = hi;
    }
    return models;
  }

  // Shrink knots until the basis is estimable from n rows.
  int knots = spec.interior_knots, tknots = spec.tensor_knots;
  std::shared_ptr<detail::AdditiveBasis> basis;
  for (;;) {
    basis = detail::build_basis(x, w, spec, knots, tknots);
    if (n >= basis->width + 2) break;
    if (knots <= 1 && tknots <= 1)
      throw InvalidArgument("insufficient rows for regression: basis dimension " +
                            std::to_string(basis->width) + " needs " + std::to_string(basis->width + 2));
    knots = std::max(1, knots / 2);
    tknots = std::max(1, tknots / 2);
  }
  const Eigen::MatrixXd design = basis->design(x);
  const Index p = design.cols();
  // Scale each term's penalty to the size of its weighted Gram block.
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  gram.selfadjointView<Eigen::Lower>().rankUpdate((design.array().colwise() * w.array().sqrt()).matrix().transpose());
  gram = gram.selfadjointView<Eigen::Lower>();
  Eigen::MatrixXd pen = basis->penalty;
  for (const auto& t : basis->terms) {
    const double ps = pen.block(t.offset, t.offset, t.width, t.width).trace();
    if (ps > 0) pen.block(t.offset, t.offset, t.width, t.width) *= gram.block(t.offset, t.offset, t.width, t.width).trace() / wsum / ps;
  }
  const double ridge = 1e-10 * gram.diagonal().sum() / wsum / static_cast<double>(p);

  Eigen::MatrixXd ys(n, static_cast<Index>(todo.size()));
  for (std::size_t c = 0; c < todo.size(); ++c) ys.col(static_cast<Index>(c)) = targets.col(todo[c]);
  const Eigen::MatrixXd wx = design.array().colwise() * w.array();
  const Eigen::MatrixXd rhs = wx.transpose() * ys;

  // Per-fold Gram blocks for CV.
  const int cvk = static_cast<int>(std::min<Index>(spec.cv_folds, n));
  std::vector<Rows> cv_rows(static_cast<std::size_t>(cvk));
  for (Index i = 0; i < n; ++i) cv_rows[static_cast<std::size_t>(i % cvk)].push_back(i);
  std::vector<Eigen::MatrixXd> fgram, frhs;
  std::vector<double> fw;
  for (const auto& r : cv_rows) {
    const Eigen::MatrixXd xf = design(r, Eigen::all);
    const Eigen::VectorXd wf = w(r);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p, p);
    g.selfadjointView<Eigen::Lower>().rankUpdate((xf.array().colwise() * wf.array().sqrt()).matrix().transpose());
    fgram.push_back(g.selfadjointView<Eigen::Lower>());
    frhs.push_back((xf.array().colwise() * wf.array()).matrix().transpose() * ys(r, Eigen::all));
    fw.push_back(wf.sum());
  }
  const auto& grid = spec.penalty_grid;
  Eigen::MatrixXd cv_err = Eigen::MatrixXd::Zero(static_cast<Index>(grid.size()), ys.cols());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    for (int f = 0; f < cvk; ++f) {
      const double wt = wsum - fw[static_cast<std::size_t>(f)];
      if (!(wt > 0)) continue;
      Eigen::MatrixXd a = (gram - fgram[static_cast<std::size_t>(f)]) / wt + grid[g] * pen;
      a.diagonal().array() += ridge;
      Eigen::LLT<Eigen::MatrixXd> llt(a);
      const Eigen::MatrixXd beta = llt.solve((rhs - frhs[static_cast<std::size_t>(f)]) / wt);
      const auto& r = cv_rows[static_cast<std::size_t>(f)];
      const Eigen::MatrixXd resid = ys(r, Eigen::all) - design(r, Eigen::all) * beta;
      cv_err.row(static_cast<Index>(g)) += (resid.array().square().colwise() * w(r).array()).colwise().sum().matrix();
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> by_lambda;
  for (Index c = 0; c < ys.cols(); ++c) {
    const double best = cv_err.col(c).minCoeff();
    // Prefer the smoothest penalty among numerical ties.
    std::size_t pick = 0;
    for (std::size_t g = 0; g < grid.size(); ++g)
      if (cv_err(static_cast<Index>(g), c) <= best * (1 + 1e-9) + 1e-300) pick = g;
    by_lambda[pick].push_back(static_cast<std::size_t>(c));
  }
  for (const auto& [g, cols] : by_lambda) {
    Eigen::MatrixXd a = gram / wsum + grid[g] * pen;
    a.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    for (std::size_t c : cols) {
      auto& mod = models[static_cast<std::size_t>(todo[c])];
      mod.kind_ = ConditionalMeanModel::Kind::Additive;
      mod.basis_ = basis;
      mod.lambda_ = grid[g];
      mod.beta_ = llt.solve(rhs.col(static_cast<Index>(c)) / wsum);
    }
  }

  // All-discrete inputs: saturated cell means, with the additive fit for unseen cells.
  bool all_discrete = true;
  for (int j : active)
    if (roles[static_cast<std::size_t>(j)] != detail::Role::Discrete) all_discrete = false;
  if (all_discrete) {
    std::map<std::vector<double>, std::pair<Eigen::VectorXd, double>> acc;
    for (Index i = 0; i < n; ++i) {
      std::vector<double> key;
      for (int j : active) key.push_back(x(i, j));
      auto [it, ins] = acc.try_emplace(key, Eigen::VectorXd::Zero(ys.cols()), 0.0);
      it->second.first += w(i) * ys.row(i).transpose();
      it->second.second += w(i);
    }
    for (std::size_t c = 0; c < todo.size(); ++c) {
      auto& mod = models[static_cast<std::size_t>(todo[c])];
      mod.kind_ = ConditionalMeanModel::Kind::Cells;
      mod.cell_coords_ = active;
      for (const auto& [key, v] : acc)
        if (v.second > 0) mod.cells_[key] = v.first(static_cast<Index>(c)) / v.second;
    }
  }
  return models;
}

inline ConditionalMeanModel fit_conditional_mean(const Eigen::MatrixXd& x, const Eigen::VectorXd& target,
                                                 const RegressorSpec& spec,
                                                 const Eigen::VectorXd* weights = nullptr) {
  return fit_conditional_means(x, target, spec, weights).front();
}

}  // namespace addiv
