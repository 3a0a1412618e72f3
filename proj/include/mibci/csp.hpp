#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mibci/error.hpp"
#include "mibci/signal_model.hpp"

namespace mibci {

/// Trace-normalized spatial covariance of one trial or a class mean.
struct SpatialCovariance {
  Eigen::MatrixXd matrix;
};

/// Imagery window relative to trial start: cue (2 s) + 0.5 s through cue + 4 s.
struct AnalysisWindow {
  double start_s = 2.5;
  double length_s = 3.5;

  Eigen::Index first_sample(double fs) const { return static_cast<Eigen::Index>(std::llround(start_s * fs)); }
  Eigen::Index n_samples(double fs) const { return static_cast<Eigen::Index>(std::llround(length_s * fs)); }
};

inline Epoch apply_window(const Epoch& e, const AnalysisWindow& w) {
  return e.window(w.first_sample(e.fs()), w.n_samples(e.fs()));
}

/// Which class plays the role of "l" in the decomposition. Filters are sorted by
/// that class's eigenvalue, descending, so the first filter maximizes its variance.
struct ClassOrder {
  Label l = Label::Left;
  Label r = Label::Right;
  friend bool operator==(const ClassOrder&, const ClassOrder&) = default;
};

inline Eigen::MatrixXd scatter_matrix(const SampleMatrix& e) { return e * e.transpose(); }

inline SpatialCovariance covariance_from_scatter(const Eigen::MatrixXd& s) {
  const double tr = s.trace();
  if (!(tr > 0.0) || !std::isfinite(tr)) fail(ErrorKind::DegenerateTrial, "trial window has zero or non-finite power");
  return {s / tr};
}

/// C = E E^T / tr(E E^T).
inline SpatialCovariance trial_covariance(const SampleMatrix& e) {
  if (!e.allFinite()) fail(ErrorKind::DegenerateTrial, "non-finite samples");
  return covariance_from_scatter(scatter_matrix(e));
}

inline SpatialCovariance trial_covariance(const Epoch& e) { return trial_covariance(e.data()); }

namespace detail {
// Pairwise summation keeps the result independent of how callers partition the work.
inline Eigen::MatrixXd pairwise_sum(std::span<const SpatialCovariance> xs) {
  if (xs.size() == 1) return xs.front().matrix;
  const auto half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}
}  // namespace detail

inline SpatialCovariance class_mean_covariance(std::span<const SpatialCovariance> trials) {
  if (trials.empty()) fail(ErrorKind::EmptyClass, "no trials to average");
  const auto n = trials.front().matrix.rows();
  for (const auto& c : trials)
    if (c.matrix.rows() != n || c.matrix.cols() != n) fail(ErrorKind::DimensionMismatch, "covariance sizes differ");
  return {detail::pairwise_sum(trials) / static_cast<double>(trials.size())};
}

struct WhiteningOptions {
  double shrinkage = 0.0;       // gamma in (1-g) C + g tr(C)/N I
  double eigen_floor = 1e-10;   // relative to the largest eigenvalue
};

struct Whitening {
  Eigen::MatrixXd P;            // P Cc P^T = I
  Eigen::VectorXd eigenvalues;  // of Cc, descending
  Eigen::MatrixXd U;            // matching eigenvectors as columns
};

/// P = lambda_c^{-1/2} U_c^T with eigenvalues of the composite covariance sorted descending.
inline Whitening whitening_transform(const Eigen::MatrixXd& composite, const WhiteningOptions& opt = {}) {
  const auto n = composite.rows();
  if (composite.cols() != n || n == 0) fail(ErrorKind::DimensionMismatch, "composite covariance must be square");
  Eigen::MatrixXd cc = 0.5 * (composite + composite.transpose());
  if (opt.shrinkage > 0.0)
    cc = (1.0 - opt.shrinkage) * cc +
         opt.shrinkage * (cc.trace() / static_cast<double>(n)) * Eigen::MatrixXd::Identity(n, n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cc);
  if (es.info() != Eigen::Success) fail(ErrorKind::RankDeficient, "eigendecomposition failed");
  // Eigen returns ascending order.
  Eigen::VectorXd lambda = es.eigenvalues().reverse();
  Eigen::MatrixXd u = es.eigenvectors().rowwise().reverse();
  const double floor = opt.eigen_floor * lambda(0);
  if (!(lambda(0) > 0.0) || lambda(n - 1) < floor)
    fail(ErrorKind::RankDeficient, "composite covariance eigenvalue " + std::to_string(lambda(n - 1)) +
                                       " below floor " + std::to_string(floor));
  Eigen::MatrixXd p = lambda.cwiseSqrt().cwiseInverse().asDiagonal() * u.transpose();
  return {std::move(p), std::move(lambda), std::move(u)};
}

/// Full (unretained) joint diagonalization of two class covariances.
struct CspDecomposition {
  Whitening whitening;
  Eigen::MatrixXd B;          // eigenvectors of S_l, columns, sorted by lambda_l descending
  Eigen::VectorXd lambda_l;   // diag(B^T S_l B)
  Eigen::VectorXd lambda_r;   // diag(B^T S_r B)
  Eigen::MatrixXd filters;    // B^T P, one spatial filter per row
  Eigen::MatrixXd patterns;   // filters^-1, one pattern per column
};

namespace detail {
// Flip each filter row so its largest-magnitude entry is positive, and the
// matching pattern column with it.
inline void canonicalize_signs(Eigen::MatrixXd& filters, Eigen::MatrixXd& patterns, Eigen::MatrixXd& b) {
  for (Eigen::Index i = 0; i < filters.rows(); ++i) {
    Eigen::Index arg = 0;
    filters.row(i).cwiseAbs().maxCoeff(&arg);
    if (filters(i, arg) < 0.0) {
      filters.row(i) *= -1.0;
      patterns.col(i) *= -1.0;
      b.col(i) *= -1.0;
    }
  }
}
}  // namespace detail

inline CspDecomposition csp_decompose(const Eigen::MatrixXd& mean_l, const Eigen::MatrixXd& mean_r,
                                      const WhiteningOptions& opt = {}) {
  if (mean_l.rows() != mean_r.rows() || mean_l.cols() != mean_r.cols() || mean_l.rows() != mean_l.cols())
    fail(ErrorKind::DimensionMismatch, "class covariances must be square and equal in size");
  CspDecomposition d;
  d.whitening = whitening_transform(mean_l + mean_r, opt);
  const auto& p = d.whitening.P;
  Eigen::MatrixXd s_l = p * mean_l * p.transpose();
  Eigen::MatrixXd s_r = p * mean_r * p.transpose();
  s_l = 0.5 * (s_l + s_l.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s_l);
  if (es.info() != Eigen::Success) fail(ErrorKind::RankDeficient, "eigendecomposition of S_l failed");
  d.B = es.eigenvectors().rowwise().reverse();
  d.lambda_l = es.eigenvalues().reverse();
  d.lambda_r = (d.B.transpose() * s_r * d.B).diagonal();

  d.filters = d.B.transpose() * p;
  d.patterns = d.filters.inverse();
  detail::canonicalize_signs(d.filters, d.patterns, d.B);
  return d;
}

struct CspOptions {
  int m = 3;
  WhiteningOptions whitening{};
  ClassOrder class_order{};
};

struct CspFitInfo {
  std::size_t n_l = 0;
  std::size_t n_r = 0;
  AnalysisWindow window{};
};

/// Retained filter bank: first m and last m directions of B.
struct CspModel {
  Eigen::MatrixXd F;          // 2m x N
  Eigen::MatrixXd patterns;   // N x 2m
  Eigen::VectorXd eigvals_l;  // 2m
  int m = 3;
  Montage montage;
  double band_lo_hz = 8.0;
  double band_hi_hz = 30.0;
  ClassOrder class_order{};
  CspFitInfo info{};

  Eigen::Index n_features() const { return F.rows(); }
  Eigen::Index n_channels() const { return F.cols(); }
};

/// Retained row indices: 0..m-1 followed by N-m..N-1.
inline std::vector<Eigen::Index> retained_indices(Eigen::Index n, int m) {
  std::vector<Eigen::Index> idx;
  for (int i = 0; i < m; ++i) idx.push_back(i);
  for (int i = 0; i < m; ++i) idx.push_back(n - m + i);
  return idx;
}

inline CspModel csp_retain(const CspDecomposition& d, int m) {
  const auto n = d.filters.rows();
  if (m < 1) fail(ErrorKind::MTooLarge, "m must be >= 1");
  if (2 * static_cast<Eigen::Index>(m) > n) fail(ErrorKind::MTooLarge, "m exceeds N/2");
  const auto idx = retained_indices(n, m);
  CspModel model;
  model.m = m;
  model.F.resize(2 * m, n);
  model.patterns.resize(n, 2 * m);
  model.eigvals_l.resize(2 * m);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    model.F.row(row) = d.filters.row(idx[k]);
    model.patterns.col(row) = d.patterns.col(idx[k]);
    model.eigvals_l(row) = d.lambda_l(idx[k]);
  }
  return model;
}

/// Fit from per-trial covariances of each class.
inline CspModel csp_fit_covariances(std::span<const SpatialCovariance> cov_l, std::span<const SpatialCovariance> cov_r,
                                    const CspOptions& opt = {}) {
  if (cov_l.empty() || cov_r.empty()) fail(ErrorKind::EmptyClass, "both classes need at least one trial");
  const auto n = cov_l.front().matrix.rows();
  if (2 * static_cast<Eigen::Index>(opt.m) > n || opt.m < 1) fail(ErrorKind::MTooLarge, "m must satisfy 1 <= m <= N/2");
  const auto mean_l = class_mean_covariance(cov_l);
  const auto mean_r = class_mean_covariance(cov_r);
  auto model = csp_retain(csp_decompose(mean_l.matrix, mean_r.matrix, opt.whitening), opt.m);
  model.class_order = opt.class_order;
  model.info.n_l = cov_l.size();
  model.info.n_r = cov_r.size();
  return model;
}

/// Fit from band-passed, windowed trials of each class.
inline CspModel csp_fit(std::span<const Epoch> trials_l, std::span<const Epoch> trials_r, const CspOptions& opt = {}) {
  if (trials_l.empty() || trials_r.empty()) fail(ErrorKind::EmptyClass, "both classes need at least one trial");
  std::vector<SpatialCovariance> cl, cr;
  cl.reserve(trials_l.size());
  cr.reserve(trials_r.size());
  for (const auto& e : trials_l) cl.push_back(trial_covariance(e));
  for (const auto& e : trials_r) cr.push_back(trial_covariance(e));
  return csp_fit_covariances(cl, cr, opt);
}

struct FeatureVector {
  Eigen::VectorXd values;
  Label label = Label::Unlabeled;
};

namespace detail {
inline FeatureVector log_variance_ratio(const Eigen::VectorXd& var, Label label) {
  const double total = var.sum();
  if (!(total > 0.0) || !std::isfinite(total) || (var.array() <= 0.0).any())
    fail(ErrorKind::DegenerateTrial, "projected variance is zero or non-finite");
  return {(var / total).array().log().matrix(), label};
}
}  // namespace detail

/// Z = F E; f_p = log(Var(Z_p) / sum_i Var(Z_i)), Var as mean of squares.
inline FeatureVector csp_features(const CspModel& model, const SampleMatrix& e, Label label = Label::Unlabeled) {
  if (e.rows() != model.n_channels()) fail(ErrorKind::DimensionMismatch, "trial channel count differs from model");
  const Eigen::MatrixXd z = model.F * e;
  const Eigen::VectorXd var = z.rowwise().squaredNorm() / static_cast<double>(e.cols());
  return detail::log_variance_ratio(var, label);
}

inline FeatureVector csp_features(const CspModel& model, const Epoch& e) {
  return csp_features(model, e.data(), e.label());
}

/// Same features computed from the trial scatter E E^T: Var(Z_p) = f_p^T (E E^T) f_p / T.
inline FeatureVector csp_features_from_scatter(const CspModel& model, const Eigen::MatrixXd& scatter,
                                               Eigen::Index n_samples, Label label = Label::Unlabeled) {
  if (scatter.rows() != model.n_channels()) fail(ErrorKind::DimensionMismatch, "scatter size differs from model");
  const Eigen::VectorXd var =
      (model.F * scatter).cwiseProduct(model.F).rowwise().sum() / static_cast<double>(n_samples);
  return detail::log_variance_ratio(var, label);
}

}  // namespace mibci
