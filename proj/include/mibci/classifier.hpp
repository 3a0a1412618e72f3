#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include "mibci/csp.hpp"
#include "mibci/dsp.hpp"
#include "mibci/error.hpp"
#include "mibci/rng.hpp"
#include "mibci/signal_model.hpp"

namespace mibci {

/// Linear rule: score = w . f + b; score >= 0 -> positive class.
struct LdaModel {
  Eigen::VectorXd w;
  double b = 0.0;
  Label positive = Label::Left;
  Label negative = Label::Right;
};

struct LdaOptions {
  double shrinkage = 0.01;
  Label positive = Label::Left;
};

/// Fisher discriminant with equal priors: w = Sigma^-1 (mu_pos - mu_neg), b = -w . (mu_pos + mu_neg) / 2.
/// Sigma is the pooled within-class covariance shrunk toward tr(Sigma)/d * I.
inline LdaModel lda_fit(std::span<const FeatureVector> xs, const LdaOptions& opt = {}) {
  const Label pos = opt.positive;
  const Label neg = opposite(pos);
  if (xs.empty()) fail(ErrorKind::SingleClass, "no training features");
  const auto d = xs.front().values.size();
  Eigen::VectorXd sum_p = Eigen::VectorXd::Zero(d), sum_n = Eigen::VectorXd::Zero(d);
  std::size_t n_p = 0, n_n = 0;
  for (const auto& x : xs) {
    if (x.values.size() != d) fail(ErrorKind::DimensionMismatch, "feature lengths differ");
    if (x.label == pos) {
      sum_p += x.values;
      ++n_p;
    } else if (x.label == neg) {
      sum_n += x.values;
      ++n_n;
    }
  }
  if (n_p == 0 || n_n == 0) fail(ErrorKind::SingleClass, "both classes must be present");
  const Eigen::VectorXd mu_p = sum_p / static_cast<double>(n_p);
  const Eigen::VectorXd mu_n = sum_n / static_cast<double>(n_n);

  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
  for (const auto& x : xs) {
    if (x.label != pos && x.label != neg) continue;
    const Eigen::VectorXd c = x.values - (x.label == pos ? mu_p : mu_n);
    scatter.noalias() += c * c.transpose();
  }
  const double dof = std::max<double>(1.0, static_cast<double>(n_p + n_n) - 2.0);
  Eigen::MatrixXd sigma = scatter / dof;
  const double g = opt.shrinkage;
  sigma = (1.0 - g) * sigma + g * (sigma.trace() / static_cast<double>(d)) * Eigen::MatrixXd::Identity(d, d);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  if (!(lmax > 0.0) || es.eigenvalues().minCoeff() <= 1e-12 * lmax)
    fail(ErrorKind::SingularCovariance, "pooled covariance is singular");

  LdaModel m;
  m.w = sigma.ldlt().solve(mu_p - mu_n);
  m.b = -m.w.dot(mu_p + mu_n) / 2.0;
  m.positive = pos;
  m.negative = neg;
  if (!m.w.allFinite()) fail(ErrorKind::SingularCovariance, "non-finite discriminant");
  return m;
}

struct Prediction {
  Label label;
  double score;
};

inline Prediction lda_predict(const LdaModel& m, const Eigen::VectorXd& f) {
  if (f.size() != m.w.size()) fail(ErrorKind::DimensionMismatch, "feature length differs from model");
  const double s = m.w.dot(f) + m.b;
  return {s >= 0.0 ? m.positive : m.negative, s};
}

inline Prediction lda_predict(const LdaModel& m, const FeatureVector& f) { return lda_predict(m, f.values); }

struct CvConfig {
  int folds = 10;
  int repetitions = 10;
  int m = 3;
  int order = 5;
  double band_lo_hz = 8.0;
  double band_hi_hz = 30.0;
  FilterMode filter_mode = FilterMode::Causal;
  AnalysisWindow window{};
  double csp_shrinkage = 0.0;
  double lda_shrinkage = 0.01;
  std::uint64_t seed = 0;
  unsigned threads = 1;  // 0 = hardware concurrency; never changes results
};

struct CvReport {
  std::vector<std::vector<double>> fold_accuracies;  // [repetition][fold]
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample standard deviation over all folds
  std::size_t n_trials = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const CvReport&, const CvReport&) = default;
};

/// Band-passed, windowed trials reduced to what CSP and the features need.
struct PreparedTrials {
  std::vector<Eigen::MatrixXd> scatter;  // E E^T per trial
  std::vector<SpatialCovariance> cov;    // trace-normalized
  std::vector<Label> labels;
  Eigen::Index n_samples = 0;
  Montage montage;
};

/// Filters and windows each trial independently; uses no label information.
inline PreparedTrials prepare_trials(const EpochSet& set, const IirFilter& filter, FilterMode mode,
                                     const AnalysisWindow& window) {
  PreparedTrials p;
  p.montage = set.montage;
  p.n_samples = window.n_samples(set.fs);
  for (const auto& e : set.epochs) {
    const auto w = apply_window(filter_epoch(filter, e, mode), window);
    p.scatter.push_back(scatter_matrix(w.data()));
    p.cov.push_back(covariance_from_scatter(p.scatter.back()));
    p.labels.push_back(e.label());
  }
  return p;
}

struct FoldModel {
  CspModel csp;
  LdaModel lda;
};

/// CSP and LDA fitted on the given training trials only.
inline FoldModel fit_fold(const PreparedTrials& p, std::span<const std::size_t> train, const CvConfig& cfg) {
  std::vector<SpatialCovariance> cl, cr;
  for (auto i : train) {
    if (p.labels[i] == Label::Left) cl.push_back(p.cov[i]);
    else if (p.labels[i] == Label::Right) cr.push_back(p.cov[i]);
  }
  CspOptions copt;
  copt.m = cfg.m;
  copt.whitening.shrinkage = cfg.csp_shrinkage;
  FoldModel fm{csp_fit_covariances(cl, cr, copt), {}};
  std::vector<FeatureVector> feats;
  feats.reserve(train.size());
  for (auto i : train) feats.push_back(csp_features_from_scatter(fm.csp, p.scatter[i], p.n_samples, p.labels[i]));
  fm.lda = lda_fit(feats, {cfg.lda_shrinkage, Label::Left});
  return fm;
}

/// Stratified fold assignment for one repetition: each class shuffled, then dealt round-robin.
inline std::vector<int> stratified_folds(std::span<const Label> labels, int folds, std::uint64_t seed) {
  std::vector<int> fold(labels.size(), -1);
  std::uint64_t stream = 0;
  for (Label cls : {Label::Left, Label::Right}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    Rng rng(derive_seed(seed, 0xF01D, stream++));
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t j = 0; j < idx.size(); ++j) fold[idx[j]] = static_cast<int>(j % static_cast<std::size_t>(folds));
  }
  return fold;
}

inline std::vector<double> cv_repetition(const PreparedTrials& p, const CvConfig& cfg, int rep) {
  const auto fold_of = stratified_folds(p.labels, cfg.folds, derive_seed(cfg.seed, 0xC0FFEE, static_cast<std::uint64_t>(rep)));
  std::vector<double> acc;
  for (int k = 0; k < cfg.folds; ++k) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      if (fold_of[i] < 0) continue;
      (fold_of[i] == k ? test : train).push_back(i);
    }
    const auto fm = fit_fold(p, train, cfg);
    std::size_t correct = 0;
    for (auto i : test) {
      const auto f = csp_features_from_scatter(fm.csp, p.scatter[i], p.n_samples);
      if (lda_predict(fm.lda, f).label == p.labels[i]) ++correct;
    }
    acc.push_back(static_cast<double>(correct) / static_cast<double>(test.size()));
  }
  return acc;
}

inline CvReport summarize_cv(std::vector<std::vector<double>> acc, std::size_t n_trials, std::uint64_t seed) {
  CvReport r;
  r.fold_accuracies = std::move(acc);
  r.n_trials = n_trials;
  r.seed = seed;
  std::vector<double> all;
  for (const auto& row : r.fold_accuracies) all.insert(all.end(), row.begin(), row.end());
  if (all.empty()) return r;
  double sum = 0.0;
  for (double a : all) sum += a;
  r.mean_accuracy = sum / static_cast<double>(all.size());
  double ss = 0.0;
  for (double a : all) ss += (a - r.mean_accuracy) * (a - r.mean_accuracy);
  r.std_accuracy = all.size() > 1 ? std::sqrt(ss / static_cast<double>(all.size() - 1)) : 0.0;
  return r;
}

/// Repeated stratified k-fold CV with CSP and LDA refit inside every fold.
inline CvReport cross_validate(const EpochSet& set, const CvConfig& cfg = {}) {
  if (cfg.folds < 2 || cfg.repetitions < 1) fail(ErrorKind::InvalidParams, "need folds >= 2 and repetitions >= 1");
  const auto n_l = set.count(Label::Left), n_r = set.count(Label::Right);
  if (n_l == 0 || n_r == 0) fail(ErrorKind::SingleClass, "cross-validation needs both left and right trials");
  if (n_l < static_cast<std::size_t>(cfg.folds) || n_r < static_cast<std::size_t>(cfg.folds))
    fail(ErrorKind::TooFewTrials, "each class needs at least one trial per fold");

  const auto filter = design_butterworth_bandpass(cfg.order, cfg.band_lo_hz, cfg.band_hi_hz, set.fs);
  if (cfg.window.first_sample(set.fs) + cfg.window.n_samples(set.fs) > set.n_samples())
    fail(ErrorKind::WindowTooLong, "analysis window exceeds trial length");
  const auto prepared = prepare_trials(set, filter, cfg.filter_mode, cfg.window);

  std::vector<std::vector<double>> acc(static_cast<std::size_t>(cfg.repetitions));
  unsigned threads = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads;
  threads = std::min<unsigned>(threads, static_cast<unsigned>(cfg.repetitions));
  if (threads <= 1) {
    for (int r = 0; r < cfg.repetitions; ++r) acc[static_cast<std::size_t>(r)] = cv_repetition(prepared, cfg, r);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        (void)t;
        for (int r = next++; r < cfg.repetitions && !failed; r = next++) {
          try {
            acc[static_cast<std::size_t>(r)] = cv_repetition(prepared, cfg, r);
          } catch (...) {
            if (!failed.exchange(true)) error = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }
  return summarize_cv(std::move(acc), set.size(), cfg.seed);
}

/// Means of consecutive chunks of `per_week` sessions; a trailing partial week averages its own length.
inline std::vector<double> weekly_progress(std::span<const double> session_accuracies, int per_week = 3) {
  if (per_week < 1) fail(ErrorKind::InvalidParams, "sessions per week must be >= 1");
  if (session_accuracies.empty()) fail(ErrorKind::InvalidParams, "no sessions");
  std::vector<double> out;
  const auto w = static_cast<std::size_t>(per_week);
  for (std::size_t i = 0; i < session_accuracies.size(); i += w) {
    const auto chunk = session_accuracies.subspan(i, std::min(w, session_accuracies.size() - i));
    double s = 0.0;
    for (double a : chunk) s += a;
    out.push_back(s / static_cast<double>(chunk.size()));
  }
  return out;
}

}  // namespace mibci
