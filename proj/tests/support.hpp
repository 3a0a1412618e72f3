#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mibci/mibci.hpp"

namespace testing_support {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mibci_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Eigen::MatrixXd gaussian_matrix(std::mt19937_64& g, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(g);
  return m;
}

// Well-conditioned SPD with unit trace.
inline Eigen::MatrixXd random_spd(std::mt19937_64& g, Eigen::Index n) {
  const Eigen::MatrixXd a = gaussian_matrix(g, n, 3 * n);
  Eigen::MatrixXd c = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
  return c / c.trace();
}

inline mibci::SampleMatrix random_trial(std::mt19937_64& g, Eigen::Index n_ch, Eigen::Index n_s) {
  return gaussian_matrix(g, n_ch, n_s);
}

// A labeled set of random Gaussian trials on the default montage.
inline mibci::EpochSet random_set(std::mt19937_64& g, std::size_t n_trials, Eigen::Index n_s, bool labeled = true) {
  mibci::EpochSet s;
  s.montage = mibci::Montage::standard16();
  s.fs = 256.0;
  for (std::size_t i = 0; i < n_trials; ++i) {
    const auto l = !labeled ? mibci::Label::Unlabeled : (i % 2 ? mibci::Label::Right : mibci::Label::Left);
    s.epochs.emplace_back(random_trial(g, 16, n_s) * 10.0, s.fs, l);
  }
  return s;
}

}  // namespace testing_support

#define EXPECT_ERROR_KIND(stmt, expected_kind)                                                  \
  do {                                                                                          \
    try {                                                                                       \
      stmt;                                                                                     \
      ADD_FAILURE() << "expected " << mibci::to_string(expected_kind) << ", nothing was thrown"; \
    } catch (const mibci::Error& err_) {                                                        \
      EXPECT_EQ(err_.kind(), expected_kind) << err_.what();                                     \
    }                                                                                           \
  } while (0)
