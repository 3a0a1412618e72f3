#include <numbers>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace mibci;

namespace {

constexpr double kPi = std::numbers::pi;

// |H|^2 = 1 / (1 + ((W^2 - W0^2) / (W * BW))^(2n)) on the bilinear-warped axis.
double analog_prototype_db(int order, double lo, double hi, double fs, double f) {
  const double k = 2.0 * fs;
  const double w = k * std::tan(kPi * f / fs);
  const double wl = k * std::tan(kPi * lo / fs), wh = k * std::tan(kPi * hi / fs);
  const double x = (w * w - wl * wh) / (w * (wh - wl));
  return -10.0 * std::log10(1.0 + std::pow(x * x, order));
}

std::vector<double> sine(double f, double fs, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * kPi * f * static_cast<double>(i) / fs);
  return x;
}

double peak_after(const std::vector<double>& y, std::size_t from) {
  double m = 0.0;
  for (std::size_t i = from; i < y.size(); ++i) m = std::max(m, std::abs(y[i]));
  return m;
}

}  // namespace

TEST(ButterworthDesign, DefaultBandEdgesAreMinusThreeDecibels) {
  const auto f = design_butterworth_bandpass(5, 8.0, 30.0, 256.0);
  EXPECT_NEAR(f.magnitude_db(8.0), -3.0, 0.5);
  EXPECT_NEAR(f.magnitude_db(30.0), -3.0, 0.5);
  EXPECT_EQ(f.sections.size(), 5u);
  for (const auto& s : f.sections) EXPECT_TRUE(s.stable());
}

TEST(ButterworthDesign, StopbandAttenuation) {
  const auto f = design_butterworth_bandpass(5, 8.0, 30.0, 256.0);
  EXPECT_LE(f.magnitude_db(0.1), -40.0);
  EXPECT_LE(f.magnitude_db(2.0), -40.0);
  EXPECT_LE(f.magnitude_db(60.0), -40.0);
}

TEST(ButterworthDesign, MatchesClosedFormMagnitude) {
  for (int order : {1, 2, 3, 5, 8}) {
    for (auto [lo, hi, fs] : {std::tuple{8.0, 30.0, 256.0}, std::tuple{1.0, 4.0, 100.0}, std::tuple{20.0, 100.0, 512.0}}) {
      const auto f = design_butterworth_bandpass(order, lo, hi, fs);
      for (double fr = 0.5; fr < fs / 2.0 - 0.5; fr += 0.37) {
        const double expected = analog_prototype_db(order, lo, hi, fs, fr);
        if (expected < -200.0) continue;
        EXPECT_NEAR(f.magnitude_db(fr), expected, 1e-6 + 1e-9 * std::abs(expected))
            << "order " << order << " f " << fr;
      }
    }
  }
}

TEST(ButterworthDesign, PassbandIsMonotoneWithoutRipple) {
  const auto f = design_butterworth_bandpass(5, 8.0, 30.0, 256.0);
  const double centre = 256.0 / kPi * std::atan(std::sqrt(std::tan(kPi * 8.0 / 256.0) * std::tan(kPi * 30.0 / 256.0)));
  double prev = f.magnitude_db(8.0);
  for (double fr = 8.05; fr <= 30.0; fr += 0.05) {
    const double db = f.magnitude_db(fr);
    EXPECT_LE(db, 0.01);
    if (fr < centre - 0.05) EXPECT_GE(db, prev - 1e-12) << fr;
    if (fr > centre + 0.05) EXPECT_LE(db, prev + 1e-12) << fr;
    prev = db;
  }
}

TEST(ButterworthDesign, RejectsBadParameters) {
  EXPECT_ERROR_KIND(design_butterworth_bandpass(1, 30.0, 8.0, 256.0), ErrorKind::InvalidBand);
  EXPECT_ERROR_KIND(design_butterworth_bandpass(5, 8.0, 128.0, 256.0), ErrorKind::InvalidBand);
  EXPECT_ERROR_KIND(design_butterworth_bandpass(5, 0.0, 30.0, 256.0), ErrorKind::InvalidBand);
  EXPECT_ERROR_KIND(design_butterworth_bandpass(0, 8.0, 30.0, 256.0), ErrorKind::InvalidOrder);
}

TEST(FilterEpoch, TwentyHertzPassesAfterSettling) {
  const auto f = design_butterworth_bandpass(5, 8.0, 30.0, 256.0);
  const auto y = filter_causal(f, sine(20.0, 256.0, 256 * 6));
  EXPECT_NEAR(peak_after(y, 256), 1.0, 0.01);
}

TEST(FilterEpoch, TwoHertzIsSuppressed) {
  const auto f = design_butterworth_bandpass(5, 8.0, 30.0, 256.0);
  const auto y = filter_causal(f, sine(2.0, 256.0, 256 * 8));
  EXPECT_LT(peak_after(y, 256 * 2), 0.05);
}

TEST(FilterEpoch, ZerosStayZero) {
  const auto f = design_butterworth_bandpass(5, 8.0, 30.0, 256.0);
  const Epoch e(SampleMatrix::Zero(16, 512), 256.0, Label::Left);
  for (auto mode : {FilterMode::Causal, FilterMode::ZeroPhase}) {
    const auto out = filter_epoch(f, e, mode);
    EXPECT_TRUE(out.data().isZero(0.0));
    EXPECT_EQ(out.label(), Label::Left);
  }
}

TEST(FilterEpoch, RateMismatchIsRejected) {
  const auto f = design_butterworth_bandpass(5, 8.0, 30.0, 256.0);
  const Epoch e(SampleMatrix::Ones(2, 64), 512.0);
  EXPECT_ERROR_KIND(filter_epoch(f, e), ErrorKind::RateMismatch);
}

TEST(FilterEpoch, ChannelsAreFilteredIndependently) {
  std::mt19937_64 g(4);
  const auto f = design_butterworth_bandpass(5, 8.0, 30.0, 256.0);
  SampleMatrix d = testing_support::gaussian_matrix(g, 3, 300);
  const auto full = filter_epoch(f, Epoch(d, 256.0));
  SampleMatrix other = d;
  other.row(0).setZero();
  const auto partial = filter_epoch(f, Epoch(other, 256.0));
  EXPECT_TRUE(full.data().row(1) == partial.data().row(1));
  EXPECT_TRUE(full.data().row(2) == partial.data().row(2));
}

TEST(FilterProperty, Linearity) {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  const auto f = design_butterworth_bandpass(5, 8.0, 30.0, 256.0);
  for (int iter = 0; iter < 20; ++iter) {
    const auto xm = testing_support::gaussian_matrix(g, 2, 700);
    std::vector<double> x(700), y(700), mix(700);
    const double a = coef(g), b = coef(g);
    for (std::size_t i = 0; i < 700; ++i) {
      x[i] = xm(0, static_cast<Eigen::Index>(i));
      y[i] = xm(1, static_cast<Eigen::Index>(i));
      mix[i] = a * x[i] + b * y[i];
    }
    for (auto mode : {FilterMode::Causal, FilterMode::ZeroPhase}) {
      const auto fx = filter_samples(f, x, mode), fy = filter_samples(f, y, mode), fm = filter_samples(f, mix, mode);
      double scale = 0.0;
      for (double v : fm) scale = std::max(scale, std::abs(v));
      for (std::size_t i = 0; i < 700; ++i) EXPECT_NEAR(fm[i], a * fx[i] + b * fy[i], 1e-9 * scale);
    }
  }
}

TEST(FilterProperty, CausalPrefix) {
  std::mt19937_64 g(6);
  std::uniform_int_distribution<std::size_t> cut(1, 999);
  const auto f = design_butterworth_bandpass(5, 8.0, 30.0, 256.0);
  const auto xm = testing_support::gaussian_matrix(g, 1, 1000);
  const std::vector<double> x(xm.data(), xm.data() + 1000);
  const auto whole = filter_causal(f, x);
  for (int iter = 0; iter < 20; ++iter) {
    const auto k = cut(g);
    const auto prefix = filter_causal(f, std::span(x).first(k));
    for (std::size_t i = 0; i < k; ++i) ASSERT_EQ(prefix[i], whole[i]);
  }
}

TEST(FilterProperty, StreamingMatchesBatch) {
  std::mt19937_64 g(7);
  const auto f = design_butterworth_bandpass(5, 8.0, 30.0, 256.0);
  const SampleMatrix d = testing_support::gaussian_matrix(g, 4, 500);
  const auto batch = filter_epoch(f, Epoch(d, 256.0)).data();
  StreamingFilter sf(f, 4);
  for (Eigen::Index t = 0; t < 500; ++t) {
    std::vector<double> frame(4);
    for (Eigen::Index c = 0; c < 4; ++c) frame[static_cast<std::size_t>(c)] = d(c, t);
    sf.push(frame);
    for (Eigen::Index c = 0; c < 4; ++c) ASSERT_EQ(frame[static_cast<std::size_t>(c)], batch(c, t));
  }
}

TEST(FilterProperty, ZeroPhaseKeepsEnvelopePeakInPlace) {
  const auto f = design_butterworth_bandpass(5, 8.0, 30.0, 256.0);
  const std::size_t n = 2048, c = 1024;
  std::vector<double> x(n, 0.0);
  x[c - 40] = 1.0;
  x[c + 40] = 1.0;
  auto argmax_abs = [](const std::vector<double>& y) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < y.size(); ++i)
      if (std::abs(y[i]) > std::abs(y[best])) best = i;
    return best;
  };
  const auto zp = filter_zero_phase(f, x);
  std::vector<double> one(n, 0.0);
  one[c - 40] = 1.0;
  const auto zp_one = filter_zero_phase(f, one);
  EXPECT_EQ(argmax_abs(zp_one), c - 40);
  for (std::size_t k = 1; k < 300; ++k) EXPECT_NEAR(zp_one[c - 40 + k], zp_one[c - 40 - k], 1e-9);
  const auto causal_one = filter_causal(f, one);
  EXPECT_GT(argmax_abs(causal_one), c - 40 + 5);
  for (std::size_t k = 1; k < 300; ++k) EXPECT_NEAR(zp[c + k], zp[c - k], 1e-9);
}
