#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "mibci/error.hpp"
#include "mibci/signal_model.hpp"

namespace mibci {

/// One second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  std::complex<double> response(std::complex<double> z) const {
    const auto zi = 1.0 / z;
    return (b0 + zi * (b1 + zi * b2)) / (1.0 + zi * (a1 + zi * a2));
  }

  /// Poles of 1 + a1 z^-1 + a2 z^-2 lie strictly inside the unit circle.
  bool stable() const { return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2; }
};

struct IirFilter {
  std::vector<Biquad> sections;
  double fs = kDefaultFs;
  double lo_hz = 8.0;
  double hi_hz = 30.0;
  int order = 5;

  std::complex<double> response(double f_hz) const {
    const auto z = std::polar(1.0, 2.0 * std::numbers::pi * f_hz / fs);
    std::complex<double> h{1.0, 0.0};
    for (const auto& s : sections) h *= s.response(z);
    return h;
  }

  double magnitude_db(double f_hz) const { return 20.0 * std::log10(std::abs(response(f_hz))); }
};

enum class FilterMode { Causal, ZeroPhase };

/// Digital Butterworth band-pass of prototype order `order` (2*order poles overall),
/// bilinear transform with pre-warped band edges, realized as `order` biquads.
inline IirFilter design_butterworth_bandpass(int order, double lo_hz, double hi_hz, double fs) {
  using cplx = std::complex<double>;
  constexpr double pi = std::numbers::pi;
  if (order < 1) fail(ErrorKind::InvalidOrder, "order must be >= 1");
  if (!(fs > 0.0)) fail(ErrorKind::InvalidBand, "sampling rate must be > 0");
  if (!(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < fs / 2.0))
    fail(ErrorKind::InvalidBand, "need 0 < lo < hi < fs/2");

  const double k = 2.0 * fs;
  const double w_lo = k * std::tan(pi * lo_hz / fs);
  const double w_hi = k * std::tan(pi * hi_hz / fs);
  const double bw = w_hi - w_lo;
  const double w0_sq = w_lo * w_hi;

  std::vector<cplx> complex_poles;  // upper half plane only
  std::vector<double> real_poles;
  for (int i = 0; i < order; ++i) {
    const cplx proto = std::polar(1.0, pi * (2.0 * i + order + 1) / (2.0 * order));
    const cplx half = proto * (bw / 2.0);
    const cplx root = std::sqrt(half * half - w0_sq);
    for (const cplx s : {half + root, half - root}) {
      const cplx z = (k + s) / (k - s);
      if (std::abs(z.imag()) > 1e-12 * std::abs(z)) {
        if (z.imag() > 0.0) complex_poles.push_back(z);
      } else {
        real_poles.push_back(z.real());
      }
    }
  }
  std::sort(real_poles.begin(), real_poles.end());

  IirFilter f;
  f.fs = fs;
  f.lo_hz = lo_hz;
  f.hi_hz = hi_hz;
  f.order = order;
  // Each section carries one zero at z = 1 and one at z = -1.
  for (const auto& p : complex_poles) f.sections.push_back({1.0, 0.0, -1.0, -2.0 * p.real(), std::norm(p)});
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2)
    f.sections.push_back({1.0, 0.0, -1.0, -(real_poles[i] + real_poles[i + 1]), real_poles[i] * real_poles[i + 1]});
  if (f.sections.size() != static_cast<std::size_t>(order))
    fail(ErrorKind::InvalidBand, "pole pairing failed for this band");

  std::sort(f.sections.begin(), f.sections.end(), [](const Biquad& a, const Biquad& b) { return a.a2 < b.a2; });

  // Unit gain at the geometric band centre.
  const double f_centre = fs / pi * std::atan(std::sqrt(w0_sq) / k);
  const double g = std::pow(1.0 / std::abs(f.response(f_centre)), 1.0 / order);
  for (auto& s : f.sections) {
    s.b0 *= g;
    s.b1 *= g;
    s.b2 *= g;
    if (!s.stable()) fail(ErrorKind::InvalidBand, "designed section is unstable");
  }
  return f;
}

/// Sample-by-sample cascade state for one channel (transposed direct form II).
class SosState {
 public:
  explicit SosState(const IirFilter& f) : sections_(&f.sections), state_(f.sections.size() * 2, 0.0) {}

  double push(double x) {
    double v = x;
    for (std::size_t i = 0; i < sections_->size(); ++i) {
      const auto& s = (*sections_)[i];
      double& s1 = state_[2 * i];
      double& s2 = state_[2 * i + 1];
      const double y = s.b0 * v + s1;
      s1 = s.b1 * v - s.a1 * y + s2;
      s2 = s.b2 * v - s.a2 * y;
      v = y;
    }
    return v;
  }

  void reset() { std::fill(state_.begin(), state_.end(), 0.0); }

 private:
  const std::vector<Biquad>* sections_;
  std::vector<double> state_;
};

/// Multichannel streaming filter; one SosState per channel.
class StreamingFilter {
 public:
  StreamingFilter(const IirFilter& f, std::size_t n_channels) : filter_(f) {
    channels_.reserve(n_channels);
    for (std::size_t c = 0; c < n_channels; ++c) channels_.emplace_back(filter_);
  }
  StreamingFilter(const StreamingFilter&) = delete;
  StreamingFilter& operator=(const StreamingFilter&) = delete;

  std::size_t n_channels() const { return channels_.size(); }

  /// Filters one multichannel sample in place.
  void push(std::span<double> frame) {
    if (frame.size() != channels_.size()) fail(ErrorKind::DimensionMismatch, "frame width differs from channel count");
    for (std::size_t c = 0; c < frame.size(); ++c) frame[c] = channels_[c].push(frame[c]);
  }

 private:
  IirFilter filter_;
  std::vector<SosState> channels_;
};

inline std::vector<double> filter_causal(const IirFilter& f, std::span<const double> x) {
  SosState st(f);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = st.push(x[i]);
  return y;
}

/// Forward-backward filtering with odd reflection of 3 x (2 * order) samples at each end.
inline std::vector<double> filter_zero_phase(const IirFilter& f, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) return {x.begin(), x.end()};
  const std::size_t pad = std::min<std::size_t>(static_cast<std::size_t>(6 * f.order), n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  auto fwd = filter_causal(f, ext);
  std::reverse(fwd.begin(), fwd.end());
  auto back = filter_causal(f, fwd);
  std::reverse(back.begin(), back.end());
  return {back.begin() + static_cast<std::ptrdiff_t>(pad), back.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

inline std::vector<double> filter_samples(const IirFilter& f, std::span<const double> x, FilterMode mode) {
  return mode == FilterMode::Causal ? filter_causal(f, x) : filter_zero_phase(f, x);
}

/// Channel-wise filtering; returns a new epoch of the same shape.
inline Epoch filter_epoch(const IirFilter& f, const Epoch& e, FilterMode mode = FilterMode::Causal) {
  if (e.fs() != f.fs) fail(ErrorKind::RateMismatch, "epoch fs differs from filter fs");
  SampleMatrix out(e.n_channels(), e.n_samples());
  for (Eigen::Index c = 0; c < e.n_channels(); ++c) {
    const auto row = e.data().row(c);
    auto y = filter_samples(f, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), mode);
    out.row(c) = Eigen::Map<const Eigen::RowVectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  }
  return e.with_data(std::move(out));
}

inline EpochSet filter_set(const IirFilter& f, const EpochSet& set, FilterMode mode = FilterMode::Causal) {
  EpochSet out{set.montage, {}, set.fs, set.provenance};
  out.epochs.reserve(set.size());
  for (const auto& e : set.epochs) out.epochs.push_back(filter_epoch(f, e, mode));
  return out;
}

}  // namespace mibci
