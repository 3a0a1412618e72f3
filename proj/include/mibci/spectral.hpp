#pragma once

#include <fftw3.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mibci/csp.hpp"
#include "mibci/error.hpp"
#include "mibci/signal_model.hpp"

namespace mibci {

struct Spectrum {
  std::vector<double> freqs;  // Hz
  std::vector<double> power;  // uV^2 / Hz
  std::string channel;
  Label cls = Label::Unlabeled;
  std::size_t n_trials_averaged = 1;
};

struct WelchConfig {
  double segment_s = 1.0;
  double overlap = 0.5;
  int smooth_bins = 0;  // centred moving average for display; 0 or 1 disables
};

namespace detail {

// FFTW planning is not thread-safe.
inline std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    std::lock_guard lock(fftw_plan_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_.get(), out_.get(), FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(fftw_plan_mutex());
    fftw_destroy_plan(plan_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::span<double> input() { return {in_.get(), n_}; }

  /// |X_k|^2 for k = 0..n/2.
  void power(std::span<double> out) {
    fftw_execute(plan_);
    const auto* x = out_.get();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = x[k][0] * x[k][0] + x[k][1] * x[k][1];
  }

 private:
  std::size_t n_;
  std::unique_ptr<double, FftwFree> in_;
  std::unique_ptr<fftw_complex, FftwFree> out_;
  fftw_plan plan_{};
};

inline std::vector<double> smooth(const std::vector<double>& x, int bins) {
  if (bins <= 1) return x;
  const auto half = static_cast<std::ptrdiff_t>(bins / 2);
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> y(x.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto lo = std::max<std::ptrdiff_t>(0, i - half), hi = std::min<std::ptrdiff_t>(n - 1, i + half);
    double s = 0.0;
    for (auto j = lo; j <= hi; ++j) s += x[static_cast<std::size_t>(j)];
    y[static_cast<std::size_t>(i)] = s / static_cast<double>(hi - lo + 1);
  }
  return y;
}

}  // namespace detail

/// Welch estimate: periodic Hann segments, per-segment mean removal, one-sided density.
inline Spectrum welch_psd(std::span<const double> x, double fs, const WelchConfig& cfg = {}) {
  if (!(fs > 0.0)) fail(ErrorKind::InvalidParams, "sampling rate must be > 0");
  if (!(cfg.overlap >= 0.0 && cfg.overlap < 1.0)) fail(ErrorKind::InvalidParams, "overlap must be in [0, 1)");
  const auto nseg = static_cast<std::size_t>(std::llround(cfg.segment_s * fs));
  if (nseg < 2) fail(ErrorKind::InvalidParams, "segment shorter than 2 samples");
  if (nseg > x.size()) fail(ErrorKind::WindowTooLong, "segment longer than the signal");
  const auto hop = std::max<std::size_t>(1, nseg - static_cast<std::size_t>(std::floor(cfg.overlap * static_cast<double>(nseg))));

  std::vector<double> window(nseg);
  double u = 0.0;
  for (std::size_t i = 0; i < nseg; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(nseg));
    u += window[i] * window[i];
  }

  const std::size_t nfreq = nseg / 2 + 1;
  detail::RealFft fft(nseg);
  std::vector<double> acc(nfreq, 0.0), pw(nfreq);
  std::size_t count = 0;
  for (std::size_t start = 0; start + nseg <= x.size(); start += hop) {
    double mean = 0.0;
    for (std::size_t i = 0; i < nseg; ++i) mean += x[start + i];
    mean /= static_cast<double>(nseg);
    auto in = fft.input();
    for (std::size_t i = 0; i < nseg; ++i) in[i] = (x[start + i] - mean) * window[i];
    fft.power(pw);
    for (std::size_t k = 0; k < nfreq; ++k) acc[k] += pw[k];
    ++count;
  }

  Spectrum s;
  s.freqs.resize(nfreq);
  s.power.resize(nfreq);
  const double scale = 1.0 / (fs * u * static_cast<double>(count));
  for (std::size_t k = 0; k < nfreq; ++k) {
    s.freqs[k] = static_cast<double>(k) * fs / static_cast<double>(nseg);
    const bool edge = k == 0 || (nseg % 2 == 0 && k == nseg / 2);
    s.power[k] = acc[k] * scale * (edge ? 1.0 : 2.0);
  }
  s.power = detail::smooth(s.power, cfg.smooth_bins);
  return s;
}

inline Spectrum welch_psd(const Epoch& e, const Montage& montage, std::string_view channel, const WelchConfig& cfg = {}) {
  const auto idx = montage.index_of(channel);
  if (!idx) fail(ErrorKind::UnknownChannel, std::string(channel));
  if (static_cast<Eigen::Index>(*idx) >= e.n_channels()) fail(ErrorKind::ShapeMismatch, "epoch lacks channel row");
  const auto row = e.data().row(static_cast<Eigen::Index>(*idx));
  auto s = welch_psd(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), e.fs(), cfg);
  s.channel = std::string(channel);
  s.cls = e.label();
  return s;
}

/// Per-class arithmetic mean of per-trial spectra at one channel: {left, right}.
inline std::pair<Spectrum, Spectrum> class_average_psd(const EpochSet& set, std::string_view channel,
                                                       const WelchConfig& cfg = {}) {
  if (!set.montage.index_of(channel)) fail(ErrorKind::UnknownChannel, std::string(channel));
  auto average = [&](Label cls) {
    Spectrum mean;
    std::size_t n = 0;
    for (const auto& e : set.epochs) {
      if (e.label() != cls) continue;
      auto s = welch_psd(e, set.montage, channel, cfg);
      if (n == 0) {
        mean = std::move(s);
      } else {
        for (std::size_t k = 0; k < mean.power.size(); ++k) mean.power[k] += s.power[k];
      }
      ++n;
    }
    if (n == 0) fail(ErrorKind::EmptyClass, std::string("no ") + std::string(to_string(cls)) + " trials");
    for (auto& p : mean.power) p /= static_cast<double>(n);
    mean.cls = cls;
    mean.n_trials_averaged = n;
    return mean;
  };
  return {average(Label::Left), average(Label::Right)};
}

/// Trapezoidal integral of power over [lo, hi], endpoints linearly interpolated.
inline double band_power(const Spectrum& s, double lo, double hi) {
  if (s.freqs.size() < 2) fail(ErrorKind::BandOutOfRange, "spectrum has fewer than 2 bins");
  if (!(lo < hi) || lo < s.freqs.front() || hi > s.freqs.back())
    fail(ErrorKind::BandOutOfRange, "band outside frequency grid");
  auto at = [&](double f) {
    auto it = std::upper_bound(s.freqs.begin(), s.freqs.end(), f);
    if (it == s.freqs.end()) return s.power.back();
    const auto k = static_cast<std::size_t>(it - s.freqs.begin());
    const double t = (f - s.freqs[k - 1]) / (s.freqs[k] - s.freqs[k - 1]);
    return s.power[k - 1] + t * (s.power[k] - s.power[k - 1]);
  };
  double total = 0.0;
  double f_prev = lo, p_prev = at(lo);
  for (std::size_t k = 0; k < s.freqs.size(); ++k) {
    if (s.freqs[k] <= lo) continue;
    if (s.freqs[k] >= hi) break;
    total += 0.5 * (p_prev + s.power[k]) * (s.freqs[k] - f_prev);
    f_prev = s.freqs[k];
    p_prev = s.power[k];
  }
  total += 0.5 * (p_prev + at(hi)) * (hi - f_prev);
  return total;
}

/// Plot-ready CSV: '#' metadata lines, then freq_hz,power.
inline std::string spectrum_csv(const Spectrum& s, const std::string& extra_meta = {}) {
  std::ostringstream out;
  out.precision(17);
  out << "# channel=" << s.channel << "\n# class=" << to_string(s.cls) << "\n# n_trials_averaged=" << s.n_trials_averaged
      << "\n";
  if (!extra_meta.empty()) out << "# provenance=" << extra_meta << "\n";
  out << "freq_hz,power\n";
  for (std::size_t k = 0; k < s.freqs.size(); ++k) out << s.freqs[k] << ',' << s.power[k] << '\n';
  return out.str();
}

enum class PatternWhich { First, Last };

constexpr std::string_view to_string(PatternWhich w) { return w == PatternWhich::First ? "first" : "last"; }

struct PatternMap {
  std::vector<std::string> channels;
  std::vector<Coord> coords;
  std::vector<double> weights;
  PatternWhich which = PatternWhich::First;

  std::size_t abs_max_index() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < weights.size(); ++i)
      if (std::abs(weights[i]) > std::abs(weights[best])) best = i;
    return best;
  }
  const std::string& abs_max_channel() const { return channels.at(abs_max_index()); }

  friend bool operator==(const PatternMap&, const PatternMap&) = default;
};

/// Column of W^-1 for the first or last retained filter, paired with montage coordinates.
inline PatternMap spatial_pattern(const CspModel& model, PatternWhich which) {
  if (model.patterns.cols() == 0) fail(ErrorKind::InvalidParams, "model has no patterns");
  if (static_cast<Eigen::Index>(model.montage.size()) != model.patterns.rows())
    fail(ErrorKind::ModelMontageMismatch, "pattern length differs from montage");
  const auto col = which == PatternWhich::First ? 0 : model.patterns.cols() - 1;
  PatternMap p;
  p.which = which;
  p.channels = model.montage.channels;
  p.coords = model.montage.coords;
  for (Eigen::Index i = 0; i < model.patterns.rows(); ++i) p.weights.push_back(model.patterns(i, col));
  return p;
}

inline nlohmann::json to_json(const PatternMap& p) {
  nlohmann::json rec = nlohmann::json::array();
  for (std::size_t i = 0; i < p.channels.size(); ++i)
    rec.push_back({{"channel", p.channels[i]}, {"x", p.coords[i].x}, {"y", p.coords[i].y}, {"weight", p.weights[i]}});
  return {{"which", std::string(to_string(p.which))}, {"abs_max_channel", p.abs_max_channel()}, {"records", rec}};
}

inline PatternMap pattern_from_json(const nlohmann::json& j) {
  PatternMap p;
  p.which = j.at("which").get<std::string>() == "first" ? PatternWhich::First : PatternWhich::Last;
  for (const auto& r : j.at("records")) {
    p.channels.push_back(r.at("channel").get<std::string>());
    p.coords.push_back({r.at("x").get<double>(), r.at("y").get<double>()});
    p.weights.push_back(r.at("weight").get<double>());
  }
  return p;
}

/// Writes `path` (JSON records) and a sibling .csv; returns the map.
inline PatternMap export_spatial_pattern(const CspModel& model, PatternWhich which, const std::filesystem::path& path,
                                         const nlohmann::json& provenance = nullptr) {
  auto p = spatial_pattern(model, which);
  auto j = to_json(p);
  if (!provenance.is_null()) j["provenance"] = provenance;
  {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
    out << j.dump(2) << '\n';
  }
  auto csv_path = path;
  csv_path.replace_extension(".csv");
  std::ofstream csv(csv_path);
  if (!csv) fail(ErrorKind::IoFailure, "cannot write " + csv_path.string());
  csv.precision(17);
  csv << "# which=" << to_string(which) << '\n';
  if (!provenance.is_null()) {
    auto stable = provenance;
    stable.erase("timestamp");
    csv << "# provenance=" << stable.dump() << '\n';
  }
  csv << "channel,x,y,weight\n";
  for (std::size_t i = 0; i < p.channels.size(); ++i)
    csv << p.channels[i] << ',' << p.coords[i].x << ',' << p.coords[i].y << ',' << p.weights[i] << '\n';
  return p;
}

inline PatternMap load_pattern_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
  try {
    return pattern_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::MalformedHeader, e.what());
  }
}

}  // namespace mibci
