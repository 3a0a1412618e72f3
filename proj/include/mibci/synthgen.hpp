#pragma once

// Lateralized ERD generator with known ground truth.
//
// Each channel carries independent 1/f-shaped background plus two rhythm
// sources (mu + beta) located at C3 and C4, mixed with Gaussian spatial
// falloff. From the cue until relax, the source contralateral to the
// imagined hand is scaled by (1 - erd_depth).

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"
#include "mibci/error.hpp"
#include "mibci/rng.hpp"
#include "mibci/signal_model.hpp"
#include "mibci/spectral.hpp"

namespace mibci {

struct GenParams {
  int n_trials_per_class = 60;
  double fs = kDefaultFs;
  double trial_s = 8.0;
  double erd_depth = 0.8;
  double mu_hz = 10.0;
  double beta_hz = 20.0;
  double snr_db = 6.0;
  double source_spread = 0.25;
  std::uint64_t seed = 0;
  double cue_s = 2.0;
  double relax_s = 8.0;
  double background_rms_uv = 10.0;
};

inline void validate(const GenParams& p) {
  auto bad = [](const std::string& m) { fail(ErrorKind::InvalidParams, m); };
  if (p.n_trials_per_class < 1) bad("n_trials_per_class must be >= 1");
  if (!(p.fs > 0.0)) bad("fs must be > 0");
  if (!(p.erd_depth >= 0.0 && p.erd_depth <= 1.0)) bad("erd_depth must be in [0, 1]");
  if (!std::isfinite(p.snr_db)) bad("snr_db must be finite");
  if (!(p.source_spread > 0.0)) bad("source_spread must be > 0");
  if (!(p.mu_hz > 0.0 && p.beta_hz > 0.0 && p.beta_hz < p.fs / 2.0)) bad("rhythm frequencies must lie in (0, fs/2)");
  if (!(p.cue_s >= 0.0 && p.cue_s < p.trial_s)) bad("cue must fall inside the trial");
  if (std::llround(p.trial_s * p.fs) < 2) bad("trial too short");
  if (!(p.background_rms_uv > 0.0)) bad("background_rms_uv must be > 0");
}

inline constexpr std::array<std::string_view, 2> kSourceChannels{"C3", "C4"};

/// Channel whose source is desynchronized for a given imagined hand.
constexpr std::string_view contralateral_channel(Label l) {
  return l == Label::Right ? "C3" : l == Label::Left ? "C4" : "";
}

/// Gaussian falloff weight of `source` on every montage channel.
inline std::vector<double> mixing_weights(const Montage& m, Coord source, double spread) {
  std::vector<double> w;
  for (const auto& c : m.coords) {
    const double dx = c.x - source.x, dy = c.y - source.y;
    w.push_back(std::exp(-(dx * dx + dy * dy) / (2.0 * spread * spread)));
  }
  return w;
}

namespace detail {

enum : std::uint64_t { kStreamLabels = 1, kStreamTrial = 2 };

// White Gaussian noise shaped to an amplitude spectrum ~ 1/sqrt(max(f, 1 Hz)),
// scaled so its expected RMS is `rms`.
class PinkNoise {
 public:
  PinkNoise(std::size_t n, double fs) : n_(n), gain_(n / 2 + 1) {
    double energy = 0.0;
    for (std::size_t k = 0; k < gain_.size(); ++k) {
      const double f = static_cast<double>(k) * fs / static_cast<double>(n);
      gain_[k] = k == 0 ? 0.0 : 1.0 / std::sqrt(std::max(f, 1.0));
      const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
      energy += (edge ? 1.0 : 2.0) * gain_[k] * gain_[k];
    }
    unit_scale_ = 1.0 / std::sqrt(energy / static_cast<double>(n));
    buf_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    spec_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * gain_.size()));
    std::lock_guard lock(fftw_plan_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), buf_, spec_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_, buf_, FFTW_ESTIMATE);
  }
  ~PinkNoise() {
    std::lock_guard lock(fftw_plan_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(buf_);
    fftw_free(spec_);
  }
  PinkNoise(const PinkNoise&) = delete;
  PinkNoise& operator=(const PinkNoise&) = delete;

  void fill(Rng& rng, double rms, std::span<double> out) {
    for (std::size_t i = 0; i < n_; ++i) buf_[i] = rng.normal();
    fftw_execute(fwd_);
    for (std::size_t k = 0; k < gain_.size(); ++k) {
      spec_[k][0] *= gain_[k];
      spec_[k][1] *= gain_[k];
    }
    fftw_execute(inv_);
    const double s = rms * unit_scale_ / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = buf_[i] * s;
  }

 private:
  std::size_t n_;
  std::vector<double> gain_;
  double unit_scale_ = 1.0;
  double* buf_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan fwd_{}, inv_{};
};

inline constexpr double kBetaRelAmplitude = 0.5;
inline constexpr double kAmDepth = 0.3;

}  // namespace detail

/// Peak amplitude of the mu component such that rhythm variance / background variance = snr.
inline double rhythm_amplitude(const GenParams& p) {
  const double rhythm_var = 0.5 * (1.0 + detail::kBetaRelAmplitude * detail::kBetaRelAmplitude);
  return p.background_rms_uv * std::sqrt(std::pow(10.0, p.snr_db / 10.0) / rhythm_var);
}

/// Labels for the whole set: n left + n right in seeded random order.
inline std::vector<Label> generate_labels(const GenParams& p) {
  std::vector<Label> labels;
  for (int i = 0; i < p.n_trials_per_class; ++i) labels.push_back(Label::Left);
  for (int i = 0; i < p.n_trials_per_class; ++i) labels.push_back(Label::Right);
  Rng rng(derive_seed(p.seed, detail::kStreamLabels));
  rng.shuffle(std::span<Label>(labels));
  return labels;
}

/// One trial from its own sub-seed; independent of generation order.
inline Epoch generate_trial(const GenParams& p, const Montage& montage, std::size_t index, Label label) {
  const auto n = static_cast<std::size_t>(std::llround(p.trial_s * p.fs));
  const auto nch = montage.size();
  Rng rng(derive_seed(p.seed, detail::kStreamTrial, index));

  SampleMatrix d(static_cast<Eigen::Index>(nch), static_cast<Eigen::Index>(n));
  {
    detail::PinkNoise pink(n, p.fs);
    std::vector<double> row(n);
    for (std::size_t c = 0; c < nch; ++c) {
      pink.fill(rng, p.background_rms_uv, row);
      for (std::size_t t = 0; t < n; ++t) d(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = row[t];
    }
  }

  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double amp = rhythm_amplitude(p);
  const auto cue = static_cast<std::size_t>(std::llround(p.cue_s * p.fs));
  const auto imagery_end = std::min(n, static_cast<std::size_t>(std::llround(p.relax_s * p.fs)));
  for (auto src_name : kSourceChannels) {
    const Coord src = standard_coord(src_name).value();
    const auto w = mixing_weights(montage, src, p.source_spread);
    const double mu = p.mu_hz + rng.uniform(-0.5, 0.5);
    const double beta = p.beta_hz + rng.uniform(-1.0, 1.0);
    const double ph_mu = rng.uniform(0.0, two_pi);
    const double ph_beta = rng.uniform(0.0, two_pi);
    const double f_am = rng.uniform(0.2, 0.6);
    const double ph_am = rng.uniform(0.0, two_pi);
    const double gain = amp * std::exp(0.1 * rng.normal());
    const bool desync = contralateral_channel(label) == src_name;
    for (std::size_t t = 0; t < n; ++t) {
      const double ts = static_cast<double>(t) / p.fs;
      double s = gain * (1.0 + detail::kAmDepth * std::sin(two_pi * f_am * ts + ph_am)) *
                 (std::sin(two_pi * mu * ts + ph_mu) + detail::kBetaRelAmplitude * std::sin(two_pi * beta * ts + ph_beta));
      if (desync && t >= cue && t < imagery_end) s *= 1.0 - p.erd_depth;
      for (std::size_t c = 0; c < nch; ++c) d(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) += w[c] * s;
    }
  }
  // Keep generated data exactly representable in the f32 container.
  d = d.cast<float>().cast<double>();
  return Epoch(std::move(d), p.fs, label, TrialTiming{0.0, p.cue_s, p.relax_s});
}

inline EpochSet generate_dataset(const GenParams& p, const Montage& montage = Montage::standard16()) {
  validate(p);
  for (auto src : kSourceChannels)
    if (!montage.index_of(src)) fail(ErrorKind::InvalidParams, "montage lacks source channel " + std::string(src));
  EpochSet set;
  set.montage = montage;
  set.fs = p.fs;
  set.provenance = "synthgen seed=" + std::to_string(p.seed);
  const auto labels = generate_labels(p);
  set.epochs.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) set.epochs.push_back(generate_trial(p, montage, i, labels[i]));
  return set;
}

struct BandPowerExpectation {
  std::string channel;
  Label lower;   // class with the lower 8-30 Hz power at `channel`
  Label higher;
};

struct GroundTruth {
  std::vector<std::string> source_channels;
  std::vector<Coord> source_coords;
  double imagery_start_s = 0.0;
  double imagery_end_s = 0.0;
  double band_lo_hz = 8.0;
  double band_hi_hz = 30.0;
  double erd_depth = 0.0;
  double rhythm_amplitude_uv = 0.0;
  bool indistinguishable = false;
  std::vector<BandPowerExpectation> expectations;
};

inline GroundTruth ground_truth(const GenParams& p) {
  GroundTruth g;
  for (auto s : kSourceChannels) {
    g.source_channels.emplace_back(s);
    g.source_coords.push_back(standard_coord(s).value());
  }
  g.imagery_start_s = p.cue_s;
  g.imagery_end_s = std::min(p.relax_s, p.trial_s);
  g.erd_depth = p.erd_depth;
  g.rhythm_amplitude_uv = rhythm_amplitude(p);
  g.indistinguishable = p.erd_depth == 0.0;
  if (!g.indistinguishable) {
    g.expectations.push_back({"C3", Label::Right, Label::Left});
    g.expectations.push_back({"C4", Label::Left, Label::Right});
  }
  return g;
}

inline nlohmann::json to_json(const GenParams& p) {
  return {{"n_trials_per_class", p.n_trials_per_class}, {"fs", p.fs}, {"trial_s", p.trial_s},
          {"erd_depth", p.erd_depth}, {"mu_hz", p.mu_hz}, {"beta_hz", p.beta_hz}, {"snr_db", p.snr_db},
          {"source_spread", p.source_spread}, {"seed", p.seed}, {"cue_s", p.cue_s}, {"relax_s", p.relax_s},
          {"background_rms_uv", p.background_rms_uv}};
}

inline nlohmann::json to_json(const GroundTruth& g) {
  nlohmann::json src = nlohmann::json::array();
  for (std::size_t i = 0; i < g.source_channels.size(); ++i)
    src.push_back({{"channel", g.source_channels[i]}, {"x", g.source_coords[i].x}, {"y", g.source_coords[i].y}});
  nlohmann::json exp = nlohmann::json::array();
  for (const auto& e : g.expectations)
    exp.push_back({{"channel", e.channel}, {"lower", std::string(to_string(e.lower))},
                   {"higher", std::string(to_string(e.higher))}});
  return {{"sources", src},
          {"imagery_window_s", {g.imagery_start_s, g.imagery_end_s}},
          {"band_hz", {g.band_lo_hz, g.band_hi_hz}},
          {"erd_depth", g.erd_depth},
          {"rhythm_amplitude_uv", g.rhythm_amplitude_uv},
          {"indistinguishable", g.indistinguishable},
          {"band_power_ordering", g.indistinguishable ? nlohmann::json("indistinguishable") : exp}};
}

}  // namespace mibci
