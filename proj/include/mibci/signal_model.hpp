#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mibci/error.hpp"

namespace mibci {

/// Channels x samples, one contiguous row per channel.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kDefaultFs = 256.0;

enum class Label : int { Left = -1, Unlabeled = 0, Right = 1 };

constexpr std::string_view to_string(Label l) {
  switch (l) {
    case Label::Left: return "left";
    case Label::Right: return "right";
    case Label::Unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

constexpr Label opposite(Label l) {
  return l == Label::Left ? Label::Right : l == Label::Right ? Label::Left : Label::Unlabeled;
}

struct Coord {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

namespace detail {
struct ElectrodePosition {
  std::string_view name;
  Coord coord;
};

// Unit-disc projection of the 10-20 positions used by the default cap.
// Left is -x, anterior is +y.
inline constexpr std::array<ElectrodePosition, 16> kStandardPositions{{
    {"FC3", {-0.35, 0.25}}, {"FCZ", {0.0, 0.25}},   {"FC4", {0.35, 0.25}},
    {"C5", {-0.6, 0.0}},    {"C3", {-0.4, 0.0}},    {"C1", {-0.2, 0.0}},
    {"CZ", {0.0, 0.0}},     {"C2", {0.2, 0.0}},     {"C4", {0.4, 0.0}},
    {"C6", {0.6, 0.0}},     {"CP3", {-0.35, -0.25}}, {"CP1", {-0.175, -0.25}},
    {"CPZ", {0.0, -0.25}},  {"CP2", {0.175, -0.25}}, {"CP4", {0.35, -0.25}},
    {"PZ", {0.0, -0.4}},
}};
}  // namespace detail

/// Standard coordinate for a known electrode name, if bundled.
inline std::optional<Coord> standard_coord(std::string_view name) {
  for (const auto& p : detail::kStandardPositions)
    if (p.name == name) return p.coord;
  return std::nullopt;
}

struct Montage {
  std::vector<std::string> channels;
  std::vector<Coord> coords;
  std::string reference_note;

  std::size_t size() const { return channels.size(); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    auto it = std::find(channels.begin(), channels.end(), name);
    if (it == channels.end()) return std::nullopt;
    return static_cast<std::size_t>(it - channels.begin());
  }

  /// The 16-channel cap: FC3 FCZ FC4 C5 C3 C1 CZ C2 C4 C6 CP3 CP1 CPZ CP2 CP4 PZ.
  static Montage standard16() {
    Montage m;
    for (const auto& p : detail::kStandardPositions) {
      m.channels.emplace_back(p.name);
      m.coords.push_back(p.coord);
    }
    m.reference_note = "REF right mastoid, GND forehead";
    return m;
  }

  /// Montage over `names`; coordinates come from the bundled table, (0,0) when unknown.
  static Montage from_names(std::vector<std::string> names) {
    Montage m;
    m.channels = std::move(names);
    for (const auto& n : m.channels) m.coords.push_back(standard_coord(n).value_or(Coord{}));
    return m;
  }

  friend bool operator==(const Montage&, const Montage&) = default;
};

/// Optional timing annotations, seconds relative to trial start.
struct TrialTiming {
  double beep_s = 0.0;
  double cue_s = 2.0;
  double relax_s = 8.0;
  friend bool operator==(const TrialTiming&, const TrialTiming&) = default;
};

/// One trial of EEG, N channels x T samples in microvolts. Immutable.
class Epoch {
 public:
  Epoch(SampleMatrix data, double fs, Label label = Label::Unlabeled,
        std::optional<TrialTiming> timing = std::nullopt)
      : data_(std::move(data)), fs_(fs), label_(label), timing_(timing) {
    if (!(fs_ > 0.0) || !std::isfinite(fs_)) fail(ErrorKind::InvalidParams, "sampling rate must be > 0");
    if (data_.cols() < 2) fail(ErrorKind::ShapeMismatch, "epoch needs at least 2 samples");
    if (data_.rows() < 1) fail(ErrorKind::ShapeMismatch, "epoch needs at least 1 channel");
    if (!data_.allFinite()) fail(ErrorKind::NonFiniteSample, "epoch contains non-finite samples");
  }

  const SampleMatrix& data() const { return data_; }
  double fs() const { return fs_; }
  Label label() const { return label_; }
  const std::optional<TrialTiming>& timing() const { return timing_; }
  Eigen::Index n_channels() const { return data_.rows(); }
  Eigen::Index n_samples() const { return data_.cols(); }

  Epoch with_label(Label l) const { return Epoch(data_, fs_, l, timing_); }
  Epoch with_data(SampleMatrix d) const { return Epoch(std::move(d), fs_, label_, timing_); }

  /// Samples [first, first + count) of every channel.
  Epoch window(Eigen::Index first, Eigen::Index count) const {
    if (first < 0 || count < 2 || first + count > n_samples())
      fail(ErrorKind::ShapeMismatch, "window exceeds epoch bounds");
    return Epoch(data_.middleCols(first, count), fs_, label_, timing_);
  }

  friend bool operator==(const Epoch& a, const Epoch& b) {
    return a.fs_ == b.fs_ && a.label_ == b.label_ && a.data_.rows() == b.data_.rows() &&
           a.data_.cols() == b.data_.cols() && a.data_ == b.data_;
  }

 private:
  SampleMatrix data_;
  double fs_;
  Label label_;
  std::optional<TrialTiming> timing_;
};

struct EpochSet {
  Montage montage;
  std::vector<Epoch> epochs;
  double fs = kDefaultFs;
  std::string provenance;

  std::size_t size() const { return epochs.size(); }
  Eigen::Index n_channels() const { return static_cast<Eigen::Index>(montage.size()); }
  Eigen::Index n_samples() const { return epochs.empty() ? 0 : epochs.front().n_samples(); }

  std::size_t count(Label l) const {
    return static_cast<std::size_t>(
        std::count_if(epochs.begin(), epochs.end(), [l](const Epoch& e) { return e.label() == l; }));
  }

  std::vector<std::size_t> indices_of(Label l) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < epochs.size(); ++i)
      if (epochs[i].label() == l) out.push_back(i);
    return out;
  }

  EpochSet subset(const std::vector<std::size_t>& idx) const {
    EpochSet s{montage, {}, fs, provenance};
    s.epochs.reserve(idx.size());
    for (auto i : idx) s.epochs.push_back(epochs.at(i));
    return s;
  }

  friend bool operator==(const EpochSet& a, const EpochSet& b) {
    return a.montage.channels == b.montage.channels && a.fs == b.fs && a.epochs == b.epochs;
  }
};

enum class ViolationKind { DuplicateChannel, CoordOutOfDisc, CoordCountMismatch, ChannelCountMismatch,
                           SampleCountMismatch, RateMismatch, NonFiniteSample };

constexpr std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::DuplicateChannel: return "DuplicateChannel";
    case ViolationKind::CoordOutOfDisc: return "CoordOutOfDisc";
    case ViolationKind::CoordCountMismatch: return "CoordCountMismatch";
    case ViolationKind::ChannelCountMismatch: return "ChannelCountMismatch";
    case ViolationKind::SampleCountMismatch: return "SampleCountMismatch";
    case ViolationKind::RateMismatch: return "RateMismatch";
    case ViolationKind::NonFiniteSample: return "NonFiniteSample";
  }
  return "Unknown";
}

struct Violation {
  ViolationKind kind;
  std::optional<std::size_t> channel;
  std::optional<std::size_t> trial;
  std::string detail;
};

/// Diagnoses montage and shape invariants; empty iff the set is well-formed.
inline std::vector<Violation> validate_montage(const EpochSet& set) {
  std::vector<Violation> out;
  const auto& m = set.montage;
  std::unordered_set<std::string> seen;
  for (std::size_t c = 0; c < m.channels.size(); ++c) {
    if (!seen.insert(m.channels[c]).second)
      out.push_back({ViolationKind::DuplicateChannel, c, std::nullopt, m.channels[c]});
  }
  if (m.coords.size() != m.channels.size()) {
    out.push_back({ViolationKind::CoordCountMismatch, std::nullopt, std::nullopt,
                   std::to_string(m.coords.size()) + " coords for " + std::to_string(m.channels.size()) +
                       " channels"});
  }
  for (std::size_t c = 0; c < m.coords.size(); ++c) {
    const auto [x, y] = m.coords[c];
    if (!(x * x + y * y <= 1.0))
      out.push_back({ViolationKind::CoordOutOfDisc, c, std::nullopt,
                     c < m.channels.size() ? m.channels[c] : std::string{}});
  }
  const auto n_ch = static_cast<Eigen::Index>(m.channels.size());
  const auto n_s = set.n_samples();
  for (std::size_t t = 0; t < set.epochs.size(); ++t) {
    const auto& e = set.epochs[t];
    if (e.n_channels() != n_ch)
      out.push_back({ViolationKind::ChannelCountMismatch, std::nullopt, t,
                     std::to_string(e.n_channels()) + " rows, expected " + std::to_string(n_ch)});
    if (e.n_samples() != n_s)
      out.push_back({ViolationKind::SampleCountMismatch, std::nullopt, t,
                     std::to_string(e.n_samples()) + " samples, expected " + std::to_string(n_s)});
    if (e.fs() != set.fs) out.push_back({ViolationKind::RateMismatch, std::nullopt, t, {}});
  }
  return out;
}

/// Throws on the first invariant violation.
inline void require_valid(const EpochSet& set) {
  auto v = validate_montage(set);
  if (v.empty()) return;
  const auto& f = v.front();
  std::string msg = std::string(to_string(f.kind));
  if (f.trial) msg += " at trial " + std::to_string(*f.trial);
  if (f.channel) msg += " at channel " + std::to_string(*f.channel);
  if (!f.detail.empty()) msg += " (" + f.detail + ")";
  switch (f.kind) {
    case ViolationKind::ChannelCountMismatch:
    case ViolationKind::SampleCountMismatch:
    case ViolationKind::CoordCountMismatch: fail(ErrorKind::ShapeMismatch, msg);
    case ViolationKind::RateMismatch: fail(ErrorKind::RateMismatch, msg);
    case ViolationKind::NonFiniteSample: fail(ErrorKind::NonFiniteSample, msg);
    default: fail(ErrorKind::InvalidParams, msg);
  }
}

}  // namespace mibci
