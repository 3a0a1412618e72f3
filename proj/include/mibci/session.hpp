#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mibci/classifier.hpp"
#include "mibci/csp.hpp"
#include "mibci/dsp.hpp"
#include "mibci/error.hpp"
#include "mibci/signal_model.hpp"

namespace mibci {

/// Offsets in seconds from trial start. Feedback ends at relax.
struct TrialSchedule {
  double beep_s = 0.0;
  double cue_s = 2.0;
  double feedback_start_s = 4.0;
  double relax_s = 8.0;
  double iti_s = 2.0;
  int trials_per_run = 60;
  int runs_per_session = 2;

  double cycle_s() const { return relax_s + iti_s; }
  double run_duration_s() const { return trials_per_run * cycle_s(); }

  void validate() const {
    if (!(beep_s >= 0.0 && beep_s < cue_s && cue_s < feedback_start_s && feedback_start_s < relax_s && iti_s > 0.0))
      fail(ErrorKind::InvalidParams, "schedule needs beep < cue < feedback start < relax and iti > 0");
    if (trials_per_run < 1 || runs_per_session < 1) fail(ErrorKind::InvalidParams, "trial and run counts must be >= 1");
  }
};

enum class EventKind { Beep, Cue, ClassifierOutput, FesOn, FesOff, Relax, TrialEnd };

constexpr std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::Beep: return "Beep";
    case EventKind::Cue: return "Cue";
    case EventKind::ClassifierOutput: return "ClassifierOutput";
    case EventKind::FesOn: return "FesOn";
    case EventKind::FesOff: return "FesOff";
    case EventKind::Relax: return "Relax";
    case EventKind::TrialEnd: return "TrialEnd";
  }
  return "Unknown";
}

struct SessionEvent {
  double t = 0.0;  // seconds from run start
  EventKind kind = EventKind::Beep;
  int trial = 0;
  Label side = Label::Unlabeled;  // Cue, ClassifierOutput, FesOn, FesOff
  double score = 0.0;             // ClassifierOutput only

  friend bool operator==(const SessionEvent&, const SessionEvent&) = default;
};

enum class Phase { Idle, Beep, Cue, Feedback, Iti, Done };

struct MachineState {
  Phase phase = Phase::Idle;
  int trial = 0;     // current trial, or the next one while Idle
  int boundary = 0;  // next boundary within the trial
  double last_t = -std::numeric_limits<double>::infinity();

  friend bool operator==(const MachineState&, const MachineState&) = default;
};

struct StepResult {
  MachineState state;
  std::vector<SessionEvent> events;
};

namespace detail {
struct Boundary {
  double offset;
  std::optional<EventKind> event;
  Phase phase;
};

inline std::array<Boundary, 5> boundaries(const TrialSchedule& s) {
  return {{{s.beep_s, EventKind::Beep, Phase::Beep},
           {s.cue_s, EventKind::Cue, Phase::Cue},
           {s.feedback_start_s, std::nullopt, Phase::Feedback},
           {s.relax_s, EventKind::Relax, Phase::Iti},
           {s.cycle_s(), EventKind::TrialEnd, Phase::Idle}}};
}
}  // namespace detail

/// Advances the trial timeline to run time `t`, emitting every scheduled event in (last_t, t].
inline StepResult step_state_machine(const TrialSchedule& sched, const MachineState& state, double t) {
  if (t < state.last_t) fail(ErrorKind::NonMonotoneTime, "time went backwards");
  StepResult r{state, {}};
  auto& st = r.state;
  const auto bs = detail::boundaries(sched);
  while (st.phase != Phase::Done) {
    const auto& b = bs[static_cast<std::size_t>(st.boundary)];
    const double at = st.trial * sched.cycle_s() + b.offset;
    if (at > t) break;
    if (b.event) r.events.push_back({at, *b.event, st.trial, Label::Unlabeled, 0.0});
    st.phase = b.phase;
    if (++st.boundary == static_cast<int>(bs.size())) {
      st.boundary = 0;
      if (++st.trial == sched.trials_per_run) st.phase = Phase::Done;
    }
  }
  st.last_t = t;
  return r;
}

struct SessionConfig {
  double eval_step_s = 0.5;
  double eval_window_s = 1.5;
  bool latched_fes = false;
};

/// Everything the online loop needs: band-pass, spatial filters, classifier.
struct OnlineModel {
  IirFilter filter;
  CspModel csp;
  LdaModel lda;
};

struct TrainConfig {
  int order = 5;
  double band_lo_hz = 8.0;
  double band_hi_hz = 30.0;
  int m = 3;
  AnalysisWindow window{};
  double csp_shrinkage = 0.0;
  double lda_shrinkage = 0.01;
};

/// Causal band-pass, window, CSP on both classes, LDA on the training features.
inline OnlineModel train_online_model(const EpochSet& set, const TrainConfig& cfg = {}) {
  const auto n_l = set.count(Label::Left), n_r = set.count(Label::Right);
  if (n_l == 0 || n_r == 0) fail(ErrorKind::SingleClass, "training needs both left and right trials");
  OnlineModel om;
  om.filter = design_butterworth_bandpass(cfg.order, cfg.band_lo_hz, cfg.band_hi_hz, set.fs);
  if (cfg.window.first_sample(set.fs) + cfg.window.n_samples(set.fs) > set.n_samples())
    fail(ErrorKind::WindowTooLong, "analysis window exceeds trial length");
  std::vector<Epoch> left, right;
  for (const auto& e : set.epochs) {
    auto w = apply_window(filter_epoch(om.filter, e, FilterMode::Causal), cfg.window);
    if (e.label() == Label::Left) left.push_back(std::move(w));
    else if (e.label() == Label::Right) right.push_back(std::move(w));
  }
  CspOptions copt;
  copt.m = cfg.m;
  copt.whitening.shrinkage = cfg.csp_shrinkage;
  om.csp = csp_fit(left, right, copt);
  om.csp.montage = set.montage;
  om.csp.band_lo_hz = cfg.band_lo_hz;
  om.csp.band_hi_hz = cfg.band_hi_hz;
  om.csp.info.window = cfg.window;
  std::vector<FeatureVector> feats;
  for (const auto* group : {&left, &right})
    for (const auto& e : *group) feats.push_back(csp_features(om.csp, e));
  om.lda = lda_fit(feats, {cfg.lda_shrinkage, Label::Left});
  return om;
}

struct TrialOutcome {
  Label cue = Label::Unlabeled;
  int votes_for_cue = 0;
  int evaluations = 0;
  bool hit = false;
};

struct SessionLog {
  std::vector<SessionEvent> events;
  std::vector<TrialOutcome> outcomes;
  double online_accuracy = 0.0;
  double run_length_s = 0.0;

  std::size_t count(EventKind k) const {
    std::size_t n = 0;
    for (const auto& e : events) n += e.kind == k;
    return n;
  }
};

/// Evaluation offsets strictly inside the feedback window.
inline std::vector<double> evaluation_offsets(const TrialSchedule& s, const SessionConfig& c) {
  std::vector<double> out;
  for (int j = 1;; ++j) {
    const double off = s.feedback_start_s + j * c.eval_step_s;
    if (off >= s.relax_s - 1e-9) break;
    out.push_back(off);
  }
  return out;
}

/// Replays `stream` trial by trial as a continuous sample stream and runs the
/// closed loop: causal band-pass, CSP projection, LDA, FES gating on the cued side.
inline SessionLog run_session(const EpochSet& stream, const OnlineModel& model, const TrialSchedule& sched = {},
                              const SessionConfig& cfg = {}) {
  sched.validate();
  if (stream.fs != model.filter.fs) fail(ErrorKind::RateMismatch, "stream fs differs from model filter fs");
  if (stream.montage.channels != model.csp.montage.channels)
    fail(ErrorKind::ModelMontageMismatch, "stream montage differs from model montage");
  if (stream.size() < static_cast<std::size_t>(sched.trials_per_run))
    fail(ErrorKind::TooFewTrials, "stream holds fewer trials than the schedule needs");
  const double fs = stream.fs;
  const auto nch = static_cast<Eigen::Index>(stream.montage.size());
  const auto cycle_n = static_cast<Eigen::Index>(std::llround(sched.cycle_s() * fs));
  const auto win_n = static_cast<Eigen::Index>(std::llround(cfg.eval_window_s * fs));
  std::vector<Eigen::Index> eval_at;
  for (double off : evaluation_offsets(sched, cfg)) {
    const auto i = static_cast<Eigen::Index>(std::llround(off * fs));
    if (i + 1 < win_n) fail(ErrorKind::WindowTooLong, "evaluation window reaches before trial start");
    eval_at.push_back(i);
  }
  const auto relax_n = static_cast<Eigen::Index>(std::llround(sched.relax_s * fs));

  SessionLog log;
  StreamingFilter filt(model.filter, static_cast<std::size_t>(nch));
  MachineState st;
  SampleMatrix buf(nch, cycle_n);
  std::vector<double> frame(static_cast<std::size_t>(nch));

  for (int k = 0; k < sched.trials_per_run; ++k) {
    const auto& epoch = stream.epochs[static_cast<std::size_t>(k)];
    const Label cue = epoch.label();
    TrialOutcome outcome{cue, 0, 0, false};
    bool fes_on = false;
    std::size_t next_eval = 0;
    const double trial_start = k * sched.cycle_s();

    auto emit_schedule = [&](double t) {
      auto r = step_state_machine(sched, st, t);
      st = r.state;
      for (auto& ev : r.events) {
        if (ev.kind == EventKind::Cue) ev.side = cue;
        if (ev.kind == EventKind::Relax && fes_on) {
          log.events.push_back({ev.t, EventKind::FesOff, ev.trial, cue, 0.0});
          fes_on = false;
        }
        log.events.push_back(ev);
      }
    };

    for (Eigen::Index i = 0; i < cycle_n; ++i) {
      for (Eigen::Index c = 0; c < nch; ++c)
        frame[static_cast<std::size_t>(c)] = i < epoch.n_samples() ? epoch.data()(c, i) : 0.0;
      filt.push(frame);
      for (Eigen::Index c = 0; c < nch; ++c) buf(c, i) = frame[static_cast<std::size_t>(c)];

      // Sample i carries timestamp trial_start + i / fs.
      const double t = trial_start + static_cast<double>(i) / fs;
      emit_schedule(t);

      if (next_eval < eval_at.size() && i == eval_at[next_eval]) {
        ++next_eval;
        const SampleMatrix w = buf.middleCols(i - win_n + 1, win_n);
        const auto pred = lda_predict(model.lda, csp_features(model.csp, w));
        log.events.push_back({t, EventKind::ClassifierOutput, k, pred.label, pred.score});
        ++outcome.evaluations;
        const bool match = pred.label == cue && cue != Label::Unlabeled;
        outcome.votes_for_cue += match;
        if (match && !fes_on && i < relax_n) {
          log.events.push_back({t, EventKind::FesOn, k, cue, 0.0});
          fes_on = true;
        } else if (!match && fes_on && !cfg.latched_fes) {
          log.events.push_back({t, EventKind::FesOff, k, cue, 0.0});
          fes_on = false;
        }
      }
    }
    outcome.hit = 2 * outcome.votes_for_cue > outcome.evaluations;
    log.outcomes.push_back(outcome);
  }
  {
    auto r = step_state_machine(sched, st, sched.run_duration_s());
    st = r.state;
    log.events.insert(log.events.end(), r.events.begin(), r.events.end());
  }
  std::size_t hits = 0;
  for (const auto& o : log.outcomes) hits += o.hit;
  log.online_accuracy = static_cast<double>(hits) / static_cast<double>(log.outcomes.size());
  log.run_length_s = log.events.empty() ? 0.0 : log.events.back().t;
  return log;
}

enum class FesChannel : std::uint8_t { LeftForearm = 1, RightForearm = 2 };

struct FesCommand {
  FesChannel channel = FesChannel::LeftForearm;
  bool on = false;
  friend bool operator==(const FesCommand&, const FesCommand&) = default;
};

inline constexpr std::uint8_t kFesSync = 0xFE;
using FesFrame = std::array<std::uint8_t, 4>;

/// [0xFE, channel, state, XOR of the first three bytes].
inline FesFrame encode_fes(const FesCommand& c) {
  FesFrame f{kFesSync, static_cast<std::uint8_t>(c.channel), static_cast<std::uint8_t>(c.on ? 1 : 0), 0};
  f[3] = static_cast<std::uint8_t>(f[0] ^ f[1] ^ f[2]);
  return f;
}

inline FesCommand decode_fes(std::span<const std::uint8_t> frame) {
  if (frame.size() != 4 || frame[0] != kFesSync) fail(ErrorKind::MalformedHeader, "not a 4-byte FES frame");
  if (static_cast<std::uint8_t>(frame[0] ^ frame[1] ^ frame[2]) != frame[3]) fail(ErrorKind::BadChecksum, "FES frame checksum");
  if (frame[1] != 1 && frame[1] != 2) fail(ErrorKind::UnknownChannel, "FES channel " + std::to_string(frame[1]));
  if (frame[2] > 1) fail(ErrorKind::MalformedHeader, "FES state byte " + std::to_string(frame[2]));
  return {static_cast<FesChannel>(frame[1]), frame[2] == 1};
}

inline FesChannel fes_channel_for(Label side) {
  return side == Label::Right ? FesChannel::RightForearm : FesChannel::LeftForearm;
}

/// Frames for every FesOn / FesOff in the log, in order.
inline std::vector<FesFrame> fes_frames(const SessionLog& log) {
  std::vector<FesFrame> out;
  for (const auto& e : log.events) {
    if (e.kind == EventKind::FesOn) out.push_back(encode_fes({fes_channel_for(e.side), true}));
    if (e.kind == EventKind::FesOff) out.push_back(encode_fes({fes_channel_for(e.side), false}));
  }
  return out;
}

inline nlohmann::json to_json(const SessionEvent& e) {
  nlohmann::json j{{"t", e.t}, {"kind", std::string(to_string(e.kind))}, {"trial", e.trial}};
  if (e.kind == EventKind::Cue || e.kind == EventKind::ClassifierOutput || e.kind == EventKind::FesOn ||
      e.kind == EventKind::FesOff)
    j["side"] = std::string(to_string(e.side));
  if (e.kind == EventKind::ClassifierOutput) j["score"] = e.score;
  return j;
}

/// One JSON object per line.
inline std::string to_json_lines(const SessionLog& log) {
  std::string out;
  for (const auto& e : log.events) out += to_json(e).dump() + "\n";
  return out;
}

inline nlohmann::json session_summary(const SessionLog& log) {
  std::size_t hits = 0;
  for (const auto& o : log.outcomes) hits += o.hit;
  return {{"trials", log.outcomes.size()},
          {"hits", hits},
          {"online_accuracy", log.online_accuracy},
          {"run_length_s", log.run_length_s},
          {"cue_events", log.count(EventKind::Cue)},
          {"fes_on_events", log.count(EventKind::FesOn)},
          {"fes_off_events", log.count(EventKind::FesOff)},
          {"classifier_outputs", log.count(EventKind::ClassifierOutput)}};
}

}  // namespace mibci
