#include <gtest/gtest.h>

#include "support.hpp"

using namespace mibci;

namespace {

EpochSet stream(double erd, std::uint64_t seed, int per_class = 30) {
  GenParams p;
  p.erd_depth = erd;
  p.seed = seed;
  p.n_trials_per_class = per_class;
  p.trial_s = 10.0;
  return generate_dataset(p);
}

const OnlineModel& calibrated_model() {
  static const OnlineModel m = [] {
    GenParams p;
    p.seed = 500;
    return train_online_model(generate_dataset(p));
  }();
  return m;
}

const SessionLog& strong_log() {
  static const SessionLog log = run_session(stream(0.8, 501), calibrated_model());
  return log;
}

void expect_fes_safety(const SessionLog& log, const TrialSchedule& sched) {
  std::vector<Label> cue_of(static_cast<std::size_t>(sched.trials_per_run), Label::Unlabeled);
  std::vector<int> open(static_cast<std::size_t>(sched.trials_per_run), 0);
  double prev_t = -1.0;
  for (const auto& e : log.events) {
    EXPECT_GE(e.t, prev_t);
    prev_t = e.t;
    const double offset = e.t - e.trial * sched.cycle_s();
    const auto k = static_cast<std::size_t>(e.trial);
    if (e.kind == EventKind::Cue) cue_of[k] = e.side;
    if (e.kind == EventKind::FesOn) {
      EXPECT_GT(offset, sched.feedback_start_s);
      EXPECT_LT(offset, sched.relax_s);
      EXPECT_EQ(e.side, cue_of[k]);
      ++open[k];
    }
    if (e.kind == EventKind::FesOff) {
      EXPECT_EQ(open[k], 1);
      EXPECT_LE(offset, sched.relax_s);
      --open[k];
    }
  }
  for (int o : open) EXPECT_EQ(o, 0);
}

}  // namespace

TEST(Schedule, DefaultsAndRunArithmetic) {
  const TrialSchedule s;
  EXPECT_EQ(s.cycle_s(), 10.0);
  EXPECT_EQ(s.run_duration_s(), 600.0);
  EXPECT_EQ(s.trials_per_run, 60);
  EXPECT_EQ(s.runs_per_session, 2);
  EXPECT_EQ(s.relax_s - s.feedback_start_s, 4.0);
  TrialSchedule bad;
  bad.cue_s = 5.0;
  EXPECT_ERROR_KIND(bad.validate(), ErrorKind::InvalidParams);
}

TEST(StateMachine, ProtocolTimingPoints) {
  const TrialSchedule s;
  auto r = step_state_machine(s, {}, 0.0);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].kind, EventKind::Beep);
  EXPECT_EQ(r.state.phase, Phase::Beep);

  r = step_state_machine(s, r.state, 2.0);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].kind, EventKind::Cue);
  EXPECT_EQ(r.events[0].t, 2.0);

  r = step_state_machine(s, r.state, 4.0);
  EXPECT_TRUE(r.events.empty());
  EXPECT_EQ(r.state.phase, Phase::Feedback);

  r = step_state_machine(s, r.state, 8.0);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].kind, EventKind::Relax);
  EXPECT_EQ(r.state.phase, Phase::Iti);

  r = step_state_machine(s, r.state, 9.9);
  EXPECT_TRUE(r.events.empty());
  EXPECT_EQ(r.state.phase, Phase::Iti);

  r = step_state_machine(s, r.state, 10.0);
  ASSERT_EQ(r.events.size(), 2u);
  EXPECT_EQ(r.events[0].kind, EventKind::TrialEnd);
  EXPECT_EQ(r.events[0].trial, 0);
  EXPECT_EQ(r.events[1].kind, EventKind::Beep);
  EXPECT_EQ(r.events[1].trial, 1);
}

TEST(StateMachine, IsPureAndRejectsTimeGoingBackwards) {
  const TrialSchedule s;
  const auto a = step_state_machine(s, {}, 3.0);
  const auto b = step_state_machine(s, {}, 3.0);
  ASSERT_EQ(a.events.size(), b.events.size());
  EXPECT_EQ(a.state.boundary, b.state.boundary);
  EXPECT_EQ(a.state.phase, Phase::Cue);
  EXPECT_ERROR_KIND(step_state_machine(s, a.state, 2.5), ErrorKind::NonMonotoneTime);
}

TEST(StateMachine, WholeRunEndsDone) {
  const TrialSchedule s;
  const auto r = step_state_machine(s, {}, 1e6);
  EXPECT_EQ(r.state.phase, Phase::Done);
  std::size_t cues = 0;
  for (const auto& e : r.events) cues += e.kind == EventKind::Cue;
  EXPECT_EQ(cues, 60u);
  EXPECT_EQ(r.events.back().kind, EventKind::TrialEnd);
  EXPECT_EQ(r.events.back().t, 600.0);
}

TEST(Session, EvaluationInstantsLieInTheFeedbackWindow) {
  const auto offs = evaluation_offsets({}, {});
  ASSERT_FALSE(offs.empty());
  for (double o : offs) {
    EXPECT_GT(o, 4.0);
    EXPECT_LT(o, 8.0);
  }
  EXPECT_EQ(offs.front(), 4.5);
}

TEST(Session, StrongErdRunIsAccurate) {
  const auto& log = strong_log();
  EXPECT_GE(log.online_accuracy, 0.90);
  EXPECT_EQ(log.count(EventKind::Cue), 60u);
  EXPECT_NEAR(log.run_length_s, 600.0, 1.0 / 256.0);
  EXPECT_GE(log.events.back().t, 598.0);
  EXPECT_LE(log.events.back().t, 600.0);
  std::size_t hits = 0;
  for (const auto& o : log.outcomes) hits += o.hit;
  EXPECT_EQ(log.online_accuracy, static_cast<double>(hits) / 60.0);
  expect_fes_safety(log, {});
}

TEST(Session, NullRunIsAtChance) {
  const auto log = run_session(stream(0.0, 502), calibrated_model());
  EXPECT_NEAR(log.online_accuracy, 0.5, 0.10);
  EXPECT_EQ(log.count(EventKind::Cue), 60u);
  expect_fes_safety(log, {});
}

TEST(Session, ShortTrialsArePaddedThroughTheInterTrialInterval) {
  GenParams p;
  p.seed = 503;
  p.n_trials_per_class = 30;
  const auto log = run_session(generate_dataset(p), calibrated_model());
  EXPECT_EQ(log.count(EventKind::Cue), 60u);
  EXPECT_EQ(log.run_length_s, 600.0);
  expect_fes_safety(log, {});
}

TEST(Session, LatchedModeKeepsStimulationUntilRelax) {
  const auto log = run_session(stream(0.5, 504), calibrated_model(), {}, {.latched_fes = true});
  const TrialSchedule s;
  expect_fes_safety(log, s);
  for (const auto& e : log.events)
    if (e.kind == EventKind::FesOff) EXPECT_DOUBLE_EQ(e.t - e.trial * s.cycle_s(), s.relax_s);
}

TEST(Session, IsDeterministic) {
  const auto again = run_session(stream(0.8, 501), calibrated_model());
  EXPECT_EQ(to_json_lines(again), to_json_lines(strong_log()));
}

TEST(Session, ClassificationIsCausal) {
  const auto base = stream(0.8, 505);
  auto altered = base;
  const int cut_trial = 20;
  const Eigen::Index cut_sample = 1300;  // 5.08 s into the trial
  for (std::size_t k = cut_trial; k < altered.size(); ++k) {
    SampleMatrix d = altered.epochs[k].data();
    const Eigen::Index from = k == cut_trial ? cut_sample : 0;
    d.rightCols(d.cols() - from).setRandom();
    d.rightCols(d.cols() - from) *= 50.0;
    altered.epochs[k] = altered.epochs[k].with_data(d);
  }
  const auto a = run_session(base, calibrated_model());
  const auto b = run_session(altered, calibrated_model());
  const double t_cut = cut_trial * 10.0 + static_cast<double>(cut_sample) / 256.0;
  std::size_t compared = 0;
  for (std::size_t i = 0; i < a.events.size() && a.events[i].t < t_cut; ++i) {
    ASSERT_LT(i, b.events.size());
    EXPECT_EQ(to_json(a.events[i]), to_json(b.events[i]));
    ++compared;
  }
  EXPECT_GT(compared, 100u);
  EXPECT_NE(to_json_lines(a), to_json_lines(b));
}

TEST(Session, Errors) {
  const auto& model = calibrated_model();
  auto s = stream(0.8, 506, 5);
  EXPECT_ERROR_KIND(run_session(s, model), ErrorKind::TooFewTrials);
  auto fast = s;
  fast.fs = 512.0;
  EXPECT_ERROR_KIND(run_session(fast, model), ErrorKind::RateMismatch);
  auto renamed = s;
  renamed.montage.channels[0] = "F3";
  EXPECT_ERROR_KIND(run_session(renamed, model), ErrorKind::ModelMontageMismatch);
}

TEST(SessionOutput, JsonLinesAndSummary) {
  const auto& log = strong_log();
  const auto lines = to_json_lines(log);
  std::size_t n = 0;
  std::istringstream in(lines);
  for (std::string line; std::getline(in, line); ++n) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("t"));
    EXPECT_TRUE(j.contains("kind"));
  }
  EXPECT_EQ(n, log.events.size());
  const auto summary = session_summary(log);
  EXPECT_EQ(summary["trials"], 60);
  EXPECT_EQ(summary["run_length_s"], 600.0);
  EXPECT_EQ(summary["cue_events"], 60);
}

TEST(Fes, RightForearmOnFrame) {
  const auto f = encode_fes({FesChannel::RightForearm, true});
  EXPECT_EQ(f, (FesFrame{0xFE, 0x02, 0x01, 0xFD}));
}

TEST(Fes, RoundTripForEveryCommand) {
  for (auto ch : {FesChannel::LeftForearm, FesChannel::RightForearm})
    for (bool on : {false, true}) {
      const FesCommand c{ch, on};
      EXPECT_EQ(decode_fes(encode_fes(c)), c);
    }
}

TEST(Fes, CorruptFramesAreRejected) {
  auto f = encode_fes({FesChannel::LeftForearm, true});
  for (int bit = 0; bit < 8; ++bit) {
    auto g = f;
    g[3] ^= static_cast<std::uint8_t>(1u << bit);
    EXPECT_ERROR_KIND(decode_fes(g), ErrorKind::BadChecksum);
  }
  FesFrame unknown{0xFE, 0x03, 0x01, 0};
  unknown[3] = static_cast<std::uint8_t>(unknown[0] ^ unknown[1] ^ unknown[2]);
  EXPECT_ERROR_KIND(decode_fes(unknown), ErrorKind::UnknownChannel);
  FesFrame sync = f;
  sync[0] = 0xAA;
  EXPECT_ERROR_KIND(decode_fes(sync), ErrorKind::MalformedHeader);
  EXPECT_ERROR_KIND(decode_fes(std::span(f).first(3)), ErrorKind::MalformedHeader);
}

TEST(Fes, FramesFollowTheLog) {
  const auto& log = strong_log();
  const auto frames = fes_frames(log);
  EXPECT_EQ(frames.size(), log.count(EventKind::FesOn) + log.count(EventKind::FesOff));
  std::size_t i = 0;
  for (const auto& e : log.events) {
    if (e.kind != EventKind::FesOn && e.kind != EventKind::FesOff) continue;
    const auto c = decode_fes(frames[i++]);
    EXPECT_EQ(c.on, e.kind == EventKind::FesOn);
    EXPECT_EQ(c.channel, fes_channel_for(e.side));
  }
}

TEST(OnlineModelIo, JsonRoundTripPreservesPredictions) {
  const auto& m = calibrated_model();
  const auto back = online_model_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_TRUE(back.csp.F == m.csp.F);
  EXPECT_TRUE(back.lda.w == m.lda.w);
  EXPECT_EQ(back.lda.b, m.lda.b);
  ASSERT_EQ(back.filter.sections.size(), m.filter.sections.size());
  EXPECT_EQ(to_json_lines(run_session(stream(0.8, 507, 30), back)), to_json_lines(run_session(stream(0.8, 507, 30), m)));
}
