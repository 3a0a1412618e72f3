// Command-line front end: gen, filter, train, cv, psd, patterns, simulate, report.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mibci/mibci.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kToolVersion = "0.1.0";

enum ExitCode { kOk = 0, kUsage = 2, kDataError = 3, kNumericalError = 4, kIo = 5 };

int exit_code_for(mibci::ErrorKind k) {
  using mibci::ErrorKind;
  switch (k) {
    case ErrorKind::IoFailure: return kIo;
    case ErrorKind::RankDeficient:
    case ErrorKind::SingularCovariance:
    case ErrorKind::DegenerateTrial: return kNumericalError;
    case ErrorKind::InvalidBand:
    case ErrorKind::InvalidOrder:
    case ErrorKind::InvalidParams: return kUsage;
    default: return kDataError;
  }
}

const char* category_name(int code) {
  switch (code) {
    case kUsage: return "Usage";
    case kDataError: return "DataError";
    case kNumericalError: return "NumericalError";
    case kIo: return "Io";
  }
  return "Unknown";
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Band {
  double lo = 8.0;
  double hi = 30.0;
};

Band parse_band(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--band", "expected LO:HI");
  try {
    return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw CLI::ValidationError("--band", "expected LO:HI");
  }
}

unsigned threads_from_env() {
  if (const char* v = std::getenv("MIEP_THREADS")) {
    try {
      return static_cast<unsigned>(std::max(1, std::stoi(v)));
    } catch (const std::exception&) {
    }
  }
  return 0;
}

// Shared option values; each subcommand binds the ones it uses.
struct Options {
  std::string in;
  std::string out;
  std::string model;
  std::string channel = "C3";
  std::string band = "8:30";
  std::string format = "binary";
  std::string subjects;
  std::string accuracies;
  std::string fes_dump;
  std::string csv;
  int order = 5;
  int m = 3;
  int folds = 10;
  int reps = 10;
  int trials = 60;
  int per_week = 3;
  int trials_per_run = 60;
  double erd_depth = 0.8;
  double snr_db = 6.0;
  double trial_s = 8.0;
  double spread = 0.25;
  double iti_s = 2.0;
  double eval_step = 0.5;
  double eval_window = 1.5;
  double segment_s = 1.0;
  int smooth = 0;
  std::optional<std::uint64_t> seed;
  bool zero_phase = false;
  bool latched_fes = false;
};

std::uint64_t seed_or_default(const Options& o, const std::string& cmd) {
  if (o.seed) return *o.seed;
  std::cerr << "notice: " << cmd << " called without --seed; using seed 0\n";
  return 0;
}

json provenance(const std::string& cmd, const json& config, std::optional<std::uint64_t> seed) {
  json p{{"tool", "mibci"}, {"version", kToolVersion}, {"command", cmd}, {"config", config},
         {"timestamp", utc_timestamp()}};
  p["seed"] = seed ? json(*seed) : json(nullptr);
  return p;
}

std::string csv_provenance_line(const json& prov) {
  json stable = prov;
  stable.erase("timestamp");
  return "# provenance=" + stable.dump() + "\n";
}

void write_json(const fs::path& path, const json& j) { mibci::write_text_file(path, j.dump(2) + "\n"); }

mibci::EpochFormat parse_format(const std::string& f) {
  if (f == "binary") return mibci::EpochFormat::Binary;
  if (f == "csv" || f == "csv-dir") return mibci::EpochFormat::CsvDir;
  throw CLI::ValidationError("--format", "binary or csv");
}

fs::path sidecar(const fs::path& out) { return fs::path(out.string() + ".json"); }

fs::path with_suffix(const std::string& prefix, const std::string& suffix) { return fs::path(prefix + suffix); }

int cmd_gen(const Options& o) {
  mibci::GenParams p;
  p.n_trials_per_class = o.trials;
  p.erd_depth = o.erd_depth;
  p.snr_db = o.snr_db;
  p.trial_s = o.trial_s;
  p.source_spread = o.spread;
  p.seed = seed_or_default(o, "gen");
  const auto set = mibci::generate_dataset(p);
  mibci::save_epochs(set, o.out, parse_format(o.format));
  json config = mibci::to_json(p);
  config["format"] = o.format;
  config["out"] = o.out;
  json doc{{"ground_truth", mibci::to_json(mibci::ground_truth(p))}, {"provenance", provenance("gen", config, p.seed)}};
  write_json(sidecar(o.out), doc);
  std::cout << "wrote " << set.size() << " trials to " << o.out << "\n";
  return kOk;
}

int cmd_filter(const Options& o) {
  const auto band = parse_band(o.band);
  const auto set = mibci::load_epochs(o.in, parse_format(o.format));
  const auto f = mibci::design_butterworth_bandpass(o.order, band.lo, band.hi, set.fs);
  const auto out = mibci::filter_set(f, set, o.zero_phase ? mibci::FilterMode::ZeroPhase : mibci::FilterMode::Causal);
  mibci::save_epochs(out, o.out, parse_format(o.format));
  json config{{"in", o.in}, {"out", o.out}, {"band_hz", {band.lo, band.hi}}, {"order", o.order},
              {"zero_phase", o.zero_phase}, {"format", o.format}};
  write_json(sidecar(o.out), {{"provenance", provenance("filter", config, std::nullopt)}});
  std::cout << "filtered " << out.size() << " trials to " << o.out << "\n";
  return kOk;
}

int cmd_train(const Options& o) {
  const auto band = parse_band(o.band);
  const auto set = mibci::load_epochs(o.in, parse_format(o.format));
  mibci::TrainConfig cfg;
  cfg.order = o.order;
  cfg.band_lo_hz = band.lo;
  cfg.band_hi_hz = band.hi;
  cfg.m = o.m;
  const auto model = mibci::train_online_model(set, cfg);
  json doc = mibci::to_json(model);
  doc["provenance"] = provenance("train", {{"in", o.in}, {"out", o.out}, {"band_hz", {band.lo, band.hi}},
                                           {"order", o.order}, {"m", o.m}, {"format", o.format}},
                                 std::nullopt);
  write_json(o.out, doc);
  std::cout << "trained CSP (" << 2 * o.m << " filters) + LDA on " << set.size() << " trials\n";
  return kOk;
}

int cmd_cv(const Options& o) {
  const auto band = parse_band(o.band);
  const auto set = mibci::load_epochs(o.in, parse_format(o.format));
  mibci::CvConfig cfg;
  cfg.folds = o.folds;
  cfg.repetitions = o.reps;
  cfg.m = o.m;
  cfg.order = o.order;
  cfg.band_lo_hz = band.lo;
  cfg.band_hi_hz = band.hi;
  cfg.filter_mode = o.zero_phase ? mibci::FilterMode::ZeroPhase : mibci::FilterMode::Causal;
  cfg.seed = seed_or_default(o, "cv");
  cfg.threads = threads_from_env();
  const auto report = mibci::cross_validate(set, cfg);
  json config{{"in", o.in}, {"folds", o.folds}, {"repetitions", o.reps}, {"m", o.m}, {"order", o.order},
              {"band_hz", {band.lo, band.hi}}, {"zero_phase", o.zero_phase}, {"format", o.format},
              {"window_s", {cfg.window.start_s, cfg.window.start_s + cfg.window.length_s}},
              {"lda_shrinkage", cfg.lda_shrinkage}};
  json doc = mibci::to_json(report);
  doc["kind"] = "cross_validation";
  doc["provenance"] = provenance("cv", config, cfg.seed);
  write_json(o.out, doc);
  if (!o.csv.empty()) mibci::write_text_file(o.csv, csv_provenance_line(doc["provenance"]) + mibci::to_csv(report));
  std::cout << "mean accuracy " << report.mean_accuracy << " (sd " << report.std_accuracy << ") over "
            << o.folds * o.reps << " folds\n";
  return kOk;
}

int cmd_psd(const Options& o) {
  const auto set = mibci::load_epochs(o.in, parse_format(o.format));
  mibci::WelchConfig cfg;
  cfg.segment_s = o.segment_s;
  cfg.smooth_bins = o.smooth;
  const auto [left, right] = mibci::class_average_psd(set, o.channel, cfg);
  json config{{"in", o.in}, {"channel", o.channel}, {"segment_s", o.segment_s}, {"overlap", cfg.overlap},
              {"window", "hann"}, {"smooth_bins", o.smooth}, {"format", o.format}};
  const auto prov = provenance("psd", config, std::nullopt);
  json stable = prov;
  stable.erase("timestamp");
  mibci::write_text_file(with_suffix(o.out, "_left.csv"), mibci::spectrum_csv(left, stable.dump()));
  mibci::write_text_file(with_suffix(o.out, "_right.csv"), mibci::spectrum_csv(right, stable.dump()));
  const double hi = std::min(30.0, left.freqs.back());
  json summary{{"channel", o.channel},
               {"band_power_8_30", {{"left", mibci::band_power(left, 8.0, hi)}, {"right", mibci::band_power(right, 8.0, hi)}}},
               {"n_trials", {{"left", left.n_trials_averaged}, {"right", right.n_trials_averaged}}},
               {"provenance", prov}};
  write_json(with_suffix(o.out, ".json"), summary);
  std::cout << "8-30 Hz power at " << o.channel << ": left " << summary["band_power_8_30"]["left"] << ", right "
            << summary["band_power_8_30"]["right"] << "\n";
  return kOk;
}

int cmd_patterns(const Options& o) {
  const auto model = mibci::online_model_from_json(mibci::read_json_file(o.model));
  const auto prov = provenance("patterns", {{"model", o.model}, {"out", o.out}}, std::nullopt);
  for (auto which : {mibci::PatternWhich::First, mibci::PatternWhich::Last}) {
    const auto path = with_suffix(o.out, "_" + std::string(mibci::to_string(which)) + ".json");
    const auto p = mibci::export_spatial_pattern(model.csp, which, path, prov);
    std::cout << mibci::to_string(which) << " pattern peaks at " << p.abs_max_channel() << "\n";
  }
  return kOk;
}

int cmd_simulate(const Options& o) {
  const auto seed = seed_or_default(o, "simulate");
  mibci::TrialSchedule sched;
  sched.trials_per_run = o.trials_per_run;
  sched.iti_s = o.iti_s;
  mibci::SessionConfig scfg;
  scfg.eval_step_s = o.eval_step;
  scfg.eval_window_s = o.eval_window;
  scfg.latched_fes = o.latched_fes;

  mibci::EpochSet stream;
  if (!o.in.empty()) {
    stream = mibci::load_epochs(o.in, parse_format(o.format));
  } else {
    mibci::GenParams p;
    p.erd_depth = o.erd_depth;
    p.snr_db = o.snr_db;
    p.seed = mibci::derive_seed(seed, 0x5E55);
    p.n_trials_per_class = (sched.trials_per_run + 1) / 2;
    p.trial_s = sched.cycle_s();
    p.relax_s = sched.relax_s;
    stream = mibci::generate_dataset(p);
  }
  mibci::OnlineModel model;
  if (!o.model.empty()) {
    model = mibci::online_model_from_json(mibci::read_json_file(o.model));
  } else {
    // Calibration run disjoint from the replayed stream.
    mibci::GenParams cal;
    cal.erd_depth = o.erd_depth;
    cal.snr_db = o.snr_db;
    cal.seed = mibci::derive_seed(seed, 0xCA1);
    model = mibci::train_online_model(mibci::generate_dataset(cal));
  }
  const auto log = mibci::run_session(stream, model, sched, scfg);

  json config{{"in", o.in}, {"model", o.model}, {"erd_depth", o.erd_depth}, {"snr_db", o.snr_db},
              {"trials_per_run", sched.trials_per_run}, {"iti_s", sched.iti_s}, {"eval_step_s", scfg.eval_step_s},
              {"eval_window_s", scfg.eval_window_s}, {"latched_fes", scfg.latched_fes},
              {"runs_per_session", sched.runs_per_session}};
  mibci::write_text_file(with_suffix(o.out, "_events.jsonl"), mibci::to_json_lines(log));
  json summary = mibci::session_summary(log);
  summary["accuracy_kind"] = "online_single_trial";
  summary["provenance"] = provenance("simulate", config, seed);
  write_json(with_suffix(o.out, "_summary.json"), summary);
  if (!o.fes_dump.empty()) {
    std::vector<std::uint8_t> bytes;
    for (const auto& f : mibci::fes_frames(log)) bytes.insert(bytes.end(), f.begin(), f.end());
    mibci::detail::write_file(o.fes_dump, bytes);
  }
  std::cout << "simulated " << log.outcomes.size() << " trials, " << log.run_length_s << " s, online accuracy "
            << log.online_accuracy << "\n";
  return kOk;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw CLI::ValidationError("--accuracies", "comma-separated numbers expected");
    }
  }
  return out;
}

int cmd_report(const Options& o) {
  const auto records = o.subjects.empty() ? mibci::load_fixture_subjects() : mibci::load_subjects_csv(o.subjects);
  const auto report = mibci::improvement_report(records);
  json doc = mibci::to_json(report);
  if (!o.accuracies.empty()) {
    const auto acc = parse_list(o.accuracies);
    const auto weeks = mibci::weekly_progress(acc, o.per_week);
    doc["weekly_accuracy"] = weeks;
    doc["first_to_last_week_change"] = weeks.back() - weeks.front();
  }
  doc["provenance"] = provenance("report", {{"subjects", o.subjects.empty() ? "bundled" : o.subjects},
                                            {"accuracies", o.accuracies}, {"per_week", o.per_week}},
                                 std::nullopt);
  write_json(o.out, doc);
  if (!o.csv.empty()) mibci::write_text_file(o.csv, csv_provenance_line(doc["provenance"]) + mibci::to_csv(report));
  std::cout << report.improved << " improved, " << report.unchanged << " unchanged, " << report.declined
            << " declined; largest gain P" << report.max_delta_id << " (+" << report.max_delta << ")\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motor-imagery BCI toolkit: synthetic EEG, CSP+LDA, spectra, closed-loop FES simulation"};
  app.set_config("--config", "", "key=value file with flag defaults");
  app.require_subcommand(1);
  Options o;

  auto seed_opt = [&](CLI::App* c) {
    c->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { o.seed = s; }, "RNG seed");
  };
  auto band_opts = [&](CLI::App* c) {
    c->add_option("--band", o.band, "band-pass LO:HI in Hz")->capture_default_str();
    c->add_option("--order", o.order, "Butterworth order")->capture_default_str();
  };
  auto fmt_opt = [&](CLI::App* c) {
    c->add_option("--format", o.format, "binary | csv")->capture_default_str();
  };

  auto* gen = app.add_subcommand("gen", "generate a synthetic ERD dataset");
  gen->add_option("--trials", o.trials, "trials per class")->capture_default_str();
  gen->add_option("--erd-depth", o.erd_depth)->capture_default_str();
  gen->add_option("--snr-db", o.snr_db)->capture_default_str();
  gen->add_option("--trial-s", o.trial_s)->capture_default_str();
  gen->add_option("--spread", o.spread, "source spatial spread")->capture_default_str();
  gen->add_option("--out", o.out)->required();
  seed_opt(gen);
  fmt_opt(gen);

  auto* filt = app.add_subcommand("filter", "band-pass every trial");
  filt->add_option("--in", o.in)->required();
  filt->add_option("--out", o.out)->required();
  filt->add_flag("--zero-phase", o.zero_phase);
  band_opts(filt);
  fmt_opt(filt);

  auto* train = app.add_subcommand("train", "fit CSP + LDA on a labeled set");
  train->add_option("--in", o.in)->required();
  train->add_option("--out", o.out)->required();
  train->add_option("--m", o.m)->capture_default_str();
  band_opts(train);
  fmt_opt(train);

  auto* cv = app.add_subcommand("cv", "repeated stratified k-fold cross-validation");
  cv->add_option("--in", o.in)->required();
  cv->add_option("--out", o.out)->required();
  cv->add_option("--csv", o.csv, "per-fold CSV");
  cv->add_option("--folds", o.folds)->capture_default_str();
  cv->add_option("--reps", o.reps)->capture_default_str();
  cv->add_option("--m", o.m)->capture_default_str();
  cv->add_flag("--zero-phase", o.zero_phase);
  band_opts(cv);
  seed_opt(cv);
  fmt_opt(cv);

  auto* psd = app.add_subcommand("psd", "class-averaged Welch spectra at one channel");
  psd->add_option("--in", o.in)->required();
  psd->add_option("--out", o.out, "output prefix")->required();
  psd->add_option("--channel", o.channel)->capture_default_str();
  psd->add_option("--segment-s", o.segment_s)->capture_default_str();
  psd->add_option("--smooth", o.smooth, "moving-average bins")->capture_default_str();
  fmt_opt(psd);

  auto* pat = app.add_subcommand("patterns", "export first and last spatial patterns");
  pat->add_option("--model", o.model)->required();
  pat->add_option("--out", o.out, "output prefix")->required();

  auto* sim = app.add_subcommand("simulate", "closed-loop run with FES triggering");
  sim->add_option("--in", o.in, "stream to replay (default: synthetic)");
  sim->add_option("--model", o.model, "trained model (default: calibrate on a disjoint synthetic run)");
  sim->add_option("--out", o.out, "output prefix")->required();
  sim->add_option("--erd-depth", o.erd_depth)->capture_default_str();
  sim->add_option("--snr-db", o.snr_db)->capture_default_str();
  sim->add_option("--trials-per-run", o.trials_per_run)->capture_default_str();
  sim->add_option("--iti-s", o.iti_s)->capture_default_str();
  sim->add_option("--eval-step", o.eval_step)->capture_default_str();
  sim->add_option("--eval-window", o.eval_window)->capture_default_str();
  sim->add_option("--fes-dump", o.fes_dump, "write 4-byte FES frames here");
  sim->add_flag("--latched-fes", o.latched_fes);
  seed_opt(sim);
  fmt_opt(sim);

  auto* rep = app.add_subcommand("report", "FMA improvement and weekly accuracy report");
  rep->add_option("--subjects", o.subjects, "subjects CSV (default: bundled fixture)");
  rep->add_option("--accuracies", o.accuracies, "comma-separated per-session accuracies");
  rep->add_option("--per-week", o.per_week)->capture_default_str();
  rep->add_option("--out", o.out)->required();
  rep->add_option("--csv", o.csv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error category=Usage kind=" << e.get_name() << " message=" << json(std::string(e.what())).dump() << "\n";
    return kUsage;
  }

  try {
    if (*gen) return cmd_gen(o);
    if (*filt) return cmd_filter(o);
    if (*train) return cmd_train(o);
    if (*cv) return cmd_cv(o);
    if (*psd) return cmd_psd(o);
    if (*pat) return cmd_patterns(o);
    if (*sim) return cmd_simulate(o);
    if (*rep) return cmd_report(o);
  } catch (const mibci::Error& e) {
    const int code = exit_code_for(e.kind());
    std::cerr << "error category=" << category_name(code) << " kind=" << mibci::to_string(e.kind())
              << " message=" << json(std::string(e.what())).dump() << "\n";
    return code;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error category=Usage kind=ValidationError message=" << json(std::string(e.what())).dump() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error category=Io kind=Unexpected message=" << json(std::string(e.what())).dump() << "\n";
    return kIo;
  }
  return kUsage;
}
