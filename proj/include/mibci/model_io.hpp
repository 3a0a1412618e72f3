#pragma once

// Versioned JSON documents for fitted models and CV reports.

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "mibci/classifier.hpp"
#include "mibci/csp.hpp"
#include "mibci/dsp.hpp"
#include "mibci/error.hpp"
#include "mibci/session.hpp"

namespace mibci {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& r = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(r.size()) != cols) fail(ErrorKind::MalformedHeader, "ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = r.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

inline nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Label label_from_string(const std::string& s) {
  if (s == "left") return Label::Left;
  if (s == "right") return Label::Right;
  if (s == "unlabeled") return Label::Unlabeled;
  fail(ErrorKind::MalformedHeader, "unknown class tag '" + s + "'");
}

}  // namespace detail

inline nlohmann::json to_json(const Montage& m) {
  nlohmann::json coords = nlohmann::json::array();
  for (const auto& c : m.coords) coords.push_back({c.x, c.y});
  return {{"channels", m.channels}, {"coords", coords}, {"reference_note", m.reference_note}};
}

inline Montage montage_from_json(const nlohmann::json& j) {
  Montage m;
  m.channels = j.at("channels").get<std::vector<std::string>>();
  for (const auto& c : j.at("coords")) m.coords.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
  m.reference_note = j.value("reference_note", "");
  return m;
}

inline nlohmann::json to_json(const CspModel& m) {
  return {{"format", "mibci-csp"},
          {"version", kModelFormatVersion},
          {"m", m.m},
          {"band_hz", {m.band_lo_hz, m.band_hi_hz}},
          {"montage", to_json(m.montage)},
          {"F", detail::matrix_json(m.F)},
          {"patterns", detail::matrix_json(m.patterns)},
          {"eigvals_l", detail::vector_json(m.eigvals_l)},
          {"class_order", {{"l", std::string(to_string(m.class_order.l))}, {"r", std::string(to_string(m.class_order.r))}}},
          {"fit", {{"n_trials_l", m.info.n_l}, {"n_trials_r", m.info.n_r},
                   {"window_s", {m.info.window.start_s, m.info.window.start_s + m.info.window.length_s}}}}};
}

inline CspModel csp_model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mibci-csp" || j.value("version", 0) != kModelFormatVersion)
    fail(ErrorKind::MalformedHeader, "not a version-1 CSP model document");
  CspModel m;
  m.m = j.at("m").get<int>();
  m.band_lo_hz = j.at("band_hz").at(0).get<double>();
  m.band_hi_hz = j.at("band_hz").at(1).get<double>();
  m.montage = montage_from_json(j.at("montage"));
  m.F = detail::matrix_from_json(j.at("F"));
  m.patterns = detail::matrix_from_json(j.at("patterns"));
  m.eigvals_l = detail::vector_from_json(j.at("eigvals_l"));
  m.class_order = {detail::label_from_string(j.at("class_order").at("l")), detail::label_from_string(j.at("class_order").at("r"))};
  const auto& fit = j.at("fit");
  m.info.n_l = fit.at("n_trials_l").get<std::size_t>();
  m.info.n_r = fit.at("n_trials_r").get<std::size_t>();
  const double w0 = fit.at("window_s").at(0).get<double>(), w1 = fit.at("window_s").at(1).get<double>();
  m.info.window = {w0, w1 - w0};
  if (m.F.rows() != 2 * m.m || m.patterns.cols() != 2 * m.m || m.F.cols() != static_cast<Eigen::Index>(m.montage.size()))
    fail(ErrorKind::ShapeMismatch, "CSP model matrices inconsistent with m and montage");
  return m;
}

inline nlohmann::json to_json(const LdaModel& m) {
  return {{"w", detail::vector_json(m.w)}, {"b", m.b}, {"positive", std::string(to_string(m.positive))},
          {"negative", std::string(to_string(m.negative))}};
}

inline LdaModel lda_model_from_json(const nlohmann::json& j) {
  LdaModel m;
  m.w = detail::vector_from_json(j.at("w"));
  m.b = j.at("b").get<double>();
  m.positive = detail::label_from_string(j.at("positive"));
  m.negative = detail::label_from_string(j.at("negative"));
  return m;
}

/// Band-pass design parameters + CSP + LDA: the document written by `train`.
inline nlohmann::json to_json(const OnlineModel& m) {
  return {{"format", "mibci-model"},
          {"version", kModelFormatVersion},
          {"filter", {{"order", m.filter.order}, {"band_hz", {m.filter.lo_hz, m.filter.hi_hz}}, {"fs", m.filter.fs}}},
          {"csp", to_json(m.csp)},
          {"lda", to_json(m.lda)}};
}

inline OnlineModel online_model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mibci-model") fail(ErrorKind::MalformedHeader, "not a mibci model document");
  const auto& f = j.at("filter");
  OnlineModel m;
  m.filter = design_butterworth_bandpass(f.at("order").get<int>(), f.at("band_hz").at(0).get<double>(),
                                         f.at("band_hz").at(1).get<double>(), f.at("fs").get<double>());
  m.csp = csp_model_from_json(j.at("csp"));
  m.lda = lda_model_from_json(j.at("lda"));
  return m;
}

inline nlohmann::json to_json(const CvReport& r) {
  return {{"fold_accuracies", r.fold_accuracies}, {"mean_accuracy", r.mean_accuracy}, {"std", r.std_accuracy},
          {"n_trials", r.n_trials}, {"seed", r.seed}};
}

inline std::string to_csv(const CvReport& r) {
  std::string out = "repetition,fold,accuracy\n";
  char buf[64];
  for (std::size_t i = 0; i < r.fold_accuracies.size(); ++i)
    for (std::size_t k = 0; k < r.fold_accuracies[i].size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g\n", i, k, r.fold_accuracies[i][k]);
      out += buf;
    }
  return out;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::MalformedHeader, path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

}  // namespace mibci
