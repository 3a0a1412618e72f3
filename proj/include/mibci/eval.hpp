#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mibci/error.hpp"
#include "mibci/signal_model.hpp"

namespace mibci {

inline constexpr int kFmaMax = 66;

struct SubjectRecord {
  int id = 0;
  std::string gender;
  int age = 0;
  std::string stroke_type;
  Label paretic_side = Label::Left;
  int months_since_stroke = 0;
  int fma_pre = 0;
  int fma_post = 0;

  int delta() const { return fma_post - fma_pre; }

  void validate() const {
    if (fma_pre < 0 || fma_pre > kFmaMax || fma_post < 0 || fma_post > kFmaMax)
      fail(ErrorKind::InvalidParams, "FMA score outside 0..66 for subject " + std::to_string(id));
    if (months_since_stroke < 0) fail(ErrorKind::InvalidParams, "negative months since stroke");
    if (paretic_side == Label::Unlabeled) fail(ErrorKind::InvalidParams, "paretic side must be left or right");
  }

  friend bool operator==(const SubjectRecord&, const SubjectRecord&) = default;
};

/// The ten patients: demographics plus upper-limb FMA before and after four weeks of training.
inline std::vector<SubjectRecord> load_fixture_subjects() {
  using L = Label;
  return {
      {1, "Female", 59, "Trauma", L::Left, 2, 22, 32},
      {2, "Female", 70, "Ischemic", L::Right, 8, 10, 10},
      {3, "Female", 22, "Trauma", L::Left, 248, 39, 39},
      {4, "Male", 65, "Ischemic", L::Right, 8, 8, 8},
      {5, "Male", 44, "Hemorrhage", L::Right, 22, 14, 14},
      {6, "Male", 45, "Hemorrhage", L::Left, 24, 20, 35},
      {7, "Male", 30, "Trauma", L::Left, 38, 24, 28},
      {8, "Male", 56, "Ischemic", L::Right, 16, 17, 23},
      {9, "Male", 58, "Hemorrhage", L::Right, 6, 24, 27},
      {10, "Male", 46, "Infarction", L::Right, 2, 36, 36},
  };
}

/// Reads the subjects CSV resource (header: id,gender,age,stroke_type,paretic_side,months_since_stroke,fma_pre,fma_post).
inline std::vector<SubjectRecord> load_subjects_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<SubjectRecord> out;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 8) fail(ErrorKind::MalformedHeader, "subject row '" + line + "'");
    std::string side = f[4];
    std::transform(side.begin(), side.end(), side.begin(), [](unsigned char c) { return std::tolower(c); });
    SubjectRecord r;
    try {
      r = {std::stoi(f[0]), f[1], std::stoi(f[2]), f[3], side == "left" ? Label::Left : side == "right" ? Label::Right : Label::Unlabeled,
           std::stoi(f[5]), std::stoi(f[6]), std::stoi(f[7])};
    } catch (const std::exception&) {
      fail(ErrorKind::MalformedHeader, "subject row '" + line + "'");
    }
    r.validate();
    out.push_back(r);
  }
  return out;
}

enum class Change { Improved, Unchanged, Declined };

constexpr std::string_view to_string(Change c) {
  return c == Change::Improved ? "improved" : c == Change::Unchanged ? "unchanged" : "declined";
}

struct SubjectDelta {
  int id = 0;
  int fma_pre = 0;
  int fma_post = 0;
  int delta = 0;
  Change change = Change::Unchanged;
};

struct ImprovementReport {
  std::vector<SubjectDelta> subjects;  // ascending id
  int improved = 0;
  int unchanged = 0;
  int declined = 0;
  int max_delta_id = 0;
  int max_delta = 0;
};

inline ImprovementReport improvement_report(std::span<const SubjectRecord> records) {
  ImprovementReport r;
  for (const auto& s : records) {
    s.validate();
    const int d = s.delta();
    const Change c = d > 0 ? Change::Improved : d < 0 ? Change::Declined : Change::Unchanged;
    r.subjects.push_back({s.id, s.fma_pre, s.fma_post, d, c});
    (c == Change::Improved ? r.improved : c == Change::Declined ? r.declined : r.unchanged)++;
  }
  std::sort(r.subjects.begin(), r.subjects.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const auto& s : r.subjects) {
    if (r.max_delta_id == 0 || s.delta > r.max_delta) {
      r.max_delta = s.delta;
      r.max_delta_id = s.id;
    }
  }
  return r;
}

inline nlohmann::json to_json(const ImprovementReport& r) {
  nlohmann::json subjects = nlohmann::json::array();
  for (const auto& s : r.subjects)
    subjects.push_back({{"id", s.id}, {"fma_pre", s.fma_pre}, {"fma_post", s.fma_post}, {"delta", s.delta},
                        {"change", std::string(to_string(s.change))}});
  return {{"subjects", subjects},
          {"improved", r.improved},
          {"unchanged", r.unchanged},
          {"declined", r.declined},
          {"max_delta", {{"id", r.max_delta_id}, {"delta", r.max_delta}}}};
}

inline std::string to_csv(const ImprovementReport& r) {
  std::string out = "id,fma_pre,fma_post,delta,change\n";
  for (const auto& s : r.subjects)
    out += std::to_string(s.id) + "," + std::to_string(s.fma_pre) + "," + std::to_string(s.fma_post) + "," +
           std::to_string(s.delta) + "," + std::string(to_string(s.change)) + "\n";
  return out;
}

}  // namespace mibci
