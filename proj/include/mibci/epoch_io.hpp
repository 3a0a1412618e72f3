#pragma once

// MIEP binary container and the CSV-directory interchange layout.
//
// Binary layout, all integers and floats little-endian:
//   "MIEP" | u32 version=1 | u32 n_trials | u32 n_channels | u32 n_samples | f64 fs
//   n_channels x (u32 byte length, UTF-8 name)
//   n_trials x i8 label (-1 left, +1 right, 0 unlabeled)
//   n_trials x n_channels x n_samples f32 samples (trial-major, channel-major)

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <regex>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "mibci/error.hpp"
#include "mibci/signal_model.hpp"

namespace mibci {

enum class EpochFormat { Binary, CsvDir };

inline constexpr std::uint32_t kMiepVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : buf_(b) {}

  std::size_t remaining() const { return buf_.size() - pos_; }

  std::uint8_t u8(ErrorKind on_short) {
    need(1, on_short);
    return buf_[pos_++];
  }
  std::uint32_t u32(ErrorKind on_short) {
    need(4, on_short);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(ErrorKind on_short) {
    need(8, on_short);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  float f32(ErrorKind on_short) { return std::bit_cast<float>(u32(on_short)); }
  double f64(ErrorKind on_short) { return std::bit_cast<double>(u64(on_short)); }
  std::string str(std::size_t n, ErrorKind on_short) {
    need(n, on_short);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, ErrorKind kind) const {
    if (remaining() < n) fail(kind, "unexpected end of data");
  }
  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

inline std::int8_t encode_label(Label l) { return static_cast<std::int8_t>(static_cast<int>(l)); }

inline Label decode_label(std::int8_t v) {
  switch (v) {
    case -1: return Label::Left;
    case 0: return Label::Unlabeled;
    case 1: return Label::Right;
    default: fail(ErrorKind::MalformedHeader, "label byte " + std::to_string(v));
  }
}

inline char label_suffix(Label l) { return l == Label::Left ? 'L' : l == Label::Right ? 'R' : 'U'; }

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

inline void append_number(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, ErrorKind kind) {
  double v = 0.0;
  const char* first = s.data();
  while (first != s.data() + s.size() && *first == ' ') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) fail(kind, "not a number: '" + s + "'");
  return v;
}

}  // namespace detail

/// Serialized MIEP bytes for `set`.
inline std::vector<std::uint8_t> encode_miep(const EpochSet& set) {
  require_valid(set);
  detail::ByteWriter w;
  w.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("MIEP"), 4));
  w.u32(kMiepVersion);
  w.u32(static_cast<std::uint32_t>(set.epochs.size()));
  w.u32(static_cast<std::uint32_t>(set.montage.size()));
  w.u32(static_cast<std::uint32_t>(set.n_samples()));
  w.f64(set.fs);
  for (const auto& name : set.montage.channels) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(name.data()), name.size()));
  }
  for (const auto& e : set.epochs) w.u8(static_cast<std::uint8_t>(detail::encode_label(e.label())));
  for (const auto& e : set.epochs) {
    const auto& d = e.data();
    for (Eigen::Index c = 0; c < d.rows(); ++c)
      for (Eigen::Index t = 0; t < d.cols(); ++t) w.f32(static_cast<float>(d(c, t)));
  }
  return std::move(w.buffer());
}

inline EpochSet decode_miep(std::span<const std::uint8_t> bytes) {
  using detail::ByteReader;
  ByteReader r(bytes);
  constexpr auto H = ErrorKind::MalformedHeader;
  if (r.str(4, H) != "MIEP") fail(H, "bad magic");
  if (auto v = r.u32(H); v != kMiepVersion) fail(H, "unsupported version " + std::to_string(v));
  const std::uint32_t n_trials = r.u32(H);
  const std::uint32_t n_channels = r.u32(H);
  const std::uint32_t n_samples = r.u32(H);
  const double fs = r.f64(H);
  if (!(fs > 0.0) || !std::isfinite(fs)) fail(H, "invalid sampling rate");
  if (n_channels == 0) fail(H, "zero channels");
  if (n_trials > 0 && n_samples < 2) fail(H, "fewer than 2 samples per trial");

  std::vector<std::string> names;
  for (std::uint32_t c = 0; c < n_channels; ++c) {
    const auto len = r.u32(H);
    if (len > r.remaining()) fail(H, "channel name overruns file");
    names.push_back(r.str(len, H));
  }
  std::vector<Label> labels;
  for (std::uint32_t i = 0; i < n_trials; ++i) labels.push_back(detail::decode_label(static_cast<std::int8_t>(r.u8(H))));

  const std::uint64_t expected = std::uint64_t{n_trials} * n_channels * n_samples * 4;
  if (r.remaining() != expected)
    fail(ErrorKind::ShapeMismatch, "sample block holds " + std::to_string(r.remaining()) + " bytes, header implies " +
                                       std::to_string(expected));

  EpochSet set;
  set.montage = Montage::from_names(std::move(names));
  set.fs = fs;
  set.epochs.reserve(n_trials);
  for (std::uint32_t i = 0; i < n_trials; ++i) {
    SampleMatrix d(n_channels, n_samples);
    for (std::uint32_t c = 0; c < n_channels; ++c)
      for (std::uint32_t t = 0; t < n_samples; ++t) {
        const float v = r.f32(ErrorKind::ShapeMismatch);
        if (!std::isfinite(v))
          fail(ErrorKind::NonFiniteSample, "trial " + std::to_string(i) + " channel " + std::to_string(c));
        d(c, t) = v;
      }
    set.epochs.emplace_back(std::move(d), fs, labels[i]);
  }
  return set;
}

namespace detail {

inline void save_csv_dir(const EpochSet& set, const std::filesystem::path& dir) {
  namespace stdfs = std::filesystem;
  std::error_code ec;
  stdfs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoFailure, "cannot create " + dir.string());
  for (const auto& entry : stdfs::directory_iterator(dir)) {
    static const std::regex trial_re(R"(trial_\d+_[LRU]\.csv)");
    if (std::regex_match(entry.path().filename().string(), trial_re)) stdfs::remove(entry.path());
  }

  std::string manifest = "key,value\nformat,miep-csv\nversion,1\nfs,";
  append_number(manifest, set.fs);
  manifest += "\nn_trials," + std::to_string(set.size()) + "\nn_channels," + std::to_string(set.montage.size()) +
              "\nn_samples," + std::to_string(set.n_samples()) + "\nchannels,";
  for (std::size_t c = 0; c < set.montage.size(); ++c) {
    if (c) manifest += ';';
    manifest += set.montage.channels[c];
  }
  manifest += "\n";
  write_file(dir / "manifest.csv",
             std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(manifest.data()), manifest.size()));

  std::string header;
  for (std::size_t c = 0; c < set.montage.size(); ++c) {
    if (c) header += ',';
    header += set.montage.channels[c];
  }
  header += '\n';
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& e = set.epochs[i];
    std::string body = header;
    for (Eigen::Index c = 0; c < e.n_channels(); ++c) {
      for (Eigen::Index t = 0; t < e.n_samples(); ++t) {
        if (t) body += ',';
        append_number(body, e.data()(c, t));
      }
      body += '\n';
    }
    char name[64];
    std::snprintf(name, sizeof(name), "trial_%04zu_%c.csv", i, label_suffix(e.label()));
    write_file(dir / name, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(body.data()), body.size()));
  }
}

inline EpochSet load_csv_dir(const std::filesystem::path& dir) {
  namespace stdfs = std::filesystem;
  constexpr auto H = ErrorKind::MalformedHeader;
  if (!stdfs::is_directory(dir)) fail(ErrorKind::IoFailure, dir.string() + " is not a directory");

  std::map<std::string, std::string> kv;
  {
    std::ifstream in(dir / "manifest.csv");
    if (!in) fail(ErrorKind::IoFailure, "missing manifest.csv in " + dir.string());
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto parts = split(line, ',');
      if (parts.size() != 2) fail(H, "manifest line '" + line + "'");
      kv[parts[0]] = parts[1];
    }
  }
  for (const char* key : {"fs", "n_trials", "n_channels", "n_samples", "channels"})
    if (!kv.count(key)) fail(H, std::string("manifest lacks ") + key);
  if (kv["format"] != "miep-csv") fail(H, "manifest format is not miep-csv");
  const double fs = parse_double(kv["fs"], H);
  const auto n_trials = static_cast<std::size_t>(parse_double(kv["n_trials"], H));
  const auto n_channels = static_cast<Eigen::Index>(parse_double(kv["n_channels"], H));
  const auto n_samples = static_cast<Eigen::Index>(parse_double(kv["n_samples"], H));

  static const std::regex trial_re(R"(trial_(\d+)_([LRU])\.csv)");
  std::map<std::size_t, std::pair<stdfs::path, Label>> files;
  for (const auto& entry : stdfs::directory_iterator(dir)) {
    std::smatch m;
    const auto name = entry.path().filename().string();
    if (!std::regex_match(name, m, trial_re)) continue;
    const Label l = m[2] == "L" ? Label::Left : m[2] == "R" ? Label::Right : Label::Unlabeled;
    files[std::stoul(m[1])] = {entry.path(), l};
  }
  if (files.size() != n_trials)
    fail(ErrorKind::ShapeMismatch, "manifest declares " + std::to_string(n_trials) + " trials, found " +
                                       std::to_string(files.size()));

  EpochSet set;
  set.fs = fs;
  set.montage = Montage::from_names(split(kv["channels"], ';'));
  if (static_cast<Eigen::Index>(set.montage.size()) != n_channels) fail(H, "manifest channel list length mismatch");
  std::size_t expect_index = 0;
  for (const auto& [idx, entry] : files) {
    if (idx != expect_index++) fail(H, "trial numbering has a gap at " + std::to_string(idx));
    std::ifstream in(entry.first);
    if (!in) fail(ErrorKind::IoFailure, "cannot open " + entry.first.string());
    std::string line;
    if (!std::getline(in, line)) fail(H, entry.first.filename().string() + " is empty");
    auto names = split(line, ',');
    if (static_cast<Eigen::Index>(names.size()) != n_channels)
      fail(ErrorKind::ShapeMismatch, entry.first.filename().string() + " header lists " + std::to_string(names.size()) +
                                         " channels");
    if (names != set.montage.channels) {
      fail(H, entry.first.filename().string() + " channel names differ");
    }
    SampleMatrix d(n_channels, n_samples);
    Eigen::Index row = 0;
    while (std::getline(in, line)) {
      if (line.empty() || line == "\r") continue;
      if (row >= n_channels) fail(ErrorKind::ShapeMismatch, entry.first.filename().string() + " has too many rows");
      auto cells = split(line, ',');
      if (static_cast<Eigen::Index>(cells.size()) != n_samples)
        fail(ErrorKind::ShapeMismatch, entry.first.filename().string() + " row " + std::to_string(row) + " has " +
                                           std::to_string(cells.size()) + " samples");
      for (Eigen::Index t = 0; t < n_samples; ++t) {
        const double v = parse_double(cells[static_cast<std::size_t>(t)], H);
        if (!std::isfinite(v)) fail(ErrorKind::NonFiniteSample, entry.first.filename().string());
        d(row, t) = v;
      }
      ++row;
    }
    if (row != n_channels)
      fail(ErrorKind::ShapeMismatch, entry.first.filename().string() + " has " + std::to_string(row) + " rows, expected " +
                                         std::to_string(n_channels));
    set.epochs.emplace_back(std::move(d), fs, entry.second);
  }
  return set;
}

}  // namespace detail

inline void save_epochs(const EpochSet& set, const std::filesystem::path& path, EpochFormat format = EpochFormat::Binary) {
  if (format == EpochFormat::Binary) {
    const auto bytes = encode_miep(set);
    detail::write_file(path, bytes);
  } else {
    require_valid(set);
    detail::save_csv_dir(set, path);
  }
}

inline EpochSet load_epochs(const std::filesystem::path& path, EpochFormat format = EpochFormat::Binary) {
  EpochSet set = format == EpochFormat::Binary ? decode_miep(detail::read_file(path)) : detail::load_csv_dir(path);
  set.provenance = path.string();
  require_valid(set);
  return set;
}

}  // namespace mibci
