#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "nhalf/engine.hpp"
#include "nhalf/error.hpp"
#include "nhalf/fused_model.hpp"
#include "nhalf/image.hpp"

namespace nhalf {

struct ManifestRow {
  std::filesystem::path path;  // resolved against the manifest location
  std::int64_t label = 0;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline bool parse_int(const std::string& s, std::int64_t& out) {
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && p == end;
}

inline bool is_image_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

}  // namespace detail

// CSV with header `path,label`; paths are relative to the manifest's directory.
inline std::vector<ManifestRow> load_manifest(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw InputError("manifest not found: " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError("manifest is empty: " + csv.string());
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  if (detail::trim(line) != "path,label") throw InputError("manifest header must be 'path,label'");
  const auto base = csv.parent_path();
  std::vector<ManifestRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw InputError("manifest line " + std::to_string(lineno) + ": expected path,label");
    ManifestRow row;
    row.path = base / detail::trim(line.substr(0, comma));
    if (!detail::parse_int(detail::trim(line.substr(comma + 1)), row.label) || row.label < 0)
      throw InputError("manifest line " + std::to_string(lineno) + ": label must be a non-negative integer");
    rows.push_back(std::move(row));
  }
  return rows;
}

// Directory-per-class layout: <root>/<integer label>/<image files>.
inline std::vector<ManifestRow> manifest_from_directory(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw InputError("dataset directory not found: " + root.string());
  std::vector<ManifestRow> rows;
  for (const auto& dir : std::filesystem::directory_iterator(root)) {
    if (!dir.is_directory()) continue;
    std::int64_t label = 0;
    if (!detail::parse_int(dir.path().filename().string(), label) || label < 0) continue;
    for (const auto& f : std::filesystem::directory_iterator(dir.path()))
      if (f.is_regular_file() && detail::is_image_file(f.path())) rows.push_back({f.path(), label});
  }
  std::sort(rows.begin(), rows.end(), [](const ManifestRow& a, const ManifestRow& b) {
    return a.label != b.label ? a.label < b.label : a.path < b.path;
  });
  return rows;
}

inline std::vector<ManifestRow> load_dataset(const std::filesystem::path& p) {
  return std::filesystem::is_directory(p) ? manifest_from_directory(p) : load_manifest(p);
}

inline void write_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& csv) {
  std::ofstream out(csv);
  if (!out) throw InputError("cannot write " + csv.string());
  out << "path,label\n";
  for (const auto& r : rows)
    out << std::filesystem::relative(r.path, csv.parent_path()).generic_string() << ',' << r.label << '\n';
}

// ============================================================================
// Evaluation
// ============================================================================

struct RowError {
  std::size_t row = 0;
  std::string path;
  std::string message;
};

struct EvalResult {
  std::size_t total = 0;    // rows that produced a prediction
  std::size_t correct = 0;
  std::size_t skipped = 0;
  std::size_t class_count = 0;
  std::vector<std::uint64_t> confusion;  // [label * class_count + predicted]
  std::vector<RowError> errors;
  OpCounters counters;

  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
  std::uint64_t at(std::size_t label, std::size_t predicted) const {
    return confusion[label * class_count + predicted];
  }
};

inline std::size_t default_thread_count() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

// Rows are split into contiguous chunks, one per worker; totals are integer
// sums so the result does not depend on the thread count.
inline EvalResult evaluate(const FusedModel& model, const std::vector<ManifestRow>& rows,
                           const PreprocessConfig& pre, std::size_t threads = 1) {
  if (rows.empty()) throw InputError("no samples");
  const std::size_t classes = model.config.class_count;
  threads = std::max<std::size_t>(1, std::min(threads, rows.size()));

  std::vector<EvalResult> parts(threads);
  auto work = [&](std::size_t t) {
    auto& r = parts[t];
    r.confusion.assign(classes * classes, 0);
    const std::size_t lo = rows.size() * t / threads, hi = rows.size() * (t + 1) / threads;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& row = rows[i];
      try {
        if (row.label < 0 || static_cast<std::size_t>(row.label) >= classes)
          throw InputError("label " + std::to_string(row.label) + " outside class range");
        const BitTensor input = preprocess(load_image(row.path), pre);
        const ClassScores s = forward_fused(model, input, &r.counters);
        ++r.total;
        if (s.predicted == static_cast<std::size_t>(row.label)) ++r.correct;
        ++r.confusion[static_cast<std::size_t>(row.label) * classes + s.predicted];
      } catch (const Error& e) {
        ++r.skipped;
        r.errors.push_back({i, row.path.string(), e.what()});
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }

  EvalResult out;
  out.class_count = classes;
  out.confusion.assign(classes * classes, 0);
  for (const auto& p : parts) {
    out.total += p.total;
    out.correct += p.correct;
    out.skipped += p.skipped;
    out.counters += p.counters;
    for (std::size_t k = 0; k < out.confusion.size(); ++k) out.confusion[k] += p.confusion[k];
    out.errors.insert(out.errors.end(), p.errors.begin(), p.errors.end());
  }
  return out;
}

inline PreprocessConfig preprocess_for(const FusedModel& m) {
  PreprocessConfig p;
  p.target_h = m.config.input_h;
  p.target_w = m.config.input_w;
  return p;
}

}  // namespace nhalf
