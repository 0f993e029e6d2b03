#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "uctrl/eval.hpp"
#include "uctrl/matrix.hpp"
#include "uctrl/trainer.hpp"

namespace uctrl::io {

// 17 significant digits: doubles round-trip exactly through text.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << content;
  if (!f) throw IoError("write failed: " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// Telemetry: CSV, one line per iteration. wall_ms is the only
// non-reproducible column and is always last.
// ---------------------------------------------------------------------------

inline std::string telemetry_header() {
  return "iteration,variant,expansion,pair_dr,aug_mean,selfc_mean,enc_value,dec_value,wall_ms";
}

inline std::string telemetry_line(const trainer::TelemetryRecord& r) {
  std::ostringstream os;
  os << r.iteration << ',' << trainer::to_string(r.variant) << ',' << fmt(r.expansion) << ','
     << fmt(r.pair_dr) << ',' << fmt(r.aug_mean) << ',' << fmt(r.selfc_mean) << ','
     << fmt(r.enc_value) << ',' << fmt(r.dec_value) << ',' << fmt(r.wall_ms);
  return os.str();
}

inline std::string telemetry_csv(const std::vector<trainer::TelemetryRecord>& recs) {
  std::ostringstream os;
  os << telemetry_header() << '\n';
  for (const auto& r : recs) os << telemetry_line(r) << '\n';
  return os.str();
}

// Strips the trailing wall-clock column from every line; used by the
// determinism checks.
inline std::string strip_wall_column(const std::string& csv) {
  std::ostringstream os;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    auto pos = line.rfind(',');
    os << (pos == std::string::npos ? line : line.substr(0, pos)) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

// 8-bit binary PGM from a matrix of values in [0, 1].
inline void write_pgm(const std::string& path, const Matrix& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "P5\n" << m.cols() << " " << m.rows() << "\n255\n";
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      long v = std::lround(255.0 * std::min(1.0, std::max(0.0, m(i, j))));
      f.put(static_cast<char>(v));
    }
  if (!f) throw IoError("write failed: " + path);
}

inline unsigned char pixel_byte(double v) {
  long b = std::lround(127.5 * (v + 1.0));
  return static_cast<unsigned char>(std::min(255L, std::max(0L, b)));
}

// Tile sheet of decoded samples in [-1, 1]. Columns of `samples` are images
// of shape (channels, h, w) flattened channel-major; `per_row` tiles per
// sheet row. channels must be 1 (PGM) or 3 (PPM).
inline void write_tile_sheet(const std::string& path, const Matrix& samples, int channels,
                             int h, int w, int per_row) {
  if (channels != 1 && channels != 3) throw InvalidConfig("tile sheet: channels must be 1 or 3");
  if (samples.rows() != channels * h * w)
    throw DimensionMismatch("tile sheet: sample dim != c*h*w");
  const int n = samples.cols();
  const int rows = (n + per_row - 1) / per_row;
  const int sheet_w = per_row * w, sheet_h = rows * h;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << (channels == 3 ? "P6" : "P5") << "\n" << sheet_w << " " << sheet_h << "\n255\n";
  for (int py = 0; py < sheet_h; ++py) {
    for (int px = 0; px < sheet_w; ++px) {
      int tile = (py / h) * per_row + (px / w);
      int ty = py % h, tx = px % w;
      for (int c = 0; c < channels; ++c) {
        unsigned char b = 0;
        if (tile < n) b = pixel_byte(samples((c * h + ty) * w + tx, tile));
        f.put(static_cast<char>(b));
      }
    }
  }
  if (!f) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string matrix_csv(const Matrix& m) {
  std::ostringstream os;
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << fmt(m(i, j));
    }
    os << '\n';
  }
  return os.str();
}

inline std::string eval_report_text(const eval::EvalReport& r) {
  std::ostringstream os;
  os << "probe_accuracy = " << fmt(r.probe_accuracy) << '\n';
  os << "cosine_margin = " << fmt(r.cosine_margin) << '\n';
  if (r.has_cluster_metrics) {
    os << "nmi = " << fmt(r.nmi) << '\n';
    os << "cluster_accuracy = " << fmt(r.cluster_accuracy) << '\n';
  }
  return os.str();
}

inline std::string eval_report_csv(const eval::EvalReport& r) {
  std::ostringstream os;
  os << "metric,value\n";
  os << "probe_accuracy," << fmt(r.probe_accuracy) << '\n';
  os << "cosine_margin," << fmt(r.cosine_margin) << '\n';
  if (r.has_cluster_metrics) {
    os << "nmi," << fmt(r.nmi) << '\n';
    os << "cluster_accuracy," << fmt(r.cluster_accuracy) << '\n';
  }
  return os.str();
}

inline std::string per_class_csv(const std::vector<eval::PerClassRow>& rows) {
  std::ostringstream os;
  os << "label,count,within_cos,cross_cos,probe_recall\n";
  for (const auto& r : rows)
    os << r.label << ',' << r.count << ',' << fmt(r.within_cos) << ',' << fmt(r.cross_cos) << ','
       << fmt(r.probe_recall) << '\n';
  return os.str();
}

}  // namespace uctrl::io
