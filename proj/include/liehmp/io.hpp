#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "liehmp/errors.hpp"

namespace liehmp::io {

using json = nlohmann::json;

/// Shortest decimal form that round-trips ("%.17g").
inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Writes `text` through a temporary sibling and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Incremental CSV builder with a fixed header.
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) text_ += ',';
      text_ += header[i];
    }
    text_ += '\n';
    columns_ = header.size();
  }

  void row(const std::vector<double>& values) {
    if (values.size() != columns_) throw Error("CSV row has the wrong number of columns");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) text_ += ',';
      text_ += fmt(values[i]);
    }
    text_ += '\n';
  }

  const std::string& str() const { return text_; }

 private:
  std::string text_;
  std::size_t columns_ = 0;
};

template <typename Derived>
json to_json_rowmajor(const Eigen::MatrixBase<Derived>& m) {
  json a = json::array();
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  return a;
}

template <typename Derived>
json to_json_vector(const Eigen::MatrixBase<Derived>& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

template <int R, int C>
Eigen::Matrix<double, R, C> matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(R * C)) {
    throw Error(what + ": expected an array of " + std::to_string(R * C) + " numbers");
  }
  Eigen::Matrix<double, R, C> m;
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) {
      const auto& x = j[static_cast<std::size_t>(r * C + c)];
      if (!x.is_number()) throw Error(what + ": entries must be numbers");
      m(r, c) = x.get<double>();
    }
  return m;
}

}  // namespace liehmp::io
