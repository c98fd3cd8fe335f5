#pragma once

#include "trddpc/error.hpp"
#include "trddpc/linalg.hpp"

#include <json.hpp>

#include <vector>

namespace trddpc {

/// Row-major nested array [[row 0], [row 1], ...].
inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    j.push_back(row);
  }
  return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::kInvalidArgument, "matrix JSON must be an array of rows");
  if (j.empty()) return Matrix(0, 0);
  // A flat array is read as a column vector.
  if (!j[0].is_array()) {
    Matrix m(static_cast<Eigen::Index>(j.size()), 1);
    for (std::size_t r = 0; r < j.size(); ++r) m(static_cast<Eigen::Index>(r), 0) = j[r].get<double>();
    return m;
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorCode::kDimensionMismatch, "ragged matrix JSON");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline nlohmann::json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto d = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
}

}  // namespace trddpc
