#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>

namespace nlohmann {

/// Vectors serialize as flat arrays, matrices as arrays of rows.
template <typename Scalar, int Rows, int Cols, int Options, int MaxRows, int MaxCols>
struct adl_serializer<Eigen::Matrix<Scalar, Rows, Cols, Options, MaxRows, MaxCols>> {
  using Mat = Eigen::Matrix<Scalar, Rows, Cols, Options, MaxRows, MaxCols>;

  static void to_json(json& j, const Mat& m) {
    j = json::array();
    if (Cols == 1) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) j.push_back(m(i, 0));
      return;
    }
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
      j.push_back(row);
    }
  }

  static void from_json(const json& j, Mat& m) {
    if (!j.is_array()) throw std::invalid_argument("expected an array");
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (Cols == 1) {
      if (Rows != Eigen::Dynamic && rows != Rows) {
        throw std::invalid_argument("expected " + std::to_string(Rows) + " entries, got " +
                                    std::to_string(rows));
      }
      m.resize(rows, 1);
      for (Eigen::Index i = 0; i < rows; ++i) m(i, 0) = j.at(i).template get<Scalar>();
      return;
    }
    const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
    if ((Rows != Eigen::Dynamic && rows != Rows) || (Cols != Eigen::Dynamic && cols != Cols)) {
      throw std::invalid_argument("matrix has the wrong shape");
    }
    m.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (static_cast<Eigen::Index>(j.at(i).size()) != cols) {
        throw std::invalid_argument("ragged matrix rows");
      }
      for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).template get<Scalar>();
    }
  }
};

}  // namespace nlohmann

namespace obed {

/// Reads j[key] into out when present, prefixing conversion errors with the key.
template <typename T>
void read_optional(const nlohmann::json& j, const std::string& key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const std::exception& e) {
    throw std::invalid_argument(key + ": " + e.what());
  }
}

}  // namespace obed
