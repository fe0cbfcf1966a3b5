#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace th::io {

/// Binary container shared by bases, feature sequences and checkpoints.
///
/// Layout (all integers little-endian):
///   bytes 0..3   magic "THCB"
///   bytes 4..7   uint32 format version (1)
///   bytes 8..15  uint64 length of the JSON header in bytes
///   JSON header  {"meta": {...}, "arrays": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}
///   payload      arrays back to back; "offset" is relative to the payload start.
/// dtype is "f32" (IEEE float) or "i32". Arrays keep insertion order.
class Container {
 public:
  struct Array {
    std::string name;
    std::string dtype;
    std::vector<std::int64_t> shape;
    std::vector<float> f32;
    std::vector<std::int32_t> i32;
  };

  nlohmann::json& meta() { return meta_; }
  [[nodiscard]] const nlohmann::json& meta() const { return meta_; }

  void add_f32(const std::string& name, std::vector<std::int64_t> shape, std::span<const double> values);
  void add_f32(const std::string& name, std::vector<std::int64_t> shape, std::span<const float> values);
  void add_i32(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::int32_t> values);
  // Row-major matrix.
  void add_matrix(const std::string& name, const Eigen::MatrixXd& m);

  [[nodiscard]] bool has(const std::string& name) const;
  [[nodiscard]] const Array& array(const std::string& name) const;
  [[nodiscard]] std::vector<double> f32_as_double(const std::string& name) const;
  [[nodiscard]] Eigen::MatrixXd matrix(const std::string& name) const;
  [[nodiscard]] const std::vector<Array>& arrays() const { return arrays_; }

  void write(const std::string& path) const;
  static Container read(const std::string& path);

 private:
  Array& insert(const std::string& name);

  nlohmann::json meta_ = nlohmann::json::object();
  std::vector<Array> arrays_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace th::io
