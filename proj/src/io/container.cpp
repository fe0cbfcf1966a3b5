#include "talkinghead/io/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "talkinghead/error.hpp"

namespace th::io {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'H', 'C', 'B'};
constexpr std::uint32_t kVersion = 1;

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

}  // namespace

Container::Array& Container::insert(const std::string& name) {
  if (index_.count(name)) throw ConfigError("container: duplicate array '" + name + "'");
  index_[name] = arrays_.size();
  arrays_.push_back(Array{});
  arrays_.back().name = name;
  return arrays_.back();
}

void Container::add_f32(const std::string& name, std::vector<std::int64_t> shape,
                        std::span<const double> values) {
  if (element_count(shape) != static_cast<std::int64_t>(values.size()))
    throw ConfigError("container: shape/size mismatch for '" + name + "'");
  Array& a = insert(name);
  a.dtype = "f32";
  a.shape = std::move(shape);
  a.f32.assign(values.begin(), values.end());
}

void Container::add_f32(const std::string& name, std::vector<std::int64_t> shape,
                        std::span<const float> values) {
  if (element_count(shape) != static_cast<std::int64_t>(values.size()))
    throw ConfigError("container: shape/size mismatch for '" + name + "'");
  Array& a = insert(name);
  a.dtype = "f32";
  a.shape = std::move(shape);
  a.f32.assign(values.begin(), values.end());
}

void Container::add_i32(const std::string& name, std::vector<std::int64_t> shape,
                        std::span<const std::int32_t> values) {
  if (element_count(shape) != static_cast<std::int64_t>(values.size()))
    throw ConfigError("container: shape/size mismatch for '" + name + "'");
  Array& a = insert(name);
  a.dtype = "i32";
  a.shape = std::move(shape);
  a.i32.assign(values.begin(), values.end());
}

void Container::add_matrix(const std::string& name, const Eigen::MatrixXd& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  add_f32(name, {m.rows(), m.cols()}, std::span<const double>(rm.data(), static_cast<std::size_t>(rm.size())));
}

bool Container::has(const std::string& name) const { return index_.count(name) != 0; }

const Container::Array& Container::array(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw IoError("container: missing array '" + name + "'");
  return arrays_[it->second];
}

std::vector<double> Container::f32_as_double(const std::string& name) const {
  const Array& a = array(name);
  if (a.dtype != "f32") throw IoError("container: array '" + name + "' is not f32");
  return {a.f32.begin(), a.f32.end()};
}

Eigen::MatrixXd Container::matrix(const std::string& name) const {
  const Array& a = array(name);
  if (a.dtype != "f32" || a.shape.size() != 2) throw IoError("container: '" + name + "' is not an f32 matrix");
  Eigen::MatrixXd m(a.shape[0], a.shape[1]);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = a.f32[static_cast<std::size_t>(r * m.cols() + c)];
  return m;
}

void Container::write(const std::string& path) const {
  nlohmann::json header;
  header["meta"] = meta_;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : arrays_) {
    const std::uint64_t nbytes = (a.dtype == "f32" ? a.f32.size() : a.i32.size()) * 4u;
    header["arrays"].push_back(
        {{"name", a.name}, {"dtype", a.dtype}, {"shape", a.shape}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string text = header.dump();
  const std::uint64_t header_len = text.size();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write container: " + path);
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&kVersion), 4);
  out.write(reinterpret_cast<const char*>(&header_len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : arrays_) {
    if (a.dtype == "f32")
      out.write(reinterpret_cast<const char*>(a.f32.data()), static_cast<std::streamsize>(a.f32.size() * 4));
    else
      out.write(reinterpret_cast<const char*>(a.i32.data()), static_cast<std::streamsize>(a.i32.size() * 4));
  }
  if (!out) throw IoError("write failed: " + path);
}

Container Container::read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read container: " + path);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&header_len), 8);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad container magic: " + path);
  if (version != kVersion) throw IoError("unsupported container version: " + path);
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const auto header = nlohmann::json::parse(text);
  Container c;
  c.meta_ = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("arrays")) {
    const auto name = entry.at("name").get<std::string>();
    const auto dtype = entry.at("dtype").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
    if (offset + nbytes > payload.size()) throw IoError("container payload truncated: " + path);
    if (static_cast<std::uint64_t>(element_count(shape)) * 4u != nbytes)
      throw IoError("container array size mismatch for '" + name + "'");
    Array& a = c.insert(name);
    a.dtype = dtype;
    a.shape = shape;
    if (dtype == "f32") {
      a.f32.resize(nbytes / 4);
      std::memcpy(a.f32.data(), payload.data() + offset, nbytes);
    } else if (dtype == "i32") {
      a.i32.resize(nbytes / 4);
      std::memcpy(a.i32.data(), payload.data() + offset, nbytes);
    } else {
      throw IoError("unknown dtype '" + dtype + "' in " + path);
    }
  }
  return c;
}

}  // namespace th::io
