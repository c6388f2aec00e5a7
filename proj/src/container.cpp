#include "fcprint/container.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <openssl/evp.h>

#include "fcprint/error.hpp"

namespace fcprint::io {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t offset) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) {
    v |= std::uint64_t(static_cast<unsigned char>(in[offset + std::size_t(b)])) << (8 * b);
  }
  return v;
}

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

// Parses the header block and checks the fields the payload depends on.
std::pair<nlohmann::json, std::vector<std::size_t>> parse_header(const std::string& bytes, std::size_t& payload_at) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kContainerMagic, 8) != 0) {
    throw IoError("not a matrix container (bad magic)");
  }
  const std::uint64_t header_len = get_u64(bytes, 8);
  if (header_len > bytes.size() - 16) throw IoError("container header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("container header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || !header.contains("shape") || !header["shape"].is_array()) {
    throw IoError("container header lacks a shape");
  }
  if (header.value("dtype", "") != "f64" || header.value("byte_order", "") != "little") {
    throw IoError("container payload must be little-endian f64");
  }
  std::vector<std::size_t> shape;
  for (const auto& s : header["shape"]) {
    if (!s.is_number_unsigned()) throw IoError("container shape entries must be unsigned integers");
    shape.push_back(s.get<std::size_t>());
  }
  payload_at = 16 + header_len;
  return {header, shape};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

MatrixContainer MatrixContainer::from_matrix(const Eigen::MatrixXd& m, const std::string& role) {
  MatrixContainer c;
  c.shape = {std::size_t(m.rows()), std::size_t(m.cols())};
  c.payload.reserve(std::size_t(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) c.payload.push_back(m(r, k));
  }
  c.header["role"] = role;
  return c;
}

MatrixContainer MatrixContainer::from_vector(const Eigen::VectorXd& v, const std::string& role) {
  MatrixContainer c;
  c.shape = {std::size_t(v.size())};
  c.payload.assign(v.data(), v.data() + v.size());
  c.header["role"] = role;
  return c;
}

Eigen::MatrixXd MatrixContainer::to_matrix() const {
  if (shape.size() != 2) throw DimensionError("container is not 2-dimensional");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
  std::size_t q = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(r, k) = payload[q++];
  }
  return m;
}

Eigen::VectorXd MatrixContainer::to_vector() const {
  if (shape.size() != 1) throw DimensionError("container is not 1-dimensional");
  return Eigen::Map<const Eigen::VectorXd>(payload.data(), Eigen::Index(payload.size()));
}

std::string serialize(const MatrixContainer& c) {
  if (element_count(c.shape) != c.payload.size()) throw DimensionError("container payload does not match shape");
  nlohmann::json header = c.header;
  header["shape"] = c.shape;
  header["dtype"] = "f64";
  header["byte_order"] = "little";
  const std::string text = header.dump();
  std::string out(kContainerMagic, 8);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + 8 * c.payload.size());
  for (double v : c.payload) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

MatrixContainer deserialize(const std::string& bytes) {
  std::size_t at = 0;
  auto [header, shape] = parse_header(bytes, at);
  const std::size_t count = element_count(shape);
  if (bytes.size() - at != 8 * count) {
    throw IoError("container payload is " + std::to_string(bytes.size() - at) + " bytes, expected " +
                  std::to_string(8 * count));
  }
  MatrixContainer c;
  c.shape = shape;
  c.payload.resize(count);
  for (std::size_t q = 0; q < count; ++q) c.payload[q] = std::bit_cast<double>(get_u64(bytes, at + 8 * q));
  header.erase("shape");
  header.erase("dtype");
  header.erase("byte_order");
  c.header = std::move(header);
  return c;
}

nlohmann::json read_header(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::size_t at = 0;
  return parse_header(bytes, at).first;
}

void write_container(const std::filesystem::path& path, const MatrixContainer& c) {
  write_text(path, serialize(c));
}

MatrixContainer read_container(const std::filesystem::path& path) { return deserialize(read_file(path)); }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  auto emit = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out.push_back(',');
      out += fields[i];
    }
    out.push_back('\n');
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != table.header.size()) throw IoError("CSV row width differs from header");
      table.rows.push_back(std::move(fields));
    }
  }
  return table;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) { write_text(path, to_csv(table)); }

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_file(path)); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), std::streamsize(text.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) { return read_file(path); }

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace fcprint::io
