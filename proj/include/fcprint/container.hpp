#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace fcprint::io {

// Binary matrix container:
//
//   offset 0   8 bytes   magic "FCPMAT01"
//   offset 8   8 bytes   header length H, unsigned little-endian
//   offset 16  H bytes   UTF-8 JSON header (shape, dtype, byte_order, role, ...)
//   offset 16+H          product(shape) IEEE-754 doubles, little-endian,
//                        row-major
struct MatrixContainer {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::size_t> shape;
  std::vector<double> payload;

  static MatrixContainer from_matrix(const Eigen::MatrixXd& m, const std::string& role);
  static MatrixContainer from_vector(const Eigen::VectorXd& v, const std::string& role);
  Eigen::MatrixXd to_matrix() const;
  Eigen::VectorXd to_vector() const;
};

inline constexpr char kContainerMagic[8] = {'F', 'C', 'P', 'M', 'A', 'T', '0', '1'};

std::string serialize(const MatrixContainer& c);
MatrixContainer deserialize(const std::string& bytes);
// Reads and validates only the header.
nlohmann::json read_header(const std::filesystem::path& path);

void write_container(const std::filesystem::path& path, const MatrixContainer& c);
MatrixContainer read_container(const std::filesystem::path& path);

// Comma-separated, '.' decimal, header row, LF line endings. Fields are never
// quoted, so values must not contain commas or newlines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  bool operator==(const CsvTable&) const = default;
};

std::string format_double(double v);
std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
// Pretty-printed JSON with sorted keys and a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

std::string sha256_hex(const std::string& bytes);

}  // namespace fcprint::io
