#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace koop::textio {

/// Formats with 17 significant digits (round-trips doubles exactly).
std::string fmt(double v);

/// Matrix file: "rows cols" header, then one row per line.
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& M);
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

void write_vector(const std::filesystem::path& path, const Eigen::VectorXd& v);
Eigen::VectorXd read_vector(const std::filesystem::path& path);

/// Flat `key = value` config with `[section]` headers and `#` comments.
/// Keys are stored as "section.key" ("" section for the preamble).
class KeyValueFile {
 public:
  KeyValueFile() = default;
  static KeyValueFile parse(const std::filesystem::path& path);
  static KeyValueFile parse_text(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback = "") const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;  // space-separated

  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);
  void write(const std::filesystem::path& path) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace koop::textio
