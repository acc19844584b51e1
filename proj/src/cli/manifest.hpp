#pragma once

#include <map>
#include <string>

#include <json.hpp>

namespace sfpl::cli {

// Lowercase hex SHA-256 of a file's bytes. Throws std::runtime_error when the
// file cannot be read.
std::string sha256_file(const std::string& path);

struct Manifest {
  std::string command;
  nlohmann::ordered_json options = nlohmann::ordered_json::object();
  std::map<std::string, std::string> inputs;  // path -> sha256
  std::uint64_t seed = 0;
  nlohmann::ordered_json grid = nlohmann::ordered_json::object();
  nlohmann::ordered_json thresholds = nlohmann::ordered_json::object();
  nlohmann::ordered_json outputs = nlohmann::ordered_json::array();
  double wall_seconds = 0.0;
  std::string started_utc;

  void add_input(const std::string& path) { inputs[path] = sha256_file(path); }
  nlohmann::ordered_json to_json() const;
  // Writes <dir>/manifest.json.
  void write(const std::string& dir) const;
};

std::string utc_timestamp();

}  // namespace sfpl::cli
