#include "cli/manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace sfpl::cli {

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::ordered_json Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["version"] = SFPL_VERSION;
  j["options"] = options;
  nlohmann::ordered_json in = nlohmann::ordered_json::object();
  for (const auto& [path, digest] : inputs) in[path] = {{"sha256", digest}};
  j["inputs"] = in;
  j["seed"] = seed;
  j["grid"] = grid;
  j["thresholds"] = thresholds;
  j["outputs"] = outputs;
  j["started_utc"] = started_utc;
  j["wall_seconds"] = wall_seconds;
  return j;
}

void Manifest::write(const std::string& dir) const {
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in '" + dir + "'");
  out << to_json().dump(2) << '\n';
}

}  // namespace sfpl::cli
