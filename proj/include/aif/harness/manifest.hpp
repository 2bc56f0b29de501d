#pragma once

// Run manifests: resolved configuration text plus SHA-1 digests of every
// input and output file.

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>
#include <string>

namespace aif::harness {

inline std::string sha1_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string sha1_file(const std::string& path) { return sha1_hex(read_file(path)); }

struct Manifest {
  std::string mode;
  std::uint64_t seed = 0;
  std::string config;                          // resolved configuration text
  std::map<std::string, std::string> inputs;   // path -> SHA-1
  std::map<std::string, std::string> outputs;  // file name in the output directory -> SHA-1

  nlohmann::json to_json() const {
    return {{"format", "aif-eec-manifest"},
            {"version", 1},
            {"mode", mode},
            {"seed", seed},
            {"config", config},
            {"config_sha1", sha1_hex(config)},
            {"inputs", inputs},
            {"outputs", outputs}};
  }

  static Manifest from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "aif-eec-manifest") throw std::runtime_error("not a run manifest");
    Manifest m;
    m.mode = j.at("mode").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config").get<std::string>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    return m;
  }

  static Manifest load(const std::string& path) { return from_json(nlohmann::json::parse(read_file(path))); }
};

}  // namespace aif::harness
