#include "passdoor/checkpoint.hpp"
#include "passdoor/util.hpp"

#include <openssl/evp.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace passdoor {

namespace {
using json = nlohmann::ordered_json;
constexpr char kMagic[4] = {'P', 'D', 'W', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated weight file");
  return v;
}
}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

WeightMap WeightMap::from_params(const std::vector<ParamRef<float>>& params) {
  WeightMap w;
  for (const auto& p : params) {
    if (!w.tensors.emplace(p.name, std::vector<float>(p.w->begin(), p.w->end())).second) {
      throw std::logic_error("duplicate parameter name: " + p.name);
    }
  }
  return w;
}

void WeightMap::into_params(const std::vector<ParamRef<float>>& params) const {
  for (const auto& p : params) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw std::runtime_error("missing tensor: " + p.name);
    if (it->second.size() != p.w->size()) {
      throw std::runtime_error("tensor size mismatch for " + p.name);
    }
    p.w->assign(it->second.begin(), it->second.end());
  }
}

void save_weights(const std::filesystem::path& path, const WeightMap& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, 4);
  write_pod(out, static_cast<std::uint32_t>(w.tensors.size()));
  for (const auto& [name, data] : w.tensors) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint64_t>(data.size()));
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("short write: " + path.string());
}

WeightMap load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("bad weight file magic: " + path.string());
  }
  const auto count = read_pod<std::uint32_t>(in);
  WeightMap w;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto numel = read_pod<std::uint64_t>(in);
    std::vector<float> data(numel);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(numel * sizeof(float)));
    if (!in) throw std::runtime_error("truncated weight file: " + path.string());
    w.tensors.emplace(std::move(name), std::move(data));
  }
  return w;
}

void write_sidecar(const std::filesystem::path& path, const std::string& kind,
                   const std::string& config_json, std::uint64_t seed, long steps,
                   const std::vector<double>& loss_tail) {
  json j;
  j["kind"] = kind;
  j["config"] = json::parse(config_json);
  j["config_hash"] = sha256_hex(config_json);
  j["seed"] = seed;
  j["steps"] = steps;
  j["loss_tail"] = loss_tail;
  write_text_file(path, j.dump(2) + "\n");
}

Sidecar read_sidecar(const std::filesystem::path& path,
                     const std::string& expected_config_json) {
  json j = json::parse(read_text_file(path));
  Sidecar s;
  s.kind = j.at("kind").get<std::string>();
  s.config_json = j.at("config").dump();
  s.config_hash = j.at("config_hash").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.steps = j.at("steps").get<long>();
  s.loss_tail = j.at("loss_tail").get<std::vector<double>>();
  if (sha256_hex(s.config_json) != s.config_hash) {
    throw std::runtime_error("sidecar config hash mismatch (corrupt?): " + path.string());
  }
  if (!expected_config_json.empty() &&
      sha256_hex(expected_config_json) != s.config_hash) {
    throw std::runtime_error("checkpoint config hash does not match expected config: " +
                             path.string());
  }
  return s;
}

}  // namespace passdoor
