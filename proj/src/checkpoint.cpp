#include "capgen/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "capgen/errors.hpp"

namespace capgen {

namespace {

constexpr char kMagic[4] = {'C', 'G', 'T', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

nlohmann::json read_header(std::ifstream& in, const std::string& path) {
  char magic[4];
  std::uint64_t hlen = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&hlen), 8);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a tensor file: " + path);
  }
  std::string hdr(hlen, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw IoError("truncated tensor file header: " + path);
  return nlohmann::json::parse(hdr);
}

}  // namespace

void save_tensors(const std::string& path, const ParamMap& params) {
  nlohmann::json header = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params.items()) {
    header.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(double);
  }
  std::string hdr = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  std::uint64_t hlen = hdr.size();
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hdr.data(), static_cast<std::streamsize>(hlen));
  for (const auto& [name, t] : params.items()) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed: " + path);
}

void load_tensors(const std::string& path, ParamMap& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json header = read_header(in, path);
  std::streampos data_start = in.tellg();

  for (auto& [name, t] : params.items()) {
    const nlohmann::json* entry = nullptr;
    for (const auto& e : header) {
      if (e.at("name").get<std::string>() == name) {
        entry = &e;
        break;
      }
    }
    if (!entry) throw IoError("tensor '" + name + "' missing from " + path);
    Shape found = entry->at("shape").get<Shape>();
    if (found != t.shape()) {
      throw IoError("tensor '" + name + "' shape mismatch: expected " + shape_str(t.shape()) +
                    ", found " + shape_str(found) + " in " + path);
    }
    in.seekg(data_start + static_cast<std::streamoff>(entry->at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw IoError("truncated tensor data for '" + name + "' in " + path);
  }
}

ParamMap load_all_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json header = read_header(in, path);
  std::streampos data_start = in.tellg();

  ParamMap out;
  for (const auto& e : header) {
    Tensor t(e.at("shape").get<Shape>());
    in.seekg(data_start + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw IoError("truncated tensor data in " + path);
    out.add(e.at("name").get<std::string>(), std::move(t));
  }
  return out;
}

}  // namespace capgen
