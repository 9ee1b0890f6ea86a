#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdlab/errors.hpp"
#include "sdlab/linalg.hpp"

// Shared little-endian container: 8-byte magic, u32 header length, UTF-8 JSON
// header, then raw row-major array payloads at absolute file offsets.
namespace sdlab::container {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

struct ArrayEntry {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint64_t offset = 0;
  std::string dtype = "f64";
};

struct Layout {
  nlohmann::json header;
  std::vector<ArrayEntry> arrays;
};

inline void write_file(const std::filesystem::path& path, const char magic[8],
                       nlohmann::json header, const std::vector<std::string>& names,
                       const std::vector<const Matrix*>& payloads,
                       const std::vector<std::string>& dtypes) {
  nlohmann::json arrays = nlohmann::json::array();
  // First pass with offset 0 to fix the header length, then patch offsets.
  for (std::size_t i = 0; i < names.size(); ++i) {
    arrays.push_back({{"name", names[i]},
                      {"rows", payloads[i]->rows},
                      {"cols", payloads[i]->cols},
                      {"offset", 0},
                      {"dtype", dtypes[i]}});
  }
  header["arrays"] = arrays;
  // Offsets depend on the header length, which depends on the offsets' digit
  // counts; iterate to the fixed point (digit counts are monotone in the
  // base, so this settles in a couple of rounds).
  std::string body = header.dump();
  for (int round = 0; round < 16; ++round) {
    std::uint64_t offset = 8 + 4 + body.size();
    for (std::size_t i = 0; i < names.size(); ++i) {
      header["arrays"][i]["offset"] = offset;
      const std::size_t elem = dtypes[i] == "f32" ? 4 : 8;
      offset += payloads[i]->data.size() * elem;
    }
    std::string next = header.dump();
    const bool stable = next.size() == body.size();
    body = std::move(next);
    if (stable) break;
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(magic, 8);
  const std::uint32_t len = static_cast<std::uint32_t>(body.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    const Matrix& m = *payloads[i];
    if (dtypes[i] == "f32") {
      std::vector<float> tmp(m.data.begin(), m.data.end());
      out.write(reinterpret_cast<const char*>(tmp.data()),
                static_cast<std::streamsize>(tmp.size() * 4));
    } else {
      out.write(reinterpret_cast<const char*>(m.data.data()),
                static_cast<std::streamsize>(m.data.size() * 8));
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline Layout read_header(std::ifstream& in, const std::filesystem::path& path,
                          const char expected_magic[8]) {
  char magic[8];
  if (!in.read(magic, 8)) throw IoError(path.string() + ": truncated header");
  if (std::string(magic, 8) != std::string(expected_magic, 8)) {
    throw IoError(path.string() + ": bad magic");
  }
  std::uint32_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), 4)) {
    throw IoError(path.string() + ": truncated header");
  }
  std::string body(len, '\0');
  if (!in.read(body.data(), len)) throw IoError(path.string() + ": truncated header");

  Layout layout;
  try {
    layout.header = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed JSON header: " + e.what());
  }
  if (!layout.header.contains("arrays") || !layout.header["arrays"].is_array()) {
    throw IoError(path.string() + ": header missing arrays");
  }
  for (const auto& a : layout.header["arrays"]) {
    ArrayEntry e;
    e.name = a.at("name").get<std::string>();
    e.rows = a.at("rows").get<std::size_t>();
    e.cols = a.at("cols").get<std::size_t>();
    e.offset = a.at("offset").get<std::uint64_t>();
    e.dtype = a.value("dtype", "f64");
    if (e.dtype != "f64" && e.dtype != "f32") {
      throw IoError(path.string() + ": unsupported dtype '" + e.dtype + "' for array " + e.name);
    }
    layout.arrays.push_back(std::move(e));
  }
  return layout;
}

inline Matrix read_array(std::ifstream& in, const std::filesystem::path& path,
                         const ArrayEntry& entry) {
  Matrix m(entry.rows, entry.cols);
  in.seekg(static_cast<std::streamoff>(entry.offset));
  if (entry.dtype == "f32") {
    std::vector<float> tmp(m.data.size());
    if (!in.read(reinterpret_cast<char*>(tmp.data()),
                 static_cast<std::streamsize>(tmp.size() * 4))) {
      throw IoError(path.string() + ": truncated payload for array " + entry.name);
    }
    for (std::size_t i = 0; i < tmp.size(); ++i) m.data[i] = static_cast<double>(tmp[i]);
  } else {
    if (!in.read(reinterpret_cast<char*>(m.data.data()),
                 static_cast<std::streamsize>(m.data.size() * 8))) {
      throw IoError(path.string() + ": truncated payload for array " + entry.name);
    }
  }
  return m;
}

}  // namespace sdlab::container
