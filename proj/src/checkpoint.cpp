#include "fpr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fpr {

namespace {

constexpr char kMagic[4] = {'F', 'P', 'R', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

double get_f64(const char* p) {
  std::uint64_t bits = get_u64(p);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

const ArrayEntry& Container::array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw std::runtime_error("container: missing array '" + name + "'");
}

bool Container::has_array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return true;
  }
  return false;
}

void write_container(const std::string& path, const Container& c) {
  nlohmann::json header;
  header["kind"] = c.kind;
  header["meta"] = c.meta;
  auto arrays = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : c.arrays) {
    if (shape_numel(a.shape) != a.data.size()) {
      throw std::runtime_error("container: array '" + a.name + "' shape/data mismatch");
    }
    arrays.push_back({{"name", a.name},
                      {"shape", a.shape},
                      {"offset", offset},
                      {"count", a.data.size()}});
    offset += a.data.size();
  }
  header["arrays"] = std::move(arrays);
  const std::string header_str = header.dump();

  std::string out;
  out.reserve(16 + header_str.size() + offset * 8);
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, header_str.size());
  out += header_str;
  if constexpr (std::endian::native == std::endian::little) {
    for (const auto& a : c.arrays) {
      const std::size_t pos = out.size();
      out.resize(pos + a.data.size() * 8);
      std::memcpy(out.data() + pos, a.data.data(), a.data.size() * 8);
    }
  } else {
    for (const auto& a : c.arrays)
      for (double d : a.data) put_f64(out, d);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("container: cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("container: write failed for '" + path + "'");
}

Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("container: cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw std::runtime_error("container: '" + path + "' is not an FPRC file");
  }
  const std::uint32_t version = get_u32(buf.data() + 4);
  if (version != kVersion) {
    throw std::runtime_error("container: unsupported version " + std::to_string(version));
  }
  const std::uint64_t header_len = get_u64(buf.data() + 8);
  if (16 + header_len > buf.size()) throw std::runtime_error("container: truncated header");
  const nlohmann::json header = nlohmann::json::parse(buf.substr(16, header_len));

  Container c;
  c.kind = header.at("kind").get<std::string>();
  c.meta = header.value("meta", nlohmann::json::object());
  const char* payload = buf.data() + 16 + header_len;
  const std::size_t payload_count = (buf.size() - 16 - header_len) / 8;
  for (const auto& a : header.at("arrays")) {
    ArrayEntry e;
    e.name = a.at("name").get<std::string>();
    e.shape = a.at("shape").get<Shape>();
    const std::uint64_t offset = a.at("offset").get<std::uint64_t>();
    const std::uint64_t count = a.at("count").get<std::uint64_t>();
    if (offset + count > payload_count) throw std::runtime_error("container: truncated payload");
    e.data.resize(count);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(e.data.data(), payload + offset * 8, count * 8);
    } else {
      for (std::uint64_t i = 0; i < count; ++i) e.data[i] = get_f64(payload + (offset + i) * 8);
    }
    c.arrays.push_back(std::move(e));
  }
  return c;
}

}  // namespace fpr
