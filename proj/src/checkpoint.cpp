#include "csa/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "csa/error.hpp"

namespace csa {
namespace {

constexpr char kMagic[4] = {'C', 'S', 'A', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t v = 0;
  std::memcpy(&v, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DataError("checkpoint truncated while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw DataError("checkpoint truncated while reading " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double d = 0;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(params.items.size()));
  for (const auto& [name, tensor] : params.items) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& shape = tensor.shape();
    put_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (int e : shape) put_u32(os, static_cast<std::uint32_t>(e));
    for (std::int64_t i = 0; i < tensor.size(); ++i) put_f64(os, tensor[i]);
  }
  if (!os) throw DataError("write failed for checkpoint: " + path);
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a checkpoint file: " + path);
  std::uint32_t version = get_u32(is, "version");
  if (version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  std::uint32_t count = get_u32(is, "record count");
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    std::uint32_t name_len = get_u32(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw DataError("checkpoint truncated while reading name");
    std::uint32_t rank = get_u32(is, name + " rank");
    Shape shape(rank);
    std::size_t count_d = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int>(get_u32(is, name + " extent"));
      if (shape[d] <= 0) throw DataError("non-positive extent in checkpoint record " + name);
      count_d *= static_cast<std::size_t>(shape[d]);
    }
    std::vector<double> data(count_d);
    for (std::size_t i = 0; i < count_d; ++i) data[i] = get_f64(is, name + " payload");
    out.emplace_back(name, Tensor::from(shape, std::move(data)));
  }
  return out;
}

void load_checkpoint(const std::string& path, ParamMap& params) {
  auto records = read_checkpoint(path);
  std::unordered_set<std::string> seen;
  for (auto& [name, value] : records) {
    Tensor* target = params.find(name);
    if (target == nullptr)
      throw DataError("checkpoint record has no matching parameter: " + name);
    if (!same_shape(target->shape(), value.shape()))
      throw DimensionError("checkpoint shape mismatch for " + name + ": file " +
                           to_string(value.shape()) + " vs parameter " +
                           to_string(target->shape()));
    target->value() = value.value();
    seen.insert(name);
  }
  for (const auto& [name, tensor] : params.items) {
    (void)tensor;
    if (seen.count(name) == 0)
      throw DataError("parameter missing from checkpoint: " + name);
  }
}

}  // namespace csa
