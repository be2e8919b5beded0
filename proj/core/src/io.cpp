#include "tristream/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace tristream {

static_assert(std::endian::native == std::endian::little,
              "t3sr i/o assumes a little-endian host");

namespace {
constexpr char kMagic[4] = {'T', '3', 'S', 'R'};
constexpr uint8_t kVersion = 1;
}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValueError("write_tensor: cannot open " + path.string());
  out.write(kMagic, 4);
  out.put(static_cast<char>(kVersion));
  out.put(static_cast<char>(t.rank()));
  for (int64_t e : t.shape()) {
    const auto extent = static_cast<uint32_t>(e);
    out.write(reinterpret_cast<const char*>(&extent), sizeof(extent));
  }
  out.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(sizeof(float) * t.numel()));
  if (!out) throw ValueError("write_tensor: short write to " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValueError("read_tensor: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ValueError("read_tensor: bad magic in " + path.string());
  const int version = in.get();
  if (version != kVersion)
    throw ValueError("read_tensor: unsupported version " + std::to_string(version) +
                     " in " + path.string());
  const int rank = in.get();
  if (rank < 0 || rank > 8)
    throw ValueError("read_tensor: implausible rank in " + path.string());
  Shape shape(static_cast<size_t>(rank));
  for (auto& e : shape) {
    uint32_t extent = 0;
    in.read(reinterpret_cast<char*>(&extent), sizeof(extent));
    if (!in || extent == 0)
      throw ValueError("read_tensor: bad extent in " + path.string());
    e = extent;
  }
  Tensor t = Tensor::zeros(shape);
  in.read(reinterpret_cast<char*>(t.mut_data().data()),
          static_cast<std::streamsize>(sizeof(float) * t.numel()));
  if (!in) throw ValueError("read_tensor: truncated payload in " + path.string());
  check_finite(t, "read_tensor(" + path.filename().string() + ")");
  return t;
}

}  // namespace tristream
