#include "svt/params.hpp"

#include <fstream>
#include <iterator>

#include "binary_io.hpp"

namespace svt {
namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::kOpen, "cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrorKind::kOpen, "cannot create '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(IoErrorKind::kWrite, "write failed for '" + path + "'");
}

}  // namespace detail

namespace {
constexpr char kMagic[4] = {'S', 'V', 'T', 'C'};
}

void write_checkpoint(const std::string& path, const ParamStore<float>& params) {
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, value] : params) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(value.rank()));
    for (std::size_t e : value.shape()) w.u64(e);
    for (float v : value.data()) w.f32(v);
  }
  detail::write_file(path, w.buffer());
}

ParamStore<float> read_checkpoint(const std::string& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw IoError(IoErrorKind::kBadMagic, "'" + path + "' is not a checkpoint");
  if (const auto version = r.u32(); version != kCheckpointVersion) {
    throw IoError(IoErrorKind::kBadVersion, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  ParamStore<float> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.u32(), '\0');
    r.bytes(name.data(), name.size());
    Shape shape(r.u32());
    for (auto& e : shape) e = r.u64();
    const std::size_t n = shape_size(shape);
    if (!r.has(n * 4)) throw IoError(IoErrorKind::kTruncated, "checkpoint entry '" + name + "' is truncated");
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32();
    out.set(name, NdArray<float>(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) throw IoError(IoErrorKind::kSizeMismatch, "trailing bytes in checkpoint '" + path + "'");
  return out;
}

}  // namespace svt
