#include "conflow/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace conflow {

namespace {

constexpr char kMagic[4] = {'N', 'C', 'F', '1'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kDtypeF64 = 0;

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw TensorIoError(TensorIoCode::Truncated, "tensor file truncated");
  return v;
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TensorIoError(TensorIoCode::IoFailure, "cannot open " + path);
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, kDtypeF64);
  put(out, static_cast<std::uint32_t>(t.shape.size()));
  for (std::size_t d : t.shape) put(out, static_cast<std::uint32_t>(d));
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!out) throw TensorIoError(TensorIoCode::IoFailure, "write failed: " + path);
}

Tensor read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorIoError(TensorIoCode::IoFailure, "cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw TensorIoError(TensorIoCode::BadMagic, "bad magic in " + path);
  std::uint16_t version = take<std::uint16_t>(in);
  if (version != kVersion)
    throw TensorIoError(TensorIoCode::BadMagic, "unsupported version in " + path);
  std::uint16_t dtype = take<std::uint16_t>(in);
  if (dtype != kDtypeF64)
    throw TensorIoError(TensorIoCode::DtypeMismatch, "unsupported dtype in " + path);
  auto ndim = take<std::uint32_t>(in);
  Tensor t;
  t.shape.resize(ndim);
  std::size_t numel = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    t.shape[i] = take<std::uint32_t>(in);
    numel *= t.shape[i];
  }
  t.data.resize(numel);
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(numel * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != numel * sizeof(double))
    throw TensorIoError(TensorIoCode::Truncated, "payload truncated in " + path);
  return t;
}

}  // namespace conflow
