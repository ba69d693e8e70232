#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "conflow/rng.hpp"
#include "conflow/tensor_io.hpp"

using namespace conflow;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("round trip is bitwise exact") {
  RngStream rng(91, 0);
  Tensor t = Tensor::zeros({3, 4, 2});
  for (double& v : t.data) v = rng.normal() * 1e17;
  t.data[0] = -0.0;
  t.data[1] = 1e-300;
  std::string path = temp_path("conflow_io_roundtrip.ncf");
  write_tensor(path, t);
  Tensor back = read_tensor(path);
  CHECK(back.shape == t.shape);
  REQUIRE(back.numel() == t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i) {
    // compare representations, not values, to catch -0.0 and denormals
    CHECK(std::memcmp(&back.data[i], &t.data[i], sizeof(double)) == 0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("bad magic is reported with its own code") {
  std::string path = temp_path("conflow_io_magic.ncf");
  write_tensor(path, Tensor({1.0, 2.0}, {2}));
  auto bytes = slurp(path);
  bytes[0] = 'X';
  spit(path, bytes);
  try {
    read_tensor(path);
    FAIL("expected TensorIoError");
  } catch (const TensorIoError& e) {
    CHECK(e.code == TensorIoCode::BadMagic);
  }
  std::filesystem::remove(path);
}

TEST_CASE("truncated header and payload are detected") {
  std::string path = temp_path("conflow_io_trunc.ncf");
  write_tensor(path, Tensor({1.0, 2.0, 3.0}, {3}));
  auto bytes = slurp(path);

  // cut inside the payload
  spit(path, std::vector<char>(bytes.begin(), bytes.end() - 5));
  try {
    read_tensor(path);
    FAIL("expected TensorIoError");
  } catch (const TensorIoError& e) {
    CHECK(e.code == TensorIoCode::Truncated);
  }

  // cut inside the header
  spit(path, std::vector<char>(bytes.begin(), bytes.begin() + 6));
  try {
    read_tensor(path);
    FAIL("expected TensorIoError");
  } catch (const TensorIoError& e) {
    CHECK(e.code == TensorIoCode::Truncated);
  }
  std::filesystem::remove(path);
}

TEST_CASE("unknown dtype is rejected") {
  std::string path = temp_path("conflow_io_dtype.ncf");
  write_tensor(path, Tensor({1.0}, {1}));
  auto bytes = slurp(path);
  // dtype u16 sits after the 4-byte magic and the u16 version
  bytes[6] = 1;
  spit(path, bytes);
  try {
    read_tensor(path);
    FAIL("expected TensorIoError");
  } catch (const TensorIoError& e) {
    CHECK(e.code == TensorIoCode::DtypeMismatch);
  }
  std::filesystem::remove(path);
}

TEST_CASE("missing file raises an io failure") {
  try {
    read_tensor(temp_path("conflow_io_does_not_exist.ncf"));
    FAIL("expected TensorIoError");
  } catch (const TensorIoError& e) {
    CHECK(e.code == TensorIoCode::IoFailure);
  }
}
