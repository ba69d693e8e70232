#pragma once

#include <stdexcept>
#include <string>

#include "conflow/tensor.hpp"

namespace conflow {

enum class TensorIoCode { BadMagic, Truncated, DtypeMismatch, IoFailure };

struct TensorIoError : std::runtime_error {
  TensorIoCode code;
  TensorIoError(TensorIoCode c, const std::string& msg)
      : std::runtime_error(msg), code(c) {}
};

// Binary tensor container: magic "NCF1", version u16, dtype u16 (0 = f64),
// ndim u32, dims u32 each, row-major little-endian f64 payload.
// read(write(t)) round-trips bitwise.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

}  // namespace conflow
