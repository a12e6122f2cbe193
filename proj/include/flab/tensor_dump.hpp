#pragma once

#include <string>
#include <vector>

#include "flab/mat.hpp"

namespace flab {

// On-disk tensor dump: magic "FDMP1", uint32 ndim, uint32 dims[ndim],
// then row-major little-endian float32 payload. 2-D dumps are a matrix;
// 3-D dumps are a batch of matrices (dims = B, M, d).
struct TensorDump {
    std::vector<uint32_t> dims;
    std::vector<float> data;

    MatF as_matrix() const;                // requires ndim == 2
    std::vector<MatF> as_batch() const;    // requires ndim == 3
};

void write_tensor_dump(const std::string& path, const MatF& m);
void write_tensor_dump(const std::string& path, const std::vector<MatF>& batch);
TensorDump read_tensor_dump(const std::string& path);

} // namespace flab
