#include "flab/tensor_dump.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "flab/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor dumps are little-endian; big-endian hosts are unsupported");

namespace flab {

namespace {

constexpr char kMagic[5] = {'F', 'D', 'M', 'P', '1'};

void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

void write_dump(const std::string& path, const std::vector<uint32_t>& dims,
                const float* data, size_t count) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kMagic, sizeof kMagic);
    write_u32(os, static_cast<uint32_t>(dims.size()));
    for (uint32_t d : dims) write_u32(os, d);
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
    if (!os) throw IoError("write failed: " + path);
}

} // namespace

void write_tensor_dump(const std::string& path, const MatF& m) {
    write_dump(path, {static_cast<uint32_t>(m.rows), static_cast<uint32_t>(m.cols)},
               m.a.data(), m.a.size());
}

void write_tensor_dump(const std::string& path, const std::vector<MatF>& batch) {
    if (batch.empty()) throw IoError("tensor dump: empty batch");
    const auto& z0 = batch[0];
    std::vector<float> flat;
    flat.reserve(batch.size() * z0.a.size());
    for (const auto& z : batch) {
        if (!z.same_shape(z0)) throw ShapeMismatch("tensor dump: inconsistent batch shapes");
        flat.insert(flat.end(), z.a.begin(), z.a.end());
    }
    write_dump(path,
               {static_cast<uint32_t>(batch.size()), static_cast<uint32_t>(z0.rows),
                static_cast<uint32_t>(z0.cols)},
               flat.data(), flat.size());
}

TensorDump read_tensor_dump(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[5];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw SchemaError("not a FDMP1 tensor dump: " + path);
    const uint32_t ndim = read_u32(is);
    if (ndim < 1 || ndim > 3) throw SchemaError("tensor dump: unsupported ndim");
    TensorDump out;
    size_t total = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
        out.dims.push_back(read_u32(is));
        total *= out.dims.back();
    }
    if (!is || total == 0 || total > (1u << 30)) throw SchemaError("tensor dump: bad shape");
    out.data.resize(total);
    is.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(total * 4));
    if (!is) throw SchemaError("tensor dump: truncated payload");
    return out;
}

MatF TensorDump::as_matrix() const {
    if (dims.size() != 2) throw SchemaError("tensor dump: expected a 2-D matrix");
    MatF m(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
    m.a = data;
    return m;
}

std::vector<MatF> TensorDump::as_batch() const {
    if (dims.size() != 3) throw SchemaError("tensor dump: expected a 3-D batch");
    std::vector<MatF> out;
    const size_t per = static_cast<size_t>(dims[1]) * dims[2];
    for (uint32_t b = 0; b < dims[0]; ++b) {
        MatF z(static_cast<int>(dims[1]), static_cast<int>(dims[2]));
        std::copy(data.begin() + b * per, data.begin() + (b + 1) * per, z.a.begin());
        out.push_back(std::move(z));
    }
    return out;
}

} // namespace flab
