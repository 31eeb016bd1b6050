#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace p2img {

// Little-endian float64 NPY (format version 1.0), for dumping tensors that
// external tooling cross-checks.
void write_npy(const std::string& path, const std::vector<double>& data,
               const std::vector<size_t>& shape);

struct NpyArray {
    std::vector<double> data;
    std::vector<size_t> shape;
};

NpyArray read_npy(const std::string& path);

} // namespace p2img
