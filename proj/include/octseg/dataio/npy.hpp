#ifndef OCTSEG_DATAIO_NPY_HPP
#define OCTSEG_DATAIO_NPY_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace octseg::dataio {

// Minimal NPY (format version 1.0) support: C-order arrays of the handful of
// dtypes the datasets actually use. Values are widened to double on read;
// callers coerce/validate from there.
struct NpyArray {
    std::vector<int> shape;
    std::string dtype;  // normalized descr, e.g. "<f8", "|u1"
    std::vector<double> data;

    int64_t size() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
};

NpyArray read_npy(const std::filesystem::path& path);

void write_npy_f4(const std::filesystem::path& path, const std::vector<int>& shape,
                  const float* data);
void write_npy_f8(const std::filesystem::path& path, const std::vector<int>& shape,
                  const double* data);
void write_npy_u1(const std::filesystem::path& path, const std::vector<int>& shape,
                  const uint8_t* data);

}  // namespace octseg::dataio

#endif
