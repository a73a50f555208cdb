#ifndef OCTSEG_DATAIO_CACHE_HPP
#define OCTSEG_DATAIO_CACHE_HPP

#include <filesystem>

#include "octseg/dataio/dataset.hpp"

namespace octseg::dataio {

// Preprocessed-split archive. Writing the same split twice produces
// byte-identical files: the JSON header has sorted keys and the payload is
// raw little-endian sample data in split order. Masks are stored as label
// planes (the argmax of the one-hot grid, lossless by the one-hot invariant)
// and re-encoded on load.
void write_cache(const std::filesystem::path& path, const DatasetSplit& split, int num_classes);
DatasetSplit read_cache(const std::filesystem::path& path);

// FNV-1a over the whole file, for manifests and byte-identity checks.
uint64_t file_hash(const std::filesystem::path& path);

}  // namespace octseg::dataio

#endif
