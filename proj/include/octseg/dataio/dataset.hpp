#ifndef OCTSEG_DATAIO_DATASET_HPP
#define OCTSEG_DATAIO_DATASET_HPP

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "octseg/common.hpp"
#include "octseg/tensor.hpp"

namespace octseg::dataio {

// One B-scan straight from storage: raw intensities plus the 8-label layer
// mask at the same resolution.
struct RawSample {
    Tensor image;  // rank-2 (H, W), raw intensity values
    LabelMask mask;
    std::string source_id;

    void validate() const;  // shape agreement, labels < 8
};

struct PreprocessedSample {
    Tensor image;   // rank-3 (H, W, 1), values in [0, 1]
    Tensor onehot;  // rank-3 (H, W, C), exactly one 1 per pixel
    std::string source_id;
};

struct DatasetSplit {
    std::vector<PreprocessedSample> train;
    std::vector<PreprocessedSample> validation;
    uint64_t seed = 0;
    double ratio = 0.8;
};

// Field names / axis conventions for matrix-container files; see
// DATA_FORMAT.md.
struct ContainerLayout {
    std::string image_field = "images";
    std::string mask_field = "manualLayers";
    bool sample_axis_trailing = false;  // false: (N,H,W); true: (H,W,N)
    bool transpose_hw = false;          // swap the two in-plane axes after slicing
};

// Scans `path` (a directory, or a single container file) and returns every
// image/mask pair found, ordered by source_id. Accepts `<id>_img.npy` +
// `<id>_mask.npy` pairs and HDF5 containers (.h5/.hdf5/.mat with the
// configured fields).
std::vector<RawSample> load_dataset(const std::filesystem::path& path,
                                    const ContainerLayout& layout = {});

// Per-image min-max scaling to [0,1]; constant images map to all zeros.
Tensor normalize_image(const Tensor& image);

// Bilinear for intensities, nearest-neighbor for labels.
Tensor resize_image(const Tensor& image, int target_h, int target_w);
LabelMask resize_mask(const LabelMask& mask, int target_h, int target_w);
std::pair<Tensor, LabelMask> resize_sample(const RawSample& sample, int target_h, int target_w);

Tensor one_hot_encode(const LabelMask& mask, int num_classes);
LabelMask one_hot_decode(const Tensor& onehot);  // argmax inverse

// normalize -> resize -> one-hot for every sample.
std::vector<PreprocessedSample> preprocess(const std::vector<RawSample>& raw, int target_h,
                                           int target_w, int num_classes);

// Seeded Fisher-Yates shuffle, then |train| = round(ratio * N).
DatasetSplit split_dataset(const std::vector<PreprocessedSample>& samples, double ratio,
                           uint64_t seed);

// Fingerprint over image bytes, mask bytes and ids, for manifests.
uint64_t dataset_hash(const std::vector<PreprocessedSample>& samples);

}  // namespace octseg::dataio

#endif
