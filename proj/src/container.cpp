#include <hdf5.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "octseg/dataio/dataset.hpp"

// HDF5 matrix-container ingest (.h5/.hdf5, and .mat saved as v7.3). Both the
// image and mask datasets are read as double and sliced along the sample
// axis; see DATA_FORMAT.md for the accepted layouts.

namespace octseg::dataio {

namespace {

struct H5File {
    hid_t id = -1;
    explicit H5File(const std::string& path) {
        // quiet the library's default stderr spew; we throw instead
        H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
        if (H5Fis_hdf5(path.c_str()) <= 0)
            throw ValidationError("not an HDF5 container: " + path);
        id = H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT);
        if (id < 0) throw IoError("cannot open container: " + path);
    }
    ~H5File() {
        if (id >= 0) H5Fclose(id);
    }
};

struct Array3 {
    std::vector<int> shape;  // as stored
    std::vector<double> data;
};

Array3 read_field(hid_t file, const std::string& field, const std::string& path) {
    if (H5Lexists(file, field.c_str(), H5P_DEFAULT) <= 0)
        throw LookupError("container " + path + " has no dataset '" + field + "'");
    const hid_t ds = H5Dopen2(file, field.c_str(), H5P_DEFAULT);
    if (ds < 0) throw IoError("cannot open dataset '" + field + "' in " + path);
    const hid_t space = H5Dget_space(ds);
    const int rank = H5Sget_simple_extent_ndims(space);
    Array3 arr;
    if (rank != 3 && rank != 2) {
        H5Sclose(space);
        H5Dclose(ds);
        throw ValidationError("dataset '" + field + "' in " + path + " must be 2-D or 3-D");
    }
    hsize_t dims[3] = {1, 1, 1};
    H5Sget_simple_extent_dims(space, dims, nullptr);
    H5Sclose(space);

    int64_t total = 1;
    for (int i = 0; i < rank; ++i) {
        arr.shape.push_back(static_cast<int>(dims[i]));
        total *= static_cast<int64_t>(dims[i]);
    }
    arr.data.resize(static_cast<size_t>(total));
    const herr_t rc =
        H5Dread(ds, H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, arr.data.data());
    H5Dclose(ds);
    if (rc < 0) throw IoError("failed reading dataset '" + field + "' from " + path);
    if (rank == 2) arr.shape.insert(arr.shape.begin(), 1);  // single-sample container
    return arr;
}

// Slice sample n out of the stored block as a row-major (H, W) plane.
std::vector<double> slice(const Array3& a, int n, bool trailing, bool transpose, int& h, int& w) {
    const int d0 = a.shape[0], d1 = a.shape[1], d2 = a.shape[2];
    std::vector<double> plane;
    if (!trailing) {
        h = d1;
        w = d2;
        plane.assign(a.data.begin() + static_cast<int64_t>(n) * h * w,
                     a.data.begin() + static_cast<int64_t>(n + 1) * h * w);
    } else {
        // (H, W, N) stored row-major: element (y, x, n)
        h = d0;
        w = d1;
        plane.resize(static_cast<size_t>(h) * w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                plane[static_cast<size_t>(y) * w + x] =
                    a.data[(static_cast<int64_t>(y) * d1 + x) * d2 + n];
    }
    if (transpose) {
        std::vector<double> t(plane.size());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                t[static_cast<size_t>(x) * h + y] = plane[static_cast<size_t>(y) * w + x];
        std::swap(h, w);
        plane = std::move(t);
    }
    return plane;
}

uint8_t coerce(double v, const std::string& id) {
    if (std::isnan(v)) return 0;  // unannotated -> background
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-6)
        throw ValidationError(id + ": non-integral mask value " + std::to_string(v));
    if (r < 0.0 || r > 255.0) throw ValidationError(id + ": mask value out of range");
    return static_cast<uint8_t>(r);
}

}  // namespace

std::vector<RawSample> load_container(const std::filesystem::path& file,
                                      const ContainerLayout& layout) {
    const std::string path = file.string();
    H5File h5(path);
    Array3 images = read_field(h5.id, layout.image_field, path);
    Array3 masks = read_field(h5.id, layout.mask_field, path);
    if (images.shape != masks.shape)
        throw ValidationError("container " + path + ": image block " +
                              std::to_string(images.shape[0]) + "x" + std::to_string(images.shape[1]) +
                              "x" + std::to_string(images.shape[2]) + " and mask block " +
                              std::to_string(masks.shape[0]) + "x" + std::to_string(masks.shape[1]) +
                              "x" + std::to_string(masks.shape[2]) + " differ");

    const int n_samples = layout.sample_axis_trailing ? images.shape[2] : images.shape[0];
    const std::string stem = file.stem().string();

    std::vector<RawSample> out;
    out.reserve(static_cast<size_t>(n_samples));
    char suffix[16];
    for (int n = 0; n < n_samples; ++n) {
        std::snprintf(suffix, sizeof(suffix), "_%04d", n);
        RawSample s;
        s.source_id = stem + suffix;
        int h = 0, w = 0;
        std::vector<double> img =
            slice(images, n, layout.sample_axis_trailing, layout.transpose_hw, h, w);
        s.image = Tensor({h, w});
        for (int64_t i = 0; i < s.image.size(); ++i)
            s.image[i] = static_cast<float>(img[static_cast<size_t>(i)]);
        std::vector<double> msk =
            slice(masks, n, layout.sample_axis_trailing, layout.transpose_hw, h, w);
        s.mask = LabelMask(h, w);
        for (int64_t i = 0; i < s.mask.size(); ++i)
            s.mask.labels[static_cast<size_t>(i)] = coerce(msk[static_cast<size_t>(i)], s.source_id);
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace octseg::dataio
