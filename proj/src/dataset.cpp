#include "octseg/dataio/dataset.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "octseg/dataio/npy.hpp"

namespace octseg::dataio {

namespace fs = std::filesystem;

void RawSample::validate() const {
    if (image.rank() != 2)
        throw ValidationError(source_id + ": image must be 2-D, got " + image.shape_str());
    if (image.dim(0) != mask.height || image.dim(1) != mask.width)
        throw ValidationError(source_id + ": image " + image.shape_str() + " and mask " +
                              std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                              " dimensions differ");
    for (int64_t i = 0; i < mask.size(); ++i)
        if (mask.labels[static_cast<size_t>(i)] > 7)
            throw ValidationError(source_id + ": mask label " +
                                  std::to_string(mask.labels[static_cast<size_t>(i)]) +
                                  " outside {0..7}");
}

namespace {

// Raw mask storage is commonly float64; NaN means unannotated (-> class 0) and
// anything farther than 1e-6 from an integer is corrupt.
uint8_t coerce_label(double v, const std::string& source_id, int64_t index) {
    if (std::isnan(v)) return 0;
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-6)
        throw ValidationError(source_id + ": non-integral mask value " + std::to_string(v) +
                              " at index " + std::to_string(index));
    if (r < 0.0 || r > 255.0)
        throw ValidationError(source_id + ": mask value " + std::to_string(v) + " out of range");
    return static_cast<uint8_t>(r);
}

RawSample sample_from_arrays(const NpyArray& img, const NpyArray& msk, const std::string& id) {
    if (img.shape.size() != 2)
        throw ValidationError(id + ": image array must be 2-D");
    if (msk.shape.size() != 2)
        throw ValidationError(id + ": mask array must be 2-D");
    RawSample s;
    s.source_id = id;
    s.image = Tensor({img.shape[0], img.shape[1]});
    for (int64_t i = 0; i < s.image.size(); ++i)
        s.image[i] = static_cast<float>(img.data[static_cast<size_t>(i)]);
    s.mask = LabelMask(msk.shape[0], msk.shape[1]);
    for (int64_t i = 0; i < s.mask.size(); ++i)
        s.mask.labels[static_cast<size_t>(i)] = coerce_label(msk.data[static_cast<size_t>(i)], id, i);
    s.validate();
    return s;
}

bool is_container(const fs::path& p) {
    const std::string ext = p.extension().string();
    return ext == ".h5" || ext == ".hdf5" || ext == ".mat";
}

constexpr const char* kImgSuffix = "_img.npy";
constexpr const char* kMaskSuffix = "_mask.npy";

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

// implemented in container.cpp
std::vector<RawSample> load_container(const fs::path& file, const ContainerLayout& layout);

std::vector<RawSample> load_dataset(const fs::path& path, const ContainerLayout& layout) {
    if (!fs::exists(path)) throw NotFoundError("dataset path does not exist: " + path.string());

    std::vector<RawSample> samples;
    if (fs::is_regular_file(path)) {
        if (!is_container(path))
            throw ValidationError("single-file datasets must be .h5/.hdf5/.mat containers: " +
                                  path.string());
        samples = load_container(path, layout);
    } else {
        std::vector<fs::path> entries;
        for (const auto& e : fs::directory_iterator(path)) entries.push_back(e.path());
        std::sort(entries.begin(), entries.end());

        for (const auto& p : entries) {
            if (!fs::is_regular_file(p)) continue;
            if (is_container(p)) {
                auto part = load_container(p, layout);
                samples.insert(samples.end(), std::make_move_iterator(part.begin()),
                               std::make_move_iterator(part.end()));
            } else if (ends_with(p.filename().string(), kImgSuffix)) {
                const std::string fname = p.filename().string();
                const std::string id = fname.substr(0, fname.size() - std::strlen(kImgSuffix));
                const fs::path mask_path = p.parent_path() / (id + kMaskSuffix);
                if (!fs::exists(mask_path))
                    throw NotFoundError(id + ": image file has no matching mask " +
                                        mask_path.string());
                samples.push_back(sample_from_arrays(read_npy(p), read_npy(mask_path), id));
            }
        }
    }

    if (samples.empty()) throw NotFoundError("no samples found under " + path.string());
    std::sort(samples.begin(), samples.end(),
              [](const RawSample& a, const RawSample& b) { return a.source_id < b.source_id; });
    for (size_t i = 1; i < samples.size(); ++i)
        if (samples[i].source_id == samples[i - 1].source_id)
            throw ValidationError("duplicate source_id " + samples[i].source_id);
    return samples;
}

Tensor normalize_image(const Tensor& image) {
    if (image.empty()) throw ArgumentError("cannot normalize an empty image");
    double lo = image[0], hi = image[0];
    for (int64_t i = 1; i < image.size(); ++i) {
        lo = std::min(lo, static_cast<double>(image[i]));
        hi = std::max(hi, static_cast<double>(image[i]));
    }
    Tensor out(image.shape());
    if (hi == lo) return out;  // constant image -> all zeros
    const double scale = 1.0 / (hi - lo);
    for (int64_t i = 0; i < image.size(); ++i)
        out[i] = static_cast<float>((image[i] - lo) * scale);
    return out;
}

Tensor resize_image(const Tensor& image, int target_h, int target_w) {
    if (target_h <= 0 || target_w <= 0) throw ArgumentError("resize target must be positive");
    if (image.rank() != 2) throw ShapeError("resize_image expects rank-2, got " + image.shape_str());
    if (image.dim(0) == target_h && image.dim(1) == target_w) return image;

    cv::Mat src(image.dim(0), image.dim(1), CV_32F, const_cast<float*>(image.data()));
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(target_w, target_h), 0, 0, cv::INTER_LINEAR);
    Tensor out({target_h, target_w});
    std::memcpy(out.data(), dst.ptr<float>(), sizeof(float) * static_cast<size_t>(out.size()));
    return out;
}

LabelMask resize_mask(const LabelMask& mask, int target_h, int target_w) {
    if (target_h <= 0 || target_w <= 0) throw ArgumentError("resize target must be positive");
    if (mask.height == target_h && mask.width == target_w) return mask;

    cv::Mat src(mask.height, mask.width, CV_8U, const_cast<uint8_t*>(mask.labels.data()));
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(target_w, target_h), 0, 0, cv::INTER_NEAREST);
    LabelMask out(target_h, target_w);
    std::memcpy(out.labels.data(), dst.ptr<uint8_t>(), out.labels.size());
    return out;
}

std::pair<Tensor, LabelMask> resize_sample(const RawSample& sample, int target_h, int target_w) {
    return {resize_image(sample.image, target_h, target_w),
            resize_mask(sample.mask, target_h, target_w)};
}

Tensor one_hot_encode(const LabelMask& mask, int num_classes) {
    if (num_classes < 2) throw ArgumentError("num_classes must be at least 2");
    Tensor out({mask.height, mask.width, num_classes});
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            const uint8_t v = mask.at(y, x);
            if (v >= num_classes)
                throw ValidationError("label " + std::to_string(v) + " at (" + std::to_string(y) +
                                      ", " + std::to_string(x) + ") outside [0, " +
                                      std::to_string(num_classes) + ")");
            out.at(y, x, v) = 1.0f;
        }
    return out;
}

LabelMask one_hot_decode(const Tensor& onehot) {
    if (onehot.rank() != 3) throw ShapeError("one_hot_decode expects rank-3, got " + onehot.shape_str());
    const int H = onehot.dim(0), W = onehot.dim(1), C = onehot.dim(2);
    LabelMask mask(H, W);
    const float* p = onehot.data();
    for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i) {
        int best = 0;
        for (int c = 1; c < C; ++c)
            if (p[i * C + c] > p[i * C + best]) best = c;
        mask.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(best);
    }
    return mask;
}

std::vector<PreprocessedSample> preprocess(const std::vector<RawSample>& raw, int target_h,
                                           int target_w, int num_classes) {
    std::vector<PreprocessedSample> out;
    out.reserve(raw.size());
    for (const auto& s : raw) {
        s.validate();
        PreprocessedSample p;
        p.source_id = s.source_id;
        Tensor norm = normalize_image(s.image);
        Tensor resized = resize_image(norm, target_h, target_w);
        // bilinear output of [0,1] inputs stays in [0,1]; clamp defensively
        // against interpolation rounding
        Tensor img({target_h, target_w, 1});
        for (int64_t i = 0; i < resized.size(); ++i)
            img[i] = std::clamp(resized[i], 0.0f, 1.0f);
        p.image = std::move(img);
        p.onehot = one_hot_encode(resize_mask(s.mask, target_h, target_w), num_classes);
        out.push_back(std::move(p));
    }
    return out;
}

DatasetSplit split_dataset(const std::vector<PreprocessedSample>& samples, double ratio,
                           uint64_t seed) {
    if (samples.empty()) throw ArgumentError("cannot split an empty dataset");
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw ArgumentError("split ratio must be in (0, 1], got " + std::to_string(ratio));

    std::vector<size_t> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    for (size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[rng.next_below(i + 1)]);

    const auto n_train =
        static_cast<size_t>(std::llround(ratio * static_cast<double>(samples.size())));
    DatasetSplit split;
    split.seed = seed;
    split.ratio = ratio;
    for (size_t i = 0; i < order.size(); ++i) {
        (i < n_train ? split.train : split.validation).push_back(samples[order[i]]);
    }
    return split;
}

uint64_t dataset_hash(const std::vector<PreprocessedSample>& samples) {
    uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&h](const void* data, size_t n) {
        const auto* p = static_cast<const uint8_t*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001B3ULL;
        }
    };
    for (const auto& s : samples) {
        mix(s.source_id.data(), s.source_id.size());
        mix(s.image.data(), sizeof(float) * static_cast<size_t>(s.image.size()));
        mix(s.onehot.data(), sizeof(float) * static_cast<size_t>(s.onehot.size()));
    }
    return h;
}

}  // namespace octseg::dataio
