#include "octseg/dataio/cache.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

namespace octseg::dataio {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "OCTSEGDATA1\n";

void write_sample(std::ofstream& out, const PreprocessedSample& s) {
    out.write(reinterpret_cast<const char*>(s.image.data()),
              static_cast<std::streamsize>(sizeof(float) * s.image.size()));
    LabelMask labels = one_hot_decode(s.onehot);
    out.write(reinterpret_cast<const char*>(labels.labels.data()),
              static_cast<std::streamsize>(labels.labels.size()));
}

}  // namespace

void write_cache(const std::filesystem::path& path, const DatasetSplit& split, int num_classes) {
    if (split.train.empty() && split.validation.empty())
        throw ArgumentError("refusing to cache an empty split");
    int height = 0, width = 0;
    json samples = json::array();
    auto describe = [&](const std::vector<PreprocessedSample>& part, const char* name) {
        for (const auto& s : part) {
            if (s.image.rank() != 3 || s.image.dim(2) != 1)
                throw ShapeError(s.source_id + ": cache expects (H, W, 1) images");
            if (height == 0) {
                height = s.image.dim(0);
                width = s.image.dim(1);
            } else if (s.image.dim(0) != height || s.image.dim(1) != width) {
                throw ShapeError(s.source_id + ": mixed sample sizes in split");
            }
            if (s.onehot.rank() != 3 || s.onehot.dim(0) != height || s.onehot.dim(1) != width ||
                s.onehot.dim(2) != num_classes)
                throw ShapeError(s.source_id + ": one-hot grid does not match (H, W, classes)");
            samples.push_back({{"id", s.source_id}, {"split", name}});
        }
    };
    describe(split.train, "train");
    describe(split.validation, "validation");

    json header;
    header["height"] = height;
    header["width"] = width;
    header["num_classes"] = num_classes;
    header["seed"] = split.seed;
    header["ratio"] = split.ratio;
    header["samples"] = samples;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open cache for writing: " + path.string());
    out.write(kMagic, sizeof(kMagic) - 1);
    const uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& s : split.train) write_sample(out, s);
    for (const auto& s : split.validation) write_sample(out, s);
    if (!out) throw IoError("failed writing cache: " + path.string());
}

DatasetSplit read_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open cache: " + path.string());
    char magic[sizeof(kMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw IoError("not an octseg dataset cache: " + path.string());
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw IoError("truncated cache header: " + path.string());

    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw IoError(std::string("corrupt cache header: ") + e.what());
    }
    const int height = header.at("height").get<int>();
    const int width = header.at("width").get<int>();
    const int num_classes = header.at("num_classes").get<int>();

    DatasetSplit split;
    split.seed = header.at("seed").get<uint64_t>();
    split.ratio = header.at("ratio").get<double>();

    const int64_t plane = static_cast<int64_t>(height) * width;
    for (const auto& entry : header.at("samples")) {
        PreprocessedSample s;
        s.source_id = entry.at("id").get<std::string>();
        s.image = Tensor({height, width, 1});
        in.read(reinterpret_cast<char*>(s.image.data()),
                static_cast<std::streamsize>(sizeof(float) * plane));
        LabelMask labels(height, width);
        in.read(reinterpret_cast<char*>(labels.labels.data()),
                static_cast<std::streamsize>(plane));
        if (!in) throw IoError("truncated cache payload: " + path.string());
        s.onehot = one_hot_encode(labels, num_classes);
        const std::string which = entry.at("split").get<std::string>();
        if (which == "train") split.train.push_back(std::move(s));
        else if (which == "validation") split.validation.push_back(std::move(s));
        else throw IoError("cache names unknown split '" + which + "'");
    }
    return split;
}

uint64_t file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    uint64_t h = 0xCBF29CE484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<uint8_t>(buf[i]);
            h *= 0x100000001B3ULL;
        }
    }
    return h;
}

}  // namespace octseg::dataio
