#include "octseg/segnet/model.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

namespace octseg::segnet {

using nlohmann::json;

DecoderMode decoder_mode_from_string(const std::string& s) {
    if (s == "transposed_conv_skip") return DecoderMode::TransposedConvSkip;
    if (s == "index_unpool") return DecoderMode::IndexUnpool;
    throw ConfigError("unknown decoder_mode '" + s +
                      "' (expected transposed_conv_skip or index_unpool)");
}

std::string to_string(DecoderMode m) {
    return m == DecoderMode::TransposedConvSkip ? "transposed_conv_skip" : "index_unpool";
}

void ArchitectureConfig::validate() const {
    if (encoder_filters.size() != 5)
        throw ConfigError("encoder_filters must list exactly 5 stages, got " +
                          std::to_string(encoder_filters.size()));
    for (int f : encoder_filters) {
        if (f <= 0) throw ConfigError("encoder filter counts must be positive");
        if (f > 512) throw ConfigError("encoder filter counts are capped at 512, got " + std::to_string(f));
    }
    if (height <= 0 || width <= 0 || channels <= 0) throw ConfigError("input shape must be positive");
    if (height % 32 != 0 || width % 32 != 0)
        throw ConfigError("input height/width must be divisible by 32 (five 2x poolings), got " +
                          std::to_string(height) + "x" + std::to_string(width));
    if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
    if (kernel_size != 3 && kernel_size != 5)
        throw ConfigError("kernel_size must be 3 or 5, got " + std::to_string(kernel_size));
}

void to_json(json& j, const ArchitectureConfig& c) {
    j = json{{"height", c.height},
             {"width", c.width},
             {"channels", c.channels},
             {"num_classes", c.num_classes},
             {"encoder_filters", c.encoder_filters},
             {"decoder_mode", to_string(c.decoder_mode)},
             {"kernel_size", c.kernel_size},
             {"seed", c.seed}};
}

void from_json(const json& j, ArchitectureConfig& c) {
    ArchitectureConfig d;
    c.height = j.value("height", d.height);
    c.width = j.value("width", d.width);
    c.channels = j.value("channels", d.channels);
    c.num_classes = j.value("num_classes", d.num_classes);
    c.encoder_filters = j.value("encoder_filters", d.encoder_filters);
    c.decoder_mode = decoder_mode_from_string(j.value("decoder_mode", to_string(d.decoder_mode)));
    c.kernel_size = j.value("kernel_size", d.kernel_size);
    c.seed = j.value("seed", d.seed);
}

namespace {

bool structurally_equal(const ArchitectureConfig& a, const ArchitectureConfig& b) {
    return a.height == b.height && a.width == b.width && a.channels == b.channels &&
           a.num_classes == b.num_classes && a.encoder_filters == b.encoder_filters &&
           a.decoder_mode == b.decoder_mode && a.kernel_size == b.kernel_size;
}

constexpr char kCheckpointMagic[] = "OCTSEGCKPT1\n";

}  // namespace

SegmentationModel SegmentationModel::build(const ArchitectureConfig& config) {
    config.validate();
    SegmentationModel m;
    m.config_ = config;
    nn::Graph& g = m.graph_;

    const auto& f = config.encoder_filters;
    const int k = config.kernel_size;

    int cur = g.add_input("input", config.channels);
    int conv_i = 0;
    std::vector<int> skips(5), pools(5);
    for (int s = 0; s < 5; ++s) {
        cur = g.add_conv("conv2d_" + std::to_string(conv_i++), cur, f[static_cast<size_t>(s)], k, true);
        cur = g.add_conv("conv2d_" + std::to_string(conv_i++), cur, f[static_cast<size_t>(s)], k, true);
        skips[static_cast<size_t>(s)] = cur;
        cur = g.add_maxpool("max_pooling2d_" + std::to_string(s), cur);
        pools[static_cast<size_t>(s)] = cur;
    }
    m.pool_nodes_ = pools;

    // Decoder stage d climbs back to the resolution of encoder stage 4-d.
    // The two refinement convs reduce channels so that the next stage's
    // unpooling matches the corresponding encoder pooling exactly.
    for (int d = 0; d < 5; ++d) {
        const int src = 4 - d;
        int up;
        if (config.decoder_mode == DecoderMode::TransposedConvSkip) {
            up = g.add_tconv("conv2d_transpose_" + std::to_string(d), cur, g.node(cur).out_ch);
        } else {
            up = g.add_maxunpool("max_unpooling2d_" + std::to_string(d), cur,
                                 pools[static_cast<size_t>(src)]);
        }
        const int cat = g.add_concat("concatenate_" + std::to_string(d), up, skips[static_cast<size_t>(src)]);
        const int out_ch = d < 4 ? f[static_cast<size_t>(3 - d)] : f[0];
        cur = g.add_conv("conv2d_" + std::to_string(conv_i++), cat, out_ch, k, true);
        cur = g.add_conv("conv2d_" + std::to_string(conv_i++), cur, out_ch, k, true);
    }

    m.logits_node_ = g.add_conv("conv2d_" + std::to_string(conv_i++), cur, config.num_classes, 1, false);
    g.add_softmax("softmax", m.logits_node_);

    g.init_params(config.seed);
    for (int i = 0; i < g.size(); ++i) m.layer_names_.push_back(g.node(i).name);
    return m;
}

bool SegmentationModel::has_layer(const std::string& name) const { return graph_.node_id(name) >= 0; }

void SegmentationModel::check_batch(const Tensor& batch) const {
    if (batch.rank() != 4 || batch.dim(1) != config_.height || batch.dim(2) != config_.width ||
        batch.dim(3) != config_.channels) {
        throw ShapeError("expected batch of shape (B, " + std::to_string(config_.height) + ", " +
                         std::to_string(config_.width) + ", " + std::to_string(config_.channels) +
                         "), got " + batch.shape_str());
    }
}

ForwardTrace SegmentationModel::forward(const Tensor& batch, const std::vector<std::string>& capture) const {
    check_batch(batch);
    for (const auto& name : capture)
        if (!has_layer(name)) throw LookupError("unknown layer '" + name + "' requested for capture");

    nn::Workspace ws;
    ForwardTrace trace;
    trace.output = graph_.forward(batch, ws);
    for (const auto& name : capture)
        trace.features[name] = ws.states[static_cast<size_t>(graph_.node_id(name))].out;
    if (config_.decoder_mode == DecoderMode::IndexUnpool) {
        for (int p : pool_nodes_) {
            trace.pooling_indices[graph_.node(p).name] = ws.states[static_cast<size_t>(p)].indices;
        }
    }
    return trace;
}

LabelMask argmax_mask(const Tensor& probs) {
    const int r = probs.rank();
    if (r != 3 && r != 4) throw ShapeError("argmax expects (H,W,C) or (1,H,W,C), got " + probs.shape_str());
    const int H = probs.dim(r - 3), W = probs.dim(r - 2), C = probs.dim(r - 1);
    if (r == 4 && probs.dim(0) != 1) throw ShapeError("argmax expects a single image");
    LabelMask mask(H, W);
    const float* p = probs.data();
    for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i) {
        const float* row = p + i * C;
        int best = 0;
        for (int c = 1; c < C; ++c)
            if (row[c] > row[best]) best = c;  // strict >, ties keep the lowest index
        mask.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(best);
    }
    return mask;
}

LabelMask SegmentationModel::predict_mask(const Tensor& image) const {
    Tensor batch;
    if (image.rank() == 3) {
        batch = Tensor({1, image.dim(0), image.dim(1), image.dim(2)});
        std::memcpy(batch.data(), image.data(), sizeof(float) * static_cast<size_t>(image.size()));
    } else {
        batch = image;
    }
    ForwardTrace trace = forward(batch);
    return argmax_mask(trace.output);
}

SegmentationModel::ClassGradient SegmentationModel::class_gradient(const Tensor& image,
                                                                   const std::string& layer,
                                                                   int class_id, bool use_logits) const {
    const int target = graph_.node_id(layer);
    if (target < 0) throw LookupError("unknown layer '" + layer + "'");
    if (class_id < 0 || class_id >= config_.num_classes)
        throw ArgumentError("class_id " + std::to_string(class_id) + " outside [0, " +
                            std::to_string(config_.num_classes) + ")");

    Tensor batch;
    if (image.rank() == 3) {
        batch = Tensor({1, image.dim(0), image.dim(1), image.dim(2)});
        std::memcpy(batch.data(), image.data(), sizeof(float) * static_cast<size_t>(image.size()));
    } else {
        batch = image;
    }
    check_batch(batch);
    if (batch.dim(0) != 1) throw ArgumentError("class_gradient expects a single image");

    nn::Workspace ws;
    graph_.forward(batch, ws);

    const int from = use_logits ? logits_node_ : graph_.output_id();
    // Y^c = sum over pixels of channel class_id, so dY^c/d(out) is an
    // indicator on that channel.
    Tensor seed(ws.states[static_cast<size_t>(from)].out.shape());
    const int C = seed.dim(3);
    float* s = seed.data();
    const int64_t pixels = seed.size() / C;
    for (int64_t p = 0; p < pixels; ++p) s[p * C + class_id] = 1.0f;

    graph_.backward(seed, from, ws, target, nullptr);
    ClassGradient cg;
    cg.features = ws.states[static_cast<size_t>(target)].out;
    cg.gradient = ws.states[static_cast<size_t>(target)].grad;
    return cg;
}

std::vector<LayerInfo> SegmentationModel::layer_registry() const {
    std::vector<LayerInfo> infos;
    std::vector<std::pair<int, int>> hw(static_cast<size_t>(graph_.size()));
    for (int i = 0; i < graph_.size(); ++i) {
        const nn::Node& nd = graph_.node(i);
        std::pair<int, int> cur{config_.height, config_.width};
        switch (nd.op) {
            case nn::Op::Input: break;
            case nn::Op::Conv:
            case nn::Op::Softmax:
            case nn::Op::Concat: cur = hw[static_cast<size_t>(nd.in0)]; break;
            case nn::Op::MaxPool: {
                auto in = hw[static_cast<size_t>(nd.in0)];
                cur = {in.first / 2, in.second / 2};
                break;
            }
            case nn::Op::TConv:
            case nn::Op::MaxUnpool: {
                auto in = hw[static_cast<size_t>(nd.in0)];
                cur = {in.first * 2, in.second * 2};
                break;
            }
        }
        hw[static_cast<size_t>(i)] = cur;
        LayerInfo info;
        info.name = nd.name;
        info.type = nn::op_name(nd.op);
        info.output_shape = {cur.first, cur.second, nd.out_ch};
        info.params = nd.has_params() ? nd.w.size() + nd.b.size() : 0;
        infos.push_back(std::move(info));
    }
    return infos;
}

json SegmentationModel::summary() const {
    json layers = json::array();
    for (const auto& info : layer_registry()) {
        layers.push_back({{"name", info.name},
                          {"type", info.type},
                          {"output_shape", info.output_shape},
                          {"parameters", info.params}});
    }
    json j;
    j["architecture"] = config_;
    j["total_parameters"] = parameter_count();
    j["layers"] = layers;
    return j;
}

void SegmentationModel::save_checkpoint(const std::filesystem::path& path) const {
    json tensors = json::array();
    int64_t offset = 0;
    for (int id : graph_.param_node_ids()) {
        const nn::Node& nd = graph_.node(id);
        tensors.push_back({{"name", nd.name + "/weight"}, {"shape", nd.w.shape()}, {"offset", offset}});
        offset += nd.w.size() * 4;
        tensors.push_back({{"name", nd.name + "/bias"}, {"shape", nd.b.shape()}, {"offset", offset}});
        offset += nd.b.size() * 4;
    }
    json header;
    header["config"] = config_;
    header["tensors"] = tensors;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    const uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (int id : graph_.param_node_ids()) {
        const nn::Node& nd = graph_.node(id);
        out.write(reinterpret_cast<const char*>(nd.w.data()), nd.w.size() * 4);
        out.write(reinterpret_cast<const char*>(nd.b.data()), nd.b.size() * 4);
    }
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

SegmentationModel SegmentationModel::load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
    char magic[sizeof(kCheckpointMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw CheckpointError("not an octseg checkpoint: " + path.string());
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw CheckpointError("truncated checkpoint header: " + path.string());

    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
    }
    ArchitectureConfig config = header.at("config").get<ArchitectureConfig>();
    SegmentationModel m = build(config);

    const int64_t payload_start = static_cast<int64_t>(sizeof(kCheckpointMagic) - 1 + sizeof(hlen) + hlen);
    std::map<std::string, std::pair<std::vector<int>, int64_t>> table;
    for (const auto& t : header.at("tensors")) {
        table[t.at("name").get<std::string>()] = {t.at("shape").get<std::vector<int>>(),
                                                  t.at("offset").get<int64_t>()};
    }
    for (int id : m.graph_.param_node_ids()) {
        nn::Node& nd = m.graph_.node(id);
        for (const auto& [suffix, tensor] :
             std::initializer_list<std::pair<const char*, Tensor*>>{{"/weight", &nd.w}, {"/bias", &nd.b}}) {
            auto it = table.find(nd.name + suffix);
            if (it == table.end())
                throw CheckpointError("checkpoint missing tensor " + nd.name + suffix);
            if (it->second.first != tensor->shape())
                throw CheckpointError("checkpoint tensor " + nd.name + suffix + " has wrong shape");
            in.seekg(payload_start + it->second.second);
            in.read(reinterpret_cast<char*>(tensor->data()), tensor->size() * 4);
            if (!in) throw CheckpointError("truncated checkpoint payload: " + path.string());
        }
    }
    return m;
}

SegmentationModel SegmentationModel::load_checkpoint(const std::filesystem::path& path,
                                                     const ArchitectureConfig& expected) {
    SegmentationModel m = load_checkpoint(path);
    if (!structurally_equal(m.config(), expected)) {
        throw CheckpointError("checkpoint architecture does not match the requested configuration (" +
                              json(m.config()).dump() + " vs " + json(expected).dump() + ")");
    }
    return m;
}

}  // namespace octseg::segnet
