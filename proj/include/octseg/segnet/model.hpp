#ifndef OCTSEG_SEGNET_MODEL_HPP
#define OCTSEG_SEGNET_MODEL_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "octseg/nn/graph.hpp"
#include "octseg/tensor.hpp"

namespace octseg::segnet {

// The decoder upsampling operator. The concatenation skip connections and
// the two refinement convolutions per stage are identical in both modes.
enum class DecoderMode { TransposedConvSkip, IndexUnpool };

DecoderMode decoder_mode_from_string(const std::string& s);
std::string to_string(DecoderMode m);

struct ArchitectureConfig {
    int height = 256;
    int width = 256;
    int channels = 1;
    int num_classes = 8;
    std::vector<int> encoder_filters = {64, 128, 256, 512, 512};
    DecoderMode decoder_mode = DecoderMode::TransposedConvSkip;
    int kernel_size = 3;
    uint64_t seed = 42;

    // Throws ConfigError; five encoder stages are required (five 2x poolings),
    // so height/width must be divisible by 32.
    void validate() const;

    bool operator==(const ArchitectureConfig&) const = default;
};

void to_json(nlohmann::json& j, const ArchitectureConfig& c);
void from_json(const nlohmann::json& j, ArchitectureConfig& c);

struct ForwardTrace {
    Tensor output;                                            // B x H x W x num_classes
    std::map<std::string, Tensor> features;                   // requested activations
    std::map<std::string, std::vector<int32_t>> pooling_indices;  // index_unpool mode
};

struct LayerInfo {
    std::string name;
    std::string type;
    std::vector<int> output_shape;  // H, W, C at the configured input size
    int64_t params = 0;
};

class SegmentationModel {
public:
    static SegmentationModel build(const ArchitectureConfig& config);

    const ArchitectureConfig& config() const { return config_; }

    // Batch forward pass. `capture` names must exist in the layer registry.
    ForwardTrace forward(const Tensor& batch, const std::vector<std::string>& capture = {}) const;

    // Per-pixel argmax of the 8 class probabilities; ties go to the lowest index.
    LabelMask predict_mask(const Tensor& image) const;

    // dY^c/dA at `layer` for a single image, where Y^c is the spatial sum of
    // the class-c output (softmax probability, or the logit when
    // `use_logits`). Feature activations are returned alongside.
    struct ClassGradient {
        Tensor features;
        Tensor gradient;
    };
    ClassGradient class_gradient(const Tensor& image, const std::string& layer, int class_id,
                                 bool use_logits = false) const;

    const std::vector<std::string>& layer_names() const { return layer_names_; }
    bool has_layer(const std::string& name) const;
    int64_t parameter_count() const { return graph_.parameter_count(); }
    std::vector<LayerInfo> layer_registry() const;
    nlohmann::json summary() const;

    void save_checkpoint(const std::filesystem::path& path) const;
    static SegmentationModel load_checkpoint(const std::filesystem::path& path);
    // Loads and additionally requires the stored config to equal `expected`.
    static SegmentationModel load_checkpoint(const std::filesystem::path& path,
                                             const ArchitectureConfig& expected);

    nn::Graph& graph() { return graph_; }
    const nn::Graph& graph() const { return graph_; }
    int output_node() const { return graph_.output_id(); }
    int logits_node() const { return logits_node_; }

private:
    SegmentationModel() = default;
    void check_batch(const Tensor& batch) const;

    ArchitectureConfig config_;
    nn::Graph graph_;
    std::vector<std::string> layer_names_;
    int logits_node_ = -1;
    std::vector<int> pool_nodes_;
};

// Applies argmax over the trailing class axis; ties to the lowest index.
LabelMask argmax_mask(const Tensor& probs);

}  // namespace octseg::segnet

#endif
