#ifndef HSIBAND_CLASSIFIER_HPP
#define HSIBAND_CLASSIFIER_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hsiband/hypercube.hpp"

namespace hsiband {

enum class LayerKind { SpectralConv, SpatialConv, Dense, Relu, Flatten, Softmax };
enum class LrpRule { Zero, Epsilon, Gamma };

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int kernel = 0;    // spectral_conv: length along bands; spatial_conv: square side
    int stride = 1;    // spectral_conv only
    int channels = 0;  // conv output channels
    int units = 0;     // dense output width
    LrpRule lrp_rule = LrpRule::Epsilon;
};

struct NetworkSpec {
    int patch_height = 0;
    int patch_width = 0;
    int bands = 0;
    int class_count = 0;
    std::uint64_t seed = 0;
    std::vector<LayerSpec> layers;
};

// Shape of one activation tensor: (h, w, d, f) before flatten, flat n after.
struct ActShape {
    int h = 0, w = 0, d = 0, f = 0;
    bool flat = false;
    int n = 0;  // total element count

    std::size_t size() const { return static_cast<std::size_t>(n); }
};

// Shapes of every activation in the chain: entry 0 is the input,
// entry i+1 is the output of layer i. Throws ConfigError on a broken chain.
std::vector<ActShape> shape_chain(const NetworkSpec& spec);

struct LayerWeights {
    std::vector<float> w;
    std::vector<float> b;
};

struct Network {
    NetworkSpec spec;
    std::vector<LayerWeights> weights;  // one entry per layer, empty for unweighted
    BandStats standardizer;             // train-split stats applied at the input
};

// Post-activation tensors from one forward pass. activations[0] is the
// standardized input; activations[i+1] is the output of layer i.
struct ActivationTrace {
    std::vector<std::vector<double>> activations;
};

struct ForwardResult {
    std::vector<double> logits;
    std::vector<double> confidence;  // softmax of logits
    std::optional<ActivationTrace> trace;
};

struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::string optimizer = "adam";  // "adam" | "sgd_momentum"
    std::uint64_t seed = 0;
    int early_stop_patience = 0;  // 0 disables
};

struct EpochStats {
    double loss = 0.0;
    double train_accuracy = 0.0;  // percent
};

struct TrainResult {
    Network network;
    std::vector<EpochStats> history;
};

Network init_network(const NetworkSpec& spec);

// Standardizes the raw patch with net.standardizer, then runs the layers.
ForwardResult forward(const Network& net, const Patch& patch, bool want_trace = false);

// Runs the layers on an already-standardized input vector.
ForwardResult forward_standardized(const Network& net, const std::vector<double>& input,
                                   bool want_trace = false);

std::vector<double> standardize_input(const Network& net, const Patch& patch);

// Maximum-confidence rule; ties break toward the lowest class index. Returns 1..c.
int predict(const Network& net, const Patch& patch);

TrainResult train(const Network& net, const PatchSet& train_set, const TrainConfig& cfg);

double evaluate_accuracy(const Network& net, const PatchSet& test_set);  // percent

// Same layer sequence with spectral kernels/strides clamped to depth b'.
NetworkSpec rebuild_for_bands(const NetworkSpec& spec, int reduced_bands);

// Checkpoint: manifest json + concatenated f32le tensors. Round-trip is bit-exact.
void save_model(const Network& net, const std::string& manifest_path,
                const std::string& bin_path);
Network load_model(const std::string& manifest_path, const std::string& bin_path);

// Preset architectures: "shallow" (1 conv block) or "deep" (3 conv blocks).
NetworkSpec preset_spec(const std::string& name, int patch_height, int patch_width,
                        int bands, int class_count, std::uint64_t seed);

// Cross-entropy loss and its analytic parameter gradients for one patch.
// Gradient layout mirrors Network::weights (w then b per weighted layer).
double loss_and_gradients(const Network& net, const Patch& patch, int target_class,
                          std::vector<std::vector<double>>* weight_grads,
                          std::vector<std::vector<double>>* bias_grads);

// Relevance propagation through one layer (z-rule with gamma weight
// transform and epsilon stabilizer); used by the LRP explainer.
std::vector<double> lrp_layer_backward(const LayerSpec& layer, const LayerWeights& lw,
                                       const ActShape& in_shape, const ActShape& out_shape,
                                       const std::vector<double>& input_activation,
                                       const std::vector<double>& output_relevance,
                                       LrpRule rule, double epsilon, double gamma);

}  // namespace hsiband

#endif
