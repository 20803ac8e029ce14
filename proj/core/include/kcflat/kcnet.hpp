#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kcflat/nn/layers.hpp"
#include "kcflat/types.hpp"

namespace kcflat {

enum class Backbone : std::uint8_t {
    resnet18,  // 18-layer residual network: 7x7 stem, four stages of two basic blocks
    tiny,      // two 3x3 conv layers; a stand-in used for gradient checking and smoke tests
};

std::string_view to_string(Backbone b) noexcept;
Backbone parse_backbone(std::string_view name);

struct KCNetConfig {
    Modality modality{ModalityKind::depth};
    Backbone backbone = Backbone::resnet18;
    // Channel width of the first residual stage; stages use 1x, 2x, 4x, 8x. The canonical network uses 64.
    int base_width = 64;
    // Output widths of the fully connected head, applied after global pooling. Must end in 50.
    std::vector<int> head_widths = {kClassCount};
    int input_resolution = 256;
    // Optional parameter file to initialize the backbone from (3-channel first layer; adapted on load).
    std::string pretrained_weights;

    int input_channels() const noexcept { return modality.channel_count(); }
    int feature_width() const noexcept;
    // Throws ConfigError when the head does not end in 50 or widths are non-positive.
    void validate() const;

    bool operator==(const KCNetConfig&) const = default;
};

struct NamedTensor {
    std::string name;
    nn::Shape shape;
    std::vector<float> values;

    bool operator==(const NamedTensor&) const = default;
};

using LogProbVector = std::array<double, kClassCount>;

// The known-configuration classifier: convolutional backbone, pooled features, fully connected head,
// log-softmax over the 50 (category, segment) classes.
template <typename T>
class KCNet {
public:
    explicit KCNet(KCNetConfig config);

    const KCNetConfig& config() const noexcept { return config_; }

    // x: [N, channels, res, res] -> log-probabilities [N, 50, 1, 1].
    nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode);
    // Raw head scores before log-softmax.
    nn::Tensor<T> scores(const nn::Tensor<T>& x, nn::Mode mode);
    // Back-propagates d(loss)/d(logprobs) from the last train-mode forward().
    void backward(const nn::Tensor<T>& grad_logprobs);

    void initialize(std::uint64_t seed);
    void zero_grad();

    nn::TensorRegistry<T>& registry() noexcept { return registry_; }
    std::vector<nn::Parameter<T>*> parameters();

    std::vector<NamedTensor> export_tensors() const;
    // Requires every tensor of this network to be present with a matching shape.
    void import_tensors(std::span<const NamedTensor> tensors);
    // Loads backbone tensors that exist by name, adapting the first convolution's channels.
    // The head is left at its initialization. Returns the number of tensors loaded.
    int load_pretrained(std::span<const NamedTensor> tensors);

private:
    void check_input(const nn::Shape& s) const;

    KCNetConfig config_;
    nn::Sequential<T> backbone_;
    nn::Sequential<T> head_;
    nn::LogSoftmax<T> log_softmax_;
    nn::TensorRegistry<T> registry_;
};

extern template class KCNet<float>;
extern template class KCNet<double>;

// Mean negative log-likelihood of the true classes; logprobs is [N, 50, 1, 1].
template <typename T>
double nll_loss(const nn::Tensor<T>& logprobs, std::span<const int> labels);
// Gradient of nll_loss with respect to logprobs.
template <typename T>
nn::Tensor<T> nll_loss_grad(const nn::Tensor<T>& logprobs, std::span<const int> labels);

double nll_loss(const LogProbVector& logprobs, const ClassLabel& label);

// Re-targets first-layer filters [out, 3, k, k] to 1, 3 or 4 input channels. One channel takes the
// per-filter channel mean; four channels keep the source filters and append the channel mean.
nn::Tensor<float> adapt_input_channels(const nn::Tensor<float>& source, int target_channels);

// Argmax with ties resolved toward the lowest class index.
ClassLabel decode_prediction(std::span<const double> logprobs);

LogProbVector to_logprob_vector(const nn::Tensor<float>& logprobs, int sample);

}  // namespace kcflat
