#include "kcflat/kcnet.hpp"

#include <cmath>
#include <map>

namespace kcflat {

std::string_view to_string(Backbone b) noexcept {
    switch (b) {
        case Backbone::resnet18: return "resnet18";
        case Backbone::tiny: return "tiny";
    }
    return "?";
}

Backbone parse_backbone(std::string_view name) {
    if (name == "resnet18") return Backbone::resnet18;
    if (name == "tiny") return Backbone::tiny;
    throw ConfigError("unknown backbone: " + std::string(name));
}

int KCNetConfig::feature_width() const noexcept {
    return backbone == Backbone::resnet18 ? base_width * 8 : base_width;
}

void KCNetConfig::validate() const {
    if (base_width <= 0) throw ConfigError("base_width must be positive");
    if (input_resolution <= 0) throw ConfigError("input_resolution must be positive");
    if (head_widths.empty() || head_widths.back() != kClassCount) {
        throw ConfigError("head_widths must end in " + std::to_string(kClassCount));
    }
    for (int w : head_widths) {
        if (w <= 0) throw ConfigError("head widths must be positive");
    }
    if (backbone == Backbone::resnet18 && input_resolution < 32) {
        throw ConfigError("resnet18 backbone needs input_resolution >= 32");
    }
}

template <typename T>
KCNet<T>::KCNet(KCNetConfig config) : config_(std::move(config)) {
    config_.validate();
    const int in = config_.input_channels();
    const int w = config_.base_width;
    if (config_.backbone == Backbone::resnet18) {
        backbone_.template add<nn::Conv2d<T>>("conv1", in, w, 7, 2, 3);
        backbone_.template add<nn::BatchNorm2d<T>>("bn1", w);
        backbone_.template add<nn::ReLU<T>>("relu");
        backbone_.template add<nn::MaxPool2d<T>>("maxpool", 3, 2, 1);
        int channels = w;
        for (int stage = 0; stage < 4; ++stage) {
            const int out = w << stage;
            const int stride = stage == 0 ? 1 : 2;
            auto& layer = backbone_.template add<nn::Sequential<T>>("layer" + std::to_string(stage + 1));
            layer.template add<nn::BasicBlock<T>>("0", channels, out, stride);
            layer.template add<nn::BasicBlock<T>>("1", out, out, 1);
            channels = out;
        }
    } else {
        backbone_.template add<nn::Conv2d<T>>("conv1", in, w, 3, 1, 1);
        backbone_.template add<nn::BatchNorm2d<T>>("bn1", w);
        backbone_.template add<nn::ReLU<T>>("relu1");
        backbone_.template add<nn::Conv2d<T>>("conv2", w, w, 3, 1, 1);
        backbone_.template add<nn::BatchNorm2d<T>>("bn2", w);
        backbone_.template add<nn::ReLU<T>>("relu2");
    }
    backbone_.template add<nn::GlobalAvgPool<T>>("avgpool");

    int features = config_.feature_width();
    for (std::size_t i = 0; i < config_.head_widths.size(); ++i) {
        if (i > 0) head_.template add<nn::ReLU<T>>("relu" + std::to_string(i));
        head_.template add<nn::Linear<T>>(std::to_string(i), features, config_.head_widths[i]);
        features = config_.head_widths[i];
    }

    backbone_.collect("", registry_);
    head_.collect("head.", registry_);
    initialize(0);
}

template <typename T>
void KCNet<T>::initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    backbone_.initialize(rng);
    head_.initialize(rng);
}

template <typename T>
void KCNet<T>::check_input(const nn::Shape& s) const {
    if (s.c != config_.input_channels()) {
        throw ShapeError("network configured for " + std::string(to_string(config_.modality)) + " (" +
                         std::to_string(config_.input_channels()) + " channels) got " + std::to_string(s.c) +
                         " channels");
    }
    if (s.h != config_.input_resolution || s.w != config_.input_resolution) {
        throw ShapeError("network expects " + std::to_string(config_.input_resolution) + "x" +
                         std::to_string(config_.input_resolution) + " input, got " + std::to_string(s.h) + "x" +
                         std::to_string(s.w));
    }
}

template <typename T>
nn::Tensor<T> KCNet<T>::scores(const nn::Tensor<T>& x, nn::Mode mode) {
    check_input(x.shape());
    return head_.forward(backbone_.forward(x, mode), mode);
}

template <typename T>
nn::Tensor<T> KCNet<T>::forward(const nn::Tensor<T>& x, nn::Mode mode) {
    return log_softmax_.forward(scores(x, mode), mode);
}

template <typename T>
void KCNet<T>::backward(const nn::Tensor<T>& grad_logprobs) {
    backbone_.backward(head_.backward(log_softmax_.backward(grad_logprobs)));
}

template <typename T>
void KCNet<T>::zero_grad() {
    for (auto& [name, p] : registry_.parameters) p->zero_grad();
}

template <typename T>
std::vector<nn::Parameter<T>*> KCNet<T>::parameters() {
    std::vector<nn::Parameter<T>*> out;
    out.reserve(registry_.parameters.size());
    for (auto& [name, p] : registry_.parameters) out.push_back(p);
    return out;
}

template <typename T>
std::vector<NamedTensor> KCNet<T>::export_tensors() const {
    std::vector<NamedTensor> out;
    auto push = [&](const std::string& name, const nn::Tensor<T>& t) {
        NamedTensor nt{name, t.shape(), {}};
        nt.values.resize(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) nt.values[i] = static_cast<float>(t[i]);
        out.push_back(std::move(nt));
    };
    for (const auto& [name, p] : registry_.parameters) push(name, p->value);
    for (const auto& [name, b] : registry_.buffers) push(name, *b);
    return out;
}

template <typename T>
void KCNet<T>::import_tensors(std::span<const NamedTensor> tensors) {
    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& t : tensors) by_name[t.name] = &t;
    auto load = [&](const std::string& name, nn::Tensor<T>& dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ConfigError("parameter file lacks tensor '" + name + "'");
        if (!(it->second->shape == dst.shape())) {
            throw ShapeError("tensor '" + name + "' has shape " + nn::to_string(it->second->shape) + ", expected " +
                             nn::to_string(dst.shape()));
        }
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->values[i]);
    };
    for (auto& [name, p] : registry_.parameters) load(name, p->value);
    for (auto& [name, b] : registry_.buffers) load(name, *b);
}

template <typename T>
int KCNet<T>::load_pretrained(std::span<const NamedTensor> tensors) {
    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& t : tensors) by_name[t.name] = &t;
    int loaded = 0;
    auto load = [&](const std::string& name, nn::Tensor<T>& dst) {
        if (name.starts_with("head.")) return;
        auto it = by_name.find(name);
        if (it == by_name.end()) return;
        nn::Tensor<float> src(it->second->shape);
        std::copy(it->second->values.begin(), it->second->values.end(), src.data());
        if (name == "conv1.weight" && src.c() != dst.c()) src = adapt_input_channels(src, dst.c());
        if (!(src.shape() == dst.shape())) {
            throw ShapeError("pretrained tensor '" + name + "' has shape " + nn::to_string(src.shape()) +
                             ", expected " + nn::to_string(dst.shape()));
        }
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
        ++loaded;
    };
    for (auto& [name, p] : registry_.parameters) load(name, p->value);
    for (auto& [name, b] : registry_.buffers) load(name, *b);
    return loaded;
}

template class KCNet<float>;
template class KCNet<double>;

template <typename T>
double nll_loss(const nn::Tensor<T>& logprobs, std::span<const int> labels) {
    if (static_cast<std::size_t>(logprobs.n()) != labels.size()) throw ShapeError("nll_loss label count mismatch");
    if (labels.empty()) return 0.0;
    const std::size_t k = logprobs.shape().sample_size();
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k) throw Error("label out of range in nll_loss");
        sum -= static_cast<double>(logprobs.sample(static_cast<int>(i))[y]);
    }
    return sum / static_cast<double>(labels.size());
}

template <typename T>
nn::Tensor<T> nll_loss_grad(const nn::Tensor<T>& logprobs, std::span<const int> labels) {
    if (static_cast<std::size_t>(logprobs.n()) != labels.size()) throw ShapeError("nll_loss label count mismatch");
    nn::Tensor<T> g(logprobs.shape());
    const T scale = T(-1) / static_cast<T>(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) g.sample(static_cast<int>(i))[labels[i]] = scale;
    return g;
}

template double nll_loss<float>(const nn::Tensor<float>&, std::span<const int>);
template double nll_loss<double>(const nn::Tensor<double>&, std::span<const int>);
template nn::Tensor<float> nll_loss_grad<float>(const nn::Tensor<float>&, std::span<const int>);
template nn::Tensor<double> nll_loss_grad<double>(const nn::Tensor<double>&, std::span<const int>);

double nll_loss(const LogProbVector& logprobs, const ClassLabel& label) {
    return -logprobs[static_cast<std::size_t>(label.flat_index())];
}

nn::Tensor<float> adapt_input_channels(const nn::Tensor<float>& source, int target_channels) {
    if (source.c() != 3) throw ShapeError("channel adaptation expects 3-channel source filters");
    if (target_channels != 1 && target_channels != 3 && target_channels != 4) {
        throw ConfigError("unsupported target channel count: " + std::to_string(target_channels));
    }
    if (target_channels == 3) return source;
    const int out = source.n(), kh = source.h(), kw = source.w();
    nn::Tensor<float> adapted(nn::Shape{out, target_channels, kh, kw});
    for (int o = 0; o < out; ++o) {
        for (int y = 0; y < kh; ++y) {
            for (int x = 0; x < kw; ++x) {
                const float a = source(o, 0, y, x), b = source(o, 1, y, x), c = source(o, 2, y, x);
                const float mean = (a + b + c) / 3.0f;
                if (target_channels == 1) {
                    adapted(o, 0, y, x) = mean;
                } else {
                    adapted(o, 0, y, x) = a;
                    adapted(o, 1, y, x) = b;
                    adapted(o, 2, y, x) = c;
                    adapted(o, 3, y, x) = mean;
                }
            }
        }
    }
    return adapted;
}

ClassLabel decode_prediction(std::span<const double> logprobs) {
    if (logprobs.size() != static_cast<std::size_t>(kClassCount)) {
        throw ShapeError("expected " + std::to_string(kClassCount) + " log-probabilities");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < logprobs.size(); ++i) {
        if (logprobs[i] > logprobs[best]) best = i;
    }
    return ClassLabel::from_flat(static_cast<int>(best));
}

LogProbVector to_logprob_vector(const nn::Tensor<float>& logprobs, int sample) {
    if (logprobs.shape().sample_size() != static_cast<std::size_t>(kClassCount)) {
        throw ShapeError("expected " + std::to_string(kClassCount) + " outputs");
    }
    LogProbVector v{};
    const float* p = logprobs.sample(sample);
    for (int i = 0; i < kClassCount; ++i) v[static_cast<std::size_t>(i)] = p[i];
    return v;
}

}  // namespace kcflat
