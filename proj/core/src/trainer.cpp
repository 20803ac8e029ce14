#include "kcflat/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kcflat/synth.hpp"

namespace kcflat {

namespace fs = std::filesystem;
using nlohmann::json;

double TrainConfig::lr_at(int epoch) const {
    return learning_rate * std::pow(lr_decay, std::floor(static_cast<double>(epoch) / lr_step));
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (!(lr_decay > 0)) throw ConfigError("lr_decay must be positive");
    if (lr_step <= 0) throw ConfigError("lr_step must be positive");
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0, 1)");
    if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
}

ExperimentConfig ExperimentConfig::from_config(const KeyValueConfig& cfg, ExperimentConfig base) {
    const auto unknown = cfg.unknown_keys({"model.backbone", "model.base_width", "model.head_widths",
                                           "model.input_resolution", "model.pretrained_weights",
                                           "train.learning_rate", "train.lr_decay", "train.lr_step", "train.epochs",
                                           "train.batch_size", "train.momentum", "train.weight_decay", "train.seed",
                                           "train.hflip"});
    if (!unknown.empty()) throw ConfigError("unknown configuration key '" + unknown.front() + "'");
    ExperimentConfig e = std::move(base);
    if (auto b = cfg.get("model.backbone")) e.model.backbone = parse_backbone(*b);
    e.model.base_width = cfg.get_int("model.base_width", e.model.base_width);
    e.model.head_widths = cfg.get_int_list("model.head_widths", e.model.head_widths);
    e.model.input_resolution = cfg.get_int("model.input_resolution", e.model.input_resolution);
    e.model.pretrained_weights = cfg.get_string("model.pretrained_weights", e.model.pretrained_weights);
    auto& t = e.train;
    t.learning_rate = cfg.get_double("train.learning_rate", t.learning_rate);
    t.lr_decay = cfg.get_double("train.lr_decay", t.lr_decay);
    t.lr_step = cfg.get_int("train.lr_step", t.lr_step);
    t.epochs = cfg.get_int("train.epochs", t.epochs);
    t.batch_size = cfg.get_int("train.batch_size", t.batch_size);
    t.momentum = cfg.get_double("train.momentum", t.momentum);
    t.weight_decay = cfg.get_double("train.weight_decay", t.weight_decay);
    t.seed = static_cast<std::uint64_t>(cfg.get_int64("train.seed", static_cast<long long>(t.seed)));
    t.hflip = cfg.get_bool("train.hflip", t.hflip);
    t.validate();
    return e;
}

std::string TrainingCurve::to_csv() const {
    std::ostringstream out;
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "epoch,train_loss,train_accuracy,learning_rate\n";
    for (const auto& e : epochs) {
        out << e.epoch << ',' << e.train_loss << ',' << e.train_accuracy << ',' << e.learning_rate << '\n';
    }
    return out.str();
}

// ----------------------------------------------------------------------------------------- artifact

namespace {

constexpr char kMagic[8] = {'K', 'C', 'N', 'E', 'T', 'A', 'R', 'T'};
constexpr std::uint32_t kArtifactVersion = 1;

json to_json(const KCNetConfig& c) {
    return {{"modality", to_string(c.modality)},
            {"backbone", to_string(c.backbone)},
            {"base_width", c.base_width},
            {"head_widths", c.head_widths},
            {"input_resolution", c.input_resolution},
            {"pretrained_weights", c.pretrained_weights}};
}

KCNetConfig model_config_from_json(const json& j) {
    KCNetConfig c;
    auto m = parse_modality(j.at("modality").get<std::string>());
    if (!m) throw DatasetError("artifact names an unknown modality");
    c.modality = *m;
    c.backbone = parse_backbone(j.at("backbone").get<std::string>());
    c.base_width = j.at("base_width").get<int>();
    c.head_widths = j.at("head_widths").get<std::vector<int>>();
    c.input_resolution = j.at("input_resolution").get<int>();
    c.pretrained_weights = j.at("pretrained_weights").get<std::string>();
    return c;
}

json to_json(const TrainConfig& t) {
    return {{"learning_rate", t.learning_rate}, {"lr_decay", t.lr_decay},         {"lr_step", t.lr_step},
            {"epochs", t.epochs},               {"batch_size", t.batch_size},     {"momentum", t.momentum},
            {"weight_decay", t.weight_decay},   {"seed", t.seed},                 {"hflip", t.hflip}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig t;
    t.learning_rate = j.at("learning_rate").get<double>();
    t.lr_decay = j.at("lr_decay").get<double>();
    t.lr_step = j.at("lr_step").get<int>();
    t.epochs = j.at("epochs").get<int>();
    t.batch_size = j.at("batch_size").get<int>();
    t.momentum = j.at("momentum").get<double>();
    t.weight_decay = j.at("weight_decay").get<double>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.hflip = j.at("hflip").get<bool>();
    return t;
}

template <typename U>
void put(std::ostream& out, U v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<char, sizeof(U)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        out.write(bytes.data(), bytes.size());
    } else {
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
}

template <typename U>
U get(std::istream& in, const std::string& what) {
    std::array<char, sizeof(U)> bytes;
    if (!in.read(bytes.data(), bytes.size())) throw DatasetError("artifact truncated reading " + what);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<U>(bytes);
}

}  // namespace

void save_artifact(const ModelArtifact& a, const fs::path& path) {
    json header = {{"config", to_json(a.config)},
                   {"train_config", to_json(a.train_config)},
                   {"fold_id", a.fold_id},
                   {"dataset_fingerprint", a.dataset_fingerprint},
                   {"max_depth_mm", a.max_depth_mm}};
    json inst = json::array();
    for (const auto& g : a.train_instances) inst.push_back({to_string(g.category), g.instance_id});
    header["train_instances"] = inst;
    json tensors = json::array();
    for (const auto& t : a.tensors) {
        if (t.values.size() != t.shape.numel()) throw ShapeError("tensor '" + t.name + "' size does not match its shape");
        tensors.push_back({{"name", t.name}, {"shape", {t.shape.n, t.shape.c, t.shape.h, t.shape.w}}});
    }
    header["tensors"] = tensors;
    const std::string text = header.dump();

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write artifact " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kArtifactVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : a.tensors) {
        for (float v : t.values) put<float>(out, v);
    }
    if (!out) throw Error("failed writing artifact " + path.string());
}

ModelArtifact load_artifact(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open artifact " + path.string());
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw DatasetError(path.string() + " is not a model artifact");
    }
    const auto version = get<std::uint32_t>(in, "version");
    if (version != kArtifactVersion) throw DatasetError("unsupported artifact version " + std::to_string(version));
    const auto length = get<std::uint64_t>(in, "header length");
    if (length > (1u << 30)) throw DatasetError("artifact header too large");
    std::string text(length, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw DatasetError("artifact truncated in header");

    ModelArtifact a;
    try {
        const json h = json::parse(text);
        a.config = model_config_from_json(h.at("config"));
        a.train_config = train_config_from_json(h.at("train_config"));
        a.fold_id = h.at("fold_id").get<int>();
        a.dataset_fingerprint = h.at("dataset_fingerprint").get<std::string>();
        a.max_depth_mm = h.at("max_depth_mm").get<double>();
        for (const auto& g : h.at("train_instances")) {
            auto c = parse_category(g.at(0).get<std::string>());
            if (!c) throw DatasetError("artifact names an unknown category");
            a.train_instances.insert({*c, g.at(1).get<int>()});
        }
        for (const auto& t : h.at("tensors")) {
            const auto s = t.at("shape").get<std::vector<int>>();
            if (s.size() != 4) throw DatasetError("artifact tensor shape must have four extents");
            a.tensors.push_back({t.at("name").get<std::string>(), {s[0], s[1], s[2], s[3]}, {}});
        }
    } catch (const json::exception& e) {
        throw DatasetError(path.string() + ": malformed artifact header: " + e.what());
    }
    for (auto& t : a.tensors) {
        t.values.resize(t.shape.numel());
        for (auto& v : t.values) v = get<float>(in, "tensor " + t.name);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DatasetError(path.string() + ": trailing bytes after tensors");
    return a;
}

KCNet<float> instantiate(const ModelArtifact& artifact) {
    KCNet<float> net(artifact.config);
    net.import_tensors(artifact.tensors);
    return net;
}

// ------------------------------------------------------------------------------------------ samples

SampleSet load_samples(const DatasetManifest& manifest, Modality modality, std::span<const std::size_t> entries) {
    std::vector<std::size_t> rows(entries.begin(), entries.end());
    if (rows.empty()) {
        rows.resize(manifest.entries.size());
        std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    SampleSet s;
    s.modality = modality;
    s.channels = modality.channel_count();
    s.resolution = manifest.header.resolution;
    Normalization norm;
    norm.max_depth_mm = manifest.header.max_depth_mm;
    s.values.reserve(rows.size() * s.sample_size());
    for (std::size_t row : rows) {
        if (row >= manifest.entries.size()) throw DatasetError("manifest row out of range: " + std::to_string(row));
        const auto& e = manifest.entries[row];
        if (modality.needs_rgb() && e.rgb_path.empty()) {
            throw ConfigError("modality " + std::string(to_string(modality)) + " needs RGB images but manifest row " +
                              std::to_string(row) + " has none");
        }
        const Capture cap = load_capture(manifest, row, modality.needs_rgb());
        const ImageStack stack = compose_modalities(cap, modality, norm);
        if (stack.width != s.resolution || stack.height != s.resolution) {
            throw ShapeError("capture at row " + std::to_string(row) + " is " + std::to_string(stack.width) + "x" +
                             std::to_string(stack.height) + ", manifest resolution is " +
                             std::to_string(s.resolution));
        }
        s.values.insert(s.values.end(), stack.values.begin(), stack.values.end());
        s.labels.push_back(e.label().flat_index());
        s.instances.push_back(e.instance());
        s.entries.push_back(row);
    }
    return s;
}

SampleSet subset(const SampleSet& samples, const std::set<GarmentInstance>& instances) {
    SampleSet out;
    out.modality = samples.modality;
    out.channels = samples.channels;
    out.resolution = samples.resolution;
    const std::size_t ss = samples.sample_size();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!instances.contains(samples.instances[i])) continue;
        out.values.insert(out.values.end(), samples.values.begin() + static_cast<std::ptrdiff_t>(i * ss),
                          samples.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * ss));
        out.labels.push_back(samples.labels[i]);
        out.instances.push_back(samples.instances[i]);
        out.entries.push_back(samples.entries[i]);
    }
    return out;
}

// ----------------------------------------------------------------------------------------- training

namespace {

void check_compatible(const KCNetConfig& model, const SampleSet& samples) {
    if (model.modality != samples.modality) {
        throw ConfigError("model is configured for " + std::string(to_string(model.modality)) + " but samples are " +
                          std::string(to_string(samples.modality)));
    }
    if (model.input_resolution != samples.resolution) {
        throw ConfigError("model input resolution " + std::to_string(model.input_resolution) +
                          " does not match dataset resolution " + std::to_string(samples.resolution));
    }
}

// Mirroring a capture left-right swaps the two segment columns.
int mirrored_label(int flat) { return (flat / kSegmentCount) * kSegmentCount + ((flat % kSegmentCount) ^ 1); }

void copy_sample(const SampleSet& s, std::size_t i, float* dst, bool mirror) {
    const float* src = s.values.data() + i * s.sample_size();
    if (!mirror) {
        std::copy(src, src + s.sample_size(), dst);
        return;
    }
    const int r = s.resolution;
    for (int c = 0; c < s.channels; ++c) {
        for (int y = 0; y < r; ++y) {
            const float* row = src + (static_cast<std::size_t>(c) * r + y) * r;
            float* out = dst + (static_cast<std::size_t>(c) * r + y) * r;
            std::reverse_copy(row, row + r, out);
        }
    }
}

struct MomentumSgd {
    std::vector<nn::Parameter<float>*> params;
    std::vector<std::vector<float>> velocity;
    double momentum, weight_decay;

    MomentumSgd(std::vector<nn::Parameter<float>*> p, double mu, double wd)
        : params(std::move(p)), momentum(mu), weight_decay(wd) {
        for (auto* q : params) velocity.emplace_back(q->value.size(), 0.0f);
    }

    // v = mu * v + (g + wd * p);  p -= lr * v
    void step(double lr) {
        const auto mu = static_cast<float>(momentum);
        const auto wd = static_cast<float>(weight_decay);
        const auto eta = static_cast<float>(lr);
        for (std::size_t k = 0; k < params.size(); ++k) {
            float* p = params[k]->value.data();
            const float* g = params[k]->grad.data();
            float* v = velocity[k].data();
            const std::size_t n = velocity[k].size();
            for (std::size_t i = 0; i < n; ++i) {
                v[i] = mu * v[i] + g[i] + wd * p[i];
                p[i] -= eta * v[i];
            }
        }
    }
};

int argmax_row(const nn::Tensor<float>& logprobs, int sample) {
    const float* row = logprobs.sample(sample);
    int best = 0;
    for (int j = 1; j < kClassCount; ++j) {
        if (row[j] > row[best]) best = j;
    }
    return best;
}

}  // namespace

TrainResult train_fold(const FoldSplit& fold, const SampleSet& samples, const std::string& fingerprint,
                       double max_depth_mm, const KCNetConfig& model_config, const TrainConfig& tc,
                       const TrainHooks& hooks) {
    tc.validate();
    check_compatible(model_config, samples);
    const SampleSet train = subset(samples, fold.train_instances);
    if (train.size() == 0) throw ConfigError("fold " + std::to_string(fold.fold_id) + " has no training captures");

    KCNet<float> net(model_config);
    net.initialize(tc.seed);
    if (!model_config.pretrained_weights.empty()) {
        const ModelArtifact init = load_artifact(model_config.pretrained_weights);
        net.load_pretrained(init.tensors);
    }
    MomentumSgd opt(net.parameters(), tc.momentum, tc.weight_decay);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t ss = train.sample_size();
    TrainingCurve curve;
    std::vector<int> labels;
    std::vector<std::size_t> batch_entries;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        std::mt19937_64 rng(synth::derive_seed(tc.seed, {0x65706f6368ULL, static_cast<std::uint64_t>(epoch)}));
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = tc.lr_at(epoch);
        double loss_sum = 0.0;
        long correct = 0, seen = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
            // A lone trailing sample would give batch normalization zero variance.
            if (end - start == 1 && order.size() > 1) continue;
            const int n = static_cast<int>(end - start);
            nn::Tensor<float> x({n, train.channels, train.resolution, train.resolution});
            labels.assign(static_cast<std::size_t>(n), 0);
            batch_entries.assign(static_cast<std::size_t>(n), 0);
            for (int b = 0; b < n; ++b) {
                const std::size_t i = order[start + static_cast<std::size_t>(b)];
                const bool mirror = tc.hflip && std::bernoulli_distribution(0.5)(rng);
                copy_sample(train, i, x.data() + static_cast<std::size_t>(b) * ss, mirror);
                labels[static_cast<std::size_t>(b)] = mirror ? mirrored_label(train.labels[i]) : train.labels[i];
                batch_entries[static_cast<std::size_t>(b)] = train.entries[i];
            }
            if (hooks.on_batch) hooks.on_batch(epoch, batch_entries);
            net.zero_grad();
            const nn::Tensor<float> logprobs = net.forward(x, nn::Mode::train);
            loss_sum += nll_loss(logprobs, labels) * n;
            for (int b = 0; b < n; ++b) correct += argmax_row(logprobs, b) == labels[static_cast<std::size_t>(b)];
            seen += n;
            net.backward(nll_loss_grad(logprobs, labels));
            opt.step(lr);
        }
        EpochRecord rec{epoch, loss_sum / static_cast<double>(seen), 100.0 * static_cast<double>(correct) / seen, lr};
        curve.epochs.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec);
    }

    TrainResult result;
    result.curve = std::move(curve);
    auto& a = result.artifact;
    a.config = model_config;
    a.train_config = tc;
    a.fold_id = fold.fold_id;
    a.dataset_fingerprint = fingerprint;
    a.train_instances = fold.train_instances;
    a.max_depth_mm = max_depth_mm;
    a.tensors = net.export_tensors();
    return result;
}

TrainResult train_fold(const FoldSplit& fold, const DatasetManifest& manifest, const KCNetConfig& model_config,
                       const TrainConfig& train_config, const TrainHooks& hooks) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        if (fold.train_instances.contains(manifest.entries[i].instance())) rows.push_back(i);
    }
    if (rows.empty()) throw ConfigError("fold " + std::to_string(fold.fold_id) + " has no training captures");
    const SampleSet samples = load_samples(manifest, model_config.modality, rows);
    return train_fold(fold, samples, dataset_fingerprint(manifest), manifest.header.max_depth_mm, model_config,
                      train_config, hooks);
}

// ------------------------------------------------------------------------------------------ scoring

EvalResult tally_predictions(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size()) throw ShapeError("prediction and label counts differ");
    EvalResult r;
    std::array<long, kCategoryCount> hits{};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i], p = predicted[i];
        if (t < 0 || t >= kClassCount || p < 0 || p >= kClassCount) throw ShapeError("class index out of range");
        ++r.confusion[static_cast<std::size_t>(t) * kClassCount + static_cast<std::size_t>(p)];
        ++r.category_total[static_cast<std::size_t>(t / kSegmentCount)];
        if (t == p) ++hits[static_cast<std::size_t>(t / kSegmentCount)];
    }
    long all_hits = 0;
    for (int c = 0; c < kCategoryCount; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        r.category_accuracy[ci] = r.category_total[ci] > 0
                                      ? 100.0 * static_cast<double>(hits[ci]) / static_cast<double>(r.category_total[ci])
                                      : std::numeric_limits<double>::quiet_NaN();
        all_hits += hits[ci];
        r.total += r.category_total[ci];
    }
    r.overall_accuracy = r.total > 0 ? 100.0 * static_cast<double>(all_hits) / static_cast<double>(r.total) : 0.0;
    return r;
}

EvalResult evaluate(const ModelArtifact& artifact, const SampleSet& test) {
    if (test.modality != artifact.config.modality) {
        throw ConfigError("artifact was trained on " + std::string(to_string(artifact.config.modality)) +
                          ", evaluation requested " + std::string(to_string(test.modality)));
    }
    for (const auto& g : test.instances) {
        if (artifact.train_instances.contains(g)) {
            throw LeakageError("test instance " + to_string(g) + " was used to train fold " +
                               std::to_string(artifact.fold_id));
        }
    }
    check_compatible(artifact.config, test);
    KCNet<float> net = instantiate(artifact);
    std::vector<int> predicted;
    predicted.reserve(test.size());
    constexpr std::size_t kEvalBatch = 64;
    const std::size_t ss = test.sample_size();
    for (std::size_t start = 0; start < test.size(); start += kEvalBatch) {
        const std::size_t end = std::min(test.size(), start + kEvalBatch);
        const int n = static_cast<int>(end - start);
        nn::Tensor<float> x({n, test.channels, test.resolution, test.resolution});
        std::copy(test.values.begin() + static_cast<std::ptrdiff_t>(start * ss),
                  test.values.begin() + static_cast<std::ptrdiff_t>(end * ss), x.data());
        const nn::Tensor<float> logprobs = net.forward(x, nn::Mode::eval);
        for (int b = 0; b < n; ++b) predicted.push_back(decode_prediction(to_logprob_vector(logprobs, b)).flat_index());
    }
    return tally_predictions(test.labels, predicted);
}

EvalResult evaluate(const ModelArtifact& artifact, const DatasetManifest& manifest,
                    const std::set<GarmentInstance>& test_instances, Modality modality) {
    for (const auto& g : test_instances) {
        if (artifact.train_instances.contains(g)) {
            throw LeakageError("test instance " + to_string(g) + " was used to train fold " +
                               std::to_string(artifact.fold_id));
        }
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        if (test_instances.contains(manifest.entries[i].instance())) rows.push_back(i);
    }
    if (rows.empty()) throw ConfigError("no captures for the requested test instances");
    return evaluate(artifact, load_samples(manifest, modality, rows));
}

KFoldResult run_kfold(const DatasetManifest& manifest, const KCNetConfig& model_config, const TrainConfig& train_config,
                      int k, const KFoldHooks& hooks) {
    train_config.validate();
    model_config.validate();
    KFoldResult result;
    result.folds = make_folds(manifest, k);
    const ValidationReport fold_check = verify_folds(result.folds);
    if (!fold_check.ok()) throw Error("fold construction failed: " + fold_check.violations.front().message);

    const SampleSet samples = load_samples(manifest, model_config.modality);
    const std::string fingerprint = dataset_fingerprint(manifest);
    AccuracyGrid grid(k);
    for (const auto& fold : result.folds) {
        TrainConfig tc = train_config;
        tc.seed = synth::derive_seed(train_config.seed, {0x666f6c64ULL, static_cast<std::uint64_t>(fold.fold_id)});
        TrainResult tr = train_fold(fold, samples, fingerprint, manifest.header.max_depth_mm, model_config, tc,
                                    hooks.train);
        const EvalResult ev = evaluate(tr.artifact, subset(samples, fold.test_instances));
        for (int c = 0; c < kCategoryCount; ++c) {
            const double acc = ev.category_accuracy[static_cast<std::size_t>(c)];
            if (!std::isnan(acc)) grid.set(category_from_index(c), fold.fold_id, acc);
        }
        if (hooks.on_fold) hooks.on_fold(fold.fold_id, ev);
        result.artifacts.push_back(std::move(tr.artifact));
        result.curves.push_back(std::move(tr.curve));
        result.evaluations.push_back(ev);
    }
    result.report = aggregate_report(grid, model_config.modality);
    return result;
}

}  // namespace kcflat
