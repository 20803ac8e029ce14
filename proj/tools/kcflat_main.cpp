// kcflat: datasets, training, plans and the recognise-select-execute pipeline from the command line.

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "kcflat/config.hpp"
#include "kcflat/dataset.hpp"
#include "kcflat/eval.hpp"
#include "kcflat/pipeline.hpp"
#include "kcflat/plans.hpp"
#include "kcflat/png_io.hpp"
#include "kcflat/segmentation.hpp"
#include "kcflat/synth.hpp"
#include "kcflat/trainer.hpp"

namespace fs = std::filesystem;
using namespace kcflat;

namespace {

fs::path g_workdir;

fs::path resolve(const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() || g_workdir.empty() ? path : g_workdir / path;
}

void print_report(const ValidationReport& report) {
    for (const auto& v : report.violations) {
        std::cout << "violation [" << v.kind << "]";
        if (v.index) std::cout << " at " << *v.index;
        std::cout << ": " << v.message << '\n';
    }
}

Workspace load_workspace(const std::string& path) {
    return path.empty() ? Workspace{} : Workspace::from_config(KeyValueConfig::load(resolve(path)));
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

// --------------------------------------------------------------------------------------- dataset

struct BuildArgs {
    std::string spec, out;
};

int cmd_build_synthetic(const BuildArgs& a) {
    synth::SyntheticSpec spec;
    if (!a.spec.empty()) spec = synth::SyntheticSpec::from_config(KeyValueConfig::load(resolve(a.spec)));
    const fs::path out = resolve(a.out);
    const DatasetManifest m = synth::build_synthetic_dataset(spec, out);
    std::cerr << "wrote " << m.entries.size() << " captures\n";
    std::cout << (out / kManifestFileName).string() << '\n';
    return 0;
}

struct ValidateArgs {
    std::string manifest;
    int instances = 0;
    bool skip_images = false;
};

int cmd_validate(const ValidateArgs& a) {
    const DatasetManifest m = load_manifest(resolve(a.manifest));
    ManifestExpectations exp;
    if (a.instances > 0) exp.instances_per_category = a.instances;
    exp.check_images = !a.skip_images;
    const ValidationReport report = validate_manifest(m, exp);
    print_report(report);
    std::cout << m.entries.size() << " entries, " << report.size() << " violations\n";
    return report.ok() ? 0 : 1;
}

struct PreviewArgs {
    std::string mask, out;
};

int cmd_segment_preview(const PreviewArgs& a) {
    const Mask mask = png::read_mask(resolve(a.mask));
    const Segmentation seg = segment_garment(mask);
    static constexpr std::uint8_t palette[kSegmentCount][3] = {
        {230, 25, 75}, {60, 180, 75},  {255, 225, 25}, {0, 130, 200},  {245, 130, 48},
        {145, 30, 180}, {70, 240, 240}, {240, 50, 230}, {210, 245, 60}, {250, 190, 190}};
    RgbImage img(mask.width, mask.height, 3);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            const int l = seg.label_at(x, y);
            if (l < 0) continue;
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = palette[l][c];
        }
    }
    for (const auto& s : seg.segments) {
        for (int c = 0; c < 3; ++c) img.at(s.grasp_point.x, s.grasp_point.y, c) = 0;
        std::cout << "segment " << s.segment_id << ": " << s.pixels.size() << " px, grasp (" << s.grasp_point.x << ", "
                  << s.grasp_point.y << ")\n";
    }
    png::write_rgb8(resolve(a.out), img);
    return 0;
}

struct ExportArgs {
    std::string manifest, out;
    std::size_t entry = 0;
};

int cmd_export_capture(const ExportArgs& a) {
    const DatasetManifest m = load_manifest(resolve(a.manifest));
    if (a.entry >= m.entries.size()) throw DatasetError("entry index out of range");
    const Capture cap = load_capture(m, a.entry, !m.entries[a.entry].rgb_path.empty());
    write_capture_file(cap, resolve(a.out));
    std::cout << resolve(a.out).string() << '\n';
    return 0;
}

// ----------------------------------------------------------------------------------------- train

struct TrainArgs {
    std::string manifest, modality = "depth", config, out = "results";
    int k = 4;
};

int cmd_train(const TrainArgs& a) {
    const DatasetManifest m = load_manifest(resolve(a.manifest));
    ExperimentConfig exp;
    exp.model.input_resolution = m.header.resolution;
    if (!a.config.empty()) exp = ExperimentConfig::from_config(KeyValueConfig::load(resolve(a.config)), exp);
    std::vector<Modality> modalities;
    if (a.modality == "all") {
        modalities = {Modality{ModalityKind::depth}, Modality{ModalityKind::rgb}, Modality{ModalityKind::rgbd}};
    } else {
        modalities = {*parse_modality(a.modality)};
    }
    const fs::path out = resolve(a.out);
    std::vector<EvalReport> reports;
    for (Modality mod : modalities) {
        KCNetConfig model = exp.model;
        model.modality = mod;
        const std::string tag(to_string(mod));
        const auto t0 = std::chrono::steady_clock::now();
        KFoldHooks hooks;
        hooks.train.on_epoch = [&](const EpochRecord& r) {
            std::cerr << tag << " epoch " << r.epoch << " loss " << r.train_loss << " acc " << r.train_accuracy
                      << " lr " << r.learning_rate << '\n';
        };
        hooks.on_fold = [&](int fold, const EvalResult& ev) {
            std::cerr << tag << " fold " << fold << " test accuracy " << ev.overall_accuracy << '\n';
        };
        KFoldResult r = run_kfold(m, model, exp.train, a.k, hooks);
        for (std::size_t f = 0; f < r.artifacts.size(); ++f) {
            const std::string stem = tag + "_fold" + std::to_string(f);
            save_artifact(r.artifacts[f], out / (stem + ".kcnet"));
            write_text(out / (stem + "_curve.csv"), r.curves[f].to_csv());
        }
        std::cerr << tag << " finished in "
                  << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
        reports.push_back(r.report);
    }
    write_text(out / "report.csv", report_to_csv(reports));
    const std::string table = render_report_table(reports);
    write_text(out / "report.txt", table);
    std::cout << table;
    return 0;
}

// -------------------------------------------------------------------------------------- pipeline

struct PipelineArgs {
    std::string capture, model, registry, workspace, trace;
};

int cmd_run_pipeline(const PipelineArgs& a) {
    const Workspace workspace = load_workspace(a.workspace);
    const ModelArtifact artifact = load_artifact(resolve(a.model));
    KCNet<float> net = instantiate(artifact);
    Normalization norm;
    norm.max_depth_mm = artifact.max_depth_mm;
    const PlanRegistry registry = load_registry(resolve(a.registry));

    PipelineResult result;
    try {
        const Capture capture = load_capture_file(resolve(a.capture));
        result = run_pipeline(capture, net, norm, registry, workspace);
    } catch (const std::exception& e) {
        result.failed_stage = kStageRecognition;
        result.error = e.what();
    }
    std::cout << result.to_json() << '\n';
    if (!a.trace.empty()) write_text(resolve(a.trace), trace_to_jsonl(result.trace));
    if (!result.success) {
        std::cerr << "pipeline failed at stage '" << result.failed_stage << "': " << result.error << '\n';
        return 1;
    }
    return 0;
}

// ----------------------------------------------------------------------------------------- plans

struct PlansArgs {
    std::string out = "plans", registry = "plans", workspace;
    double stretch = 0.95;
};

int cmd_plans_generate(const PlansArgs& a) {
    TemplateParams params;
    params.stretch_factor = a.stretch;
    const PlanRegistry reg = build_template_registry(load_workspace(a.workspace), params);
    write_registry(reg, resolve(a.out));
    std::cout << "wrote " << reg.size() << " plans to " << resolve(a.out).string() << '\n';
    return 0;
}

int cmd_plans_validate(const PlansArgs& a) {
    const Workspace ws = load_workspace(a.workspace);
    const PlanRegistry reg = load_registry(resolve(a.registry));
    std::size_t bad = 0;
    for (const auto& [key, plan] : reg.plans()) {
        const ValidationReport r = validate_plan(plan, ws);
        if (r.ok()) continue;
        ++bad;
        std::cout << plan.plan_id << ":\n";
        print_report(r);
    }
    for (const auto& label : reg.missing()) std::cout << "missing plan for " << to_string(label) << '\n';
    std::cout << reg.size() << " plans, " << bad << " with violations\n";
    return bad == 0 && reg.complete() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Known-configuration garment recognition and flattening plans"};
    app.require_subcommand(1);
    std::string workdir;
    app.add_option("--workdir", workdir, "Directory relative paths are resolved against");

    auto* dataset = app.add_subcommand("dataset", "Build, check and inspect capture datasets");
    dataset->require_subcommand(1);

    BuildArgs build;
    auto* build_cmd = dataset->add_subcommand("build-synthetic", "Render a synthetic dataset");
    build_cmd->add_option("--spec", build.spec, "Synthetic spec (key-value file)");
    build_cmd->add_option("--out", build.out, "Output directory")->required();

    ValidateArgs validate;
    auto* validate_cmd = dataset->add_subcommand("validate", "Check a manifest against the dataset schema");
    validate_cmd->add_option("--manifest", validate.manifest, "manifest.jsonl or its directory")->required();
    validate_cmd->add_option("--instances", validate.instances, "Expected instances per category");
    validate_cmd->add_flag("--skip-images", validate.skip_images, "Do not open image files");

    PreviewArgs preview;
    auto* preview_cmd = dataset->add_subcommand("segment-preview", "Colour the ten grasp segments of a mask");
    preview_cmd->add_option("--mask", preview.mask, "Mask PNG")->required();
    preview_cmd->add_option("--out", preview.out, "Output RGB PNG")->required();

    ExportArgs exported;
    auto* export_cmd = dataset->add_subcommand("export-capture", "Write one manifest entry as a capture.json");
    export_cmd->add_option("--manifest", exported.manifest, "manifest.jsonl or its directory")->required();
    export_cmd->add_option("--entry", exported.entry, "Manifest row")->required();
    export_cmd->add_option("--out", exported.out, "capture.json path")->required();

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "k-fold training and evaluation");
    train_cmd->add_option("--manifest", train.manifest, "manifest.jsonl or its directory")->required();
    train_cmd->add_option("--modality", train.modality, "depth, rgb, rgbd or all")
        ->check(CLI::IsMember({"depth", "rgb", "rgbd", "all"}));
    train_cmd->add_option("--k", train.k, "Number of folds")->check(CLI::Range(2, 1000));
    train_cmd->add_option("--config", train.config, "Model/training config (key-value file)");
    train_cmd->add_option("--out", train.out, "Output directory for artifacts and reports");

    PipelineArgs pipe;
    auto* pipe_cmd = app.add_subcommand("run-pipeline", "Recognise a capture, select its plan and execute it");
    pipe_cmd->add_option("--capture", pipe.capture, "capture.json")->required();
    pipe_cmd->add_option("--model", pipe.model, "Model artifact")->required();
    pipe_cmd->add_option("--registry", pipe.registry, "Plan registry directory")->required();
    pipe_cmd->add_option("--workspace", pipe.workspace, "Workspace (key-value file); defaults built in");
    pipe_cmd->add_option("--trace", pipe.trace, "Write the execution trace as JSON lines");

    auto* plans = app.add_subcommand("plans", "Manipulation plan registry");
    plans->require_subcommand(1);
    PlansArgs plan_args;
    auto* gen_cmd = plans->add_subcommand("generate", "Write the 50 flattening template plans");
    gen_cmd->add_option("--out", plan_args.out, "Registry directory");
    gen_cmd->add_option("--workspace", plan_args.workspace, "Workspace (key-value file)");
    gen_cmd->add_option("--stretch", plan_args.stretch, "Stretch factor")->check(CLI::Range(0.1, 1.0));
    auto* pval_cmd = plans->add_subcommand("validate", "Validate every plan in a registry");
    pval_cmd->add_option("--registry", plan_args.registry, "Registry directory");
    pval_cmd->add_option("--workspace", plan_args.workspace, "Workspace (key-value file)");

    // Command-line errors exit with 2; violations and failed stages exit with 1.
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    g_workdir = workdir;

    try {
        if (build_cmd->parsed()) return cmd_build_synthetic(build);
        if (validate_cmd->parsed()) return cmd_validate(validate);
        if (preview_cmd->parsed()) return cmd_segment_preview(preview);
        if (export_cmd->parsed()) return cmd_export_capture(exported);
        if (train_cmd->parsed()) return cmd_train(train);
        if (pipe_cmd->parsed()) return cmd_run_pipeline(pipe);
        if (gen_cmd->parsed()) return cmd_plans_generate(plan_args);
        if (pval_cmd->parsed()) return cmd_plans_validate(plan_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
