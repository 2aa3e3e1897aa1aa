#include "plab/harness.hpp"
#include "plab/store.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>

namespace fs = std::filesystem;
using namespace plab;

namespace {

ExperimentConfig load_config(const std::string& path, const std::string& out_override) {
    ExperimentConfig cfg = ExperimentConfig::from_file(path);
    if (!out_override.empty()) cfg.out = out_override;
    return cfg;
}

int cmd_train_ref(const std::string& config, const std::string& out) {
    ExperimentConfig cfg = load_config(config, out);
    PipelineContext ctx;
    prepare_data(cfg, ctx);
    train_reference(cfg, ctx);
    std::printf("reference classifier: test accuracy %.4f -> %s/ref.ckpt\n", ctx.ref_accuracy,
                cfg.out.c_str());
    return 0;
}

int cmd_extract(const std::string& config, const std::string& out) {
    ExperimentConfig cfg = load_config(config, out);
    PipelineContext ctx;
    prepare_data(cfg, ctx);
    PatchStore store = get_patch_store(cfg, ctx);
    std::printf("patch store: %zu patches -> %s/patches\n", store.patches.size(), cfg.out.c_str());
    for (const auto& w : store.warnings) std::printf("warning: %s\n", w.c_str());
    return 0;
}

int cmd_stitch(const std::string& config, const std::string& out) {
    ExperimentConfig cfg = load_config(config, out);
    PipelineContext ctx;
    prepare_data(cfg, ctx);
    PatchStore store = get_stitched_store(cfg, ctx);
    std::printf("stitched store: %zu patches -> %s/stitched\n", store.patches.size(),
                cfg.out.c_str());
    for (const auto& w : store.warnings) std::printf("warning: %s\n", w.c_str());
    return 0;
}

int cmd_prune(const std::string& config, const std::string& out, std::uint64_t seed) {
    ExperimentConfig cfg = load_config(config, out);
    PipelineContext ctx;
    prepare_data(cfg, ctx);
    ParameterSet theta = init_params(ctx.net, seed);
    LabeledBatch materials = prepare_materials(cfg, ctx, seed);
    ScoreMap scores = score_materials(cfg, ctx.net, theta, materials);
    fs::create_directories(fs::path(cfg.out) / "masks");
    for (double sp : cfg.sparsities) {
        MaskResult mr = top_kappa_mask(scores, SparsityTarget::from_sparsity(sp));
        LayerStatsReport stats = layer_stats(mr.mask, ctx.net);
        char name[128];
        std::snprintf(name, sizeof name, "seed%llu_sp%.4f.mask", (unsigned long long)seed, sp);
        std::string path = (fs::path(cfg.out) / "masks" / name).string();
        save_mask(path, mr.mask);
        std::printf("sparsity %.4f: kappa=%zu threshold=%.6g collapsed=%d -> %s\n", sp,
                    mr.mask.kappa, mr.threshold, stats.collapsed_count, path.c_str());
        for (const auto& l : stats.layers)
            if (l.collapsed)
                std::printf("  collapsed layer %d (%s): 0/%zu kept\n", l.layer, l.kind.c_str(),
                            l.total);
    }
    return 0;
}

int run_and_print(const ExperimentConfig& cfg) {
    RunReport rep = run_pipeline(cfg);
    int failed = 0;
    for (const auto& c : rep.cells) {
        if (c.ok)
            std::printf("cell sparsity=%.4f seed=%llu accuracy=%.4f collapsed=%d\n", c.sparsity,
                        (unsigned long long)c.seed, c.accuracy, c.collapsed_layers);
        else {
            std::printf("cell sparsity=%.4f seed=%llu FAILED: %s\n", c.sparsity,
                        (unsigned long long)c.seed, c.error.c_str());
            ++failed;
        }
    }
    std::printf("report: %s/report.csv (config %s)\n", cfg.out.c_str(), rep.config_hash.c_str());
    return failed == 0 ? 0 : 1;
}

int cmd_sweep(const std::string& config, const std::string& out) {
    return run_and_print(load_config(config, out));
}

int cmd_finetune(const std::string& config, const std::string& out, std::uint64_t seed) {
    ExperimentConfig cfg = load_config(config, out);
    cfg.seeds = {seed};
    return run_and_print(cfg);
}

int cmd_eval(const std::string& config, const std::string& out, const std::string& ckpt) {
    ExperimentConfig cfg = load_config(config, out);
    PipelineContext ctx;
    prepare_data(cfg, ctx);
    ParameterSet params = load_checkpoint(ckpt);
    double acc = test_accuracy(ctx.net, params, ctx.test.images, ctx.test.labels);
    std::printf("test accuracy: %.4f\n", acc);
    return 0;
}

int cmd_report(const std::vector<std::string>& reports, const std::string& out) {
    std::vector<RunReport> loaded;
    for (const auto& p : reports) loaded.push_back(load_report(p));
    compare_runs(loaded, out);
    std::printf("comparison written to %s\n", out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"one-shot pruning-at-initialization laboratory"};
    app.require_subcommand(1);

    std::string config, out, ckpt;
    std::uint64_t seed = 1;
    std::vector<std::string> report_files;

    auto add_common = [&](CLI::App* sub, bool need_config = true) {
        auto* opt = sub->add_option("--config", config, "experiment config file (json)");
        if (need_config) opt->required();
        sub->add_option("--out", out, "output directory (overrides config)");
    };

    auto* train_ref = app.add_subcommand("train-ref", "train the reference classifier F");
    add_common(train_ref);
    auto* extract = app.add_subcommand("extract", "extract discriminative patches");
    add_common(extract);
    auto* stitch = app.add_subcommand("stitch", "compose stitched patches");
    add_common(stitch);
    auto* prune = app.add_subcommand("prune", "score and write masks for one seed");
    add_common(prune);
    prune->add_option("--seed", seed, "cell seed");
    auto* finetune_cmd = app.add_subcommand("finetune", "prune + fine-tune + eval for one seed");
    add_common(finetune_cmd);
    finetune_cmd->add_option("--seed", seed, "cell seed");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    add_common(eval_cmd);
    eval_cmd->add_option("--ckpt", ckpt, "parameter checkpoint")->required();
    auto* sweep = app.add_subcommand("sweep", "run the full pipeline for all cells");
    add_common(sweep);
    auto* report = app.add_subcommand("report", "aggregate reports into table + plots");
    report->add_option("--out", out, "output directory")->required();
    report->add_option("reports", report_files, "report.json files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_ref->parsed()) return cmd_train_ref(config, out);
        if (extract->parsed()) return cmd_extract(config, out);
        if (stitch->parsed()) return cmd_stitch(config, out);
        if (prune->parsed()) return cmd_prune(config, out, seed);
        if (finetune_cmd->parsed()) return cmd_finetune(config, out, seed);
        if (eval_cmd->parsed()) return cmd_eval(config, out, ckpt);
        if (sweep->parsed()) return cmd_sweep(config, out);
        if (report->parsed()) return cmd_report(report_files, out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
