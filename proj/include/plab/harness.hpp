#pragma once

#include "plab/concepts.hpp"
#include "plab/pruning.hpp"
#include "plab/stitching.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace plab {

enum class MaterialMode { RandomImage, Dop, Stitch, AllOne, RandomSegment, LessPatch };

const char* material_mode_name(MaterialMode m);
MaterialMode material_mode_from_name(const std::string& s);

struct DatasetConfig {
    std::string kind = "synthetic"; // synthetic | idx
    SyntheticSpec synthetic;
    std::string train_images, train_labels, test_images, test_labels;
    int classes = 10;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    std::string model = "cnn";
    Criterion criterion = Criterion::Snip;
    MaterialMode mode = MaterialMode::Dop;
    int material_budget = 100;
    std::vector<double> sparsities = {0.6, 0.8, 0.9, 0.95};
    double sigma = 0.75;
    SigmaMode sigma_mode = SigmaMode::SampleEndpoints;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    TrainSchedule schedule;
    TrainSchedule ref_schedule;
    double ref_accuracy_floor = 0.9;
    ExtractConfig extract;
    int score_batch_cap = 0; // 0 = single scoring batch
    double grasp_temperature = 0.0; // logit temperature for grasp scoring; 0 = off
    std::string out = "runs/exp";

    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_json_text(const std::string& text);
    std::string canonical_json() const;
    std::string hash() const; // fnv-1a over canonical json, hex
};

struct CellResult {
    double sparsity = 0.0;
    std::uint64_t seed = 0;
    bool ok = false;
    double accuracy = 0.0;
    int collapsed_layers = 0;
    double threshold = 0.0;
    std::string error;     // stage error for failed cells
    double seconds = 0.0;  // informational; excluded from report rows
};

struct RunReport {
    std::string config_hash;
    std::string dataset_id;
    std::string mode;
    std::string criterion;
    std::string model;
    double dense_baseline = -1.0;
    std::vector<CellResult> cells;

    bool all_ok() const;
};

struct PipelineContext {
    ShapesData shapes;        // populated for synthetic datasets
    LabeledImageSet train, test;
    NetworkSpec net;          // pruned target f
    NetworkSpec ref_net;      // reference classifier F
    ParameterSet ref_params;
    double ref_accuracy = 0.0;
};

// Stage entry points (each caches its artifact under config.out)
void prepare_data(const ExperimentConfig& cfg, PipelineContext& ctx);
void train_reference(const ExperimentConfig& cfg, PipelineContext& ctx);
PatchStore get_patch_store(const ExperimentConfig& cfg, PipelineContext& ctx);
PatchStore get_stitched_store(const ExperimentConfig& cfg, PipelineContext& ctx);

// Pruning materials for one cell seed; augmented like training data except
// in all-one mode.
LabeledBatch prepare_materials(const ExperimentConfig& cfg, PipelineContext& ctx,
                               std::uint64_t seed);

ScoreMap score_materials(const ExperimentConfig& cfg, const NetworkSpec& net,
                         const ParameterSet& theta, const LabeledBatch& materials);

RunReport run_pipeline(const ExperimentConfig& cfg);

void write_report(const RunReport& report, const std::string& dir);
RunReport load_report(const std::string& path); // report.json

struct AggregateRow {
    std::string mode, criterion;
    double sparsity = 0.0;
    double mean_acc = 0.0, std_acc = 0.0;
    int n_seeds = 0;
};

std::vector<AggregateRow> aggregate(const std::vector<RunReport>& reports);
// CSV table + one SVG sparsity/accuracy plot per criterion.
void compare_runs(const std::vector<RunReport>& reports, const std::string& out_dir);

} // namespace plab
