#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "svct/homology.hpp"
#include "svct/image.hpp"
#include "svct/nn/network.hpp"
#include "svct/nn/trainer.hpp"
#include "svct/tv.hpp"

namespace svct::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct PhantomCounts {
    std::size_t train = 28;
    std::size_t validation = 2;
    std::size_t test = 4;
};

struct HomologyConfig {
    std::size_t images = 32;
    std::size_t views = 0;  // 0: sparsest ladder count
    std::size_t grid = 201;
    std::size_t max_points = 256;
};

struct TvSettings {
    std::optional<double> lambda;  // grid-searched on validation phantoms when unset
    std::vector<double> lambda_grid{1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0};
    std::size_t iterations = 100;
    double smoothing_eps = 1e-2;

    TvConfig config(double lambda_tv) const;
};

struct StreakConfig {
    std::size_t image_size = 256;
    std::size_t views = 8;
    std::vector<std::pair<double, double>> targets{{-0.45, 0.3}, {0.35, 0.42}, {0.05, -0.5}};
    double radius = 0.1;
};

struct ExperimentConfig {
    std::uint64_t seed = 2024;
    std::size_t image_size = 128;
    std::size_t full_views = 1152;
    std::vector<std::size_t> ladder{24, 32, 48, 96};
    std::vector<std::size_t> train_views;  // empty: two smallest ladder counts
    PhantomCounts phantoms;
    HomologyConfig homology;
    nn::NetSpec net;
    nn::TrainConfig train;
    TvSettings tv;
    StreakConfig streaks;
    fs::path out = "out";
    bool deterministic = true;

    // Throws config on any broken invariant (including non-dividing views).
    void validate() const;
    std::vector<std::size_t> resolved_train_views() const;
    std::size_t sparsest() const;
    std::size_t homology_views() const;
};

// Unknown keys are config errors.
ExperimentConfig config_from_json(const json& j);
json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const fs::path& path);
// Applies "a.b.c=value" to a JSON document; value parses as JSON, else string.
void apply_override(json& doc, const std::string& assignment);

enum class Split { train, validation, test };
const char* to_string(Split s) noexcept;

struct PhantomSpec {
    std::string id;
    std::uint64_t seed = 0;
    Split split = Split::train;
};

// Train, validation and test phantoms with distinct seeds; asserts disjointness.
std::vector<PhantomSpec> phantom_plan(const ExperimentConfig& cfg);

struct DatasetEntry {
    PhantomSpec phantom;
    Image truth;
    Image reference;  // full-view FBP
    std::map<std::size_t, Image> inputs;  // sparse FBP per view count (X)
    std::map<std::size_t, Image> labels;  // X - reference (Y)
};

struct Dataset {
    fs::path root;
    std::size_t image_size = 0;
    std::size_t full_views = 0;
    std::vector<std::size_t> ladder;
    std::vector<DatasetEntry> entries;

    std::vector<const DatasetEntry*> split(Split s) const;
    std::size_t pair_count() const;
};

fs::path dataset_dir(const ExperimentConfig& cfg);

// Simulates every phantom of the plan at every ladder view count and writes
// truth/reference/input/label images plus dataset/manifest.json.
Dataset cmd_dataset(const ExperimentConfig& cfg);
Dataset load_dataset(const ExperimentConfig& cfg);

// Training pairs from the train split at the given view counts.
nn::TrainingSet training_set(const Dataset& data, const std::vector<std::size_t>& views,
                             nn::LearningMode mode);
nn::ValidationSet validation_set(const Dataset& data, std::size_t views, double peak);
// PSNR peak shared by every report: data range of all reference images.
double reference_peak(const Dataset& data);

struct Variant {
    nn::LearningMode mode = nn::LearningMode::residual;
    bool multi_scale = true;

    std::string name() const;  // e.g. "multi_residual"
};
std::vector<Variant> all_variants();
Variant parse_variant(const std::string& mode, const std::string& scale);

struct TrainSummary {
    Variant variant;
    std::vector<nn::EpochRecord> history;
    std::string checkpoint_hash;
    fs::path checkpoint;
    double seconds = 0.0;
};

TrainSummary cmd_train(const ExperimentConfig& cfg, const Variant& variant);

struct Measurement {
    std::string phantom;
    std::size_t views = 0;
    std::string method;
    double psnr = 0.0;
    double seconds = 0.0;
};

struct MetricReport {
    double peak = 0.0;
    double tv_lambda = 0.0;
    std::vector<std::string> methods;
    std::vector<std::size_t> ladder;
    std::vector<Measurement> measurements;
    // Objective trace of TV on the first test phantom at the sparsest count.
    std::vector<double> tv_trace;

    double average_psnr(std::size_t views, const std::string& method) const;
    std::vector<const Measurement*> select(std::size_t views, const std::string& method) const;
};

// Chooses lambda from the grid by mean PSNR on validation phantoms at the
// sparsest view count; writes eval/tv_lambda_grid.csv.
double tune_tv_lambda(const ExperimentConfig& cfg, const Dataset& data);

MetricReport cmd_eval(const ExperimentConfig& cfg);

struct HomologyReport {
    std::size_t images = 0;
    std::size_t views = 0;
    homology::ComplexityReport complexity;  // first = residual, second = full
    std::string verdict;
    std::string swapped_verdict;
};

HomologyReport cmd_homology(const ExperimentConfig& cfg);

struct StreakReport {
    std::vector<std::size_t> counts;  // per target
    // Mean residual L2 norm over test phantoms per ladder count.
    std::vector<std::pair<std::size_t, double>> residual_energy;
};

StreakReport streak_study(const ExperimentConfig& cfg, const Dataset& data);

struct ReproduceReport {
    Dataset dataset;
    HomologyReport homology;
    std::vector<TrainSummary> training;
    MetricReport metrics;
    StreakReport streaks;
    double seconds = 0.0;
    fs::path report;
};

// dataset -> homology -> 4-way training -> eval -> report.md + manifest.json.
ReproduceReport cmd_reproduce(const ExperimentConfig& cfg);

// CSV outputs that must be byte-identical across reruns (timing excluded).
std::vector<fs::path> deterministic_csvs(const fs::path& out);

}  // namespace svct::pipeline
