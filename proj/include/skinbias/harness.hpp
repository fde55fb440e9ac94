#pragma once

#include "skinbias/dataset.hpp"
#include "skinbias/features.hpp"
#include "skinbias/metrics.hpp"
#include "skinbias/selection.hpp"
#include "skinbias/splits.hpp"
#include "skinbias/stats.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace skinbias::harness {

namespace fs = std::filesystem;

// Bad configuration or command line; the CLI maps it to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

struct RunConfig {
    fs::path metadata;
    fs::path images;
    fs::path masks;
    fs::path output = "out";
    fs::path corrections;  // optional correction manifest applied at ingest

    std::uint64_t master_seed = 20250101;
    std::vector<double> ratios = {0.0, 0.25, 0.5, 0.75, 1.0};
    int reps = 5;
    int testsets = 5;
    int per_category = 26;
    std::optional<std::size_t> sample_size;
    bool balance_classes = true;
    unsigned workers = 0;

    std::vector<double> C_grid = {0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0};
    int folds = 5;
    double tolerance = 1e-6;
    int max_iterations = 1000;

    features::FeatureConfig features{};
    imaging::AugmentRanges augment{};
    selection::SelectionParams selection{};
    bool freeze_paper_features = false;

    double alpha = 0.05;
    bool pooled_slope_test = true;
    int slope_family = 8;
    int mwu_family = 4;

    dataset::MissingSexPolicy missing_sex = dataset::MissingSexPolicy::drop_patient;
    std::vector<std::string> mask_patterns = dataset::IngestOptions{}.mask_patterns;

    bool force = false;  // recompute outputs that already exist
};

// INI-style file: [section] headers and key = value lines. Relative paths
// resolve against the config file's directory. Unknown keys are errors.
RunConfig load_config(const fs::path& path);
RunConfig parse_config(std::string_view text, const fs::path& base_dir = {});
// SKINBIAS_METADATA, SKINBIAS_IMAGES, SKINBIAS_MASKS, SKINBIAS_OUT.
void apply_env_overrides(RunConfig& config);
std::string config_help();

struct JobRecord {
    std::string stage;
    std::string key;
    std::string status;  // ok | skipped | failed
    std::uint64_t seed = 0;
    double seconds = 0.0;
    std::vector<std::string> artifacts;
    std::string error;
};

class RunLedger {
public:
    void add(JobRecord job);
    bool failed() const;
    std::vector<JobRecord> jobs() const;
    std::string to_json(const RunConfig& config) const;

private:
    mutable std::mutex mutex_;
    std::vector<JobRecord> jobs_;
};

// Feature rows keyed by image id.
using FeatureTable = std::map<std::string, features::FeatureVector>;

struct FeatureRow {
    dataset::LesionRecord record;
    std::optional<splits::AugmentedCopy> copy;  // set for augmented rows
    features::FeatureVector values;
};

// One row per lesion: identifying columns, then the canonical feature names.
std::string write_feature_table(const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> parse_feature_table(std::string_view text, std::string_view source = "<features>");

struct Paths {
    fs::path root;
    fs::path features() const { return root / "features.csv"; }
    fs::path augmented_features() const { return root / "features_augmented.csv"; }
    fs::path manifest() const { return root / "split_manifest.json"; }
    fs::path predictions() const { return root / "predictions"; }
    fs::path runs() const { return root / "runs"; }
    fs::path metrics() const { return root / "metrics.csv"; }
    fs::path summary() const { return root / "summary.txt"; }
    fs::path stats_text() const { return root / "stats.txt"; }
    fs::path stats_json() const { return root / "stats.json"; }
    fs::path plots() const { return root / "plots"; }
    fs::path ledger() const { return root / "ledger.json"; }
    fs::path audit() const { return root / "audit.txt"; }
    fs::path audit_corrections() const { return root / "audit_corrections.csv"; }
    fs::path dataset_summary() const { return root / "dataset_summary.txt"; }
    fs::path cleaned_metadata() const { return root / "metadata_clean.csv"; }
};

class Pipeline {
public:
    explicit Pipeline(RunConfig config);

    const RunConfig& config() const { return config_; }
    const Paths& paths() const { return paths_; }
    RunLedger& ledger() { return ledger_; }

    dataset::AuditResult audit();
    std::vector<dataset::LesionRecord> ingest();
    // Features for every cleaned lesion; lesions whose extraction fails are
    // dropped with a warning and a failed ledger entry.
    FeatureTable extract();
    splits::SplitPlan split();
    // One job per trainval sample; existing prediction files are kept unless
    // config.force is set.
    void train_lr();
    // Reads every prediction file below out/predictions and the extra
    // directories, then writes metrics.csv.
    std::vector<metrics::MetricResult> evaluate(const std::vector<fs::path>& extra_dirs = {});
    stats::StatReport stats();
    void report();
    void run_all();

    void write_ledger() const;

private:
    FeatureTable load_or_extract_features(const std::vector<dataset::LesionRecord>& records);
    FeatureTable augmented_features(const splits::SplitPlan& plan);
    void run_job(const splits::SplitPlan& plan, const splits::TrainvalSample& sample, const FeatureTable& base,
                 const FeatureTable& augmented);
    void require_dataset_paths(bool masks) const;

    RunConfig config_;
    Paths paths_;
    RunLedger ledger_;
    std::optional<std::vector<dataset::LesionRecord>> records_;
    std::optional<FeatureTable> features_;
    std::optional<splits::SplitPlan> plan_;
};

// Result of checking prediction files without computing metrics.
struct ValidationIssue {
    fs::path file;
    std::string message;
};

// Schema checks on every *.csv below each directory (recursively); with a
// plan, also checks that each file lists every lesion of its test set once.
std::vector<ValidationIssue> validate_predictions(const std::vector<fs::path>& dirs,
                                                  const splits::SplitPlan* plan = nullptr);

std::vector<fs::path> prediction_files(const std::vector<fs::path>& dirs);

// One SVG scatter panel per (model, sex) with the fitted regression line.
// Returns the written files.
std::vector<fs::path> emit_plots(const std::vector<metrics::MetricResult>& results, const fs::path& dir);
std::string render_panel(const std::vector<metrics::MetricResult>& results, const std::string& model_id, Sex sex);

std::string coverage_summary(const std::vector<metrics::MetricResult>& results);

}  // namespace skinbias::harness
