#pragma once

#include "skinbias/common.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace skinbias::metrics {

struct RunKey {
    std::string model_id;  // "LR" or "CNN"
    int testset_id = 0;
    double ratio = 0.0;
    int rep = 0;

    auto operator<=>(const RunKey&) const = default;
    bool operator==(const RunKey&) const = default;
    std::string file_stem() const;  // <testset>_<ratio>_<rep>
};

struct PredictionRow {
    std::string image_id;
    std::string patient_id;
    Sex sex = Sex::female;
    int true_label = 0;
    double prob_cancer = 0.0;
};

struct PredictionSet {
    RunKey key;
    std::vector<PredictionRow> rows;
};

inline constexpr std::string_view prediction_header =
    "image_id,patient_id,sex,true_label,prob_cancer,model_id,testset_id,ratio,rep";

std::string write_predictions(const PredictionSet& set);
// Validates header, value ranges, and run-key constancy; throws
// skinbias::Error naming the file and line on the first violation.
PredictionSet parse_predictions(std::string_view text, std::string_view source = "<predictions>");
PredictionSet read_predictions(const std::filesystem::path& path);

// Fraction of rows with (prob >= threshold) == label.
double accuracy(std::span<const double> probs, std::span<const int> labels, double threshold = 0.5);

// Probability that a random positive outranks a random negative, ties
// counted as one half. Empty optional if either class is absent.
std::optional<double> auroc(std::span<const double> scores, std::span<const int> labels);

struct MetricResult {
    RunKey key;
    Sex sex = Sex::female;
    double acc = 0.0;
    std::optional<double> auroc;
    std::size_t n = 0;
};

// One result per sex present in the set.
std::vector<MetricResult> evaluate(const PredictionSet& set, double threshold = 0.5);

std::string write_metric_table(const std::vector<MetricResult>& results);
std::vector<MetricResult> parse_metric_table(std::string_view text);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation
    std::size_t count = 0;
};

MeanStd mean_std(std::span<const double> values);

struct CellKey {
    std::string model_id;
    std::string metric;  // "acc" | "auroc"
    Sex sex = Sex::female;
    auto operator<=>(const CellKey&) const = default;
};

// Mean and sample std per (model, metric, sex); missing AUROC values are
// skipped with a warning.
std::map<CellKey, MeanStd> aggregate(const std::vector<MetricResult>& results);

std::string format_summary_table(const std::map<CellKey, MeanStd>& cells);

}  // namespace skinbias::metrics
