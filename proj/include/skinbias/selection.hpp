#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace skinbias::selection {

// Column-major feature table: columns[j][i] is feature names[j] of row i.
struct FeatureMatrix {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
    const std::vector<double>& column(const std::string& name) const;
    FeatureMatrix subset(const std::vector<std::string>& keep) const;
    std::vector<double> row(std::size_t i) const;
};

// Sample Pearson correlation. Throws skinbias::Error on length mismatch,
// fewer than two values, or a constant argument.
double pearson(std::span<const double> x, std::span<const double> y);

bool is_constant(std::span<const double> x);

struct SelectionResult {
    std::vector<std::string> dropped_constant;
    std::vector<std::string> dropped_redundant;
    std::vector<std::string> selected;
    std::map<std::string, double> correlation_with_label;
};

struct SelectionParams {
    double threshold = 0.8;
    int max_partners = 3;
    std::size_t top_n = 10;
};

// A feature is redundant when |r| > threshold with strictly more than
// max_partners other features, judged on the original correlation matrix.
// Constant features are dropped first and never count as partners.
SelectionResult drop_redundant(const FeatureMatrix& features, const SelectionParams& params = {});

// Ranks the surviving features by |r| against the 0/1 labels and keeps the
// first top_n; ties fall back to the order of `name_order`.
SelectionResult select_top(const FeatureMatrix& features, std::span<const int> labels, SelectionResult partial,
                           const SelectionParams& params, const std::vector<std::string>& name_order);

SelectionResult select_features(const FeatureMatrix& features, std::span<const int> labels,
                                const SelectionParams& params, const std::vector<std::string>& name_order);

std::string to_json(const SelectionResult& result);

struct Standardizer {
    std::vector<std::string> names;
    std::vector<double> mean;
    std::vector<double> std;  // population standard deviation, always > 0

    std::vector<double> apply(std::span<const double> row) const;
    FeatureMatrix apply(const FeatureMatrix& matrix) const;
};

// Fits on the given (training) rows. Constant columns are left out of the
// standardizer and reported in `dropped`.
Standardizer fit_standardizer(const FeatureMatrix& matrix, std::vector<std::string>* dropped = nullptr);

}  // namespace skinbias::selection
