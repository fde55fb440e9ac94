#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace skinbias::logreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct LRModel {
    Vector weights;
    double bias = 0.0;
    double C = 1.0;
    std::vector<std::string> feature_names;
};

struct TrainReport {
    double final_loss = 0.0;
    int iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;
    std::vector<double> loss_history;
    std::map<double, double> grid_scores;
};

struct LossGradient {
    double loss = 0.0;
    Vector grad_weights;
    double grad_bias = 0.0;
};

// Objective 0.5 * w.w + C * sum_i log(1 + exp(-t_i (w.x_i + b))) with
// t_i = 2 y_i - 1 and an unregularised bias.
LossGradient loss_and_gradient(const Vector& weights, double bias, double C, const Matrix& X, std::span<const int> y);

// log(1 + exp(z)) without overflow.
double softplus(double z);
double sigmoid(double z);

struct FitOptions {
    double tolerance = 1e-6;
    int max_iterations = 1000;
};

// Damped Newton iterations with Armijo backtracking from w = 0, b = 0.
// Throws skinbias::Error for single-class labels or a non-finite objective.
std::pair<LRModel, TrainReport> fit(const Matrix& X, std::span<const int> y, double C, const FitOptions& options = {},
                                   std::vector<std::string> feature_names = {});

std::vector<double> predict_proba(const LRModel& model, const Matrix& X);
// Checks that the column names match the model's features before predicting.
std::vector<double> predict_proba(const LRModel& model, const Matrix& X, const std::vector<std::string>& names);

struct GridSearchResult {
    double best_C = 0.0;
    std::map<double, double> grid_scores;  // mean held-out AUROC per C
    int folds_used = 0;
};

// Fold index per row. Groups (patients) never straddle folds; groups are
// stratified by whether any of their rows is positive.
std::vector<int> group_stratified_folds(std::span<const std::string> groups, std::span<const int> y, int folds,
                                        std::uint64_t seed);

// Stratified, group-aware k-fold cross-validation scored by AUROC. Ties in
// mean score resolve to the smaller C.
GridSearchResult grid_search(const Matrix& X, std::span<const int> y, std::span<const std::string> groups,
                             std::vector<double> C_grid, int folds, std::uint64_t seed,
                             const FitOptions& options = {});

std::string to_json(const LRModel& model, const TrainReport& report);

}  // namespace skinbias::logreg
