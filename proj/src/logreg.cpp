#include "skinbias/logreg.hpp"

#include "skinbias/common.hpp"
#include "skinbias/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

namespace skinbias::logreg {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace {

void check_shapes(const Vector& w, const Matrix& X, std::span<const int> y) {
    if (X.cols() != w.size()) throw Error("logreg: weight count does not match feature count");
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw Error("logreg: label count does not match rows");
}

}  // namespace

LossGradient loss_and_gradient(const Vector& weights, double bias, double C, const Matrix& X, std::span<const int> y) {
    check_shapes(weights, X, y);
    const Vector z = (X * weights).array() + bias;
    LossGradient out;
    Vector residual(X.rows());
    double data = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double t = y[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
        data += softplus(-t * z[i]);
        residual[i] = sigmoid(z[i]) - (y[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
    }
    out.loss = 0.5 * weights.squaredNorm() + C * data;
    out.grad_weights = weights + C * (X.transpose() * residual);
    out.grad_bias = C * residual.sum();
    return out;
}

std::pair<LRModel, TrainReport> fit(const Matrix& X, std::span<const int> y, double C, const FitOptions& options,
                                   std::vector<std::string> feature_names) {
    if (!(C > 0.0)) throw Error("logreg: C must be positive");
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw Error("logreg: label count does not match rows");
    const auto positives = std::count_if(y.begin(), y.end(), [](int v) { return v != 0; });
    if (positives == 0 || positives == static_cast<std::ptrdiff_t>(y.size())) {
        throw Error("logreg: training labels contain a single class");
    }
    if (!feature_names.empty() && feature_names.size() != static_cast<std::size_t>(X.cols())) {
        throw Error("logreg: feature name count does not match columns");
    }

    const Eigen::Index d = X.cols();
    const Eigen::Index n = X.rows();
    LRModel model;
    model.weights = Vector::Zero(d);
    model.C = C;
    model.feature_names = std::move(feature_names);
    TrainReport report;

    auto current = loss_and_gradient(model.weights, model.bias, C, X, y);
    for (int iter = 0;; ++iter) {
        if (!std::isfinite(current.loss)) {
            throw Error("logreg: non-finite objective at iteration " + std::to_string(iter) + " (C=" +
                        format_double(C) + ")");
        }
        report.loss_history.push_back(current.loss);
        report.gradient_norm = std::sqrt(current.grad_weights.squaredNorm() + current.grad_bias * current.grad_bias);
        report.iterations = iter;
        if (report.gradient_norm < options.tolerance) {
            report.converged = true;
            break;
        }
        if (iter >= options.max_iterations) break;

        // Hessian of the objective in (w, b).
        const Vector z = (X * model.weights).array() + model.bias;
        Vector curvature(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p = sigmoid(z[i]);
            curvature[i] = C * p * (1.0 - p);
        }
        Matrix H = Matrix::Zero(d + 1, d + 1);
        H.topLeftCorner(d, d) = X.transpose() * curvature.asDiagonal() * X;
        H.topLeftCorner(d, d).diagonal().array() += 1.0;
        const Vector xc = X.transpose() * curvature;
        H.block(0, d, d, 1) = xc;
        H.block(d, 0, 1, d) = xc.transpose();
        H(d, d) = curvature.sum() + 1e-12;

        Vector g(d + 1);
        g.head(d) = current.grad_weights;
        g[d] = current.grad_bias;
        Vector step = H.ldlt().solve(-g);
        double slope = g.dot(step);
        if (!step.allFinite() || slope >= 0.0) {
            step = -g;
            slope = -g.squaredNorm();
        }

        double t = 1.0;
        bool accepted = false;
        LossGradient trial;
        while (t > 1e-12) {
            trial = loss_and_gradient(model.weights + t * step.head(d), model.bias + t * step[d], C, X, y);
            if (std::isfinite(trial.loss) && trial.loss <= current.loss + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // Near the optimum the Armijo test can drown in rounding noise;
            // take the full step when it changes the loss by no more than that.
            trial = loss_and_gradient(model.weights + step.head(d), model.bias + step[d], C, X, y);
            const double noise = 1e-12 * std::max(1.0, std::fabs(current.loss));
            const double trial_norm = std::sqrt(trial.grad_weights.squaredNorm() + trial.grad_bias * trial.grad_bias);
            if (!(trial.loss <= current.loss + noise && trial_norm < report.gradient_norm)) break;
            t = 1.0;
        }
        model.weights += t * step.head(d);
        model.bias += t * step[d];
        current = std::move(trial);
    }
    report.final_loss = current.loss;
    if (!model.weights.allFinite() || !std::isfinite(model.bias)) throw Error("logreg: non-finite parameters");
    return {std::move(model), std::move(report)};
}

std::vector<double> predict_proba(const LRModel& model, const Matrix& X) {
    if (X.cols() != model.weights.size()) throw Error("logreg: feature count mismatch at prediction");
    const Vector z = (X * model.weights).array() + model.bias;
    std::vector<double> out(static_cast<std::size_t>(z.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) out[static_cast<std::size_t>(i)] = sigmoid(z[i]);
    return out;
}

std::vector<double> predict_proba(const LRModel& model, const Matrix& X, const std::vector<std::string>& names) {
    if (names != model.feature_names) throw Error("logreg: feature names do not match the fitted model");
    return predict_proba(model, X);
}

std::vector<int> group_stratified_folds(std::span<const std::string> groups, std::span<const int> y, int folds,
                                        std::uint64_t seed) {
    if (groups.size() != y.size()) throw Error("folds: group count does not match labels");
    std::map<std::string, bool> positive;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        auto& p = positive[groups[i]];
        p = p || y[i] != 0;
    }
    std::vector<std::string> pos, neg;
    for (const auto& [g, p] : positive) (p ? pos : neg).push_back(g);
    Rng rng(seed);
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::map<std::string, int> fold_of;
    for (std::size_t i = 0; i < pos.size(); ++i) fold_of[pos[i]] = static_cast<int>(i % folds);
    const std::size_t offset = pos.size() % static_cast<std::size_t>(folds);
    for (std::size_t i = 0; i < neg.size(); ++i) fold_of[neg[i]] = static_cast<int>((i + offset) % folds);
    std::vector<int> out(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) out[i] = fold_of[groups[i]];
    return out;
}

namespace {

Matrix take_rows(const Matrix& X, const std::vector<Eigen::Index>& idx) {
    Matrix out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
    return out;
}

bool folds_usable(const std::vector<int>& fold, std::span<const int> y, int k) {
    for (int f = 0; f < k; ++f) {
        bool test_pos = false, test_neg = false, train_pos = false, train_neg = false;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const bool in_test = fold[i] == f;
            (y[i] ? (in_test ? test_pos : train_pos) : (in_test ? test_neg : train_neg)) = true;
        }
        if (!(test_pos && test_neg && train_pos && train_neg)) return false;
    }
    return true;
}

}  // namespace

GridSearchResult grid_search(const Matrix& X, std::span<const int> y, std::span<const std::string> groups,
                             std::vector<double> C_grid, int folds, std::uint64_t seed, const FitOptions& options) {
    if (C_grid.empty()) throw Error("grid search: empty C grid");
    std::sort(C_grid.begin(), C_grid.end());
    C_grid.erase(std::unique(C_grid.begin(), C_grid.end()), C_grid.end());

    GridSearchResult result;
    if (C_grid.size() == 1) {
        result.best_C = C_grid.front();
        return result;
    }

    std::set<std::string> pos_groups, neg_groups;
    {
        std::map<std::string, bool> positive;
        for (std::size_t i = 0; i < groups.size(); ++i) positive[groups[i]] = positive[groups[i]] || y[i] != 0;
        for (const auto& [g, p] : positive) (p ? pos_groups : neg_groups).insert(g);
    }
    int k = std::min<int>(folds, static_cast<int>(std::min(pos_groups.size(), neg_groups.size())));
    if (k < folds) log_warning("grid search: reducing folds to " + std::to_string(k));
    if (k < 2) throw Error("grid search: not enough groups per class for cross-validation");

    std::vector<int> fold;
    bool ok = false;
    for (int attempt = 0; attempt < 20 && !ok; ++attempt) {
        fold = group_stratified_folds(groups, y, k, mix_seed(seed, "fold-attempt-" + std::to_string(attempt)));
        ok = folds_usable(fold, y, k);
        if (!ok) log_warning("grid search: fold with a single class, refolding");
    }
    if (!ok) throw Error("grid search: could not build folds with both classes");
    result.folds_used = k;

    double best = -1.0;
    for (double C : C_grid) {
        double total = 0.0;
        for (int f = 0; f < k; ++f) {
            std::vector<Eigen::Index> train, test;
            std::vector<int> y_train, y_test;
            for (std::size_t i = 0; i < y.size(); ++i) {
                if (fold[i] == f) {
                    test.push_back(static_cast<Eigen::Index>(i));
                    y_test.push_back(y[i]);
                } else {
                    train.push_back(static_cast<Eigen::Index>(i));
                    y_train.push_back(y[i]);
                }
            }
            const auto [model, report] = fit(take_rows(X, train), y_train, C, options);
            const auto probs = predict_proba(model, take_rows(X, test));
            total += metrics::auroc(probs, y_test).value_or(0.5);
        }
        const double mean = total / k;
        result.grid_scores[C] = mean;
        if (mean > best) {
            best = mean;
            result.best_C = C;
        }
    }
    return result;
}

std::string to_json(const LRModel& model, const TrainReport& report) {
    nlohmann::ordered_json j;
    j["feature_names"] = model.feature_names;
    std::vector<double> w(model.weights.data(), model.weights.data() + model.weights.size());
    j["weights"] = w;
    j["bias"] = model.bias;
    j["C"] = model.C;
    j["final_loss"] = report.final_loss;
    j["iterations"] = report.iterations;
    j["converged"] = report.converged;
    nlohmann::ordered_json grid = nlohmann::ordered_json::array();
    for (const auto& [c, s] : report.grid_scores) grid.push_back({{"C", c}, {"mean_auroc", s}});
    j["grid_scores"] = grid;
    return j.dump(2) + "\n";
}

}  // namespace skinbias::logreg
