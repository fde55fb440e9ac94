#include "skinbias/selection.hpp"

#include "skinbias/common.hpp"

#include <algorithm>
#include <cmath>
#include "json.hpp"

namespace skinbias::selection {

const std::vector<double>& FeatureMatrix::column(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (names[j] == name) return columns[j];
    }
    throw Error("feature '" + name + "' not in matrix");
}

FeatureMatrix FeatureMatrix::subset(const std::vector<std::string>& keep) const {
    FeatureMatrix out;
    for (const auto& n : keep) {
        out.names.push_back(n);
        out.columns.push_back(column(n));
    }
    return out;
}

std::vector<double> FeatureMatrix::row(std::size_t i) const {
    std::vector<double> r;
    r.reserve(columns.size());
    for (const auto& c : columns) r.push_back(c[i]);
    return r;
}

bool is_constant(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error("pearson: length mismatch");
    if (x.size() < 2) throw Error("pearson: need at least two values");
    if (is_constant(x) || is_constant(y)) throw Error("pearson: constant input");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= n, my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy, sxx += dx * dx, syy += dy * dy;
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

SelectionResult drop_redundant(const FeatureMatrix& features, const SelectionParams& params) {
    SelectionResult out;
    std::vector<std::size_t> live;
    for (std::size_t j = 0; j < features.names.size(); ++j) {
        if (is_constant(features.columns[j])) {
            out.dropped_constant.push_back(features.names[j]);
            log_warning("dropping constant feature " + features.names[j]);
        } else {
            live.push_back(j);
        }
    }
    if (features.rows() < 2) {
        for (auto j : live) out.selected.push_back(features.names[j]);
        return out;
    }
    std::vector<int> partners(live.size(), 0);
    for (std::size_t a = 0; a < live.size(); ++a) {
        for (std::size_t b = a + 1; b < live.size(); ++b) {
            const double r = pearson(features.columns[live[a]], features.columns[live[b]]);
            if (std::fabs(r) > params.threshold) ++partners[a], ++partners[b];
        }
    }
    for (std::size_t a = 0; a < live.size(); ++a) {
        auto& dest = partners[a] > params.max_partners ? out.dropped_redundant : out.selected;
        dest.push_back(features.names[live[a]]);
    }
    return out;
}

SelectionResult select_top(const FeatureMatrix& features, std::span<const int> labels, SelectionResult partial,
                           const SelectionParams& params, const std::vector<std::string>& name_order) {
    if (labels.size() != features.rows()) throw Error("select_top: label count does not match rows");
    std::vector<double> y(labels.begin(), labels.end());
    auto excluded = [&](const std::string& n) {
        return std::find(partial.dropped_redundant.begin(), partial.dropped_redundant.end(), n) !=
                   partial.dropped_redundant.end() ||
               std::find(partial.dropped_constant.begin(), partial.dropped_constant.end(), n) !=
                   partial.dropped_constant.end();
    };
    auto rank_of = [&](const std::string& n) {
        auto it = std::find(name_order.begin(), name_order.end(), n);
        return it == name_order.end() ? name_order.size() : static_cast<std::size_t>(it - name_order.begin());
    };

    std::vector<std::pair<std::string, double>> ranked;
    for (std::size_t j = 0; j < features.names.size(); ++j) {
        const auto& n = features.names[j];
        if (excluded(n)) continue;
        if (is_constant(features.columns[j]) || is_constant(y)) continue;
        const double r = pearson(features.columns[j], y);
        partial.correlation_with_label[n] = r;
        ranked.emplace_back(n, std::fabs(r));
    }
    std::stable_sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        const auto ra = rank_of(a.first), rb = rank_of(b.first);
        if (ra != rb) return ra < rb;
        return a.first < b.first;
    });
    if (ranked.size() < params.top_n) {
        log_warning("only " + std::to_string(ranked.size()) + " features available for selection");
    }
    partial.selected.clear();
    for (std::size_t i = 0; i < ranked.size() && i < params.top_n; ++i) partial.selected.push_back(ranked[i].first);
    return partial;
}

SelectionResult select_features(const FeatureMatrix& features, std::span<const int> labels,
                                const SelectionParams& params, const std::vector<std::string>& name_order) {
    return select_top(features, labels, drop_redundant(features, params), params, name_order);
}

std::string to_json(const SelectionResult& result) {
    nlohmann::ordered_json j;
    j["dropped_constant"] = result.dropped_constant;
    j["dropped_redundant"] = result.dropped_redundant;
    j["selected"] = result.selected;
    nlohmann::ordered_json corr = nlohmann::ordered_json::object();
    for (const auto& [k, v] : result.correlation_with_label) corr[k] = v;
    j["correlation_with_label"] = corr;
    return j.dump(2) + "\n";
}

std::vector<double> Standardizer::apply(std::span<const double> row) const {
    if (row.size() != mean.size()) throw Error("standardizer: row width mismatch");
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) / std[j];
    return out;
}

FeatureMatrix Standardizer::apply(const FeatureMatrix& matrix) const {
    FeatureMatrix out;
    out.names = names;
    for (std::size_t j = 0; j < names.size(); ++j) {
        auto col = matrix.column(names[j]);
        for (auto& v : col) v = (v - mean[j]) / std[j];
        out.columns.push_back(std::move(col));
    }
    return out;
}

Standardizer fit_standardizer(const FeatureMatrix& matrix, std::vector<std::string>* dropped) {
    if (matrix.rows() == 0) throw Error("standardizer: no rows to fit");
    Standardizer s;
    for (std::size_t j = 0; j < matrix.names.size(); ++j) {
        const auto& c = matrix.columns[j];
        double m = 0.0;
        for (double v : c) m += v;
        m /= static_cast<double>(c.size());
        double var = 0.0;
        for (double v : c) var += (v - m) * (v - m);
        var /= static_cast<double>(c.size());
        if (is_constant(c) || var <= 0.0) {
            log_warning("standardizer: dropping constant feature " + matrix.names[j]);
            if (dropped) dropped->push_back(matrix.names[j]);
            continue;
        }
        s.names.push_back(matrix.names[j]);
        s.mean.push_back(m);
        s.std.push_back(std::sqrt(var));
    }
    return s;
}

}  // namespace skinbias::selection
