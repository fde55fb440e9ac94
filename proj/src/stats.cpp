#include "skinbias/stats.hpp"

#include "skinbias/common.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace skinbias::stats {

namespace {

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
    constexpr int max_iter = 500;
    constexpr double eps = 1e-16;
    constexpr double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw Error("incomplete_beta: parameters must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double dof) {
    if (std::isinf(t)) return 0.0;
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    return incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

SlopeTest slope_t_test(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error("slope test: length mismatch");
    if (x.size() < 3) throw Error("slope test: need at least three points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0, sxy = 0, syy = 0, yy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
        yy += y[i] * y[i];
    }
    if (sxx <= 0.0) throw Error("slope test: x is constant");

    SlopeTest out;
    out.n = x.size();
    out.dof = static_cast<int>(x.size()) - 2;
    if (syy <= 1e-26 * (yy + 1.0)) {
        out.intercept = my;
        out.degenerate = true;  // flat line, nothing to test
        return out;
    }
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (out.intercept + out.slope * x[i]);
        sse += r * r;
    }
    if (sse <= 1e-24 * syy) {
        out.degenerate = true;
        out.t_statistic = std::copysign(std::numeric_limits<double>::infinity(), out.slope);
        out.p_value = 0.0;
        return out;
    }
    const double se = std::sqrt(sse / out.dof / sxx);
    out.t_statistic = out.slope / se;
    out.p_value = student_t_two_sided(out.t_statistic, out.dof);
    return out;
}

namespace {

struct Ranked {
    std::vector<double> ranks;  // pooled midranks, a first then b
    double tie_term = 0.0;      // sum of t^3 - t over tie groups
};

Ranked pooled_ranks(std::span<const double> a, std::span<const double> b) {
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::size_t n = pooled.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
    Ranked out;
    out.ranks.resize(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && pooled[order[j]] == pooled[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) out.ranks[order[k]] = mid;
        const double t = static_cast<double>(j - i);
        out.tie_term += t * t * t - t;
        i = j;
    }
    return out;
}

double u_of_first(const Ranked& r, std::size_t n1) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n1; ++i) sum += r.ranks[i];
    return sum - 0.5 * static_cast<double>(n1) * static_cast<double>(n1 + 1);
}

}  // namespace

double mann_whitney_normal_p(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw Error("Mann-Whitney: both samples must be non-empty");
    const auto r = pooled_ranks(a, b);
    const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
    const double n = n1 + n2;
    const double u = u_of_first(r, a.size());
    const double mu = 0.5 * n1 * n2;
    const double var = n1 * n2 / 12.0 * ((n + 1.0) - (n > 1.0 ? r.tie_term / (n * (n - 1.0)) : 0.0));
    if (var <= 0.0) return 1.0;
    const double z = (std::fabs(u - mu) - 0.5) / std::sqrt(var);
    return std::min(1.0, 2.0 * (1.0 - normal_cdf(z)));
}

double mann_whitney_exact_p(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw Error("Mann-Whitney: both samples must be non-empty");
    const std::size_t n1 = a.size(), n = a.size() + b.size();
    if (n > 24) throw Error("Mann-Whitney: exact enumeration limited to 24 pooled observations");
    const auto r = pooled_ranks(a, b);
    const double mu = 0.5 * static_cast<double>(n1) * static_cast<double>(n - n1);
    const double observed = std::fabs(u_of_first(r, n1) - mu);
    const double base = 0.5 * static_cast<double>(n1) * static_cast<double>(n1 + 1);
    std::uint64_t extreme = 0, total = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) != n1) continue;
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (1u << i)) sum += r.ranks[i];
        }
        ++total;
        if (std::fabs(sum - base - mu) >= observed - 1e-9) ++extreme;
    }
    return static_cast<double>(extreme) / static_cast<double>(total);
}

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b, std::size_t exact_limit) {
    if (a.empty() || b.empty()) throw Error("Mann-Whitney: both samples must be non-empty");
    MannWhitneyResult out;
    out.u = u_of_first(pooled_ranks(a, b), a.size());
    out.p_normal = mann_whitney_normal_p(a, b);
    if (a.size() + b.size() <= exact_limit) out.p_exact = mann_whitney_exact_p(a, b);
    out.p_value = out.p_exact.value_or(out.p_normal);
    return out;
}

double bonferroni(double alpha, int tests) {
    if (tests < 1) throw Error("bonferroni: need at least one test");
    return alpha / tests;
}

StatReport build_report(const std::vector<metrics::MetricResult>& results, const ReportOptions& options) {
    StatReport report;
    report.slope_threshold = bonferroni(options.alpha, options.slope_family);
    report.mwu_threshold = bonferroni(options.alpha, options.mwu_family);
    report.pooled = options.pooled;

    std::set<std::string> models;
    for (const auto& r : results) models.insert(r.key.model_id);

    auto value_of = [](const metrics::MetricResult& r, const std::string& metric) -> std::optional<double> {
        if (metric == "acc") return r.acc;
        return r.auroc;
    };

    for (const auto& model : models) {
        for (const std::string metric : {"acc", "auroc"}) {
            for (auto sex : {Sex::female, Sex::male}) {
                SlopeEntry e{model, metric, sex, std::nullopt, false, ""};
                // (testset, ratio) -> values over reps, ordered for determinism
                std::map<std::pair<int, double>, std::vector<double>> cells;
                std::size_t missing = 0;
                for (const auto& r : results) {
                    if (r.key.model_id != model || r.sex != sex) continue;
                    if (auto v = value_of(r, metric)) {
                        cells[{r.key.testset_id, r.key.ratio}].push_back(*v);
                    } else {
                        ++missing;
                    }
                }
                std::vector<double> xs, ys;
                for (const auto& [k, vs] : cells) {
                    if (options.pooled) {
                        for (double v : vs) xs.push_back(k.second), ys.push_back(v);
                    } else {
                        xs.push_back(k.second);
                        ys.push_back(std::accumulate(vs.begin(), vs.end(), 0.0) / static_cast<double>(vs.size()));
                    }
                }
                if (missing) e.note = std::to_string(missing) + " run(s) missing";
                std::set<double> distinct(xs.begin(), xs.end());
                if (xs.size() < 3 || distinct.size() < 2) {
                    e.note = e.note.empty() ? "insufficient runs" : e.note + "; insufficient runs";
                } else {
                    e.test = slope_t_test(xs, ys);
                    e.reject = e.test->p_value < report.slope_threshold;
                    if (e.test->degenerate) e.note = e.note.empty() ? "degenerate fit" : e.note + "; degenerate fit";
                }
                report.slopes.push_back(std::move(e));
            }
        }
        for (const std::string metric : {"auroc", "acc"}) {
            MwuEntry e{model, metric, std::nullopt, 0.0, 0.0, false, ""};
            std::vector<double> female, male;
            for (const auto& r : results) {
                if (r.key.model_id != model) continue;
                if (auto v = value_of(r, metric)) (r.sex == Sex::female ? female : male).push_back(*v);
            }
            if (female.empty() || male.empty()) {
                e.note = "missing subgroup";
            } else {
                e.test = mann_whitney_u(female, male);
                e.mean_female = std::accumulate(female.begin(), female.end(), 0.0) / static_cast<double>(female.size());
                e.mean_male = std::accumulate(male.begin(), male.end(), 0.0) / static_cast<double>(male.size());
                e.reject = e.test->p_value < report.mwu_threshold;
            }
            report.mann_whitney.push_back(std::move(e));
        }
    }
    return report;
}

namespace {

std::string metric_label(const std::string& m) { return m == "acc" ? "ACC" : "AUROC"; }

std::string fmt(double v, const char* spec = "%.4g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

}  // namespace

std::string format_report(const StatReport& report) {
    std::ostringstream os;
    os << "Statistical test\tThreshold\tp-value\tdecision\tdetail\n";
    os << "Regression t-test (" << (report.pooled ? "pooled runs" : "per-testset means") << ")\t"
       << fmt(report.slope_threshold, "%.5g") << "\t\t\t\n";
    for (const auto& e : report.slopes) {
        os << e.model_id << ' ' << metric_label(e.metric) << ", " << (e.sex == Sex::female ? "f" : "m") << "\t\t";
        if (e.test) {
            os << fmt(e.test->p_value) << '\t' << (e.reject ? "reject H0" : "fail to reject") << "\tslope "
               << fmt(e.test->slope) << ", t " << fmt(e.test->t_statistic) << ", dof " << e.test->dof;
        } else {
            os << "-\tmissing\t";
        }
        if (!e.note.empty()) os << " (" << e.note << ")";
        os << '\n';
    }
    os << "Mann-Whitney U test\t" << fmt(report.mwu_threshold, "%.5g") << "\t\t\t\n";
    for (const auto& e : report.mann_whitney) {
        os << e.model_id << ' ' << metric_label(e.metric) << " (f & m)\t\t";
        if (e.test) {
            os << fmt(e.test->p_value) << '\t' << (e.reject ? "reject H0" : "fail to reject") << "\tU "
               << fmt(e.test->u, "%.6g") << ", mean f " << fmt(e.mean_female) << ", mean m " << fmt(e.mean_male)
               << (e.mean_male > e.mean_female ? " (male higher)" : " (female higher or equal)");
        } else {
            os << "-\tmissing\t";
        }
        if (!e.note.empty()) os << " (" << e.note << ")";
        os << '\n';
    }
    return os.str();
}

std::string report_to_json(const StatReport& report) {
    nlohmann::ordered_json j;
    j["slope_threshold"] = report.slope_threshold;
    j["mwu_threshold"] = report.mwu_threshold;
    j["pooled"] = report.pooled;
    auto& slopes = j["slope_tests"] = nlohmann::ordered_json::array();
    for (const auto& e : report.slopes) {
        nlohmann::ordered_json s{{"model_id", e.model_id}, {"metric", e.metric}, {"sex", std::string(to_string(e.sex))}};
        if (e.test) {
            s["slope"] = e.test->slope;
            s["intercept"] = e.test->intercept;
            s["t_statistic"] = std::isfinite(e.test->t_statistic) ? nlohmann::ordered_json(e.test->t_statistic)
                                                                   : nlohmann::ordered_json(nullptr);
            s["p_value"] = e.test->p_value;
            s["dof"] = e.test->dof;
            s["degenerate"] = e.test->degenerate;
        } else {
            s["p_value"] = nullptr;
        }
        s["reject"] = e.reject;
        s["note"] = e.note;
        slopes.push_back(std::move(s));
    }
    auto& mwu = j["mann_whitney"] = nlohmann::ordered_json::array();
    for (const auto& e : report.mann_whitney) {
        nlohmann::ordered_json s{{"model_id", e.model_id}, {"metric", e.metric}};
        if (e.test) {
            s["u"] = e.test->u;
            s["p_value"] = e.test->p_value;
            s["p_normal"] = e.test->p_normal;
            s["mean_female"] = e.mean_female;
            s["mean_male"] = e.mean_male;
        } else {
            s["p_value"] = nullptr;
        }
        s["reject"] = e.reject;
        s["note"] = e.note;
        mwu.push_back(std::move(s));
    }
    return j.dump(2) + "\n";
}

}  // namespace skinbias::stats
