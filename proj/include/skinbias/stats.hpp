#pragma once

#include "skinbias/metrics.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace skinbias::stats {

// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
// Two-sided tail probability P(|T| >= |t|) for Student's t with dof degrees.
double student_t_two_sided(double t, double dof);
double normal_cdf(double z);

struct SlopeTest {
    double slope = 0.0;
    double intercept = 0.0;
    double t_statistic = 0.0;
    double p_value = 1.0;
    int dof = 0;
    std::size_t n = 0;
    bool degenerate = false;  // zero residual variance
};

// OLS of y on x with a two-sided t test of H0: slope = 0.
SlopeTest slope_t_test(std::span<const double> x, std::span<const double> y);

struct MannWhitneyResult {
    double u = 0.0;  // statistic of the first sample
    double p_value = 1.0;  // exact when available, otherwise p_normal
    double p_normal = 1.0;
    std::optional<double> p_exact;
};

// Midrank U statistic. The normal approximation uses tie-corrected variance
// and a 0.5 continuity correction; exact enumeration over all relabelings is
// used when the pooled size is at most `exact_limit`.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b, std::size_t exact_limit = 16);

// Exact two-sided permutation p for the U statistic.
double mann_whitney_exact_p(std::span<const double> a, std::span<const double> b);
double mann_whitney_normal_p(std::span<const double> a, std::span<const double> b);

double bonferroni(double alpha, int tests);

struct ReportOptions {
    double alpha = 0.05;
    int slope_family = 8;  // sex x model x metric
    int mwu_family = 4;    // model x metric
    bool pooled = true;    // false: average reps within (testset, ratio) first
};

struct SlopeEntry {
    std::string model_id;
    std::string metric;
    Sex sex = Sex::female;
    std::optional<SlopeTest> test;
    bool reject = false;
    std::string note;
};

struct MwuEntry {
    std::string model_id;
    std::string metric;
    std::optional<MannWhitneyResult> test;
    double mean_female = 0.0;
    double mean_male = 0.0;
    bool reject = false;
    std::string note;
};

struct StatReport {
    double slope_threshold = 0.0;
    double mwu_threshold = 0.0;
    bool pooled = true;
    std::vector<SlopeEntry> slopes;
    std::vector<MwuEntry> mann_whitney;
};

StatReport build_report(const std::vector<metrics::MetricResult>& results, const ReportOptions& options = {});

std::string format_report(const StatReport& report);
std::string report_to_json(const StatReport& report);

}  // namespace skinbias::stats
