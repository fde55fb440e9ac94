#pragma once

#include "skinbias/imaging.hpp"
#include "skinbias/segmentation.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace skinbias::features {

// Canonical feature names, in the order used for every table and tie-break.
const std::vector<std::string>& canonical_names();

// The ten features reported for the original study, used when selection is
// frozen instead of recomputed per training set.
const std::vector<std::string>& reference_selection();

class FeatureVector {
public:
    void set(const std::string& name, double value);
    double at(const std::string& name) const;
    bool has(const std::string& name) const { return values_.contains(name); }
    const std::map<std::string, double>& values() const { return values_; }
    bool operator==(const FeatureVector&) const = default;

private:
    std::map<std::string, double> values_;
};

enum class FoldAxis { vertical, horizontal, both };

struct FeatureConfig {
    int asymmetry_rotations = 8;
    double asymmetry_step_degrees = 22.5;
    FoldAxis asymmetry_axis = FoldAxis::vertical;
    segmentation::KMeansParams kmeans{};
    segmentation::SlicParams slic{};
    bool blue_veil_require_blue = false;
};

// Mean over rotations of 1 - |R ∩ mirror(R)| / |R ∪ mirror(R)| where R is the
// mask rotated about its centroid. 0 is perfectly symmetric.
double asymmetry(std::span<const std::uint8_t> mask, int width, int height, int rotations = 8,
                 double step_degrees = 22.5, FoldAxis axis = FoldAxis::vertical);

// Fold score for a single rotation angle.
double fold_score(std::span<const std::uint8_t> mask, int width, int height, double angle_degrees,
                  FoldAxis axis = FoldAxis::vertical);

double compactness(double perimeter, double area);
double compactness(const imaging::MaskGeometry& geometry);

struct HsvStats {
    double hue_mean = 0, hue_var = 0, sat_mean = 0, sat_var = 0, val_mean = 0, val_var = 0;
};

// Population statistics over lesion pixels. Hue uses the circular mean and
// the mean squared wrapped deviation from it (degrees squared).
HsvStats hsv_stats(const imaging::MaskedImage& image);

double circular_mean_degrees(std::span<const double> hues);

struct HueSummary {
    double avg_hue = 0.0;
    double dom_hue = 0.0;
};

// k-means on (H/360, S, V) of the lesion pixels; dom_hue is the hue of the
// largest cluster's centroid.
HueSummary dominant_hue(const imaging::MaskedImage& image, const segmentation::KMeansParams& params);

// Size-weighted total variance of per-segment mean RGB, segments clipped to
// the lesion.
double colour_variance(const imaging::MaskedImage& image, const segmentation::Superpixels& segments);
double colour_variance(const imaging::MaskedImage& image, const segmentation::SlicParams& params);

struct RelativeColours {
    double f1 = 0.0, f2 = 0.0, f11 = 0.0;
};

// Red/green/blue chromaticity c / (R + G + B); 1/3 each for black.
std::array<double, 3> chromaticity(double r, double g, double b);

RelativeColours relative_colours(const imaging::MaskedImage& image, const segmentation::Superpixels& segments);
RelativeColours relative_colours(const imaging::MaskedImage& image, const segmentation::SlicParams& params);

bool is_blue_veil(imaging::Rgb c, bool require_blue = false);
std::size_t blue_veil(const imaging::MaskedImage& image, bool require_blue = false);

FeatureVector extract_all(const imaging::MaskedImage& image, const FeatureConfig& config,
                          std::string_view lesion_id = {});

}  // namespace skinbias::features
