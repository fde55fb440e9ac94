#include "skinbias/features.hpp"

#include "skinbias/common.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace skinbias::features {

using imaging::MaskedImage;

const std::vector<std::string>& canonical_names() {
    static const std::vector<std::string> names = {
        "mean_asymmetry", "compactness_x", "hue_mean",        "hue_var",           "sat_mean",
        "sat_var",        "val_mean",      "val_var",         "avg_hue",           "dom_hue",
        "colour_variance", "avg_red_channel", "avg_green_channel", "avg_blue_channel", "F1",
        "F2",             "F11",           "blue_veil_pixels"};
    return names;
}

const std::vector<std::string>& reference_selection() {
    static const std::vector<std::string> names = {"mean_asymmetry", "compactness_x",     "sat_var", "avg_hue",
                                                   "dom_hue",        "avg_green_channel", "F1",      "F2",
                                                   "F11",            "blue_veil_pixels"};
    return names;
}

void FeatureVector::set(const std::string& name, double value) { values_[name] = value; }

double FeatureVector::at(const std::string& name) const {
    auto it = values_.find(name);
    if (it == values_.end()) throw Error("feature '" + name + "' not present");
    return it->second;
}

namespace {

// Nearest pixel index, with exact half-way cases resolved toward the centre
// so that the sampling pattern is mirror symmetric about it.
int nearest_toward(double x, double centre) {
    const double snapped = std::round(2.0 * x) / 2.0;
    if (std::fabs(x - snapped) < 1e-9) x = snapped;
    return x > centre ? static_cast<int>(std::ceil(x - 0.5)) : static_cast<int>(std::floor(x + 0.5));
}

double iou_score(const std::vector<std::uint8_t>& grid, int size, bool mirror_x) {
    std::size_t inter = 0, uni = 0;
    for (int v = 0; v < size; ++v) {
        for (int u = 0; u < size; ++u) {
            const int mu = mirror_x ? size - 1 - u : u;
            const int mv = mirror_x ? v : size - 1 - v;
            const bool a = grid[static_cast<std::size_t>(v) * size + u] != 0;
            const bool b = grid[static_cast<std::size_t>(mv) * size + mu] != 0;
            inter += a && b;
            uni += a || b;
        }
    }
    return uni == 0 ? 0.0 : 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double fold_score(std::span<const std::uint8_t> mask, int width, int height, double angle_degrees, FoldAxis axis) {
    const auto geo = imaging::mask_geometry(mask, width, height);
    const double cx = geo.centroid.x, cy = geo.centroid.y;
    double max_r2 = 0.0;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (!mask[static_cast<std::size_t>(y) * width + x]) continue;
            max_r2 = std::max(max_r2, (x - cx) * (x - cx) + (y - cy) * (y - cy));
        }
    }
    const int radius = static_cast<int>(std::ceil(std::sqrt(max_r2))) + 1;
    const int size = 2 * radius + 1;
    const double theta = angle_degrees * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);

    std::vector<std::uint8_t> grid(static_cast<std::size_t>(size) * size, 0);
    for (int v = -radius; v <= radius; ++v) {
        for (int u = -radius; u <= radius; ++u) {
            const int x = nearest_toward(cx + u * c + v * s, cx);
            const int y = nearest_toward(cy - u * s + v * c, cy);
            if (x < 0 || y < 0 || x >= width || y >= height) continue;
            grid[static_cast<std::size_t>(v + radius) * size + (u + radius)] =
                mask[static_cast<std::size_t>(y) * width + x] != 0;
        }
    }
    switch (axis) {
        case FoldAxis::vertical: return iou_score(grid, size, true);
        case FoldAxis::horizontal: return iou_score(grid, size, false);
        case FoldAxis::both: return 0.5 * (iou_score(grid, size, true) + iou_score(grid, size, false));
    }
    return 0.0;
}

double asymmetry(std::span<const std::uint8_t> mask, int width, int height, int rotations, double step_degrees,
                 FoldAxis axis) {
    if (rotations < 1) throw Error("asymmetry needs at least one rotation");
    double total = 0.0;
    for (int k = 0; k < rotations; ++k) total += fold_score(mask, width, height, k * step_degrees, axis);
    return total / rotations;
}

double compactness(double perimeter, double area) {
    if (area <= 0.0) throw Error("compactness needs a positive area");
    return perimeter * perimeter / (4.0 * std::numbers::pi * area);
}

double compactness(const imaging::MaskGeometry& geometry) {
    return compactness(static_cast<double>(geometry.perimeter), static_cast<double>(geometry.area));
}

double circular_mean_degrees(std::span<const double> hues) {
    if (hues.empty()) return 0.0;
    // Angles are taken relative to the first hue so identical inputs give
    // that hue back exactly.
    const double ref = hues[0];
    double sx = 0.0, sy = 0.0;
    for (double h : hues) {
        const double r = (h - ref) * std::numbers::pi / 180.0;
        sx += std::cos(r);
        sy += std::sin(r);
    }
    if (std::fabs(sx) < 1e-12 && std::fabs(sy) < 1e-12) return 0.0;
    double deg = ref + std::atan2(sy, sx) * 180.0 / std::numbers::pi;
    if (deg < 0.0) deg += 360.0;
    if (deg < 0.0) deg += 360.0;
    if (deg >= 360.0) deg -= 360.0;
    return deg;
}

namespace {

std::vector<imaging::Hsv> lesion_hsv(const MaskedImage& image) {
    image.validate();
    std::vector<imaging::Hsv> out;
    for (std::size_t i = 0; i < image.pixel_count(); ++i) {
        if (!image.mask[i]) continue;
        out.push_back(imaging::rgb_to_hsv({image.rgb[3 * i], image.rgb[3 * i + 1], image.rgb[3 * i + 2]}));
    }
    if (out.empty()) throw Error("empty lesion mask: feature extraction impossible");
    return out;
}

// Two-pass population statistics, shifted by the first value.
std::pair<double, double> mean_var(const std::vector<double>& xs) {
    const double ref = xs[0];
    const double n = static_cast<double>(xs.size());
    double m = 0.0;
    for (double x : xs) m += x - ref;
    m /= n;
    double v = 0.0;
    for (double x : xs) v += (x - ref - m) * (x - ref - m);
    return {ref + m, v / n};
}

double wrapped_difference(double a, double b) {
    double d = std::fmod(a - b, 360.0);
    if (d > 180.0) d -= 360.0;
    if (d <= -180.0) d += 360.0;
    return d;
}

}  // namespace

HsvStats hsv_stats(const MaskedImage& image) {
    const auto px = lesion_hsv(image);
    std::vector<double> h, s, v;
    h.reserve(px.size()), s.reserve(px.size()), v.reserve(px.size());
    for (const auto& p : px) h.push_back(p.h), s.push_back(p.s), v.push_back(p.v);
    HsvStats out;
    out.hue_mean = circular_mean_degrees(h);
    double hv = 0.0;
    for (double x : h) {
        const double d = wrapped_difference(x, out.hue_mean);
        hv += d * d;
    }
    out.hue_var = hv / static_cast<double>(h.size());
    std::tie(out.sat_mean, out.sat_var) = mean_var(s);
    std::tie(out.val_mean, out.val_var) = mean_var(v);
    return out;
}

HueSummary dominant_hue(const MaskedImage& image, const segmentation::KMeansParams& params) {
    const auto px = lesion_hsv(image);
    std::vector<std::array<double, 3>> points;
    std::vector<double> hues;
    points.reserve(px.size());
    for (const auto& p : px) {
        points.push_back({p.h / 360.0, p.s, p.v});
        hues.push_back(p.h);
    }
    const auto km = segmentation::kmeans(points, params);
    std::size_t largest = 0;
    for (std::size_t c = 1; c < km.sizes.size(); ++c) {
        if (km.sizes[c] > km.sizes[largest]) largest = c;
    }
    return {circular_mean_degrees(hues), km.centroids[largest][0] * 360.0};
}

namespace {

struct SegmentColour {
    double r = 0, g = 0, b = 0;
    std::size_t n = 0;
};

// Mean lesion colour per superpixel, dropping superpixels with no lesion
// pixels. A lesion smaller than one seed cell is treated as one segment.
std::vector<SegmentColour> lesion_segments(const MaskedImage& image, const segmentation::Superpixels& seg) {
    image.validate();
    if (seg.labels.size() != image.pixel_count()) throw Error("superpixel labels do not match image");
    std::size_t area = 0;
    for (auto m : image.mask) area += m != 0;
    if (area == 0) throw Error("empty lesion mask: feature extraction impossible");

    const bool single = area < static_cast<std::size_t>(seg.step) * static_cast<std::size_t>(seg.step);
    std::vector<SegmentColour> acc(single ? 1 : static_cast<std::size_t>(std::max(seg.count, 1)));
    for (std::size_t i = 0; i < image.pixel_count(); ++i) {
        if (!image.mask[i]) continue;
        auto& s = acc[single ? 0 : static_cast<std::size_t>(seg.labels[i])];
        s.r += image.rgb[3 * i], s.g += image.rgb[3 * i + 1], s.b += image.rgb[3 * i + 2];
        ++s.n;
    }
    std::vector<SegmentColour> out;
    for (auto& s : acc) {
        if (s.n == 0) continue;
        const double n = static_cast<double>(s.n);
        out.push_back({s.r / n, s.g / n, s.b / n, s.n});
    }
    return out;
}

}  // namespace

double colour_variance(const MaskedImage& image, const segmentation::Superpixels& segments) {
    const auto segs = lesion_segments(image, segments);
    double total = 0.0, mr = 0.0, mg = 0.0, mb = 0.0;
    for (const auto& s : segs) {
        const double w = static_cast<double>(s.n);
        total += w, mr += w * s.r, mg += w * s.g, mb += w * s.b;
    }
    mr /= total, mg /= total, mb /= total;
    double var = 0.0;
    for (const auto& s : segs) {
        const double w = static_cast<double>(s.n);
        var += w * ((s.r - mr) * (s.r - mr) + (s.g - mg) * (s.g - mg) + (s.b - mb) * (s.b - mb));
    }
    return var / total;
}

double colour_variance(const MaskedImage& image, const segmentation::SlicParams& params) {
    return colour_variance(image, segmentation::slic(image, params));
}

std::array<double, 3> chromaticity(double r, double g, double b) {
    const double sum = r + g + b;
    if (sum <= 0.0) return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    return {r / sum, g / sum, b / sum};
}

RelativeColours relative_colours(const MaskedImage& image, const segmentation::Superpixels& segments) {
    const auto segs = lesion_segments(image, segments);
    RelativeColours out;
    for (const auto& s : segs) {
        const auto c = chromaticity(s.r, s.g, s.b);
        out.f1 += c[0];
        out.f2 += c[1];
    }
    out.f1 /= static_cast<double>(segs.size());
    out.f2 /= static_cast<double>(segs.size());

    double skin = 0.0, lesion = 0.0;
    std::size_t n_skin = 0, n_lesion = 0;
    for (std::size_t i = 0; i < image.pixel_count(); ++i) {
        const double red = chromaticity(image.rgb[3 * i], image.rgb[3 * i + 1], image.rgb[3 * i + 2])[0];
        if (image.mask[i]) {
            lesion += red, ++n_lesion;
        } else {
            skin += red, ++n_skin;
        }
    }
    if (n_skin == 0) throw Error("lesion covers the whole image: no skin pixels for relative colour");
    out.f11 = skin / static_cast<double>(n_skin) - lesion / static_cast<double>(n_lesion);
    return out;
}

RelativeColours relative_colours(const MaskedImage& image, const segmentation::SlicParams& params) {
    return relative_colours(image, segmentation::slic(image, params));
}

bool is_blue_veil(imaging::Rgb c, bool require_blue) {
    const int r = c.r, g = c.g, b = c.b;
    const bool rule = r > 60 && r - 46 < g && g < r + 15;
    return require_blue ? rule && b > r : rule;
}

std::size_t blue_veil(const MaskedImage& image, bool require_blue) {
    image.validate();
    std::size_t count = 0;
    for (std::size_t i = 0; i < image.pixel_count(); ++i) {
        if (!image.mask[i]) continue;
        count += is_blue_veil({image.rgb[3 * i], image.rgb[3 * i + 1], image.rgb[3 * i + 2]}, require_blue);
    }
    return count;
}

FeatureVector extract_all(const MaskedImage& image, const FeatureConfig& config, std::string_view lesion_id) {
    try {
        image.validate();
        const auto geo = imaging::mask_geometry(image);
        FeatureVector fv;
        fv.set("mean_asymmetry", asymmetry(image.mask, image.width, image.height, config.asymmetry_rotations,
                                           config.asymmetry_step_degrees, config.asymmetry_axis));
        fv.set("compactness_x", compactness(geo));

        const auto hsv = hsv_stats(image);
        fv.set("hue_mean", hsv.hue_mean);
        fv.set("hue_var", hsv.hue_var);
        fv.set("sat_mean", hsv.sat_mean);
        fv.set("sat_var", hsv.sat_var);
        fv.set("val_mean", hsv.val_mean);
        fv.set("val_var", hsv.val_var);

        const auto hue = dominant_hue(image, config.kmeans);
        fv.set("avg_hue", hue.avg_hue);
        fv.set("dom_hue", hue.dom_hue);

        const auto segments = segmentation::slic(image, config.slic);
        fv.set("colour_variance", colour_variance(image, segments));

        double r = 0, g = 0, b = 0;
        for (std::size_t i = 0; i < image.pixel_count(); ++i) {
            if (!image.mask[i]) continue;
            r += image.rgb[3 * i], g += image.rgb[3 * i + 1], b += image.rgb[3 * i + 2];
        }
        const double area = static_cast<double>(geo.area);
        fv.set("avg_red_channel", r / area);
        fv.set("avg_green_channel", g / area);
        fv.set("avg_blue_channel", b / area);

        const auto rel = relative_colours(image, segments);
        fv.set("F1", rel.f1);
        fv.set("F2", rel.f2);
        fv.set("F11", rel.f11);
        fv.set("blue_veil_pixels", static_cast<double>(blue_veil(image, config.blue_veil_require_blue)));

        for (const auto& [name, value] : fv.values()) {
            if (!std::isfinite(value)) throw Error("feature " + name + " is not finite");
        }
        return fv;
    } catch (const Error& e) {
        if (lesion_id.empty()) throw;
        throw Error("lesion " + std::string(lesion_id) + ": " + e.what());
    }
}

}  // namespace skinbias::features
