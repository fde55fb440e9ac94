#include "skinbias/imaging.hpp"

#include "skinbias/common.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace skinbias::imaging {

MaskedImage::MaskedImage(int w, int h)
    : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0), mask(static_cast<std::size_t>(w) * h, 0) {}

Rgb MaskedImage::at(int x, int y) const {
    const auto i = index(x, y) * 3;
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

void MaskedImage::set(int x, int y, Rgb c) {
    const auto i = index(x, y) * 3;
    rgb[i] = c.r;
    rgb[i + 1] = c.g;
    rgb[i + 2] = c.b;
}

void MaskedImage::validate() const {
    if (width <= 0 || height <= 0) throw Error("image has non-positive dimensions");
    if (rgb.size() != pixel_count() * 3) throw Error("rgb buffer does not match image dimensions");
    if (mask.size() != pixel_count()) throw Error("mask buffer does not match image dimensions");
}

Hsv rgb_to_hsv(Rgb c) {
    const double r = c.r / 255.0, g = c.g / 255.0, b = c.b / 255.0;
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;
    Hsv out;
    out.v = mx;
    out.s = mx > 0.0 ? delta / mx : 0.0;
    if (delta <= 0.0) {
        out.h = 0.0;  // grey: hue fixed at 0
        return out;
    }
    double h;
    if (mx == r) {
        h = 60.0 * std::fmod((g - b) / delta, 6.0);
    } else if (mx == g) {
        h = 60.0 * ((b - r) / delta + 2.0);
    } else {
        h = 60.0 * ((r - g) / delta + 4.0);
    }
    if (h < 0.0) h += 360.0;
    if (h >= 360.0) h -= 360.0;
    out.h = h;
    return out;
}

Rgb hsv_to_rgb(const Hsv& c) {
    const double chroma = c.v * c.s;
    const double hp = std::fmod(c.h, 360.0) / 60.0;
    const double x = chroma * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
        case 0: r = chroma, g = x; break;
        case 1: r = x, g = chroma; break;
        case 2: g = chroma, b = x; break;
        case 3: g = x, b = chroma; break;
        case 4: r = x, b = chroma; break;
        default: r = chroma, b = x; break;
    }
    const double m = c.v - chroma;
    auto to_byte = [](double v) {
        return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
    };
    return {to_byte(r + m), to_byte(g + m), to_byte(b + m)};
}

std::vector<Hsv> to_hsv(const MaskedImage& image) {
    std::vector<Hsv> out(image.pixel_count());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = rgb_to_hsv({image.rgb[3 * i], image.rgb[3 * i + 1], image.rgb[3 * i + 2]});
    }
    return out;
}

MaskGeometry mask_geometry(std::span<const std::uint8_t> mask, int width, int height) {
    if (mask.size() != static_cast<std::size_t>(width) * height) throw Error("mask size does not match dimensions");
    MaskGeometry g;
    double sx = 0.0, sy = 0.0;
    auto on = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < width && y < height && mask[static_cast<std::size_t>(y) * width + x] != 0;
    };
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (!on(x, y)) continue;
            ++g.area;
            sx += x;
            sy += y;
            g.perimeter += !on(x - 1, y) + !on(x + 1, y) + !on(x, y - 1) + !on(x, y + 1);
        }
    }
    if (g.area == 0) throw Error("empty lesion mask: feature extraction impossible");
    g.centroid = {sx / static_cast<double>(g.area), sy / static_cast<double>(g.area)};
    return g;
}

MaskGeometry mask_geometry(const MaskedImage& image) { return mask_geometry(image.mask, image.width, image.height); }

std::string_view to_string(Transform t) {
    switch (t) {
        case Transform::horizontal_flip: return "horizontal_flip";
        case Transform::vertical_flip: return "vertical_flip";
        case Transform::sharpen: return "sharpen";
        case Transform::gaussian_blur: return "gaussian_blur";
    }
    return "unknown";
}

Transform parse_transform(std::string_view text) {
    for (auto t : all_transforms) {
        if (to_string(t) == text) return t;
    }
    throw Error("unknown augmentation transform '" + std::string(text) + "'");
}

double draw_parameter(Transform t, std::uint64_t seed, const AugmentRanges& ranges) {
    Rng rng(seed);
    switch (t) {
        case Transform::gaussian_blur: return rng.uniform(ranges.blur_sigma_min, ranges.blur_sigma_max);
        case Transform::sharpen: return rng.uniform(ranges.sharpen_amount_min, ranges.sharpen_amount_max);
        default: return 0.0;
    }
}

namespace {

int reflect101(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

// Separable Gaussian on all three channels, kept in floating point.
std::vector<double> blur_channels(const MaskedImage& image, double sigma) {
    const int w = image.width, h = image.height;
    std::vector<double> src(image.rgb.begin(), image.rgb.end());
    if (sigma <= 0.0) return src;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
        sum += kernel[k + radius];
    }
    for (auto& k : kernel) k /= sum;

    std::vector<double> tmp(src.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    acc += kernel[k + radius] * src[(static_cast<std::size_t>(y) * w + reflect101(x + k, w)) * 3 + c];
                }
                tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
            }
        }
    }
    std::vector<double> out(src.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    acc += kernel[k + radius] * tmp[(static_cast<std::size_t>(reflect101(y + k, h)) * w + x) * 3 + c];
                }
                out[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
            }
        }
    }
    return out;
}

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

MaskedImage gaussian_blur(const MaskedImage& image, double sigma) {
    image.validate();
    MaskedImage out = image;
    const auto blurred = blur_channels(image, sigma);
    for (std::size_t i = 0; i < blurred.size(); ++i) out.rgb[i] = clamp_byte(blurred[i]);
    return out;
}

MaskedImage sharpen(const MaskedImage& image, double amount, double radius_sigma) {
    image.validate();
    MaskedImage out = image;
    const auto blurred = blur_channels(image, radius_sigma);
    for (std::size_t i = 0; i < blurred.size(); ++i) {
        const double v = image.rgb[i];
        out.rgb[i] = clamp_byte(v + amount * (v - blurred[i]));
    }
    return out;
}

MaskedImage flip_horizontal(const MaskedImage& image) {
    image.validate();
    MaskedImage out(image.width, image.height);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const int sx = image.width - 1 - x;
            out.set(x, y, image.at(sx, y));
            out.mask[out.index(x, y)] = image.mask[image.index(sx, y)];
        }
    }
    return out;
}

MaskedImage flip_vertical(const MaskedImage& image) {
    image.validate();
    MaskedImage out(image.width, image.height);
    for (int y = 0; y < image.height; ++y) {
        const int sy = image.height - 1 - y;
        for (int x = 0; x < image.width; ++x) {
            out.set(x, y, image.at(x, sy));
            out.mask[out.index(x, y)] = image.mask[image.index(x, sy)];
        }
    }
    return out;
}

MaskedImage apply_transform(const MaskedImage& image, Transform t, double parameter, const AugmentRanges& ranges) {
    switch (t) {
        case Transform::horizontal_flip: return flip_horizontal(image);
        case Transform::vertical_flip: return flip_vertical(image);
        case Transform::sharpen: return sharpen(image, parameter, ranges.sharpen_radius_sigma);
        case Transform::gaussian_blur: return gaussian_blur(image, parameter);
    }
    throw Error("unhandled transform");
}

MaskedImage augment(const MaskedImage& image, Transform t, std::uint64_t seed, const AugmentRanges& ranges) {
    return apply_transform(image, t, draw_parameter(t, seed, ranges), ranges);
}

std::vector<std::uint8_t> load_rgb(const std::filesystem::path& path, int& width, int& height) {
    if (!std::filesystem::exists(path)) throw Error("image file not found: " + path.string());
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw Error("cannot decode image: " + path.string());
    width = bgr.cols;
    height = bgr.rows;
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3);
    for (int y = 0; y < height; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < width; ++x) {
            const auto i = (static_cast<std::size_t>(y) * width + x) * 3;
            rgb[i] = row[x][2];
            rgb[i + 1] = row[x][1];
            rgb[i + 2] = row[x][0];
        }
    }
    return rgb;
}

MaskedImage load_masked_image(const std::filesystem::path& image_path, const std::filesystem::path& mask_path) {
    MaskedImage out;
    out.rgb = load_rgb(image_path, out.width, out.height);
    if (!std::filesystem::exists(mask_path)) throw Error("mask file not found: " + mask_path.string());
    cv::Mat m = cv::imread(mask_path.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw Error("cannot decode mask: " + mask_path.string());
    if (m.cols != out.width || m.rows != out.height) {
        throw Error("image/mask dimension mismatch: " + image_path.filename().string() + " vs " +
                    mask_path.filename().string());
    }
    out.mask.resize(out.pixel_count());
    for (int y = 0; y < out.height; ++y) {
        const auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < out.width; ++x) out.mask[out.index(x, y)] = row[x] != 0 ? 1 : 0;
    }
    return out;
}

void save_rgb(const std::filesystem::path& path, std::span<const std::uint8_t> rgb, int width, int height) {
    cv::Mat bgr(height, width, CV_8UC3);
    for (int y = 0; y < height; ++y) {
        auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < width; ++x) {
            const auto i = (static_cast<std::size_t>(y) * width + x) * 3;
            row[x] = cv::Vec3b(rgb[i + 2], rgb[i + 1], rgb[i]);
        }
    }
    if (!cv::imwrite(path.string(), bgr)) throw Error("cannot write image " + path.string());
}

void save_mask(const std::filesystem::path& path, std::span<const std::uint8_t> mask, int width, int height) {
    cv::Mat m(height, width, CV_8UC1);
    for (int y = 0; y < height; ++y) {
        auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < width; ++x) row[x] = mask[static_cast<std::size_t>(y) * width + x] ? 255 : 0;
    }
    if (!cv::imwrite(path.string(), m)) throw Error("cannot write mask " + path.string());
}

std::pair<int, int> probe_dimensions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("file not found: " + path.string());
    unsigned char header[24] = {};
    in.read(reinterpret_cast<char*>(header), sizeof header);
    static constexpr unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (in.gcount() == 24 && std::equal(png_sig, png_sig + 8, header)) {
        auto be32 = [&](int off) {
            return static_cast<int>((header[off] << 24) | (header[off + 1] << 16) | (header[off + 2] << 8) |
                                    header[off + 3]);
        };
        return {be32(16), be32(20)};
    }
    int w = 0, h = 0;
    load_rgb(path, w, h);
    return {w, h};
}

}  // namespace skinbias::imaging
