#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace skinbias::imaging {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

// H in degrees [0, 360), S and V in [0, 1].
struct Hsv {
    double h = 0.0, s = 0.0, v = 0.0;
};

// Row-major RGB raster with an aligned lesion mask (nonzero = lesion).
struct MaskedImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;   // width * height * 3
    std::vector<std::uint8_t> mask;  // width * height, 0 or 1

    MaskedImage() = default;
    MaskedImage(int w, int h);

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }

    Rgb at(int x, int y) const;
    void set(int x, int y, Rgb c);
    bool in_mask(int x, int y) const { return mask[index(x, y)] != 0; }

    // Throws if buffer sizes disagree with the dimensions.
    void validate() const;

    bool operator==(const MaskedImage&) const = default;
};

Hsv rgb_to_hsv(Rgb c);
Rgb hsv_to_rgb(const Hsv& c);
std::vector<Hsv> to_hsv(const MaskedImage& image);

struct Point {
    double x = 0.0, y = 0.0;
};

struct MaskGeometry {
    std::size_t area = 0;
    std::size_t perimeter = 0;  // exposed 4-neighbour edges
    Point centroid;
};

// Throws skinbias::Error when the mask has no lesion pixels.
MaskGeometry mask_geometry(std::span<const std::uint8_t> mask, int width, int height);
MaskGeometry mask_geometry(const MaskedImage& image);

enum class Transform { horizontal_flip, vertical_flip, sharpen, gaussian_blur };

std::string_view to_string(Transform t);
Transform parse_transform(std::string_view text);
constexpr std::array<Transform, 4> all_transforms = {Transform::horizontal_flip, Transform::vertical_flip,
                                                     Transform::sharpen, Transform::gaussian_blur};

struct AugmentRanges {
    double blur_sigma_min = 0.5;
    double blur_sigma_max = 2.0;
    double sharpen_amount_min = 0.5;
    double sharpen_amount_max = 1.5;
    double sharpen_radius_sigma = 1.0;
};

// Draws the transform parameter (blur sigma or sharpen amount) from the
// configured range; flips have no parameter and return 0.
double draw_parameter(Transform t, std::uint64_t seed, const AugmentRanges& ranges);

MaskedImage gaussian_blur(const MaskedImage& image, double sigma);
MaskedImage sharpen(const MaskedImage& image, double amount, double radius_sigma);
MaskedImage flip_horizontal(const MaskedImage& image);
MaskedImage flip_vertical(const MaskedImage& image);

MaskedImage apply_transform(const MaskedImage& image, Transform t, double parameter,
                            const AugmentRanges& ranges = {});
MaskedImage augment(const MaskedImage& image, Transform t, std::uint64_t seed, const AugmentRanges& ranges = {});

// Decoding and encoding through OpenCV's codecs. Masks are read as a single
// channel; any nonzero value marks lesion.
MaskedImage load_masked_image(const std::filesystem::path& image_path, const std::filesystem::path& mask_path);
std::vector<std::uint8_t> load_rgb(const std::filesystem::path& path, int& width, int& height);
void save_rgb(const std::filesystem::path& path, std::span<const std::uint8_t> rgb, int width, int height);
void save_mask(const std::filesystem::path& path, std::span<const std::uint8_t> mask, int width, int height);

// Width/height from the PNG header when possible, otherwise a full decode.
std::pair<int, int> probe_dimensions(const std::filesystem::path& path);

}  // namespace skinbias::imaging
