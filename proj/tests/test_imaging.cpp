#include "skinbias/imaging.hpp"

#include "skinbias/common.hpp"

#include "cohort.hpp"
#include "doctest.h"

#include <cmath>
#include <numbers>

using namespace skinbias;
using namespace skinbias::imaging;

namespace {

MaskedImage disk_image(int r, int pad = 3) {
    const int n = 2 * r + 1 + 2 * pad;
    MaskedImage img(n, n);
    const int c = n / 2;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const bool in = (x - c) * (x - c) + (y - c) * (y - c) <= r * r;
            img.mask[img.index(x, y)] = in;
            img.set(x, y, in ? Rgb{120, 70, 50} : Rgb{210, 170, 150});
        }
    }
    return img;
}

MaskedImage random_image(int w, int h, std::uint64_t seed) {
    MaskedImage img(w, h);
    Rng rng(seed);
    for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng.below(256));
    for (auto& m : img.mask) m = rng.uniform() < 0.4;
    img.mask[0] = 1;
    return img;
}

}  // namespace

TEST_SUITE("imaging") {

TEST_CASE("rgb_to_hsv reference colours") {
    auto red = rgb_to_hsv({255, 0, 0});
    CHECK(red.h == 0.0);
    CHECK(red.s == 1.0);
    CHECK(red.v == 1.0);
    auto grey = rgb_to_hsv({128, 128, 128});
    CHECK(grey.h == 0.0);
    CHECK(grey.s == 0.0);
    CHECK(grey.v == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
    auto blue = rgb_to_hsv({0, 0, 255});
    CHECK(blue.h == 240.0);
    CHECK(blue.s == 1.0);
    CHECK(blue.v == 1.0);
    CHECK(rgb_to_hsv({0, 255, 0}).h == 120.0);
    CHECK(rgb_to_hsv({255, 0, 128}).h == doctest::Approx(360.0 - 128.0 / 255.0 * 60.0));
}

TEST_CASE("hsv round trip within one level") {
    Rng rng(11);
    for (int i = 0; i < 5000; ++i) {
        const Rgb c{static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
                    static_cast<std::uint8_t>(rng.below(256))};
        const auto hsv = rgb_to_hsv(c);
        CHECK(hsv.h >= 0.0);
        CHECK(hsv.h < 360.0);
        const auto back = hsv_to_rgb(hsv);
        CHECK(std::abs(back.r - c.r) <= 1);
        CHECK(std::abs(back.g - c.g) <= 1);
        CHECK(std::abs(back.b - c.b) <= 1);
    }
    const auto img = random_image(5, 4, 1);
    const auto all = to_hsv(img);
    REQUIRE(all.size() == 20);
    CHECK(all[7].h == rgb_to_hsv(img.at(2, 1)).h);
}

TEST_CASE("mask geometry of small shapes") {
    std::vector<std::uint8_t> one = {0, 0, 0, 0, 1, 0, 0, 0, 0};
    auto g = mask_geometry(one, 3, 3);
    CHECK(g.area == 1);
    CHECK(g.perimeter == 4);
    CHECK(g.centroid.x == 1.0);
    CHECK(g.centroid.y == 1.0);

    std::vector<std::uint8_t> square(12 * 12, 0);
    for (int y = 1; y <= 10; ++y)
        for (int x = 1; x <= 10; ++x) square[y * 12 + x] = 1;
    g = mask_geometry(square, 12, 12);
    CHECK(g.area == 100);
    CHECK(g.perimeter == 40);
    CHECK(g.centroid.x == 5.5);

    // Lesion touching the image border: border edges count as exposed.
    std::vector<std::uint8_t> full(4 * 3, 1);
    CHECK(mask_geometry(full, 4, 3).perimeter == 14);

    std::vector<std::uint8_t> empty(9, 0);
    CHECK_THROWS_AS(mask_geometry(empty, 3, 3), Error);
}

TEST_CASE("rasterised disk geometry matches a direct count") {
    const int r = 50;
    const auto img = disk_image(r);
    std::size_t area = 0, edges = 0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (!img.in_mask(x, y)) continue;
            ++area;
            const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                const int nx = x + dx[k], ny = y + dy[k];
                if (nx < 0 || ny < 0 || nx >= img.width || ny >= img.height || !img.in_mask(nx, ny)) ++edges;
            }
        }
    }
    const auto g = mask_geometry(img);
    CHECK(g.area == area);
    CHECK(g.perimeter == edges);
    CHECK(std::abs(static_cast<double>(g.area) / (std::numbers::pi * r * r) - 1.0) < 0.02);
    // Edge counting follows the taxicab length 8r, not 2*pi*r.
    CHECK(g.perimeter == 404);
}

TEST_CASE("flips are involutions and keep geometry") {
    const auto img = random_image(9, 6, 2);
    CHECK(flip_horizontal(flip_horizontal(img)) == img);
    CHECK(flip_vertical(flip_vertical(img)) == img);
    const auto h = flip_horizontal(img);
    CHECK(h.at(0, 0) == img.at(8, 0));
    CHECK(h.mask[h.index(0, 3)] == img.mask[img.index(8, 3)]);
    for (const auto& f : {flip_horizontal(img), flip_vertical(img)}) {
        const auto a = mask_geometry(img), b = mask_geometry(f);
        CHECK(a.area == b.area);
        CHECK(a.perimeter == b.perimeter);
        CHECK(f.width == img.width);
        CHECK(f.height == img.height);
    }
}

TEST_CASE("blur and sharpen leave the mask alone") {
    const auto img = random_image(12, 10, 3);
    const auto b = gaussian_blur(img, 1.3);
    const auto s = sharpen(img, 1.0, 1.0);
    CHECK(b.mask == img.mask);
    CHECK(s.mask == img.mask);
    CHECK(b.rgb != img.rgb);
    CHECK(b.width == img.width);
    CHECK(s.height == img.height);
}

TEST_CASE("blur with vanishing sigma is the identity") {
    const auto img = random_image(10, 10, 4);
    for (double sigma : {0.0, 1e-3, 0.1}) {
        const auto b = gaussian_blur(img, sigma);
        for (std::size_t i = 0; i < img.rgb.size(); ++i) CHECK(std::abs(b.rgb[i] - img.rgb[i]) <= 1);
    }
}

TEST_CASE("blur and sharpen of a flat image change nothing") {
    MaskedImage flat(15, 11);
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 15; ++x) flat.set(x, y, {90, 140, 200});
    flat.mask[3] = 1;
    CHECK(sharpen(flat, 1.5, 1.0) == flat);
    CHECK(gaussian_blur(flat, 2.0) == flat);
}

TEST_CASE("blur preserves the mean of a smooth ramp interior") {
    MaskedImage ramp(21, 1);
    for (int x = 0; x < 21; ++x) ramp.set(x, 0, {static_cast<std::uint8_t>(10 * x), 0, 0});
    const auto b = gaussian_blur(ramp, 1.0);
    // A symmetric kernel maps a linear ramp to itself away from the borders.
    for (int x = 4; x < 17; ++x) CHECK(std::abs(b.at(x, 0).r - 10 * x) <= 1);
}

TEST_CASE("augmentation parameters come from the configured ranges") {
    AugmentRanges ranges;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const double s = draw_parameter(Transform::gaussian_blur, seed, ranges);
        CHECK(s >= ranges.blur_sigma_min);
        CHECK(s <= ranges.blur_sigma_max);
        const double a = draw_parameter(Transform::sharpen, seed, ranges);
        CHECK(a >= ranges.sharpen_amount_min);
        CHECK(a <= ranges.sharpen_amount_max);
        CHECK(draw_parameter(Transform::horizontal_flip, seed, ranges) == 0.0);
    }
    CHECK(draw_parameter(Transform::sharpen, 5, ranges) == draw_parameter(Transform::sharpen, 5, ranges));
    const auto img = random_image(8, 8, 5);
    CHECK(augment(img, Transform::gaussian_blur, 9) == augment(img, Transform::gaussian_blur, 9));
    CHECK(augment(img, Transform::vertical_flip, 9) == flip_vertical(img));
}

TEST_CASE("transform names round trip") {
    for (auto t : all_transforms) CHECK(parse_transform(to_string(t)) == t);
    CHECK_THROWS_AS(parse_transform("rotate"), Error);
}

TEST_CASE("png round trip and dimension checks") {
    testing::TempDir dir("imaging");
    const auto img = random_image(13, 7, 6);
    save_rgb(dir.path() / "a.png", img.rgb, img.width, img.height);
    save_mask(dir.path() / "a_mask.png", img.mask, img.width, img.height);
    const auto back = load_masked_image(dir.path() / "a.png", dir.path() / "a_mask.png");
    CHECK(back == img);
    CHECK(probe_dimensions(dir.path() / "a.png") == std::pair{13, 7});

    const auto other = random_image(7, 13, 7);
    save_mask(dir.path() / "b_mask.png", other.mask, other.width, other.height);
    try {
        load_masked_image(dir.path() / "a.png", dir.path() / "b_mask.png");
        FAIL("expected a dimension error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("a.png") != std::string::npos);
        CHECK(std::string(e.what()).find("b_mask.png") != std::string::npos);
    }
    CHECK_THROWS_AS(load_masked_image(dir.path() / "none.png", dir.path() / "a_mask.png"), Error);
    write_file_atomic(dir.path() / "bad.png", "not an image");
    int w = 0, h = 0;
    CHECK_THROWS_AS(load_rgb(dir.path() / "bad.png", w, h), Error);
}

}
