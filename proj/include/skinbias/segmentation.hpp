#pragma once

#include "skinbias/imaging.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace skinbias::segmentation {

struct SlicParams {
    int n_segments = 100;
    double compactness = 10.0;
    int iterations = 10;
};

// Label per pixel (row-major), labels in [0, count).
struct Superpixels {
    std::vector<int> labels;
    int count = 0;
    int step = 0;  // seed grid spacing in pixels
};

// SLIC on RGB values over the full image. Seeds are placed on a regular grid
// and nudged to the lowest-gradient pixel of their 3x3 neighbourhood; every
// pixel joins the centre with the smallest combined colour/space distance
// inside a 2S x 2S window. Empty clusters are dropped and labels compacted.
Superpixels slic(const imaging::MaskedImage& image, const SlicParams& params);

struct KMeansParams {
    int k = 5;
    int max_iterations = 100;
    std::uint64_t seed = 0;
};

struct KMeansResult {
    std::vector<std::array<double, 3>> centroids;
    std::vector<std::size_t> sizes;
    std::vector<int> assignment;
    int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding from a fixed-seed generator. Stops
// when no assignment changes. If the points have fewer than k distinct
// positions the number of clusters shrinks accordingly.
KMeansResult kmeans(const std::vector<std::array<double, 3>>& points, const KMeansParams& params);

}  // namespace skinbias::segmentation
