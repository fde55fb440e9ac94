#include "skinbias/segmentation.hpp"

#include "skinbias/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace skinbias::segmentation {

namespace {

struct Centre {
    double r, g, b, x, y;
};

double colour_gradient(const imaging::MaskedImage& img, int x, int y) {
    if (x < 1 || y < 1 || x >= img.width - 1 || y >= img.height - 1) return std::numeric_limits<double>::max();
    auto diff2 = [&](int x0, int y0, int x1, int y1) {
        const auto a = img.at(x0, y0), b = img.at(x1, y1);
        const double dr = a.r - b.r, dg = a.g - b.g, db = a.b - b.b;
        return dr * dr + dg * dg + db * db;
    };
    return diff2(x + 1, y, x - 1, y) + diff2(x, y + 1, x, y - 1);
}

}  // namespace

Superpixels slic(const imaging::MaskedImage& image, const SlicParams& params) {
    image.validate();
    const int w = image.width, h = image.height;
    const double n = static_cast<double>(w) * h;
    const int step = std::max(1, static_cast<int>(std::lround(std::sqrt(n / std::max(1, params.n_segments)))));

    std::vector<Centre> centres;
    for (int y = step / 2; y < h; y += step) {
        for (int x = step / 2; x < w; x += step) {
            int bx = x, by = y;
            double best = colour_gradient(image, x, y);
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const double g = colour_gradient(image, x + dx, y + dy);
                    if (g < best) best = g, bx = x + dx, by = y + dy;
                }
            }
            const auto c = image.at(bx, by);
            centres.push_back({double(c.r), double(c.g), double(c.b), double(bx), double(by)});
        }
    }

    const double spatial_weight = (params.compactness / step) * (params.compactness / step);
    std::vector<int> labels(image.pixel_count(), -1);
    std::vector<double> dist(image.pixel_count());

    auto distance = [&](const Centre& c, int x, int y) {
        const auto p = image.at(x, y);
        const double dr = p.r - c.r, dg = p.g - c.g, db = p.b - c.b;
        const double dx = x - c.x, dy = y - c.y;
        return dr * dr + dg * dg + db * db + spatial_weight * (dx * dx + dy * dy);
    };

    for (int iter = 0; iter < std::max(1, params.iterations); ++iter) {
        std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::max());
        for (std::size_t k = 0; k < centres.size(); ++k) {
            const auto& c = centres[k];
            const int x0 = std::max(0, static_cast<int>(c.x) - step), x1 = std::min(w - 1, static_cast<int>(c.x) + step);
            const int y0 = std::max(0, static_cast<int>(c.y) - step), y1 = std::min(h - 1, static_cast<int>(c.y) + step);
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const double d = distance(c, x, y);
                    const auto i = image.index(x, y);
                    if (d < dist[i]) {
                        dist[i] = d;
                        labels[i] = static_cast<int>(k);
                    }
                }
            }
        }
        // Pixels outside every window fall back to a global nearest search.
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const auto i = image.index(x, y);
                if (labels[i] >= 0) continue;
                for (std::size_t k = 0; k < centres.size(); ++k) {
                    const double d = distance(centres[k], x, y);
                    if (d < dist[i]) dist[i] = d, labels[i] = static_cast<int>(k);
                }
            }
        }
        std::vector<Centre> sums(centres.size(), {0, 0, 0, 0, 0});
        std::vector<std::size_t> counts(centres.size(), 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const auto l = static_cast<std::size_t>(labels[image.index(x, y)]);
                const auto p = image.at(x, y);
                sums[l].r += p.r, sums[l].g += p.g, sums[l].b += p.b, sums[l].x += x, sums[l].y += y;
                ++counts[l];
            }
        }
        for (std::size_t k = 0; k < centres.size(); ++k) {
            if (counts[k] == 0) continue;
            const double c = static_cast<double>(counts[k]);
            centres[k] = {sums[k].r / c, sums[k].g / c, sums[k].b / c, sums[k].x / c, sums[k].y / c};
        }
    }

    std::vector<int> remap(centres.size(), -1);
    Superpixels out;
    out.step = step;
    out.labels.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& m = remap[static_cast<std::size_t>(labels[i])];
        if (m < 0) m = out.count++;
        out.labels[i] = m;
    }
    return out;
}

KMeansResult kmeans(const std::vector<std::array<double, 3>>& points, const KMeansParams& params) {
    if (params.k < 1) throw Error("k-means needs k >= 1");
    KMeansResult res;
    if (points.empty()) return res;
    const std::size_t n = points.size();
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(params.k), n);

    auto dist2 = [](const std::array<double, 3>& a, const std::array<double, 3>& b) {
        const double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
        return d0 * d0 + d1 * d1 + d2 * d2;
    };

    Rng rng(params.seed);
    res.centroids.push_back(points[rng.below(n)]);
    std::vector<double> nearest(n);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = dist2(points[i], res.centroids[0]);
    while (res.centroids.size() < k) {
        double total = 0.0;
        for (double d : nearest) total += d;
        if (total <= 0.0) break;  // every point already coincides with a centre
        const double target = rng.uniform() * total;
        double acc = 0.0;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            acc += nearest[i];
            if (acc > target && nearest[i] > 0.0) {
                pick = i;
                break;
            }
        }
        res.centroids.push_back(points[pick]);
        for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], dist2(points[i], res.centroids.back()));
    }

    const std::size_t kk = res.centroids.size();
    res.assignment.assign(n, -1);
    for (int iter = 0; iter < std::max(1, params.max_iterations); ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = dist2(points[i], res.centroids[0]);
            for (std::size_t c = 1; c < kk; ++c) {
                const double d = dist2(points[i], res.centroids[c]);
                if (d < bd) bd = d, best = static_cast<int>(c);
            }
            if (res.assignment[i] != best) res.assignment[i] = best, changed = true;
        }
        res.iterations = iter + 1;
        if (!changed) break;
        std::vector<std::array<double, 3>> sums(kk, {0.0, 0.0, 0.0});
        std::vector<std::size_t> counts(kk, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(res.assignment[i]);
            for (int d = 0; d < 3; ++d) sums[c][d] += points[i][d];
            ++counts[c];
        }
        for (std::size_t c = 0; c < kk; ++c) {
            if (counts[c] == 0) continue;  // empty cluster keeps its centre
            for (int d = 0; d < 3; ++d) res.centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
        }
    }
    res.sizes.assign(kk, 0);
    for (auto a : res.assignment) ++res.sizes[static_cast<std::size_t>(a)];
    return res;
}

}  // namespace skinbias::segmentation
