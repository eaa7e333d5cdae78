#ifndef DDUNET_METRICS_HPP
#define DDUNET_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>

#include "ddunet/volume.hpp"

namespace ddunet {

struct BinaryConfusion {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::uint64_t total() const { return tp + fp + tn + fn; }
};

inline BinaryConfusion confusion(const Volume<std::uint8_t>& pred,
                                 const Volume<std::uint8_t>& gt) {
    if (!pred.same_dim(gt))
        throw std::invalid_argument("confusion: volume dimensions differ");
    BinaryConfusion c;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
        if (p && g) ++c.tp;
        else if (p && !g) ++c.fp;
        else if (!p && g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

inline double dice_score(const BinaryConfusion& c) {
    const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}
// empty ground truth counts as perfectly detected when nothing was missed
inline double sensitivity(const BinaryConfusion& c) {
    return c.tp + c.fn == 0 ? 1.0
                            : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}
inline double specificity(const BinaryConfusion& c) {
    return c.tn + c.fp == 0 ? 1.0
                            : static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
}

/// Nearest-rank percentile: the ceil(pct*n)-th order statistic of the sorted
/// sample (pct in (0,1]).
inline double nearest_rank(std::vector<double> values, double pct) {
    if (values.empty()) throw std::invalid_argument("nearest_rank: empty sample");
    std::sort(values.begin(), values.end());
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(pct * static_cast<double>(values.size())));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

/// Mask voxels with at least one face-adjacent background neighbor; voxels
/// on the volume border count as boundary.
inline Volume<std::uint8_t> boundary_voxels(const Volume<std::uint8_t>& mask) {
    Volume<std::uint8_t> out(mask.dim, 0);
    static constexpr int off[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                      {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
    for (std::int64_t z = 0; z < mask.dim[0]; ++z)
        for (std::int64_t y = 0; y < mask.dim[1]; ++y)
            for (std::int64_t x = 0; x < mask.dim[2]; ++x) {
                if (!mask.at(z, y, x)) continue;
                for (const auto& o : off) {
                    const std::int64_t nz = z + o[0], ny = y + o[1], nx = x + o[2];
                    if (!mask.inside(nz, ny, nx) || !mask.at(nz, ny, nx)) {
                        out.at(z, y, x) = 1;
                        break;
                    }
                }
            }
    return out;
}

namespace detail {

// 1D lower-envelope squared distance transform with sample spacing w,
// in place over f (Felzenszwalb & Huttenlocher).
inline void edt_1d(double* f, std::int64_t n, double w, std::int64_t* v, double* z,
                   double* out) {
    const double inf = std::numeric_limits<double>::infinity();
    const double w2 = w * w;
    std::int64_t first = -1;
    for (std::int64_t q = 0; q < n && first < 0; ++q)
        if (f[q] < inf) first = q;
    if (first < 0) return;  // all infinite; nothing to propagate
    std::int64_t k = 0;
    v[0] = first;
    z[0] = -inf;
    z[1] = inf;
    for (std::int64_t q = first + 1; q < n; ++q) {
        if (f[q] == inf) continue;
        double s;
        while (true) {
            const std::int64_t p = v[k];
            s = ((f[q] + w2 * static_cast<double>(q) * static_cast<double>(q)) -
                 (f[p] + w2 * static_cast<double>(p) * static_cast<double>(p))) /
                (2.0 * w2 * static_cast<double>(q - p));
            if (s <= z[k]) {
                --k;  // z[0] = -inf, so k never underflows
                continue;
            }
            break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    k = 0;
    for (std::int64_t x = 0; x < n; ++x) {
        while (z[k + 1] < static_cast<double>(x)) ++k;
        const double d = static_cast<double>(x - v[k]);
        out[x] = w2 * d * d + f[v[k]];
    }
    std::copy(out, out + n, f);
}

}  // namespace detail

/// Exact squared Euclidean distance (under anisotropic spacing) from every
/// grid voxel to the nearest set voxel of `seeds`. Separable three-pass
/// transform.
inline Volume<double> squared_edt(const Volume<std::uint8_t>& seeds,
                                  std::array<double, 3> spacing) {
    const double inf = std::numeric_limits<double>::infinity();
    Volume<double> d(seeds.dim, inf);
    for (std::size_t i = 0; i < seeds.data.size(); ++i)
        if (seeds.data[i]) d.data[i] = 0.0;
    const auto [dz, dy, dx] = seeds.dim;
    const std::int64_t maxn = std::max({dz, dy, dx});
    std::vector<double> line(maxn), out(maxn), z(maxn + 1);
    std::vector<std::int64_t> v(maxn);
    // x pass
    for (std::int64_t zz = 0; zz < dz; ++zz)
        for (std::int64_t yy = 0; yy < dy; ++yy)
            detail::edt_1d(&d.at(zz, yy, 0), dx, spacing[2], v.data(), z.data(),
                           out.data());
    // y pass
    for (std::int64_t zz = 0; zz < dz; ++zz)
        for (std::int64_t xx = 0; xx < dx; ++xx) {
            for (std::int64_t yy = 0; yy < dy; ++yy) line[yy] = d.at(zz, yy, xx);
            detail::edt_1d(line.data(), dy, spacing[1], v.data(), z.data(), out.data());
            for (std::int64_t yy = 0; yy < dy; ++yy) d.at(zz, yy, xx) = line[yy];
        }
    // z pass
    for (std::int64_t yy = 0; yy < dy; ++yy)
        for (std::int64_t xx = 0; xx < dx; ++xx) {
            for (std::int64_t zz = 0; zz < dz; ++zz) line[zz] = d.at(zz, yy, xx);
            detail::edt_1d(line.data(), dz, spacing[0], v.data(), z.data(), out.data());
            for (std::int64_t zz = 0; zz < dz; ++zz) d.at(zz, yy, xx) = line[zz];
        }
    return d;
}

struct Hd95Result {
    bool defined = false;
    double value = 0.0;
};

/// 95th-percentile symmetric surface distance between two binary masks.
/// Undefined (per reporting convention) when either mask is empty.
inline Hd95Result hausdorff95(const Volume<std::uint8_t>& a,
                              const Volume<std::uint8_t>& b,
                              std::array<double, 3> spacing = {1, 1, 1}) {
    if (!a.same_dim(b))
        throw std::invalid_argument("hausdorff95: volume dimensions differ");
    const bool a_empty = std::all_of(a.data.begin(), a.data.end(),
                                     [](std::uint8_t v) { return v == 0; });
    const bool b_empty = std::all_of(b.data.begin(), b.data.end(),
                                     [](std::uint8_t v) { return v == 0; });
    if (a_empty || b_empty) return {};

    const auto ba = boundary_voxels(a);
    const auto bb = boundary_voxels(b);
    auto directed = [&](const Volume<std::uint8_t>& from,
                        const Volume<std::uint8_t>& to) {
        const auto sq = squared_edt(to, spacing);
        std::vector<double> dists;
        for (std::size_t i = 0; i < from.data.size(); ++i)
            if (from.data[i]) dists.push_back(std::sqrt(sq.data[i]));
        return nearest_rank(std::move(dists), 0.95);
    };
    return {true, std::max(directed(ba, bb), directed(bb, ba))};
}

}  // namespace ddunet

#endif  // DDUNET_METRICS_HPP
