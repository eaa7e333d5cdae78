#ifndef DDUNET_PIPELINE_HPP
#define DDUNET_PIPELINE_HPP

#include <cmath>
#include <random>

#include "ddunet/mvol.hpp"
#include "ddunet/tensor.hpp"
#include "ddunet/volume.hpp"

namespace ddunet {

/// Z-score standardization. The statistics are taken over nonzero voxels
/// (the brain support) when at least two exist and `nonzero_only` is set,
/// otherwise over all voxels. Returns the degenerate-variance flag; a
/// zero-variance volume comes back all zeros.
inline Volume<float> zscore(const Volume<float>& v, bool nonzero_only = true,
                            bool* degenerate = nullptr) {
    if (v.size() < 2) throw std::invalid_argument("zscore: need at least 2 voxels");
    std::vector<std::size_t> support;
    if (nonzero_only) {
        for (std::size_t i = 0; i < v.data.size(); ++i)
            if (v.data[i] != 0.0f) support.push_back(i);
    }
    const bool use_support = support.size() >= 2;
    double mean = 0.0;
    const std::size_t n = use_support ? support.size() : v.data.size();
    auto value = [&](std::size_t j) {
        return static_cast<double>(use_support ? v.data[support[j]] : v.data[j]);
    };
    for (std::size_t j = 0; j < n; ++j) mean += value(j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double d = value(j) - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    Volume<float> out(v.dim, 0.0f);
    if (var == 0.0) {
        if (degenerate) *degenerate = true;
        return out;
    }
    if (degenerate) *degenerate = false;
    const double inv_std = 1.0 / std::sqrt(var);
    if (use_support) {
        for (std::size_t i : support)
            out.data[i] =
                static_cast<float>((static_cast<double>(v.data[i]) - mean) * inv_std);
    } else {
        for (std::size_t i = 0; i < v.data.size(); ++i)
            out.data[i] =
                static_cast<float>((static_cast<double>(v.data[i]) - mean) * inv_std);
    }
    return out;
}

/// Labels {0,1,2,4} -> nested binary channels [3,D,H,W]:
/// channel 0 ET = {4}, channel 1 TC = {1,4}, channel 2 WT = {1,2,4}.
inline Tensor<float> remap_labels(const Volume<std::uint8_t>& labels) {
    const auto [d, h, w] = labels.dim;
    Tensor<float> out({3, d, h, w});
    const std::int64_t vox = d * h * w;
    for (std::int64_t i = 0; i < vox; ++i) {
        const std::uint8_t l = labels.data[static_cast<std::size_t>(i)];
        switch (l) {
            case 0: break;
            case 4: out.data[i] = 1.0f; [[fallthrough]];
            case 1: out.data[vox + i] = 1.0f; [[fallthrough]];
            case 2: out.data[2 * vox + i] = 1.0f; break;
            default:
                throw MvolError("illegal_label",
                                "label value " + std::to_string(int(l)) +
                                    " outside alphabet {0,1,2,4}");
        }
    }
    return out;
}

/// Mapping between an original volume and its fixed-size crop window.
/// The window is centered on the bounding box of the nonzero voxels,
/// clamped into the volume; where the volume is smaller than the window the
/// content is centered and zero-padded.
struct CropInfo {
    std::array<std::int64_t, 3> full_dim{};
    std::array<std::int64_t, 3> crop_dim{};
    std::array<std::int64_t, 3> src_off{};   // copy start in the original
    std::array<std::int64_t, 3> dst_off{};   // copy start in the crop
    std::array<std::int64_t, 3> copy_len{};
};

inline CropInfo compute_crop(const VolumeCase& c,
                             std::array<std::int64_t, 3> crop_dim) {
    CropInfo info;
    info.full_dim = c.modalities[0].dim;
    info.crop_dim = crop_dim;
    // bounding box of nonzero voxels over all modalities
    std::array<std::int64_t, 3> lo = info.full_dim, hi{-1, -1, -1};
    const auto [d, h, w] = info.full_dim;
    for (std::int64_t z = 0; z < d; ++z)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                bool nz = false;
                for (const auto& m : c.modalities)
                    if (m.at(z, y, x) != 0.0f) {
                        nz = true;
                        break;
                    }
                if (!nz) continue;
                lo = {std::min(lo[0], z), std::min(lo[1], y), std::min(lo[2], x)};
                hi = {std::max(hi[0], z), std::max(hi[1], y), std::max(hi[2], x)};
            }
    for (int a = 0; a < 3; ++a) {
        const std::int64_t full = info.full_dim[a], crop = crop_dim[a];
        const std::int64_t center =
            hi[a] >= 0 ? (lo[a] + hi[a] + 1) / 2 : full / 2;
        if (full >= crop) {
            std::int64_t start = std::clamp<std::int64_t>(center - crop / 2, 0,
                                                          full - crop);
            info.src_off[a] = start;
            info.dst_off[a] = 0;
            info.copy_len[a] = crop;
        } else {
            info.src_off[a] = 0;
            info.dst_off[a] = (crop - full) / 2;
            info.copy_len[a] = full;
        }
    }
    return info;
}

template <typename T>
Volume<T> apply_crop(const Volume<T>& v, const CropInfo& info) {
    Volume<T> out(info.crop_dim, T(0));
    for (std::int64_t z = 0; z < info.copy_len[0]; ++z)
        for (std::int64_t y = 0; y < info.copy_len[1]; ++y)
            for (std::int64_t x = 0; x < info.copy_len[2]; ++x)
                out.at(info.dst_off[0] + z, info.dst_off[1] + y, info.dst_off[2] + x) =
                    v.at(info.src_off[0] + z, info.src_off[1] + y,
                         info.src_off[2] + x);
    return out;
}

template <typename T>
Volume<T> undo_crop(const Volume<T>& cropped, const CropInfo& info) {
    Volume<T> out(info.full_dim, T(0));
    for (std::int64_t z = 0; z < info.copy_len[0]; ++z)
        for (std::int64_t y = 0; y < info.copy_len[1]; ++y)
            for (std::int64_t x = 0; x < info.copy_len[2]; ++x)
                out.at(info.src_off[0] + z, info.src_off[1] + y, info.src_off[2] + x) =
                    cropped.at(info.dst_off[0] + z, info.dst_off[1] + y,
                               info.dst_off[2] + x);
    return out;
}

/// Depth-axis offsets for overlapping patches. Offsets advance by `stride`
/// while a full patch fits; when the stride does not divide (depth - patch)
/// a final patch is anchored at depth - patch and `anchored` is set.
inline std::vector<std::int64_t> patch_offsets(std::int64_t depth,
                                               std::int64_t patch_depth,
                                               std::int64_t stride,
                                               bool* anchored = nullptr) {
    if (patch_depth < 1 || stride < 1)
        throw std::invalid_argument("patch_offsets: patch depth and stride must be >= 1");
    if (patch_depth > depth)
        throw std::invalid_argument("patch_offsets: patch depth " +
                                    std::to_string(patch_depth) +
                                    " exceeds volume depth " + std::to_string(depth));
    std::vector<std::int64_t> offsets;
    for (std::int64_t o = 0; o + patch_depth <= depth; o += stride)
        offsets.push_back(o);
    if (anchored) *anchored = false;
    if (offsets.back() + patch_depth != depth) {
        offsets.push_back(depth - patch_depth);
        if (anchored) *anchored = true;
    }
    return offsets;
}

/// Depth-axis slice of a [C,D,H,W] tensor.
inline Tensor<float> slice_depth(const Tensor<float>& t, std::int64_t offset,
                                 std::int64_t len) {
    if (t.shape.size() != 4) throw std::invalid_argument("slice_depth: expected [C,D,H,W]");
    const std::int64_t c = t.shape[0], d = t.shape[1], plane = t.shape[2] * t.shape[3];
    if (offset < 0 || offset + len > d)
        throw std::invalid_argument("slice_depth: range out of bounds");
    Tensor<float> out({c, len, t.shape[2], t.shape[3]});
    for (std::int64_t ch = 0; ch < c; ++ch)
        std::copy_n(t.data.begin() + (ch * d + offset) * plane, len * plane,
                    out.data.begin() + ch * len * plane);
    return out;
}

struct PatchSet {
    std::vector<std::int64_t> offsets;
    std::vector<Tensor<float>> patches;  // [4, patch_depth, H, W]
    std::array<std::int64_t, 3> full_shape{};
    std::int64_t patch_depth = 0;
    std::int64_t stride = 0;
    bool final_patch_anchored = false;
};

/// Stacks the (already standardized and cropped) modalities and cuts
/// overlapping depth patches.
inline PatchSet extract_patches(const std::array<Volume<float>, 4>& modalities,
                                std::int64_t patch_depth, std::int64_t stride) {
    const auto dim = modalities[0].dim;
    for (const auto& m : modalities)
        if (m.dim != dim)
            throw std::invalid_argument("extract_patches: modality dims differ");
    Tensor<float> stacked({4, dim[0], dim[1], dim[2]});
    const std::int64_t vox = dim[0] * dim[1] * dim[2];
    for (std::int64_t m = 0; m < 4; ++m)
        std::copy(modalities[m].data.begin(), modalities[m].data.end(),
                  stacked.data.begin() + m * vox);
    PatchSet set;
    set.full_shape = dim;
    set.patch_depth = patch_depth;
    set.stride = stride;
    set.offsets = patch_offsets(dim[0], patch_depth, stride, &set.final_patch_anchored);
    for (auto o : set.offsets)
        set.patches.push_back(slice_depth(stacked, o, patch_depth));
    return set;
}

/// Per-voxel mean of all patch predictions covering each depth slice.
/// Every slice must be covered by at least one patch.
inline Tensor<float> reconstruct(
    const std::vector<std::pair<std::int64_t, Tensor<float>>>& predictions,
    std::array<std::int64_t, 3> full_shape) {
    if (predictions.empty())
        throw std::invalid_argument("reconstruct: no patch predictions");
    const auto& first = predictions.front().second;
    if (first.shape.size() != 4)
        throw std::invalid_argument("reconstruct: patches must be [C,D,H,W]");
    const std::int64_t c = first.shape[0];
    const std::int64_t pd = first.shape[1];
    const std::int64_t plane = full_shape[1] * full_shape[2];
    Tensor<float> acc({c, full_shape[0], full_shape[1], full_shape[2]});
    std::vector<std::int64_t> cover(static_cast<std::size_t>(full_shape[0]), 0);
    for (const auto& [off, p] : predictions) {
        if (p.shape != std::vector<std::int64_t>{c, pd, full_shape[1], full_shape[2]})
            throw std::invalid_argument("reconstruct: patch shape mismatch");
        if (off < 0 || off + pd > full_shape[0])
            throw std::invalid_argument("reconstruct: patch offset out of range");
        for (std::int64_t z = 0; z < pd; ++z) ++cover[static_cast<std::size_t>(off + z)];
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t z = 0; z < pd; ++z) {
                const float* src = p.ptr() + (ch * pd + z) * plane;
                float* dst = acc.ptr() + (ch * full_shape[0] + off + z) * plane;
                for (std::int64_t i = 0; i < plane; ++i) dst[i] += src[i];
            }
    }
    for (std::int64_t z = 0; z < full_shape[0]; ++z)
        if (cover[static_cast<std::size_t>(z)] == 0)
            throw std::invalid_argument("reconstruct: coverage gap at depth slice " +
                                        std::to_string(z));
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t z = 0; z < full_shape[0]; ++z) {
            const float inv = 1.0f / static_cast<float>(cover[static_cast<std::size_t>(z)]);
            float* dst = acc.ptr() + (ch * full_shape[0] + z) * plane;
            for (std::int64_t i = 0; i < plane; ++i) dst[i] *= inv;
        }
    return acc;
}

/// Seeds with residue 3 mod 4 generate enhancing-tumor-free cases.
inline bool synth_seed_is_lgg(std::uint64_t seed) { return seed % 4 == 3; }

/// Deterministic synthetic subject: nested ellipsoids (whole tumor containing
/// core containing enhancing tumor) inside a brain ellipsoid, four modalities
/// with per-region intensity levels plus Gaussian noise.
inline VolumeCase synth_case(std::uint64_t seed, std::array<std::int64_t, 3> dim) {
    if (dim[0] < 16 || dim[1] < 16 || dim[2] < 16)
        throw std::invalid_argument("synth_case: shape must be at least 16^3");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.05);
    const bool lgg = synth_seed_is_lgg(seed);

    std::array<double, 3> brain_c, brain_r, tumor_c, wt_r;
    for (int a = 0; a < 3; ++a) {
        brain_c[a] = static_cast<double>(dim[a]) * 0.5;
        brain_r[a] = static_cast<double>(dim[a]) * 0.42;
        tumor_c[a] = brain_c[a] + (u01(rng) - 0.5) * static_cast<double>(dim[a]) * 0.2;
        wt_r[a] = std::max(4.0, static_cast<double>(dim[a]) * (0.24 + 0.10 * u01(rng)));
    }
    const double tc_scale = 0.62 + 0.13 * u01(rng);
    const double et_scale = 0.66 + 0.12 * u01(rng);

    auto inside = [](std::array<double, 3> c, std::array<double, 3> r,
                     std::int64_t z, std::int64_t y, std::int64_t x) {
        double s = 0.0;
        const double dz = (static_cast<double>(z) - c[0]) / r[0];
        const double dy = (static_cast<double>(y) - c[1]) / r[1];
        const double dx = (static_cast<double>(x) - c[2]) / r[2];
        s = dz * dz + dy * dy + dx * dx;
        return s <= 1.0;
    };

    Volume<std::uint8_t> labels(dim, 0);
    Volume<std::uint8_t> brain(dim, 0);
    std::array<double, 3> tc_r, et_r;
    for (int a = 0; a < 3; ++a) {
        tc_r[a] = std::max(2.5, wt_r[a] * tc_scale);
        et_r[a] = std::max(1.5, tc_r[a] * et_scale);
    }
    for (std::int64_t z = 0; z < dim[0]; ++z)
        for (std::int64_t y = 0; y < dim[1]; ++y)
            for (std::int64_t x = 0; x < dim[2]; ++x) {
                if (!inside(brain_c, brain_r, z, y, x)) continue;
                brain.at(z, y, x) = 1;
                if (!inside(tumor_c, wt_r, z, y, x)) continue;
                if (inside(tumor_c, tc_r, z, y, x)) {
                    if (!lgg && inside(tumor_c, et_r, z, y, x))
                        labels.at(z, y, x) = 4;
                    else
                        labels.at(z, y, x) = 1;
                } else {
                    labels.at(z, y, x) = 2;  // peritumoral edema
                }
            }

    // per-modality intensity levels: {tissue, edema, core, enhancing}
    static constexpr double levels[4][4] = {
        {1.0, 0.8, 0.6, 0.7},   // t1
        {1.0, 0.9, 0.7, 1.9},   // t1gd
        {1.0, 1.9, 1.4, 1.2},   // t2
        {1.0, 2.1, 1.5, 1.3},   // flair
    };
    VolumeCase c;
    c.case_id = "synth_" + std::to_string(seed);
    for (std::size_t m = 0; m < 4; ++m) {
        c.modalities[m] = Volume<float>(dim, 0.0f);
        for (std::int64_t i = 0; i < labels.size(); ++i) {
            if (!brain.data[static_cast<std::size_t>(i)]) continue;
            int region = 0;
            switch (labels.data[static_cast<std::size_t>(i)]) {
                case 2: region = 1; break;
                case 1: region = 2; break;
                case 4: region = 3; break;
                default: region = 0;
            }
            c.modalities[m].data[static_cast<std::size_t>(i)] =
                static_cast<float>(levels[m][region] + noise(rng));
        }
    }
    c.labels = std::move(labels);
    return c;
}

}  // namespace ddunet

#endif  // DDUNET_PIPELINE_HPP
