#ifndef DDUNET_POSTPROCESS_HPP
#define DDUNET_POSTPROCESS_HPP

#include <numeric>

#include "ddunet/tensor.hpp"
#include "ddunet/volume.hpp"

namespace ddunet {

/// Binarizes the three sigmoid channels and resolves them into one label map
/// by nesting priority: enhancing tumor (4) beats core (1) beats whole
/// tumor (2) beats background.
inline Volume<std::uint8_t> fuse_channels(const Tensor<float>& probs,
                                          double threshold = 0.5) {
    if (probs.shape.size() != 4 || probs.shape[0] != 3)
        throw std::invalid_argument("fuse_channels: expected [3,D,H,W] probabilities");
    Volume<std::uint8_t> out({probs.shape[1], probs.shape[2], probs.shape[3]}, 0);
    const std::int64_t vox = out.size();
    const float th = static_cast<float>(threshold);
    for (std::int64_t i = 0; i < vox; ++i) {
        if (probs.data[i] >= th) out.data[static_cast<std::size_t>(i)] = 4;
        else if (probs.data[vox + i] >= th) out.data[static_cast<std::size_t>(i)] = 1;
        else if (probs.data[2 * vox + i] >= th) out.data[static_cast<std::size_t>(i)] = 2;
    }
    return out;
}

/// Relabels all enhancing-tumor voxels to label 1 when their count is
/// strictly below `min_et_voxels`.
inline Volume<std::uint8_t> suppress_small_et(Volume<std::uint8_t> labels,
                                              std::int64_t min_et_voxels = 300) {
    std::int64_t et = 0;
    for (auto v : labels.data)
        if (v == 4) ++et;
    if (et > 0 && et < min_et_voxels)
        for (auto& v : labels.data)
            if (v == 4) v = 1;
    return labels;
}

struct ComponentLabeling {
    Volume<std::int32_t> ids;          // 0 = background; ids dense 1..K
    std::vector<std::int64_t> sizes;   // indexed by id-1
    int connectivity = 26;
};

/// Union-find connected-component labeling at 6 or 26 connectivity.
/// Component ids are assigned in row-major order of first occurrence.
inline ComponentLabeling connected_components(const Volume<std::uint8_t>& mask,
                                              int connectivity = 26) {
    if (connectivity != 6 && connectivity != 26)
        throw std::invalid_argument("connected_components: connectivity must be 6 or 26");
    const std::int64_t n = mask.size();
    std::vector<std::int32_t> parent(static_cast<std::size_t>(n), -1);
    auto find = [&](std::int32_t i) {
        while (parent[static_cast<std::size_t>(i)] != i) {
            parent[static_cast<std::size_t>(i)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
            i = parent[static_cast<std::size_t>(i)];
        }
        return i;
    };
    auto unite = [&](std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a > b) std::swap(a, b);
        parent[static_cast<std::size_t>(b)] = a;  // keep the smaller index as root
    };

    std::vector<std::array<int, 3>> offs;
    for (int dz = -1; dz <= 0; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dz == 0 && (dy > 0 || (dy == 0 && dx >= 0))) continue;  // prior voxels only
                const int manh = std::abs(dz) + std::abs(dy) + std::abs(dx);
                if (connectivity == 6 && manh != 1) continue;
                offs.push_back({dz, dy, dx});
            }

    for (std::int64_t z = 0; z < mask.dim[0]; ++z)
        for (std::int64_t y = 0; y < mask.dim[1]; ++y)
            for (std::int64_t x = 0; x < mask.dim[2]; ++x) {
                if (!mask.at(z, y, x)) continue;
                const std::int64_t idx = (z * mask.dim[1] + y) * mask.dim[2] + x;
                parent[static_cast<std::size_t>(idx)] = static_cast<std::int32_t>(idx);
                for (const auto& o : offs) {
                    const std::int64_t nz = z + o[0], ny = y + o[1], nx = x + o[2];
                    if (!mask.inside(nz, ny, nx) || !mask.at(nz, ny, nx)) continue;
                    unite(static_cast<std::int32_t>(idx),
                          static_cast<std::int32_t>((nz * mask.dim[1] + ny) * mask.dim[2] + nx));
                }
            }

    ComponentLabeling cl;
    cl.connectivity = connectivity;
    cl.ids = Volume<std::int32_t>(mask.dim, 0);
    std::vector<std::int32_t> root_to_id(static_cast<std::size_t>(n), 0);
    std::int32_t next_id = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (parent[static_cast<std::size_t>(i)] < 0) continue;
        const std::int32_t root = find(static_cast<std::int32_t>(i));
        if (root_to_id[static_cast<std::size_t>(root)] == 0) {
            root_to_id[static_cast<std::size_t>(root)] = ++next_id;
            cl.sizes.push_back(0);
        }
        const std::int32_t id = root_to_id[static_cast<std::size_t>(root)];
        cl.ids.data[static_cast<std::size_t>(i)] = id;
        ++cl.sizes[static_cast<std::size_t>(id - 1)];
    }
    return cl;
}

/// Removes connected components whose size is strictly below
/// `fraction` of the class total. By default the class is the whole-tumor
/// foreground (all nonzero labels as one mask); `per_label` applies the rule
/// to each label value separately.
inline Volume<std::uint8_t> filter_components(Volume<std::uint8_t> labels,
                                              double fraction = 0.3,
                                              int connectivity = 26,
                                              bool per_label = false) {
    auto apply = [&](auto&& in_class) {
        Volume<std::uint8_t> mask(labels.dim, 0);
        std::int64_t total = 0;
        for (std::int64_t i = 0; i < labels.size(); ++i)
            if (in_class(labels.data[static_cast<std::size_t>(i)])) {
                mask.data[static_cast<std::size_t>(i)] = 1;
                ++total;
            }
        if (total == 0) return;
        const auto cl = connected_components(mask, connectivity);
        const double cutoff = fraction * static_cast<double>(total);
        for (std::int64_t i = 0; i < labels.size(); ++i) {
            const auto id = cl.ids.data[static_cast<std::size_t>(i)];
            if (id > 0 &&
                static_cast<double>(cl.sizes[static_cast<std::size_t>(id - 1)]) < cutoff)
                labels.data[static_cast<std::size_t>(i)] = 0;
        }
    };
    if (per_label) {
        for (std::uint8_t l : {std::uint8_t(1), std::uint8_t(2), std::uint8_t(4)})
            apply([l](std::uint8_t v) { return v == l; });
    } else {
        apply([](std::uint8_t v) { return v != 0; });
    }
    return labels;
}

struct PostprocessConfig {
    double threshold = 0.5;
    std::int64_t min_et_voxels = 300;
    double component_fraction = 0.3;
    int connectivity = 26;
    bool per_label = false;
};

/// fuse -> component filter -> small-ET suppression, so the ET count is
/// taken over the surviving tumor only.
inline Volume<std::uint8_t> postprocess(const Tensor<float>& probs,
                                        const PostprocessConfig& cfg = {}) {
    auto labels = fuse_channels(probs, cfg.threshold);
    labels = filter_components(std::move(labels), cfg.component_fraction,
                               cfg.connectivity, cfg.per_label);
    return suppress_small_et(std::move(labels), cfg.min_et_voxels);
}

}  // namespace ddunet

#endif  // DDUNET_POSTPROCESS_HPP
