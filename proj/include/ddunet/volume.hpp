#ifndef DDUNET_VOLUME_HPP
#define DDUNET_VOLUME_HPP

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ddunet {

/// Plain 3D grid, row-major in (z, y, x) = (depth, height, width).
template <typename T>
struct Volume {
    std::array<std::int64_t, 3> dim{0, 0, 0};
    std::vector<T> data;

    Volume() = default;
    explicit Volume(std::array<std::int64_t, 3> d, T fill = T(0)) : dim(d) {
        if (d[0] <= 0 || d[1] <= 0 || d[2] <= 0)
            throw std::invalid_argument("volume dimensions must be positive");
        data.assign(static_cast<std::size_t>(d[0] * d[1] * d[2]), fill);
    }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    T& at(std::int64_t z, std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>((z * dim[1] + y) * dim[2] + x)];
    }
    const T& at(std::int64_t z, std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>((z * dim[1] + y) * dim[2] + x)];
    }
    bool inside(std::int64_t z, std::int64_t y, std::int64_t x) const {
        return z >= 0 && z < dim[0] && y >= 0 && y < dim[1] && x >= 0 && x < dim[2];
    }
    bool same_dim(const Volume& o) const { return dim == o.dim; }
};

}  // namespace ddunet

#endif  // DDUNET_VOLUME_HPP
