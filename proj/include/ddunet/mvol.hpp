#ifndef DDUNET_MVOL_HPP
#define DDUNET_MVOL_HPP

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "ddunet/volume.hpp"

namespace ddunet {

/// Error from the MVOL container with a machine-readable kind:
/// magic_mismatch, bad_header, shape_mismatch, dtype_mismatch,
/// truncated_payload, illegal_label, missing_file.
class MvolError : public std::runtime_error {
public:
    MvolError(std::string kind, const std::string& msg)
        : std::runtime_error(msg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

/// One subject: four co-registered modality volumes plus an optional
/// ground-truth label map over the alphabet {0,1,2,4}.
struct VolumeCase {
    std::string case_id;
    std::array<Volume<float>, 4> modalities;  // t1, t1gd, t2, flair
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::optional<Volume<std::uint8_t>> labels;
};

inline constexpr std::array<const char*, 4> kModalityNames{"t1", "t1gd", "t2",
                                                           "flair"};

namespace mvol_detail {

inline void check_labels_legal(const Volume<std::uint8_t>& labels) {
    for (auto v : labels.data)
        if (v != 0 && v != 1 && v != 2 && v != 4)
            throw MvolError("illegal_label",
                            "label value " + std::to_string(int(v)) +
                                " outside alphabet {0,1,2,4}");
}

template <typename T>
void write_raw(const std::filesystem::path& p, const std::vector<T>& data) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw MvolError("missing_file", "cannot open for write: " + p.string());
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
    if (!f) throw MvolError("truncated_payload", "short write: " + p.string());
}

template <typename T>
void read_raw(const std::filesystem::path& p, std::vector<T>& data,
              std::size_t expected) {
    std::ifstream f(p, std::ios::binary | std::ios::ate);
    if (!f) throw MvolError("missing_file", "missing payload file: " + p.string());
    const auto bytes = static_cast<std::size_t>(f.tellg());
    if (bytes != expected * sizeof(T))
        throw MvolError(bytes < expected * sizeof(T) ? "truncated_payload"
                                                     : "shape_mismatch",
                        p.string() + ": payload is " + std::to_string(bytes) +
                            " bytes, expected " +
                            std::to_string(expected * sizeof(T)));
    data.resize(expected);
    f.seekg(0);
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(bytes));
    if (!f) throw MvolError("truncated_payload", "short read: " + p.string());
}

inline std::map<std::string, std::string> read_header(
    const std::filesystem::path& dir) {
    const auto path = dir / "header.txt";
    std::ifstream f(path);
    if (!f) throw MvolError("missing_file", "missing header: " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            throw MvolError("bad_header", "malformed header line: " + line);
        std::string key = line.substr(0, colon);
        std::string val = line.substr(colon + 1);
        const auto strip = [](std::string& s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t\r");
            s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
        };
        strip(key);
        strip(val);
        kv[key] = val;
    }
    if (!kv.count("magic")) throw MvolError("bad_header", "header has no magic key");
    if (kv["magic"] != "MVOL1")
        throw MvolError("magic_mismatch", "bad magic '" + kv["magic"] + "'");
    return kv;
}

inline std::array<std::int64_t, 3> parse_dims(const std::string& s) {
    std::istringstream is(s);
    std::array<std::int64_t, 3> d{};
    if (!(is >> d[0] >> d[1] >> d[2]) || d[0] <= 0 || d[1] <= 0 || d[2] <= 0)
        throw MvolError("bad_header", "bad dims: " + s);
    return d;
}

}  // namespace mvol_detail

inline void write_case(const std::filesystem::path& dir, const VolumeCase& c) {
    if (c.labels) mvol_detail::check_labels_legal(*c.labels);
    std::filesystem::create_directories(dir);
    std::ofstream h(dir / "header.txt");
    h << "magic: MVOL1\n";
    h << "dims: " << c.modalities[0].dim[0] << ' ' << c.modalities[0].dim[1] << ' '
      << c.modalities[0].dim[2] << '\n';
    std::ostringstream sp;
    sp.precision(17);
    sp << c.spacing[0] << ' ' << c.spacing[1] << ' ' << c.spacing[2];
    h << "spacing: " << sp.str() << '\n';
    h << "axes: z,y,x\n";
    h << "dtype: f32\n";
    h << "label_dtype: u8\n";
    h << "modalities: t1 t1gd t2 flair\n";
    h << "labels: " << (c.labels ? 1 : 0) << '\n';
    h.close();
    for (std::size_t m = 0; m < 4; ++m) {
        if (c.modalities[m].dim != c.modalities[0].dim)
            throw MvolError("shape_mismatch", "modalities disagree on dims");
        mvol_detail::write_raw(dir / (std::string(kModalityNames[m]) + ".raw"),
                               c.modalities[m].data);
    }
    if (c.labels) {
        if (c.labels->dim != c.modalities[0].dim)
            throw MvolError("shape_mismatch", "labels disagree with modality dims");
        mvol_detail::write_raw(dir / "labels.raw", c.labels->data);
    }
}

inline VolumeCase read_case(const std::filesystem::path& dir) {
    auto kv = mvol_detail::read_header(dir);
    if (!kv.count("dims")) throw MvolError("bad_header", "header has no dims");
    const auto dims = mvol_detail::parse_dims(kv["dims"]);
    if (kv.count("dtype") && kv["dtype"] != "f32")
        throw MvolError("dtype_mismatch", "modality dtype must be f32, got " + kv["dtype"]);
    if (kv.count("label_dtype") && kv["label_dtype"] != "u8")
        throw MvolError("dtype_mismatch", "label dtype must be u8");
    VolumeCase c;
    c.case_id = dir.filename().string();
    if (kv.count("spacing")) {
        std::istringstream is(kv["spacing"]);
        if (!(is >> c.spacing[0] >> c.spacing[1] >> c.spacing[2]))
            throw MvolError("bad_header", "bad spacing: " + kv["spacing"]);
    }
    const auto n = static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
    for (std::size_t m = 0; m < 4; ++m) {
        c.modalities[m].dim = dims;
        mvol_detail::read_raw(dir / (std::string(kModalityNames[m]) + ".raw"),
                              c.modalities[m].data, n);
    }
    if (kv.count("labels") && kv["labels"] == "1") {
        Volume<std::uint8_t> lab;
        lab.dim = dims;
        mvol_detail::read_raw(dir / "labels.raw", lab.data, n);
        mvol_detail::check_labels_legal(lab);
        c.labels = std::move(lab);
    }
    return c;
}

/// Label-only case directory (prediction output).
inline void write_labels(const std::filesystem::path& dir,
                         const Volume<std::uint8_t>& labels,
                         std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
    mvol_detail::check_labels_legal(labels);
    std::filesystem::create_directories(dir);
    std::ofstream h(dir / "header.txt");
    h << "magic: MVOL1\n";
    h << "dims: " << labels.dim[0] << ' ' << labels.dim[1] << ' ' << labels.dim[2]
      << '\n';
    std::ostringstream sp;
    sp.precision(17);
    sp << spacing[0] << ' ' << spacing[1] << ' ' << spacing[2];
    h << "spacing: " << sp.str() << '\n';
    h << "axes: z,y,x\n";
    h << "label_dtype: u8\n";
    h << "labels: 1\n";
    h.close();
    mvol_detail::write_raw(dir / "labels.raw", labels.data);
}

/// Reads the label map from either a full case or a label-only directory.
inline Volume<std::uint8_t> read_labels(const std::filesystem::path& dir) {
    auto kv = mvol_detail::read_header(dir);
    if (!kv.count("dims")) throw MvolError("bad_header", "header has no dims");
    const auto dims = mvol_detail::parse_dims(kv["dims"]);
    if (!kv.count("labels") || kv["labels"] != "1")
        throw MvolError("missing_file", "case has no labels: " + dir.string());
    Volume<std::uint8_t> lab;
    lab.dim = dims;
    mvol_detail::read_raw(dir / "labels.raw", lab.data,
                          static_cast<std::size_t>(dims[0] * dims[1] * dims[2]));
    mvol_detail::check_labels_legal(lab);
    return lab;
}

inline std::array<double, 3> read_spacing(const std::filesystem::path& dir) {
    auto kv = mvol_detail::read_header(dir);
    std::array<double, 3> sp{1.0, 1.0, 1.0};
    if (kv.count("spacing")) {
        std::istringstream is(kv["spacing"]);
        is >> sp[0] >> sp[1] >> sp[2];
    }
    return sp;
}

}  // namespace ddunet

#endif  // DDUNET_MVOL_HPP
