#ifndef DDUNET_CONFIG_HPP
#define DDUNET_CONFIG_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ddunet/postprocess.hpp"
#include "ddunet/topology.hpp"

namespace ddunet {

/// Flat `key: value` training configuration. Defaults are the published
/// training setup; every field can be overridden from file or CLI.
struct TrainConfig {
    TopologySpec topology;
    double learning_rate = 3e-4;
    int batch_size = 4;
    int epochs = 100;
    std::int64_t max_steps = 0;  // 0 = no step limit
    std::int64_t patch_depth = 64;
    std::int64_t patch_stride = 32;
    std::array<std::int64_t, 3> crop_shape{128, 192, 192};  // depth, height, width
    double l2_weight = 0.01;
    std::string l2_mode = "pred";  // "pred" (L2 on probabilities) or "weights"
    std::uint64_t seed = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double dice_smooth = 1.0;
    bool zscore_nonzero_only = true;
    std::string data_dir;
    std::string checkpoint_dir = "checkpoints";
    PostprocessConfig post;

    void validate() const {
        topology.validate();
        if (learning_rate <= 0 || batch_size < 1 || epochs < 0 || max_steps < 0 ||
            patch_depth < 1 || patch_stride < 1 || l2_weight < 0)
            throw std::invalid_argument("config: all numeric fields must be positive");
        if (l2_mode != "pred" && l2_mode != "weights")
            throw std::invalid_argument("config: l2_mode must be pred or weights");
        for (auto c : crop_shape)
            if (c < 1) throw std::invalid_argument("config: crop shape must be positive");
    }

    void set(const std::string& key, const std::string& value) {
        auto as_i64 = [&] { return std::stoll(value); };
        auto as_int = [&] { return std::stoi(value); };
        auto as_f = [&] { return std::stod(value); };
        auto as_bool = [&] {
            if (value == "true" || value == "1") return true;
            if (value == "false" || value == "0") return false;
            throw std::invalid_argument("config: bad boolean for " + key + ": " + value);
        };
        if (key == "pattern") topology.pattern = pattern_from_string(value);
        else if (key == "stages") topology.stages = as_int();
        else if (key == "base_channels") topology.base_channels = as_int();
        else if (key == "in_channels") topology.in_channels = as_int();
        else if (key == "out_channels") topology.out_channels = as_int();
        else if (key == "bridge_method") topology.bridge = bridge_from_string(value);
        else if (key == "act_before_norm") topology.act_before_norm = as_bool();
        else if (key == "leaky_alpha") topology.leaky_alpha = as_f();
        else if (key == "init_gain") topology.init_gain = as_f();
        else if (key == "head_init_gain") topology.head_init_gain = as_f();
        else if (key == "bn_momentum") topology.bn_momentum = as_f();
        else if (key == "bn_eps") topology.bn_eps = as_f();
        else if (key == "learning_rate") learning_rate = as_f();
        else if (key == "batch_size") batch_size = as_int();
        else if (key == "epochs") epochs = as_int();
        else if (key == "max_steps") max_steps = as_i64();
        else if (key == "patch_depth") patch_depth = as_i64();
        else if (key == "patch_stride") patch_stride = as_i64();
        else if (key == "crop_depth") crop_shape[0] = as_i64();
        else if (key == "crop_height") crop_shape[1] = as_i64();
        else if (key == "crop_width") crop_shape[2] = as_i64();
        else if (key == "l2_weight") l2_weight = as_f();
        else if (key == "l2_mode") l2_mode = value;
        else if (key == "seed") seed = static_cast<std::uint64_t>(as_i64());
        else if (key == "adam_beta1") adam_beta1 = as_f();
        else if (key == "adam_beta2") adam_beta2 = as_f();
        else if (key == "adam_eps") adam_eps = as_f();
        else if (key == "dice_smooth") dice_smooth = as_f();
        else if (key == "zscore_nonzero_only") zscore_nonzero_only = as_bool();
        else if (key == "data_dir") data_dir = value;
        else if (key == "checkpoint_dir") checkpoint_dir = value;
        else if (key == "fuse_threshold") post.threshold = as_f();
        else if (key == "min_et_voxels") post.min_et_voxels = as_i64();
        else if (key == "component_fraction") post.component_fraction = as_f();
        else if (key == "connectivity") post.connectivity = as_int();
        else if (key == "filter_per_label") post.per_label = as_bool();
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }

    std::string serialize() const {
        std::ostringstream os;
        os.precision(17);
        os << "pattern: " << to_string(topology.pattern) << '\n'
           << "stages: " << topology.stages << '\n'
           << "base_channels: " << topology.base_channels << '\n'
           << "in_channels: " << topology.in_channels << '\n'
           << "out_channels: " << topology.out_channels << '\n'
           << "bridge_method: " << to_string(topology.bridge) << '\n'
           << "act_before_norm: " << (topology.act_before_norm ? "true" : "false") << '\n'
           << "leaky_alpha: " << topology.leaky_alpha << '\n'
           << "init_gain: " << topology.init_gain << '\n'
           << "head_init_gain: " << topology.head_init_gain << '\n'
           << "bn_momentum: " << topology.bn_momentum << '\n'
           << "bn_eps: " << topology.bn_eps << '\n'
           << "learning_rate: " << learning_rate << '\n'
           << "batch_size: " << batch_size << '\n'
           << "epochs: " << epochs << '\n'
           << "max_steps: " << max_steps << '\n'
           << "patch_depth: " << patch_depth << '\n'
           << "patch_stride: " << patch_stride << '\n'
           << "crop_depth: " << crop_shape[0] << '\n'
           << "crop_height: " << crop_shape[1] << '\n'
           << "crop_width: " << crop_shape[2] << '\n'
           << "l2_weight: " << l2_weight << '\n'
           << "l2_mode: " << l2_mode << '\n'
           << "seed: " << seed << '\n'
           << "adam_beta1: " << adam_beta1 << '\n'
           << "adam_beta2: " << adam_beta2 << '\n'
           << "adam_eps: " << adam_eps << '\n'
           << "dice_smooth: " << dice_smooth << '\n'
           << "zscore_nonzero_only: " << (zscore_nonzero_only ? "true" : "false") << '\n'
           << "data_dir: " << data_dir << '\n'
           << "checkpoint_dir: " << checkpoint_dir << '\n'
           << "fuse_threshold: " << post.threshold << '\n'
           << "min_et_voxels: " << post.min_et_voxels << '\n'
           << "component_fraction: " << post.component_fraction << '\n'
           << "connectivity: " << post.connectivity << '\n'
           << "filter_per_label: " << (post.per_label ? "true" : "false") << '\n';
        return os.str();
    }

    static TrainConfig parse(std::istream& in) {
        TrainConfig cfg;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            const auto colon = line.find(':');
            if (colon == std::string::npos)
                throw std::invalid_argument("config: malformed line: " + line);
            std::string key = line.substr(0, colon);
            std::string val = line.substr(colon + 1);
            const auto strip = [](std::string& s) {
                const auto b = s.find_first_not_of(" \t");
                const auto e = s.find_last_not_of(" \t");
                s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
            };
            strip(key);
            strip(val);
            cfg.set(key, val);
        }
        return cfg;
    }

    static TrainConfig load(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("config: cannot open " + path.string());
        return parse(f);
    }
};

}  // namespace ddunet

#endif  // DDUNET_CONFIG_HPP
