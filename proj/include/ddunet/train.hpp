#ifndef DDUNET_TRAIN_HPP
#define DDUNET_TRAIN_HPP

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ddunet/adam.hpp"
#include "ddunet/config.hpp"
#include "ddunet/loss.hpp"
#include "ddunet/metrics.hpp"
#include "ddunet/network.hpp"
#include "ddunet/pipeline.hpp"
#include "ddunet/postprocess.hpp"

namespace ddunet {

namespace detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

template <typename T>
std::vector<ConvBlock<T>*> collect_blocks(Network<T>& net) {
    std::vector<ConvBlock<T>*> blocks;
    for (int s = 0; s < net.spec.stages; ++s) {
        blocks.push_back(&net.enc_a[s]);
        blocks.push_back(&net.enc_b[s]);
    }
    for (int s = 0; s < net.spec.stages - 1; ++s) {
        blocks.push_back(&net.dec_a[s]);
        blocks.push_back(&net.dec_b[s]);
    }
    return blocks;
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated");
}
inline void write_tensor(std::ostream& os, const Tensor<float>& t) {
    write_pod(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) write_pod(os, d);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}
inline Tensor<float> read_tensor(std::istream& is) {
    std::uint32_t nd;
    read_pod(is, nd);
    std::vector<std::int64_t> shape(nd);
    for (auto& d : shape) read_pod(is, d);
    Tensor<float> t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor payload");
    return t;
}

}  // namespace detail

struct Checkpoint {
    TrainConfig config;
    Network<float> net;
    AdamState<float> adam;
    std::int64_t epoch = 0;
    std::int64_t step = 0;
    std::string rng_state;
};

inline void save_checkpoint(const std::filesystem::path& path, Checkpoint& ck) {
    std::filesystem::create_directories(path.parent_path().empty()
                                            ? std::filesystem::path(".")
                                            : path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string());
    os.write("DDUNCKP1", 8);
    const std::string cfg = ck.config.serialize();
    detail::write_pod(os, static_cast<std::uint64_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    auto params = ck.net.parameters();
    detail::write_pod(os, static_cast<std::uint64_t>(params.size()));
    for (const auto& p : params) detail::write_tensor(os, p->value);
    auto blocks = detail::collect_blocks(ck.net);
    detail::write_pod(os, static_cast<std::uint64_t>(blocks.size()));
    for (auto* b : blocks) {
        detail::write_tensor(os, b->bn.running_mean);
        detail::write_tensor(os, b->bn.running_var);
    }
    detail::write_pod(os, ck.adam.t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        detail::write_tensor(os, ck.adam.m[i]);
        detail::write_tensor(os, ck.adam.v[i]);
    }
    detail::write_pod(os, ck.epoch);
    detail::write_pod(os, ck.step);
    detail::write_pod(os, static_cast<std::uint64_t>(ck.rng_state.size()));
    os.write(ck.rng_state.data(), static_cast<std::streamsize>(ck.rng_state.size()));
    if (!os) throw std::runtime_error("checkpoint: short write to " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != "DDUNCKP1")
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    std::uint64_t cfg_len;
    detail::read_pod(is, cfg_len);
    std::string cfg_text(cfg_len, '\0');
    is.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
    std::istringstream cfg_stream(cfg_text);
    Checkpoint ck;
    ck.config = TrainConfig::parse(cfg_stream);
    ck.net = build_network<float>(ck.config.topology, ck.config.seed);
    auto params = ck.net.parameters();
    std::uint64_t n_params;
    detail::read_pod(is, n_params);
    if (n_params != params.size())
        throw std::runtime_error("checkpoint: parameter count mismatch");
    for (auto& p : params) {
        auto t = detail::read_tensor(is);
        if (t.shape != p->value.shape)
            throw std::runtime_error("checkpoint: parameter shape mismatch");
        p->value = std::move(t);
    }
    auto blocks = detail::collect_blocks(ck.net);
    std::uint64_t n_blocks;
    detail::read_pod(is, n_blocks);
    if (n_blocks != blocks.size())
        throw std::runtime_error("checkpoint: batch-norm block count mismatch");
    for (auto* b : blocks) {
        b->bn.running_mean = detail::read_tensor(is);
        b->bn.running_var = detail::read_tensor(is);
    }
    ck.adam.init_like(params);
    detail::read_pod(is, ck.adam.t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        ck.adam.m[i] = detail::read_tensor(is);
        ck.adam.v[i] = detail::read_tensor(is);
    }
    detail::read_pod(is, ck.epoch);
    detail::read_pod(is, ck.step);
    std::uint64_t rng_len;
    detail::read_pod(is, rng_len);
    ck.rng_state.resize(rng_len);
    is.read(ck.rng_state.data(), static_cast<std::streamsize>(rng_len));
    if (!is) throw std::runtime_error("checkpoint: truncated " + path.string());
    return ck;
}

/// One case preprocessed for training: standardized, cropped, remapped,
/// and cut into depth patches.
struct PreparedCase {
    std::string id;
    std::vector<std::int64_t> offsets;
    std::vector<Tensor<float>> inputs;   // [4,pd,H,W]
    std::vector<Tensor<float>> targets;  // [3,pd,H,W]
};

inline PreparedCase prepare_case(const VolumeCase& c, const TrainConfig& cfg) {
    if (!c.labels)
        throw std::runtime_error("training case " + c.case_id + " has no labels");
    const auto crop = compute_crop(
        c, {cfg.crop_shape[0], cfg.crop_shape[1], cfg.crop_shape[2]});
    std::array<Volume<float>, 4> prepped;
    for (std::size_t m = 0; m < 4; ++m)
        prepped[m] = apply_crop(zscore(c.modalities[m], cfg.zscore_nonzero_only), crop);
    const auto target_full = remap_labels(apply_crop(*c.labels, crop));
    auto set = extract_patches(prepped, cfg.patch_depth, cfg.patch_stride);
    PreparedCase out;
    out.id = c.case_id;
    out.offsets = set.offsets;
    out.inputs = std::move(set.patches);
    for (auto o : out.offsets)
        out.targets.push_back(slice_depth(target_full, o, cfg.patch_depth));
    return out;
}

namespace detail {
inline Tensor<float> stack_batch(const std::vector<const Tensor<float>*>& items) {
    const auto& s = items.front()->shape;
    Tensor<float> out({static_cast<std::int64_t>(items.size()), s[0], s[1], s[2], s[3]});
    const std::int64_t per = items.front()->numel();
    for (std::size_t i = 0; i < items.size(); ++i)
        std::copy(items[i]->data.begin(), items[i]->data.end(),
                  out.data.begin() + static_cast<std::int64_t>(i) * per);
    return out;
}
}  // namespace detail

/// Full training loop: per epoch, shuffle cases, batch their patches,
/// forward/loss/backward/Adam, one tab-separated log record per step, one
/// checkpoint per epoch. `resume` continues a run from an epoch-boundary
/// checkpoint and reproduces the uninterrupted run exactly.
inline Checkpoint train(const TrainConfig& cfg_in,
                        const std::filesystem::path& resume = {}) {
    TrainConfig cfg = cfg_in;
    cfg.validate();
    if (cfg.data_dir.empty())
        throw std::invalid_argument("train: data_dir is not set");
    std::vector<std::filesystem::path> case_dirs;
    for (const auto& e : std::filesystem::directory_iterator(cfg.data_dir))
        if (e.is_directory()) case_dirs.push_back(e.path());
    std::sort(case_dirs.begin(), case_dirs.end());
    if (case_dirs.empty())
        throw std::runtime_error("train: no cases found in " + cfg.data_dir);

    // fail fast on divisibility before any step
    const std::int64_t div = cfg.topology.divisibility();
    if (cfg.patch_depth % div || cfg.crop_shape[1] % div || cfg.crop_shape[2] % div)
        throw std::invalid_argument(
            "train: patch depth and crop height/width must be divisible by " +
            std::to_string(div));

    std::vector<PreparedCase> cases;
    for (const auto& d : case_dirs) cases.push_back(prepare_case(read_case(d), cfg));

    Checkpoint ck;
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5de10ca7u);
    if (resume.empty()) {
        ck.config = cfg;
        ck.net = build_network<float>(cfg.topology, cfg.seed);
        ck.adam.init_like(ck.net.parameters());
    } else {
        ck = load_checkpoint(resume);
        ck.config = cfg;
        std::istringstream rs(ck.rng_state);
        rs >> shuffle_rng;
    }
    auto params = ck.net.parameters();
    std::int64_t total_param_count = 0;
    for (const auto& p : params) total_param_count += p->value.numel();

    std::filesystem::create_directories(cfg.checkpoint_dir);
    const auto log_path = std::filesystem::path(cfg.checkpoint_dir) / "train_log.tsv";
    std::ofstream log(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
    if (resume.empty())
        log << "step\tepoch\tbatch\tdice_et\tdice_tc\tdice_wt\tdice_mean\tl2\ttotal\n";

    auto save_as = [&](const std::string& name) {
        std::ostringstream rs;
        rs << shuffle_rng;
        ck.rng_state = rs.str();
        save_checkpoint(std::filesystem::path(cfg.checkpoint_dir) / name, ck);
    };

    const auto lr = static_cast<float>(cfg.learning_rate);
    const auto b1 = static_cast<float>(cfg.adam_beta1);
    const auto b2 = static_cast<float>(cfg.adam_beta2);
    const auto aeps = static_cast<float>(cfg.adam_eps);
    bool done = false;
    for (std::int64_t epoch = ck.epoch; epoch < cfg.epochs && !done; ++epoch) {
        std::vector<std::size_t> order(cases.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        std::vector<std::pair<std::size_t, std::size_t>> patch_seq;  // (case, patch)
        for (auto ci : order)
            for (std::size_t pi = 0; pi < cases[ci].inputs.size(); ++pi)
                patch_seq.emplace_back(ci, pi);

        for (std::size_t start = 0; start < patch_seq.size() && !done;
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(patch_seq.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const Tensor<float>*> xs, ys;
            for (std::size_t i = start; i < end; ++i) {
                xs.push_back(&cases[patch_seq[i].first].inputs[patch_seq[i].second]);
                ys.push_back(&cases[patch_seq[i].first].targets[patch_seq[i].second]);
            }
            auto x = make_leaf(detail::stack_batch(xs), false);
            const auto target = detail::stack_batch(ys);

            ck.net.zero_grad();
            auto out = ck.net.forward(x, true);
            const double pred_l2_w = cfg.l2_mode == "pred" ? cfg.l2_weight : 0.0;
            auto [loss, bd] = total_loss(out, target, pred_l2_w, cfg.dice_smooth);
            backward(loss);
            if (cfg.l2_mode == "weights") {
                // weight-decay style: w * mean(theta^2) added to the loss
                double sq = 0.0;
                const double coef = 2.0 * cfg.l2_weight / static_cast<double>(total_param_count);
                for (auto& p : params) {
                    p->ensure_grad();
                    for (std::int64_t j = 0; j < p->value.numel(); ++j) {
                        sq += static_cast<double>(p->value.data[j]) * p->value.data[j];
                        p->grad.data[j] += static_cast<float>(coef * p->value.data[j]);
                    }
                }
                bd.l2_term = sq / static_cast<double>(total_param_count);
                bd.total = bd.dice_mean + cfg.l2_weight * bd.l2_term;
            }
            adam_step(params, ck.adam, lr, b1, b2, aeps);
            ++ck.step;
            log << ck.step << '\t' << epoch << '\t' << (end - start) << '\t'
                << detail::fmt(bd.dice_per_class[0]) << '\t'
                << detail::fmt(bd.dice_per_class[1]) << '\t'
                << detail::fmt(bd.dice_per_class[2]) << '\t'
                << detail::fmt(bd.dice_mean) << '\t' << detail::fmt(bd.l2_term)
                << '\t' << detail::fmt(bd.total) << '\n';
            if (cfg.max_steps > 0 && ck.step >= cfg.max_steps) done = true;
        }
        ck.epoch = epoch + 1;
        char name[64];
        std::snprintf(name, sizeof name, "ckpt_epoch_%04lld.bin",
                      static_cast<long long>(ck.epoch));
        save_as(name);
        save_as("ckpt_last.bin");
    }
    if (ck.epoch == 0) save_as("ckpt_last.bin");
    return ck;
}

/// Inference for one case: standardize, crop, patch, eval-mode forward,
/// mean-blend reconstruction, postprocessing, and restore to the original
/// dims (region outside the crop window is background).
inline Volume<std::uint8_t> predict_case(Checkpoint& ck, const VolumeCase& c,
                                         Tensor<float>* probs_out = nullptr) {
    const auto& cfg = ck.config;
    const auto crop = compute_crop(
        c, {cfg.crop_shape[0], cfg.crop_shape[1], cfg.crop_shape[2]});
    std::array<Volume<float>, 4> prepped;
    for (std::size_t m = 0; m < 4; ++m)
        prepped[m] = apply_crop(zscore(c.modalities[m], cfg.zscore_nonzero_only), crop);
    auto set = extract_patches(prepped, cfg.patch_depth, cfg.patch_stride);
    std::vector<std::pair<std::int64_t, Tensor<float>>> preds;
    for (std::size_t i = 0; i < set.patches.size(); ++i) {
        const auto& p = set.patches[i];
        Tensor<float> batched({1, p.shape[0], p.shape[1], p.shape[2], p.shape[3]},
                              p.data);
        auto out = ck.net.forward(make_leaf(std::move(batched), false), false);
        Tensor<float> squeezed({out->value.shape[1], out->value.shape[2],
                                out->value.shape[3], out->value.shape[4]},
                               std::move(out->value.data));
        preds.emplace_back(set.offsets[i], std::move(squeezed));
    }
    auto probs = reconstruct(preds, set.full_shape);
    if (probs_out) *probs_out = probs;
    const auto cropped_labels = postprocess(probs, cfg.post);
    return undo_crop(cropped_labels, crop);
}

// ---- evaluation report ----

struct RegionMetrics {
    double dice = 0, sens = 0, spec = 0;
    Hd95Result hd;
};
struct CaseMetrics {
    std::string id;
    std::array<RegionMetrics, 3> regions;  // ET, TC, WT
};
struct MetricsReport {
    std::vector<CaseMetrics> cases;
    std::vector<std::string> missing;  // ids present in gt but not in pred
};

inline constexpr std::array<const char*, 3> kRegionNames{"ET", "TC", "WT"};

inline Volume<std::uint8_t> region_mask(const Volume<std::uint8_t>& labels, int region) {
    Volume<std::uint8_t> m(labels.dim, 0);
    for (std::size_t i = 0; i < labels.data.size(); ++i) {
        const auto l = labels.data[i];
        const bool in = region == 0 ? l == 4
                        : region == 1 ? (l == 1 || l == 4)
                                      : (l == 1 || l == 2 || l == 4);
        m.data[i] = in ? 1 : 0;
    }
    return m;
}

inline CaseMetrics evaluate_case(const std::string& id,
                                 const Volume<std::uint8_t>& pred,
                                 const Volume<std::uint8_t>& gt,
                                 std::array<double, 3> spacing = {1, 1, 1}) {
    CaseMetrics cm;
    cm.id = id;
    for (int r = 0; r < 3; ++r) {
        const auto pm = region_mask(pred, r);
        const auto gm = region_mask(gt, r);
        const auto c = confusion(pm, gm);
        cm.regions[r].dice = dice_score(c);
        cm.regions[r].sens = sensitivity(c);
        cm.regions[r].spec = specificity(c);
        cm.regions[r].hd = hausdorff95(pm, gm, spacing);
    }
    return cm;
}

inline MetricsReport evaluate_dirs(const std::filesystem::path& pred_dir,
                                   const std::filesystem::path& gt_dir) {
    MetricsReport rep;
    std::vector<std::filesystem::path> gt_cases;
    for (const auto& e : std::filesystem::directory_iterator(gt_dir))
        if (e.is_directory()) gt_cases.push_back(e.path());
    std::sort(gt_cases.begin(), gt_cases.end());
    if (gt_cases.empty())
        throw std::runtime_error("evaluate: no cases in " + gt_dir.string());
    for (const auto& g : gt_cases) {
        const auto id = g.filename().string();
        const auto p = pred_dir / id;
        if (!std::filesystem::exists(p / "header.txt")) {
            rep.missing.push_back(id);
            continue;
        }
        rep.cases.push_back(
            evaluate_case(id, read_labels(p), read_labels(g), read_spacing(g)));
    }
    return rep;
}

inline std::string format_report(const MetricsReport& rep) {
    std::ostringstream os;
    os << "case\tregion\tdice\tsensitivity\tspecificity\thd95\n";
    for (const auto& c : rep.cases)
        for (int r = 0; r < 3; ++r) {
            const auto& m = c.regions[r];
            os << c.id << '\t' << kRegionNames[r] << '\t' << detail::fmt(m.dice)
               << '\t' << detail::fmt(m.sens) << '\t' << detail::fmt(m.spec) << '\t'
               << (m.hd.defined ? detail::fmt(m.hd.value) : std::string("NA")) << '\n';
        }
    for (const auto& id : rep.missing) os << "missing\t" << id << "\t\t\t\t\n";
    if (rep.cases.empty()) return os.str();

    auto stats_line = [&](const char* stat, auto&& pick) {
        for (int r = 0; r < 3; ++r) {
            std::array<std::vector<double>, 4> cols;  // dice, sens, spec, hd95
            for (const auto& c : rep.cases) {
                cols[0].push_back(c.regions[r].dice);
                cols[1].push_back(c.regions[r].sens);
                cols[2].push_back(c.regions[r].spec);
                if (c.regions[r].hd.defined) cols[3].push_back(c.regions[r].hd.value);
            }
            os << stat << '\t' << kRegionNames[r];
            for (const auto& col : cols)
                os << '\t' << (col.empty() ? std::string("NA") : detail::fmt(pick(col)));
            os << '\n';
        }
    };
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (auto x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    os << "stat\tregion\tdice\tsensitivity\tspecificity\thd95\n";
    stats_line("Mean", mean);
    stats_line("StdDev", [&](const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        const double mu = mean(v);
        double s = 0;
        for (auto x : v) s += (x - mu) * (x - mu);
        return std::sqrt(s / static_cast<double>(v.size() - 1));
    });
    stats_line("Median", [](const std::vector<double>& v) { return nearest_rank(v, 0.5); });
    stats_line("25quantile", [](const std::vector<double>& v) { return nearest_rank(v, 0.25); });
    stats_line("75quantile", [](const std::vector<double>& v) { return nearest_rank(v, 0.75); });
    for (int r = 0; r < 3; ++r) {
        std::size_t undef = 0;
        for (const auto& c : rep.cases)
            if (!c.regions[r].hd.defined) ++undef;
        os << "hd95_undefined\t" << kRegionNames[r] << '\t' << undef << "\t\t\t\n";
    }
    return os.str();
}

}  // namespace ddunet

#endif  // DDUNET_TRAIN_HPP
