// Command-line surface for the volumetric segmentation pipeline:
// train / predict / evaluate / postprocess / gen-synth / count-params /
// grad-check. Exits 0 on success; on failure prints one line
// "error:<class>: <message>" to stderr and exits nonzero.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <random>

#include "ddunet/grad_check.hpp"
#include "ddunet/train.hpp"

namespace fs = std::filesystem;
using namespace ddunet;

namespace {

TrainConfig load_config(const std::string& path,
                        const std::vector<std::string>& overrides) {
    TrainConfig cfg = path.empty() ? TrainConfig{} : TrainConfig::load(path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key=value, got: " + kv);
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

std::array<std::int64_t, 3> parse_shape(const std::string& s) {
    std::array<std::int64_t, 3> d{};
    char x1, x2;
    std::istringstream is(s);
    if (!(is >> d[0] >> x1 >> d[1] >> x2 >> d[2]) || x1 != 'x' || x2 != 'x')
        throw std::invalid_argument("shape must be DxHxW, got: " + s);
    return d;
}

int run_grad_check() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto rand_tensor = [&](std::vector<std::int64_t> shape) {
        Tensor<double> t(std::move(shape));
        for (auto& v : t.data) v = u(rng);
        return t;
    };
    bool ok = true;
    auto report = [&](const char* name, const GradCheckResult& r) {
        const bool pass = r.max_rel_err < 1e-4 && r.checked > 0;
        ok = ok && pass;
        std::cout << (pass ? "PASS " : "FAIL ") << name
                  << "  max_rel_err=" << r.max_rel_err << "  checked=" << r.checked
                  << "  skipped=" << r.skipped << '\n';
    };

    report("conv3d+leaky_relu", grad_check(
        [&](const std::vector<VarPtr<double>>& in) {
            return sum(leaky_relu(conv3d(in[0], in[1], in[2], 1, 1, 1)));
        },
        {rand_tensor({1, 2, 4, 4, 4}), rand_tensor({3, 2, 3, 3, 3}),
         rand_tensor({3})}));
    report("max_pool3d", grad_check(
        [&](const std::vector<VarPtr<double>>& in) {
            return sum(max_pool3d(in[0]));
        },
        {rand_tensor({1, 2, 4, 4, 4})}));
    report("avg_pool3d", grad_check(
        [&](const std::vector<VarPtr<double>>& in) {
            return sum(mul(avg_pool3d(in[0]), avg_pool3d(in[0])));
        },
        {rand_tensor({1, 2, 4, 4, 4})}));
    report("upsample+sigmoid", grad_check(
        [&](const std::vector<VarPtr<double>>& in) {
            return sum(sigmoid(upsample_nearest3d(in[0])));
        },
        {rand_tensor({1, 2, 2, 2, 2})}));
    report("batch_norm3d", grad_check(
        [&](const std::vector<VarPtr<double>>& in) {
            BatchNormState<double> st(2);
            return sum(mul(batch_norm3d(in[0], in[1], in[2], st, true),
                           batch_norm3d(in[0], in[1], in[2], st, true)));
        },
        {rand_tensor({2, 2, 2, 2, 2}), rand_tensor({2}), rand_tensor({2})}));
    report("concat fan-out", grad_check(
        [&](const std::vector<VarPtr<double>>& in) {
            return sum(mul(concat_channels<double>({in[0], in[0]}),
                           concat_channels<double>({in[0], in[0]})));
        },
        {rand_tensor({1, 2, 2, 2, 2})}));

    // a whole network through the training loss
    TopologySpec spec;
    spec.pattern = Pattern::cross_skip;
    spec.stages = 3;
    spec.base_channels = 2;
    auto net = build_network<double>(spec, 11);
    Tensor<double> target({1, 3, 8, 8, 8});
    std::bernoulli_distribution bit(0.5);
    for (auto& v : target.data) v = bit(rng) ? 1.0 : 0.0;
    const auto x = rand_tensor({1, 4, 8, 8, 8});
    report("network+total_loss input grad", grad_check(
        [&](const std::vector<VarPtr<double>>& in) {
            auto n = net;  // BN running stats copied per evaluation
            return total_loss(n.forward(in[0], true), target).first;
        },
        {x}));
    std::cout << (ok ? "grad-check: all passed\n" : "grad-check: FAILURES\n");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Volumetric brain tumor segmentation with distributed dense connections"};
    app.require_subcommand(1);

    std::string config_path, resume_path, ckpt_path, case_dir, out_path;
    std::string pred_dir, gt_dir, in_dir;
    std::vector<std::string> overrides;
    int n_cases = 4;
    std::uint64_t seed = 1;
    std::string shape_str = "32x32x32";
    bool save_probs = false;

    auto* train_cmd = app.add_subcommand("train", "train a network");
    train_cmd->add_option("--config", config_path, "config file")->required();
    train_cmd->add_option("--resume", resume_path, "checkpoint to resume from");
    train_cmd->add_option("--set", overrides, "override config keys (key=value)");

    auto* predict_cmd = app.add_subcommand("predict", "segment one case");
    predict_cmd->add_option("--ckpt", ckpt_path)->required();
    predict_cmd->add_option("--case", case_dir)->required();
    predict_cmd->add_option("--out", out_path, "output directory (per-case subdir created)")
        ->required();
    predict_cmd->add_flag("--save-probs", save_probs, "also write the probability volume");

    auto* eval_cmd = app.add_subcommand("evaluate", "metrics report over two directories");
    eval_cmd->add_option("--pred", pred_dir)->required();
    eval_cmd->add_option("--gt", gt_dir)->required();
    eval_cmd->add_option("--out", out_path, "report TSV path")->required();

    auto* post_cmd = app.add_subcommand("postprocess", "apply label-map cleanup rules");
    post_cmd->add_option("--in", in_dir)->required();
    post_cmd->add_option("--out", out_path)->required();
    post_cmd->add_option("--config", config_path, "config file (postprocess keys)");
    post_cmd->add_option("--set", overrides, "override config keys (key=value)");

    auto* gen_cmd = app.add_subcommand("gen-synth", "generate synthetic cases");
    gen_cmd->add_option("--n", n_cases)->required();
    gen_cmd->add_option("--seed", seed);
    gen_cmd->add_option("--shape", shape_str, "DxHxW");
    gen_cmd->add_option("--out", out_path)->required();

    auto* count_cmd = app.add_subcommand("count-params", "parameter counts per pattern");
    count_cmd->add_option("--config", config_path);
    count_cmd->add_option("--set", overrides, "override config keys (key=value)");

    app.add_subcommand("grad-check", "finite-difference check of all differentiable ops");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) {
            const auto cfg = load_config(config_path, overrides);
            auto ck = train(cfg, resume_path.empty() ? fs::path{} : fs::path(resume_path));
            std::cout << "trained " << ck.step << " steps, checkpoints in "
                      << cfg.checkpoint_dir << '\n';
        } else if (predict_cmd->parsed()) {
            auto ck = load_checkpoint(ckpt_path);
            const auto c = read_case(case_dir);
            Tensor<float> probs;
            const auto labels = predict_case(ck, c, save_probs ? &probs : nullptr);
            const auto dst = fs::path(out_path) / c.case_id;
            write_labels(dst, labels, c.spacing);
            if (save_probs) {
                std::ofstream pf(dst / "probs.raw", std::ios::binary);
                pf.write(reinterpret_cast<const char*>(probs.data.data()),
                         static_cast<std::streamsize>(probs.data.size() * sizeof(float)));
                std::ofstream ph(dst / "probs_header.txt");
                ph << "dtype: f32\nshape:";
                for (auto d : probs.shape) ph << ' ' << d;
                ph << "\n";
            }
            std::cout << "wrote " << dst.string() << '\n';
        } else if (eval_cmd->parsed()) {
            const auto rep = evaluate_dirs(pred_dir, gt_dir);
            const auto text = format_report(rep);
            std::ofstream f(out_path);
            f << text;
            std::cout << text;
        } else if (post_cmd->parsed()) {
            const auto cfg = load_config(config_path, overrides);
            std::vector<fs::path> dirs;
            for (const auto& e : fs::directory_iterator(in_dir))
                if (e.is_directory()) dirs.push_back(e.path());
            std::sort(dirs.begin(), dirs.end());
            for (const auto& d : dirs) {
                auto labels = read_labels(d);
                labels = filter_components(std::move(labels), cfg.post.component_fraction,
                                           cfg.post.connectivity, cfg.post.per_label);
                labels = suppress_small_et(std::move(labels), cfg.post.min_et_voxels);
                write_labels(fs::path(out_path) / d.filename(), labels, read_spacing(d));
            }
            std::cout << "postprocessed " << dirs.size() << " cases\n";
        } else if (gen_cmd->parsed()) {
            const auto dim = parse_shape(shape_str);
            for (int i = 0; i < n_cases; ++i) {
                auto c = synth_case(seed + static_cast<std::uint64_t>(i), dim);
                char name[32];
                std::snprintf(name, sizeof name, "case_%03d", i);
                c.case_id = name;
                write_case(fs::path(out_path) / name, c);
            }
            std::cout << "wrote " << n_cases << " cases to " << out_path << '\n';
        } else if (count_cmd->parsed()) {
            const auto cfg = load_config(config_path, overrides);
            struct Row { Pattern p; int base; };
            const Row rows[] = {{Pattern::none, 64},
                                {Pattern::cross_skip, 32},
                                {Pattern::skip_1, 32},
                                {Pattern::skip_2, 32}};
            std::cout << "pattern\tbase_channels\tparameters\n";
            for (const auto& r : rows) {
                TopologySpec s = cfg.topology;
                s.pattern = r.p;
                s.base_channels = r.base;
                const auto net = build_network<float>(s, cfg.seed);
                std::cout << to_string(r.p) << '\t' << r.base << '\t'
                          << net.count_parameters() << '\n';
            }
        } else {  // grad-check
            return run_grad_check();
        }
    } catch (const MvolError& e) {
        std::cerr << "error:" << e.kind() << ": " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error:invalid_argument: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error:runtime: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
