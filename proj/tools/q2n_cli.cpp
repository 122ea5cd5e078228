#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "q2n/calibgen.hpp"
#include "q2n/linalg.hpp"
#include "q2n/nullspace.hpp"
#include "q2n/pipeline.hpp"
#include "q2n/quantizer.hpp"
#include "q2n/tensorio.hpp"

namespace {

using namespace q2n;

std::vector<double> parse_grid(const std::string& csv) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        std::size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        std::string item = csv.substr(pos, comma - pos);
        if (!item.empty()) {
            try {
                out.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw argument_error("cannot parse grid value \"" + item + "\"");
            }
        }
        pos = comma + 1;
    }
    if (out.empty()) throw argument_error("empty grid \"" + csv + "\"");
    return out;
}

std::vector<int64_t> parse_sizes(const std::string& csv) {
    std::vector<int64_t> out;
    for (double v : parse_grid(csv)) out.push_back(static_cast<int64_t>(v));
    return out;
}

struct BundleArgs {
    std::string weights_path;
    std::string acts_path;
    std::string dir;
    std::string name;
    std::string layer_name = "layer";
};

void add_bundle_options(CLI::App* cmd, BundleArgs& args) {
    cmd->add_option("weights", args.weights_path, "weight tensor (.q2nt)");
    cmd->add_option("acts", args.acts_path, "activation tensor (.q2nt)");
    cmd->add_option("--dir", args.dir, "directory holding <name>.weight.q2nt / <name>.acts.q2nt");
    cmd->add_option("--name", args.name, "bundle name inside --dir");
    cmd->add_option("--layer-name", args.layer_name, "label for the report rows");
}

LayerBundle load_bundle(const BundleArgs& args) {
    if (!args.dir.empty() || !args.name.empty()) {
        if (args.dir.empty() || args.name.empty()) {
            throw argument_error("--dir and --name must be given together");
        }
        return load_layer_bundle(args.dir, args.name);
    }
    if (args.weights_path.empty() || args.acts_path.empty()) {
        throw argument_error("expected <weights.q2nt> <acts.q2nt> or --dir/--name");
    }
    LayerBundle b;
    b.name = args.layer_name;
    b.weight = load_tensor(args.weights_path);
    b.activations = load_tensor(args.acts_path);
    validate_bundle(b);
    return b;
}

struct QuantArgs {
    int bits = 2;
    int64_t group = -1; // -1: pick default from bits and column count
    std::string quantizer = "gptq";
    std::string selector = "psr";
    double t = kDefaultRatioThreshold;
    double lambda_reg = kDefaultLambdaReg;
    int64_t exclude_top = kDefaultExcludedTop;
    double damp = 0.01;
    bool no_q2n = false;
};

void add_quant_options(CLI::App* cmd, QuantArgs& args) {
    cmd->add_option("--bits", args.bits, "quantization bit width (2-8)");
    cmd->add_option("--group", args.group, "group size (0 = per-row; default 128 for 2-bit)");
    cmd->add_option("--quantizer", args.quantizer, "rtn or gptq")
        ->check(CLI::IsMember({"rtn", "gptq"}));
    cmd->add_option("--selector", args.selector, "psr, torch or nscl")
        ->check(CLI::IsMember({"psr", "torch", "nscl"}));
    cmd->add_option("--t", args.t, "prefix-suffix ratio threshold");
    cmd->add_option("--lambda", args.lambda_reg, "regularization coefficient");
    cmd->add_option("--exclude-top", args.exclude_top, "leading eigenvalues excluded from the ratio");
    cmd->add_option("--damp", args.damp, "gptq damping fraction");
    cmd->add_flag("--no-q2n", args.no_q2n, "skip the correction (alpha = 1 baseline)");
}

RunOptions make_run_options(const QuantArgs& args, int64_t weight_cols) {
    RunOptions opts;
    opts.qcfg.bits = args.bits;
    if (args.group >= 0) {
        opts.qcfg.group_size = args.group;
    } else {
        opts.qcfg.group_size =
            (args.bits == 2 && weight_cols % 128 == 0 && weight_cols > 128) ? 128 : kPerRow;
    }
    opts.quantizer = quantizer_from_name(args.quantizer);
    opts.selector = selector_from_name(args.selector);
    opts.t = args.t;
    opts.lambda_reg = args.lambda_reg;
    opts.excluded_top = args.exclude_top;
    opts.damp = args.damp;
    opts.apply_correction = !args.no_q2n;

    // Fail fast on bad numeric flags before any heavy work.
    validate_quant_config(opts.qcfg, weight_cols);
    if (!(opts.t > 0.0)) throw argument_error("--t must be > 0");
    if (!(opts.lambda_reg > 0.0)) throw argument_error("--lambda must be > 0");
    if (!(opts.damp > 0.0 && opts.damp <= 1.0)) throw argument_error("--damp must lie in (0, 1]");
    if (opts.excluded_top < 0) throw argument_error("--exclude-top must be >= 0");
    return opts;
}

Tensor codes_as_tensor(const QuantResult& q) {
    Tensor t(q.codes.rows, q.codes.cols);
    for (std::size_t i = 0; i < q.codes.data.size(); ++i) {
        t.data[i] = static_cast<double>(q.codes.data[i]);
    }
    return t;
}

int cmd_gen(const std::string& kind, int64_t m, int64_t c, int64_t r, double rate, int64_t k,
            double noise, int64_t n, double scale, uint64_t seed, const std::string& out) {
    Tensor t;
    if (kind == "weights") {
        t = gen_weights(n, m, seed, scale);
    } else if (kind == "exact-rank") {
        t = gen_activations(SpectrumSpec::exact(m, c, r, seed));
    } else if (kind == "decay") {
        t = gen_activations(SpectrumSpec::decaying(m, c, rate, seed));
    } else if (kind == "dominant") {
        t = gen_activations(SpectrumSpec::dominant_noise(m, c, k, noise, seed));
    } else {
        throw argument_error("unknown --kind \"" + kind + "\"");
    }
    save_tensor(t, out);
    std::fprintf(stderr, "wrote %s (%lld x %lld)\n", out.c_str(), static_cast<long long>(t.rows),
                 static_cast<long long>(t.cols));
    return 0;
}

int cmd_run(const BundleArgs& bargs, const QuantArgs& qargs, const std::string& out_prefix) {
    LayerBundle bundle = load_bundle(bargs);
    RunOptions opts = make_run_options(qargs, bundle.weight.cols);
    RunOutcome outcome = run_q2n(bundle, opts);

    if (!out_prefix.empty()) {
        save_tensor(codes_as_tensor(outcome.result), out_prefix + ".codes" + kTensorExtension);
        save_tensor(outcome.result.scales, out_prefix + ".scales" + kTensorExtension);
        save_tensor(outcome.result.zeros, out_prefix + ".zeros" + kTensorExtension);
        std::FILE* f = std::fopen((out_prefix + ".report.json").c_str(), "wb");
        if (!f) throw io_error("cannot write " + out_prefix + ".report.json");
        std::string json = report_json(outcome.report);
        std::fwrite(json.data(), 1, json.size(), f);
        std::fclose(f);
    }
    std::printf("%s\n%s\n", kReportCsvHeader, report_csv_row(outcome.report).c_str());
    return 0;
}

int cmd_sweep(const BundleArgs& bargs, const QuantArgs& qargs, const std::string& t_grid_csv,
              const std::string& lambda_grid_csv) {
    LayerBundle bundle = load_bundle(bargs);
    RunOptions opts = make_run_options(qargs, bundle.weight.cols);
    std::vector<double> t_grid = parse_grid(t_grid_csv);
    std::vector<double> lambda_grid = parse_grid(lambda_grid_csv);
    std::vector<LayerReport> rows = sweep(bundle, opts, t_grid, lambda_grid);
    std::printf("%s\n", kReportCsvHeader);
    for (const LayerReport& r : rows) std::printf("%s\n", report_csv_row(r).c_str());
    return 0;
}

int cmd_bench(const std::string& sizes_csv, uint64_t seed) {
    std::vector<int64_t> sizes = parse_sizes(sizes_csv);
    std::vector<BenchRow> rows = bench_decomposition(sizes, seed);
    std::printf("m,ms_eig,ms_svd,speedup,max_disc\n");
    for (const BenchRow& r : rows) {
        std::printf("%lld,%s,%s,%s,%s\n", static_cast<long long>(r.m),
                    format_double(r.ms_eig).c_str(), format_double(r.ms_svd).c_str(),
                    format_double(r.speedup).c_str(), format_double(r.max_disc).c_str());
    }
    return 0;
}

int cmd_compare_bp(const BundleArgs& bargs, const QuantArgs& qargs) {
    LayerBundle bundle = load_bundle(bargs);
    RunOptions opts = make_run_options(qargs, bundle.weight.cols);

    Tensor g = gram(bundle.activations);
    QuantResult baseline = opts.quantizer == QuantizerKind::rtn
                               ? rtn_quantize(bundle.weight, opts.qcfg)
                               : gptq_quantize_with_gram(bundle.weight, g, opts.qcfg, opts.damp);
    EigenBasis basis = sym_eig(g);
    RatioSelection sel = opts.selector == SelectorKind::psr
                             ? select_rank_index(basis.values, opts.t, opts.excluded_top)
                         : opts.selector == SelectorKind::torch_rank
                             ? select_rank_torch_style(basis.values)
                             : select_rank_nscl_style(basis.values);
    NullSpaceProjection proj = build_projection(basis, sel);

    AlphaVector closed = solve_alpha(bundle.weight, baseline.w_q, proj.delta, opts.lambda_reg);
    double obj_closed = alpha_objective(bundle.weight, baseline.w_q, proj.delta, closed.values,
                                        opts.lambda_reg);

    std::printf("epochs,lr,obj_bp,obj_closed,gap,diverged\n");
    for (int64_t epochs : kBpEpochPresets) {
        for (double lr : kBpLearningRatePresets) {
            BpStats stats;
            bp_oracle(bundle.weight, baseline.w_q, proj.delta, opts.lambda_reg, epochs, lr, &stats);
            std::printf("%lld,%s,%s,%s,%s,%d\n", static_cast<long long>(epochs),
                        format_double(lr).c_str(), format_double(stats.objective).c_str(),
                        format_double(obj_closed).c_str(),
                        format_double(stats.objective - obj_closed).c_str(),
                        stats.diverged ? 1 : 0);
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"null-space post-quantization optimizer"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate synthetic weight/activation fixtures");
    std::string gen_kind = "exact-rank";
    int64_t gen_m = 8, gen_c = 32, gen_r = 2, gen_k = 1, gen_n = 8;
    double gen_rate = 0.5, gen_noise = 1e-3, gen_scale = 1.0;
    uint64_t gen_seed = 0;
    std::string gen_out;
    gen->add_option("--kind", gen_kind, "exact-rank, decay, dominant or weights")
        ->check(CLI::IsMember({"exact-rank", "decay", "dominant", "weights"}));
    gen->add_option("--m", gen_m, "activation rows / weight columns");
    gen->add_option("--c", gen_c, "calibration sample count");
    gen->add_option("--r", gen_r, "exact rank (exact-rank)");
    gen->add_option("--rate", gen_rate, "singular value decay rate (decay)");
    gen->add_option("--k", gen_k, "dominant direction count (dominant)");
    gen->add_option("--noise", gen_noise, "noise floor amplitude (dominant)");
    gen->add_option("--n", gen_n, "weight row count (weights)");
    gen->add_option("--scale", gen_scale, "weight standard deviation (weights)");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("-o,--out", gen_out, "output .q2nt path")->required();

    // run
    auto* run = app.add_subcommand("run", "quantize one layer and apply the null-space correction");
    BundleArgs run_bundle;
    QuantArgs run_quant;
    std::string run_out;
    add_bundle_options(run, run_bundle);
    add_quant_options(run, run_quant);
    run->add_option("-o,--out", run_out, "output prefix for codes/scales/zeros/report");

    // sweep
    auto* swp = app.add_subcommand("sweep", "grid search over t and lambda");
    BundleArgs sweep_bundle;
    QuantArgs sweep_quant;
    std::string sweep_t_grid = "0.1";
    std::string sweep_lambda_grid = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
    add_bundle_options(swp, sweep_bundle);
    add_quant_options(swp, sweep_quant);
    swp->add_option("--t-grid", sweep_t_grid, "comma-separated t values");
    swp->add_option("--lambda-grid", sweep_lambda_grid, "comma-separated lambda values");

    // bench
    auto* bench = app.add_subcommand("bench", "time sym_eig against svd_oracle");
    std::string bench_sizes = "64,128,256";
    uint64_t bench_seed = 0;
    bench->add_option("--sizes", bench_sizes, "comma-separated matrix sizes");
    bench->add_option("--seed", bench_seed, "matrix generator seed");

    // compare-bp
    auto* cbp = app.add_subcommand("compare-bp",
                                   "closed-form alpha against gradient descent presets");
    BundleArgs cbp_bundle;
    QuantArgs cbp_quant;
    add_bundle_options(cbp, cbp_bundle);
    add_quant_options(cbp, cbp_quant);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            return cmd_gen(gen_kind, gen_m, gen_c, gen_r, gen_rate, gen_k, gen_noise, gen_n,
                           gen_scale, gen_seed, gen_out);
        }
        if (run->parsed()) return cmd_run(run_bundle, run_quant, run_out);
        if (swp->parsed()) return cmd_sweep(sweep_bundle, sweep_quant, sweep_t_grid, sweep_lambda_grid);
        if (bench->parsed()) return cmd_bench(bench_sizes, bench_seed);
        if (cbp->parsed()) return cmd_compare_bp(cbp_bundle, cbp_quant);
    } catch (const q2n::argument_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const q2n::dimension_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const q2n::numerical_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const q2n::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
