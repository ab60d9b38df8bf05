// flexris: command-line driver for dataset generation, training, direct
// fitting, sweeps and beam-pattern probes.
//
// Exit codes: 0 ok, 1 invalid arguments, 2 I/O or corrupt input,
// 3 solver or training failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flexris/flexris.hpp"

namespace fs = std::filesystem;
using namespace flexris;

namespace {

enum Exit { ok = 0, bad_args = 1, io_error = 2, solver_failure = 3 };

struct Globals {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    std::optional<std::string> out_dir;
};

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw std::runtime_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return os;
}

void finish(std::ofstream& os, const fs::path& path) {
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

fs::path out_path(const ExperimentConfig& c, const std::optional<std::string>& given, const std::string& name) {
    return given ? fs::path(*given) : fs::path(c.output_dir) / name;
}

Scheme parse_scheme(const std::string& s) { return s == "full" ? Scheme::Full : Scheme::Diagonal; }

std::vector<double> parse_values(const std::string& s) { return config_detail::parse_list("--values", s); }

Vec3 parse_point(const std::string& name, const std::string& s) { return config_detail::parse_vec3(name, s); }

std::string num(double v) { return config_detail::fmt(v); }

ExperimentConfig base_config(const Globals& g) {
    ExperimentConfig c;
    if (!g.config_path.empty()) load_config(g.config_path, c);
    for (const auto& kv : g.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_value(c, config_detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
    }
    if (g.seed) c.seed = *g.seed;
    if (g.out_dir) c.output_dir = *g.out_dir;
    return c;
}

void announce(const std::string& command, const ExperimentConfig& c) {
    c.validate();
    std::cout << "# flexris " << command << ", effective config (threads=" << effective_threads() << ")\n";
    std::ostringstream os;
    write_config(os, c);
    std::istringstream lines(os.str());
    for (std::string line; std::getline(lines, line);) std::cout << "#   " << line << '\n';
}

void print_coeffs(const char* label, const SurfaceCoeffs& c) {
    std::cout << label;
    for (std::size_t p = 0; p < 5; ++p) std::cout << ' ' << coeff_names()[p] << '=' << num(c[p]);
    std::cout << '\n';
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::optional<std::size_t> samples;
    std::optional<double> sigma;
    std::optional<std::string> scheme;
    std::optional<bool> power_db, coords, noisy;
    std::optional<std::string> out;
};

int cmd_generate(ExperimentConfig c, const GenerateArgs& a) {
    if (a.samples) c.samples = *a.samples;
    if (a.sigma) c.sigma = *a.sigma;
    if (a.scheme) c.scheme = parse_scheme(*a.scheme);
    if (a.power_db) c.features.power_db = *a.power_db;
    if (a.coords) c.features.include_coords = *a.coords;
    if (a.noisy) c.features.noisy = *a.noisy;
    announce("generate", c);

    const Scene scene = c.scene();
    const auto ds = generate_dataset(c.samples, c.sigma, c.plan(), scene, c.seed, c.features);
    const fs::path path = out_path(c, a.out, "dataset.fris");
    {
        auto os = open_out(path);
        write_dataset(os, ds);
        finish(os, path);
    }
    // The scaler the training command will use: fitted on its training partition.
    const MinMaxScaler scaler = ds.size() >= 10 ? MinMaxScaler::fit(split(ds, c.seed).train) : MinMaxScaler::fit(ds);
    const fs::path scaler_path = fs::path(path.string() + ".scaler");
    {
        auto os = open_out(scaler_path);
        write_scaler(os, scaler);
        finish(os, scaler_path);
    }
    char sum[32];
    std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(checksum(ds)));
    std::cout << "samples=" << ds.size() << " input_dim=" << ds.input_dim << " flags=" << ds.flags << " checksum=" << sum << '\n';
    std::cout << "wrote " << path.string() << " and " << scaler_path.string() << '\n';
    return ok;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string dataset;
    std::optional<int> max_epochs, patience;
    std::optional<std::size_t> batch_size;
    std::optional<double> learning_rate;
    std::optional<std::string> out, history;
};

int cmd_train(ExperimentConfig c, const TrainArgs& a) {
    if (a.max_epochs) c.train.max_epochs = *a.max_epochs;
    if (a.patience) c.train.patience = *a.patience;
    if (a.batch_size) c.train.batch_size = *a.batch_size;
    if (a.learning_rate) c.train.learning_rate = *a.learning_rate;
    c.train.seed = c.seed;
    announce("train", c);

    const Dataset raw = load_dataset(a.dataset);
    auto res = fit_pipeline(raw, c.train, c.seed);
    const auto& h = res.history;

    const fs::path model_path = out_path(c, a.out, "model.frnn");
    {
        auto os = open_out(model_path);
        write_model(os, res.model);
        finish(os, model_path);
    }
    const fs::path history_path = out_path(c, a.history, "history.csv");
    {
        auto os = open_out(history_path);
        write_training_curves(os, h);
        finish(os, history_path);
    }

    const auto test_mse = per_parameter_mse(res.model.params, res.normalized.test);
    const auto baseline = mean_baseline_mse(res.normalized.train, res.normalized.test);
    const fs::path summary_path = fs::path(history_path).replace_extension(".summary.csv");
    {
        auto os = open_out(summary_path);
        os << "epochs,best_epoch,stopped_early,epoch1_val_mse,best_val_mse";
        for (const auto& n : coeff_names()) os << ",test_mse_" << n << ",baseline_mse_" << n;
        os << '\n'
           << h.epochs() << ',' << h.best_epoch << ',' << (h.stopped_early ? 1 : 0) << ',' << num(h.val_mse.front()) << ','
           << num(h.val_mse[static_cast<std::size_t>(h.best_epoch - 1)]);
        for (std::size_t p = 0; p < 5; ++p) os << ',' << num(test_mse[p]) << ',' << num(baseline[p]);
        os << '\n';
        finish(os, summary_path);
    }

    std::cout << "epochs=" << h.epochs() << " best_epoch=" << h.best_epoch << " stopped_early=" << (h.stopped_early ? "yes" : "no")
              << " val_mse(epoch1)=" << num(h.val_mse.front())
              << " val_mse(best)=" << num(h.val_mse[static_cast<std::size_t>(h.best_epoch - 1)]) << '\n';
    for (std::size_t p = 0; p < 5; ++p)
        std::cout << "  " << coeff_names()[p] << ": test_mse=" << num(test_mse[p]) << " mean_baseline=" << num(baseline[p]) << '\n';
    std::cout << "wrote " << model_path.string() << ", " << history_path.string() << " and " << summary_path.string() << '\n';
    return ok;
}

// ---------------------------------------------------------------------------

struct NlsArgs {
    std::optional<std::string> table;
    std::optional<double> synthesize;
    std::optional<std::string> scheme;
    std::optional<int> multistart, max_iterations;
    std::optional<std::string> out;
};

int cmd_fit_nls(ExperimentConfig c, const NlsArgs& a) {
    if (a.scheme) c.scheme = parse_scheme(*a.scheme);
    if (a.multistart) c.nls.multistart = *a.multistart;
    if (a.max_iterations) c.nls.max_iterations = *a.max_iterations;
    c.nls.seed = c.seed;
    if (a.synthesize && !(*a.synthesize >= 0.0)) throw ConfigError("--synthesize: sigma must be >= 0");
    announce("fit-nls", c);

    const Scene scene = c.scene();
    std::optional<SurfaceCoeffs> truth;
    MeasuredTable input;
    if (a.table) {
        std::ifstream is(*a.table);
        if (!is) throw FormatError("cannot open " + *a.table);
        input = read_power_table_csv(is, scene);
    } else {
        Rng rng = substream(c.seed, 0, 0x7e57);
        truth = sample_coeffs(*a.synthesize, rng);
        input.plan = c.plan();
        input.table = PowerModel(input.plan, scene).table(*truth);
    }
    const PowerModel model(input.plan, scene);

    NlsResult fit;
    try {
        fit = nls_fit(input.table, model, c.nls);
    } catch (const SolverError&) {
        std::cerr << "per-start diagnostics unavailable: every start produced a non-finite cost\n";
        throw;
    }
    for (std::size_t i = 0; i < fit.runs.size(); ++i) {
        const auto& r = fit.runs[i];
        std::cout << "start " << i << ": cost=" << num(r.cost) << " iterations=" << r.iterations
                  << " converged=" << (r.converged ? "yes" : "no") << (r.failed ? " FAILED" : "") << '\n';
    }
    if (truth) print_coeffs("truth:", *truth);
    print_coeffs("fit:  ", fit.coeffs);
    std::cout << "cost=" << num(fit.cost) << " converged=" << (fit.converged ? "yes" : "no")
              << " ambiguous=" << (fit.ambiguous ? "yes" : "no") << '\n';

    const fs::path path = out_path(c, a.out, "nls_fit.csv");
    auto os = open_out(path);
    os << "a_yy,a_zz,a_yz,a_y,a_z,cost,iterations,converged,ambiguous\n";
    for (std::size_t p = 0; p < 5; ++p) os << num(fit.coeffs[p]) << ',';
    os << num(fit.cost) << ',' << fit.iterations << ',' << (fit.converged ? 1 : 0) << ',' << (fit.ambiguous ? 1 : 0) << '\n';
    finish(os, path);
    std::cout << "wrote " << path.string() << '\n';
    return ok;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string kind;
    std::string model;
    std::optional<std::string> values;
    std::optional<std::size_t> trials;
    std::optional<bool> rician;
    std::optional<std::string> out;
};

int cmd_sweep(ExperimentConfig c, const SweepArgs& a) {
    if (a.trials) c.trials = *a.trials;
    if (a.rician) c.rician = *a.rician;
    if (a.values) (a.kind == "sigma" ? c.sweep_sigmas : c.sweep_epsilons) = parse_values(*a.values);
    announce("sweep", c);

    const Scene scene = c.scene();
    const ProposedEstimator proposed(load_model(a.model), scene, c.measurement_r);
    SweepSetup setup{scene, &proposed, c.trials, c.seed, {c.rician}};
    const SweepResult r = a.kind == "sigma" ? sweep_sigma(c.sweep_sigmas, setup)
                                            : sweep_location_error(c.sweep_epsilons, c.sweep_sigma, setup);

    const fs::path path = out_path(c, a.out, "sweep_" + a.kind + ".csv");
    auto os = open_out(path);
    write_sweep_csv(os, r);
    finish(os, path);

    for (const auto& p : r.points) {
        std::cout << a.kind << '=' << num(p.value);
        for (std::size_t d = 0; d < 3; ++d) std::cout << ' ' << to_string(all_designs[d]) << '=' << num(p.mean_db[d]) << "dB";
        std::cout << '\n';
    }
    if (a.kind == "sigma") {
        const auto x = r.crossover(DesignKind::Proposed, DesignKind::Planar);
        std::cout << "proposed first beats planar at sigma=" << (x ? num(*x) : std::string("never")) << '\n';
    }
    std::cout << "wrote " << path.string() << '\n';
    return ok;
}

// ---------------------------------------------------------------------------

struct PatternArgs {
    std::string target = "10,2,-5";
    std::string axis = "y";
    double span = 1.0;
    double step = 0.05;
    std::optional<std::string> out;
};

int cmd_pattern(ExperimentConfig c, const PatternArgs& a) {
    if (!(a.span > 0.0) || !(a.step > 0.0)) throw ConfigError("--span and --step must be positive");
    announce("pattern", c);
    const Scene scene = c.scene();
    const Vec3 target = parse_point("--target", a.target);
    const PhaseConfig phase = planar_phase(scene.grid, scene.u_bs, target, scene.kappa());
    const SurfaceCoeffs flat{};
    const double peak = received_power(flat, phase, target, scene);

    const int n = static_cast<int>(std::lround(a.span / a.step));
    std::vector<double> offsets;
    for (int i = -n; i <= n; ++i) offsets.push_back(i * a.step);

    const fs::path path = out_path(c, a.out, "pattern_" + a.axis + ".csv");
    auto os = open_out(path);
    const auto row = [&](double dx, double dy) {
        const Vec3 u{target.x + dx, target.y + dy, target.z};
        const double p = received_power(flat, phase, u, scene);
        os << num(u.x) << ',' << num(u.y) << ',' << num(u.z) << ',' << num(p) << ',' << num(linear_to_db(p / peak)) << '\n';
        return p;
    };
    if (a.axis == "y" || a.axis == "x") {
        os << "offset_m,x,y,z,power_w,relative_db\n";
        double best = -1.0, best_off = 0.0;
        for (double o : offsets) {
            os << num(o) << ',';
            const double p = a.axis == "y" ? row(0.0, o) : row(o, 0.0);
            if (p > best) best = p, best_off = o;
        }
        std::cout << "peak at offset " << num(best_off) << " m along " << a.axis << '\n';
    } else if (a.axis == "area") {
        os << "offset_x_m,offset_y_m,x,y,z,power_w,relative_db\n";
        for (double ox : offsets)
            for (double oy : offsets) {
                os << num(ox) << ',' << num(oy) << ',';
                row(ox, oy);
            }
    } else {
        throw ConfigError("--axis must be y, x or area");
    }
    finish(os, path);
    std::cout << "target power " << num(peak) << " W; wrote " << path.string() << '\n';
    return ok;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::optional<std::string> model;
    std::optional<std::string> coeffs;
    std::optional<double> sigma;
    std::optional<std::string> target;
    double epsilon = 0.0;
    std::optional<std::string> out;
};

int cmd_evaluate(ExperimentConfig c, const EvaluateArgs& a) {
    if (a.sigma) c.sweep_sigma = *a.sigma;
    if (!(a.epsilon >= 0.0)) throw ConfigError("--epsilon must be >= 0");
    announce("evaluate", c);
    const Scene scene = c.scene();

    SurfaceCoeffs truth;
    if (a.coeffs) {
        const auto v = config_detail::parse_list("--coeffs", *a.coeffs);
        if (v.size() != 5) throw ConfigError("--coeffs expects a_yy,a_zz,a_yz,a_y,a_z");
        truth = SurfaceCoeffs::from_array({v[0], v[1], v[2], v[3], v[4]});
    } else {
        Rng rng = substream(c.seed, 0, 0xe7a1);
        truth = sample_coeffs(c.sweep_sigma, rng);
    }
    Rng target_rng = substream(c.seed, 1, 0xe7a1);
    const Vec3 u_mu = a.target ? parse_point("--target", *a.target) : scene.coverage.sample(target_rng);
    const Vec3 u_design{u_mu.x + uniform(target_rng, -1.0, 1.0) * a.epsilon, u_mu.y + uniform(target_rng, -1.0, 1.0) * a.epsilon,
                        u_mu.z};

    std::optional<ProposedEstimator> proposed;
    if (a.model) proposed.emplace(load_model(*a.model), scene, c.measurement_r);

    print_coeffs("truth:", truth);
    std::cout << "target=(" << num(u_mu.x) << ',' << num(u_mu.y) << ',' << num(u_mu.z) << ")\n";
    const fs::path path = out_path(c, a.out, "evaluate.csv");
    auto os = open_out(path);
    os << "design,snr_db,a_yy,a_zz,a_yz,a_y,a_z\n";
    const double noise = scene.noise_power();
    Rng channel_rng = substream(c.seed, 2, 0xe7a1);
    for (DesignKind d : all_designs) {
        if (d == DesignKind::Proposed && !proposed) continue;
        SurfaceCoeffs used{};
        if (d == DesignKind::Oracle) used = truth;
        if (d == DesignKind::Proposed) used = proposed->estimate(truth);
        Rng rng = channel_rng;
        const double snr = eval_snr(truth, d, u_mu, scene, noise, proposed ? &*proposed : nullptr, u_design, {c.rician}, &rng);
        os << to_string(d) << ',' << num(snr);
        for (std::size_t p = 0; p < 5; ++p) os << ',' << num(used[p]);
        os << '\n';
        std::cout << to_string(d) << ": snr=" << num(snr) << " dB\n";
    }
    finish(os, path);
    std::cout << "wrote " << path.string() << '\n';
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Curved-RIS simulator and surface estimator"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_path, "key = value experiment file")->check(CLI::ExistingFile);
    app.add_option("--set", g.sets, "override one config key (key=value), repeatable");
    app.add_option("--seed", g.seed, "master seed");
    app.add_option("--threads", g.threads, "worker cap (0 = all cores)");
    app.add_option("--out-dir", g.out_dir, "directory for default output paths");

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "write a training dataset and its scaler");
    gen->add_option("-s,--s,--samples", ga.samples, "dataset size S");
    gen->add_option("--sigma", ga.sigma, "geometry spread");
    gen->add_option("--scheme", ga.scheme)->check(CLI::IsMember({"diagonal", "full"}));
    gen->add_option("--power-db", ga.power_db, "features in dB");
    gen->add_option("--coords", ga.coords, "append measurement coordinates");
    gen->add_option("--noisy", ga.noisy, "add receiver noise");
    gen->add_option("-o,--out", ga.out, "dataset path");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "train the surface regressor on a dataset");
    tr->add_option("-d,--dataset", ta.dataset)->required();
    tr->add_option("--max-epochs", ta.max_epochs);
    tr->add_option("--patience", ta.patience);
    tr->add_option("--batch-size", ta.batch_size);
    tr->add_option("--lr", ta.learning_rate);
    tr->add_option("-o,--out", ta.out, "model path");
    tr->add_option("--history", ta.history, "training-curve CSV path");

    NlsArgs na;
    auto* nls = app.add_subcommand("fit-nls", "fit the surface directly to a power table");
    auto* table_opt = nls->add_option("--table", na.table, "power table CSV");
    auto* synth_opt = nls->add_option("--synthesize", na.synthesize, "draw a surface at this sigma and fit its table");
    table_opt->excludes(synth_opt);
    nls->add_option("--scheme", na.scheme)->check(CLI::IsMember({"diagonal", "full"}));
    nls->add_option("--multistart", na.multistart);
    nls->add_option("--max-iterations", na.max_iterations);
    nls->add_option("-o,--out", na.out, "coefficient CSV path");

    SweepArgs sa;
    auto* sw = app.add_subcommand("sweep", "Monte Carlo SNR sweep over sigma or location error");
    sw->add_option("--kind", sa.kind)->required()->check(CLI::IsMember({"sigma", "error"}));
    sw->add_option("-m,--model", sa.model)->required();
    sw->add_option("--values", sa.values, "comma-separated sweep values");
    sw->add_option("--trials", sa.trials);
    sw->add_option("--rician", sa.rician, "evaluate over Rician links");
    sw->add_option("-o,--out", sa.out, "CSV path");

    PatternArgs pa;
    auto* pat = app.add_subcommand("pattern", "received-power profile around a target under the planar design");
    pat->add_option("--target", pa.target, "x,y,z")->capture_default_str();
    pat->add_option("--axis", pa.axis)->check(CLI::IsMember({"y", "x", "area"}))->capture_default_str();
    pat->add_option("--span", pa.span, "half-width of the offset grid (m)")->capture_default_str();
    pat->add_option("--step", pa.step, "offset step (m)")->capture_default_str();
    pat->add_option("-o,--out", pa.out, "CSV path");

    EvaluateArgs ea;
    auto* ev = app.add_subcommand("evaluate", "SNR of the three designs for one surface and target");
    ev->add_option("-m,--model", ea.model);
    ev->add_option("--coeffs", ea.coeffs, "a_yy,a_zz,a_yz,a_y,a_z (default: drawn at --sigma)");
    ev->add_option("--sigma", ea.sigma);
    ev->add_option("--target", ea.target, "x,y,z (default: drawn from the coverage area)");
    ev->add_option("--epsilon", ea.epsilon, "location error bound (m)");
    ev->add_option("-o,--out", ea.out, "CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : bad_args;
    }
    if (nls->parsed() && !na.table && !na.synthesize) {
        std::cerr << "fit-nls: give --table or --synthesize\n";
        return bad_args;
    }

    try {
        thread_limit() = g.threads;
        const ExperimentConfig c = base_config(g);
        if (gen->parsed()) return cmd_generate(c, ga);
        if (tr->parsed()) return cmd_train(c, ta);
        if (nls->parsed()) return cmd_fit_nls(c, na);
        if (sw->parsed()) return cmd_sweep(c, sa);
        if (pat->parsed()) return cmd_pattern(c, pa);
        if (ev->parsed()) return cmd_evaluate(c, ea);
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io_error;
    } catch (const SolverError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return solver_failure;
    } catch (const TrainingError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return solver_failure;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return bad_args;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io_error;
    }
    return bad_args;
}
