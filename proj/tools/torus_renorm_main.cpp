// Command-line front end: eliminate / iterate / spectrum / winding /
// conjugacy / run. One JSON config schema is shared by all subcommands;
// flags override config keys. Exit codes: 0 success, 1 numerical failure,
// 2 config error.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "torus/experiment.hpp"
#include "torus/flow.hpp"
#include "torus/spectral.hpp"

using nlohmann::json;
using namespace torus;

namespace {

struct CommonOpts {
    std::string basis = "golden";
    std::string config_path;
    int K = -1;
    double rho = -1.0;
    double rho_prime = -1.0;
    std::string sigma;  // "", "auto" or a number
    double kappa = -1.0;
    std::string linsolve;
    int iters = -1;
    int lambda_steps = -1;
    int newton_polish = -1;
    double residual_tol = -1.0;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--basis", o.basis, "golden, plastic or file:PATH");
    cmd->add_option("--config", o.config_path, "JSON config file (flags override its keys)");
    cmd->add_option("--K", o.K, "truncation radius");
    cmd->add_option("--rho", o.rho, "outer analyticity radius");
    cmd->add_option("--rho-prime", o.rho_prime, "inner analyticity radius");
    cmd->add_option("--sigma", o.sigma, "resonance width, or 'auto'");
    cmd->add_option("--kappa", o.kappa, "cone contraction factor");
    cmd->add_option("--linsolve", o.linsolve, "direct or neumann");
    cmd->add_option("--iters", o.iters, "max renormalisation iterations");
    cmd->add_option("--lambda-steps", o.lambda_steps, "homotopy discretisation count");
    cmd->add_option("--newton-polish", o.newton_polish, "post-homotopy Newton steps");
    cmd->add_option("--residual-tol", o.residual_tol, "elimination residual tolerance");
}

json merged_config(const CommonOpts& o) {
    json cfg = json::object();
    if (!o.config_path.empty()) {
        std::ifstream is(o.config_path, std::ios::binary);
        if (!is) throw ConfigError("cannot open config file " + o.config_path);
        std::stringstream ss;
        ss << is.rdbuf();
        try {
            cfg = json::parse(ss.str());
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config file parse error: ") + e.what());
        }
    }
    if (o.K > 0) cfg["K"] = o.K;
    if (o.rho > 0) cfg["rho"] = o.rho;
    if (o.rho_prime > 0) cfg["rho_prime"] = o.rho_prime;
    if (!o.sigma.empty()) {
        if (o.sigma == "auto")
            cfg["sigma"] = "auto";
        else
            cfg["sigma"] = std::stod(o.sigma);
    }
    if (o.kappa > 0) cfg["kappa"] = o.kappa;
    if (o.iters > 0) cfg["iters"] = o.iters;
    if (!o.linsolve.empty()) cfg["elim"]["linsolve"] = o.linsolve;
    if (o.lambda_steps > 0) cfg["elim"]["lambda_steps"] = o.lambda_steps;
    if (o.newton_polish >= 0) cfg["elim"]["newton_polish"] = o.newton_polish;
    if (o.residual_tol > 0) cfg["elim"]["residual_tol"] = o.residual_tol;
    return cfg;
}

RenormConfig build_config(const CommonOpts& o, const KTBasis& basis) {
    return config_from_json(basis, merged_config(o).dump());
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        if (text.empty() || text.back() != '\n') std::cout << "\n";
        return;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open output file " + path);
    os << text;
    if (text.empty() || text.back() != '\n') os << "\n";
}

json field_as_json(const FourierField& f) { return json::parse(field_to_json(f)); }

int cmd_eliminate(const CommonOpts& o, const std::string& input, const std::string& out) {
    KTBasis basis = resolve_basis(o.basis);
    FourierField X = load_field(input);
    RenormConfig cfg = build_config(o, basis);
    EliminationConfig elim = cfg.elim;
    elim.rho = cfg.rho;
    elim.rho_prime = cfg.rho_prime;
    EliminationResult res = eliminate(X, cfg.params, elim);

    json j;
    j["u"] = field_as_json(res.u);
    j["transformed"] = field_as_json(res.transformed);
    j["residual"] = res.residual;
    j["theorem_radius"] = res.theorem_radius;
    j["inside_theorem_ball"] = res.inside_theorem_ball;
    json hist = json::array();
    for (const auto& [lam, r] : res.residual_history) hist.push_back(json::array({lam, r}));
    j["residual_history"] = std::move(hist);
    j["sigma"] = cfg.params.sigma;
    j["kappa"] = cfg.params.kappa;
    write_output(out, j.dump(2));
    return 0;
}

int cmd_iterate(const CommonOpts& o, const std::string& input, const std::string& out) {
    KTBasis basis = resolve_basis(o.basis);
    FourierField X = load_field(input);
    RenormConfig cfg = build_config(o, basis);
    IterationResult res = renorm_iterate(X, cfg);
    write_output(out, steps_to_csv(X, res.steps, res.status, cfg.rho, cfg.rho_prime, cfg.params));
    std::cerr << "status: " << iter_status_name(res.status) << " after " << res.steps.size() << " step(s)\n";
    return 0;
}

int cmd_spectrum(const CommonOpts& o, const std::string& out, int validate_dirs) {
    KTBasis basis = resolve_basis(o.basis);
    RenormConfig cfg = build_config(o, basis);
    LinearizedOperator L = build_dr_matrix(basis, cfg.params, cfg.K, cfg.rho);
    std::vector<cplx> eigs = eigen_spectrum(L);
    NilpotencyReport nil = nilpotency_check(L);

    json j;
    j["basis"] = json::parse(basis_to_json(basis));
    j["K"] = cfg.K;
    j["sigma"] = cfg.params.sigma;
    j["kappa"] = cfg.params.kappa;
    j["resonant_modes"] = L.modes.size();
    json ev = json::array();
    for (const cplx& e : eigs) ev.push_back(json::array({e.real(), e.imag()}));
    j["eigenvalues"] = std::move(ev);

    CMat block = L.constant_block();
    Eigen::ComplexEigenSolver<CMat> es(block);
    json zb;
    json bm = json::array();
    for (int i = 0; i < block.rows(); ++i) {
        json row = json::array();
        for (int c = 0; c < block.cols(); ++c) row.push_back(json::array({block(i, c).real(), block(i, c).imag()}));
        bm.push_back(std::move(row));
    }
    zb["matrix"] = std::move(bm);
    json zev = json::array(), zvec = json::array();
    for (int i = 0; i < block.rows(); ++i) {
        zev.push_back(json::array({es.eigenvalues()[i].real(), es.eigenvalues()[i].imag()}));
        json col = json::array();
        for (int r = 0; r < block.rows(); ++r)
            col.push_back(json::array({es.eigenvectors()(r, i).real(), es.eigenvectors()(r, i).imag()}));
        zvec.push_back(std::move(col));
    }
    zb["eigenvalues"] = std::move(zev);
    zb["eigenvectors"] = std::move(zvec);
    j["zero_block"] = std::move(zb);

    json nj;
    nj["index"] = nil.nilpotency_index;
    nj["max_residual"] = nil.max_residual;
    nj["norms"] = nil.norms;
    j["nilpotency"] = std::move(nj);

    if (validate_dirs > 0) {
        FdValidation val = validate_dr_matrix(L, cfg, validate_dirs);
        json vj;
        vj["max_rel_err_operator"] = val.max_rel_err_operator;
        vj["max_rel_err_matrix"] = val.max_rel_err_matrix;
        vj["directions"] = val.directions;
        vj["step"] = val.step;
        j["fd_validation"] = std::move(vj);
    }
    write_output(out, j.dump(2));
    return 0;
}

int cmd_winding(const std::string& input, const std::string& theta0_str, double t_end, double dt,
                const std::string& out) {
    FourierField X = load_field(input);
    RVec theta0 = RVec::Zero(X.dim());
    if (!theta0_str.empty()) {
        std::stringstream ss(theta0_str);
        std::string tok;
        int i = 0;
        while (std::getline(ss, tok, ',') && i < X.dim()) theta0[i++] = std::stod(tok);
        if (i != X.dim()) throw ConfigError("winding: --theta0 needs " + std::to_string(X.dim()) + " components");
    }
    Trajectory traj = integrate(X, theta0, t_end, dt);
    WindingEstimate est = winding_ratio(traj);
    json j;
    if (est.w) {
        json w = json::array();
        for (int i = 0; i < est.w->size(); ++i) w.push_back((*est.w)[i]);
        j["w"] = std::move(w);
    } else {
        j["w"] = nullptr;
    }
    j["confident"] = est.confident;
    write_output(out, j.dump());
    return 0;
}

int cmd_conjugacy(const CommonOpts& o, const std::string& input, int grid_n, const std::string& out) {
    KTBasis basis = resolve_basis(o.basis);
    FourierField X = load_field(input);
    RenormConfig cfg = build_config(o, basis);
    RenormStepResult step = renorm_step_full(X, cfg);
    const double r = conjugacy_residual(X, step, basis, grid_n);
    json j;
    j["residual"] = r;
    j["grid"] = grid_n;
    j["rescale"] = json::array({step.report.rescale.real(), step.report.rescale.imag()});
    write_output(out, j.dump());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Renormalisation of analytic torus flows near Koch-type frequency vectors"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string input, out, theta0_str = "", spec_path, out_dir;
    double t_end = 1000.0, dt = 0.01;
    int grid_n = 32, validate_dirs = 20;

    CLI::App* c_elim = app.add_subcommand("eliminate", "remove far-from-resonance modes via the homotopy solver");
    add_common(c_elim, opts);
    c_elim->add_option("--input", input, "input field JSON")->required();
    c_elim->add_option("--out", out, "output JSON (default: stdout)");

    CLI::App* c_iter = app.add_subcommand("iterate", "iterate the renormalisation operator, emit trajectory CSV");
    add_common(c_iter, opts);
    c_iter->add_option("--input", input, "input field JSON")->required();
    c_iter->add_option("--out", out, "output CSV (default: stdout)");

    CLI::App* c_spec = app.add_subcommand("spectrum", "assemble DR(omega), eigenvalues and nilpotency report");
    add_common(c_spec, opts);
    c_spec->add_option("--out", out, "output JSON (default: stdout)");
    c_spec->add_option("--validate", validate_dirs, "finite-difference validation directions (0 disables)");

    CLI::App* c_wind = app.add_subcommand("winding", "integrate the flow and estimate the winding ratio");
    c_wind->add_option("--input", input, "input field JSON")->required();
    c_wind->add_option("--theta0", theta0_str, "initial condition, comma separated");
    c_wind->add_option("--t", t_end, "integration horizon");
    c_wind->add_option("--dt", dt, "integrator step");
    c_wind->add_option("--out", out, "output JSON (default: stdout)");

    CLI::App* c_conj = app.add_subcommand("conjugacy", "one-step conjugacy residual on a grid");
    add_common(c_conj, opts);
    c_conj->add_option("--input", input, "input field JSON")->required();
    c_conj->add_option("--grid", grid_n, "grid points per dimension");
    c_conj->add_option("--out", out, "output JSON (default: stdout)");

    CLI::App* c_run = app.add_subcommand("run", "run an experiment spec file");
    c_run->add_option("spec", spec_path, "experiment JSON file")->required();
    c_run->add_option("--out", out_dir, "output directory (default: <spec stem>_out)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(c_elim)) return cmd_eliminate(opts, input, out);
        if (app.got_subcommand(c_iter)) return cmd_iterate(opts, input, out);
        if (app.got_subcommand(c_spec)) return cmd_spectrum(opts, out, validate_dirs);
        if (app.got_subcommand(c_wind)) return cmd_winding(input, theta0_str, t_end, dt, out);
        if (app.got_subcommand(c_conj)) return cmd_conjugacy(opts, input, grid_n, out);
        if (app.got_subcommand(c_run)) {
            if (out_dir.empty()) {
                std::string stem = spec_path;
                const size_t slash = stem.find_last_of('/');
                if (slash != std::string::npos) stem = stem.substr(slash + 1);
                const size_t dot = stem.find_last_of('.');
                if (dot != std::string::npos) stem = stem.substr(0, dot);
                out_dir = stem + "_out";
            }
            return run_experiment(spec_path, out_dir);
        }
    } catch (const ConfigError& e) {
        json err{{"error", "config"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    } catch (const Error& e) {
        json err{{"error", "numerical"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        json err{{"error", "internal"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 2;
}
