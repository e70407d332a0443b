#include "torus/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "torus/spectral.hpp"

namespace torus {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double u01(std::mt19937_64& rng) {
    // bit-stable uniform in [0,1), independent of the stdlib distribution impl
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double symmetric(std::mt19937_64& rng) { return 2.0 * u01(rng) - 1.0; }

json parse_or_throw(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string(what) + ": JSON parse error: " + e.what());
    }
}

std::string read_file(const std::string& path, const char* what) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError(std::string(what) + ": cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

/// Unstable coordinate(s) of a constant vector, for growth-ratio reporting.
RVec coords_from_mean(const CVec& m, const KTBasis& b) {
    cplx a(0, 0);
    for (int i = 0; i < b.d; ++i) a += b.omega_bar[i] * m[i];
    CVec pu = m - a * b.omega.cast<cplx>();
    Eigen::MatrixXd B = unstable_real_basis(b);
    return B.colPivHouseholderQr().solve(pu.real());
}

struct SeedOutcome {
    int index = 0;
    std::string csv;
    json summary;
    bool numerical_failure = false;
};

SeedOutcome run_seed(int index, const json& seed_spec, const KTBasis& basis, const RenormConfig& cfg) {
    SeedOutcome out;
    out.index = index;
    try {
        FourierField X = generate_field(seed_spec.dump(), basis, cfg.K);
        IterationResult res = renorm_iterate(X, cfg);
        out.csv = steps_to_csv(X, res.steps, res.status, cfg.rho, cfg.rho_prime, cfg.params);
        out.summary["index"] = index;
        out.summary["status"] = iter_status_name(res.status);
        out.summary["iters"] = res.steps.size();
        if (!res.steps.empty()) {
            const StepReport& last = res.steps.back();
            out.summary["final_norm_prime"] = last.norm_prime;
            out.summary["final_nonconstant_norm"] = last.nonconstant_norm;
            if (!last.error.empty()) out.summary["error"] = last.error;
        }
        // signed unstable-coordinate growth ratios (meaningful for diverging runs)
        json ratios = json::array();
        RVec prev;
        bool have_prev = false;
        for (const StepReport& r : res.steps) {
            if (r.mean.size() == 0 || !r.error.empty()) break;
            RVec c = coords_from_mean(r.mean, basis);
            if (have_prev && prev.lpNorm<1>() > 1e-13) {
                if (basis.d == 2)
                    ratios.push_back(c[0] / prev[0]);
                else
                    ratios.push_back(c.norm() / prev.norm());
            }
            prev = c;
            have_prev = true;
        }
        out.summary["growth_ratios"] = std::move(ratios);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        out.summary["index"] = index;
        out.summary["status"] = "ERROR";
        out.summary["error"] = e.what();
        out.numerical_failure = true;
    }
    return out;
}

}  // namespace

KTBasis resolve_basis(const std::string& ref) {
    if (ref == "golden") return golden_basis();
    if (ref == "plastic") return plastic_basis();
    if (ref.rfind("file:", 0) == 0) return load_basis(ref.substr(5));
    throw ConfigError("resolve_basis: unknown basis reference '" + ref + "' (use golden, plastic or file:PATH)");
}

RenormConfig config_from_json(const KTBasis& basis, const std::string& json_text) {
    json j = parse_or_throw(json_text.empty() ? "{}" : json_text, "config_from_json");
    RenormConfig cfg;
    cfg.basis = basis;
    try {
        cfg.K = j.value("K", 10);
        cfg.rho = j.value("rho", 0.6);
        cfg.rho_prime = j.value("rho_prime", 0.5);
        cfg.min_rescale = j.value("min_rescale", 0.1);
        cfg.max_iters = j.value("iters", 10);
        const std::string mode = j.value("rescale_mode", "mean_dual");
        if (mode == "mean_dual")
            cfg.rescale_mode = RenormConfig::RescaleMode::mean_dual;
        else if (mode == "lambda1")
            cfg.rescale_mode = RenormConfig::RescaleMode::lambda1;
        else
            throw ConfigError("config_from_json: rescale_mode must be mean_dual or lambda1");

        if (j.contains("elim")) {
            const json& e = j.at("elim");
            cfg.elim.lambda_steps = e.value("lambda_steps", cfg.elim.lambda_steps);
            cfg.elim.newton_polish = e.value("newton_polish", cfg.elim.newton_polish);
            cfg.elim.residual_tol = e.value("residual_tol", cfg.elim.residual_tol);
            cfg.elim.order_cap = e.value("order_cap", cfg.elim.order_cap);
            cfg.elim.max_support_growth = e.value("max_support_growth", cfg.elim.max_support_growth);
            const std::string ls = e.value("linsolve", "direct");
            if (ls == "direct")
                cfg.elim.linsolve = EliminationConfig::LinSolve::direct;
            else if (ls == "neumann")
                cfg.elim.linsolve = EliminationConfig::LinSolve::neumann;
            else
                throw ConfigError("config_from_json: linsolve must be direct or neumann");
        }

        const double kappa_limit = cfg.rho_prime / cfg.rho;
        bool sigma_auto = true;
        double sigma = 0.0;
        if (j.contains("sigma") && j.at("sigma").is_number()) {
            sigma_auto = false;
            sigma = j.at("sigma").get<double>();
        } else if (j.contains("sigma") && j.at("sigma").is_string() && j.at("sigma").get<std::string>() != "auto") {
            throw ConfigError("config_from_json: sigma must be a number or \"auto\"");
        }

        if (sigma_auto) {
            try {
                cfg.params = choose_params(basis, cfg.rho, cfg.rho_prime, cfg.K);
            } catch (const NoFeasibleParams& e) {
                warn(std::string("config_from_json: ") + e.what() +
                     "; falling back to the integer-index criterion");
                cfg.params = choose_params_window(basis, cfg.rho, cfg.rho_prime, cfg.K);
            }
        } else {
            cfg.params.omega = basis.omega;
            cfg.params.sigma = sigma;
            if (j.contains("kappa")) {
                cfg.params.kappa = j.at("kappa").get<double>();
            } else {
                ResonanceParams probe{basis.omega, sigma, std::min(0.999, kappa_limit)};
                ConeReport rep = check_cone_inclusion(basis.T, probe, 2000, cfg.K);
                if (rep.max_ratio_modes >= kappa_limit)
                    throw ConfigError("config_from_json: resonant indices do not contract below rho'/rho; "
                                      "reduce sigma or increase the basis power");
                cfg.params.kappa = 0.5 * (rep.max_ratio_modes + kappa_limit);
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config_from_json: schema error: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

FourierField generate_field(const std::string& gen_json, const KTBasis& b, int K) {
    json j = parse_or_throw(gen_json, "generate_field");
    const bool real_flag = j.value("real", true);

    if (j.contains("file")) return load_field(j.at("file").get<std::string>());

    FieldBuilder fb(b.d, b.d, K);
    fb.add(MultiIndex::zero(b.d), b.omega.cast<cplx>());

    auto add_pair = [&](const MultiIndex& k, const CVec& c) {
        fb.add(k, c);
        if (real_flag && !k.is_zero()) fb.add(-k, CVec(c.conjugate()));
    };

    if (j.contains("preset")) {
        const std::string preset = j.at("preset").get<std::string>();
        if (preset != "constant") throw ConfigError("generate_field: unknown preset '" + preset + "'");
    } else if (j.contains("modes")) {
        for (const json& m : j.at("modes")) {
            std::vector<int> k = m.at("k").get<std::vector<int>>();
            if (static_cast<int>(k.size()) != b.d) throw ConfigError("generate_field: mode index dimension mismatch");
            const double amp = m.value("amp", 1.0);
            CVec v = CVec::Zero(b.d);
            if (m.contains("v_re")) {
                auto re = m.at("v_re").get<std::vector<double>>();
                std::vector<double> im(b.d, 0.0);
                if (m.contains("v_im")) im = m.at("v_im").get<std::vector<double>>();
                for (int q = 0; q < b.d; ++q) v[q] = cplx(re[q], im[q]);
            } else {
                v[0] = 1.0;
            }
            MultiIndex idx(std::move(k));
            if (idx.norm1() > K) throw ModeOutOfWindow("generate_field: mode outside the truncation window");
            add_pair(idx, CVec(amp * v));
        }
    } else if (j.contains("random")) {
        const json& r = j.at("random");
        const int count = r.value("count", 10);
        const double amp = r.value("amp", 1e-4);
        const std::uint64_t seed = r.value("seed", 1u);
        const int radius = std::min(r.value("radius", std::min(3, K)), K);
        const bool include_mean = r.value("include_mean", false);
        std::mt19937_64 rng(seed);

        auto win = Window::get(b.d, radius);
        std::vector<MultiIndex> candidates;
        for (long long rk = 0; rk < win->size(); ++rk) {
            MultiIndex k = win->unrank(rk);
            if (!k.is_zero()) candidates.push_back(std::move(k));
        }
        if (candidates.empty()) throw ConfigError("generate_field: empty random window");
        for (int n = 0; n < count; ++n) {
            const MultiIndex& k = candidates[static_cast<size_t>(rng() % candidates.size())];
            CVec c(b.d);
            for (int q = 0; q < b.d; ++q) c[q] = amp * cplx(symmetric(rng), symmetric(rng));
            add_pair(k, c);
        }
        if (include_mean) {
            CVec c(b.d);
            for (int q = 0; q < b.d; ++q) c[q] = cplx(amp * symmetric(rng), 0.0);
            fb.add(MultiIndex::zero(b.d), c);
        }
    } else {
        throw ConfigError("generate_field: spec needs one of preset, modes, random or file");
    }

    return fb.build(real_flag);
}

int run_experiment(const std::string& spec_path, const std::string& out_dir) {
    auto write_error = [&](const std::string& kind, const std::string& msg) {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        json err;
        err["error"] = kind;
        err["message"] = msg;
        std::ofstream os(fs::path(out_dir) / "error.json", std::ios::binary);
        os << err.dump() << "\n";
    };

    json spec;
    KTBasis basis;
    RenormConfig cfg;
    try {
        spec = parse_or_throw(read_file(spec_path, "run_experiment"), "run_experiment");
        if (!spec.contains("basis")) throw ConfigError("run_experiment: spec is missing the 'basis' key");
        basis = resolve_basis(spec.at("basis").get<std::string>());
        cfg = config_from_json(basis, spec.value("config", json::object()).dump());
        if (spec.contains("seeds") && !spec.at("seeds").is_array())
            throw ConfigError("run_experiment: 'seeds' must be an array");
    } catch (const ConfigError& e) {
        write_error("config", e.what());
        return 2;
    } catch (const json::exception& e) {
        write_error("config", e.what());
        return 2;
    } catch (const Error& e) {
        write_error("numerical", e.what());
        return 1;
    }

    try {
        fs::create_directories(out_dir);
        {
            std::ofstream os(fs::path(out_dir) / "spec.json", std::ios::binary);
            os << spec.dump(2) << "\n";
        }

        json seeds = spec.value("seeds", json::array({json{{"preset", "constant"}}}));
        std::vector<SeedOutcome> outcomes(seeds.size());

        unsigned max_threads = std::thread::hardware_concurrency();
        if (const char* env = std::getenv("TORUS_RENORM_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v >= 1) max_threads = static_cast<unsigned>(v);
        }
        max_threads = std::max(1u, std::min<unsigned>(max_threads, static_cast<unsigned>(seeds.size())));

        std::mutex failure_mutex;
        std::string config_failure;
        std::atomic<size_t> next{0};
        auto worker = [&]() {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= seeds.size()) return;
                try {
                    outcomes[i] = run_seed(static_cast<int>(i), seeds[static_cast<int>(i)], basis, cfg);
                } catch (const ConfigError& e) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (config_failure.empty()) config_failure = e.what();
                }
            }
        };
        std::vector<std::thread> pool;
        for (unsigned t = 1; t < max_threads; ++t) pool.emplace_back(worker);
        worker();
        for (auto& th : pool) th.join();

        if (!config_failure.empty()) {
            write_error("config", config_failure);
            return 2;
        }

        bool any_failure = false;
        json summary;
        summary["name"] = spec.value("name", fs::path(spec_path).stem().string());
        summary["basis"] = spec.at("basis");
        json per_seed = json::array();
        for (size_t i = 0; i < outcomes.size(); ++i) {
            const SeedOutcome& oc = outcomes[i];
            if (!oc.csv.empty()) {
                std::ofstream os(fs::path(out_dir) / ("seed_" + std::to_string(i) + "_traj.csv"), std::ios::binary);
                os << oc.csv;
            }
            per_seed.push_back(oc.summary);
            any_failure = any_failure || oc.numerical_failure;
        }
        summary["seeds"] = std::move(per_seed);
        {
            std::ofstream os(fs::path(out_dir) / "summary.json", std::ios::binary);
            os << summary.dump(2) << "\n";
        }
        return any_failure ? 1 : 0;
    } catch (const ConfigError& e) {
        write_error("config", e.what());
        return 2;
    } catch (const Error& e) {
        write_error("numerical", e.what());
        return 1;
    } catch (const std::exception& e) {
        write_error("internal", e.what());
        return 1;
    }
}

}  // namespace torus
