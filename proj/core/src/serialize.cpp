#include "torus/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace torus {

using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string field_to_json(const FourierField& f) {
    json j;
    j["dim"] = f.dim();
    j["real"] = f.real_flag();
    j["K"] = f.trunc_radius();
    json modes = json::array();
    for (int i = 0; i < f.size(); ++i) {
        json m;
        json k = json::array();
        for (int v : f.mode(i)) k.push_back(v);
        json re = json::array(), im = json::array();
        for (const cplx& c : f.coeff_at(i)) {
            re.push_back(c.real());
            im.push_back(c.imag());
        }
        m["k"] = std::move(k);
        m["re"] = std::move(re);
        m["im"] = std::move(im);
        modes.push_back(std::move(m));
    }
    j["modes"] = std::move(modes);
    return j.dump();
}

FourierField field_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("field_from_json: parse error: ") + e.what());
    }
    try {
        const int d = j.at("dim").get<int>();
        const bool real_flag = j.at("real").get<bool>();
        const int K = j.at("K").get<int>();
        if (d < 1 || K < 0) throw ConfigError("field_from_json: bad dim or K");
        // ncomp inferred from the first mode; defaults to dim
        int ncomp = d;
        const json& modes = j.at("modes");
        if (!modes.empty()) ncomp = static_cast<int>(modes.front().at("re").size());
        FieldBuilder fb(d, ncomp, K);
        CVec c(ncomp);
        for (const json& m : modes) {
            std::vector<int> k = m.at("k").get<std::vector<int>>();
            if (static_cast<int>(k.size()) != d) throw ConfigError("field_from_json: index length mismatch");
            const json& re = m.at("re");
            const json& im = m.at("im");
            if (static_cast<int>(re.size()) != ncomp || static_cast<int>(im.size()) != ncomp)
                throw ConfigError("field_from_json: coefficient length mismatch");
            for (int q = 0; q < ncomp; ++q) c[q] = cplx(re[q].get<double>(), im[q].get<double>());
            fb.add(MultiIndex(std::move(k)), c);
        }
        return fb.build(real_flag);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("field_from_json: schema error: ") + e.what());
    }
}

void save_field(const FourierField& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("save_field: cannot open " + path);
    os << field_to_json(f) << "\n";
}

FourierField load_field(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("load_field: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return field_from_json(ss.str());
}

std::string basis_to_json(const KTBasis& b) {
    json j;
    j["d"] = b.d;
    j["power"] = b.power;
    j["det"] = b.det;
    json T = json::array();
    for (int i = 0; i < b.d; ++i) {
        json row = json::array();
        for (int c = 0; c < b.d; ++c) row.push_back(b.T(i, c));
        T.push_back(std::move(row));
    }
    j["T"] = std::move(T);
    json omega = json::array(), omega_bar = json::array();
    for (int i = 0; i < b.d; ++i) {
        omega.push_back(b.omega[i]);
        omega_bar.push_back(b.omega_bar[i]);
    }
    j["omega"] = std::move(omega);
    j["omega_bar"] = std::move(omega_bar);
    json lre = json::array(), lim = json::array();
    for (int i = 0; i < b.d; ++i) {
        lre.push_back(b.lambda[i].real());
        lim.push_back(b.lambda[i].imag());
    }
    j["lambda_re"] = std::move(lre);
    j["lambda_im"] = std::move(lim);
    return j.dump();
}

KTBasis basis_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("basis_from_json: parse error: ") + e.what());
    }
    try {
        const auto rows = j.at("T").get<std::vector<std::vector<long long>>>();
        const int d = static_cast<int>(rows.size());
        IMat T(d, d);
        for (int i = 0; i < d; ++i) {
            if (static_cast<int>(rows[i].size()) != d) throw ConfigError("basis_from_json: T is not square");
            for (int c = 0; c < d; ++c) T(i, c) = rows[i][c];
        }
        KTBasis b = from_matrix(T);
        if (j.contains("power")) {
            const int p = j.at("power").get<int>();
            if (p > 1) b = basis_power(b, p);
        }
        return b;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("basis_from_json: schema error: ") + e.what());
    }
}

KTBasis load_basis(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("load_basis: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return basis_from_json(ss.str());
}

const char* iter_status_name(IterStatus s) {
    switch (s) {
        case IterStatus::CONVERGED: return "CONVERGED";
        case IterStatus::DIVERGED: return "DIVERGED";
        case IterStatus::MAXITER: return "MAXITER";
    }
    return "UNKNOWN";
}

std::string steps_to_csv(const FourierField& initial, const std::vector<StepReport>& steps, IterStatus status,
                         double rho, double rho_prime, const ResonanceParams& params) {
    std::ostringstream os;
    os << "iter,norm_prime,nonconstant_norm,rescale_re,rescale_im,mode_count,status\n";

    FourierField omega_f = FourierField::constant(params.omega, initial.trunc_radius());
    FourierField diff = initial - omega_f;
    FourierField minus = project(initial, params, ResonancePart::minus);
    (void)minus;
    (void)rho_prime;
    os << 0 << "," << format_double(diff.empty() ? 0.0 : norm(diff, NormKind::prime(rho))) << ","
       << format_double(nonconstant_prime_norm(initial, rho)) << "," << format_double(1.0) << ","
       << format_double(0.0) << "," << initial.size() << ",RUNNING\n";

    for (size_t i = 0; i < steps.size(); ++i) {
        const StepReport& r = steps[i];
        const bool last = i + 1 == steps.size();
        const char* st = r.error.empty() ? (last ? iter_status_name(status) : "RUNNING") : "DIVERGED";
        os << r.iter << "," << format_double(r.norm_prime) << "," << format_double(r.nonconstant_norm) << ","
           << format_double(r.rescale.real()) << "," << format_double(r.rescale.imag()) << "," << r.mode_count << ","
           << st << "\n";
    }
    return os.str();
}

}  // namespace torus
