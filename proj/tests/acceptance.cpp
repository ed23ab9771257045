// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "otoclab/algebra.hpp"
#include "otoclab/classical.hpp"
#include "otoclab/error.hpp"
#include "otoclab/experiments.hpp"
#include "otoclab/otoc.hpp"
#include "otoclab/spectrum.hpp"

using namespace otoclab;

namespace {

constexpr std::uint64_t kSeed = 20240501;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("criterion %d %s: %s (%s; %.0fs)\n", id, title.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                secs);
    std::fflush(stdout);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

RunConfig model_config(int N) {
    RunConfig c;
    c.command = "otoc";
    c.N = {N};
    c.xi = 0.4;
    c.epsilon = 0.4;
    c.seed = kSeed;
    c.sampler.count = 500;
    return c;
}

// -- 1 ---------------------------------------------------------------------

Outcome dimensions() {
    const auto d60 = build_basis(60).size();
    const auto d100 = build_basis(100).size();
    return {d60 == 1891 && d100 == 5151 && fock_dimension(60) == 1891 && fock_dimension(100) == 5151,
            "dim(60)=" + std::to_string(d60) + " dim(100)=" + std::to_string(d100)};
}

// -- 2 ---------------------------------------------------------------------

Outcome integrability() {
    const int N = 20;
    const auto b = build_basis(N);
    auto norm = [&](double xi, double eps, Generator g) {
        return commutator_norm(build_hamiltonian({N, xi, eps}, b), generator_matrix(b, g));
    };
    const double c_l = norm(0.4, 0.0, Generator::l);
    const double c_nq = norm(0.0, 0.4, Generator::n_plus_Q);
    const double c_dx = norm(1.0, 0.4, Generator::D_x);
    const double c_d2 = norm(1.0, 0.4, Generator::D_squared);
    const double worst = std::max({c_l, c_nq, c_dx, c_d2});
    // Sanity: the same commutators are far from zero off the integrable lines.
    const double generic = norm(0.4, 0.4, Generator::l);
    return {worst <= 1e-10 && generic > 1e-3,
            "[H,l]=" + fmt("%.2g", c_l) + " [H,n+Q]=" + fmt("%.2g", c_nq) + " [H,D_x]=" + fmt("%.2g", c_dx) +
                " [H,D^2]=" + fmt("%.2g", c_d2) + " generic [H,l]=" + fmt("%.3g", generic)};
}

// -- 3 ---------------------------------------------------------------------

Outcome residuals() {
    double worst_orth = 0.0, worst_rec = 0.0;
    auto take = [&](const EigenSystem& e) {
        worst_orth = std::max(worst_orth, e.orthonormality_residual);
        worst_rec = std::max(worst_rec, e.reconstruction_residual / e.energies.cwiseAbs().maxCoeff());
    };
    for (int N : {2, 10, 20, 30, 40, 50, 60}) {
        const auto b = build_basis(N);
        const auto H = build_hamiltonian({N, 0.4, 0.4}, b);
        take(diagonalize_by_parity(H, b));
        if (N == 60 || N == 20) take(diagonalize(H));
    }
    return {worst_orth <= 1e-10 && worst_rec <= 1e-9,
            "max orthonormality " + fmt("%.2g", worst_orth) + ", max reconstruction/max|E| " + fmt("%.2g", worst_rec)};
}

// -- 4 ---------------------------------------------------------------------

Outcome oracle_equivalence() {
    std::mt19937_64 rng(kSeed);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> times(0.0, 50.0);
    double worst = 0.0;
    std::size_t checks = 0;
    const std::size_t dims[] = {6, 11, 17, 24, 30};
    for (std::size_t dim : dims) {
        const auto d = static_cast<Eigen::Index>(dim);
        auto sym = [&] {
            Eigen::MatrixXd m(d, d);
            for (Eigen::Index i = 0; i < d; ++i)
                for (Eigen::Index j = 0; j <= i; ++j) m(i, j) = m(j, i) = g(rng);
            return m;
        };
        const BasisTag tag{BasisKind::Abstract, 0, 0, dim, "oracle"};
        const Eigen::MatrixXd H = sym() / std::sqrt(static_cast<double>(dim));
        const Eigen::MatrixXd V = sym(), W = sym();
        const auto eig = diagonalize(OperatorMatrix{H, tag, true});
        const OtocEvaluator eval(to_eigenbasis(OperatorMatrix{V, tag, true}, eig),
                                 to_eigenbasis(OperatorMatrix{W, tag, true}, eig), eig.energies);
        const std::complex<double> I(0.0, 1.0);
        for (int k = 0; k < 20; ++k) {
            const double t = times(rng);
            const Eigen::MatrixXcd U = (I * t * H.cast<std::complex<double>>()).exp();
            const Eigen::MatrixXcd Vt = U * V.cast<std::complex<double>>() * U.adjoint();
            const Eigen::MatrixXcd Wc = W.cast<std::complex<double>>();
            const Eigen::MatrixXcd C = Vt * Wc - Wc * Vt;
            const Eigen::MatrixXcd sq = -(C * C);
            for (std::size_t n = 0; n < dim; ++n) {
                const Eigen::VectorXcd psi = eig.vectors.col(static_cast<Eigen::Index>(n)).cast<std::complex<double>>();
                const double ref = (psi.adjoint() * sq * psi)(0, 0).real();
                const double got = eval.at(n, t);
                worst = std::max(worst, std::abs(got - ref) / std::abs(ref));
                ++checks;
            }
        }
    }
    return {worst <= 1e-9, std::to_string(checks) + " state-time checks, max relative deviation " + fmt("%.2g", worst)};
}

// -- 5, 8: one N=50 scan shared by both ----------------------------------------

const ScanOutput& n50_scan() {
    static const ScanOutput scan = [] {
        auto c = model_config(50);
        return scan_model(c, 50, false);
    }();
    return scan;
}

Outcome figure_magnitudes() {
    const auto& s = n50_scan();
    const auto& r1 = s.records.front();
    const auto& r650 = s.records.at(649);
    auto within3 = [](double got, double want) { return got >= want / 3.0 && got <= want * 3.0; };
    const bool ok = within3(r1.mean, 1e1) && within3(r650.mean, 1e5);
    return {ok, "E_1=" + fmt("%.4f", r1.energy) + " mean=" + fmt("%.3g", r1.mean) + " (target 1e1), E_650=" +
                    fmt("%.4f", r650.energy) + " mean=" + fmt("%.3g", r650.mean) + " (target 1e5)"};
}

Outcome lyapunov_correspondence() {
    const auto& s = n50_scan();
    const auto& q = s.lambda;
    if (q.size() < 2) return {false, "smoothed quantum lambda curve is empty"};
    const auto qmax = std::max_element(q.values.begin(), q.values.end()) - q.values.begin();
    const double e_qmax = q.energies[static_cast<std::size_t>(qmax)];

    const double lo = q.energies.front(), hi = q.energies.back();
    std::vector<double> probes, lq, lc;
    FregConfig cfg;
    cfg.cells = 30;
    cfg.budget = 60;
    for (int i = 0; i < 10; ++i) {
        const double E = lo + (hi - lo) * i / 9.0;
        probes.push_back(E);
        lq.push_back(interpolate_at(q, E));
        lc.push_back(freg_at_energy(E, {0.4, 0.4}, cfg).lambda_bar);
    }
    const auto cmax = std::max_element(lc.begin(), lc.end()) - lc.begin();
    const double e_cmax = probes[static_cast<std::size_t>(cmax)];
    const double r = pearson(lq, lc);
    const bool ok = e_qmax >= 0.15 && e_qmax <= 0.3 && e_cmax >= 0.15 && e_cmax <= 0.3 && r > 0.7;
    return {ok, "quantum max at E=" + fmt("%.3f", e_qmax) + ", classical max at E=" + fmt("%.3f", e_cmax) +
                    ", Pearson r=" + fmt("%.3f", r) + " over E in [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) + "]"};
}

// -- 6 ---------------------------------------------------------------------

Outcome wiggliness_regularity() {
    auto c = model_config(40);
    c.short_time = false;
    const auto s = scan_model(c, 40, false);
    const std::size_t decile = s.dim / 10;
    const double e_decile = s.records.at(decile - 1).energy;
    double reg = 0, cha = 0;
    std::size_t nreg = 0, ncha = 0;
    for (std::size_t i = 0; i < s.nu.size(); ++i) {
        const double E = s.nu.energies[i];
        if (E <= e_decile) {
            reg += s.nu.values[i];
            ++nreg;
        }
        if (E >= 0.15 && E <= 0.25) {
            cha += s.nu.values[i];
            ++ncha;
        }
    }
    if (nreg == 0 || ncha == 0) return {false, "empty window"};
    reg /= static_cast<double>(nreg);
    cha /= static_cast<double>(ncha);
    const bool ok = cha < reg && std::abs(reg - 0.6) <= 0.2;
    return {ok, "regular (E <= " + fmt("%.3f", e_decile) + ") nu_bar=" + fmt("%.3f", reg) +
                    " (target 0.6 +- 0.2), chaotic [0.15, 0.25] nu_bar=" + fmt("%.3f", cha)};
}

// -- 7 ---------------------------------------------------------------------

Outcome classical_map() {
    FregConfig cfg;
    cfg.cells = 30;
    cfg.budget = 60;
    double worst_integrable = 1.0;
    for (double E : {-0.1, 0.2, 0.5}) {
        worst_integrable = std::min(worst_integrable, freg_at_energy(E, {0.0, 0.4}, cfg).f_reg);
    }
    const double chaotic = freg_at_energy(0.35, {0.4, 0.4}, cfg).f_reg;
    FregConfig coarse = cfg, fine = cfg;
    coarse.cells = 30;
    coarse.budget = 100;
    fine.cells = 60;
    fine.budget = 200;
    const double f30 = freg_at_energy(0.2, {0.4, 0.4}, coarse).f_reg;
    const double f60 = freg_at_energy(0.2, {0.4, 0.4}, fine).f_reg;
    const bool ok = worst_integrable == 1.0 && chaotic < 0.1 && std::abs(f60 - f30) <= 0.05;
    return {ok, "xi=0 min f_reg=" + fmt("%.3f", worst_integrable) + ", f_reg(E=0.35)=" + fmt("%.3f", chaotic) +
                    ", grid 30->60 at E=0.2: " + fmt("%.3f", f30) + " -> " + fmt("%.3f", f60)};
}

// -- 9 ---------------------------------------------------------------------

Outcome scaling_law() {
    // synthetic exact model
    std::vector<std::pair<double, double>> pts;
    for (double N : {10.0, 16.0, 24.0, 34.0}) pts.emplace_back(N, std::pow(N, -0.8) * std::exp(-1.7));
    const auto syn = fit_scaling(pts);
    const double syn_err = std::max(std::abs(syn.alpha + 0.8), std::abs(syn.beta - 1.7));

    // GOE at mid-spectrum
    RunConfig goe;
    goe.command = "scaling";
    goe.seed = kSeed;
    goe.N = {10, 16, 24, 34};
    goe.short_time = false;
    goe.sampler.count = 500;
    goe.scaling_mode = "goe";
    goe.scaling_energies = {0.0};
    const auto goe_alpha = std::get<std::vector<double>>(run_scaling(goe).summary.at("alpha"));
    const double a_goe = goe_alpha.empty() ? NAN : goe_alpha.front();

    // u(3) regular region: lowest energy covered by every size's smoothed curve
    std::vector<SmoothedCurve> curves;
    const std::vector<int> sizes{20, 30, 40};
    for (int N : sizes) {
        auto c = model_config(N);
        c.short_time = false;
        c.window = static_cast<std::size_t>(2 * N);
        curves.push_back(scan_model(c, N, false).nu);
    }
    double E = -1e9;
    for (const auto& c : curves) E = std::max(E, c.energies.front());
    std::vector<std::pair<double, double>> u3;
    for (std::size_t k = 0; k < sizes.size(); ++k) u3.emplace_back(sizes[k], interpolate_at(curves[k], E));
    const double a_u3 = fit_scaling(u3, E).alpha;
    FregConfig probe;
    probe.cells = 30;
    probe.budget = 60;
    const double f_reg = freg_at_energy(E, {0.4, 0.4}, probe).f_reg;

    const bool ok = syn_err <= 1e-12 && std::abs(a_goe + 1.0) <= 0.3 && a_u3 >= -0.1;
    return {ok, "synthetic error " + fmt("%.1g", syn_err) + ", GOE alpha(E=0)=" + fmt("%.3f", a_goe) +
                    ", u(3) alpha(E=" + fmt("%.3f", E) + ")=" + fmt("%.3f", a_u3) + " (classical f_reg there " +
                    fmt("%.2f", f_reg) + ")"};
}

// -- 10 --------------------------------------------------------------------

std::string csv_bodies(const RunResult& r) {
    std::string out;
    for (const auto& t : r.tables) out += format_csv(t);
    return out;
}

Outcome determinism() {
    const auto tmp = std::filesystem::temp_directory_path() / "otoclab_acceptance";
    std::filesystem::remove_all(tmp);

    std::vector<RunConfig> configs;
    auto base = [&](const std::string& cmd) {
        RunConfig c;
        c.command = cmd;
        c.seed = kSeed;
        c.N = {12};
        c.sampler.count = 200;
        c.window = 20;
        c.out = tmp;
        return c;
    };
    configs.push_back(base("spectrum"));
    configs.push_back(base("otoc"));
    {
        auto c = base("classical");
        c.classical_xi = {0.0, 0.4};
        c.classical_energies = {-0.2, 0.2};
        c.freg.cells = 12;
        c.freg.budget = 16;
        c.freg.T = 2000;
        configs.push_back(c);
    }
    {
        auto c = base("scaling");
        c.N = {8, 10, 12};
        c.short_time = false;
        c.scaling_mode = "goe";
        configs.push_back(c);
    }
    {
        auto c = base("goe");
        c.N = {8, 10};
        configs.push_back(c);
    }

    std::size_t compared = 0;
    std::string spectrum_csv;
    for (auto& c : configs) {
        std::string first;
        for (unsigned threads : {1u, 3u, 1u}) {
            c.threads = threads;
            const auto result = run_command(c);
            const auto body = csv_bodies(result);
            if (first.empty()) {
                first = body;
                if (c.command == "spectrum") spectrum_csv = write_run(result, c) / "spectrum.csv";
            } else if (body != first) {
                return {false, c.command + " output differs at threads=" + std::to_string(threads)};
            }
            ++compared;
        }
    }
    // plot re-reads a written table
    auto p = base("plot");
    p.plot.table = spectrum_csv;
    p.plot.x = "n";
    p.plot.y = {"E_n"};
    const auto svg1 = run_command(p).figures.at(0).second;
    p.threads = 3;
    const auto svg2 = run_command(p).figures.at(0).second;
    std::filesystem::remove_all(tmp);
    if (svg1 != svg2) return {false, "plot output differs"};
    return {true, std::to_string(compared) + " runs over 5 commands byte-identical across thread counts; plot stable"};
}

} // namespace

int main() {
    report(1, "basis dimensions", dimensions);
    report(2, "integrability commutators", integrability);
    report(3, "eigensystem residuals", residuals);
    report(4, "OTOC oracle equivalence", oracle_equivalence);
    report(5, "long-time OTOC magnitudes", figure_magnitudes);
    report(6, "wiggliness vs regularity", wiggliness_regularity);
    report(7, "classical map spot checks", classical_map);
    report(8, "quantum-classical Lyapunov correspondence", lyapunov_correspondence);
    report(9, "scaling law", scaling_law);
    report(10, "determinism", determinism);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
