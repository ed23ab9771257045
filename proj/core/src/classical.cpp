#include "otoclab/classical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <tuple>

#include <boost/numeric/odeint.hpp>

#include "otoclab/error.hpp"
#include "parallel.hpp"

namespace otoclab {

namespace {

namespace ode = boost::numeric::odeint;

// Forward-mode dual number; the tangent flow J(x) dx is the derivative part
// of the vector field evaluated at x + e dx.
struct Dual {
    double v = 0.0;
    double d = 0.0;
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }
inline Dual operator*(double s, Dual a) { return {s * a.v, s * a.d}; }
inline Dual operator-(double s, Dual a) { return {s - a.v, -a.d}; }
inline Dual sqrt(Dual a) {
    const double r = std::sqrt(a.v);
    return {r, a.d / (2.0 * r)};
}
using std::sqrt;

// Hand-derived partial derivatives of H, ordered (p1, p2, q1, q2).
template <class T>
std::array<T, 4> gradient(const std::array<T, 4>& x, double xi, double eps) {
    const T& p1 = x[0];
    const T& p2 = x[1];
    const T& q1 = x[2];
    const T& q2 = x[3];
    const T P = p1 * p1 + p2 * p2;
    const T S = P + q1 * q1 + q2 * q2;
    const T R = 2.0 - S;
    const T r = sqrt(R);
    const T L = p1 * q2 - q1 * p2;
    const T RmP = R - P;
    const double a = 1.0 - xi;
    return {
        a * p1 - xi * (2.0 * p1 * RmP + 2.0 * L * q2) + eps * p1 * p2 / r,
        a * p2 - xi * (2.0 * p2 * RmP - 2.0 * L * q1) - eps * r + eps * p2 * p2 / r,
        a * q1 - xi * (-2.0 * q1 * P - 2.0 * L * p2) + eps * p2 * q1 / r,
        a * q2 - xi * (-2.0 * q2 * P + 2.0 * L * p1) + eps * p2 * q2 / r,
    };
}

// H without the domain check; s^2 slightly above 2 from rounding is clamped.
double h_raw(double p1, double p2, double q1, double q2, const ClassicalParams& c) {
    const double P = p1 * p1 + p2 * p2;
    const double S = P + q1 * q1 + q2 * q2;
    const double R = std::max(0.0, 2.0 - S);
    const double L = p1 * q2 - q1 * p2;
    return (1.0 - c.xi) * S / 2.0 - c.xi * (P * R + L * L) - c.epsilon * p2 * std::sqrt(R);
}

using State4 = std::array<double, 4>;
using State8 = std::array<double, 8>;

struct FlowSystem {
    double xi;
    double eps;
    void operator()(const State4& x, State4& dxdt, double) const {
        const auto g = gradient<double>(x, xi, eps);
        dxdt = {-g[2], -g[3], g[0], g[1]};
    }
};

struct TangentSystem {
    double xi;
    double eps;
    void operator()(const State8& s, State8& dsdt, double) const {
        const std::array<Dual, 4> x{Dual{s[0], s[4]}, Dual{s[1], s[5]}, Dual{s[2], s[6]}, Dual{s[3], s[7]}};
        const auto g = gradient<Dual>(x, xi, eps);
        dsdt = {-g[2].v, -g[3].v, g[0].v, g[1].v, -g[2].d, -g[3].d, g[0].d, g[1].d};
    }
};

template <std::size_t D>
double s2_of(const std::array<double, D>& x) {
    return x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3];
}

template <std::size_t D>
bool finite(const std::array<double, D>& x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

std::size_t plane_index(SectionPlane p) { return p == SectionPlane::q1 ? 2 : 3; }

bool orientation_ok(Orientation o, double velocity) {
    switch (o) {
    case Orientation::positive: return velocity > 0.0;
    case Orientation::negative: return velocity < 0.0;
    case Orientation::both: return true;
    }
    return false;
}

// Shared stepping loop for the plain and tangent flows.
template <std::size_t D, class System>
class Flow {
public:
    Flow(System sys, double tol, double margin, std::optional<SectionSpec> section)
        : sys_(sys), ctrl_(ode::make_controlled<Base>(tol, tol)), margin_(margin), section_(section) {}

    // Advances x from t to t_end. Returns false if the trajectory had to be
    // truncated; `status` then says why.
    template <class OnStep>
    bool advance(std::array<double, D>& x, double& t, double t_end, double& dt,
                 std::vector<SectionCrossing>& crossings, TrajectoryStatus& status, OnStep&& on_step) {
        const double dir = t_end >= t ? 1.0 : -1.0;
        while (dir * (t_end - t) > 0.0) {
            const double remaining = std::abs(t_end - t);
            const bool clipped = std::abs(dt) > remaining;
            const double natural = std::abs(dt);
            double h = dir * std::min(natural, remaining);
            const auto in = x;
            std::array<double, D> out;
            double t_try = t;
            const auto res = ctrl_.try_step(sys_, in, t_try, out, h);
            if (res == ode::fail) {
                dt = h;
                if (std::abs(dt) < 1e-14 * std::max(1.0, std::abs(t))) {
                    status = TrajectoryStatus::step_underflow;
                    return false;
                }
                continue;
            }
            if (!finite(out) || s2_of(out) > 2.0 - margin_) {
                status = TrajectoryStatus::truncated_boundary;
                return false;
            }
            if (section_) locate_crossing(in, out, t, t_try - t, crossings);
            x = out;
            t = t_try;
            dt = clipped ? dir * std::max(std::abs(h), natural) : h;
            ++steps_;
            on_step(t, x);
        }
        return true;
    }

    std::size_t steps() const { return steps_; }

private:
    using Base = ode::runge_kutta_fehlberg78<std::array<double, D>>;

    void locate_crossing(const std::array<double, D>& in, const std::array<double, D>& out, double t0,
                         double h, std::vector<SectionCrossing>& crossings) {
        const std::size_t c = plane_index(section_->plane);
        const double f0 = in[c];
        const double f1 = out[c];
        if (!((f0 < 0.0 && f1 >= 0.0) || (f0 > 0.0 && f1 <= 0.0))) return;

        double a = 0.0, b = h, fa = f0;
        double tau = (f0 != f1) ? h * f0 / (f0 - f1) : 0.5 * h;
        std::array<double, D> xs = out;
        std::array<double, D> v;
        for (int iter = 0; iter < 60; ++iter) {
            base_.do_step(sys_, in, t0, xs, tau);
            const double g = xs[c];
            if (std::abs(g) <= 1e-13) break;
            if ((g < 0.0) == (fa < 0.0)) {
                a = tau;
                fa = g;
            } else {
                b = tau;
            }
            sys_(xs, v, t0 + tau);
            const double newton = tau - g / v[c];
            const double lo = std::min(a, b), hi = std::max(a, b);
            tau = (std::isfinite(newton) && newton > lo && newton < hi) ? newton : 0.5 * (a + b);
        }
        sys_(xs, v, t0 + tau);
        if (!orientation_ok(section_->orientation, v[c])) return;
        crossings.push_back({t0 + tau, PhasePoint{xs[0], xs[1], xs[2], xs[3]}});
    }

    System sys_;
    ode::controlled_runge_kutta<Base> ctrl_;
    Base base_;
    double margin_;
    std::optional<SectionSpec> section_;
    std::size_t steps_ = 0;
};

double sectional_h(double u, double q2, double p2, const ClassicalParams& c) {
    return h_raw(std::sqrt(std::max(0.0, u)), p2, 0.0, q2, c);
}

// Smallest root of f on [lo, hi] found from a uniform scan plus bisection.
template <class F>
std::optional<double> first_root(F&& f, double lo, double hi, double target, std::size_t scan = 256) {
    if (hi < lo) return std::nullopt;
    double x0 = lo;
    double f0 = f(x0) - target;
    if (f0 == 0.0) return x0;
    for (std::size_t i = 1; i <= scan; ++i) {
        const double x1 = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(scan);
        const double f1 = f(x1) - target;
        if (f1 == 0.0) return x1;
        if ((f0 < 0.0) != (f1 < 0.0)) {
            double a = x0, b = x1, fa = f0;
            for (int it = 0; it < 200 && b - a > 0.0; ++it) {
                const double m = 0.5 * (a + b);
                if (m <= a || m >= b) break;
                const double fm = f(m) - target;
                if (fm == 0.0) return m;
                if ((fm < 0.0) == (fa < 0.0)) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            const double root = std::abs(f(a) - target) <= std::abs(f(b) - target) ? a : b;
            if (std::abs(f(root) - target) <= 1e-10) return root;
        }
        x0 = x1;
        f0 = f1;
    }
    return std::nullopt;
}

void regress_tail(const std::vector<std::pair<double, double>>& samples, LyapunovEstimate& est) {
    const double start = est.t_reached / 10.0;
    double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [t, l] : samples) {
        if (t < start) continue;
        const double x = std::log10(t);
        n += 1;
        sx += x;
        sy += l;
        sxx += x * x;
        sxy += x * l;
    }
    const double den = n * sxx - sx * sx;
    est.tail_slope = (n >= 2 && den > 0.0) ? (n * sxy - sx * sy) / den : 0.0;
}

} // namespace

void ClassicalParams::validate() const {
    if (!(xi >= 0.0 && xi <= 1.0)) throw InvalidParameter("xi must lie in [0, 1]");
    if (!(epsilon >= 0.0)) throw InvalidParameter("epsilon must be >= 0");
}

double hamiltonian_value(const PhasePoint& x, const ClassicalParams& params) {
    if (x.s2() > 2.0) throw DomainError("phase point outside s^2 <= 2");
    return h_raw(x.p1, x.p2, x.q1, x.q2, params);
}

std::array<double, 4> hamiltonian_gradient(const PhasePoint& x, const ClassicalParams& params) {
    if (x.s2() >= 2.0) throw DomainError("gradient undefined on the boundary s^2 = 2");
    return gradient<double>(x.as_array(), params.xi, params.epsilon);
}

std::array<double, 4> equations_of_motion(const PhasePoint& x, const ClassicalParams& params) {
    const auto g = hamiltonian_gradient(x, params);
    return {-g[2], -g[3], g[0], g[1]};
}

Trajectory integrate(const PhasePoint& x0, const ClassicalParams& params, double T,
                     const IntegratorOptions& opts) {
    if (!(opts.tol > 0.0)) throw InvalidParameter("integrate: tol must be > 0");
    if (x0.s2() >= 2.0 - opts.boundary_margin) throw DomainError("integrate: start point on the boundary");
    const double h0 = hamiltonian_value(x0, params);
    const double scale = std::max(std::abs(h0), 0.1);

    Trajectory traj;
    traj.start = x0;
    Flow<4, FlowSystem> flow({params.xi, params.epsilon}, opts.tol, opts.boundary_margin, opts.section);
    auto x = x0.as_array();
    double t = 0.0;
    double dt = (T >= 0.0 ? 1.0 : -1.0) * opts.initial_step;
    flow.advance(x, t, T, dt, traj.crossings, traj.status, [&](double, const State4& s) {
        const double drift = std::abs(h_raw(s[0], s[1], s[2], s[3], params) - h0) / scale;
        traj.max_energy_drift = std::max(traj.max_energy_drift, drift);
    });
    traj.end = PhasePoint::from_array(x);
    traj.t_end = t;
    traj.steps = flow.steps();
    return traj;
}

LyapunovEstimate tangent_lyapunov(const PhasePoint& x0, const ClassicalParams& params,
                                  const LyapunovOptions& opts) {
    if (!(opts.T > 0.0) || !(opts.renorm_interval > 0.0)) {
        throw InvalidParameter("tangent_lyapunov: T and renorm_interval must be > 0");
    }
    if (x0.s2() >= 2.0 - opts.boundary_margin) {
        throw DomainError("tangent_lyapunov: start point on the boundary");
    }
    State8 s{x0.p1, x0.p2, x0.q1, x0.q2,
             opts.deviation[0], opts.deviation[1], opts.deviation[2], opts.deviation[3]};
    auto dev_norm = [&s] { return std::sqrt(s[4] * s[4] + s[5] * s[5] + s[6] * s[6] + s[7] * s[7]); };
    double ref = dev_norm();
    if (!(ref > 0.0)) throw InvalidParameter("tangent_lyapunov: zero initial deviation");

    LyapunovEstimate est;
    Flow<8, TangentSystem> flow({params.xi, params.epsilon}, opts.tol, opts.boundary_margin, opts.section);
    std::vector<std::pair<double, double>> history;
    history.reserve(static_cast<std::size_t>(opts.T / opts.renorm_interval) + 2);

    double t = 0.0;
    double dt = std::min(1e-2, opts.renorm_interval);
    double log_sum = 0.0;
    double t_below = 0.0;
    auto no_op = [](double, const State8&) {};
    while (t < opts.T) {
        const double t_next = std::min(opts.T, t + opts.renorm_interval);
        if (!flow.advance(s, t, t_next, dt, est.crossings, est.status, no_op)) break;
        const double norm = dev_norm();
        log_sum += std::log(norm / ref);
        for (int k = 4; k < 8; ++k) s[static_cast<std::size_t>(k)] /= norm;
        ref = 1.0;
        const double lambda = log_sum / t;
        history.emplace_back(t, lambda);

        if (opts.early_exit) {
            const auto& ee = *opts.early_exit;
            if (!(lambda > ee.factor * ee.threshold)) t_below = t;
            if (t >= 10.0 * std::max(t_below, ee.min_decade_start)) {
                est.stopped_early = true;
                break;
            }
        }
    }
    est.t_reached = t;
    est.lambda = t > 0.0 ? log_sum / t : 0.0;
    regress_tail(history, est);
    return est;
}

std::optional<double> solve_section_momentum(double q2, double p2, double E,
                                             const ClassicalParams& params) {
    const double umax = 2.0 - p2 * p2 - q2 * q2;
    if (umax < 0.0) return std::nullopt;
    auto f = [&](double u) { return sectional_h(u, q2, p2, params); };
    const auto u = first_root(f, 0.0, umax, E);
    if (!u) return std::nullopt;
    return std::sqrt(std::max(0.0, *u));
}

std::optional<PhasePoint> section_point(double a, double b, double E, const ClassicalParams& params,
                                        const SectionSpec& section) {
    if (section.plane == SectionPlane::q1) {
        const auto p1 = solve_section_momentum(a, b, E, params);
        if (!p1) return std::nullopt;
        PhasePoint x{*p1, b, 0.0, a};
        if (x.s2() >= 2.0) return std::nullopt;
        // dq1/dt is odd in p1 on this plane; pick the branch with the right sign.
        const double v = hamiltonian_gradient(x, params)[0];
        if (!orientation_ok(section.orientation, v) && *p1 > 0.0) {
            x.p1 = -x.p1;
            if (!orientation_ok(section.orientation, -v)) return std::nullopt;
        }
        return x;
    }
    // q2 plane: section coordinates (q1, p1); solve for p2 over its full range.
    const double m2 = 2.0 - a * a - b * b;
    if (m2 < 0.0) return std::nullopt;
    const double m = std::sqrt(m2);
    auto f = [&](double p2) { return h_raw(b, p2, a, 0.0, params); };
    double lo = -m;
    while (lo < m) {
        const auto p2 = first_root(f, lo, m, E);
        if (!p2) return std::nullopt;
        PhasePoint x{b, *p2, a, 0.0};
        if (x.s2() < 2.0 && orientation_ok(section.orientation, hamiltonian_gradient(x, params)[1])) {
            return x;
        }
        lo = *p2 + 1e-9 * std::max(1.0, m);
    }
    return std::nullopt;
}

ClassicalMinimum minimize_h(const ClassicalParams& params) {
    params.validate();
    ClassicalMinimum best{{}, std::numeric_limits<double>::infinity()};
    const double limit = 2.0 - 1e-9;
    const std::array<double, 3> levels{-0.6, 0.0, 0.6};
    for (double a : levels)
        for (double b : levels)
            for (double c : levels)
                for (double d : levels) {
                    PhasePoint x{a, b, c, d};
                    double f = hamiltonian_value(x, params);
                    double step = 0.1;
                    for (int it = 0; it < 5000; ++it) {
                        const auto g = hamiltonian_gradient(x, params);
                        const double gn = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3]);
                        if (gn < 1e-13) break;
                        bool moved = false;
                        for (int ls = 0; ls < 60; ++ls) {
                            PhasePoint y{x.p1 - step * g[0], x.p2 - step * g[1], x.q1 - step * g[2],
                                         x.q2 - step * g[3]};
                            if (y.s2() < limit) {
                                const double fy = hamiltonian_value(y, params);
                                if (fy <= f - 1e-4 * step * gn * gn) {
                                    x = y;
                                    f = fy;
                                    moved = true;
                                    step *= 1.5;
                                    break;
                                }
                            }
                            step *= 0.5;
                        }
                        if (!moved) break;
                    }
                    if (f < best.value) best = {x, f};
                }
    return best;
}

std::optional<std::size_t> SectionGrid::cell_of(double a, double b) const {
    if (cells == 0) return std::nullopt;
    const double w = (hi - lo) / static_cast<double>(cells);
    const double fa = std::floor((a - lo) / w);
    const double fb = std::floor((b - lo) / w);
    if (fa < 0 || fb < 0 || fa >= static_cast<double>(cells) || fb >= static_cast<double>(cells)) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(fb) * cells + static_cast<std::size_t>(fa);
}

std::pair<double, double> SectionGrid::center(std::size_t index) const {
    const double w = (hi - lo) / static_cast<double>(cells);
    const auto ia = index % cells;
    const auto ib = index / cells;
    return {lo + (static_cast<double>(ia) + 0.5) * w, lo + (static_cast<double>(ib) + 0.5) * w};
}

double harmonic_envelope(double T, double renorm_interval, double tol) {
    static std::mutex mutex;
    static std::map<std::tuple<double, double, double>, double> cache;
    const auto key = std::make_tuple(T, renorm_interval, tol);
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }
    const ClassicalParams harmonic{0.0, 0.0};
    LyapunovOptions opts;
    opts.T = T;
    opts.renorm_interval = renorm_interval;
    opts.tol = tol;
    std::vector<double> lambdas;
    for (int k = 0; k < 20; ++k) {
        const PhasePoint x{0.1 + 0.04 * k, 0.05 + 0.01 * k, 0.3 - 0.012 * k, 0.2};
        lambdas.push_back(tangent_lyapunov(x, harmonic, opts).lambda);
    }
    std::sort(lambdas.begin(), lambdas.end());
    const double median = 0.5 * (lambdas[9] + lambdas[10]);
    std::lock_guard lock(mutex);
    cache[key] = median;
    return median;
}

double regularity_threshold(double T, double renorm_interval, double tol) {
    return std::max(10.0 * std::log(T) / T, 5.0 * harmonic_envelope(T, renorm_interval, tol));
}

FregResult freg_at_energy(double E, const ClassicalParams& params, const FregConfig& config) {
    params.validate();
    if (config.cells < 1 || config.budget < 1 || config.batch < 1) {
        throw InvalidParameter("freg_at_energy: cells, budget and batch must be >= 1");
    }
    FregResult result;
    result.energy = E;
    result.threshold = regularity_threshold(config.T, config.renorm_interval, config.tol);

    SectionGrid& grid = result.grid;
    grid.section = config.section;
    grid.lo = -std::sqrt(2.0);
    grid.hi = std::sqrt(2.0);
    grid.cells = config.cells;
    grid.admissible.assign(grid.size(), 0);
    grid.visited.assign(grid.size(), 0);
    grid.regular.assign(grid.size(), 0);
    grid.lambda.assign(grid.size(), 0.0);

    std::vector<std::optional<PhasePoint>> seeds(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto [a, b] = grid.center(i);
        seeds[i] = section_point(a, b, E, params, config.section);
        if (seeds[i] && seeds[i]->s2() < 2.0 - 1e-6) {
            grid.admissible[i] = 1;
            ++result.admissible_cells;
        }
    }
    if (result.admissible_cells == 0) {
        throw InvalidParameter("freg_at_energy: no section cell admits energy " + std::to_string(E));
    }

    LyapunovOptions lopts;
    lopts.T = config.T;
    lopts.renorm_interval = config.renorm_interval;
    lopts.tol = config.tol;
    lopts.section = config.section;
    if (config.early_exit) lopts.early_exit = EarlyExit{result.threshold, 3.0, config.T / 100.0};

    auto section_coords = [&](const PhasePoint& x) {
        return config.section.plane == SectionPlane::q1 ? std::make_pair(x.q2, x.p2)
                                                        : std::make_pair(x.q1, x.p1);
    };

    std::size_t cursor = 0;
    double lambda_sum = 0.0;
    while (result.trajectories < config.budget) {
        std::vector<std::size_t> batch;
        for (std::size_t i = cursor; i < grid.size() && batch.size() < config.batch; ++i) {
            if (grid.admissible[i] && !grid.visited[i]) batch.push_back(i);
        }
        if (batch.empty()) break;
        cursor = batch.front();

        std::vector<LyapunovEstimate> runs(batch.size());
        detail::parallel_for(batch.size(), config.threads, [&](std::size_t k) {
            runs[k] = tangent_lyapunov(*seeds[batch[k]], params, lopts);
        });

        // Apply in seed order; a seed already covered by an earlier member of
        // the batch is dropped, which reproduces the one-at-a-time sequence.
        for (std::size_t k = 0; k < batch.size() && result.trajectories < config.budget; ++k) {
            const std::size_t seed_cell = batch[k];
            if (grid.visited[seed_cell]) continue;
            const auto& run = runs[k];
            const std::size_t id = result.trajectories++;
            const bool regular = run.status == TrajectoryStatus::ok && !run.stopped_early &&
                                 run.lambda < result.threshold;
            const double lambda = std::max(0.0, run.lambda);

            auto mark = [&](std::size_t cell) {
                if (!grid.admissible[cell] || grid.visited[cell]) return;
                grid.visited[cell] = 1;
                grid.regular[cell] = regular ? 1 : 0;
                grid.lambda[cell] = lambda;
                ++result.visited_cells;
                if (regular) {
                    ++result.regular_cells;
                } else {
                    lambda_sum += lambda;
                }
            };
            mark(seed_cell);
            if (config.keep_points) {
                const auto [a, b] = section_coords(*seeds[seed_cell]);
                result.points.push_back({a, b, lambda, id});
            }
            for (const auto& c : run.crossings) {
                const auto [a, b] = section_coords(c.x);
                if (auto cell = grid.cell_of(a, b)) mark(*cell);
                if (config.keep_points) result.points.push_back({a, b, lambda, id});
            }
        }
    }

    const double visited = static_cast<double>(result.visited_cells);
    result.f_reg = static_cast<double>(result.regular_cells) / visited;
    result.lambda_bar = lambda_sum / visited;
    result.coverage = visited / static_cast<double>(result.admissible_cells);
    return result;
}

} // namespace otoclab
