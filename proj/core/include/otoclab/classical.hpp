#pragma once

// Classical limit of the u(3) model on the compact phase space
// s^2 = p1^2 + p2^2 + q1^2 + q2^2 <= 2:
//
//   H = (1 - xi) s^2/2 - xi [(p1^2 + p2^2)(2 - s^2) + (p1 q2 - q1 p2)^2]
//       - epsilon p2 sqrt(2 - s^2)
//
// Phase-space vectors are ordered (p1, p2, q1, q2).

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace otoclab {

struct PhasePoint {
    double p1 = 0.0;
    double p2 = 0.0;
    double q1 = 0.0;
    double q2 = 0.0;

    double s2() const { return p1 * p1 + p2 * p2 + q1 * q1 + q2 * q2; }
    std::array<double, 4> as_array() const { return {p1, p2, q1, q2}; }
    static PhasePoint from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }
};

struct ClassicalParams {
    double xi = 0.0;
    double epsilon = 0.0;

    void validate() const;
};

// Throws DomainError for s^2 > 2.
double hamiltonian_value(const PhasePoint& x, const ClassicalParams& params);

// (dH/dp1, dH/dp2, dH/dq1, dH/dq2); requires s^2 < 2.
std::array<double, 4> hamiltonian_gradient(const PhasePoint& x, const ClassicalParams& params);

// (dp1/dt, dp2/dt, dq1/dt, dq2/dt) = (-dH/dq1, -dH/dq2, dH/dp1, dH/dp2).
// Throws DomainError for s^2 >= 2.
std::array<double, 4> equations_of_motion(const PhasePoint& x, const ClassicalParams& params);

enum class SectionPlane { q1, q2 };
enum class Orientation { positive, negative, both };

struct SectionSpec {
    SectionPlane plane = SectionPlane::q1;
    Orientation orientation = Orientation::positive;
};

struct SectionCrossing {
    double t = 0.0;
    PhasePoint x;
};

enum class TrajectoryStatus { ok, truncated_boundary, step_underflow };

struct IntegratorOptions {
    double tol = 1e-13;
    double initial_step = 1e-2;
    double boundary_margin = 1e-9;   // truncate once s^2 > 2 - margin
    std::optional<SectionSpec> section;
};

struct Trajectory {
    PhasePoint start;
    PhasePoint end;
    double t_end = 0.0;
    TrajectoryStatus status = TrajectoryStatus::ok;
    std::vector<SectionCrossing> crossings;
    double max_energy_drift = 0.0;   // max |H(t) - H(0)| / max(|H(0)|, 0.1)
    std::size_t steps = 0;
};

// Adaptive Runge-Kutta-Fehlberg 7(8) integration over [0, T] (T may be
// negative). Section crossings are located to |coordinate| <= 1e-12.
Trajectory integrate(const PhasePoint& x0, const ClassicalParams& params, double T,
                     const IntegratorOptions& opts = {});

// Stop early once lambda(t) stayed above factor * threshold over a full decade
// [t/10, t] with t/10 >= min_decade_start.
struct EarlyExit {
    double threshold = 0.0;
    double factor = 3.0;
    double min_decade_start = 200.0;
};

struct LyapunovOptions {
    double T = 1e4;
    double renorm_interval = 1.0;
    double tol = 1e-10;
    std::array<double, 4> deviation = {0.5, 0.5, 0.5, 0.5};
    double boundary_margin = 1e-9;
    std::optional<SectionSpec> section;
    std::optional<EarlyExit> early_exit;
};

struct LyapunovEstimate {
    double lambda = 0.0;       // finite-time estimate at t_reached
    double tail_slope = 0.0;   // d lambda / d log10 t over the last decade
    double t_reached = 0.0;
    TrajectoryStatus status = TrajectoryStatus::ok;
    bool stopped_early = false;
    std::vector<SectionCrossing> crossings;
};

// Benettin scheme on the tangent flow, renormalizing the deviation every
// renorm_interval. Euclidean norm on (p1, p2, q1, q2).
LyapunovEstimate tangent_lyapunov(const PhasePoint& x0, const ClassicalParams& params,
                                  const LyapunovOptions& opts = {});

// Solves H(p1, p2, 0, q2) = E for u = p1^2 in [0, 2 - p2^2 - q2^2] by bracketed
// bisection; returns sqrt(u) for the smallest-u root.
std::optional<double> solve_section_momentum(double q2, double p2, double E,
                                             const ClassicalParams& params);

// Full phase point on the section with section coordinates (a, b):
// (q2, p2) for the q1 plane, (q1, p1) for the q2 plane. The free momentum's
// sign is chosen so the crossing has the requested orientation.
std::optional<PhasePoint> section_point(double a, double b, double E, const ClassicalParams& params,
                                        const SectionSpec& section);

struct ClassicalMinimum {
    PhasePoint x;
    double value = 0.0;
};

// Global minimum of H by multi-start descent.
ClassicalMinimum minimize_h(const ClassicalParams& params);

struct FregConfig {
    std::size_t cells = 100;          // per axis
    std::size_t budget = 500;         // max accepted trajectories
    double T = 2e4;
    double renorm_interval = 1.0;
    double tol = 1e-10;
    SectionSpec section;
    unsigned threads = 1;
    std::size_t batch = 1;            // seeds evolved concurrently per decision
    bool early_exit = true;
    bool keep_points = false;
};

struct SectionGrid {
    SectionSpec section;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t cells = 0;
    std::vector<std::uint8_t> admissible;
    std::vector<std::uint8_t> visited;
    std::vector<std::uint8_t> regular;
    std::vector<double> lambda;   // lambda of the first trajectory crossing each cell

    std::size_t size() const { return cells * cells; }
    std::optional<std::size_t> cell_of(double a, double b) const;
    std::pair<double, double> center(std::size_t index) const;
};

struct SectionPointRecord {
    double a = 0.0;
    double b = 0.0;
    double lambda = 0.0;
    std::size_t trajectory = 0;
};

struct FregResult {
    double energy = 0.0;
    double f_reg = 0.0;
    double lambda_bar = 0.0;
    double coverage = 0.0;
    std::size_t trajectories = 0;
    std::size_t admissible_cells = 0;
    std::size_t visited_cells = 0;
    std::size_t regular_cells = 0;
    double threshold = 0.0;
    SectionGrid grid;
    std::vector<SectionPointRecord> points;
};

// Regular iff finite-time lambda(T) < max(10 ln T / T, 5 * harmonic envelope).
double regularity_threshold(double T, double renorm_interval = 1.0, double tol = 1e-10);

// Median finite-time lambda of 20 runs of the harmonic (xi = eps = 0) flow.
double harmonic_envelope(double T, double renorm_interval = 1.0, double tol = 1e-10);

// Fraction of regularity and cell-averaged Lyapunov exponent at energy E from
// Poincare-section coverage. Throws InvalidParameter when no cell admits a
// section point at E.
FregResult freg_at_energy(double E, const ClassicalParams& params, const FregConfig& config = {});

} // namespace otoclab
