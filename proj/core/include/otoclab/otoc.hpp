#pragma once

// Microcanonical OTOCs C_n(t) = <E_n| [V(t),W]^dag [V(t),W] |E_n> evaluated
// in the eigenbasis of the Hamiltonian, with V(t)_{mk} = e^{i(E_m-E_k)t} V_{mk}
// (hbar = 1). Long-time statistics, short-time growth rate, smoothing along
// the spectrum and the size-scaling fit live here as well.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "otoclab/spectrum.hpp"

namespace otoclab {

// Uniform random times on [t_min, t_max]. One draw is shared by every state
// of a run.
struct TimeSampler {
    double t_min = 1e7;
    double t_max = 1e9;
    std::size_t count = 2500;
    std::uint64_t seed = 0;

    void validate() const;
    std::vector<double> draw() const;
};

struct OtocSeries {
    std::size_t n = 0;
    std::vector<double> times;
    std::vector<double> values;
};

struct OtocRecord {
    std::size_t n = 0;
    double energy = 0.0;
    double mean = 0.0;
    double sigma = 0.0;
    std::optional<double> wiggliness;
    std::optional<double> lambda_q;
    std::optional<double> t_tilde;
    std::optional<double> fit_r2;
    std::optional<double> curvature;
};

struct SmoothedCurve {
    std::vector<double> energies;
    std::vector<double> values;
    std::vector<std::size_t> counts;   // defined entries that entered each window
    std::size_t window = 0;

    std::size_t size() const { return energies.size(); }
};

struct ScalingFit {
    double energy = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double residual = 0.0;
    std::vector<double> sizes;
};

// Holds one operator pair in the eigenbasis and evaluates C_n(t) two ways:
// a per-state row formula costing O(dim^2), and an all-states batch costing
// two dim^3 real matrix products.
class OtocEvaluator {
public:
    OtocEvaluator(const EigenOperator& V, const EigenOperator& W, const Eigen::VectorXd& energies);

    std::size_t dim() const { return static_cast<std::size_t>(energies_.size()); }
    const Eigen::VectorXd& energies() const { return energies_; }

    double at(std::size_t n, double t) const;
    Eigen::VectorXd all_states(double t) const;

    // Means below this are treated as identically vanishing:
    // 1e-12 dim (max|V| max|W|)^2.
    double floor() const { return floor_; }

private:
    Eigen::MatrixXd V_;
    Eigen::MatrixXd W_;
    Eigen::VectorXd energies_;
    double floor_ = 0.0;
};

double otoc_at_time(const EigenOperator& V, const EigenOperator& W, const Eigen::VectorXd& energies,
                    std::size_t n, double t);

// Sample mean and sample standard deviation of C_n over the sampler's times.
OtocRecord longtime_stats(const EigenOperator& V, const EigenOperator& W,
                          const Eigen::VectorXd& energies, std::size_t n, const TimeSampler& sampler);

// Same statistics for every state; parallel over time samples.
std::vector<OtocRecord> longtime_stats_all(const OtocEvaluator& eval, const TimeSampler& sampler,
                                           unsigned threads = 1);

// Geometric grid t0 2^k, k = 0, 1, ... up to and including the first point
// beyond t_stop.
std::vector<double> geometric_scan(double t0, double t_stop);

// Smallest time on the scan where C reaches mean - sigma, refined by bisection
// between the bracketing grid points to relative width rel_width.
std::optional<double> ehrenfest_estimate(const OtocSeries& scan, double mean, double sigma,
                                         const std::function<double(double)>& evaluate,
                                         double rel_width = 1e-3);

struct ShortTimeFit {
    std::optional<double> lambda;
    double r2 = 0.0;
    double curvature = 0.0;   // |change of log-slope across the window| / |slope|
    std::size_t used = 0;
};

// Least-squares line through (t, ln C); lambda = slope / 2. Needs at least 10
// samples above `floor`.
ShortTimeFit fit_short_time(const OtocSeries& series, double floor);

struct AnalysisOptions {
    TimeSampler sampler;
    bool short_time = true;
    double scan_t0 = 1e-3;
    std::size_t fit_points = 16;
    double bisection_rel_width = 1e-3;
    unsigned threads = 1;
};

// Long-time statistics for all states and, when requested, the Ehrenfest
// estimate and short-time rate of each state.
std::vector<OtocRecord> analyze_states(const OtocEvaluator& eval, const AnalysisOptions& opts);

// Moving average over `window` consecutive entries (by position). Undefined
// entries are skipped; windows with no defined entry are dropped. Only
// windows lying fully inside the sequence are emitted, unless the sequence is
// shorter than the window, in which case one window spans it all.
SmoothedCurve moving_average(std::span<const double> energies,
                             std::span<const std::optional<double>> values, std::size_t window);

// Linear interpolation; throws InvalidParameter outside the curve's range.
double interpolate_at(const SmoothedCurve& curve, double energy);

// ln nu = alpha ln N - beta over (N, nu) points.
ScalingFit fit_scaling(std::span<const std::pair<double, double>> points, double energy = 0.0);

} // namespace otoclab
