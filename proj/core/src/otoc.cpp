#include "otoclab/otoc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "otoclab/error.hpp"
#include "parallel.hpp"

namespace otoclab {

namespace {

void phases(const Eigen::VectorXd& energies, double t, Eigen::VectorXd& c, Eigen::VectorXd& s) {
    const auto d = energies.size();
    c.resize(d);
    s.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        const double arg = energies[k] * t;
        c[k] = std::cos(arg);
        s[k] = std::sin(arg);
    }
}

struct MeanSigma {
    double mean;
    double sigma;
};

// Two-pass mean and sample standard deviation, accumulated in index order.
MeanSigma mean_sigma(const double* values, std::size_t count, std::size_t stride) {
    double sum = 0.0;
    for (std::size_t j = 0; j < count; ++j) sum += values[j * stride];
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t j = 0; j < count; ++j) {
        const double d = values[j * stride] - mean;
        ss += d * d;
    }
    return {mean, std::sqrt(ss / static_cast<double>(count - 1))};
}

void fill_stats(OtocRecord& rec, MeanSigma ms, double floor) {
    rec.mean = ms.mean;
    rec.sigma = ms.sigma;
    if (ms.mean > floor) {
        rec.wiggliness = ms.sigma / ms.mean;
    } else {
        rec.wiggliness.reset();
    }
}

} // namespace

void TimeSampler::validate() const {
    if (!(t_min < t_max)) throw InvalidParameter("sampler: t_min must be < t_max");
    if (!(t_min >= 0.0)) throw InvalidParameter("sampler: t_min must be >= 0");
    if (count < 2) throw InvalidParameter("sampler: count must be >= 2");
}

std::vector<double> TimeSampler::draw() const {
    validate();
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      0x54494d45u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> u(t_min, t_max);
    std::vector<double> times(count);
    for (auto& t : times) t = u(rng);
    return times;
}

OtocEvaluator::OtocEvaluator(const EigenOperator& V, const EigenOperator& W,
                             const Eigen::VectorXd& energies)
    : V_(V.entries), W_(W.entries), energies_(energies) {
    if (V.basis != W.basis) {
        throw BasisMismatch("otoc: V in " + V.basis.describe() + ", W in " + W.basis.describe());
    }
    const auto d = energies.size();
    if (V_.rows() != d || V_.cols() != d || W_.rows() != d || W_.cols() != d) {
        throw BasisMismatch("otoc: operator and spectrum dimensions differ");
    }
    if (d == 0) throw InvalidParameter("otoc: empty spectrum");
    const double scale = V_.cwiseAbs().maxCoeff() * W_.cwiseAbs().maxCoeff();
    floor_ = 1e-12 * static_cast<double>(d) * scale * scale;
}

double OtocEvaluator::at(std::size_t n, double t) const {
    const auto d = energies_.size();
    if (n >= static_cast<std::size_t>(d)) throw InvalidParameter("otoc: state index out of range");
    const auto row = static_cast<Eigen::Index>(n);
    Eigen::VectorXd c, s;
    phases(energies_, t, c, s);

    // first term: e^{iE_n t} sum_k V_nk e^{-iE_k t} W_km
    const Eigen::VectorXd vr = V_.row(row).transpose();
    const Eigen::VectorXd ar = W_ * vr.cwiseProduct(c);
    const Eigen::VectorXd ai = -(W_ * vr.cwiseProduct(s));
    // second term: e^{-iE_m t} sum_k W_nk e^{iE_k t} V_km
    const Eigen::VectorXd wr = W_.row(row).transpose();
    const Eigen::VectorXd br = V_ * wr.cwiseProduct(c);
    const Eigen::VectorXd bi = V_ * wr.cwiseProduct(s);

    const double cn = c[row];
    const double sn = s[row];
    double total = 0.0;
    for (Eigen::Index m = 0; m < d; ++m) {
        const double r1 = cn * ar[m] - sn * ai[m];
        const double i1 = sn * ar[m] + cn * ai[m];
        const double r2 = c[m] * br[m] + s[m] * bi[m];
        const double i2 = c[m] * bi[m] - s[m] * br[m];
        const double dr = r1 - r2;
        const double di = i1 - i2;
        total += dr * dr + di * di;
    }
    return total;
}

Eigen::VectorXd OtocEvaluator::all_states(double t) const {
    Eigen::VectorXd c, s;
    phases(energies_, t, c, s);

    // M = V diag(e^{-iEt}) W, X = diag(e^{iEt}) M, B = X - X^dagger.
    Eigen::MatrixXd scaled = V_ * c.asDiagonal();
    Eigen::MatrixXd mr(V_.rows(), W_.cols());
    mr.noalias() = scaled * W_;
    scaled = V_ * s.asDiagonal();
    Eigen::MatrixXd mi(V_.rows(), W_.cols());
    mi.noalias() = scaled * W_;
    mi = -mi;

    Eigen::MatrixXd& xr = scaled;
    xr = c.asDiagonal() * mr - s.asDiagonal() * mi;
    Eigen::MatrixXd xi = s.asDiagonal() * mr + c.asDiagonal() * mi;

    mr = xr - xr.transpose();
    mi = xi + xi.transpose();
    return (mr.array().square() + mi.array().square()).rowwise().sum();
}

double otoc_at_time(const EigenOperator& V, const EigenOperator& W, const Eigen::VectorXd& energies,
                    std::size_t n, double t) {
    return OtocEvaluator(V, W, energies).at(n, t);
}

OtocRecord longtime_stats(const EigenOperator& V, const EigenOperator& W,
                          const Eigen::VectorXd& energies, std::size_t n, const TimeSampler& sampler) {
    const OtocEvaluator eval(V, W, energies);
    const auto times = sampler.draw();
    std::vector<double> values(times.size());
    for (std::size_t j = 0; j < times.size(); ++j) values[j] = eval.at(n, times[j]);
    OtocRecord rec;
    rec.n = n;
    rec.energy = energies[static_cast<Eigen::Index>(n)];
    fill_stats(rec, mean_sigma(values.data(), values.size(), 1), eval.floor());
    return rec;
}

std::vector<OtocRecord> longtime_stats_all(const OtocEvaluator& eval, const TimeSampler& sampler,
                                           unsigned threads) {
    const auto times = sampler.draw();
    const auto dim = eval.dim();
    // Row-major (time, state) so each worker writes a contiguous slab.
    std::vector<double> values(times.size() * dim);
    detail::parallel_for(times.size(), threads, [&](std::size_t j) {
        const Eigen::VectorXd row = eval.all_states(times[j]);
        std::copy(row.data(), row.data() + row.size(), values.begin() + static_cast<std::ptrdiff_t>(j * dim));
    });

    std::vector<OtocRecord> out(dim);
    for (std::size_t n = 0; n < dim; ++n) {
        out[n].n = n;
        out[n].energy = eval.energies()[static_cast<Eigen::Index>(n)];
        fill_stats(out[n], mean_sigma(values.data() + n, times.size(), dim), eval.floor());
    }
    return out;
}

std::vector<double> geometric_scan(double t0, double t_stop) {
    if (!(t0 > 0.0)) throw InvalidParameter("geometric_scan: t0 must be > 0");
    std::vector<double> grid;
    double t = t0;
    while (true) {
        grid.push_back(t);
        if (t > t_stop) break;
        t *= 2.0;
    }
    return grid;
}

std::optional<double> ehrenfest_estimate(const OtocSeries& scan, double mean, double sigma,
                                         const std::function<double(double)>& evaluate,
                                         double rel_width) {
    const double target = mean - sigma;
    const auto n = std::min(scan.times.size(), scan.values.size());
    std::size_t k = 0;
    while (k < n && !(scan.values[k] >= target)) ++k;
    if (k == n) return std::nullopt;
    if (k == 0) return scan.times[0];
    double lo = scan.times[k - 1];
    double hi = scan.times[k];
    while (hi - lo > rel_width * hi) {
        const double mid = 0.5 * (lo + hi);
        if (evaluate(mid) >= target) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return 0.5 * (lo + hi);
}

ShortTimeFit fit_short_time(const OtocSeries& series, double floor) {
    ShortTimeFit fit;
    std::vector<double> t, y;
    for (std::size_t i = 0; i < std::min(series.times.size(), series.values.size()); ++i) {
        if (series.values[i] > floor && std::isfinite(series.values[i])) {
            t.push_back(series.times[i]);
            y.push_back(std::log(series.values[i]));
        }
    }
    fit.used = t.size();
    if (t.size() < 10) return fit;

    const double m = static_cast<double>(t.size());
    const double tbar = std::accumulate(t.begin(), t.end(), 0.0) / m;
    const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / m;
    double stt = 0.0, sty = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double dt = t[i] - tbar;
        const double dy = y[i] - ybar;
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if (!(stt > 0.0)) return fit;
    const double slope = sty / stt;
    fit.lambda = 0.5 * slope;
    fit.r2 = syy > 0.0 ? (sty * sty) / (stt * syy) : 1.0;

    // Quadratic fit in the centred variable; the curvature diagnostic is the
    // change of the log-slope across the window relative to the mean slope.
    Eigen::MatrixXd A(static_cast<Eigen::Index>(t.size()), 3);
    Eigen::VectorXd b(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double dt = t[i] - tbar;
        const auto r = static_cast<Eigen::Index>(i);
        A(r, 0) = 1.0;
        A(r, 1) = dt;
        A(r, 2) = dt * dt;
        b[r] = y[i];
    }
    const Eigen::Vector3d coef = A.colPivHouseholderQr().solve(b);
    const double width = *std::max_element(t.begin(), t.end()) - *std::min_element(t.begin(), t.end());
    const double slope_change = std::abs(2.0 * coef[2] * width);
    fit.curvature = std::abs(slope) > 0.0 ? slope_change / std::abs(slope)
                                          : std::numeric_limits<double>::infinity();
    return fit;
}

std::vector<OtocRecord> analyze_states(const OtocEvaluator& eval, const AnalysisOptions& opts) {
    auto records = longtime_stats_all(eval, opts.sampler, opts.threads);
    if (!opts.short_time) return records;

    const auto dim = eval.dim();
    const auto scan_times = geometric_scan(opts.scan_t0, opts.sampler.t_min);
    std::vector<Eigen::VectorXd> scan(scan_times.size());
    detail::parallel_for(scan_times.size(), opts.threads,
                         [&](std::size_t k) { scan[k] = eval.all_states(scan_times[k]); });

    const std::size_t fit_points = std::max<std::size_t>(opts.fit_points, 10);
    detail::parallel_for(dim, opts.threads, [&](std::size_t n) {
        auto& rec = records[n];
        if (!rec.wiggliness) return;
        OtocSeries series;
        series.n = n;
        series.times = scan_times;
        series.values.resize(scan_times.size());
        for (std::size_t k = 0; k < scan_times.size(); ++k) {
            series.values[k] = scan[k][static_cast<Eigen::Index>(n)];
        }
        auto evaluate = [&](double t) { return eval.at(n, t); };
        rec.t_tilde = ehrenfest_estimate(series, rec.mean, rec.sigma, evaluate, opts.bisection_rel_width);
        if (!rec.t_tilde) return;

        OtocSeries window;
        window.n = n;
        const double hi = *rec.t_tilde;
        const double lo = hi / 5.0;
        for (std::size_t i = 0; i < fit_points; ++i) {
            const double t = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(fit_points - 1);
            window.times.push_back(t);
            window.values.push_back(eval.at(n, t));
        }
        const auto fit = fit_short_time(window, eval.floor());
        if (fit.lambda) {
            rec.lambda_q = fit.lambda;
            rec.fit_r2 = fit.r2;
            rec.curvature = fit.curvature;
        }
    });
    return records;
}

SmoothedCurve moving_average(std::span<const double> energies,
                             std::span<const std::optional<double>> values, std::size_t window) {
    if (window < 1) throw InvalidParameter("moving_average: window must be >= 1");
    if (energies.empty() || energies.size() != values.size()) {
        throw InvalidParameter("moving_average: empty or mismatched input");
    }
    SmoothedCurve curve;
    curve.window = window;
    const std::size_t m = energies.size();
    const std::size_t span_len = std::min(window, m);
    for (std::size_t start = 0; start + span_len <= m; ++start) {
        double esum = 0.0, vsum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = start; i < start + span_len; ++i) {
            if (!values[i]) continue;
            esum += energies[i];
            vsum += *values[i];
            ++count;
        }
        if (count == 0) continue;
        const double center = esum / static_cast<double>(count);
        // Windows sharing the same defined set (or degenerate energies) would
        // repeat an abscissa; keep the first.
        if (!curve.energies.empty() && !(center > curve.energies.back())) continue;
        curve.energies.push_back(center);
        curve.values.push_back(vsum / static_cast<double>(count));
        curve.counts.push_back(count);
    }
    return curve;
}

double interpolate_at(const SmoothedCurve& curve, double energy) {
    if (curve.energies.empty()) throw InvalidParameter("interpolate_at: empty curve");
    if (!(energy >= curve.energies.front() && energy <= curve.energies.back())) {
        throw InvalidParameter("interpolate_at: energy " + std::to_string(energy) +
                               " outside curve range [" + std::to_string(curve.energies.front()) +
                               ", " + std::to_string(curve.energies.back()) + "]");
    }
    auto it = std::lower_bound(curve.energies.begin(), curve.energies.end(), energy);
    const auto i = static_cast<std::size_t>(it - curve.energies.begin());
    if (curve.energies[i] == energy) return curve.values[i];
    const double e0 = curve.energies[i - 1], e1 = curve.energies[i];
    const double w = (energy - e0) / (e1 - e0);
    return (1.0 - w) * curve.values[i - 1] + w * curve.values[i];
}

ScalingFit fit_scaling(std::span<const std::pair<double, double>> points, double energy) {
    if (points.size() < 3) throw InvalidParameter("fit_scaling: need at least 3 sizes");
    ScalingFit fit;
    fit.energy = energy;
    std::vector<double> x, y;
    for (const auto& [N, nu] : points) {
        if (!(N > 0.0)) throw InvalidParameter("fit_scaling: sizes must be positive");
        if (!(nu > 0.0)) throw InvalidParameter("fit_scaling: wiggliness must be positive");
        fit.sizes.push_back(N);
        x.push_back(std::log(N));
        y.push_back(std::log(nu));
    }
    const double m = static_cast<double>(x.size());
    const double xbar = std::accumulate(x.begin(), x.end(), 0.0) / m;
    const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / m;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - xbar) * (x[i] - xbar);
        sxy += (x[i] - xbar) * (y[i] - ybar);
    }
    if (!(sxx > 0.0)) throw InvalidParameter("fit_scaling: sizes must not all coincide");
    fit.alpha = sxy / sxx;
    fit.beta = -(ybar - fit.alpha * xbar);
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (fit.alpha * x[i] - fit.beta);
        ss += r * r;
    }
    fit.residual = std::sqrt(ss / m);
    return fit;
}

} // namespace otoclab
