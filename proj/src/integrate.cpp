#include "ncmech/integrate.hpp"

#include <cmath>

namespace ncmech {

namespace {

using Vec = std::vector<double>;

// Packed first-order state: y = (q1, v1, q2, v2), 4n entries. The packing is
// component-wise so the two sectors see identical arithmetic, which keeps the
// trivial sector exactly zero once it starts zero.
Vec pack(const DoubledState& s) {
    const int n = s.n();
    Vec y(static_cast<std::size_t>(4 * n));
    for (int i = 0; i < n; ++i) {
        y[static_cast<std::size_t>(i)] = s.q1[static_cast<std::size_t>(i)];
        y[static_cast<std::size_t>(n + i)] = s.v1[static_cast<std::size_t>(i)];
        y[static_cast<std::size_t>(2 * n + i)] = s.q2[static_cast<std::size_t>(i)];
        y[static_cast<std::size_t>(3 * n + i)] = s.v2[static_cast<std::size_t>(i)];
    }
    return y;
}

DoubledState unpack(int n, double t, const Vec& y) {
    DoubledState s = DoubledState::zero(n);
    s.t = t;
    for (int i = 0; i < n; ++i) {
        s.q1[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)];
        s.v1[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(n + i)];
        s.q2[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(2 * n + i)];
        s.v2[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(3 * n + i)];
    }
    return s;
}

Vec derivative(const SystemSpec& spec, double t, const Vec& y) {
    const int n = spec.n();
    DoubledState s = unpack(n, t, y);
    EomSolve acc;
    try {
        acc = accelerations(spec, s);
    } catch (const NonRegularError& err) {
        throw NonRegularError(std::string(err.what()) + " [at stage t=" + std::to_string(t) + "]");
    }
    Vec f(static_cast<std::size_t>(4 * n));
    for (int i = 0; i < n; ++i) {
        f[static_cast<std::size_t>(i)] = s.v1[static_cast<std::size_t>(i)];
        f[static_cast<std::size_t>(n + i)] = acc.a1[static_cast<std::size_t>(i)];
        f[static_cast<std::size_t>(2 * n + i)] = s.v2[static_cast<std::size_t>(i)];
        f[static_cast<std::size_t>(3 * n + i)] = acc.a2[static_cast<std::size_t>(i)];
    }
    return f;
}

Vec axpy(const Vec& y, double h, const Vec& k) {
    Vec out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] + h * k[i];
    return out;
}

} // namespace

DoubledState step_rk4(const SystemSpec& spec, const DoubledState& s, double h) {
    if (h < 0.0) throw EvalError("step_rk4 requires h >= 0");
    const int n = spec.n();
    Vec y = pack(s);
    if (h == 0.0) return unpack(n, s.t, y);
    Vec k1 = derivative(spec, s.t, y);
    Vec k2 = derivative(spec, s.t + h / 2.0, axpy(y, h / 2.0, k1));
    Vec k3 = derivative(spec, s.t + h / 2.0, axpy(y, h / 2.0, k2));
    Vec k4 = derivative(spec, s.t + h, axpy(y, h, k3));
    Vec out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return unpack(n, s.t + h, out);
}

namespace {

// Dormand-Prince 4(5) tableau.
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr double kB5[7] = {35.0 / 384,      0.0, 500.0 / 1113, 125.0 / 192,
                           -2187.0 / 6784, 11.0 / 84, 0.0};
constexpr double kB4[7] = {5179.0 / 57600,    0.0,          7571.0 / 16695, 393.0 / 640,
                           -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

Vec hermite(const Vec& y0, const Vec& f0, const Vec& y1, const Vec& f1, double h, double theta) {
    const double t2 = theta * theta, t3 = t2 * theta;
    const double h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    const double h10 = t3 - 2.0 * t2 + theta;
    const double h01 = -2.0 * t3 + 3.0 * t2;
    const double h11 = t3 - t2;
    Vec out(y0.size());
    for (std::size_t i = 0; i < y0.size(); ++i)
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
    return out;
}

} // namespace

TrajectoryRecord integrate_adaptive(const SystemSpec& spec, const DoubledState& s0, double tEnd,
                                    double relTol, double absTol, double sampleDt,
                                    const std::function<void(const DoubledState&)>& onSample) {
    if (!(tEnd > s0.t)) throw ConfigError("integrate_adaptive requires tEnd > t0");
    if (!(relTol >= 1e-14 && relTol <= 1e-2) || !(absTol >= 1e-14 && absTol <= 1e-2))
        throw ConfigError("integration tolerances must lie in [1e-14, 1e-2]");
    if (!(sampleDt > 0.0)) throw ConfigError("sampleDt must be positive");

    const int n = spec.n();
    const double t0 = s0.t;
    const double span = tEnd - t0;
    const long samples = static_cast<long>(std::floor(span / sampleDt + 1e-9));
    const double tLast = t0 + static_cast<double>(samples) * sampleDt;

    TrajectoryRecord traj;
    traj.sampleDt = sampleDt;
    traj.stats.method = "dopri45";
    traj.stats.relTol = relTol;
    traj.stats.absTol = absTol;

    auto record = [&](double ts, const Vec& y) {
        DoubledState s = unpack(n, ts, y);
        traj.times.push_back(ts);
        traj.phases.push_back(momenta(spec, s));
        traj.states.push_back(s);
        if (onSample) onSample(traj.states.back());
    };

    Vec y = pack(s0);
    double t = t0;
    record(t, y);
    long nextSample = 1;

    Vec k[7];
    k[0] = derivative(spec, t, y);

    double h = std::min(sampleDt, span / 10.0);
    double errOld = 1e-4;
    const double hFloor = 1e-14 * span;

    while (t < tLast) {
        // The cubic Hermite dense output is 4th order per step; keeping the
        // step within the sample spacing keeps the interpolation error far
        // below the rate-residual differentiation budget.
        h = std::min(h, sampleDt);
        const double remaining = tLast - t;
        if (remaining <= std::max(hFloor, 4.0 * std::abs(t) * 1e-16)) break;
        if (h >= remaining)
            h = remaining;
        else if (h < hFloor)
            throw StepUnderflowError("step size underflow at t=" + std::to_string(t) +
                                     " (h=" + std::to_string(h) + ")");

        for (int stage = 1; stage < 7; ++stage) {
            Vec ys = y;
            for (int j = 0; j < stage; ++j) {
                const double a = kA[stage][j];
                if (a == 0.0) continue;
                for (std::size_t i = 0; i < y.size(); ++i) ys[i] += h * a * k[j][i];
            }
            k[stage] = derivative(spec, t + kC[stage] * h, ys);
        }

        Vec y5(y.size());
        double errNorm = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            double acc5 = 0.0, err = 0.0;
            for (int j = 0; j < 7; ++j) {
                acc5 += kB5[j] * k[j][i];
                err += (kB5[j] - kB4[j]) * k[j][i];
            }
            y5[i] = y[i] + h * acc5;
            const double sc = absTol + relTol * std::max(std::abs(y[i]), std::abs(y5[i]));
            const double e = h * err / sc;
            errNorm += e * e;
        }
        errNorm = std::sqrt(errNorm / static_cast<double>(y.size()));

        if (errNorm <= 1.0) {
            // Accept; emit dense output for samples inside (t, t+h].
            const Vec& f1 = k[6]; // FSAL: k7 = f(t+h, y5)
            while (nextSample <= samples) {
                const double ts = t0 + static_cast<double>(nextSample) * sampleDt;
                if (ts > t + h + 1e-12 * span) break;
                const double theta = std::clamp((ts - t) / h, 0.0, 1.0);
                record(ts, hermite(y, k[0], y5, f1, h, theta));
                ++nextSample;
            }
            t += h;
            y = std::move(y5);
            k[0] = k[6]; // FSAL
            ++traj.stats.acceptedSteps;

            const double fac =
                std::clamp(0.9 * std::pow(errNorm, -0.17) * std::pow(errOld, 0.04), 0.2, 5.0);
            h *= fac;
            errOld = std::max(errNorm, 1e-4);
        } else {
            ++traj.stats.rejectedSteps;
            h *= std::clamp(0.9 * std::pow(errNorm, -0.2), 0.1, 0.9);
        }
    }
    // Floating-point corner: the loop can exit with the final grid point
    // still pending; it coincides with the current state.
    while (nextSample <= samples) {
        record(t0 + static_cast<double>(nextSample) * sampleDt, y);
        ++nextSample;
    }
    return traj;
}

GrowthFit growth_rate_fit(std::span<const double> times, std::span<const double> values) {
    if (times.size() != values.size() || times.size() < 3)
        throw EvalError("growth_rate_fit needs at least 3 samples");
    const double first = values.front();
    if (first == 0.0) throw EvalError("growth_rate_fit window contains a zero");
    for (double v : values) {
        if (v == 0.0 || (v > 0.0) != (first > 0.0))
            throw EvalError("growth_rate_fit window contains a zero crossing");
    }

    const std::size_t m = times.size();
    double st = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        st += times[i];
        sy += std::log(std::abs(values[i]));
    }
    const double mt = st / static_cast<double>(m), my = sy / static_cast<double>(m);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double dt = times[i] - mt;
        const double dy = std::log(std::abs(values[i])) - my;
        sxx += dt * dt;
        sxy += dt * dy;
        syy += dy * dy;
    }
    GrowthFit fit;
    fit.rate = sxy / sxx;
    fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

} // namespace ncmech
