#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ncmech/hamiltonian.hpp"
#include "ncmech/lagrangian.hpp"

namespace ncmech {

struct IntegratorStats {
    std::string method;
    double relTol = 0.0;
    double absTol = 0.0;
    long acceptedSteps = 0;
    long rejectedSteps = 0;
};

/// Uniformly sampled trajectory with the Legendre image of every sample.
/// Charge/residual columns are attached by the charges module.
struct TrajectoryRecord {
    double sampleDt = 0.0;
    std::vector<double> times;
    std::vector<DoubledState> states;
    std::vector<PhaseState> phases;
    IntegratorStats stats;
};

/// One classical 4th-order Runge-Kutta step of the first-order system
/// (qdot = v, vdot = accelerations). h = 0 returns the state unchanged.
DoubledState step_rk4(const SystemSpec& spec, const DoubledState& s, double h);

/// Dormand-Prince 4(5) with proportional-integral step control and cubic
/// Hermite dense output onto the uniform grid t0 + k*sampleDt. Throws
/// StepUnderflow when the step drops below 1e-14 * span.
TrajectoryRecord integrate_adaptive(const SystemSpec& spec, const DoubledState& s0, double tEnd,
                                    double relTol, double absTol, double sampleDt,
                                    const std::function<void(const DoubledState&)>& onSample = {});

struct GrowthFit {
    double rate = 0.0;
    double r2 = 0.0;
};

/// Least-squares slope of log|x| against t. Throws EvalError if the window
/// contains a zero or a sign change.
GrowthFit growth_rate_fit(std::span<const double> times, std::span<const double> values);

} // namespace ncmech
