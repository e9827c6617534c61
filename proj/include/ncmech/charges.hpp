#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ncmech/hamiltonian.hpp"
#include "ncmech/integrate.hpp"
#include "ncmech/models.hpp"

namespace ncmech {

/// An infinitesimal point transformation of the doubled coordinates:
/// deltaQ holds 2n expressions over (t, q1, q2, parameters) ordered
/// (sector 1..., sector 2...); deltaT is the time-translation flag. For
/// quasi-invariant transformations (delta Lambda a total derivative),
/// boundaryTerm holds the generating f(t, q1, q2).
struct Transformation {
    std::string name;
    std::vector<Expression> deltaQ;
    double deltaT = 0.0;
    std::optional<Expression> boundaryTerm;
    bool mixing = false;
};

/// Parses and validates the transformation pieces; velocity symbols are
/// rejected, and `mixing` is set when a sector-1 shift references sector-2
/// coordinates or vice versa.
Transformation make_transformation(const SystemSpec& spec, std::string name,
                                   const std::vector<std::string>& deltaQ1,
                                   const std::vector<std::string>& deltaQ2, double deltaT = 0.0,
                                   const std::optional<std::string>& boundary = std::nullopt);

/// E_i = v_i . dL_i/dv_i - L_i on the sector's own variables (sector 1 or 2).
double sector_energy(const SystemSpec& spec, const DoubledState& s, int sector);

/// J = sum_A deltaQ_A dLambda/dQdot_A + deltaT (sum Qdot dLambda/dQdot -
/// Lambda) - boundaryTerm.
double noether_charge(const SystemSpec& spec, const DoubledState& s, const Transformation& tr);

/// Induced variation of Lambda (internal part): sum deltaQ_A dLambda/dQ_A +
/// (d/dt deltaQ_A) dLambda/dQdot_A.
double delta_lambda(const SystemSpec& spec, const DoubledState& s, const Transformation& tr);

/// Analytic right-hand side of dJ/dt for the transformation's charge:
/// -deltaT dLambda/dt + delta Lambda - d(boundaryTerm)/dt.
double transformation_rate_rhs(const SystemSpec& spec, const DoubledState& s,
                               const Transformation& tr);

/// Everything a ledger column may need at one sample, computed once.
struct LedgerContext {
    const SystemSpec* spec = nullptr;
    const DoubledState* s = nullptr;
    const PhaseState* ph = nullptr;
    const EomSolve* accel = nullptr;
    const NonconservativeForces* fk = nullptr;
    const Jet2* lambdaJet = nullptr; // full seeds
    const Jet2* l1Jet = nullptr;
    const Jet2* l2Jet = nullptr;
    const Jet2* kJet = nullptr;
};

struct LedgerColumn {
    std::string name;
    std::function<double(const LedgerContext&)> value;
    /// Analytic d(value)/dt along the flow; null for value-only columns.
    std::function<double(const LedgerContext&)> rateRhs;
    /// When set, the residual is value - rateRhs evaluated pointwise (used by
    /// the force-power identity) instead of a finite-difference rate check.
    bool pointwiseResidual = false;
};

struct LedgerPlan {
    std::vector<LedgerColumn> columns;
};

/// H, E1, E2, E and the force-power identity; valid for any spec.
LedgerPlan generic_charges(const SystemSpec& spec);

/// The generic plan extended with the model kind's named charges (SO(1,1)
/// generator, translation charges, angular momenta, ...). Throws ConfigError
/// when the kind's structure does not match the spec.
LedgerPlan builtin_charges(const ModelEntry& entry);

/// Named observable set for bracket work (hand-coded analytic gradients).
std::vector<Observable> builtin_observables(const ModelEntry& entry);

struct ChargeSample {
    double t = 0.0;
    std::map<std::string, double> values;
    std::map<std::string, double> residuals;
};

struct LedgerReport {
    std::vector<std::string> chargeNames;
    std::vector<std::string> residualNames;
    std::vector<ChargeSample> samples;
    std::map<std::string, double> maxAbsResidual;
    /// Largest Richardson estimate of the finite-difference truncation error.
    double fdErrorEstimate = 0.0;
    bool gridWarning = false;
};

/// Evaluates every column along the trajectory; at interior samples the rate
/// equations are checked with 5-point central differences against the
/// analytic right-hand sides. gridWarning is raised when the estimated
/// differentiation error exceeds a quarter of fdWarnTol.
LedgerReport rate_residuals(const SystemSpec& spec, const TrajectoryRecord& traj,
                            const LedgerPlan& plan, double fdWarnTol = 1e-6);

struct HomogeneityReport {
    bool homogeneous = false;
    bool timeIndependent = false;
    bool identityHolds = false;
    double maxHomogeneityResidual = 0.0;
    double maxIdentityResidual = 0.0;
    bool pass() const { return homogeneous && timeIndependent && identityHolds; }
};

/// H = E1 - E2 requires K first-degree homogeneous in the velocities
/// (checked by scaling with lambda in {0.5, 2, 3}) and time independent.
HomogeneityReport check_H_equals_E1_minus_E2(const SystemSpec& spec,
                                             std::span<const DoubledState> states, double tol);

struct AlgebraReport {
    double omegaPlusSq = 0.0;
    std::map<std::string, double> relationResiduals;
    double maxResidual = 0.0;
    bool pass = false;
    std::vector<std::string> flags;
};

/// omega_plus^2 defined as the coefficient making E = E+ + E- an exact
/// polynomial identity (sampled at random points; both printed variants are
/// reported as flags).
double derive_omega_plus_sq(double m, double omega, double c, std::uint64_t seed = 1);

/// Checks the damped-oscillator bracket algebra at random phase points:
/// {H,Jt} = 0, {Jt,E+-} = +-2E+-, {Jt,E0+-} = 2E0-+, {E0+,E0-} = (1/2) w+^2 Jt,
/// and the printed {E+,E-} combination.
AlgebraReport verify_oscillator_algebra(double m, double omega, double c, int points, double tol,
                                        std::uint64_t seed);

} // namespace ncmech
