#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ncmech/lagrangian.hpp"

namespace ncmech {

enum class ModelKind {
    FreeParticle,
    FreeParticleCircle,
    FreeFall,
    DampedOscillator,
    CentralForce,
    PolynomialDrag,
    Inline,
};

/// Analytic trajectory point: state plus the accelerations obtained by
/// differentiating the closed form (not by solving the equations of motion,
/// so residual checks stay independent).
struct ClosedFormState {
    DoubledState state;
    std::vector<double> a1, a2;
};

struct ModelEntry {
    std::string name;
    ModelKind kind = ModelKind::Inline;
    SystemSpec spec;
    std::string validity;
    /// Printed-value discrepancies that the verification report surfaces as
    /// informational flags (never failures).
    std::vector<std::string> paperNotes;
    bool hasClosedForm = false;
    /// ic is the state at its own ic.t; returns the analytic state at time t.
    std::function<ClosedFormState(const DoubledState& ic, double t)> closedFormFn;
};

ModelEntry model_free_particle(double m, double c, int n = 1);
ModelEntry model_free_particle_circle(double m, double c, double radius);
ModelEntry model_free_fall(double m, double c, double g);
ModelEntry model_damped_oscillator(double m, double omega, double c);
/// Relative-motion system with a rotation-invariant K; `potentialInR` is an
/// expression in the symbol r (plus extraParams), e.g. "-k/r".
ModelEntry model_central_force(double mu, double c, std::string_view potentialInR = "-k/r",
                               std::map<std::string, double> extraParams = {{"k", 1.0}});
/// K = -qminus * kappa(vplus) * vplus with kappa = c1 + c2|vplus| + ... ;
/// `potential` is an expression in q[0] subtracted from the kinetic term and
/// g adds the constant force m*g*q[0]. Closed forms exist for the constant-
/// coefficient quadratic cases.
ModelEntry model_polynomial_drag(double m, std::vector<double> coeffs,
                                 std::string_view potential = "0", double g = 0.0);
/// Same drag shape with position-dependent coefficients c_i(qplus) given as
/// expressions in the doubled variables' qplus = (q1[0]+q2[0])/2; no oracle.
ModelEntry model_polynomial_drag_expr(double m, const std::vector<std::string>& coeffExprs,
                                      std::map<std::string, double> extraParams,
                                      std::string_view potential = "0", double g = 0.0);

/// Evaluates the entry's closed form; throws ConfigError when the model has
/// none and EvalError when the initial data falls outside its validity.
ClosedFormState closed_form(const ModelEntry& entry, const DoubledState& ic, double t);

/// Catalog interface used by the CLI: names, parameter defaults, builder.
std::vector<std::string> model_names();
std::map<std::string, double> model_defaults(const std::string& name);
ModelEntry build_model(const std::string& name, std::map<std::string, double> params);

/// "underdamped", "critical" or "overdamped" from the sign of
/// omega^2 - c^2/(4 m^2).
std::string oscillator_regime(double m, double omega, double c);

/// Engine-derived growth rate of the unphysical sector (|vminus| for the
/// linear models, the qminus envelope for the oscillator, c1/2m for drag).
double unphysical_growth_rate(const ModelEntry& entry);

/// Engine-derived decay rate of |J| on the physical sector of the central
/// force model: c/mu (the printed value c/(2 mu) is flagged in paperNotes).
double angular_momentum_decay_rate(const ModelEntry& entry);

/// Exact envelope of the growing oscillator qminus sector:
/// sqrt(qm^2 + ((vm - (c/2m) qm)/omega_minus)^2) grows like e^{ct/2m}.
double oscillator_minus_envelope(const ModelEntry& entry, const DoubledState& s);

} // namespace ncmech
