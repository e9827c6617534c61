#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ncmech/lagrangian.hpp"

namespace ncmech {

/// Phase-space snapshot with the sign convention p1 = dL/dv1, p2 = -dL/dv2.
struct PhaseState {
    double t = 0.0;
    std::vector<double> q1, p1, q2, p2;

    static PhaseState zero(int n) {
        PhaseState s;
        s.q1.assign(static_cast<std::size_t>(n), 0.0);
        s.p1.assign(static_cast<std::size_t>(n), 0.0);
        s.q2.assign(static_cast<std::size_t>(n), 0.0);
        s.p2.assign(static_cast<std::size_t>(n), 0.0);
        return s;
    }
    int n() const { return static_cast<int>(q1.size()); }
};

/// A scalar phase-space function with its gradient. The gradient is laid out
/// as (q1..., p1..., q2..., p2...), 4n entries. Built-ins carry analytic
/// gradients; expression observables differentiate through jets.
struct Observable {
    std::string name;
    std::function<double(const PhaseState&)> value;
    std::function<std::vector<double>(const PhaseState&)> gradient;
};

/// Symbol table for phase-space expressions: t, q1[i], p1[i], q2[i], p2[i],
/// then the spec's parameters.
std::shared_ptr<const SymbolTable> phase_table(const SystemSpec& spec);

/// Dense bindings for an expression over phase_table(spec).
std::vector<double> phase_bindings(const SystemSpec& spec, const PhaseState& ph);

/// p1 = dLambda/dv1, p2 = -dLambda/dv2 evaluated at s.
PhaseState momenta(const SystemSpec& spec, const DoubledState& s);

/// Inverts the momentum map by Newton iteration. Converges when
/// ||p - p(q,v)||_inf <= 1e-12 (1 + ||p||_inf). `guess` optionally supplies
/// the 2n starting velocities (v1..., v2...); the default divides momenta by
/// the kinetic masses read from the Hessian of L.
DoubledState velocities_from_momenta(const SystemSpec& spec, const PhaseState& ph,
                                     const std::vector<double>* guess = nullptr);

/// H = v1.p1 - v2.p2 - Lambda with velocities from the inverse momentum map.
double hamiltonian_value(const SystemSpec& spec, const PhaseState& ph);

/// H as an observable; the gradient uses the Legendre relations
/// dH/dp1 = v1, dH/dp2 = -v2, dH/dq = -dLambda/dq.
Observable hamiltonian_observable(const SystemSpec& spec);

/// Observable from an expression over phase_table(spec).
Observable expression_observable(const SystemSpec& spec, std::string name, std::string_view text);
Observable expression_observable(const SystemSpec& spec, std::string name, Expression expr);

/// Generalized bracket {f,g} = df/dq1 dg/dp1 - df/dp1 dg/dq1
///                            - (df/dq2 dg/dp2 - df/dp2 dg/dq2), summed over
/// degrees of freedom.
double poisson_bracket(const SystemSpec& spec, const Observable& f, const Observable& g,
                       const PhaseState& ph);

/// Symbolic bracket of two phase-space expressions (both over
/// phase_table(spec)); exact up to roundoff, handy for algebra checks.
Expression bracket_expression(const SystemSpec& spec, const Expression& f, const Expression& g);

struct FlowCheckReport {
    bool pass = false;
    double maxDiscrepancy = 0.0;
    double tol = 0.0;
};

/// Verifies Hamilton's equations qdot1 = dH/dp1, qdot2 = -dH/dp2,
/// pdot1 = -dH/dq1, pdot2 = +dH/dq2 at one phase point: the H-side partials
/// come from finite differences of hamiltonian_value, the flow side from the
/// Lagrangian solve (accelerations and momenta differentiated along the
/// flow).
FlowCheckReport hamiltonian_flow_check(const SystemSpec& spec, const PhaseState& ph, double tol);

} // namespace ncmech
