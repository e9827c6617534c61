#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ncmech/expr.hpp"

namespace ncmech {

/// Snapshot of the doubled configuration: time, coordinates and velocities of
/// both copies.
struct DoubledState {
    double t = 0.0;
    std::vector<double> q1, v1, q2, v2;

    static DoubledState zero(int n) {
        DoubledState s;
        s.q1.assign(static_cast<std::size_t>(n), 0.0);
        s.v1.assign(static_cast<std::size_t>(n), 0.0);
        s.q2.assign(static_cast<std::size_t>(n), 0.0);
        s.v2.assign(static_cast<std::size_t>(n), 0.0);
        return s;
    }
    int n() const { return static_cast<int>(q1.size()); }
};

/// Light-cone view: qplus carries the physical motion, qminus the unphysical
/// sector.
struct LightconeState {
    double t = 0.0;
    std::vector<double> qplus, vplus, qminus, vminus;
};

/// Result of the Euler-Lagrange solve at one state.
struct EomSolve {
    std::vector<double> a1, a2;
    double massMatrixDet = 0.0;
    double conditionEstimate = 0.0;
};

struct MassMatrix {
    int dim = 0;                // 2n
    std::vector<double> m;      // row-major, ordered (v1..., v2...)
    double det = 0.0;
};

/// A doubled system: conservative Lagrangian L(t, q, v), interchange-
/// antisymmetric potential K(t, q1, v1, q2, v2), and parameter bindings.
/// Immutable after construction; all evaluation helpers are const and
/// reentrant.
///
/// Doubled symbol layout: t, q1[0..n), v1[0..n), q2[0..n), v2[0..n), then
/// parameters. The single-copy layout used by L is t, q[0..n), v[0..n),
/// then parameters.
class SystemSpec {
public:
    /// Parses and validates a system. K must pass the antisymmetry check
    /// (64 trials, tol 1e-9); a violation throws ConfigError.
    static SystemSpec make(int n, std::string_view lagrangian, std::string_view potential,
                           std::map<std::string, double> params, std::string name = "",
                           std::string description = "");

    int n() const { return n_; }
    const std::string& name() const { return name_; }
    const std::string& description() const { return description_; }
    const std::map<std::string, double>& params() const { return params_; }
    double param(const std::string& key) const;

    const Expression& lambda() const { return lambda_; }
    const Expression& l1() const { return l1_; }
    const Expression& l2() const { return l2_; }
    const Expression& potential_k() const { return k_; }
    const Expression& lagrangian_single() const { return lSingle_; }
    bool k_is_zero() const { return kIsZero_; }

    const std::shared_ptr<const SymbolTable>& doubled_table() const { return doubledTable_; }

    // Doubled-table symbol indices.
    int idx_t() const { return 0; }
    int idx_q1(int i) const { return 1 + i; }
    int idx_v1(int i) const { return 1 + n_ + i; }
    int idx_q2(int i) const { return 1 + 2 * n_ + i; }
    int idx_v2(int i) const { return 1 + 3 * n_ + i; }

    /// Jet seed list (q1..., v1..., q2..., v2..., t); gradient offsets below.
    const std::vector<int>& full_seeds() const { return fullSeeds_; }
    int gq1(int i) const { return i; }
    int gv1(int i) const { return n_ + i; }
    int gq2(int i) const { return 2 * n_ + i; }
    int gv2(int i) const { return 3 * n_ + i; }
    int gt() const { return 4 * n_; }

    /// Jet seed list (v1..., v2...).
    const std::vector<int>& velocity_seeds() const { return velSeeds_; }

    /// Dense binding vector for the doubled table (parameters prefilled).
    std::vector<double> bindings(const DoubledState& s) const;

private:
    int n_ = 0;
    std::string name_, description_;
    std::map<std::string, double> params_;
    std::shared_ptr<const SymbolTable> singleTable_, doubledTable_;
    Expression lSingle_, k_, l1_, l2_, lambda_;
    bool kIsZero_ = false;
    std::vector<double> bindingsTemplate_;
    std::vector<int> fullSeeds_, velSeeds_;
};

/// The assembled doubled Lagrangian L(q1,v1) - L(q2,v2) + K as one AST.
const Expression& assemble_lambda(const SystemSpec& spec);

/// M_ab = d2(Lambda)/dvel_a dvel_b over the stacked velocities (v1..., v2...).
/// Note: the regularity determinant over momentum derivatives differs from
/// det(M) by (-1)^n only; nonvanishing is equivalent.
MassMatrix mass_matrix(const SystemSpec& spec, const DoubledState& s);

/// Solves the Euler-Lagrange equations for the accelerations. Throws
/// NonRegularError when |det M| < 1e-10 * (1 + ||M||_inf).
EomSolve accelerations(const SystemSpec& spec, const DoubledState& s);

/// (F_K)_1 = dK/dq1 - d/dt(dK/dv1) and (F_K)_2 likewise, with the total time
/// derivative expanded through the given accelerations.
struct NonconservativeForces {
    std::vector<double> fk1, fk2;
};
NonconservativeForces nonconservative_forces(const SystemSpec& spec, const DoubledState& s,
                                             const EomSolve& accel);

/// Euler-Lagrange residual d(Lambda)/dQ_A - d/dt d(Lambda)/dQdot_A at the
/// given accelerations, ordered (sector 1..., sector 2...).
std::vector<double> residual_eom(const SystemSpec& spec, const DoubledState& s,
                                 const EomSolve& accel);

/// q± = (q1 ± q2)/2 and the inverse q1 = q+ + q-, q2 = q+ - q-. The round
/// trip is bit-exact whenever the half-sums are representable (in particular
/// on any dyadic grid, and always for coincident states).
LightconeState to_lightcone(const DoubledState& s);
DoubledState from_lightcone(const LightconeState& lc);

} // namespace ncmech
