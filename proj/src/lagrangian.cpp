#include "ncmech/lagrangian.hpp"

#include <cmath>

#include "ncmech/linalg.hpp"

namespace ncmech {

namespace {

std::string indexed(const char* base, int i) {
    return std::string(base) + "[" + std::to_string(i) + "]";
}

void require_finite(const DoubledState& s) {
    auto check = [](const std::vector<double>& xs) {
        for (double x : xs)
            if (!std::isfinite(x)) throw EvalError("non-finite state entry");
    };
    if (!std::isfinite(s.t)) throw EvalError("non-finite state time");
    check(s.q1);
    check(s.v1);
    check(s.q2);
    check(s.v2);
}

} // namespace

SystemSpec SystemSpec::make(int n, std::string_view lagrangian, std::string_view potential,
                            std::map<std::string, double> params, std::string name,
                            std::string description) {
    if (n <= 0) throw ConfigError("system needs at least one degree of freedom");
    SystemSpec spec;
    spec.n_ = n;
    spec.name_ = std::move(name);
    spec.description_ = std::move(description);
    spec.params_ = std::move(params);

    auto single = std::make_shared<SymbolTable>();
    single->declare("t");
    for (int i = 0; i < n; ++i) single->declare(indexed("q", i));
    for (int i = 0; i < n; ++i) single->declare(indexed("v", i));
    for (const auto& [key, value] : spec.params_) single->declare(key);

    auto doubled = std::make_shared<SymbolTable>();
    doubled->declare("t");
    for (int i = 0; i < n; ++i) doubled->declare(indexed("q1", i));
    for (int i = 0; i < n; ++i) doubled->declare(indexed("v1", i));
    for (int i = 0; i < n; ++i) doubled->declare(indexed("q2", i));
    for (int i = 0; i < n; ++i) doubled->declare(indexed("v2", i));
    for (const auto& [key, value] : spec.params_) doubled->declare(key);

    spec.lSingle_ = parse(lagrangian, single);
    spec.k_ = parse(potential, doubled);
    spec.singleTable_ = single;
    spec.doubledTable_ = doubled;

    // Syntactic substitution q -> q1, v -> v1 (and the second copy alike).
    // remap preserves the arena layout, so both copies share one tree shape.
    std::vector<int> map1(static_cast<std::size_t>(single->size()), -1);
    std::vector<int> map2(static_cast<std::size_t>(single->size()), -1);
    map1[0] = map2[0] = 0; // t
    for (int i = 0; i < n; ++i) {
        map1[static_cast<std::size_t>(*single->find(indexed("q", i)))] = spec.idx_q1(i);
        map1[static_cast<std::size_t>(*single->find(indexed("v", i)))] = spec.idx_v1(i);
        map2[static_cast<std::size_t>(*single->find(indexed("q", i)))] = spec.idx_q2(i);
        map2[static_cast<std::size_t>(*single->find(indexed("v", i)))] = spec.idx_v2(i);
    }
    for (const auto& [key, value] : spec.params_) {
        auto from = *single->find(key);
        auto to = *doubled->find(key);
        map1[static_cast<std::size_t>(from)] = to;
        map2[static_cast<std::size_t>(from)] = to;
    }
    spec.l1_ = remap_symbols(spec.lSingle_, doubled, map1);
    spec.l2_ = remap_symbols(spec.lSingle_, doubled, map2);

    const auto& kRoot = spec.k_.nodes().back();
    spec.kIsZero_ = kRoot.kind == ExprNode::Kind::Constant && kRoot.value == 0.0;

    ExprBuilder b(doubled);
    int r1 = b.splice(spec.l1_, spec.l1_.root());
    int r2 = b.splice(spec.l2_, spec.l2_.root());
    int lam = b.raw_binary(BinaryOp::Sub, r1, r2);
    if (!spec.kIsZero_) lam = b.raw_binary(BinaryOp::Add, lam, b.splice(spec.k_, spec.k_.root()));
    spec.lambda_ = b.take(lam);

    spec.bindingsTemplate_.assign(static_cast<std::size_t>(doubled->size()), 0.0);
    for (const auto& [key, value] : spec.params_)
        spec.bindingsTemplate_[static_cast<std::size_t>(*doubled->find(key))] = value;

    for (int i = 0; i < n; ++i) spec.fullSeeds_.push_back(spec.idx_q1(i));
    for (int i = 0; i < n; ++i) spec.fullSeeds_.push_back(spec.idx_v1(i));
    for (int i = 0; i < n; ++i) spec.fullSeeds_.push_back(spec.idx_q2(i));
    for (int i = 0; i < n; ++i) spec.fullSeeds_.push_back(spec.idx_v2(i));
    spec.fullSeeds_.push_back(spec.idx_t());
    for (int i = 0; i < n; ++i) spec.velSeeds_.push_back(spec.idx_v1(i));
    for (int i = 0; i < n; ++i) spec.velSeeds_.push_back(spec.idx_v2(i));

    if (!spec.kIsZero_) {
        auto report = check_antisymmetry(spec.k_, n, 64, 1e-9, 0x6e636d65u, spec.params_);
        if (!report.pass)
            throw ConfigError("K violates interchange antisymmetry (max residual " +
                              std::to_string(report.maxInterchangeResidual) + ", boundary " +
                              std::to_string(report.maxBoundaryResidual) + ")");
    }
    return spec;
}

double SystemSpec::param(const std::string& key) const {
    auto it = params_.find(key);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + key + "'");
    return it->second;
}

std::vector<double> SystemSpec::bindings(const DoubledState& s) const {
    if (s.n() != n_) throw EvalError("state dimension mismatch");
    require_finite(s);
    std::vector<double> b = bindingsTemplate_;
    b[0] = s.t;
    for (int i = 0; i < n_; ++i) {
        b[static_cast<std::size_t>(idx_q1(i))] = s.q1[static_cast<std::size_t>(i)];
        b[static_cast<std::size_t>(idx_v1(i))] = s.v1[static_cast<std::size_t>(i)];
        b[static_cast<std::size_t>(idx_q2(i))] = s.q2[static_cast<std::size_t>(i)];
        b[static_cast<std::size_t>(idx_v2(i))] = s.v2[static_cast<std::size_t>(i)];
    }
    return b;
}

const Expression& assemble_lambda(const SystemSpec& spec) { return spec.lambda(); }

MassMatrix mass_matrix(const SystemSpec& spec, const DoubledState& s) {
    const int n = spec.n();
    const int dim = 2 * n;
    Jet2 jet = evaluate_jet(spec.lambda(), spec.bindings(s), spec.velocity_seeds());
    MassMatrix mm;
    mm.dim = dim;
    mm.m.assign(static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim), 0.0);
    for (int a = 0; a < dim; ++a)
        for (int bcol = 0; bcol < dim; ++bcol)
            mm.m[static_cast<std::size_t>(a) * dim + bcol] = jet.hess(a, bcol);
    mm.det = linalg::determinant(mm.m, dim);
    return mm;
}

namespace {

// Assembles the Euler-Lagrange right-hand side
//   b_A = dL/dQ_A - d2L/dt dQdot_A - sum_B d2L/dQ_B dQdot_A * Qdot_B
// from a full jet. Sector 2 accumulates its own block first so that at
// coincident states (q1 == q2, v1 == v2 bitwise) the two sectors come out as
// exact negations and the trivial solution is preserved to the last bit.
std::vector<double> el_rhs(const SystemSpec& spec, const Jet2& jet, const DoubledState& s) {
    const int n = spec.n();
    std::vector<double> rhs(static_cast<std::size_t>(2 * n), 0.0);
    for (int a = 0; a < n; ++a) {
        double acc = jet.grad(spec.gq1(a)) - jet.hess(spec.gt(), spec.gv1(a));
        for (int b = 0; b < n; ++b) acc -= jet.hess(spec.gq1(b), spec.gv1(a)) * s.v1[static_cast<std::size_t>(b)];
        for (int b = 0; b < n; ++b) acc -= jet.hess(spec.gq2(b), spec.gv1(a)) * s.v2[static_cast<std::size_t>(b)];
        rhs[static_cast<std::size_t>(a)] = acc;
    }
    for (int a = 0; a < n; ++a) {
        double acc = jet.grad(spec.gq2(a)) - jet.hess(spec.gt(), spec.gv2(a));
        for (int b = 0; b < n; ++b) acc -= jet.hess(spec.gq2(b), spec.gv2(a)) * s.v2[static_cast<std::size_t>(b)];
        for (int b = 0; b < n; ++b) acc -= jet.hess(spec.gq1(b), spec.gv2(a)) * s.v1[static_cast<std::size_t>(b)];
        rhs[static_cast<std::size_t>(n + a)] = acc;
    }
    return rhs;
}

} // namespace

EomSolve accelerations(const SystemSpec& spec, const DoubledState& s) {
    const int n = spec.n();
    const int dim = 2 * n;
    Jet2 jet = evaluate_jet(spec.lambda(), spec.bindings(s), spec.full_seeds());

    std::vector<double> m(static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim), 0.0);
    auto gv = [&](int a) { return a < n ? spec.gv1(a) : spec.gv2(a - n); };
    for (int a = 0; a < dim; ++a)
        for (int b = 0; b < dim; ++b) m[static_cast<std::size_t>(a) * dim + b] = jet.hess(gv(a), gv(b));

    std::vector<double> rhs = el_rhs(spec, jet, s);
    auto solve = linalg::solve_dense(m, rhs);
    const double norm = linalg::inf_norm(m, dim);
    if (solve.singular || std::abs(solve.det) < 1e-10 * (1.0 + norm))
        throw NonRegularError("velocity Hessian is singular (det " + std::to_string(solve.det) +
                              ", threshold " + std::to_string(1e-10 * (1.0 + norm)) + ")");

    EomSolve out;
    out.a1.assign(solve.x.begin(), solve.x.begin() + n);
    out.a2.assign(solve.x.begin() + n, solve.x.end());
    out.massMatrixDet = solve.det;
    out.conditionEstimate = solve.conditionEstimate;
    return out;
}

NonconservativeForces nonconservative_forces(const SystemSpec& spec, const DoubledState& s,
                                             const EomSolve& accel) {
    const int n = spec.n();
    NonconservativeForces out;
    out.fk1.assign(static_cast<std::size_t>(n), 0.0);
    out.fk2.assign(static_cast<std::size_t>(n), 0.0);
    if (spec.k_is_zero()) return out;

    Jet2 jet = evaluate_jet(spec.potential_k(), spec.bindings(s), spec.full_seeds());
    for (int a = 0; a < n; ++a) {
        double ddt = jet.hess(spec.gt(), spec.gv1(a));
        for (int b = 0; b < n; ++b)
            ddt += jet.hess(spec.gq1(b), spec.gv1(a)) * s.v1[static_cast<std::size_t>(b)] +
                   jet.hess(spec.gv1(b), spec.gv1(a)) * accel.a1[static_cast<std::size_t>(b)];
        for (int b = 0; b < n; ++b)
            ddt += jet.hess(spec.gq2(b), spec.gv1(a)) * s.v2[static_cast<std::size_t>(b)] +
                   jet.hess(spec.gv2(b), spec.gv1(a)) * accel.a2[static_cast<std::size_t>(b)];
        out.fk1[static_cast<std::size_t>(a)] = jet.grad(spec.gq1(a)) - ddt;
    }
    for (int a = 0; a < n; ++a) {
        double ddt = jet.hess(spec.gt(), spec.gv2(a));
        for (int b = 0; b < n; ++b)
            ddt += jet.hess(spec.gq2(b), spec.gv2(a)) * s.v2[static_cast<std::size_t>(b)] +
                   jet.hess(spec.gv2(b), spec.gv2(a)) * accel.a2[static_cast<std::size_t>(b)];
        for (int b = 0; b < n; ++b)
            ddt += jet.hess(spec.gq1(b), spec.gv2(a)) * s.v1[static_cast<std::size_t>(b)] +
                   jet.hess(spec.gv1(b), spec.gv2(a)) * accel.a1[static_cast<std::size_t>(b)];
        out.fk2[static_cast<std::size_t>(a)] = jet.grad(spec.gq2(a)) - ddt;
    }
    return out;
}

std::vector<double> residual_eom(const SystemSpec& spec, const DoubledState& s,
                                 const EomSolve& accel) {
    const int n = spec.n();
    Jet2 jet = evaluate_jet(spec.lambda(), spec.bindings(s), spec.full_seeds());
    std::vector<double> rhs = el_rhs(spec, jet, s);
    std::vector<double> residual(static_cast<std::size_t>(2 * n), 0.0);
    for (int a = 0; a < n; ++a) {
        double ma = 0.0;
        for (int b = 0; b < n; ++b)
            ma += jet.hess(spec.gv1(b), spec.gv1(a)) * accel.a1[static_cast<std::size_t>(b)] +
                  jet.hess(spec.gv2(b), spec.gv1(a)) * accel.a2[static_cast<std::size_t>(b)];
        residual[static_cast<std::size_t>(a)] = rhs[static_cast<std::size_t>(a)] - ma;
    }
    for (int a = 0; a < n; ++a) {
        double ma = 0.0;
        for (int b = 0; b < n; ++b)
            ma += jet.hess(spec.gv2(b), spec.gv2(a)) * accel.a2[static_cast<std::size_t>(b)] +
                  jet.hess(spec.gv1(b), spec.gv2(a)) * accel.a1[static_cast<std::size_t>(b)];
        residual[static_cast<std::size_t>(n + a)] = rhs[static_cast<std::size_t>(n + a)] - ma;
    }
    return residual;
}

LightconeState to_lightcone(const DoubledState& s) {
    const int n = s.n();
    LightconeState lc;
    lc.t = s.t;
    lc.qplus.resize(static_cast<std::size_t>(n));
    lc.vplus.resize(static_cast<std::size_t>(n));
    lc.qminus.resize(static_cast<std::size_t>(n));
    lc.vminus.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        lc.qplus[k] = (s.q1[k] + s.q2[k]) / 2.0;
        lc.vplus[k] = (s.v1[k] + s.v2[k]) / 2.0;
        lc.qminus[k] = (s.q1[k] - s.q2[k]) / 2.0;
        lc.vminus[k] = (s.v1[k] - s.v2[k]) / 2.0;
    }
    return lc;
}

DoubledState from_lightcone(const LightconeState& lc) {
    const int n = static_cast<int>(lc.qplus.size());
    DoubledState s = DoubledState::zero(n);
    s.t = lc.t;
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        s.q1[k] = lc.qplus[k] + lc.qminus[k];
        s.v1[k] = lc.vplus[k] + lc.vminus[k];
        s.q2[k] = lc.qplus[k] - lc.qminus[k];
        s.v2[k] = lc.vplus[k] - lc.vminus[k];
    }
    return s;
}

} // namespace ncmech
