#include "ncmech/hamiltonian.hpp"

#include <cmath>

#include "ncmech/linalg.hpp"

namespace ncmech {

namespace {

std::string indexed(const char* base, int i) {
    return std::string(base) + "[" + std::to_string(i) + "]";
}

// Gradient offsets for observables: (q1..., p1..., q2..., p2...).
struct PhaseLayout {
    int n;
    int q1(int i) const { return i; }
    int p1(int i) const { return n + i; }
    int q2(int i) const { return 2 * n + i; }
    int p2(int i) const { return 3 * n + i; }
};

} // namespace

std::shared_ptr<const SymbolTable> phase_table(const SystemSpec& spec) {
    auto table = std::make_shared<SymbolTable>();
    table->declare("t");
    const int n = spec.n();
    for (int i = 0; i < n; ++i) table->declare(indexed("q1", i));
    for (int i = 0; i < n; ++i) table->declare(indexed("p1", i));
    for (int i = 0; i < n; ++i) table->declare(indexed("q2", i));
    for (int i = 0; i < n; ++i) table->declare(indexed("p2", i));
    for (const auto& [key, value] : spec.params()) table->declare(key);
    return table;
}

std::vector<double> phase_bindings(const SystemSpec& spec, const PhaseState& ph) {
    const int n = spec.n();
    std::vector<double> b(static_cast<std::size_t>(1 + 4 * n + static_cast<int>(spec.params().size())), 0.0);
    b[0] = ph.t;
    for (int i = 0; i < n; ++i) {
        b[static_cast<std::size_t>(1 + i)] = ph.q1[static_cast<std::size_t>(i)];
        b[static_cast<std::size_t>(1 + n + i)] = ph.p1[static_cast<std::size_t>(i)];
        b[static_cast<std::size_t>(1 + 2 * n + i)] = ph.q2[static_cast<std::size_t>(i)];
        b[static_cast<std::size_t>(1 + 3 * n + i)] = ph.p2[static_cast<std::size_t>(i)];
    }
    std::size_t at = static_cast<std::size_t>(1 + 4 * n);
    for (const auto& [key, value] : spec.params()) b[at++] = value;
    return b;
}

PhaseState momenta(const SystemSpec& spec, const DoubledState& s) {
    const int n = spec.n();
    Jet2 jet = evaluate_jet(spec.lambda(), spec.bindings(s), spec.velocity_seeds());
    PhaseState ph = PhaseState::zero(n);
    ph.t = s.t;
    ph.q1 = s.q1;
    ph.q2 = s.q2;
    for (int i = 0; i < n; ++i) {
        ph.p1[static_cast<std::size_t>(i)] = jet.grad(i);
        ph.p2[static_cast<std::size_t>(i)] = -jet.grad(n + i);
    }
    return ph;
}

namespace {

// Diagonal kinetic masses from the Hessian of the single-copy L at v = 0.
std::vector<double> kinetic_masses(const SystemSpec& spec, const DoubledState& shape) {
    const int n = spec.n();
    DoubledState rest = shape;
    std::fill(rest.v1.begin(), rest.v1.end(), 0.0);
    std::fill(rest.v2.begin(), rest.v2.end(), 0.0);
    Jet2 jet = evaluate_jet(spec.l1(), spec.bindings(rest),
                            std::vector<int>(spec.velocity_seeds().begin(),
                                             spec.velocity_seeds().begin() + n));
    std::vector<double> m(static_cast<std::size_t>(n), 1.0);
    for (int i = 0; i < n; ++i) {
        double mi = jet.hess(i, i);
        m[static_cast<std::size_t>(i)] = std::abs(mi) > 1e-12 ? mi : 1.0;
    }
    return m;
}

} // namespace

DoubledState velocities_from_momenta(const SystemSpec& spec, const PhaseState& ph,
                                     const std::vector<double>* guess) {
    const int n = spec.n();
    DoubledState s = DoubledState::zero(n);
    s.t = ph.t;
    s.q1 = ph.q1;
    s.q2 = ph.q2;

    if (guess) {
        for (int i = 0; i < n; ++i) {
            s.v1[static_cast<std::size_t>(i)] = (*guess)[static_cast<std::size_t>(i)];
            s.v2[static_cast<std::size_t>(i)] = (*guess)[static_cast<std::size_t>(n + i)];
        }
    } else {
        auto mass = kinetic_masses(spec, s);
        for (int i = 0; i < n; ++i) {
            s.v1[static_cast<std::size_t>(i)] = ph.p1[static_cast<std::size_t>(i)] / mass[static_cast<std::size_t>(i)];
            s.v2[static_cast<std::size_t>(i)] = ph.p2[static_cast<std::size_t>(i)] / mass[static_cast<std::size_t>(i)];
        }
    }

    double pScale = 0.0;
    for (int i = 0; i < n; ++i)
        pScale = std::max({pScale, std::abs(ph.p1[static_cast<std::size_t>(i)]),
                           std::abs(ph.p2[static_cast<std::size_t>(i)])});
    const double tol = 1e-12 * (1.0 + pScale);

    double lastResidual = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 50; ++iter) {
        Jet2 jet = evaluate_jet(spec.lambda(), spec.bindings(s), spec.velocity_seeds());
        std::vector<double> r(static_cast<std::size_t>(2 * n), 0.0);
        double rMax = 0.0;
        for (int i = 0; i < n; ++i) {
            r[static_cast<std::size_t>(i)] = ph.p1[static_cast<std::size_t>(i)] - jet.grad(i);
            r[static_cast<std::size_t>(n + i)] = ph.p2[static_cast<std::size_t>(i)] + jet.grad(n + i);
            rMax = std::max({rMax, std::abs(r[static_cast<std::size_t>(i)]),
                             std::abs(r[static_cast<std::size_t>(n + i)])});
        }
        lastResidual = rMax;
        if (rMax <= tol) return s;

        // dp/dv = diag(I, -I) . M
        std::vector<double> jac(static_cast<std::size_t>(4 * n * n), 0.0);
        for (int a = 0; a < 2 * n; ++a) {
            const double sign = a < n ? 1.0 : -1.0;
            for (int b = 0; b < 2 * n; ++b)
                jac[static_cast<std::size_t>(a) * 2 * n + b] = sign * jet.hess(a, b);
        }
        auto solve = linalg::solve_dense(std::move(jac), r);
        if (solve.singular)
            throw NonRegularError("momentum-map Jacobian is singular during Newton iteration");
        for (int i = 0; i < n; ++i) {
            s.v1[static_cast<std::size_t>(i)] += solve.x[static_cast<std::size_t>(i)];
            s.v2[static_cast<std::size_t>(i)] += solve.x[static_cast<std::size_t>(n + i)];
        }
    }
    throw NoConvergenceError("velocity inversion did not converge in 50 Newton iterations",
                             lastResidual);
}

double hamiltonian_value(const SystemSpec& spec, const PhaseState& ph) {
    const int n = spec.n();
    DoubledState s = velocities_from_momenta(spec, ph);
    double h = 0.0;
    for (int i = 0; i < n; ++i)
        h += s.v1[static_cast<std::size_t>(i)] * ph.p1[static_cast<std::size_t>(i)] -
             s.v2[static_cast<std::size_t>(i)] * ph.p2[static_cast<std::size_t>(i)];
    return h - evaluate(spec.lambda(), spec.bindings(s));
}

Observable hamiltonian_observable(const SystemSpec& spec) {
    Observable obs;
    obs.name = "H";
    obs.value = [&spec](const PhaseState& ph) { return hamiltonian_value(spec, ph); };
    obs.gradient = [&spec](const PhaseState& ph) {
        const int n = spec.n();
        PhaseLayout lay{n};
        DoubledState s = velocities_from_momenta(spec, ph);
        Jet2 jet = evaluate_jet(spec.lambda(), spec.bindings(s), spec.full_seeds());
        std::vector<double> g(static_cast<std::size_t>(4 * n), 0.0);
        for (int i = 0; i < n; ++i) {
            g[static_cast<std::size_t>(lay.q1(i))] = -jet.grad(spec.gq1(i));
            g[static_cast<std::size_t>(lay.p1(i))] = s.v1[static_cast<std::size_t>(i)];
            g[static_cast<std::size_t>(lay.q2(i))] = -jet.grad(spec.gq2(i));
            g[static_cast<std::size_t>(lay.p2(i))] = -s.v2[static_cast<std::size_t>(i)];
        }
        return g;
    };
    return obs;
}

Observable expression_observable(const SystemSpec& spec, std::string name, Expression expr) {
    const int n = spec.n();
    std::vector<int> seeds;
    for (int i = 0; i < 4 * n; ++i) seeds.push_back(1 + i);
    Observable obs;
    obs.name = std::move(name);
    auto shared = std::make_shared<Expression>(std::move(expr));
    obs.value = [&spec, shared](const PhaseState& ph) {
        return evaluate(*shared, phase_bindings(spec, ph));
    };
    obs.gradient = [&spec, shared, seeds, n](const PhaseState& ph) {
        Jet2 jet = evaluate_jet(*shared, phase_bindings(spec, ph), seeds);
        std::vector<double> g(static_cast<std::size_t>(4 * n), 0.0);
        for (int i = 0; i < 4 * n; ++i) g[static_cast<std::size_t>(i)] = jet.grad(i);
        return g;
    };
    return obs;
}

Observable expression_observable(const SystemSpec& spec, std::string name, std::string_view text) {
    return expression_observable(spec, std::move(name), parse(text, phase_table(spec)));
}

double poisson_bracket(const SystemSpec& spec, const Observable& f, const Observable& g,
                       const PhaseState& ph) {
    const int n = spec.n();
    PhaseLayout lay{n};
    auto gf = f.gradient(ph);
    auto gg = g.gradient(ph);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        sum += gf[static_cast<std::size_t>(lay.q1(i))] * gg[static_cast<std::size_t>(lay.p1(i))] -
               gf[static_cast<std::size_t>(lay.p1(i))] * gg[static_cast<std::size_t>(lay.q1(i))];
        sum -= gf[static_cast<std::size_t>(lay.q2(i))] * gg[static_cast<std::size_t>(lay.p2(i))] -
               gf[static_cast<std::size_t>(lay.p2(i))] * gg[static_cast<std::size_t>(lay.q2(i))];
    }
    return sum;
}

Expression bracket_expression(const SystemSpec& spec, const Expression& f, const Expression& g) {
    const int n = spec.n();
    auto table = f.symbols();
    ExprBuilder b(table);
    int acc = b.constant(0.0);
    for (int i = 0; i < n; ++i) {
        const int q1 = 1 + i, p1 = 1 + n + i, q2 = 1 + 2 * n + i, p2 = 1 + 3 * n + i;
        auto term = [&](const Expression& df, const Expression& dg) {
            return b.binary(BinaryOp::Mul, b.splice(df, df.root()), b.splice(dg, dg.root()));
        };
        int s1 = b.binary(BinaryOp::Sub, term(derivative(f, q1), derivative(g, p1)),
                          term(derivative(f, p1), derivative(g, q1)));
        int s2 = b.binary(BinaryOp::Sub, term(derivative(f, q2), derivative(g, p2)),
                          term(derivative(f, p2), derivative(g, q2)));
        acc = b.binary(BinaryOp::Add, acc, b.binary(BinaryOp::Sub, s1, s2));
    }
    return b.take(acc);
}

FlowCheckReport hamiltonian_flow_check(const SystemSpec& spec, const PhaseState& ph, double tol) {
    const int n = spec.n();
    FlowCheckReport report;
    report.tol = tol;

    // Lagrangian side: velocities, accelerations, and total derivatives of
    // the momenta along the flow.
    DoubledState s = velocities_from_momenta(spec, ph);
    EomSolve acc = accelerations(spec, s);
    Jet2 jet = evaluate_jet(spec.lambda(), spec.bindings(s), spec.full_seeds());

    std::vector<double> pdot1(static_cast<std::size_t>(n), 0.0), pdot2(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double d1 = jet.hess(spec.gt(), spec.gv1(i));
        double d2 = jet.hess(spec.gt(), spec.gv2(i));
        for (int b = 0; b < n; ++b) {
            d1 += jet.hess(spec.gq1(b), spec.gv1(i)) * s.v1[static_cast<std::size_t>(b)] +
                  jet.hess(spec.gv1(b), spec.gv1(i)) * acc.a1[static_cast<std::size_t>(b)] +
                  jet.hess(spec.gq2(b), spec.gv1(i)) * s.v2[static_cast<std::size_t>(b)] +
                  jet.hess(spec.gv2(b), spec.gv1(i)) * acc.a2[static_cast<std::size_t>(b)];
            d2 += jet.hess(spec.gq1(b), spec.gv2(i)) * s.v1[static_cast<std::size_t>(b)] +
                  jet.hess(spec.gv1(b), spec.gv2(i)) * acc.a1[static_cast<std::size_t>(b)] +
                  jet.hess(spec.gq2(b), spec.gv2(i)) * s.v2[static_cast<std::size_t>(b)] +
                  jet.hess(spec.gv2(b), spec.gv2(i)) * acc.a2[static_cast<std::size_t>(b)];
        }
        pdot1[static_cast<std::size_t>(i)] = d1;
        pdot2[static_cast<std::size_t>(i)] = -d2;
    }

    // Hamiltonian side: five-point central differences of H over phase space.
    auto hPartial = [&](int block, int i) {
        auto shifted = [&](double delta) {
            PhaseState p2 = ph;
            double* slot = nullptr;
            switch (block) {
                case 0: slot = &p2.q1[static_cast<std::size_t>(i)]; break;
                case 1: slot = &p2.p1[static_cast<std::size_t>(i)]; break;
                case 2: slot = &p2.q2[static_cast<std::size_t>(i)]; break;
                default: slot = &p2.p2[static_cast<std::size_t>(i)]; break;
            }
            *slot += delta;
            return hamiltonian_value(spec, p2);
        };
        const double x = [&] {
            switch (block) {
                case 0: return ph.q1[static_cast<std::size_t>(i)];
                case 1: return ph.p1[static_cast<std::size_t>(i)];
                case 2: return ph.q2[static_cast<std::size_t>(i)];
                default: return ph.p2[static_cast<std::size_t>(i)];
            }
        }();
        const double h = 1e-3 * (1.0 + std::abs(x));
        return (shifted(-2.0 * h) - 8.0 * shifted(-h) + 8.0 * shifted(h) - shifted(2.0 * h)) /
               (12.0 * h);
    };

    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        worst = std::max(worst, std::abs(s.v1[static_cast<std::size_t>(i)] - hPartial(1, i)));
        worst = std::max(worst, std::abs(s.v2[static_cast<std::size_t>(i)] + hPartial(3, i)));
        worst = std::max(worst, std::abs(pdot1[static_cast<std::size_t>(i)] + hPartial(0, i)));
        worst = std::max(worst, std::abs(pdot2[static_cast<std::size_t>(i)] - hPartial(2, i)));
    }
    report.maxDiscrepancy = worst;
    report.pass = worst <= tol;
    return report;
}

} // namespace ncmech
