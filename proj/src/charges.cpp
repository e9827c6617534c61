#include "ncmech/charges.hpp"

#include <charconv>
#include <cmath>
#include <random>

namespace ncmech {

namespace {

std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string idx(const char* base, int i) {
    return std::string(base) + "[" + std::to_string(i) + "]";
}

bool uses_any_velocity(const SystemSpec& spec, const Expression& e) {
    for (int i = 0; i < spec.n(); ++i)
        if (e.uses_symbol(spec.idx_v1(i)) || e.uses_symbol(spec.idx_v2(i))) return true;
    return false;
}

} // namespace

Transformation make_transformation(const SystemSpec& spec, std::string name,
                                   const std::vector<std::string>& deltaQ1,
                                   const std::vector<std::string>& deltaQ2, double deltaT,
                                   const std::optional<std::string>& boundary) {
    const int n = spec.n();
    if (static_cast<int>(deltaQ1.size()) != n || static_cast<int>(deltaQ2.size()) != n)
        throw ConfigError("transformation '" + name + "' needs n expressions per sector");
    Transformation tr;
    tr.name = std::move(name);
    tr.deltaT = deltaT;
    for (const auto& text : deltaQ1) tr.deltaQ.push_back(parse(text, spec.doubled_table()));
    for (const auto& text : deltaQ2) tr.deltaQ.push_back(parse(text, spec.doubled_table()));
    for (const auto& e : tr.deltaQ)
        if (uses_any_velocity(spec, e))
            throw ConfigError("transformation '" + tr.name + "' must not reference velocities");
    if (boundary) {
        tr.boundaryTerm = parse(*boundary, spec.doubled_table());
        if (uses_any_velocity(spec, *tr.boundaryTerm))
            throw ConfigError("boundary term of '" + tr.name + "' must not reference velocities");
    }
    for (int i = 0; i < n; ++i) {
        const auto& d1 = tr.deltaQ[static_cast<std::size_t>(i)];
        const auto& d2 = tr.deltaQ[static_cast<std::size_t>(n + i)];
        for (int j = 0; j < n; ++j) {
            if (d1.uses_symbol(spec.idx_q2(j)) || d2.uses_symbol(spec.idx_q1(j))) tr.mixing = true;
        }
    }
    return tr;
}

double sector_energy(const SystemSpec& spec, const DoubledState& s, int sector) {
    if (sector != 1 && sector != 2) throw ConfigError("sector must be 1 or 2");
    const int n = spec.n();
    const auto& l = sector == 1 ? spec.l1() : spec.l2();
    Jet2 jet = evaluate_jet(l, spec.bindings(s), spec.full_seeds());
    double e = -jet.value();
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        e += sector == 1 ? s.v1[k] * jet.grad(spec.gv1(i)) : s.v2[k] * jet.grad(spec.gv2(i));
    }
    return e;
}

namespace {

// Shared work for the transformation charges: deltaQ values, their total
// time derivatives, and the boundary term with its total derivative.
struct TransformationEval {
    std::vector<double> delta;    // 2n values
    std::vector<double> deltaDot; // 2n total derivatives
    double boundary = 0.0;
    double boundaryDot = 0.0;
};

TransformationEval eval_transformation(const SystemSpec& spec, const DoubledState& s,
                                       const Transformation& tr) {
    const int n = spec.n();
    auto bindings = spec.bindings(s);
    TransformationEval out;
    out.delta.resize(static_cast<std::size_t>(2 * n));
    out.deltaDot.resize(static_cast<std::size_t>(2 * n));
    auto totalDerivative = [&](const Jet2& jet) {
        double d = jet.grad(spec.gt());
        for (int b = 0; b < n; ++b) {
            const auto k = static_cast<std::size_t>(b);
            d += jet.grad(spec.gq1(b)) * s.v1[k] + jet.grad(spec.gq2(b)) * s.v2[k];
        }
        return d;
    };
    for (int a = 0; a < 2 * n; ++a) {
        const auto& e = tr.deltaQ[static_cast<std::size_t>(a)];
        Jet2 jet = evaluate_jet(e, bindings, spec.full_seeds());
        out.delta[static_cast<std::size_t>(a)] = jet.value();
        out.deltaDot[static_cast<std::size_t>(a)] = totalDerivative(jet);
    }
    if (tr.boundaryTerm) {
        Jet2 jet = evaluate_jet(*tr.boundaryTerm, bindings, spec.full_seeds());
        out.boundary = jet.value();
        out.boundaryDot = totalDerivative(jet);
    }
    return out;
}

double noether_from_jets(const SystemSpec& spec, const DoubledState& s, const Transformation& tr,
                         const TransformationEval& ev, const Jet2& lambdaJet) {
    const int n = spec.n();
    double j = 0.0;
    for (int i = 0; i < n; ++i) {
        j += ev.delta[static_cast<std::size_t>(i)] * lambdaJet.grad(spec.gv1(i));
        j += ev.delta[static_cast<std::size_t>(n + i)] * lambdaJet.grad(spec.gv2(i));
    }
    if (tr.deltaT != 0.0) {
        double h = -lambdaJet.value();
        for (int i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            h += s.v1[k] * lambdaJet.grad(spec.gv1(i)) + s.v2[k] * lambdaJet.grad(spec.gv2(i));
        }
        j += tr.deltaT * h;
    }
    return j - ev.boundary;
}

double delta_lambda_from_jets(const SystemSpec& spec, const TransformationEval& ev,
                              const Jet2& lambdaJet) {
    const int n = spec.n();
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
        d += ev.delta[static_cast<std::size_t>(i)] * lambdaJet.grad(spec.gq1(i)) +
             ev.deltaDot[static_cast<std::size_t>(i)] * lambdaJet.grad(spec.gv1(i));
        d += ev.delta[static_cast<std::size_t>(n + i)] * lambdaJet.grad(spec.gq2(i)) +
             ev.deltaDot[static_cast<std::size_t>(n + i)] * lambdaJet.grad(spec.gv2(i));
    }
    return d;
}

} // namespace

double noether_charge(const SystemSpec& spec, const DoubledState& s, const Transformation& tr) {
    Jet2 lambdaJet = evaluate_jet(spec.lambda(), spec.bindings(s), spec.full_seeds());
    return noether_from_jets(spec, s, tr, eval_transformation(spec, s, tr), lambdaJet);
}

double delta_lambda(const SystemSpec& spec, const DoubledState& s, const Transformation& tr) {
    Jet2 lambdaJet = evaluate_jet(spec.lambda(), spec.bindings(s), spec.full_seeds());
    return delta_lambda_from_jets(spec, eval_transformation(spec, s, tr), lambdaJet);
}

double transformation_rate_rhs(const SystemSpec& spec, const DoubledState& s,
                               const Transformation& tr) {
    Jet2 lambdaJet = evaluate_jet(spec.lambda(), spec.bindings(s), spec.full_seeds());
    auto ev = eval_transformation(spec, s, tr);
    return -tr.deltaT * lambdaJet.grad(spec.gt()) + delta_lambda_from_jets(spec, ev, lambdaJet) -
           ev.boundaryDot;
}

// ---------------------------------------------------------------------------
// Ledger plans

namespace {

double hamiltonian_from_ctx(const LedgerContext& ctx) {
    const SystemSpec& spec = *ctx.spec;
    const int n = spec.n();
    double h = -ctx.lambdaJet->value();
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        h += ctx.s->v1[k] * ctx.lambdaJet->grad(spec.gv1(i)) +
             ctx.s->v2[k] * ctx.lambdaJet->grad(spec.gv2(i));
    }
    return h;
}

double sector_energy_from_ctx(const LedgerContext& ctx, int sector) {
    const SystemSpec& spec = *ctx.spec;
    const Jet2& jet = sector == 1 ? *ctx.l1Jet : *ctx.l2Jet;
    double e = -jet.value();
    for (int i = 0; i < spec.n(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        e += sector == 1 ? ctx.s->v1[k] * jet.grad(spec.gv1(i))
                         : ctx.s->v2[k] * jet.grad(spec.gv2(i));
    }
    return e;
}

double sector_energy_rhs(const LedgerContext& ctx, int sector) {
    const SystemSpec& spec = *ctx.spec;
    const Jet2& jet = sector == 1 ? *ctx.l1Jet : *ctx.l2Jet;
    double r = -jet.grad(spec.gt());
    for (int i = 0; i < spec.n(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        r += sector == 1 ? ctx.s->v1[k] * ctx.fk->fk1[k] : -ctx.s->v2[k] * ctx.fk->fk2[k];
    }
    return r;
}

// Both sides of the force-power identity
//   v1.FK1 + v2.FK2 = -d/dt(v1.dK/dv1 + v2.dK/dv2 - K) - dK/dt,
// with the total derivative expanded through the accelerations.
double fkk_lhs(const LedgerContext& ctx) {
    double l = 0.0;
    for (int i = 0; i < ctx.spec->n(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        l += ctx.s->v1[k] * ctx.fk->fk1[k] + ctx.s->v2[k] * ctx.fk->fk2[k];
    }
    return l;
}

double fkk_rhs(const LedgerContext& ctx) {
    const SystemSpec& spec = *ctx.spec;
    const Jet2& kj = *ctx.kJet;
    const int n = spec.n();
    // dG/dt with G = v1.K_v1 + v2.K_v2 - K.
    double dG = 0.0;
    auto dKv_dt = [&](int gv) {
        double d = kj.hess(spec.gt(), gv);
        for (int b = 0; b < n; ++b) {
            const auto k = static_cast<std::size_t>(b);
            d += kj.hess(spec.gq1(b), gv) * ctx.s->v1[k] + kj.hess(spec.gv1(b), gv) * ctx.accel->a1[k] +
                 kj.hess(spec.gq2(b), gv) * ctx.s->v2[k] + kj.hess(spec.gv2(b), gv) * ctx.accel->a2[k];
        }
        return d;
    };
    double dK = kj.grad(spec.gt());
    for (int b = 0; b < n; ++b) {
        const auto k = static_cast<std::size_t>(b);
        dK += kj.grad(spec.gq1(b)) * ctx.s->v1[k] + kj.grad(spec.gv1(b)) * ctx.accel->a1[k] +
              kj.grad(spec.gq2(b)) * ctx.s->v2[k] + kj.grad(spec.gv2(b)) * ctx.accel->a2[k];
    }
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        dG += ctx.accel->a1[k] * kj.grad(spec.gv1(i)) + ctx.s->v1[k] * dKv_dt(spec.gv1(i));
        dG += ctx.accel->a2[k] * kj.grad(spec.gv2(i)) + ctx.s->v2[k] * dKv_dt(spec.gv2(i));
    }
    dG -= dK;
    return -dG - kj.grad(spec.gt());
}

LedgerColumn transformation_column(std::string name, const SystemSpec& spec, Transformation tr) {
    auto shared = std::make_shared<Transformation>(std::move(tr));
    LedgerColumn col;
    col.name = std::move(name);
    col.value = [&spec, shared](const LedgerContext& ctx) {
        return noether_from_jets(spec, *ctx.s, *shared, eval_transformation(spec, *ctx.s, *shared),
                                 *ctx.lambdaJet);
    };
    col.rateRhs = [&spec, shared](const LedgerContext& ctx) {
        auto ev = eval_transformation(spec, *ctx.s, *shared);
        return -shared->deltaT * ctx.lambdaJet->grad(spec.gt()) +
               delta_lambda_from_jets(spec, ev, *ctx.lambdaJet) - ev.boundaryDot;
    };
    return col;
}

// Sector charge for a non-mixing transformation: J_i = deltaQ_i . dL_i/dv_i,
// with dJ1/dt = deltaQ1.FK1 + delta L1 and dJ2/dt = -deltaQ2.FK2 + delta L2.
LedgerColumn sector_charge_column(std::string name, const SystemSpec& spec, Transformation tr,
                                  int sector) {
    auto shared = std::make_shared<Transformation>(std::move(tr));
    LedgerColumn col;
    col.name = std::move(name);
    col.value = [&spec, shared, sector](const LedgerContext& ctx) {
        auto ev = eval_transformation(spec, *ctx.s, *shared);
        const Jet2& jet = sector == 1 ? *ctx.l1Jet : *ctx.l2Jet;
        double j = 0.0;
        for (int i = 0; i < spec.n(); ++i) {
            const int a = sector == 1 ? i : spec.n() + i;
            j += ev.delta[static_cast<std::size_t>(a)] *
                 jet.grad(sector == 1 ? spec.gv1(i) : spec.gv2(i));
        }
        return j;
    };
    col.rateRhs = [&spec, shared, sector](const LedgerContext& ctx) {
        auto ev = eval_transformation(spec, *ctx.s, *shared);
        const Jet2& jet = sector == 1 ? *ctx.l1Jet : *ctx.l2Jet;
        double r = 0.0;
        for (int i = 0; i < spec.n(); ++i) {
            const auto k = static_cast<std::size_t>(i);
            const int a = sector == 1 ? i : spec.n() + i;
            const double dq = ev.delta[static_cast<std::size_t>(a)];
            const double dqDot = ev.deltaDot[static_cast<std::size_t>(a)];
            // delta L_i (the variation of the sector Lagrangian).
            r += dq * jet.grad(sector == 1 ? spec.gq1(i) : spec.gq2(i)) +
                 dqDot * jet.grad(sector == 1 ? spec.gv1(i) : spec.gv2(i));
            r += sector == 1 ? dq * ctx.fk->fk1[k] : -dq * ctx.fk->fk2[k];
        }
        return r;
    };
    return col;
}

std::vector<std::string> zero_texts(int n) { return std::vector<std::string>(static_cast<std::size_t>(n), "0"); }

// Rotation about one axis: delta q = e_axis x q.
std::vector<std::string> rotation_texts(const char* base, int axis) {
    // (e_k x q)_i = eps_{k j i}... via explicit tables.
    static const int comp[3][2] = {{1, 2}, {2, 0}, {0, 1}};
    std::vector<std::string> out(3, "0");
    const int a = comp[axis][0], b = comp[axis][1];
    out[static_cast<std::size_t>(a)] = "-" + idx(base, b);
    out[static_cast<std::size_t>(b)] = idx(base, a);
    return out;
}

} // namespace

LedgerPlan generic_charges(const SystemSpec& spec) {
    LedgerPlan plan;
    {
        LedgerColumn col;
        col.name = "H";
        col.value = hamiltonian_from_ctx;
        col.rateRhs = [&spec](const LedgerContext& ctx) {
            return -ctx.lambdaJet->grad(spec.gt());
        };
        plan.columns.push_back(std::move(col));
    }
    for (int sector : {1, 2}) {
        LedgerColumn col;
        col.name = "E" + std::to_string(sector);
        col.value = [sector](const LedgerContext& ctx) { return sector_energy_from_ctx(ctx, sector); };
        col.rateRhs = [sector](const LedgerContext& ctx) { return sector_energy_rhs(ctx, sector); };
        plan.columns.push_back(std::move(col));
    }
    {
        LedgerColumn col;
        col.name = "E";
        col.value = [](const LedgerContext& ctx) {
            return 0.5 * (sector_energy_from_ctx(ctx, 1) + sector_energy_from_ctx(ctx, 2));
        };
        col.rateRhs = [](const LedgerContext& ctx) {
            return 0.5 * (sector_energy_rhs(ctx, 1) + sector_energy_rhs(ctx, 2));
        };
        plan.columns.push_back(std::move(col));
    }
    {
        LedgerColumn col;
        col.name = "fkk";
        col.value = fkk_lhs;
        col.rateRhs = fkk_rhs;
        col.pointwiseResidual = true;
        plan.columns.push_back(std::move(col));
    }
    return plan;
}

LedgerPlan builtin_charges(const ModelEntry& entry) {
    const SystemSpec& spec = entry.spec;
    const int n = spec.n();
    LedgerPlan plan = generic_charges(spec);

    auto so11 = [&]() {
        std::vector<std::string> d1, d2;
        for (int i = 0; i < n; ++i) {
            d1.push_back("-" + idx("q2", i));
            d2.push_back("-" + idx("q1", i));
        }
        return make_transformation(spec, "so11", d1, d2);
    };

    switch (entry.kind) {
        case ModelKind::FreeParticle:
        case ModelKind::FreeParticleCircle:
        case ModelKind::FreeFall:
        case ModelKind::DampedOscillator: {
            if (n != 1 && entry.kind != ModelKind::FreeParticle)
                throw ConfigError("model kind expects one degree of freedom");
            plan.columns.push_back(transformation_column("Jtilde", spec, so11()));
            const std::string ceff = entry.kind == ModelKind::FreeParticleCircle ? "(c*R^2)" : "c";
            for (int i = 0; i < n; ++i) {
                auto d1 = zero_texts(n), d2 = zero_texts(n);
                d1[static_cast<std::size_t>(i)] = "1";
                d2[static_cast<std::size_t>(i)] = "1";
                const std::string suffix = n == 1 ? "" : "[" + std::to_string(i) + "]";
                const std::string f =
                    "(" + ceff + "/2)*(" + idx("q1", i) + " - " + idx("q2", i) + ")";
                plan.columns.push_back(transformation_column(
                    "P" + suffix, spec, make_transformation(spec, "translation" + suffix, d1, d2, 0.0, f)));
                plan.columns.push_back(sector_charge_column(
                    "P1" + suffix, spec, make_transformation(spec, "t1", d1, d2), 1));
                plan.columns.push_back(sector_charge_column(
                    "P2" + suffix, spec, make_transformation(spec, "t2", d1, d2), 2));
            }
            break;
        }
        case ModelKind::CentralForce: {
            if (n != 3) throw ConfigError("central-force ledger expects three degrees of freedom");
            plan.columns.push_back(transformation_column("Jtilde", spec, so11()));
            for (int axis = 0; axis < 3; ++axis) {
                auto d1 = rotation_texts("q1", axis);
                auto d2 = rotation_texts("q2", axis);
                const std::string suffix = "[" + std::to_string(axis) + "]";
                auto tr = make_transformation(spec, "rotation" + suffix, d1, d2);
                plan.columns.push_back(transformation_column("Jgen" + suffix, spec, tr));
                plan.columns.push_back(sector_charge_column("J1" + suffix, spec, tr, 1));
                plan.columns.push_back(sector_charge_column("J2" + suffix, spec, tr, 2));
                LedgerColumn avg;
                avg.name = "J" + suffix;
                auto c1 = sector_charge_column("tmp", spec, tr, 1);
                auto c2 = sector_charge_column("tmp", spec, tr, 2);
                avg.value = [c1, c2](const LedgerContext& ctx) {
                    return 0.5 * (c1.value(ctx) + c2.value(ctx));
                };
                avg.rateRhs = [c1, c2](const LedgerContext& ctx) {
                    return 0.5 * (c1.rateRhs(ctx) + c2.rateRhs(ctx));
                };
                plan.columns.push_back(std::move(avg));
            }
            break;
        }
        case ModelKind::PolynomialDrag: {
            if (n != 1) throw ConfigError("drag ledger expects one degree of freedom");
            plan.columns.push_back(transformation_column(
                "Pplus", spec, make_transformation(spec, "qplus_translation", {"1"}, {"1"})));
            break;
        }
        case ModelKind::Inline:
            break;
    }
    return plan;
}

std::vector<Observable> builtin_observables(const ModelEntry& entry) {
    const SystemSpec& spec = entry.spec;
    const int n = spec.n();
    std::vector<Observable> out;
    out.push_back(hamiltonian_observable(spec));

    auto expr = [&](std::string name, const std::string& text) {
        out.push_back(expression_observable(spec, std::move(name), text));
    };

    switch (entry.kind) {
        case ModelKind::FreeParticle:
        case ModelKind::FreeParticleCircle:
        case ModelKind::FreeFall:
        case ModelKind::DampedOscillator: {
            if (n != 1 && entry.kind != ModelKind::FreeParticle)
                throw ConfigError("observable set expects one degree of freedom");
            const std::string ceff =
                entry.kind == ModelKind::FreeParticleCircle ? "(c*R^2)" : "c";
            const std::string meff =
                entry.kind == ModelKind::FreeParticleCircle ? "(m*R^2)" : "m";
            std::string e1 = "(", e2 = "(", jt;
            for (int i = 0; i < n; ++i) {
                e1 += (i ? " + " : "") + ("(" + idx("p1", i) + " - (" + ceff + "/2)*" + idx("q2", i) + ")^2");
                e2 += (i ? " + " : "") + ("(" + idx("p2", i) + " - (" + ceff + "/2)*" + idx("q1", i) + ")^2");
                jt += (i ? " + " : "") +
                      (idx("q1", i) + "*" + idx("p2", i) + " - " + idx("q2", i) + "*" + idx("p1", i));
            }
            std::string vtext1 = "0", vtext2 = "0";
            if (entry.kind == ModelKind::DampedOscillator) {
                vtext1 = "0.5*m*omega^2*q1[0]^2";
                vtext2 = "0.5*m*omega^2*q2[0]^2";
            } else if (entry.kind == ModelKind::FreeFall) {
                vtext1 = "-m*g*q1[0]";
                vtext2 = "-m*g*q2[0]";
            }
            expr("E1", e1 + ")/(2*" + meff + ") + " + vtext1);
            expr("E2", e2 + ")/(2*" + meff + ") + " + vtext2);
            expr("E", "0.5*(" + e1 + ")/(2*" + meff + ") + " + vtext1 + ") + 0.5*(" + e2 +
                          ")/(2*" + meff + ") + " + vtext2 + ")");
            expr("Jtilde", jt);
            if (n == 1) {
                expr("P", "p1[0] - p2[0] - (" + ceff + "/2)*(q1[0] - q2[0])");
                if (entry.kind != ModelKind::DampedOscillator) {
                    // E+- of the translation-invariant family:
                    // (1/2m)(p+- -+ (c/2) q+-)^2.
                    expr("Eplus", "((p1[0] + p2[0])/2 - (" + ceff + "/2)*(q1[0] + q2[0])/2)^2/(2*" +
                                      meff + ")");
                    expr("Eminus", "((p1[0] - p2[0])/2 + (" + ceff + "/2)*(q1[0] - q2[0])/2)^2/(2*" +
                                       meff + ")");
                }
            }
            break;
        }
        case ModelKind::CentralForce: {
            std::string e1 = "(", e2 = "(";
            for (int i = 0; i < 3; ++i) {
                e1 += (i ? " + " : "") + ("(" + idx("p1", i) + " - (c/2)*" + idx("q2", i) + ")^2");
                e2 += (i ? " + " : "") + ("(" + idx("p2", i) + " - (c/2)*" + idx("q1", i) + ")^2");
            }
            std::string r1 = "sqrt(q1[0]^2 + q1[1]^2 + q1[2]^2)";
            std::string r2 = "sqrt(q2[0]^2 + q2[1]^2 + q2[2]^2)";
            expr("E1", e1 + ")/(2*mu) - k/" + r1);
            expr("E2", e2 + ")/(2*mu) - k/" + r2);
            static const int comp[3][2] = {{1, 2}, {2, 0}, {0, 1}};
            for (int axis = 0; axis < 3; ++axis) {
                const int a = comp[axis][0], b = comp[axis][1];
                auto cross = [&](const char* qb, const char* pb) {
                    return idx(qb, a) + "*" + idx(pb, b) + " - " + idx(qb, b) + "*" + idx(pb, a);
                };
                const std::string suffix = "[" + std::to_string(axis) + "]";
                expr("J" + suffix, "0.5*(" + cross("q1", "p1") + " + " + cross("q2", "p2") + ")");
                expr("Jgen" + suffix, cross("q1", "p1") + " - (" + cross("q2", "p2") + ")");
            }
            std::string jt;
            for (int i = 0; i < 3; ++i)
                jt += (i ? " + " : "") +
                      (idx("q1", i) + "*" + idx("p2", i) + " - " + idx("q2", i) + "*" + idx("p1", i));
            expr("Jtilde", jt);
            break;
        }
        case ModelKind::PolynomialDrag:
            expr("Pplus", "p1[0] - p2[0]");
            break;
        case ModelKind::Inline:
            break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rate residuals along a trajectory

LedgerReport rate_residuals(const SystemSpec& spec, const TrajectoryRecord& traj,
                            const LedgerPlan& plan, double fdWarnTol) {
    const std::size_t count = traj.times.size();
    if (count < 5) throw ConfigError("rate_residuals needs at least 5 samples");
    const double dt = traj.sampleDt;

    LedgerReport report;
    for (const auto& col : plan.columns) {
        report.chargeNames.push_back(col.name);
        if (col.rateRhs) report.residualNames.push_back(col.pointwiseResidual ? col.name : "d" + col.name);
    }

    const std::size_t ncols = plan.columns.size();
    std::vector<std::vector<double>> values(ncols, std::vector<double>(count));
    std::vector<std::vector<double>> rhs(ncols, std::vector<double>(count));

    for (std::size_t i = 0; i < count; ++i) {
        const DoubledState& s = traj.states[i];
        auto bindings = spec.bindings(s);
        EomSolve accel = accelerations(spec, s);
        NonconservativeForces fk = nonconservative_forces(spec, s, accel);
        Jet2 lambdaJet = evaluate_jet(spec.lambda(), bindings, spec.full_seeds());
        Jet2 l1Jet = evaluate_jet(spec.l1(), bindings, spec.full_seeds());
        Jet2 l2Jet = evaluate_jet(spec.l2(), bindings, spec.full_seeds());
        Jet2 kJet = evaluate_jet(spec.potential_k(), bindings, spec.full_seeds());

        LedgerContext ctx;
        ctx.spec = &spec;
        ctx.s = &s;
        ctx.ph = &traj.phases[i];
        ctx.accel = &accel;
        ctx.fk = &fk;
        ctx.lambdaJet = &lambdaJet;
        ctx.l1Jet = &l1Jet;
        ctx.l2Jet = &l2Jet;
        ctx.kJet = &kJet;

        for (std::size_t c = 0; c < ncols; ++c) {
            values[c][i] = plan.columns[c].value(ctx);
            if (plan.columns[c].rateRhs) rhs[c][i] = plan.columns[c].rateRhs(ctx);
        }
    }

    report.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        report.samples[i].t = traj.times[i];
        for (std::size_t c = 0; c < ncols; ++c)
            report.samples[i].values[plan.columns[c].name] = values[c][i];
    }

    auto d5 = [&](const std::vector<double>& v, std::size_t i, std::size_t stride) {
        return (-v[i + 2 * stride] + 8.0 * v[i + stride] - 8.0 * v[i - stride] + v[i - 2 * stride]) /
               (12.0 * dt * static_cast<double>(stride));
    };

    for (std::size_t c = 0; c < ncols; ++c) {
        const auto& col = plan.columns[c];
        if (!col.rateRhs) continue;
        if (col.pointwiseResidual) {
            double worst = 0.0;
            for (std::size_t i = 0; i < count; ++i) {
                const double r = values[c][i] - rhs[c][i];
                report.samples[i].residuals[col.name] = r;
                worst = std::max(worst, std::abs(r));
            }
            report.maxAbsResidual[col.name] = worst;
            continue;
        }
        const std::string key = "d" + col.name;
        double worst = 0.0;
        for (std::size_t i = 2; i + 2 < count; ++i) {
            const double r = d5(values[c], i, 1) - rhs[c][i];
            report.samples[i].residuals[key] = r;
            worst = std::max(worst, std::abs(r));
            if (i >= 4 && i + 4 < count) {
                const double wide = d5(values[c], i, 2);
                report.fdErrorEstimate =
                    std::max(report.fdErrorEstimate, std::abs(wide - d5(values[c], i, 1)) / 15.0);
            }
        }
        report.maxAbsResidual[key] = worst;
    }
    report.gridWarning = report.fdErrorEstimate > 0.25 * fdWarnTol;
    return report;
}

// ---------------------------------------------------------------------------
// H = E1 - E2 under first-degree homogeneity

HomogeneityReport check_H_equals_E1_minus_E2(const SystemSpec& spec,
                                             std::span<const DoubledState> states, double tol) {
    HomogeneityReport report;
    std::mt19937_64 rng(0x484f4d4fu);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    const int n = spec.n();

    double worstHom = 0.0, worstTime = 0.0;
    for (int trial = 0; trial < 32; ++trial) {
        DoubledState s = DoubledState::zero(n);
        s.t = dist(rng);
        for (int i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            s.q1[k] = dist(rng);
            s.v1[k] = dist(rng);
            s.q2[k] = dist(rng);
            s.v2[k] = dist(rng);
        }
        auto bindings = spec.bindings(s);
        const double k0 = evaluate(spec.potential_k(), bindings);
        for (double lambda : {0.5, 2.0, 3.0}) {
            DoubledState scaled = s;
            for (int i = 0; i < n; ++i) {
                const auto k = static_cast<std::size_t>(i);
                scaled.v1[k] *= lambda;
                scaled.v2[k] *= lambda;
            }
            const double kl = evaluate(spec.potential_k(), spec.bindings(scaled));
            worstHom = std::max(worstHom, std::abs(kl - lambda * k0) / (1.0 + std::abs(k0)));
        }
        Jet2 jet = evaluate_jet(spec.potential_k(), bindings, spec.full_seeds());
        worstTime = std::max(worstTime, std::abs(jet.grad(spec.gt())) / (1.0 + std::abs(k0)));
    }
    report.maxHomogeneityResidual = worstHom;
    report.homogeneous = worstHom <= 1e-9;
    report.timeIndependent = worstTime <= 1e-12;
    if (!report.homogeneous || !report.timeIndependent) return report;

    double worst = 0.0;
    for (const auto& s : states) {
        const double h = [&] {
            Jet2 jet = evaluate_jet(spec.lambda(), spec.bindings(s), spec.velocity_seeds());
            double acc = -jet.value();
            for (int i = 0; i < n; ++i) {
                const auto k = static_cast<std::size_t>(i);
                acc += s.v1[k] * jet.grad(i) + s.v2[k] * jet.grad(n + i);
            }
            return acc;
        }();
        worst = std::max(worst,
                         std::abs(h - (sector_energy(spec, s, 1) - sector_energy(spec, s, 2))));
    }
    report.maxIdentityResidual = worst;
    report.identityHolds = worst <= tol;
    return report;
}

// ---------------------------------------------------------------------------
// Damped-oscillator algebra

double derive_omega_plus_sq(double m, double omega, double c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.5, 1.5);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 8; ++i) {
        const double q1 = dist(rng), p1 = dist(rng), q2 = dist(rng), p2 = dist(rng);
        const double e1 = (p1 - 0.5 * c * q2) * (p1 - 0.5 * c * q2) / (2.0 * m) +
                          0.5 * m * omega * omega * q1 * q1;
        const double e2 = (p2 - 0.5 * c * q1) * (p2 - 0.5 * c * q1) / (2.0 * m) +
                          0.5 * m * omega * omega * q2 * q2;
        const double e = 0.5 * (e1 + e2);
        const double qp = 0.5 * (q1 + q2), qm = 0.5 * (q1 - q2);
        const double pp = 0.5 * (p1 + p2), pm = 0.5 * (p1 - p2);
        const double base = (pp * pp + pm * pm) / (2.0 * m) - (c / (2.0 * m)) * (qp * pp - qm * pm);
        const double h = 0.5 * m * (qp * qp + qm * qm);
        num += (e - base) * h;
        den += h * h;
    }
    return num / den;
}

AlgebraReport verify_oscillator_algebra(double m, double omega, double c, int points, double tol,
                                        std::uint64_t seed) {
    if (!(m > 0.0) || !(omega > 0.0))
        throw ConfigError("oscillator algebra requires m > 0 and omega > 0");
    auto entry = model_damped_oscillator(m, omega, c);
    const SystemSpec& spec = entry.spec;

    AlgebraReport report;
    const double wp2 = derive_omega_plus_sq(m, omega, c, seed);
    report.omegaPlusSq = wp2;
    const double printedA = omega * omega + c * c / (4.0 * m * m);
    const double printedB = omega * omega + c * c / (2.0 * m * m);
    report.flags.push_back("omega_plus^2 derived from E = E+ + E-: " + fmt(wp2) +
                           "; variant omega^2 + c^2/(4m^2) = " + fmt(printedA) +
                           (std::abs(wp2 - printedA) <= 1e-12 ? " (agrees)" : " (disagrees)") +
                           "; variant omega^2 + c^2/(2m^2) = " + fmt(printedB) +
                           (std::abs(wp2 - printedB) <= 1e-12 ? " (agrees)" : " (disagrees)"));

    // Hand-coded observables of the algebra (gradient layout q1, p1, q2, p2).
    Observable jt;
    jt.name = "Jtilde";
    jt.value = [](const PhaseState& ph) {
        return ph.q1[0] * ph.p2[0] - ph.q2[0] * ph.p1[0];
    };
    jt.gradient = [](const PhaseState& ph) {
        return std::vector<double>{ph.p2[0], -ph.q2[0], -ph.p1[0], ph.q1[0]};
    };

    Observable e0p;
    e0p.name = "E0plus";
    e0p.value = [m, wp2](const PhaseState& ph) {
        return (ph.p1[0] * ph.p1[0] + ph.p2[0] * ph.p2[0]) / (4.0 * m) +
               0.25 * m * wp2 * (ph.q1[0] * ph.q1[0] + ph.q2[0] * ph.q2[0]);
    };
    e0p.gradient = [m, wp2](const PhaseState& ph) {
        return std::vector<double>{0.5 * m * wp2 * ph.q1[0], ph.p1[0] / (2.0 * m),
                                   0.5 * m * wp2 * ph.q2[0], ph.p2[0] / (2.0 * m)};
    };

    Observable e0m;
    e0m.name = "E0minus";
    e0m.value = [m, wp2](const PhaseState& ph) {
        return ph.p1[0] * ph.p2[0] / (2.0 * m) + 0.5 * m * wp2 * ph.q1[0] * ph.q2[0];
    };
    e0m.gradient = [m, wp2](const PhaseState& ph) {
        return std::vector<double>{0.5 * m * wp2 * ph.q2[0], ph.p2[0] / (2.0 * m),
                                   0.5 * m * wp2 * ph.q1[0], ph.p1[0] / (2.0 * m)};
    };

    auto epm = [m, wp2, c](double sign) {
        Observable obs;
        obs.name = sign > 0 ? "Eplus" : "Eminus";
        obs.value = [m, wp2, c, sign](const PhaseState& ph) {
            const double q = 0.5 * (ph.q1[0] + sign * ph.q2[0]);
            const double p = 0.5 * (ph.p1[0] + sign * ph.p2[0]);
            return p * p / (2.0 * m) + 0.5 * m * wp2 * q * q - sign * (c / (2.0 * m)) * p * q;
        };
        obs.gradient = [m, wp2, c, sign](const PhaseState& ph) {
            const double q = 0.5 * (ph.q1[0] + sign * ph.q2[0]);
            const double p = 0.5 * (ph.p1[0] + sign * ph.p2[0]);
            const double dq = m * wp2 * q - sign * (c / (2.0 * m)) * p;
            const double dp = p / m - sign * (c / (2.0 * m)) * q;
            return std::vector<double>{0.5 * dq, 0.5 * dp, sign * 0.5 * dq, sign * 0.5 * dp};
        };
        return obs;
    };
    Observable ep = epm(+1.0), em = epm(-1.0);
    Observable h = hamiltonian_observable(spec);

    std::mt19937_64 rng(seed ^ 0x616c6765u);
    std::uniform_real_distribution<double> dist(-1.5, 1.5);
    auto track = [&](const std::string& name, double r) {
        auto& slot = report.relationResiduals[name];
        slot = std::max(slot, std::abs(r));
    };
    for (int iter = 0; iter < points; ++iter) {
        PhaseState ph = PhaseState::zero(1);
        ph.q1[0] = dist(rng);
        ph.p1[0] = dist(rng);
        ph.q2[0] = dist(rng);
        ph.p2[0] = dist(rng);

        track("{H,Jtilde}", poisson_bracket(spec, h, jt, ph));
        track("{Jtilde,Eplus}-2Eplus", poisson_bracket(spec, jt, ep, ph) - 2.0 * ep.value(ph));
        track("{Jtilde,Eminus}+2Eminus", poisson_bracket(spec, jt, em, ph) + 2.0 * em.value(ph));
        track("{Jtilde,E0plus}-2E0minus",
              poisson_bracket(spec, jt, e0p, ph) - 2.0 * e0m.value(ph));
        track("{Jtilde,E0minus}-2E0plus",
              poisson_bracket(spec, jt, e0m, ph) - 2.0 * e0p.value(ph));
        track("{E0plus,E0minus}-wp2/2*Jtilde",
              poisson_bracket(spec, e0p, e0m, ph) - 0.5 * wp2 * jt.value(ph));

        const double qp = 0.5 * (ph.q1[0] + ph.q2[0]), qm = 0.5 * (ph.q1[0] - ph.q2[0]);
        const double pp = 0.5 * (ph.p1[0] + ph.p2[0]), pm = 0.5 * (ph.p1[0] - ph.p2[0]);
        const double printed = -0.25 * (wp2 + c * c / (4.0 * m * m)) * jt.value(ph) +
                               (c / (2.0 * m)) * (-pp * pm / m + m * wp2 * qp * qm);
        track("{Eplus,Eminus}-printed", poisson_bracket(spec, ep, em, ph) - printed);
    }
    for (const auto& [name, value] : report.relationResiduals)
        report.maxResidual = std::max(report.maxResidual, value);
    report.pass = report.maxResidual <= tol;
    return report;
}

} // namespace ncmech
