#include "ncmech/models.hpp"

#include <cmath>

namespace ncmech {

namespace {

struct Lc {
    double qp, vp, qm, vm;
};

Lc lightcone_component(const DoubledState& s, int i) {
    const auto k = static_cast<std::size_t>(i);
    return {(s.q1[k] + s.q2[k]) / 2.0, (s.v1[k] + s.v2[k]) / 2.0, (s.q1[k] - s.q2[k]) / 2.0,
            (s.v1[k] - s.v2[k]) / 2.0};
}

ClosedFormState assemble(int n, double t,
                         const std::function<void(int, Lc&, Lc&)>& fill) {
    // fill(i, pos, acc) writes (qp,vp,qm,vm) into pos and (ap,.,am,.) into acc.
    ClosedFormState out;
    out.state = DoubledState::zero(n);
    out.state.t = t;
    out.a1.assign(static_cast<std::size_t>(n), 0.0);
    out.a2.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        Lc pos{}, acc{};
        fill(i, pos, acc);
        const auto k = static_cast<std::size_t>(i);
        out.state.q1[k] = pos.qp + pos.qm;
        out.state.v1[k] = pos.vp + pos.vm;
        out.state.q2[k] = pos.qp - pos.qm;
        out.state.v2[k] = pos.vp - pos.vm;
        out.a1[k] = acc.qp + acc.qm; // (ap + am)
        out.a2[k] = acc.qp - acc.qm;
    }
    return out;
}

std::string kgen_text(int n, const std::string& coeff) {
    std::string plus, minus;
    for (int i = 0; i < n; ++i) {
        const std::string s = "[" + std::to_string(i) + "]";
        plus += (i ? " + " : "") + ("q1" + s + "*v2" + s);
        minus += " - q2" + s + "*v1" + s;
    }
    return "-(" + coeff + "/2)*(" + plus + minus + ")";
}

std::string kinetic_text(int n, const std::string& mass) {
    std::string sum;
    for (int i = 0; i < n; ++i) {
        const std::string s = "[" + std::to_string(i) + "]";
        sum += (i ? " + " : "") + ("v" + s + "^2");
    }
    return "0.5*" + mass + "*(" + sum + ")";
}

double lncosh(double x) {
    const double a = std::abs(x);
    return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

// Free-particle light-cone solution, shared by several models. sign = -1 for
// the decaying (physical) sector, +1 for the growing one.
void linear_sector(double rate, double sign, double q0, double v0, double tau, double& q,
                   double& v, double& a) {
    if (rate == 0.0) {
        q = q0 + v0 * tau;
        v = v0;
        a = 0.0;
        return;
    }
    const double e = std::exp(sign * rate * tau);
    v = v0 * e;
    a = sign * rate * v;
    q = q0 + v0 * (-std::expm1(sign * rate * tau)) / (-sign * rate);
}

} // namespace

ModelEntry model_free_particle(double m, double c, int n) {
    ModelEntry entry;
    entry.name = "free_particle";
    entry.kind = ModelKind::FreeParticle;
    entry.spec = SystemSpec::make(n, kinetic_text(n, "m"), kgen_text(n, "c"),
                                  {{"m", m}, {"c", c}}, entry.name);
    entry.validity = "any initial data; c = 0 degenerates to free drift";
    entry.hasClosedForm = true;
    entry.closedFormFn = [m, c, n](const DoubledState& ic, double t) {
        const double tau = t - ic.t;
        return assemble(n, t, [&](int i, Lc& pos, Lc& acc) {
            Lc s0 = lightcone_component(ic, i);
            linear_sector(c / m, -1.0, s0.qp, s0.vp, tau, pos.qp, pos.vp, acc.qp);
            linear_sector(c / m, +1.0, s0.qm, s0.vm, tau, pos.qm, pos.vm, acc.qm);
        });
    };
    return entry;
}

ModelEntry model_free_particle_circle(double m, double c, double radius) {
    const double meff = m * radius * radius;
    const double ceff = c * radius * radius;
    ModelEntry entry = model_free_particle(meff, ceff, 1);
    entry.name = "free_particle_circle";
    entry.kind = ModelKind::FreeParticleCircle;
    entry.spec = SystemSpec::make(1, "0.5*m*R^2*v[0]^2", "-(c*R^2/2)*(q1[0]*v2[0] - q2[0]*v1[0])",
                                  {{"m", m}, {"c", c}, {"R", radius}}, entry.name);
    entry.validity = "angle coordinate; identical to the free particle with m R^2, c R^2";
    return entry;
}

ModelEntry model_free_fall(double m, double c, double g) {
    ModelEntry entry;
    entry.name = "free_fall";
    entry.kind = ModelKind::FreeFall;
    entry.spec = SystemSpec::make(1, "0.5*m*v[0]^2 + m*g*q[0]", kgen_text(1, "c"),
                                  {{"m", m}, {"c", c}, {"g", g}}, entry.name);
    entry.validity = "any initial data";
    entry.paperNotes.push_back(
        "free_fall: the commonly printed closed form drifts as -(m g/c) t with decay e^{-c t/m}, "
        "and the printed equation of motion implies decay rate 2c/m; both conflict with the "
        "assembled Lagrangian, whose equation qddot_plus + (c/m) qdot_plus = g gives drift "
        "+(m g/c) t, decay rate c/m, terminal velocity of magnitude m g/c. The engine oracle "
        "uses its own derived constants.");
    entry.hasClosedForm = true;
    entry.closedFormFn = [m, c, g](const DoubledState& ic, double t) {
        const double tau = t - ic.t;
        return assemble(1, t, [&](int, Lc& pos, Lc& acc) {
            Lc s0 = lightcone_component(ic, 0);
            if (c == 0.0) {
                pos.qp = s0.qp + s0.vp * tau + 0.5 * g * tau * tau;
                pos.vp = s0.vp + g * tau;
                acc.qp = g;
            } else {
                const double vterm = m * g / c;
                const double e = std::exp(-c * tau / m);
                pos.vp = vterm + (s0.vp - vterm) * e;
                pos.qp = s0.qp + vterm * tau + (m / c) * (s0.vp - vterm) * (-std::expm1(-c * tau / m));
                acc.qp = -(c / m) * (s0.vp - vterm) * e;
            }
            linear_sector(c / m, +1.0, s0.qm, s0.vm, tau, pos.qm, pos.vm, acc.qm);
        });
    };
    return entry;
}

ModelEntry model_damped_oscillator(double m, double omega, double c) {
    if (!(m > 0.0) || !(omega > 0.0))
        throw ConfigError("damped oscillator requires m > 0 and omega > 0");
    ModelEntry entry;
    entry.name = "damped_oscillator";
    entry.kind = ModelKind::DampedOscillator;
    entry.spec = SystemSpec::make(1, "0.5*m*v[0]^2 - 0.5*m*omega^2*q[0]^2", kgen_text(1, "c"),
                                  {{"m", m}, {"omega", omega}, {"c", c}}, entry.name);
    entry.validity = "any initial data; regime keyed on the sign of omega^2 - c^2/(4m^2)";
    entry.paperNotes.push_back(
        "damped_oscillator: the commonly printed overdamped exponent theta^2 = c^2/(2m^2) - "
        "omega^2 conflicts with the expanding-coordinate reduction, which gives theta^2 = "
        "c^2/(4m^2) - omega^2; the engine oracle uses the derived value.");
    entry.hasClosedForm = true;
    entry.closedFormFn = [m, omega, c](const DoubledState& ic, double t) {
        const double tau = t - ic.t;
        const double disc = omega * omega - c * c / (4.0 * m * m);
        return assemble(1, t, [&](int, Lc& pos, Lc& acc) {
            Lc s0 = lightcone_component(ic, 0);
            auto sector = [&](double theta, double q0, double v0, double& q, double& v,
                              double& a) {
                const double rho0 = q0;
                const double rdot0 = v0 - theta * q0;
                double rho, rdot, rddot;
                if (disc > 0.0) {
                    const double w = std::sqrt(disc);
                    rho = rho0 * std::cos(w * tau) + (rdot0 / w) * std::sin(w * tau);
                    rdot = -rho0 * w * std::sin(w * tau) + rdot0 * std::cos(w * tau);
                    rddot = -disc * rho;
                } else if (disc == 0.0) {
                    rho = rho0 + rdot0 * tau;
                    rdot = rdot0;
                    rddot = 0.0;
                } else {
                    const double w = std::sqrt(-disc);
                    rho = rho0 * std::cosh(w * tau) + (rdot0 / w) * std::sinh(w * tau);
                    rdot = rho0 * w * std::sinh(w * tau) + rdot0 * std::cosh(w * tau);
                    rddot = -disc * rho;
                }
                const double e = std::exp(theta * tau);
                q = e * rho;
                v = e * (theta * rho + rdot);
                a = e * (theta * theta * rho + 2.0 * theta * rdot + rddot);
            };
            sector(-c / (2.0 * m), s0.qp, s0.vp, pos.qp, pos.vp, acc.qp);
            sector(+c / (2.0 * m), s0.qm, s0.vm, pos.qm, pos.vm, acc.qm);
        });
    };
    return entry;
}

ModelEntry model_central_force(double mu, double c, std::string_view potentialInR,
                               std::map<std::string, double> extraParams) {
    ModelEntry entry;
    entry.name = "central_force";
    entry.kind = ModelKind::CentralForce;

    // Substitute r -> sqrt(q[0]^2 + q[1]^2 + q[2]^2) into the potential and
    // print the result back into the single-coordinate grammar.
    auto vTable = std::make_shared<SymbolTable>();
    vTable->declare("r");
    for (const auto& [key, value] : extraParams) vTable->declare(key);
    Expression vExpr = parse(potentialInR, vTable);

    auto single = std::make_shared<SymbolTable>();
    single->declare("t");
    for (int i = 0; i < 3; ++i) single->declare("q[" + std::to_string(i) + "]");
    for (int i = 0; i < 3; ++i) single->declare("v[" + std::to_string(i) + "]");
    single->declare("mu");
    single->declare("c");
    for (const auto& [key, value] : extraParams) single->declare(key);

    ExprBuilder b(single);
    int r2 = b.binary(BinaryOp::Add,
                      b.binary(BinaryOp::Add,
                               b.raw_binary(BinaryOp::Pow, b.symbol(*single->find("q[0]")), b.constant(2.0)),
                               b.raw_binary(BinaryOp::Pow, b.symbol(*single->find("q[1]")), b.constant(2.0))),
                      b.raw_binary(BinaryOp::Pow, b.symbol(*single->find("q[2]")), b.constant(2.0)));
    int rNode = b.raw_unary(UnaryOp::Sqrt, r2);
    std::vector<int> symbolToNode(static_cast<std::size_t>(vTable->size()), -1);
    symbolToNode[static_cast<std::size_t>(*vTable->find("r"))] = rNode;
    for (const auto& [key, value] : extraParams)
        symbolToNode[static_cast<std::size_t>(*vTable->find(key))] = b.symbol(*single->find(key));
    int vNode = b.splice_subst(vExpr, vExpr.root(), symbolToNode);
    Expression vSub = b.take(vNode);

    std::map<std::string, double> params = extraParams;
    params["mu"] = mu;
    params["c"] = c;
    entry.spec = SystemSpec::make(3, kinetic_text(3, "mu") + " - (" + print(vSub) + ")",
                                  kgen_text(3, "c"), params, entry.name);
    entry.validity = "no closed form for generic potentials";
    entry.paperNotes.push_back(
        "central_force: the commonly printed angular-momentum law dJ/dt = -(c/2m) J with "
        "J(t) = J0 e^{-ct/(2 mu)} conflicts with the reduced equation of motion, which gives "
        "d/dt (r x rdot) = r x rddot = -(c/mu) r x rdot, i.e. decay rate c/mu on the physical "
        "sector. The engine uses the derived rate and reports the printed one as a flag.");
    entry.hasClosedForm = false;
    return entry;
}

namespace {

std::string drag_kappa_text(const std::vector<std::string>& coeffs) {
    const std::string vp = "((v1[0] + v2[0])/2)";
    std::string kappa = "(" + coeffs[0];
    for (std::size_t j = 1; j < coeffs.size(); ++j) {
        kappa += " + " + coeffs[j] + "*abs(" + vp + ")";
        if (j > 1) kappa += "^" + std::to_string(j);
    }
    kappa += ")";
    return "-(((q1[0] - q2[0])/2)*" + kappa + "*" + vp + ")";
}

std::string drag_l_text(std::string_view potential, bool withG) {
    std::string l = "0.5*m*v[0]^2";
    if (withG) l += " + m*g*q[0]";
    if (potential != "0" && !potential.empty()) l += " - (" + std::string(potential) + ")";
    return l;
}

} // namespace

ModelEntry model_polynomial_drag(double m, std::vector<double> coeffs, std::string_view potential,
                                 double g) {
    if (coeffs.empty()) throw ConfigError("polynomial drag needs at least one coefficient");
    ModelEntry entry;
    entry.name = "polynomial_drag";
    entry.kind = ModelKind::PolynomialDrag;

    std::map<std::string, double> params{{"m", m}, {"g", g}};
    std::vector<std::string> names;
    for (std::size_t j = 0; j < coeffs.size(); ++j) {
        names.push_back("c" + std::to_string(j + 1));
        params[names.back()] = coeffs[j];
    }
    entry.spec = SystemSpec::make(1, drag_l_text(potential, g != 0.0), drag_kappa_text(names),
                                  params, entry.name);

    const bool freeV = potential == "0" || potential.empty();
    const bool quadratic = coeffs.size() <= 2;
    entry.validity =
        "closed forms only for constant-coefficient quadratic drag with V = 0 and vplus(0) >= 0; "
        "with a constant force additionally qminus(0) = vminus(0) = 0 and vplus(0) below the "
        "terminal velocity";
    entry.paperNotes.push_back(
        "polynomial_drag: the commonly printed constant-force solution carries "
        "sqrt(1 + 8 m g c2/c1); consistency of the terminal velocity requires "
        "sqrt(c1^2 + 8 m g c2)/c1 inside the cosh argument. The engine derives its own "
        "constants from the assembled equation qddot + (c1 + c2|v|) v/(2m) = g.");
    if (!(freeV && quadratic)) {
        entry.hasClosedForm = false;
        return entry;
    }

    const double c1 = coeffs[0];
    const double c2 = coeffs.size() > 1 ? coeffs[1] : 0.0;
    entry.hasClosedForm = true;
    entry.closedFormFn = [m, c1, c2, g](const DoubledState& ic, double t) {
        const double tau = t - ic.t;
        if (tau < 0.0) throw EvalError("drag closed form is valid for t >= t0 only");
        return assemble(1, t, [&](int, Lc& pos, Lc& acc) {
            Lc s0 = lightcone_component(ic, 0);
            if (c2 == 0.0) {
                // Pure linear drag at half the kgen coefficient.
                if (g != 0.0) throw EvalError("no closed form for linear drag with a force");
                linear_sector(c1 / (2.0 * m), -1.0, s0.qp, s0.vp, tau, pos.qp, pos.vp, acc.qp);
                linear_sector(c1 / (2.0 * m), +1.0, s0.qm, s0.vm, tau, pos.qm, pos.vm, acc.qm);
                return;
            }
            if (g == 0.0) {
                if (s0.vp < 0.0)
                    throw EvalError("drag closed form requires vplus(0) >= 0");
                if (c1 > 0.0) {
                    const double e = std::exp(-c1 * tau / (2.0 * m));
                    const double bigA = 1.0 + (c2 / c1) * s0.vp * (1.0 - e);
                    pos.qp = s0.qp + (2.0 * m / c2) * std::log(bigA);
                    pos.vp = s0.vp * e / bigA;
                    acc.qp = -pos.vp * (c1 + c2 * pos.vp) / (2.0 * m);

                    const double beta = (c2 * s0.vp * s0.qm - 2.0 * m * s0.vm) / c1;
                    const double einv = 1.0 / e;
                    const double u = s0.qm + beta * (1.0 - einv);
                    const double aDot = (c2 * s0.vp / (2.0 * m)) * e;
                    const double aDdot = -(c1 / (2.0 * m)) * aDot;
                    const double uDot = -beta * (c1 / (2.0 * m)) * einv;
                    const double uDdot = -beta * (c1 / (2.0 * m)) * (c1 / (2.0 * m)) * einv;
                    pos.qm = bigA * u;
                    pos.vm = aDot * u + bigA * uDot;
                    acc.qm = aDdot * u + 2.0 * aDot * uDot + bigA * uDdot;
                } else {
                    const double bigA = 1.0 + (c2 / (2.0 * m)) * s0.vp * tau;
                    pos.qp = s0.qp + (2.0 * m / c2) * std::log(bigA);
                    pos.vp = s0.vp / bigA;
                    acc.qp = -(c2 / (2.0 * m)) * pos.vp * pos.vp;

                    const double gamma =
                        (c2 / (4.0 * m * m)) * (c2 * s0.vp * s0.qm - 2.0 * m * s0.vm) * s0.vp;
                    pos.qm = s0.qm + s0.vm * tau - gamma * tau * tau;
                    pos.vm = s0.vm - 2.0 * gamma * tau;
                    acc.qm = -2.0 * gamma;
                }
                return;
            }
            // Constant force: tanh branch toward the terminal velocity,
            // physical sector only.
            if (s0.qm != 0.0 || s0.vm != 0.0)
                throw EvalError("constant-force drag closed form requires the trivial sector");
            if (!(g > 0.0)) throw EvalError("constant-force drag closed form requires g > 0");
            const double d = std::sqrt(c1 * c1 + 8.0 * m * g * c2);
            const double vStar = (-c1 + d) / (2.0 * c2);
            if (!(s0.vp >= 0.0 && s0.vp < vStar))
                throw EvalError("constant-force drag closed form requires 0 <= vplus(0) < terminal");
            const double w0 = std::atanh((2.0 * c2 * s0.vp + c1) / d);
            const double w = w0 + (d / (4.0 * m)) * tau;
            pos.vp = (-c1 + d * std::tanh(w)) / (2.0 * c2);
            pos.qp = s0.qp - (c1 / (2.0 * c2)) * tau + (2.0 * m / c2) * (lncosh(w) - lncosh(w0));
            const double sech = 1.0 / std::cosh(w);
            acc.qp = (d * d / (8.0 * m * c2)) * sech * sech;
            pos.qm = pos.vm = acc.qm = 0.0;
        });
    };
    return entry;
}

ModelEntry model_polynomial_drag_expr(double m, const std::vector<std::string>& coeffExprs,
                                      std::map<std::string, double> extraParams,
                                      std::string_view potential, double g) {
    if (coeffExprs.empty()) throw ConfigError("polynomial drag needs at least one coefficient");
    ModelEntry entry;
    entry.name = "polynomial_drag_expr";
    entry.kind = ModelKind::PolynomialDrag;
    std::vector<std::string> wrapped;
    for (const auto& e : coeffExprs) wrapped.push_back("(" + e + ")");
    extraParams["m"] = m;
    extraParams["g"] = g;
    entry.spec = SystemSpec::make(1, drag_l_text(potential, g != 0.0), drag_kappa_text(wrapped),
                                  std::move(extraParams), entry.name);
    entry.validity = "no oracle for position-dependent coefficients";
    entry.hasClosedForm = false;
    return entry;
}

ClosedFormState closed_form(const ModelEntry& entry, const DoubledState& ic, double t) {
    if (!entry.hasClosedForm || !entry.closedFormFn)
        throw ConfigError("model '" + entry.name + "' provides no closed form");
    return entry.closedFormFn(ic, t);
}

std::vector<std::string> model_names() {
    return {"free_particle",        "free_particle_circle", "free_fall",
            "damped_oscillator",    "central_force_kepler", "polynomial_drag"};
}

std::map<std::string, double> model_defaults(const std::string& name) {
    if (name == "free_particle") return {{"m", 1.0}, {"c", 1.0}, {"n", 1.0}};
    if (name == "free_particle_circle") return {{"m", 1.0}, {"c", 1.0}, {"R", 1.0}};
    if (name == "free_fall") return {{"m", 1.0}, {"c", 1.0}, {"g", 1.0}};
    if (name == "damped_oscillator") return {{"m", 1.0}, {"omega", 1.0}, {"c", 1.0}};
    if (name == "central_force_kepler") return {{"mu", 1.0}, {"c", 1.0}, {"k", 1.0}};
    if (name == "polynomial_drag") return {{"m", 1.0}, {"c1", 1.0}, {"c2", 1.0}, {"g", 0.0}};
    throw ConfigError("unknown model '" + name + "'");
}

ModelEntry build_model(const std::string& name, std::map<std::string, double> params) {
    auto merged = model_defaults(name);
    for (const auto& [key, value] : params) {
        if (name == "polynomial_drag" && (key == "c3" || key == "c4")) {
            merged[key] = value;
            continue;
        }
        auto it = merged.find(key);
        if (it == merged.end())
            throw ConfigError("model '" + name + "' has no parameter '" + key + "'");
        it->second = value;
    }
    if (name == "free_particle") {
        const int n = static_cast<int>(merged["n"]);
        if (n < 1 || static_cast<double>(n) != merged["n"])
            throw ConfigError("free_particle parameter n must be a positive integer");
        return model_free_particle(merged["m"], merged["c"], n);
    }
    if (name == "free_particle_circle")
        return model_free_particle_circle(merged["m"], merged["c"], merged["R"]);
    if (name == "free_fall") return model_free_fall(merged["m"], merged["c"], merged["g"]);
    if (name == "damped_oscillator")
        return model_damped_oscillator(merged["m"], merged["omega"], merged["c"]);
    if (name == "central_force_kepler")
        return model_central_force(merged["mu"], merged["c"], "-k/r", {{"k", merged["k"]}});
    if (name == "polynomial_drag") {
        if (merged.count("c4") && !merged.count("c3"))
            throw ConfigError("polynomial_drag: c4 given without c3");
        std::vector<double> coeffs{merged["c1"], merged["c2"]};
        if (merged.count("c3")) coeffs.push_back(merged["c3"]);
        if (merged.count("c4")) coeffs.push_back(merged["c4"]);
        return model_polynomial_drag(merged["m"], std::move(coeffs), "0", merged["g"]);
    }
    throw ConfigError("unknown model '" + name + "'");
}

std::string oscillator_regime(double m, double omega, double c) {
    const double disc = omega * omega - c * c / (4.0 * m * m);
    if (disc > 0.0) return "underdamped";
    if (disc == 0.0) return "critical";
    return "overdamped";
}

double unphysical_growth_rate(const ModelEntry& entry) {
    const auto& p = entry.spec.params();
    switch (entry.kind) {
        case ModelKind::FreeParticle:
        case ModelKind::FreeFall:
        case ModelKind::FreeParticleCircle:
            return p.at("c") / p.at("m");
        case ModelKind::DampedOscillator:
            return p.at("c") / (2.0 * p.at("m"));
        case ModelKind::PolynomialDrag:
            return p.at("c1") / (2.0 * p.at("m"));
        case ModelKind::CentralForce:
            return p.at("c") / p.at("mu");
        case ModelKind::Inline:
            break;
    }
    throw ConfigError("no derived growth rate for this model");
}

double angular_momentum_decay_rate(const ModelEntry& entry) {
    if (entry.kind != ModelKind::CentralForce)
        throw ConfigError("angular-momentum decay rate applies to central-force models only");
    return entry.spec.params().at("c") / entry.spec.params().at("mu");
}

double oscillator_minus_envelope(const ModelEntry& entry, const DoubledState& s) {
    if (entry.kind != ModelKind::DampedOscillator)
        throw ConfigError("qminus envelope applies to the damped oscillator only");
    const double m = entry.spec.param("m");
    const double c = entry.spec.param("c");
    const double omega = entry.spec.param("omega");
    const double disc = omega * omega - c * c / (4.0 * m * m);
    if (!(disc > 0.0)) throw ConfigError("qminus envelope requires the underdamped regime");
    const double wm = std::sqrt(disc);
    const double qm = 0.5 * (s.q1[0] - s.q2[0]);
    const double vm = 0.5 * (s.v1[0] - s.v2[0]);
    const double rdot = (vm - c / (2.0 * m) * qm) / wm;
    return std::sqrt(qm * qm + rdot * rdot);
}

} // namespace ncmech
