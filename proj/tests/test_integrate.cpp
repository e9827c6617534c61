#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ncmech/integrate.hpp"

using namespace ncmech;

namespace {

const char* kKgen = "-(c/2)*(q1[0]*v2[0] - q2[0]*v1[0])";

SystemSpec free_particle(double m = 1.0, double c = 1.0) {
    return SystemSpec::make(1, "0.5*m*v[0]^2", kKgen, {{"m", m}, {"c", c}}, "free_particle");
}
SystemSpec oscillator(double m = 1.0, double w = 1.0, double c = 1.0) {
    return SystemSpec::make(1, "0.5*m*v[0]^2 - 0.5*m*w^2*q[0]^2", kKgen,
                            {{"m", m}, {"w", w}, {"c", c}}, "damped_oscillator");
}

// Underdamped closed form for the physical sector with qminus = 0.
struct OscOracle {
    double m, w, c, A, B, wm;
    OscOracle(double m_, double w_, double c_, double q0, double v0) : m(m_), w(w_), c(c_) {
        wm = std::sqrt(w * w - c * c / (4.0 * m * m));
        A = q0;
        B = (v0 + c / (2.0 * m) * q0) / wm;
    }
    double q(double t) const {
        return std::exp(-c * t / (2.0 * m)) * (A * std::cos(wm * t) + B * std::sin(wm * t));
    }
    double v(double t) const {
        const double e = std::exp(-c * t / (2.0 * m));
        return e * (-c / (2.0 * m) * (A * std::cos(wm * t) + B * std::sin(wm * t)) +
                    wm * (-A * std::sin(wm * t) + B * std::cos(wm * t)));
    }
};

DoubledState physical_state(double q, double v) {
    DoubledState s = DoubledState::zero(1);
    s.q1[0] = s.q2[0] = q;
    s.v1[0] = s.v2[0] = v;
    return s;
}

} // namespace

TEST_CASE("step_rk4: conservative free particle is linear drift") {
    auto spec = SystemSpec::make(1, "0.5*m*v[0]^2", "0", {{"m", 1.0}}, "free");
    DoubledState s = DoubledState::zero(1);
    s.q1[0] = 0.3;
    s.v1[0] = 0.7;
    s.q2[0] = -0.4;
    s.v2[0] = 0.2;
    auto out = step_rk4(spec, s, 0.25);
    CHECK(out.q1[0] == doctest::Approx(0.3 + 0.7 * 0.25).epsilon(1e-12));
    CHECK(out.q2[0] == doctest::Approx(-0.4 + 0.2 * 0.25).epsilon(1e-12));
    CHECK(out.v1[0] == doctest::Approx(0.7).epsilon(1e-14));
}

TEST_CASE("step_rk4: h = 0 is the identity") {
    auto spec = oscillator();
    DoubledState s = physical_state(1.0, 0.5);
    auto out = step_rk4(spec, s, 0.0);
    CHECK(out.q1[0] == s.q1[0]);
    CHECK(out.v1[0] == s.v1[0]);
    CHECK(out.t == s.t);
}

TEST_CASE("step_rk4: local error against the closed form") {
    auto spec = oscillator(1.0, 1.0, 1.0);
    OscOracle oracle(1.0, 1.0, 1.0, 1.0, 0.0);
    auto s = physical_state(1.0, 0.0);
    const double h = 1e-3;
    auto out = step_rk4(spec, s, h);
    CHECK(std::abs(0.5 * (out.q1[0] + out.q2[0]) - oracle.q(h)) <= 1e-13);
}

TEST_CASE("fixed-step RK4 shows 4th-order global convergence") {
    auto spec = oscillator(1.0, 1.0, 1.0);
    OscOracle oracle(1.0, 1.0, 1.0, 1.0, 0.0);
    const double tEnd = 2.0;
    std::vector<double> hs, errs;
    for (double h : {0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125}) {
        auto s = physical_state(1.0, 0.0);
        const long steps = std::lround(tEnd / h);
        for (long i = 0; i < steps; ++i) s = step_rk4(spec, s, h);
        hs.push_back(std::log(h));
        errs.push_back(std::log(std::abs(0.5 * (s.q1[0] + s.q2[0]) - oracle.q(tEnd))));
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
        mx += hs[i];
        my += errs[i];
    }
    mx /= static_cast<double>(hs.size());
    my /= static_cast<double>(hs.size());
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
        sxx += (hs[i] - mx) * (hs[i] - mx);
        sxy += (hs[i] - mx) * (errs[i] - my);
    }
    const double slope = sxy / sxx;
    CHECK(slope == doctest::Approx(4.0).epsilon(0.025));
}

TEST_CASE("integrate_adaptive: damped oscillator matches the closed form to 1e-8") {
    auto spec = oscillator(1.0, 1.0, 0.5);
    OscOracle oracle(1.0, 1.0, 0.5, 1.0, 0.0);
    auto traj = integrate_adaptive(spec, physical_state(1.0, 0.0), 20.0, 1e-10, 1e-12, 0.01);
    REQUIRE(traj.times.size() == 2001);
    double worst = 0.0;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        double qp = 0.5 * (traj.states[i].q1[0] + traj.states[i].q2[0]);
        worst = std::max(worst, std::abs(qp - oracle.q(traj.times[i])));
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("integrate_adaptive: unphysical sector grows like exp(c t / m)") {
    auto spec = free_particle(1.0, 1.0);
    DoubledState s = DoubledState::zero(1);
    // qminus = 0, vminus = 1e-3: v1 = vplus + vminus, v2 = vplus - vminus.
    s.v1[0] = 1.0 + 1e-3;
    s.v2[0] = 1.0 - 1e-3;
    auto traj = integrate_adaptive(spec, s, 6.0, 1e-10, 1e-12, 0.01);
    std::vector<double> ts, vm;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        if (traj.times[i] < 1.0 || traj.times[i] > 5.0) continue;
        ts.push_back(traj.times[i]);
        vm.push_back(0.5 * (traj.states[i].v1[0] - traj.states[i].v2[0]));
    }
    auto fit = growth_rate_fit(ts, vm);
    CHECK(fit.rate == doctest::Approx(1.0).epsilon(0.01));
    CHECK(fit.r2 > 0.9999);
}

TEST_CASE("integrate_adaptive: conservative Kepler orbit holds its energy") {
    std::map<std::string, double> params{{"mu", 1.0}, {"k", 1.0}, {"c", 0.0}};
    auto spec = SystemSpec::make(
        3, "0.5*mu*(v[0]^2 + v[1]^2 + v[2]^2) + k/sqrt(q[0]^2 + q[1]^2 + q[2]^2)",
        "-(c/2)*(q1[0]*v2[0] + q1[1]*v2[1] + q1[2]*v2[2] - q2[0]*v1[0] - q2[1]*v1[1] - q2[2]*v1[2])",
        params, "kepler");
    DoubledState s = DoubledState::zero(3);
    s.q1[0] = s.q2[0] = 1.0;
    s.v1[1] = s.v2[1] = 1.0; // circular orbit, period 2 pi
    const double tEnd = 20.0 * std::numbers::pi;
    auto traj = integrate_adaptive(spec, s, tEnd, 1e-11, 1e-13, 0.05);
    auto energy = [](const DoubledState& st) {
        double v2 = 0.0, r2 = 0.0;
        for (int i = 0; i < 3; ++i) {
            v2 += st.v1[static_cast<std::size_t>(i)] * st.v1[static_cast<std::size_t>(i)];
            r2 += st.q1[static_cast<std::size_t>(i)] * st.q1[static_cast<std::size_t>(i)];
        }
        return 0.5 * v2 - 1.0 / std::sqrt(r2);
    };
    const double e0 = energy(traj.states.front());
    double drift = 0.0;
    for (const auto& st : traj.states) drift = std::max(drift, std::abs(energy(st) - e0));
    CHECK(drift <= 1e-8);
}

TEST_CASE("integrate_adaptive: identical inputs give bit-identical trajectories") {
    auto spec = oscillator(1.0, 1.0, 0.7);
    DoubledState s = DoubledState::zero(1);
    s.q1[0] = 1.0;
    s.q2[0] = 0.25;
    s.v2[0] = -0.5;
    auto t1 = integrate_adaptive(spec, s, 10.0, 1e-9, 1e-11, 0.02);
    auto t2 = integrate_adaptive(spec, s, 10.0, 1e-9, 1e-11, 0.02);
    REQUIRE(t1.times.size() == t2.times.size());
    for (std::size_t i = 0; i < t1.times.size(); ++i) {
        CHECK(t1.states[i].q1[0] == t2.states[i].q1[0]);
        CHECK(t1.states[i].v1[0] == t2.states[i].v1[0]);
        CHECK(t1.states[i].q2[0] == t2.states[i].q2[0]);
        CHECK(t1.states[i].v2[0] == t2.states[i].v2[0]);
    }
}

TEST_CASE("integrate_adaptive: time symmetry in the conservative limit") {
    // Forward integration, velocity flip, forward again, flip back: the
    // conservative doubled system returns to its start.
    auto spec = SystemSpec::make(1, "0.5*m*v[0]^2 - 0.5*m*w^2*q[0]^2", "0",
                                 {{"m", 1.0}, {"w", 1.1}}, "copies");
    DoubledState s0 = DoubledState::zero(1);
    s0.q1[0] = 0.8;
    s0.v1[0] = -0.3;
    s0.q2[0] = -0.2;
    s0.v2[0] = 0.6;
    auto fwd = integrate_adaptive(spec, s0, 5.0, 1e-11, 1e-13, 0.05);
    DoubledState mid = fwd.states.back();
    mid.t = 0.0;
    mid.v1[0] = -mid.v1[0];
    mid.v2[0] = -mid.v2[0];
    auto back = integrate_adaptive(spec, mid, 5.0, 1e-11, 1e-13, 0.05);
    const auto& end = back.states.back();
    CHECK(std::abs(end.q1[0] - s0.q1[0]) <= 1e-8);
    CHECK(std::abs(-end.v1[0] - s0.v1[0]) <= 1e-8);
    CHECK(std::abs(end.q2[0] - s0.q2[0]) <= 1e-8);
    CHECK(std::abs(-end.v2[0] - s0.v2[0]) <= 1e-8);
}

TEST_CASE("integrate_adaptive: trivial sector stays exactly zero") {
    auto spec = oscillator(1.0, 1.0, 1.0);
    auto traj = integrate_adaptive(spec, physical_state(1.0, 0.0), 20.0, 1e-10, 1e-12, 0.01);
    for (const auto& st : traj.states) {
        CHECK(st.q1[0] == st.q2[0]);
        CHECK(st.v1[0] == st.v2[0]);
    }
}

TEST_CASE("integrate_adaptive rejects bad arguments") {
    auto spec = oscillator();
    auto s = physical_state(1.0, 0.0);
    CHECK_THROWS_AS(integrate_adaptive(spec, s, -1.0, 1e-10, 1e-12, 0.01), ConfigError);
    CHECK_THROWS_AS(integrate_adaptive(spec, s, 1.0, 1e-20, 1e-12, 0.01), ConfigError);
    CHECK_THROWS_AS(integrate_adaptive(spec, s, 1.0, 0.5, 1e-12, 0.01), ConfigError);
}

TEST_CASE("growth_rate_fit: exact exponential and zero-crossing guard") {
    std::vector<double> ts, xs;
    for (int i = 0; i <= 100; ++i) {
        double t = 0.05 * i;
        ts.push_back(t);
        xs.push_back(std::exp(2.0 * t));
    }
    auto fit = growth_rate_fit(ts, xs);
    CHECK(fit.rate == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> bad = xs;
    bad[50] = -1.0;
    CHECK_THROWS_AS(growth_rate_fit(ts, bad), EvalError);
    bad[50] = 0.0;
    CHECK_THROWS_AS(growth_rate_fit(ts, bad), EvalError);
}
