#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "ncmech/expr.hpp"

using namespace ncmech;

namespace {

std::shared_ptr<SymbolTable> doubled_table_n1() {
    auto t = std::make_shared<SymbolTable>();
    t->declare("t");
    t->declare("q1[0]");
    t->declare("v1[0]");
    t->declare("q2[0]");
    t->declare("v2[0]");
    t->declare("m");
    t->declare("w");
    t->declare("c");
    t->declare("c1");
    t->declare("c2");
    return t;
}

// Central-difference oracle for the jet gradient (h = 1e-6). Second
// derivatives use a wider step: second differences at 1e-6 would sit at the
// roundoff floor.
std::vector<double> fd_gradient(const Expression& e, std::vector<double> x,
                                const std::vector<int>& seeds, double h = 1e-6) {
    std::vector<double> g;
    for (int s : seeds) {
        auto xp = x, xm = x;
        xp[static_cast<std::size_t>(s)] += h;
        xm[static_cast<std::size_t>(s)] -= h;
        g.push_back((evaluate(e, xp) - evaluate(e, xm)) / (2.0 * h));
    }
    return g;
}

double fd_hessian_entry(const Expression& e, std::vector<double> x, int si, int sj,
                        double h = 1e-4) {
    if (si == sj) {
        auto xp = x, xm = x;
        xp[static_cast<std::size_t>(si)] += h;
        xm[static_cast<std::size_t>(si)] -= h;
        return (evaluate(e, xp) - 2.0 * evaluate(e, x) + evaluate(e, xm)) / (h * h);
    }
    auto xpp = x, xpm = x, xmp = x, xmm = x;
    xpp[static_cast<std::size_t>(si)] += h;
    xpp[static_cast<std::size_t>(sj)] += h;
    xpm[static_cast<std::size_t>(si)] += h;
    xpm[static_cast<std::size_t>(sj)] -= h;
    xmp[static_cast<std::size_t>(si)] -= h;
    xmp[static_cast<std::size_t>(sj)] += h;
    xmm[static_cast<std::size_t>(si)] -= h;
    xmm[static_cast<std::size_t>(sj)] -= h;
    return (evaluate(e, xpp) - evaluate(e, xpm) - evaluate(e, xmp) + evaluate(e, xmm)) /
           (4.0 * h * h);
}

const char* kKgen = "-(c/2)*(q1[0]*v2[0] - q2[0]*v1[0])";

} // namespace

TEST_CASE("parse: grammar basics and symbol collection") {
    auto tab = doubled_table_n1();
    auto e = parse("0.5*m*v1[0]^2 - 0.5*m*w^2*q1[0]^2", tab);
    auto syms = e.used_symbols();
    REQUIRE(syms.size() == 4);
    std::vector<std::string> names;
    for (int s : syms) names.push_back(tab->name(s));
    CHECK(names == std::vector<std::string>{"q1[0]", "v1[0]", "m", "w"});

    CHECK_NOTHROW(parse(kKgen, tab));
}

TEST_CASE("parse: syntax error carries the offset") {
    auto tab = doubled_table_n1();
    try {
        parse("q1[0] +* 2", tab);
        FAIL("expected ParseError");
    } catch (const ParseError& err) {
        CHECK(err.offset() == 7);
    }
}

TEST_CASE("parse: unknown symbol is named") {
    auto tab = doubled_table_n1();
    try {
        parse("m*qq", tab);
        FAIL("expected ParseError");
    } catch (const ParseError& err) {
        CHECK(std::string(err.what()).find("qq") != std::string::npos);
    }
}

TEST_CASE("parse: precedence and associativity") {
    auto tab = doubled_table_n1();
    std::vector<double> b(static_cast<std::size_t>(tab->size()), 0.0);
    b[static_cast<std::size_t>(*tab->find("q1[0]"))] = 3.0;

    CHECK(evaluate(parse("-q1[0]^2", tab), b) == doctest::Approx(-9.0)); // ^ above unary -
    CHECK(evaluate(parse("2^3^2", tab), b) == doctest::Approx(512.0));   // right-assoc
    CHECK(evaluate(parse("2 - 3 - 4", tab), b) == doctest::Approx(-5.0));
    CHECK(evaluate(parse("2*3 + 4", tab), b) == doctest::Approx(10.0));
    CHECK(evaluate(parse("2/4/2", tab), b) == doctest::Approx(0.25));
}

TEST_CASE("evaluate: examples and domain errors") {
    auto tab = doubled_table_n1();
    std::vector<double> b(static_cast<std::size_t>(tab->size()), 0.0);
    CHECK(evaluate(parse("3", tab), b) == 3.0);

    b[static_cast<std::size_t>(*tab->find("c"))] = 1.0;
    b[static_cast<std::size_t>(*tab->find("q1[0]"))] = 1.0;
    b[static_cast<std::size_t>(*tab->find("v2[0]"))] = 2.0;
    b[static_cast<std::size_t>(*tab->find("q2[0]"))] = 3.0;
    b[static_cast<std::size_t>(*tab->find("v1[0]"))] = 4.0;
    CHECK(evaluate(parse(kKgen, tab), b) == doctest::Approx(5.0));

    b[static_cast<std::size_t>(*tab->find("q1[0]"))] = -1.0;
    CHECK_THROWS_AS(evaluate(parse("log(q1[0])", tab), b), EvalError);
    CHECK_THROWS_AS(evaluate(parse("sqrt(q1[0])", tab), b), EvalError);
    CHECK_THROWS_AS(evaluate(parse("m/t", tab), b), EvalError); // t = 0
    CHECK_THROWS_AS(evaluate(parse("q1[0]^0.5", tab), b), EvalError);
}

TEST_CASE("evaluate: unbound symbol") {
    auto tab = doubled_table_n1();
    std::vector<double> tooShort(2, 0.0);
    CHECK_THROWS_AS(evaluate(parse("m", tab), tooShort), EvalError);
}

TEST_CASE("evaluate_jet: quadratic example") {
    auto tab = doubled_table_n1();
    std::vector<double> b(static_cast<std::size_t>(tab->size()), 0.0);
    int q1 = *tab->find("q1[0]");
    b[static_cast<std::size_t>(q1)] = 3.0;
    std::vector<int> seeds{q1};
    Jet2 j = evaluate_jet(parse("q1[0]^2", tab), b, seeds);
    CHECK(j.value() == doctest::Approx(9.0));
    CHECK(j.grad(0) == doctest::Approx(6.0));
    CHECK(j.hess(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("evaluate_jet: K gradient in velocities") {
    auto tab = doubled_table_n1();
    std::vector<double> b(static_cast<std::size_t>(tab->size()), 0.0);
    b[static_cast<std::size_t>(*tab->find("c"))] = 1.0;
    b[static_cast<std::size_t>(*tab->find("q1[0]"))] = 1.0;
    b[static_cast<std::size_t>(*tab->find("v2[0]"))] = 2.0;
    b[static_cast<std::size_t>(*tab->find("q2[0]"))] = 3.0;
    b[static_cast<std::size_t>(*tab->find("v1[0]"))] = 4.0;
    std::vector<int> seeds{*tab->find("v1[0]"), *tab->find("v2[0]")};
    Jet2 j = evaluate_jet(parse(kKgen, tab), b, seeds);
    CHECK(j.grad(0) == doctest::Approx(1.5));
    CHECK(j.grad(1) == doctest::Approx(-0.5));
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 2; ++k) CHECK(j.hess(i, k) == doctest::Approx(0.0));
}

TEST_CASE("evaluate_jet: abs convention") {
    auto tab = doubled_table_n1();
    std::vector<double> b(static_cast<std::size_t>(tab->size()), 0.0);
    int v1 = *tab->find("v1[0]");
    std::vector<int> seeds{v1};
    auto e = parse("abs(v1[0])*v1[0]", tab);

    b[static_cast<std::size_t>(v1)] = -2.0;
    Jet2 j = evaluate_jet(e, b, seeds);
    CHECK(j.value() == doctest::Approx(-4.0));
    CHECK(j.grad(0) == doctest::Approx(4.0));

    // At 0: derivative of |x| is taken as 0, so the jet stays total.
    b[static_cast<std::size_t>(v1)] = 0.0;
    Jet2 j0 = evaluate_jet(parse("abs(v1[0])", tab), b, seeds);
    CHECK(j0.value() == 0.0);
    CHECK(j0.grad(0) == 0.0);
    CHECK(j0.hess(0, 0) == 0.0);
}

TEST_CASE("evaluate_jet: empty seed set equals evaluate") {
    auto tab = doubled_table_n1();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    auto e = parse("sin(q1[0])*exp(v1[0]/4) + q2[0]^3 - v2[0]*q1[0]", tab);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> b(static_cast<std::size_t>(tab->size()), 0.0);
        for (auto& x : b) x = dist(rng);
        Jet2 j = evaluate_jet(e, b, {});
        CHECK(j.value() == evaluate(e, b));
    }
}

TEST_CASE("jets match finite differences on the expression corpus") {
    auto tab = doubled_table_n1();
    // Representative L/K/observable shapes, all safe on (0.5, 2.5).
    std::vector<Expression> corpus;
    corpus.push_back(parse("0.5*m*v1[0]^2 - 0.5*m*w^2*q1[0]^2", tab));
    corpus.push_back(parse(kKgen, tab));
    corpus.push_back(parse("-((q1[0] - q2[0])/2)*(c1 + c2*abs((v1[0] + v2[0])/2))*((v1[0] + v2[0])/2)", tab));
    corpus.push_back(parse("sqrt(q1[0]^2 + q2[0]^2 + 0.5)", tab));
    corpus.push_back(parse("log(q1[0] + 3)*exp(-v1[0]/2)", tab));
    corpus.push_back(parse("sin(w*t)*cos(q1[0])/(q2[0] + 4)", tab));
    corpus.push_back(parse("q1[0]^3/(1 + v1[0]^2) + abs(v2[0])*v2[0]", tab));
    corpus.push_back(parse("(q1[0] + q2[0])^2*(v1[0] - v2[0]) - m*q1[0]*v2[0]", tab));

    std::vector<int> seeds;
    for (const char* s : {"q1[0]", "v1[0]", "q2[0]", "v2[0]", "t"}) seeds.push_back(*tab->find(s));

    std::mt19937_64 rng(2026);
    std::uniform_real_distribution<double> dist(0.5, 2.5);

    double worstGrad = 0.0, worstHess = 0.0;
    for (int iter = 0; iter < 1000; ++iter) {
        const auto& e = corpus[static_cast<std::size_t>(iter) % corpus.size()];
        std::vector<double> b(static_cast<std::size_t>(tab->size()), 1.0);
        for (auto& x : b) x = dist(rng);
        Jet2 j = evaluate_jet(e, b, seeds);
        auto g = fd_gradient(e, b, seeds);
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            double err = std::abs(j.grad(static_cast<int>(i)) - g[i]) /
                         (1.0 + std::abs(j.grad(static_cast<int>(i))));
            worstGrad = std::max(worstGrad, err);
        }
        // Spot-check a couple of Hessian entries per sample to keep runtime low.
        for (int rep = 0; rep < 2; ++rep) {
            int i = static_cast<int>(rng() % seeds.size());
            int k = static_cast<int>(rng() % seeds.size());
            double fd = fd_hessian_entry(e, b, seeds[static_cast<std::size_t>(i)],
                                         seeds[static_cast<std::size_t>(k)]);
            double err = std::abs(j.hess(i, k) - fd) / (1.0 + std::abs(j.hess(i, k)));
            worstHess = std::max(worstHess, err);
        }
        // Hessian symmetry to machine precision.
        for (std::size_t i = 0; i < seeds.size(); ++i)
            for (std::size_t k = 0; k < seeds.size(); ++k)
                CHECK(j.hess(static_cast<int>(i), static_cast<int>(k)) ==
                      j.hess(static_cast<int>(k), static_cast<int>(i)));
    }
    CHECK(worstGrad <= 1e-6);
    CHECK(worstHess <= 1e-4);
}

TEST_CASE("print/parse round trip is the identity on ASTs") {
    auto tab = doubled_table_n1();

    SUBCASE("catalog strings") {
        for (const char* s :
             {"0.5*m*v1[0]^2 - 0.5*m*w^2*q1[0]^2", kKgen,
              "-((q1[0] - q2[0])/2)*(c1 + c2*abs((v1[0] + v2[0])/2))*((v1[0] + v2[0])/2)",
              "sqrt(q1[0]^2 + q2[0]^2)", "-(c/2)*(q1[0]*v2[0] - q2[0]*v1[0])",
              "q1[0] - -3", "2^-3", "-q1[0]^2", "(-q1[0])^2", "q1[0]/(v1[0]/v2[0])"}) {
            auto e = parse(s, tab);
            auto round = parse(print(e), tab);
            CHECK_MESSAGE(structurally_equal(e, round), "failed on: ", s, " printed as ", print(e));
        }
    }

    SUBCASE("random ASTs") {
        std::mt19937_64 rng(99);
        std::uniform_real_distribution<double> cdist(-4.0, 4.0);
        std::vector<int> symbols;
        for (const char* s : {"t", "q1[0]", "v1[0]", "q2[0]", "v2[0]", "m", "c"})
            symbols.push_back(*tab->find(s));

        for (int iter = 0; iter < 400; ++iter) {
            ExprBuilder b(tab);
            // Random bottom-up tree.
            std::vector<int> pool;
            for (int leaf = 0; leaf < 6; ++leaf) {
                if (rng() % 2 == 0)
                    pool.push_back(b.constant(cdist(rng)));
                else
                    pool.push_back(b.symbol(symbols[rng() % symbols.size()]));
            }
            while (pool.size() > 1) {
                std::size_t i = rng() % pool.size();
                int a = pool[i];
                pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(i));
                if (rng() % 4 == 0) {
                    UnaryOp ops[] = {UnaryOp::Neg, UnaryOp::Sin, UnaryOp::Cos, UnaryOp::Exp,
                                     UnaryOp::Abs};
                    pool.push_back(b.unary(ops[rng() % 5], a));
                } else {
                    std::size_t k = rng() % pool.size();
                    int c = pool[k];
                    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
                    BinaryOp ops[] = {BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div,
                                      BinaryOp::Pow};
                    pool.push_back(b.binary(ops[rng() % 5], a, c));
                }
            }
            Expression e = b.take(pool[0]);
            auto round = parse(print(e), tab);
            CHECK_MESSAGE(structurally_equal(e, round), "failed on printed form: ", print(e));
        }
    }
}

TEST_CASE("symbolic derivative matches jet gradient") {
    auto tab = doubled_table_n1();
    std::vector<const char*> corpus = {
        "0.5*m*v1[0]^2 - 0.5*m*w^2*q1[0]^2",
        kKgen,
        "sin(q1[0])*exp(v1[0]/3) + sqrt(q2[0] + 3)",
        "q1[0]^3/(1 + v1[0]^2)",
    };
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(0.25, 1.75);
    for (const char* s : corpus) {
        auto e = parse(s, tab);
        for (int sym : e.used_symbols()) {
            auto d = derivative(e, sym);
            for (int iter = 0; iter < 20; ++iter) {
                std::vector<double> b(static_cast<std::size_t>(tab->size()), 1.0);
                for (auto& x : b) x = dist(rng);
                std::vector<int> seeds{sym};
                Jet2 j = evaluate_jet(e, b, seeds);
                CHECK(evaluate(d, b) == doctest::Approx(j.grad(0)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("derivative folds dead branches") {
    auto tab = doubled_table_n1();
    auto e = parse("2*m*v1[0]*v2[0] - q1[0]*(c1 + c2*abs(v2[0]))*v2[0]", tab);
    // d/d v1[0] = 2*m*v2[0]: no q1/v1 symbols may survive.
    auto d = derivative(e, *tab->find("v1[0]"));
    CHECK_FALSE(d.uses_symbol(*tab->find("q1[0]")));
    CHECK_FALSE(d.uses_symbol(*tab->find("v1[0]")));
    CHECK(d.uses_symbol(*tab->find("v2[0]")));
}

TEST_CASE("check_antisymmetry: pass, fail, and nonlinear drag") {
    auto tab = doubled_table_n1();

    auto kgen = parse(kKgen, tab);
    auto rep = check_antisymmetry(kgen, 1, 64, 1e-9, 42, {{"c", 1.0}});
    CHECK(rep.pass);
    CHECK(rep.maxInterchangeResidual <= 1e-12);
    CHECK(rep.maxBoundaryResidual <= 1e-12);

    auto sym = parse("q1[0]*q2[0]", tab);
    auto bad = check_antisymmetry(sym, 1, 64, 1e-9, 42, {});
    CHECK_FALSE(bad.pass);
    CHECK_FALSE(bad.counterexample.empty());

    // -q_minus*(c1 + c2*|v_plus|)*v_plus expanded in (1,2) variables.
    auto drag = parse(
        "-((q1[0] - q2[0])/2)*(c1 + c2*abs((v1[0] + v2[0])/2))*((v1[0] + v2[0])/2)", tab);
    auto rep2 = check_antisymmetry(drag, 1, 64, 1e-9, 43, {{"c1", 1.0}, {"c2", 1.0}});
    CHECK(rep2.pass);
}
