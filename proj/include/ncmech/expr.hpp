#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ncmech/errors.hpp"

namespace ncmech {

/// Declared names an expression may reference (coordinates, velocities, time,
/// parameters). Indexed symbols like q1[0] are flattened into plain entries at
/// declaration time; the AST never sees arrays.
class SymbolTable {
public:
    /// Declares a symbol and returns its index. Re-declaring an existing name
    /// returns the original index.
    int declare(const std::string& name);

    std::optional<int> find(std::string_view name) const;
    const std::string& name(int index) const { return names_.at(static_cast<std::size_t>(index)); }
    int size() const { return static_cast<int>(names_.size()); }

private:
    std::vector<std::string> names_;
    std::map<std::string, int, std::less<>> index_;
};

enum class UnaryOp : std::uint8_t { Neg, Sin, Cos, Exp, Log, Sqrt, Abs };
enum class BinaryOp : std::uint8_t { Add, Sub, Mul, Div, Pow };

struct ExprNode {
    enum class Kind : std::uint8_t { Constant, Symbol, Unary, Binary };
    Kind kind = Kind::Constant;
    double value = 0.0; // Constant
    int symbol = -1;    // Symbol
    UnaryOp uop = UnaryOp::Neg;
    BinaryOp bop = BinaryOp::Add;
    int lhs = -1; // child index (Unary/Binary)
    int rhs = -1; // child index (Binary)
};

/// Immutable scalar-expression AST over a declared symbol table. Nodes live in
/// an arena in topological order (children precede parents); the root is the
/// last node. Evaluation is pure, so expressions are safe to share across
/// threads.
class Expression {
public:
    Expression() = default;
    Expression(std::shared_ptr<const SymbolTable> symbols, std::vector<ExprNode> nodes)
        : symbols_(std::move(symbols)), nodes_(std::move(nodes)) {}

    bool empty() const { return nodes_.empty(); }
    const std::vector<ExprNode>& nodes() const { return nodes_; }
    int root() const { return static_cast<int>(nodes_.size()) - 1; }
    const std::shared_ptr<const SymbolTable>& symbols() const { return symbols_; }

    /// True if any node references the given symbol index.
    bool uses_symbol(int symbol) const;
    /// Set of distinct symbol indices referenced by the AST.
    std::vector<int> used_symbols() const;

private:
    std::shared_ptr<const SymbolTable> symbols_;
    std::vector<ExprNode> nodes_;
};

/// Incremental AST builder. The make_* helpers fold constant subtrees as they
/// build (0*x -> 0, c1+c2 -> folded, -(c) -> (-c)), which keeps derivatives
/// free of dead branches so symbol scans stay meaningful.
class ExprBuilder {
public:
    explicit ExprBuilder(std::shared_ptr<const SymbolTable> symbols)
        : symbols_(std::move(symbols)) {}

    int constant(double v);
    int symbol(int index);
    int unary(UnaryOp op, int child);
    int binary(BinaryOp op, int lhs, int rhs);

    /// Non-folding variants; used by the parser so user input keeps its
    /// written shape.
    int raw_unary(UnaryOp op, int child);
    int raw_binary(BinaryOp op, int lhs, int rhs);

    const ExprNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    double constant_value(int node) const { return nodes_[static_cast<std::size_t>(node)].value; }
    bool is_constant(int node, double v) const;
    bool is_any_constant(int node) const {
        return nodes_[static_cast<std::size_t>(node)].kind == ExprNode::Kind::Constant;
    }

    /// Copies a subtree of another expression (same symbol table) into this
    /// builder, applying an optional symbol remapping.
    int splice(const Expression& src, int srcNode, const std::vector<int>* symbolMap = nullptr);

    /// Copies a subtree, replacing symbols by already-built nodes of this
    /// builder. `symbolToNode[sym]` is a node index or -1 to keep the symbol.
    int splice_subst(const Expression& src, int srcNode, const std::vector<int>& symbolToNode);

    Expression take(int rootNode);

private:
    std::shared_ptr<const SymbolTable> symbols_;
    std::vector<ExprNode> nodes_;
};

/// Second-order truncated Taylor value: value, gradient and symmetric Hessian
/// with respect to an ordered seed set of k variables.
class Jet2 {
public:
    Jet2() = default;
    explicit Jet2(int k) : k_(k), grad_(static_cast<std::size_t>(k), 0.0),
                           hess_(static_cast<std::size_t>(k) * static_cast<std::size_t>(k), 0.0) {}

    static Jet2 constant(double v, int k) {
        Jet2 j(k);
        j.value_ = v;
        return j;
    }
    static Jet2 variable(double v, int k, int seedIndex) {
        Jet2 j(k);
        j.value_ = v;
        j.grad_[static_cast<std::size_t>(seedIndex)] = 1.0;
        return j;
    }

    int k() const { return k_; }
    double value() const { return value_; }
    double& value() { return value_; }
    double grad(int i) const { return grad_[static_cast<std::size_t>(i)]; }
    double& grad(int i) { return grad_[static_cast<std::size_t>(i)]; }
    double hess(int i, int j) const {
        return hess_[static_cast<std::size_t>(i) * static_cast<std::size_t>(k_) + static_cast<std::size_t>(j)];
    }
    double& hess(int i, int j) {
        return hess_[static_cast<std::size_t>(i) * static_cast<std::size_t>(k_) + static_cast<std::size_t>(j)];
    }
    std::span<const double> grad_span() const { return grad_; }

private:
    int k_ = 0;
    double value_ = 0.0;
    std::vector<double> grad_;
    std::vector<double> hess_;
};

/// Parses expression text over the declared symbols.
///
/// Grammar:  expr   := term (('+'|'-') term)*
///           term   := factor (('*'|'/') factor)*
///           factor := base ('^' factor)?
///           base   := number | symbol | func '(' expr ')' | '(' expr ')' | '-' base
///           func   in {sin, cos, exp, log, sqrt, abs};  symbol := ident | ident '[' int ']'
/// Precedence: ^  >  unary -  >  * /  >  + -, with ^ right-associative, so
/// "-x^2" reads -(x^2). Numbers are C-style floating literals.
Expression parse(std::string_view text, std::shared_ptr<const SymbolTable> symbols);

/// Unparses an AST; parse(print(e)) is structurally equal to e.
std::string print(const Expression& e);

/// Structural (tree-shape) equality; arena layout does not matter.
bool structurally_equal(const Expression& a, const Expression& b);

/// IEEE double evaluation. `bindings` is indexed by symbol id and must cover
/// every symbol the AST references.
double evaluate(const Expression& e, std::span<const double> bindings);

/// Evaluates with first and second derivatives with respect to the ordered
/// seed list (symbol indices). An empty seed list degenerates to evaluate().
/// |x| at 0 uses the convention d|x|/dx = 0, d2|x|/dx2 = 0.
Jet2 evaluate_jet(const Expression& e, std::span<const double> bindings,
                  std::span<const int> seeds);

/// Exact symbolic partial derivative with respect to one symbol. Constants
/// fold during construction; there is no other simplification.
Expression derivative(const Expression& e, int symbol);

/// Rebuilds the expression over a different symbol table, mapping each old
/// symbol index through `symbolMap` (size = old table size, entries = new
/// indices or -1 for "must not occur").
Expression remap_symbols(const Expression& e, std::shared_ptr<const SymbolTable> newTable,
                         const std::vector<int>& symbolMap);

/// Outcome of the K-interchange checks: samples random points and evaluates
/// K(x1,x2) + K(x2,x1), plus the coincident-point boundary identity
/// dK/dv1 + dK/dv2 = 0 at q1=q2, v1=v2.
struct AntisymmetryReport {
    bool pass = false;
    double maxInterchangeResidual = 0.0;
    double maxBoundaryResidual = 0.0;
    double tol = 0.0;
    int trials = 0;
    /// First failing sample (bindings vector), if any.
    std::vector<double> counterexample;
};

/// `K` must be declared over the doubled layout used by SystemSpec:
/// t, q1[0..n), v1[0..n), q2[0..n), v2[0..n), then parameters. Parameter
/// values are taken from `params` (bindings beyond index 4n are filled from
/// it, by table name).
AntisymmetryReport check_antisymmetry(const Expression& K, int n, int trials, double tol,
                                      std::uint64_t rngSeed,
                                      const std::map<std::string, double>& params = {});

} // namespace ncmech
