#include "ncmech/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>

namespace ncmech {

// ---------------------------------------------------------------------------
// SymbolTable

int SymbolTable::declare(const std::string& name) {
    auto it = index_.find(name);
    if (it != index_.end()) return it->second;
    int id = static_cast<int>(names_.size());
    names_.push_back(name);
    index_.emplace(name, id);
    return id;
}

std::optional<int> SymbolTable::find(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------------------
// Expression

bool Expression::uses_symbol(int symbol) const {
    for (const auto& nd : nodes_)
        if (nd.kind == ExprNode::Kind::Symbol && nd.symbol == symbol) return true;
    return false;
}

std::vector<int> Expression::used_symbols() const {
    std::vector<int> out;
    for (const auto& nd : nodes_)
        if (nd.kind == ExprNode::Kind::Symbol) out.push_back(nd.symbol);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// ExprBuilder

int ExprBuilder::constant(double v) {
    nodes_.push_back(ExprNode{ExprNode::Kind::Constant, v, -1, UnaryOp::Neg, BinaryOp::Add, -1, -1});
    return static_cast<int>(nodes_.size()) - 1;
}

int ExprBuilder::symbol(int index) {
    ExprNode nd;
    nd.kind = ExprNode::Kind::Symbol;
    nd.symbol = index;
    nodes_.push_back(nd);
    return static_cast<int>(nodes_.size()) - 1;
}

bool ExprBuilder::is_constant(int node, double v) const {
    const auto& nd = nodes_[static_cast<std::size_t>(node)];
    return nd.kind == ExprNode::Kind::Constant && nd.value == v;
}

int ExprBuilder::unary(UnaryOp op, int child) {
    const auto& c = nodes_[static_cast<std::size_t>(child)];
    if (c.kind == ExprNode::Kind::Constant) {
        double v = c.value;
        double folded = 0.0;
        switch (op) {
            case UnaryOp::Neg: folded = -v; break;
            case UnaryOp::Sin: folded = std::sin(v); break;
            case UnaryOp::Cos: folded = std::cos(v); break;
            case UnaryOp::Exp: folded = std::exp(v); break;
            case UnaryOp::Log: folded = std::log(v); break;
            case UnaryOp::Sqrt: folded = std::sqrt(v); break;
            case UnaryOp::Abs: folded = std::abs(v); break;
        }
        if (std::isfinite(folded)) return constant(folded);
    }
    if (op == UnaryOp::Neg && c.kind == ExprNode::Kind::Unary && c.uop == UnaryOp::Neg)
        return c.lhs;
    ExprNode nd;
    nd.kind = ExprNode::Kind::Unary;
    nd.uop = op;
    nd.lhs = child;
    nodes_.push_back(nd);
    return static_cast<int>(nodes_.size()) - 1;
}

int ExprBuilder::binary(BinaryOp op, int lhs, int rhs) {
    const auto& l = nodes_[static_cast<std::size_t>(lhs)];
    const auto& r = nodes_[static_cast<std::size_t>(rhs)];
    const bool lc = l.kind == ExprNode::Kind::Constant;
    const bool rc = r.kind == ExprNode::Kind::Constant;
    if (lc && rc) {
        double folded = 0.0;
        switch (op) {
            case BinaryOp::Add: folded = l.value + r.value; break;
            case BinaryOp::Sub: folded = l.value - r.value; break;
            case BinaryOp::Mul: folded = l.value * r.value; break;
            case BinaryOp::Div: folded = l.value / r.value; break;
            case BinaryOp::Pow: folded = std::pow(l.value, r.value); break;
        }
        if (std::isfinite(folded)) return constant(folded);
    }
    switch (op) {
        case BinaryOp::Add:
            if (lc && l.value == 0.0) return rhs;
            if (rc && r.value == 0.0) return lhs;
            break;
        case BinaryOp::Sub:
            if (rc && r.value == 0.0) return lhs;
            if (lc && l.value == 0.0) return unary(UnaryOp::Neg, rhs);
            break;
        case BinaryOp::Mul:
            if ((lc && l.value == 0.0) || (rc && r.value == 0.0)) return constant(0.0);
            if (lc && l.value == 1.0) return rhs;
            if (rc && r.value == 1.0) return lhs;
            break;
        case BinaryOp::Div:
            if (lc && l.value == 0.0 && !(rc && r.value == 0.0)) return constant(0.0);
            if (rc && r.value == 1.0) return lhs;
            break;
        case BinaryOp::Pow:
            if (rc && r.value == 1.0) return lhs;
            if (rc && r.value == 0.0) return constant(1.0);
            if (lc && l.value == 1.0) return constant(1.0);
            break;
    }
    ExprNode nd;
    nd.kind = ExprNode::Kind::Binary;
    nd.bop = op;
    nd.lhs = lhs;
    nd.rhs = rhs;
    nodes_.push_back(nd);
    return static_cast<int>(nodes_.size()) - 1;
}

int ExprBuilder::raw_unary(UnaryOp op, int child) {
    ExprNode nd;
    nd.kind = ExprNode::Kind::Unary;
    nd.uop = op;
    nd.lhs = child;
    nodes_.push_back(nd);
    return static_cast<int>(nodes_.size()) - 1;
}

int ExprBuilder::raw_binary(BinaryOp op, int lhs, int rhs) {
    ExprNode nd;
    nd.kind = ExprNode::Kind::Binary;
    nd.bop = op;
    nd.lhs = lhs;
    nd.rhs = rhs;
    nodes_.push_back(nd);
    return static_cast<int>(nodes_.size()) - 1;
}

int ExprBuilder::splice(const Expression& src, int srcNode, const std::vector<int>* symbolMap) {
    const auto& sn = src.nodes();
    std::vector<int> memo(sn.size(), -1);
    // Arena order is topological, so a single forward pass over the reachable
    // prefix suffices.
    std::vector<char> needed(sn.size(), 0);
    needed[static_cast<std::size_t>(srcNode)] = 1;
    for (int i = srcNode; i >= 0; --i) {
        if (!needed[static_cast<std::size_t>(i)]) continue;
        const auto& nd = sn[static_cast<std::size_t>(i)];
        if (nd.lhs >= 0) needed[static_cast<std::size_t>(nd.lhs)] = 1;
        if (nd.rhs >= 0) needed[static_cast<std::size_t>(nd.rhs)] = 1;
    }
    for (int i = 0; i <= srcNode; ++i) {
        if (!needed[static_cast<std::size_t>(i)]) continue;
        const auto& nd = sn[static_cast<std::size_t>(i)];
        switch (nd.kind) {
            case ExprNode::Kind::Constant:
                memo[static_cast<std::size_t>(i)] = constant(nd.value);
                break;
            case ExprNode::Kind::Symbol: {
                int s = nd.symbol;
                if (symbolMap) {
                    s = (*symbolMap)[static_cast<std::size_t>(nd.symbol)];
                    if (s < 0)
                        throw EvalError("symbol '" + src.symbols()->name(nd.symbol) +
                                        "' has no image under the requested remapping");
                }
                memo[static_cast<std::size_t>(i)] = symbol(s);
                break;
            }
            case ExprNode::Kind::Unary: {
                ExprNode out;
                out.kind = ExprNode::Kind::Unary;
                out.uop = nd.uop;
                out.lhs = memo[static_cast<std::size_t>(nd.lhs)];
                nodes_.push_back(out);
                memo[static_cast<std::size_t>(i)] = static_cast<int>(nodes_.size()) - 1;
                break;
            }
            case ExprNode::Kind::Binary: {
                ExprNode out;
                out.kind = ExprNode::Kind::Binary;
                out.bop = nd.bop;
                out.lhs = memo[static_cast<std::size_t>(nd.lhs)];
                out.rhs = memo[static_cast<std::size_t>(nd.rhs)];
                nodes_.push_back(out);
                memo[static_cast<std::size_t>(i)] = static_cast<int>(nodes_.size()) - 1;
                break;
            }
        }
    }
    return memo[static_cast<std::size_t>(srcNode)];
}

int ExprBuilder::splice_subst(const Expression& src, int srcNode,
                              const std::vector<int>& symbolToNode) {
    const auto& sn = src.nodes();
    std::vector<int> memo(sn.size(), -1);
    std::vector<char> needed(sn.size(), 0);
    needed[static_cast<std::size_t>(srcNode)] = 1;
    for (int i = srcNode; i >= 0; --i) {
        if (!needed[static_cast<std::size_t>(i)]) continue;
        const auto& nd = sn[static_cast<std::size_t>(i)];
        if (nd.lhs >= 0) needed[static_cast<std::size_t>(nd.lhs)] = 1;
        if (nd.rhs >= 0) needed[static_cast<std::size_t>(nd.rhs)] = 1;
    }
    for (int i = 0; i <= srcNode; ++i) {
        if (!needed[static_cast<std::size_t>(i)]) continue;
        const auto& nd = sn[static_cast<std::size_t>(i)];
        switch (nd.kind) {
            case ExprNode::Kind::Constant:
                memo[static_cast<std::size_t>(i)] = constant(nd.value);
                break;
            case ExprNode::Kind::Symbol: {
                const int mapped = symbolToNode[static_cast<std::size_t>(nd.symbol)];
                memo[static_cast<std::size_t>(i)] = mapped >= 0 ? mapped : symbol(nd.symbol);
                break;
            }
            case ExprNode::Kind::Unary:
                memo[static_cast<std::size_t>(i)] =
                    raw_unary(nd.uop, memo[static_cast<std::size_t>(nd.lhs)]);
                break;
            case ExprNode::Kind::Binary:
                memo[static_cast<std::size_t>(i)] =
                    raw_binary(nd.bop, memo[static_cast<std::size_t>(nd.lhs)],
                               memo[static_cast<std::size_t>(nd.rhs)]);
                break;
        }
    }
    return memo[static_cast<std::size_t>(srcNode)];
}

Expression ExprBuilder::take(int rootNode) {
    // Compact: keep only nodes reachable from the root, preserving order.
    std::vector<char> needed(nodes_.size(), 0);
    needed[static_cast<std::size_t>(rootNode)] = 1;
    for (int i = rootNode; i >= 0; --i) {
        if (!needed[static_cast<std::size_t>(i)]) continue;
        const auto& nd = nodes_[static_cast<std::size_t>(i)];
        if (nd.lhs >= 0) needed[static_cast<std::size_t>(nd.lhs)] = 1;
        if (nd.rhs >= 0) needed[static_cast<std::size_t>(nd.rhs)] = 1;
    }
    std::vector<int> newIndex(nodes_.size(), -1);
    std::vector<ExprNode> out;
    out.reserve(nodes_.size());
    for (int i = 0; i <= rootNode; ++i) {
        if (!needed[static_cast<std::size_t>(i)]) continue;
        ExprNode nd = nodes_[static_cast<std::size_t>(i)];
        if (nd.lhs >= 0) nd.lhs = newIndex[static_cast<std::size_t>(nd.lhs)];
        if (nd.rhs >= 0) nd.rhs = newIndex[static_cast<std::size_t>(nd.rhs)];
        out.push_back(nd);
        newIndex[static_cast<std::size_t>(i)] = static_cast<int>(out.size()) - 1;
    }
    return Expression(symbols_, std::move(out));
}

// ---------------------------------------------------------------------------
// Parser

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

struct Parser {
    std::string_view text;
    std::size_t pos = 0;
    const SymbolTable& table;
    ExprBuilder builder;

    Parser(std::string_view t, std::shared_ptr<const SymbolTable> tab)
        : text(t), table(*tab), builder(std::move(tab)) {}

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }
    bool peek_is(char c) {
        skip_ws();
        return pos < text.size() && text[pos] == c;
    }
    bool eat(char c) {
        if (peek_is(c)) {
            ++pos;
            return true;
        }
        return false;
    }
    [[noreturn]] void fail(const std::string& what, std::size_t at) { throw ParseError(what, at); }

    int parse_expr() {
        int node = parse_term();
        for (;;) {
            if (eat('+')) node = builder.raw_binary(BinaryOp::Add, node, parse_term());
            else if (eat('-')) node = builder.raw_binary(BinaryOp::Sub, node, parse_term());
            else return node;
        }
    }

    int parse_term() {
        int node = parse_factor();
        for (;;) {
            if (eat('*')) node = builder.raw_binary(BinaryOp::Mul, node, parse_factor());
            else if (eat('/')) node = builder.raw_binary(BinaryOp::Div, node, parse_factor());
            else return node;
        }
    }

    int parse_factor() {
        int node = parse_base();
        if (eat('^')) node = builder.raw_binary(BinaryOp::Pow, node, parse_factor());
        return node;
    }

    int parse_base() {
        skip_ws();
        if (pos >= text.size()) fail("unexpected end of input", pos);
        char c = text[pos];
        if (c == '-') {
            ++pos;
            // Unary minus binds looser than '^': -x^2 reads -(x^2).
            int child = parse_factor();
            const auto& nd = builder.node(child);
            if (nd.kind == ExprNode::Kind::Constant) return builder.constant(-nd.value);
            return builder.raw_unary(UnaryOp::Neg, child);
        }
        if (c == '(') {
            ++pos;
            int node = parse_expr();
            if (!eat(')')) fail("expected ')'", pos);
            return node;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (is_ident_start(c)) return parse_symbol_or_call();
        fail(std::string("unexpected character '") + c + "'", pos);
    }

    int parse_number() {
        double v = 0.0;
        const char* begin = text.data() + pos;
        const char* end = text.data() + text.size();
        auto res = std::from_chars(begin, end, v);
        if (res.ec != std::errc{}) fail("malformed number", pos);
        pos += static_cast<std::size_t>(res.ptr - begin);
        return builder.constant(v);
    }

    int parse_symbol_or_call() {
        std::size_t start = pos;
        while (pos < text.size() && is_ident_char(text[pos])) ++pos;
        std::string ident(text.substr(start, pos - start));

        static const std::map<std::string, UnaryOp, std::less<>> kFuncs = {
            {"sin", UnaryOp::Sin}, {"cos", UnaryOp::Cos},   {"exp", UnaryOp::Exp},
            {"log", UnaryOp::Log}, {"sqrt", UnaryOp::Sqrt}, {"abs", UnaryOp::Abs}};
        auto fn = kFuncs.find(ident);
        if (fn != kFuncs.end()) {
            if (!eat('(')) fail("expected '(' after function '" + ident + "'", pos);
            int arg = parse_expr();
            if (!eat(')')) fail("expected ')'", pos);
            return builder.raw_unary(fn->second, arg);
        }

        if (pos < text.size() && text[pos] == '[') {
            ++pos;
            std::size_t idxStart = pos;
            while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
            if (pos == idxStart || pos >= text.size() || text[pos] != ']')
                fail("malformed index after '" + ident + "['", idxStart);
            ident += '[';
            ident.append(text.substr(idxStart, pos - idxStart));
            ident += ']';
            ++pos; // ']'
        }
        auto id = table.find(ident);
        if (!id) fail("unknown symbol '" + ident + "'", start);
        return builder.symbol(*id);
    }
};

} // namespace

Expression parse(std::string_view text, std::shared_ptr<const SymbolTable> symbols) {
    Parser p(text, std::move(symbols));
    p.skip_ws();
    if (p.pos >= text.size()) throw ParseError("empty expression", 0);
    int root = p.parse_expr();
    p.skip_ws();
    if (p.pos != text.size()) p.fail("unexpected trailing input", p.pos);
    return p.builder.take(root);
}

// ---------------------------------------------------------------------------
// Printing

namespace {

int node_level(const Expression& e, int i) {
    const auto& nd = e.nodes()[static_cast<std::size_t>(i)];
    switch (nd.kind) {
        case ExprNode::Kind::Constant:
            return nd.value < 0.0 || (nd.value == 0.0 && std::signbit(nd.value)) ? 3 : 5;
        case ExprNode::Kind::Symbol: return 5;
        case ExprNode::Kind::Unary: return nd.uop == UnaryOp::Neg ? 3 : 5;
        case ExprNode::Kind::Binary:
            switch (nd.bop) {
                case BinaryOp::Add:
                case BinaryOp::Sub: return 1;
                case BinaryOp::Mul:
                case BinaryOp::Div: return 2;
                case BinaryOp::Pow: return 4;
            }
    }
    return 5;
}

std::string print_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void print_node(const Expression& e, int i, std::string& out);

void print_child(const Expression& e, int child, int minLevel, std::string& out) {
    if (node_level(e, child) < minLevel) {
        out += '(';
        print_node(e, child, out);
        out += ')';
    } else {
        print_node(e, child, out);
    }
}

void print_node(const Expression& e, int i, std::string& out) {
    const auto& nd = e.nodes()[static_cast<std::size_t>(i)];
    switch (nd.kind) {
        case ExprNode::Kind::Constant:
            out += print_double(nd.value);
            return;
        case ExprNode::Kind::Symbol:
            out += e.symbols()->name(nd.symbol);
            return;
        case ExprNode::Kind::Unary:
            if (nd.uop == UnaryOp::Neg) {
                out += '-';
                print_child(e, nd.lhs, 4, out); // parenthesize +,-,*,/ and nested -
                return;
            }
            switch (nd.uop) {
                case UnaryOp::Sin: out += "sin("; break;
                case UnaryOp::Cos: out += "cos("; break;
                case UnaryOp::Exp: out += "exp("; break;
                case UnaryOp::Log: out += "log("; break;
                case UnaryOp::Sqrt: out += "sqrt("; break;
                default: out += "abs("; break;
            }
            print_node(e, nd.lhs, out);
            out += ')';
            return;
        case ExprNode::Kind::Binary:
            switch (nd.bop) {
                case BinaryOp::Add:
                    print_child(e, nd.lhs, 1, out);
                    out += " + ";
                    print_child(e, nd.rhs, 2, out);
                    return;
                case BinaryOp::Sub:
                    print_child(e, nd.lhs, 1, out);
                    out += " - ";
                    print_child(e, nd.rhs, 2, out);
                    return;
                case BinaryOp::Mul:
                    print_child(e, nd.lhs, 2, out);
                    out += '*';
                    print_child(e, nd.rhs, 3, out);
                    return;
                case BinaryOp::Div:
                    print_child(e, nd.lhs, 2, out);
                    out += '/';
                    print_child(e, nd.rhs, 3, out);
                    return;
                case BinaryOp::Pow:
                    print_child(e, nd.lhs, 5, out);
                    out += '^';
                    print_child(e, nd.rhs, 3, out);
                    return;
            }
    }
}

} // namespace

std::string print(const Expression& e) {
    if (e.empty()) return "";
    std::string out;
    print_node(e, e.root(), out);
    return out;
}

bool structurally_equal(const Expression& a, const Expression& b) {
    if (a.empty() || b.empty()) return a.empty() == b.empty();
    std::vector<std::pair<int, int>> stack{{a.root(), b.root()}};
    while (!stack.empty()) {
        auto [ia, ib] = stack.back();
        stack.pop_back();
        const auto& na = a.nodes()[static_cast<std::size_t>(ia)];
        const auto& nb = b.nodes()[static_cast<std::size_t>(ib)];
        if (na.kind != nb.kind) return false;
        switch (na.kind) {
            case ExprNode::Kind::Constant:
                if (!(na.value == nb.value || (std::isnan(na.value) && std::isnan(nb.value))))
                    return false;
                break;
            case ExprNode::Kind::Symbol:
                if (na.symbol != nb.symbol) return false;
                break;
            case ExprNode::Kind::Unary:
                if (na.uop != nb.uop) return false;
                stack.emplace_back(na.lhs, nb.lhs);
                break;
            case ExprNode::Kind::Binary:
                if (na.bop != nb.bop) return false;
                stack.emplace_back(na.lhs, nb.lhs);
                stack.emplace_back(na.rhs, nb.rhs);
                break;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

[[noreturn]] void domain_error(const char* what) { throw EvalError(std::string("domain error: ") + what); }

double symbol_value(const Expression& e, int symbol, std::span<const double> bindings) {
    if (symbol < 0 || static_cast<std::size_t>(symbol) >= bindings.size())
        throw EvalError("unbound symbol '" + e.symbols()->name(symbol) + "'");
    return bindings[static_cast<std::size_t>(symbol)];
}

} // namespace

double evaluate(const Expression& e, std::span<const double> bindings) {
    if (e.empty()) throw EvalError("empty expression");
    std::vector<double> v(e.nodes().size());
    for (std::size_t i = 0; i < e.nodes().size(); ++i) {
        const auto& nd = e.nodes()[i];
        switch (nd.kind) {
            case ExprNode::Kind::Constant: v[i] = nd.value; break;
            case ExprNode::Kind::Symbol: v[i] = symbol_value(e, nd.symbol, bindings); break;
            case ExprNode::Kind::Unary: {
                double x = v[static_cast<std::size_t>(nd.lhs)];
                switch (nd.uop) {
                    case UnaryOp::Neg: v[i] = -x; break;
                    case UnaryOp::Sin: v[i] = std::sin(x); break;
                    case UnaryOp::Cos: v[i] = std::cos(x); break;
                    case UnaryOp::Exp: v[i] = std::exp(x); break;
                    case UnaryOp::Log:
                        if (x <= 0.0) domain_error("log of a non-positive argument");
                        v[i] = std::log(x);
                        break;
                    case UnaryOp::Sqrt:
                        if (x < 0.0) domain_error("sqrt of a negative argument");
                        v[i] = std::sqrt(x);
                        break;
                    case UnaryOp::Abs: v[i] = std::abs(x); break;
                }
                break;
            }
            case ExprNode::Kind::Binary: {
                double x = v[static_cast<std::size_t>(nd.lhs)];
                double y = v[static_cast<std::size_t>(nd.rhs)];
                switch (nd.bop) {
                    case BinaryOp::Add: v[i] = x + y; break;
                    case BinaryOp::Sub: v[i] = x - y; break;
                    case BinaryOp::Mul: v[i] = x * y; break;
                    case BinaryOp::Div:
                        if (y == 0.0) domain_error("division by zero");
                        v[i] = x / y;
                        break;
                    case BinaryOp::Pow: {
                        double p = std::pow(x, y);
                        if (std::isnan(p)) domain_error("pow with a negative base and non-integer exponent");
                        v[i] = p;
                        break;
                    }
                }
                break;
            }
        }
    }
    return v.back();
}

namespace {

// r = f(u) with chain rule through first and second derivatives.
void jet_unary_chain(Jet2& r, const Jet2& u, double f0, double f1, double f2) {
    const int k = u.k();
    r.value() = f0;
    for (int i = 0; i < k; ++i) r.grad(i) = f1 * u.grad(i);
    for (int i = 0; i < k; ++i)
        for (int j = i; j < k; ++j) {
            const double h = f1 * u.hess(i, j) + f2 * u.grad(i) * u.grad(j);
            r.hess(i, j) = h;
            r.hess(j, i) = h;
        }
}

bool jet_is_constant(const Jet2& u) {
    for (int i = 0; i < u.k(); ++i) {
        if (u.grad(i) != 0.0) return false;
        for (int j = 0; j < u.k(); ++j)
            if (u.hess(i, j) != 0.0) return false;
    }
    return true;
}

} // namespace

Jet2 evaluate_jet(const Expression& e, std::span<const double> bindings, std::span<const int> seeds) {
    if (e.empty()) throw EvalError("empty expression");
    const int k = static_cast<int>(seeds.size());

    std::vector<Jet2> v(e.nodes().size(), Jet2(k));
    for (std::size_t i = 0; i < e.nodes().size(); ++i) {
        const auto& nd = e.nodes()[i];
        Jet2& r = v[i];
        switch (nd.kind) {
            case ExprNode::Kind::Constant:
                r.value() = nd.value;
                break;
            case ExprNode::Kind::Symbol: {
                double x = symbol_value(e, nd.symbol, bindings);
                r.value() = x;
                for (int s = 0; s < k; ++s)
                    if (seeds[static_cast<std::size_t>(s)] == nd.symbol) r.grad(s) = 1.0;
                break;
            }
            case ExprNode::Kind::Unary: {
                const Jet2& u = v[static_cast<std::size_t>(nd.lhs)];
                double x = u.value();
                double f0 = 0.0, f1 = 0.0, f2 = 0.0;
                switch (nd.uop) {
                    case UnaryOp::Neg: f0 = -x; f1 = -1.0; f2 = 0.0; break;
                    case UnaryOp::Sin: f0 = std::sin(x); f1 = std::cos(x); f2 = -f0; break;
                    case UnaryOp::Cos: f0 = std::cos(x); f1 = -std::sin(x); f2 = -f0; break;
                    case UnaryOp::Exp: f0 = std::exp(x); f1 = f0; f2 = f0; break;
                    case UnaryOp::Log:
                        if (x <= 0.0) domain_error("log of a non-positive argument");
                        f0 = std::log(x); f1 = 1.0 / x; f2 = -f1 * f1;
                        break;
                    case UnaryOp::Sqrt:
                        if (x < 0.0) domain_error("sqrt of a negative argument");
                        f0 = std::sqrt(x);
                        if (x == 0.0) {
                            if (!jet_is_constant(u)) domain_error("sqrt derivative at 0");
                            f1 = f2 = 0.0;
                        } else {
                            f1 = 0.5 / f0;
                            f2 = -0.5 * f1 / x;
                        }
                        break;
                    case UnaryOp::Abs:
                        // Convention: d|x|/dx = 0 and d2|x|/dx2 = 0 at x = 0.
                        f0 = std::abs(x);
                        f1 = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                        f2 = 0.0;
                        break;
                }
                jet_unary_chain(r, u, f0, f1, f2);
                break;
            }
            case ExprNode::Kind::Binary: {
                const Jet2& a = v[static_cast<std::size_t>(nd.lhs)];
                const Jet2& b = v[static_cast<std::size_t>(nd.rhs)];
                switch (nd.bop) {
                    case BinaryOp::Add:
                        r.value() = a.value() + b.value();
                        for (int i2 = 0; i2 < k; ++i2) r.grad(i2) = a.grad(i2) + b.grad(i2);
                        for (int i2 = 0; i2 < k; ++i2)
                            for (int j2 = i2; j2 < k; ++j2) {
                                const double h = a.hess(i2, j2) + b.hess(i2, j2);
                                r.hess(i2, j2) = h;
                                r.hess(j2, i2) = h;
                            }
                        break;
                    case BinaryOp::Sub:
                        r.value() = a.value() - b.value();
                        for (int i2 = 0; i2 < k; ++i2) r.grad(i2) = a.grad(i2) - b.grad(i2);
                        for (int i2 = 0; i2 < k; ++i2)
                            for (int j2 = i2; j2 < k; ++j2) {
                                const double h = a.hess(i2, j2) - b.hess(i2, j2);
                                r.hess(i2, j2) = h;
                                r.hess(j2, i2) = h;
                            }
                        break;
                    case BinaryOp::Mul:
                        r.value() = a.value() * b.value();
                        for (int i2 = 0; i2 < k; ++i2)
                            r.grad(i2) = a.grad(i2) * b.value() + a.value() * b.grad(i2);
                        for (int i2 = 0; i2 < k; ++i2)
                            for (int j2 = i2; j2 < k; ++j2) {
                                const double h = a.hess(i2, j2) * b.value() + a.value() * b.hess(i2, j2) +
                                                 a.grad(i2) * b.grad(j2) + a.grad(j2) * b.grad(i2);
                                r.hess(i2, j2) = h;
                                r.hess(j2, i2) = h;
                            }
                        break;
                    case BinaryOp::Div: {
                        if (b.value() == 0.0) domain_error("division by zero");
                        const double q = a.value() / b.value();
                        r.value() = q;
                        for (int i2 = 0; i2 < k; ++i2)
                            r.grad(i2) = (a.grad(i2) - q * b.grad(i2)) / b.value();
                        for (int i2 = 0; i2 < k; ++i2)
                            for (int j2 = i2; j2 < k; ++j2) {
                                const double h = (a.hess(i2, j2) - r.grad(i2) * b.grad(j2) -
                                                  r.grad(j2) * b.grad(i2) - q * b.hess(i2, j2)) /
                                                 b.value();
                                r.hess(i2, j2) = h;
                                r.hess(j2, i2) = h;
                            }
                        break;
                    }
                    case BinaryOp::Pow: {
                        const auto& rhsNode = e.nodes()[static_cast<std::size_t>(nd.rhs)];
                        if (rhsNode.kind == ExprNode::Kind::Constant) {
                            const double c = rhsNode.value;
                            const double x = a.value();
                            double f0 = std::pow(x, c);
                            if (std::isnan(f0))
                                domain_error("pow with a negative base and non-integer exponent");
                            double f1, f2;
                            if (c == 0.0) {
                                f1 = f2 = 0.0;
                            } else if (c == 1.0) {
                                f1 = 1.0;
                                f2 = 0.0;
                            } else {
                                f1 = c * std::pow(x, c - 1.0);
                                f2 = c * (c - 1.0) * std::pow(x, c - 2.0);
                            }
                            if (!jet_is_constant(a) && (!std::isfinite(f1) || !std::isfinite(f2)))
                                domain_error("pow derivative is singular at this point");
                            if (jet_is_constant(a)) { f1 = 0.0; f2 = 0.0; }
                            jet_unary_chain(r, a, f0, f1, f2);
                        } else {
                            const double x = a.value(), y = b.value();
                            if (x <= 0.0)
                                domain_error("pow with non-constant exponent requires a positive base");
                            const double f0 = std::pow(x, y);
                            const double lx = std::log(x);
                            const double fa = y * f0 / x;
                            const double fb = f0 * lx;
                            const double faa = y * (y - 1.0) * f0 / (x * x);
                            const double fab = f0 / x * (1.0 + y * lx);
                            const double fbb = f0 * lx * lx;
                            r.value() = f0;
                            for (int i2 = 0; i2 < k; ++i2) r.grad(i2) = fa * a.grad(i2) + fb * b.grad(i2);
                            for (int i2 = 0; i2 < k; ++i2)
                                for (int j2 = i2; j2 < k; ++j2) {
                                    const double h = fa * a.hess(i2, j2) + fb * b.hess(i2, j2) +
                                                     faa * a.grad(i2) * a.grad(j2) +
                                                     fab * (a.grad(i2) * b.grad(j2) + a.grad(j2) * b.grad(i2)) +
                                                     fbb * b.grad(i2) * b.grad(j2);
                                    r.hess(i2, j2) = h;
                                    r.hess(j2, i2) = h;
                                }
                        }
                        break;
                    }
                }
                break;
            }
        }
    }
    return v.back();
}

// ---------------------------------------------------------------------------
// Symbolic derivative

Expression derivative(const Expression& e, int symbol) {
    if (e.empty()) throw EvalError("empty expression");
    ExprBuilder b(e.symbols());
    const auto& nodes = e.nodes();
    std::vector<int> copy(nodes.size(), -1);  // image of each source node
    std::vector<int> deriv(nodes.size(), -1); // derivative of each source node

    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& nd = nodes[i];
        switch (nd.kind) {
            case ExprNode::Kind::Constant:
                copy[i] = b.constant(nd.value);
                deriv[i] = b.constant(0.0);
                break;
            case ExprNode::Kind::Symbol:
                copy[i] = b.symbol(nd.symbol);
                deriv[i] = b.constant(nd.symbol == symbol ? 1.0 : 0.0);
                break;
            case ExprNode::Kind::Unary: {
                const int u = copy[static_cast<std::size_t>(nd.lhs)];
                const int du = deriv[static_cast<std::size_t>(nd.lhs)];
                copy[i] = b.unary(nd.uop, u);
                switch (nd.uop) {
                    case UnaryOp::Neg: deriv[i] = b.unary(UnaryOp::Neg, du); break;
                    case UnaryOp::Sin: deriv[i] = b.binary(BinaryOp::Mul, b.unary(UnaryOp::Cos, u), du); break;
                    case UnaryOp::Cos:
                        deriv[i] = b.unary(UnaryOp::Neg, b.binary(BinaryOp::Mul, b.unary(UnaryOp::Sin, u), du));
                        break;
                    case UnaryOp::Exp: deriv[i] = b.binary(BinaryOp::Mul, copy[i], du); break;
                    case UnaryOp::Log: deriv[i] = b.binary(BinaryOp::Div, du, u); break;
                    case UnaryOp::Sqrt:
                        deriv[i] = b.binary(BinaryOp::Div, du,
                                            b.binary(BinaryOp::Mul, b.constant(2.0), copy[i]));
                        break;
                    case UnaryOp::Abs:
                        // u/|u| * du; measure-zero singular at u = 0.
                        deriv[i] = b.binary(BinaryOp::Mul, b.binary(BinaryOp::Div, u, copy[i]), du);
                        break;
                }
                break;
            }
            case ExprNode::Kind::Binary: {
                const int x = copy[static_cast<std::size_t>(nd.lhs)];
                const int y = copy[static_cast<std::size_t>(nd.rhs)];
                const int dx = deriv[static_cast<std::size_t>(nd.lhs)];
                const int dy = deriv[static_cast<std::size_t>(nd.rhs)];
                copy[i] = b.binary(nd.bop, x, y);
                switch (nd.bop) {
                    case BinaryOp::Add: deriv[i] = b.binary(BinaryOp::Add, dx, dy); break;
                    case BinaryOp::Sub: deriv[i] = b.binary(BinaryOp::Sub, dx, dy); break;
                    case BinaryOp::Mul:
                        deriv[i] = b.binary(BinaryOp::Add, b.binary(BinaryOp::Mul, dx, y),
                                            b.binary(BinaryOp::Mul, x, dy));
                        break;
                    case BinaryOp::Div:
                        // (dx - (x/y) dy)/y
                        deriv[i] = b.binary(
                            BinaryOp::Div,
                            b.binary(BinaryOp::Sub, dx, b.binary(BinaryOp::Mul, copy[i], dy)), y);
                        break;
                    case BinaryOp::Pow:
                        if (nodes[static_cast<std::size_t>(nd.rhs)].kind == ExprNode::Kind::Constant) {
                            const double c = nodes[static_cast<std::size_t>(nd.rhs)].value;
                            deriv[i] = b.binary(
                                BinaryOp::Mul,
                                b.binary(BinaryOp::Mul, b.constant(c),
                                         b.binary(BinaryOp::Pow, x, b.constant(c - 1.0))),
                                dx);
                        } else {
                            // a^b * (db log a + b da / a)
                            deriv[i] = b.binary(
                                BinaryOp::Mul, copy[i],
                                b.binary(BinaryOp::Add,
                                         b.binary(BinaryOp::Mul, dy, b.unary(UnaryOp::Log, x)),
                                         b.binary(BinaryOp::Div, b.binary(BinaryOp::Mul, y, dx), x)));
                        }
                        break;
                }
                break;
            }
        }
    }
    return b.take(deriv.back());
}

Expression remap_symbols(const Expression& e, std::shared_ptr<const SymbolTable> newTable,
                         const std::vector<int>& symbolMap) {
    // Node-for-node copy preserving the arena layout so remapped copies stay
    // structurally identical to the source.
    std::vector<ExprNode> out = e.nodes();
    for (auto& nd : out) {
        if (nd.kind != ExprNode::Kind::Symbol) continue;
        int mapped = symbolMap.at(static_cast<std::size_t>(nd.symbol));
        if (mapped < 0)
            throw EvalError("symbol '" + e.symbols()->name(nd.symbol) +
                            "' has no image under the requested remapping");
        nd.symbol = mapped;
    }
    return Expression(std::move(newTable), std::move(out));
}

// ---------------------------------------------------------------------------
// Antisymmetry check

AntisymmetryReport check_antisymmetry(const Expression& K, int n, int trials, double tol,
                                      std::uint64_t rngSeed,
                                      const std::map<std::string, double>& params) {
    const auto& table = *K.symbols();
    std::vector<double> bindings(static_cast<std::size_t>(table.size()),
                                 std::numeric_limits<double>::quiet_NaN());
    bindings[0] = 0.0; // t
    for (const auto& [name, value] : params) {
        if (auto id = table.find(name)) bindings[static_cast<std::size_t>(*id)] = value;
    }

    const int q1 = 1, v1 = 1 + n, q2 = 1 + 2 * n, v2 = 1 + 3 * n;
    std::vector<int> velSeeds;
    for (int i = 0; i < 2 * n; ++i) velSeeds.push_back(v1 + (i < n ? i : 2 * n + (i - n)));

    std::mt19937_64 rng(rngSeed);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);

    AntisymmetryReport report;
    report.tol = tol;
    report.trials = trials;
    report.pass = true;

    for (int trial = 0; trial < trials; ++trial) {
        bindings[0] = dist(rng);
        for (int i = 0; i < n; ++i) {
            bindings[static_cast<std::size_t>(q1 + i)] = dist(rng);
            bindings[static_cast<std::size_t>(v1 + i)] = dist(rng);
            bindings[static_cast<std::size_t>(q2 + i)] = dist(rng);
            bindings[static_cast<std::size_t>(v2 + i)] = dist(rng);
        }
        std::vector<double> swapped = bindings;
        for (int i = 0; i < n; ++i) {
            std::swap(swapped[static_cast<std::size_t>(q1 + i)], swapped[static_cast<std::size_t>(q2 + i)]);
            std::swap(swapped[static_cast<std::size_t>(v1 + i)], swapped[static_cast<std::size_t>(v2 + i)]);
        }
        double sum;
        try {
            sum = evaluate(K, bindings) + evaluate(K, swapped);
        } catch (const EvalError& err) {
            std::string pt;
            for (double x : bindings) pt += print_double(x) + " ";
            throw EvalError(std::string(err.what()) + " [at sample point: " + pt + "]");
        }
        if (std::abs(sum) > report.maxInterchangeResidual) {
            report.maxInterchangeResidual = std::abs(sum);
            if (std::abs(sum) > tol && report.counterexample.empty()) report.counterexample = bindings;
        }

        // Boundary identity at coincident points: dK/dv1 + dK/dv2 = 0.
        std::vector<double> coincident = bindings;
        for (int i = 0; i < n; ++i) {
            coincident[static_cast<std::size_t>(q2 + i)] = coincident[static_cast<std::size_t>(q1 + i)];
            coincident[static_cast<std::size_t>(v2 + i)] = coincident[static_cast<std::size_t>(v1 + i)];
        }
        Jet2 jet = evaluate_jet(K, coincident, velSeeds);
        for (int i = 0; i < n; ++i) {
            double r = jet.grad(i) + jet.grad(n + i);
            report.maxBoundaryResidual = std::max(report.maxBoundaryResidual, std::abs(r));
        }
    }
    report.pass = report.maxInterchangeResidual <= tol && report.maxBoundaryResidual <= tol;
    return report;
}

} // namespace ncmech
