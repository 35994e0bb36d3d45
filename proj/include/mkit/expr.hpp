#pragma once

// Expression graphs for simple functionals f(v_0, ..., v_{J-1}).
//
// An Expr is an immutable handle to a node of a shared DAG whose leaves are
// variables and constants and whose interior nodes are smooth primitives.
// Graphs are compiled into a register Program (one slot per distinct node) and
// evaluated generically, so the same graph runs on doubles, on Taylor
// polynomials and on jets. Variables are positional: for functionals they are
// noise coordinates, for model coefficients they are the coefficient's
// arguments.

#include <cmath>
#include <cstddef>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mkit/bumps.hpp"
#include "mkit/errors.hpp"

namespace mkit {

enum class Op { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Exp, Log, Sin, Cos, Sqrt, Tanh, Psi, Phi };

class Expr {
public:
    struct Node {
        Op op;
        double param = 0.0;       // constant value, exponent, or bump radius
        std::size_t var = 0;      // variable index for Op::Var
        std::shared_ptr<const Node> lhs;
        std::shared_ptr<const Node> rhs;
    };

    Expr() : Expr(0.0) {}
    Expr(double c) : node_(std::make_shared<const Node>(Node{Op::Const, c, 0, nullptr, nullptr})) {}

    static Expr constant(double c) { return Expr(c); }
    static Expr var(std::size_t i) { return Expr(std::make_shared<const Node>(Node{Op::Var, 0.0, i, nullptr, nullptr})); }

    [[nodiscard]] const Node& node() const noexcept { return *node_; }
    [[nodiscard]] const std::shared_ptr<const Node>& node_ptr() const noexcept { return node_; }
    [[nodiscard]] bool is_constant() const noexcept { return node_->op == Op::Const; }

    /// Variable indices the expression depends on.
    [[nodiscard]] std::set<std::size_t> variables() const {
        std::set<std::size_t> out;
        std::unordered_map<const Node*, bool> seen;
        collect(node_.get(), out, seen);
        return out;
    }

    friend Expr operator+(const Expr& a, const Expr& b) { return binary(Op::Add, a, b); }
    friend Expr operator-(const Expr& a, const Expr& b) { return binary(Op::Sub, a, b); }
    friend Expr operator*(const Expr& a, const Expr& b) { return binary(Op::Mul, a, b); }
    friend Expr operator/(const Expr& a, const Expr& b) { return binary(Op::Div, a, b); }
    friend Expr operator-(const Expr& a) { return unary(Op::Neg, a); }
    friend Expr operator+(const Expr& a, double b) { return a + Expr(b); }
    friend Expr operator+(double a, const Expr& b) { return Expr(a) + b; }
    friend Expr operator-(const Expr& a, double b) { return a - Expr(b); }
    friend Expr operator-(double a, const Expr& b) { return Expr(a) - b; }
    friend Expr operator*(const Expr& a, double b) { return a * Expr(b); }
    friend Expr operator*(double a, const Expr& b) { return Expr(a) * b; }
    friend Expr operator/(const Expr& a, double b) { return a / Expr(b); }
    friend Expr operator/(double a, const Expr& b) { return Expr(a) / b; }

    friend Expr pow(const Expr& a, double c) { return unary(Op::Pow, a, c); }
    friend Expr exp(const Expr& a) { return unary(Op::Exp, a); }
    friend Expr log(const Expr& a) { return unary(Op::Log, a); }
    friend Expr sin(const Expr& a) { return unary(Op::Sin, a); }
    friend Expr cos(const Expr& a) { return unary(Op::Cos, a); }
    friend Expr sqrt(const Expr& a) { return unary(Op::Sqrt, a); }
    friend Expr tanh(const Expr& a) { return unary(Op::Tanh, a); }
    friend Expr psi_bump(double radius, const Expr& a) { return unary(Op::Psi, a, radius); }
    friend Expr phi_bump(double radius, const Expr& a) { return unary(Op::Phi, a, radius); }

    static Expr from_node(std::shared_ptr<const Node> n) { return Expr(std::move(n)); }

private:
    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

    static double fold(Op op, double a, double b, double p);

    static Expr binary(Op op, const Expr& a, const Expr& b) {
        if (a.is_constant() && b.is_constant() && !(op == Op::Div && b.node_->param == 0.0))
            return Expr(fold(op, a.node_->param, b.node_->param, 0.0));
        return Expr(std::make_shared<const Node>(Node{op, 0.0, 0, a.node_, b.node_}));
    }
    static Expr unary(Op op, const Expr& a, double param = 0.0) {
        if (a.is_constant() && op != Op::Log && op != Op::Sqrt && op != Op::Pow)
            return Expr(fold(op, a.node_->param, 0.0, param));
        return Expr(std::make_shared<const Node>(Node{op, param, 0, a.node_, nullptr}));
    }

    static void collect(const Node* n, std::set<std::size_t>& out, std::unordered_map<const Node*, bool>& seen) {
        if (!n || seen[n]) return;
        seen[n] = true;
        if (n->op == Op::Var) out.insert(n->var);
        collect(n->lhs.get(), out, seen);
        collect(n->rhs.get(), out, seen);
    }

    std::shared_ptr<const Node> node_;
};

inline double Expr::fold(Op op, double a, double b, double p) {
    switch (op) {
        case Op::Add: return a + b;
        case Op::Sub: return a - b;
        case Op::Mul: return a * b;
        case Op::Div: return a / b;
        case Op::Neg: return -a;
        case Op::Exp: return std::exp(a);
        case Op::Sin: return std::sin(a);
        case Op::Cos: return std::cos(a);
        case Op::Tanh: return std::tanh(a);
        case Op::Psi: return psi_bump(p, a);
        case Op::Phi: return phi_bump(p, a);
        default: return a;
    }
}

namespace detail {

inline Expr substitute_node(const std::shared_ptr<const Expr::Node>& n, std::span<const Expr> b,
                            std::unordered_map<const Expr::Node*, Expr>& memo) {
    if (auto it = memo.find(n.get()); it != memo.end()) return it->second;
    const auto arg = [&](const std::shared_ptr<const Expr::Node>& c) { return substitute_node(c, b, memo); };
    Expr r;
    switch (n->op) {
        case Op::Const: r = Expr(n->param); break;
        case Op::Var:
            if (n->var >= b.size()) throw ConfigurationError("substitution leaves variable " + std::to_string(n->var) + " unbound");
            r = b[n->var];
            break;
        case Op::Add: r = arg(n->lhs) + arg(n->rhs); break;
        case Op::Sub: r = arg(n->lhs) - arg(n->rhs); break;
        case Op::Mul: r = arg(n->lhs) * arg(n->rhs); break;
        case Op::Div: r = arg(n->lhs) / arg(n->rhs); break;
        case Op::Neg: r = -arg(n->lhs); break;
        case Op::Pow: r = pow(arg(n->lhs), n->param); break;
        case Op::Exp: r = exp(arg(n->lhs)); break;
        case Op::Log: r = log(arg(n->lhs)); break;
        case Op::Sin: r = sin(arg(n->lhs)); break;
        case Op::Cos: r = cos(arg(n->lhs)); break;
        case Op::Sqrt: r = sqrt(arg(n->lhs)); break;
        case Op::Tanh: r = tanh(arg(n->lhs)); break;
        case Op::Psi: r = psi_bump(n->param, arg(n->lhs)); break;
        case Op::Phi: r = phi_bump(n->param, arg(n->lhs)); break;
    }
    memo.emplace(n.get(), r);
    return r;
}

}  // namespace detail

/// e with variable i replaced by bindings[i]; shared subgraphs stay shared.
[[nodiscard]] inline Expr substitute(const Expr& e, std::span<const Expr> bindings) {
    std::unordered_map<const Expr::Node*, Expr> memo;
    return detail::substitute_node(e.node_ptr(), bindings, memo);
}

// ============================================================================
// Generic primitives. Overloads for doubles live here; polynomial and jet
// overloads are found by argument-dependent lookup.
// ============================================================================

namespace detail {

inline double lift_like(double, double c) { return c; }
inline TaylorPoly lift_like(const TaylorPoly& proto, double c) { return TaylorPoly::constant(proto.space(), c); }

inline double checked_log(double x) {
    if (!(x > 0.0)) throw DomainError("log of non-positive value");
    return std::log(x);
}
inline double checked_sqrt(double x) {
    if (x < 0.0) throw DomainError("sqrt of negative value");
    return std::sqrt(x);
}
inline double checked_pow(double x, double c) {
    if (std::floor(c) != c && !(x > 0.0)) throw DomainError("non-integer power of non-positive value");
    return std::pow(x, c);
}
inline double checked_div(double a, double b) {
    if (b == 0.0) throw DomainError("division by zero");
    return a / b;
}

inline TaylorPoly checked_log(const TaylorPoly& x) { return log(x); }
inline TaylorPoly checked_sqrt(const TaylorPoly& x) { return sqrt(x); }
inline TaylorPoly checked_pow(const TaylorPoly& x, double c) { return pow(x, c); }
inline TaylorPoly checked_div(const TaylorPoly& a, const TaylorPoly& b) { return a / b; }

}  // namespace detail

/// Compiled form of one or more expressions sharing common subgraphs.
class Program {
public:
    struct Instr {
        Op op;
        double param;
        std::size_t var;
        std::size_t a;
        std::size_t b;
    };

    Program() = default;
    explicit Program(std::span<const Expr> roots) {
        std::unordered_map<const Expr::Node*, std::size_t> slot;
        for (const auto& r : roots) outputs_.push_back(emit(r.node_ptr().get(), slot));
        for (const auto& in : code_)
            if (in.op == Op::Var) variables_.insert(in.var);
    }
    explicit Program(const Expr& root) : Program(std::span<const Expr>(&root, 1)) {}

    [[nodiscard]] std::size_t size() const noexcept { return code_.size(); }
    [[nodiscard]] std::size_t outputs() const noexcept { return outputs_.size(); }
    [[nodiscard]] const std::set<std::size_t>& variables() const noexcept { return variables_; }
    [[nodiscard]] std::size_t arity() const noexcept { return variables_.empty() ? 0 : *variables_.rbegin() + 1; }

    /// Evaluates every root. `vars[i]` binds variable i; `proto` supplies the
    /// algebra (space, frame) for constants.
    template <class T>
    [[nodiscard]] std::vector<T> run(std::span<const T> vars, const T& proto) const {
        using detail::lift_like;
        std::vector<T> reg;
        reg.reserve(code_.size());
        for (std::size_t i = 0; i < code_.size(); ++i) {
            const Instr& in = code_[i];
            try {
                reg.push_back(step(in, reg, vars, proto));
            } catch (const EvaluationError&) {
                throw;
            } catch (const DomainError& e) {
                throw EvaluationError(i, e.what());
            }
        }
        std::vector<T> out;
        out.reserve(outputs_.size());
        for (auto o : outputs_) out.push_back(reg[o]);
        return out;
    }

    [[nodiscard]] double eval(std::span<const double> vars) const { return run<double>(vars, 0.0).front(); }

private:
    template <class T>
    static T step(const Instr& in, const std::vector<T>& reg, std::span<const T> vars, const T& proto) {
        using detail::lift_like;
        using std::cos;
        using std::exp;
        using std::sin;
        using std::tanh;
        switch (in.op) {
            case Op::Const: return lift_like(proto, in.param);
            case Op::Var:
                if (in.var >= vars.size()) throw DomainError("variable index out of range");
                return vars[in.var];
            case Op::Add: return reg[in.a] + reg[in.b];
            case Op::Sub: return reg[in.a] - reg[in.b];
            case Op::Mul: return reg[in.a] * reg[in.b];
            case Op::Div: return detail::checked_div(reg[in.a], reg[in.b]);
            case Op::Neg: return -reg[in.a];
            case Op::Pow: return detail::checked_pow(reg[in.a], in.param);
            case Op::Exp: return exp(reg[in.a]);
            case Op::Log: return detail::checked_log(reg[in.a]);
            case Op::Sin: return sin(reg[in.a]);
            case Op::Cos: return cos(reg[in.a]);
            case Op::Sqrt: return detail::checked_sqrt(reg[in.a]);
            case Op::Tanh: return tanh(reg[in.a]);
            case Op::Psi: return psi_bump(in.param, reg[in.a]);
            case Op::Phi: return phi_bump(in.param, reg[in.a]);
        }
        return reg[in.a];
    }

    std::size_t emit(const Expr::Node* n, std::unordered_map<const Expr::Node*, std::size_t>& slot) {
        if (auto it = slot.find(n); it != slot.end()) return it->second;
        std::size_t a = 0, b = 0;
        if (n->lhs) a = emit(n->lhs.get(), slot);
        if (n->rhs) b = emit(n->rhs.get(), slot);
        code_.push_back({n->op, n->param, n->var, a, b});
        return slot[n] = code_.size() - 1;
    }

    std::vector<Instr> code_;
    std::vector<std::size_t> outputs_;
    std::set<std::size_t> variables_;
};

/// Convenience scalar evaluation.
[[nodiscard]] inline double evaluate(const Expr& e, std::span<const double> vars) { return Program(e).eval(vars); }

}  // namespace mkit
