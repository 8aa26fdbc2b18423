#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tristeer/errors.hpp"

namespace tristeer {

enum class NodeKind { Number, Variable, Negate, Add, Sub, Mul, Div, Pow, Call, Piecewise };
enum class Compare { Less, LessEq, Greater, GreaterEq };

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

/// Variables are t (index -1), x<i> and u<i> (1-based in source, 0-based here).
struct ExprNode {
    NodeKind kind = NodeKind::Number;
    double value = 0.0;
    char var = 0;  ///< 't', 'x' or 'u'
    int index = -1;
    std::string name;  ///< function name for calls
    Compare cmp = Compare::Less;
    std::vector<Expr> args;  ///< operands; piecewise: lhs, rhs, then, else
    std::size_t offset = 0;
};

struct ExprEnv {
    double t = 0.0;
    const Eigen::VectorXd* x = nullptr;
    const Eigen::VectorXd* u = nullptr;
};

namespace detail {

inline Expr make_node(ExprNode n) { return std::make_shared<const ExprNode>(std::move(n)); }

inline bool known_function(const std::string& f, std::size_t& arity) {
    if (f == "sin" || f == "cos" || f == "exp" || f == "ln" || f == "abs") {
        arity = 1;
        return true;
    }
    if (f == "pow") {
        arity = 2;
        return true;
    }
    return false;
}

class Parser {
public:
    explicit Parser(const std::string& src) : s_(src) {}

    Expr parse() {
        Expr e = expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& what, std::size_t at) const {
        throw ExprError(what + " at offset " + std::to_string(at), at);
    }
    [[noreturn]] void fail(const std::string& what) const { fail(what, pos_); }

    void skip() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' || s_[pos_] == '\r')) ++pos_;
    }
    bool eat(const char* tok) {
        skip();
        std::size_t n = std::char_traits<char>::length(tok);
        if (s_.compare(pos_, n, tok) == 0) {
            pos_ += n;
            return true;
        }
        return false;
    }
    void expect(char c) {
        skip();
        if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    Expr binary(NodeKind k, Expr a, Expr b, std::size_t at) {
        ExprNode n;
        n.kind = k;
        n.args = {std::move(a), std::move(b)};
        n.offset = at;
        return make_node(std::move(n));
    }

    Expr expr() {
        Expr e = term();
        for (;;) {
            skip();
            std::size_t at = pos_;
            if (eat("+"))
                e = binary(NodeKind::Add, e, term(), at);
            else if (eat("-"))
                e = binary(NodeKind::Sub, e, term(), at);
            else
                return e;
        }
    }

    Expr term() {
        Expr e = unary();
        for (;;) {
            skip();
            std::size_t at = pos_;
            if (eat("*"))
                e = binary(NodeKind::Mul, e, unary(), at);
            else if (eat("/"))
                e = binary(NodeKind::Div, e, unary(), at);
            else
                return e;
        }
    }

    Expr unary() {
        skip();
        std::size_t at = pos_;
        if (eat("-")) {
            ExprNode n;
            n.kind = NodeKind::Negate;
            n.args = {unary()};
            n.offset = at;
            return make_node(std::move(n));
        }
        return power();
    }

    Expr power() {
        Expr base = primary();
        skip();
        std::size_t at = pos_;
        if (eat("^")) return binary(NodeKind::Pow, base, unary(), at);
        return base;
    }

    Expr number() {
        std::size_t at = pos_;
        const char* begin = s_.c_str() + pos_;
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end == begin) fail("bad number");
        pos_ += static_cast<std::size_t>(end - begin);
        ExprNode n;
        n.kind = NodeKind::Number;
        n.value = v;
        n.offset = at;
        return make_node(std::move(n));
    }

    Compare comparison() {
        skip();
        if (eat("<=") || eat("\xE2\x89\xA4")) return Compare::LessEq;
        if (eat(">=") || eat("\xE2\x89\xA5")) return Compare::GreaterEq;
        if (eat("<")) return Compare::Less;
        if (eat(">")) return Compare::Greater;
        fail("expected comparison");
    }

    Expr primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = expr();
            expect(')');
            return e;
        }
        if ((c >= '0' && c <= '9') || c == '.') return number();
        if (!std::isalpha(static_cast<unsigned char>(c)) && c != '_') fail(std::string("unexpected '") + c + "'");
        std::size_t at = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        std::string id = s_.substr(at, pos_ - at);
        skip();
        bool call = pos_ < s_.size() && s_[pos_] == '(';
        if (call) {
            ++pos_;
            if (id == "piecewise") {
                ExprNode n;
                n.kind = NodeKind::Piecewise;
                n.offset = at;
                Expr lhs = expr();
                n.cmp = comparison();
                Expr rhs = expr();
                expect(',');
                Expr a = expr();
                expect(',');
                Expr b = expr();
                expect(')');
                n.args = {lhs, rhs, a, b};
                return make_node(std::move(n));
            }
            std::size_t arity = 0;
            if (!known_function(id, arity)) fail("unknown function '" + id + "'", at);
            ExprNode n;
            n.kind = NodeKind::Call;
            n.name = id;
            n.offset = at;
            n.args.push_back(expr());
            while (eat(",")) n.args.push_back(expr());
            expect(')');
            if (n.args.size() != arity)
                fail("function '" + id + "' takes " + std::to_string(arity) + " argument(s)", at);
            return make_node(std::move(n));
        }
        ExprNode n;
        n.kind = NodeKind::Variable;
        n.offset = at;
        if (id == "t") {
            n.var = 't';
            return make_node(std::move(n));
        }
        if ((id[0] == 'x' || id[0] == 'u') && id.size() > 1 && id.find_first_not_of("0123456789", 1) == std::string::npos &&
            id[1] != '0') {
            n.var = id[0];
            n.index = std::stoi(id.substr(1)) - 1;
            return make_node(std::move(n));
        }
        fail("unknown identifier '" + id + "'", at);
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

inline int precedence(const ExprNode& n) {
    switch (n.kind) {
        case NodeKind::Add:
        case NodeKind::Sub: return 1;
        case NodeKind::Mul:
        case NodeKind::Div: return 2;
        case NodeKind::Negate: return 3;
        case NodeKind::Pow: return 4;
        default: return 5;
    }
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void print(const Expr& e, std::string& out);

inline void print_operand(const Expr& e, int min_prec, std::string& out) {
    bool paren = precedence(*e) < min_prec || (e->kind == NodeKind::Number && e->value < 0.0);
    if (paren) out += '(';
    print(e, out);
    if (paren) out += ')';
}

inline void print(const Expr& e, std::string& out) {
    const ExprNode& n = *e;
    switch (n.kind) {
        case NodeKind::Number: out += fmt(n.value); return;
        case NodeKind::Variable:
            out += n.var;
            if (n.var != 't') out += std::to_string(n.index + 1);
            return;
        case NodeKind::Negate:
            out += '-';
            print_operand(n.args[0], 3, out);
            return;
        case NodeKind::Add:
        case NodeKind::Sub:
        case NodeKind::Mul:
        case NodeKind::Div: {
            int p = precedence(n);
            const char* op = n.kind == NodeKind::Add ? " + " : n.kind == NodeKind::Sub ? " - " : n.kind == NodeKind::Mul ? "*" : "/";
            print_operand(n.args[0], p, out);
            out += op;
            print_operand(n.args[1], p + 1, out);
            return;
        }
        case NodeKind::Pow:
            print_operand(n.args[0], 5, out);
            out += '^';
            print_operand(n.args[1], 3, out);
            return;
        case NodeKind::Call:
            out += n.name + "(";
            for (std::size_t i = 0; i < n.args.size(); ++i) {
                if (i) out += ", ";
                print(n.args[i], out);
            }
            out += ')';
            return;
        case NodeKind::Piecewise: {
            static const char* ops[] = {" < ", " <= ", " > ", " >= "};
            out += "piecewise(";
            print(n.args[0], out);
            out += ops[static_cast<int>(n.cmp)];
            print(n.args[1], out);
            out += ", ";
            print(n.args[2], out);
            out += ", ";
            print(n.args[3], out);
            out += ')';
            return;
        }
    }
}

}  // namespace detail

inline Expr parse_expr(const std::string& src) { return detail::Parser(src).parse(); }

inline std::string to_string(const Expr& e) {
    std::string out;
    detail::print(e, out);
    return out;
}

/// Structural equality (offsets ignored).
inline bool same(const Expr& a, const Expr& b) {
    if (a->kind != b->kind || a->args.size() != b->args.size()) return false;
    switch (a->kind) {
        case NodeKind::Number:
            if (!(a->value == b->value)) return false;
            break;
        case NodeKind::Variable:
            if (a->var != b->var || a->index != b->index) return false;
            break;
        case NodeKind::Call:
            if (a->name != b->name) return false;
            break;
        case NodeKind::Piecewise:
            if (a->cmp != b->cmp) return false;
            break;
        default: break;
    }
    for (std::size_t i = 0; i < a->args.size(); ++i)
        if (!same(a->args[i], b->args[i])) return false;
    return true;
}

/// Largest x and u indices referenced (0 if none), 1-based.
inline void max_indices(const Expr& e, int& nx, int& nu) {
    if (e->kind == NodeKind::Variable) {
        if (e->var == 'x') nx = std::max(nx, e->index + 1);
        if (e->var == 'u') nu = std::max(nu, e->index + 1);
    }
    for (const auto& a : e->args) max_indices(a, nx, nu);
}

inline double eval(const Expr& e, const ExprEnv& env) {
    const ExprNode& n = *e;
    auto arg = [&](std::size_t i) { return eval(n.args[i], env); };
    switch (n.kind) {
        case NodeKind::Number: return n.value;
        case NodeKind::Variable: {
            if (n.var == 't') return env.t;
            const Eigen::VectorXd* v = n.var == 'x' ? env.x : env.u;
            if (!v || n.index >= v->size())
                throw ExprError(std::string(1, n.var) + std::to_string(n.index + 1) + " is not bound", n.offset);
            return (*v)(n.index);
        }
        case NodeKind::Negate: return -arg(0);
        case NodeKind::Add: return arg(0) + arg(1);
        case NodeKind::Sub: return arg(0) - arg(1);
        case NodeKind::Mul: return arg(0) * arg(1);
        case NodeKind::Div: {
            double d = arg(1);
            if (d == 0.0) throw ExprError("division by zero", n.offset);
            return arg(0) / d;
        }
        case NodeKind::Pow: return std::pow(arg(0), arg(1));
        case NodeKind::Call: {
            double a = arg(0);
            if (n.name == "sin") return std::sin(a);
            if (n.name == "cos") return std::cos(a);
            if (n.name == "exp") return std::exp(a);
            if (n.name == "abs") return std::abs(a);
            if (n.name == "pow") return std::pow(a, arg(1));
            if (!(a > 0.0)) throw ExprError("ln of non-positive value", n.offset);
            return std::log(a);
        }
        case NodeKind::Piecewise: {
            double l = arg(0), r = arg(1);
            bool c = n.cmp == Compare::Less ? l < r : n.cmp == Compare::LessEq ? l <= r : n.cmp == Compare::Greater ? l > r : l >= r;
            return c ? arg(2) : arg(3);
        }
    }
    return 0.0;
}

}  // namespace tristeer
