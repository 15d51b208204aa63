#include "ddfeec/expr.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <vector>

#include "ddfeec/errors.hpp"

namespace ddfeec {

enum class Op {
    Const, X, Y, Add, Sub, Mul, Div, Pow, Neg, Lt, Le, Gt, Ge, Eq,
    Sin, Cos, Tan, Exp, Log, Sqrt, Abs, Floor, Atan2, Min, Max, If
};

struct Expression::Node {
    Op op = Op::Const;
    double value = 0.0;
    std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

NodePtr make(Op op, std::vector<NodePtr> args = {}, double v = 0.0) {
    auto n = std::make_shared<Expression::Node>();
    n->op = op;
    n->value = v;
    n->args = std::move(args);
    return n;
}

double eval(const Expression::Node& n, double x, double y) {
    auto a = [&](int i) { return eval(*n.args[i], x, y); };
    switch (n.op) {
        case Op::Const: return n.value;
        case Op::X: return x;
        case Op::Y: return y;
        case Op::Add: return a(0) + a(1);
        case Op::Sub: return a(0) - a(1);
        case Op::Mul: return a(0) * a(1);
        case Op::Div: return a(0) / a(1);
        case Op::Pow: return std::pow(a(0), a(1));
        case Op::Neg: return -a(0);
        case Op::Lt: return a(0) < a(1) ? 1.0 : 0.0;
        case Op::Le: return a(0) <= a(1) ? 1.0 : 0.0;
        case Op::Gt: return a(0) > a(1) ? 1.0 : 0.0;
        case Op::Ge: return a(0) >= a(1) ? 1.0 : 0.0;
        case Op::Eq: return a(0) == a(1) ? 1.0 : 0.0;
        case Op::Sin: return std::sin(a(0));
        case Op::Cos: return std::cos(a(0));
        case Op::Tan: return std::tan(a(0));
        case Op::Exp: return std::exp(a(0));
        case Op::Log: return std::log(a(0));
        case Op::Sqrt: return std::sqrt(a(0));
        case Op::Abs: return std::abs(a(0));
        case Op::Floor: return std::floor(a(0));
        case Op::Atan2: return std::atan2(a(0), a(1));
        case Op::Min: return std::min(a(0), a(1));
        case Op::Max: return std::max(a(0), a(1));
        case Op::If: return a(0) != 0.0 ? a(1) : a(2);
    }
    return 0.0;
}

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodePtr parse() {
        NodePtr n = comparison();
        skip();
        if (pos_ != s_.size()) fail("unexpected trailing input");
        return n;
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw InvalidInput("expression '" + s_ + "': " + msg + " at position " + std::to_string(pos_));
    }
    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool accept(const char* tok) {
        skip();
        const std::string t(tok);
        if (s_.compare(pos_, t.size(), t) == 0) {
            pos_ += t.size();
            return true;
        }
        return false;
    }

    NodePtr comparison() {
        NodePtr l = additive();
        if (accept("<=")) return make(Op::Le, {l, additive()});
        if (accept(">=")) return make(Op::Ge, {l, additive()});
        if (accept("==")) return make(Op::Eq, {l, additive()});
        if (accept("<")) return make(Op::Lt, {l, additive()});
        if (accept(">")) return make(Op::Gt, {l, additive()});
        return l;
    }
    NodePtr additive() {
        NodePtr l = term();
        for (;;) {
            if (accept("+")) l = make(Op::Add, {l, term()});
            else if (accept("-")) l = make(Op::Sub, {l, term()});
            else return l;
        }
    }
    NodePtr term() {
        NodePtr l = unary();
        for (;;) {
            if (accept("*")) l = make(Op::Mul, {l, unary()});
            else if (accept("/")) l = make(Op::Div, {l, unary()});
            else return l;
        }
    }
    NodePtr unary() {
        if (accept("-")) return make(Op::Neg, {unary()});
        if (accept("+")) return unary();
        return power();
    }
    NodePtr power() {
        NodePtr base = primary();
        if (accept("^")) return make(Op::Pow, {base, unary()});
        return base;
    }
    NodePtr primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr n = comparison();
            if (!accept(")")) fail("expected ')'");
            return n;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            const double v = std::stod(s_.substr(pos_), &used);
            pos_ += used;
            return make(Op::Const, {}, v);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
                ++pos_;
            const std::string id = s_.substr(start, pos_ - start);
            if (id == "x") return make(Op::X);
            if (id == "y") return make(Op::Y);
            if (id == "pi") return make(Op::Const, {}, std::numbers::pi);
            if (id == "e") return make(Op::Const, {}, std::numbers::e);
            return call(id);
        }
        fail(std::string("unexpected character '") + c + "'");
    }
    NodePtr call(const std::string& id) {
        struct Fn {
            const char* name;
            Op op;
            int arity;
        };
        static const Fn table[] = {
            {"sin", Op::Sin, 1},     {"cos", Op::Cos, 1},   {"tan", Op::Tan, 1},
            {"exp", Op::Exp, 1},     {"log", Op::Log, 1},   {"sqrt", Op::Sqrt, 1},
            {"abs", Op::Abs, 1},     {"floor", Op::Floor, 1}, {"atan2", Op::Atan2, 2},
            {"min", Op::Min, 2},     {"max", Op::Max, 2},   {"pow", Op::Pow, 2},
            {"if", Op::If, 3},
        };
        for (const auto& f : table) {
            if (id != f.name) continue;
            if (!accept("(")) fail("expected '(' after " + id);
            std::vector<NodePtr> args;
            for (int k = 0; k < f.arity; ++k) {
                if (k > 0 && !accept(",")) fail("expected ',' in call to " + id);
                args.push_back(comparison());
            }
            if (!accept(")")) fail("expected ')' closing call to " + id);
            return make(f.op, std::move(args));
        }
        fail("unknown identifier '" + id + "'");
    }
};

}  // namespace

Expression::Expression() : root_(make(Op::Const)), source_("0") {}

Expression Expression::parse(const std::string& text) {
    Expression e;
    e.root_ = Parser(text).parse();
    e.source_ = text;
    return e;
}

Expression Expression::constant(double v) {
    Expression e;
    e.root_ = make(Op::Const, {}, v);
    e.source_ = std::to_string(v);
    return e;
}

double Expression::operator()(double x, double y) const { return eval(*root_, x, y); }

}  // namespace ddfeec
