#include "bateman/expr.hpp"

#include "bateman/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace bateman {

namespace detail {

enum class Kind { number, var, neg, add, sub, mul, div, pow, call };

struct Node {
    Kind kind = Kind::number;
    double number = 0.0;
    int var = -1;
    Func func = Func::exp;
    std::shared_ptr<const Node> lhs;
    std::shared_ptr<const Node> rhs;
    bool has_vars = false;
};

}  // namespace detail

namespace {

using detail::Kind;
using detail::Node;
using NodePtr = std::shared_ptr<const Node>;

NodePtr make_number_raw(double v)
{
    auto n = std::make_shared<Node>();
    n->kind = Kind::number;
    n->number = v;
    return n;
}

NodePtr make_var(int index)
{
    auto n = std::make_shared<Node>();
    n->kind = Kind::var;
    n->var = index;
    n->has_vars = true;
    return n;
}

NodePtr make_unary(Kind kind, NodePtr a, Func f = Func::exp)
{
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->func = f;
    n->has_vars = a->has_vars;
    n->lhs = std::move(a);
    return n;
}

NodePtr make_binary(Kind kind, NodePtr a, NodePtr b)
{
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->has_vars = a->has_vars || b->has_vars;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    return n;
}

// Literals in trees are non-negative so printed text re-parses to the same
// tree; negative constants become neg(number).
NodePtr make_number(double v)
{
    if (v < 0.0) return make_unary(Kind::neg, make_number_raw(-v));
    return make_number_raw(v);
}

bool is_const(const NodePtr& n, double v)
{
    return n->kind == Kind::number && n->number == v;
}

// Light pruning of the trees produced by differentiation; not a simplifier.
NodePtr add(NodePtr a, NodePtr b)
{
    if (is_const(a, 0.0)) return b;
    if (is_const(b, 0.0)) return a;
    return make_binary(Kind::add, std::move(a), std::move(b));
}

NodePtr neg(NodePtr a)
{
    if (is_const(a, 0.0)) return a;
    if (a->kind == Kind::neg) return a->lhs;
    return make_unary(Kind::neg, std::move(a));
}

NodePtr sub(NodePtr a, NodePtr b)
{
    if (is_const(b, 0.0)) return a;
    if (is_const(a, 0.0)) return neg(std::move(b));
    return make_binary(Kind::sub, std::move(a), std::move(b));
}

NodePtr mul(NodePtr a, NodePtr b)
{
    if (is_const(a, 0.0) || is_const(b, 0.0)) return make_number_raw(0.0);
    if (is_const(a, 1.0)) return b;
    if (is_const(b, 1.0)) return a;
    return make_binary(Kind::mul, std::move(a), std::move(b));
}

NodePtr divide(NodePtr a, NodePtr b)
{
    if (is_const(a, 0.0)) return make_number_raw(0.0);
    if (is_const(b, 1.0)) return a;
    return make_binary(Kind::div, std::move(a), std::move(b));
}

bool is_function_name(std::string_view name, Func& f)
{
    static const std::pair<std::string_view, Func> table[] = {
        {"exp", Func::exp}, {"log", Func::log}, {"sin", Func::sin},
        {"cos", Func::cos}, {"sqrt", Func::sqrt},
    };
    for (const auto& [n, fn] : table) {
        if (n == name) {
            f = fn;
            return true;
        }
    }
    return false;
}

const char* function_name(Func f)
{
    switch (f) {
        case Func::exp: return "exp";
        case Func::log: return "log";
        case Func::sin: return "sin";
        case Func::cos: return "cos";
        case Func::sqrt: return "sqrt";
    }
    return "?";
}

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    std::pair<NodePtr, std::vector<std::string>> run()
    {
        skip_ws();
        if (pos_ == text_.size()) throw ParseError("empty expression", pos_);
        NodePtr root = expr();
        skip_ws();
        if (pos_ != text_.size()) {
            throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_);
        }
        return {root, vars_};
    }

private:
    void skip_ws()
    {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c)
    {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr()
    {
        NodePtr lhs = term();
        for (;;) {
            if (accept('+')) {
                lhs = make_binary(Kind::add, lhs, term());
            } else if (accept('-')) {
                lhs = make_binary(Kind::sub, lhs, term());
            } else {
                return lhs;
            }
        }
    }

    NodePtr term()
    {
        NodePtr lhs = factor();
        for (;;) {
            if (accept('*')) {
                lhs = make_binary(Kind::mul, lhs, factor());
            } else if (accept('/')) {
                lhs = make_binary(Kind::div, lhs, factor());
            } else {
                return lhs;
            }
        }
    }

    NodePtr factor()
    {
        if (accept('-')) return make_unary(Kind::neg, factor());
        NodePtr b = base();
        if (accept('^')) return make_binary(Kind::pow, b, factor());
        return b;
    }

    NodePtr base()
    {
        skip_ws();
        if (pos_ == text_.size()) throw ParseError("unexpected end of expression", pos_);
        const char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        if (accept('(')) {
            NodePtr inner = expr();
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            return inner;
        }
        throw ParseError(std::string("unexpected '") + c + "'", pos_);
    }

    NodePtr number()
    {
        const std::size_t start = pos_;
        auto digits = [&] {
            std::size_t n = 0;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                ++pos_;
                ++n;
            }
            return n;
        };
        std::size_t n = digits();
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            n += digits();
        }
        if (n == 0) throw ParseError("malformed number", start);
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t save = pos_;
            ++pos_;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            if (digits() == 0) {
                // Not an exponent; leave 'e' for the caller to reject.
                pos_ = save;
            }
        }
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
        if (ec != std::errc() || ptr != text_.data() + pos_ || !std::isfinite(value)) {
            throw ParseError("number out of range", start);
        }
        return make_number_raw(value);
    }

    NodePtr identifier()
    {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
            ++pos_;
        }
        const std::string name(text_.substr(start, pos_ - start));
        skip_ws();
        const bool call = pos_ < text_.size() && text_[pos_] == '(';
        Func f;
        if (is_function_name(name, f)) {
            if (!accept('(')) throw ParseError("expected '(' after " + name, pos_);
            NodePtr arg = expr();
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            return make_unary(Kind::call, arg, f);
        }
        if (call) throw ParseError("unknown function '" + name + "'", start);
        auto it = std::find(vars_.begin(), vars_.end(), name);
        if (it == vars_.end()) {
            vars_.push_back(name);
            return make_var(static_cast<int>(vars_.size()) - 1);
        }
        return make_var(static_cast<int>(it - vars_.begin()));
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::vector<std::string> vars_;
};

void print(const Node& n, const std::vector<std::string>& vars, std::string& out)
{
    switch (n.kind) {
        case Kind::number: {
            char buf[64];
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, n.number);
            (void)ec;
            out.append(buf, ptr);
            return;
        }
        case Kind::var: out += vars[static_cast<std::size_t>(n.var)]; return;
        case Kind::neg:
            out += "-(";
            print(*n.lhs, vars, out);
            out += ')';
            return;
        case Kind::call:
            out += function_name(n.func);
            out += '(';
            print(*n.lhs, vars, out);
            out += ')';
            return;
        default: break;
    }
    const char* op = n.kind == Kind::add   ? "+"
                     : n.kind == Kind::sub ? "-"
                     : n.kind == Kind::mul ? "*"
                     : n.kind == Kind::div ? "/"
                                           : "^";
    out += '(';
    print(*n.lhs, vars, out);
    out += ')';
    out += op;
    out += '(';
    print(*n.rhs, vars, out);
    out += ')';
}

bool same(const Node& a, const Node& b, const std::vector<std::string>& va,
          const std::vector<std::string>& vb)
{
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case Kind::number: return a.number == b.number;
        case Kind::var:
            return va[static_cast<std::size_t>(a.var)] == vb[static_cast<std::size_t>(b.var)];
        case Kind::call: return a.func == b.func && same(*a.lhs, *b.lhs, va, vb);
        case Kind::neg: return same(*a.lhs, *b.lhs, va, vb);
        default: return same(*a.lhs, *b.lhs, va, vb) && same(*a.rhs, *b.rhs, va, vb);
    }
}

NodePtr remap(const NodePtr& n, const std::vector<int>& map)
{
    switch (n->kind) {
        case Kind::number: return n;
        case Kind::var: return make_var(map[static_cast<std::size_t>(n->var)]);
        case Kind::neg:
        case Kind::call: return make_unary(n->kind, remap(n->lhs, map), n->func);
        default: return make_binary(n->kind, remap(n->lhs, map), remap(n->rhs, map));
    }
}

Jet2 eval_node(const Node& n, std::span<const Jet2> args, int arity)
{
    switch (n.kind) {
        case Kind::number: return Jet2::constant(n.number, arity);
        case Kind::var: return args[static_cast<std::size_t>(n.var)];
        case Kind::neg: return -eval_node(*n.lhs, args, arity);
        case Kind::add: return eval_node(*n.lhs, args, arity) + eval_node(*n.rhs, args, arity);
        case Kind::sub: return eval_node(*n.lhs, args, arity) - eval_node(*n.rhs, args, arity);
        case Kind::mul: return eval_node(*n.lhs, args, arity) * eval_node(*n.rhs, args, arity);
        case Kind::div: return eval_node(*n.lhs, args, arity) / eval_node(*n.rhs, args, arity);
        case Kind::call: return jet_func(eval_node(*n.lhs, args, arity), n.func);
        case Kind::pow: {
            Jet2 b = eval_node(*n.lhs, args, arity);
            if (!n.rhs->has_vars) {
                const double c = eval_node(*n.rhs, {}, 0).value();
                return jet_pow(b, c);
            }
            return jet_func(eval_node(*n.rhs, args, arity) * jet_func(b, Func::log), Func::exp);
        }
    }
    throw std::logic_error("eval_node: bad node");
}

double const_value(const NodePtr& n)
{
    return eval_node(*n, {}, 0).value();
}

NodePtr derive(const NodePtr& n, int var)
{
    if (!n->has_vars) return make_number_raw(0.0);
    const NodePtr& a = n->lhs;
    const NodePtr& b = n->rhs;
    switch (n->kind) {
        case Kind::number: return make_number_raw(0.0);
        case Kind::var: return make_number_raw(n->var == var ? 1.0 : 0.0);
        case Kind::neg: return neg(derive(a, var));
        case Kind::add: return add(derive(a, var), derive(b, var));
        case Kind::sub: return sub(derive(a, var), derive(b, var));
        case Kind::mul: return add(mul(derive(a, var), b), mul(a, derive(b, var)));
        case Kind::div:
            return divide(sub(mul(derive(a, var), b), mul(a, derive(b, var))), mul(b, b));
        case Kind::pow: {
            if (!b->has_vars) {
                const double c = const_value(b);
                if (c == 0.0) return make_number_raw(0.0);
                NodePtr power = c == 2.0 ? a : make_binary(Kind::pow, a, make_number(c - 1.0));
                return mul(mul(make_number(c), power), derive(a, var));
            }
            // d(a^b) = a^b * (b' log a + b a'/a)
            NodePtr term1 = mul(derive(b, var), make_unary(Kind::call, a, Func::log));
            NodePtr term2 = divide(mul(b, derive(a, var)), a);
            return mul(n, add(term1, term2));
        }
        case Kind::call: {
            NodePtr da = derive(a, var);
            switch (n->func) {
                case Func::exp: return mul(n, da);
                case Func::log: return divide(da, a);
                case Func::sin: return mul(make_unary(Kind::call, a, Func::cos), da);
                case Func::cos: return neg(mul(make_unary(Kind::call, a, Func::sin), da));
                case Func::sqrt: return divide(da, mul(make_number_raw(2.0), n));
            }
        }
    }
    throw std::logic_error("derive: bad node");
}

}  // namespace

int ExprSpec::var_index(std::string_view name) const
{
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i] == name) return static_cast<int>(i);
    }
    return -1;
}

std::string ExprSpec::to_string() const
{
    std::string out;
    print(*root_, vars_, out);
    return out;
}

bool ExprSpec::same_tree(const ExprSpec& other) const
{
    return same(*root_, *other.root_, vars_, other.vars_);
}

ExprSpec ExprSpec::with_vars(std::vector<std::string> order) const
{
    std::vector<int> map(vars_.size(), -1);
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        auto it = std::find(order.begin(), order.end(), vars_[i]);
        if (it == order.end()) {
            throw std::invalid_argument("expression variable '" + vars_[i] +
                                        "' is not bound by the declared variable list");
        }
        map[i] = static_cast<int>(it - order.begin());
    }
    return ExprSpec(remap(root_, map), std::move(order));
}

ExprSpec parse(std::string_view text)
{
    auto [root, vars] = Parser(text).run();
    return ExprSpec(std::move(root), std::move(vars));
}

ExprSpec partial(const ExprSpec& spec, std::string_view var)
{
    const int index = spec.var_index(var);
    if (index < 0) throw std::invalid_argument("partial: unknown variable '" + std::string(var) + "'");
    return ExprSpec(derive(spec.root_, index), spec.vars_);
}

Jet2 eval_jet(const ExprSpec& spec, std::span<const Jet2> args)
{
    if (args.size() != spec.vars().size()) {
        throw std::invalid_argument("eval_jet: expected " + std::to_string(spec.vars().size()) +
                                    " arguments, got " + std::to_string(args.size()));
    }
    const int arity = args.empty() ? 0 : args.front().arity();
    for (const Jet2& a : args) {
        if (a.arity() != arity) throw std::invalid_argument("eval_jet: arguments differ in arity");
    }
    return eval_node(spec.root(), args, arity);
}

Jet2 eval_jet(const ExprSpec& spec, const std::map<std::string, Jet2>& args)
{
    std::vector<Jet2> ordered;
    ordered.reserve(spec.vars().size());
    for (const std::string& name : spec.vars()) {
        auto it = args.find(name);
        if (it == args.end()) throw std::invalid_argument("eval_jet: missing variable '" + name + "'");
        ordered.push_back(it->second);
    }
    if (ordered.empty() && !args.empty()) {
        return eval_node(spec.root(), {}, args.begin()->second.arity());
    }
    return eval_jet(spec, ordered);
}

double eval(const ExprSpec& spec, std::span<const double> args)
{
    std::vector<Jet2> jets;
    jets.reserve(args.size());
    for (double a : args) jets.push_back(Jet2::constant(a, 0));
    return eval_jet(spec, jets).value();
}

double eval(const ExprSpec& spec, const std::map<std::string, double>& args)
{
    std::vector<double> ordered;
    for (const std::string& name : spec.vars()) {
        auto it = args.find(name);
        if (it == args.end()) throw std::invalid_argument("eval: missing variable '" + name + "'");
        ordered.push_back(it->second);
    }
    return eval(spec, ordered);
}

FieldHandle::FieldHandle(int arity, std::string label, EvalFn fn)
    : arity_(arity), label_(std::move(label)), fn_(std::move(fn))
{
}

Jet2 FieldHandle::operator()(std::span<const double> point) const
{
    if (static_cast<int>(point.size()) != arity_) {
        throw std::invalid_argument("field '" + label_ + "' expects " + std::to_string(arity_) +
                                    " coordinates, got " + std::to_string(point.size()));
    }
    Jet2 r = fn_(point);
    if (r.arity() != arity_) throw std::logic_error("field '" + label_ + "' returned wrong arity");
    return r;
}

FieldHandle field_from_expr(const ExprSpec& spec, const std::vector<std::string>& coords,
                            std::string label)
{
    ExprSpec bound = spec.with_vars(coords);
    const int k = static_cast<int>(coords.size());
    if (label.empty()) label = "expr:" + spec.to_string();
    return FieldHandle(k, std::move(label), [bound, k](std::span<const double> p) {
        std::vector<Jet2> args;
        args.reserve(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) args.push_back(jet_var(i, p[static_cast<std::size_t>(i)], k));
        return eval_jet(bound, args);
    });
}

FieldHandle reparametrize(const FieldHandle& field, const ExprSpec& h)
{
    if (h.vars().size() > 1) throw std::invalid_argument("reparametrize: h must have one variable");
    return FieldHandle(field.arity(), "reparam(" + h.to_string() + ", " + field.label() + ")",
                       [field, h](std::span<const double> p) {
                           Jet2 inner = field(p);
                           if (h.vars().empty()) return eval_node(h.root(), {}, inner.arity());
                           const Jet2 args[] = {inner};
                           return eval_jet(h, args);
                       });
}

}  // namespace bateman
