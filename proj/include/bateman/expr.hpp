#pragma once

#include "bateman/jet.hpp"

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bateman {

namespace detail {
struct Node;
}

/// Parsed closed-form expression over named variables.
///
/// Grammar:
///
///     expr   := term (('+'|'-') term)*
///     term   := factor (('*'|'/') factor)*
///     factor := '-' factor | base ('^' factor)?
///     base   := number | var | func '(' expr ')' | '(' expr ')'
///
/// with func one of exp, log, sin, cos, sqrt. Binary + - * / associate to the
/// left, ^ to the right, and ^ binds tighter than unary minus (-u^2 is
/// -(u^2)). Variables are listed in order of first appearance.
///
/// ExprSpec is immutable and cheap to copy (shared tree).
class ExprSpec {
public:
    const std::vector<std::string>& vars() const noexcept { return vars_; }
    int var_index(std::string_view name) const;  // -1 when absent
    bool has_var(std::string_view name) const { return var_index(name) >= 0; }

    /// Fully parenthesised text; parse(to_string()) reproduces the tree.
    std::string to_string() const;

    bool same_tree(const ExprSpec& other) const;

    /// Same tree, variables rebound to `order` (a superset of the current
    /// variables, each used at most once). Throws std::invalid_argument when a
    /// referenced variable is missing from `order`.
    ExprSpec with_vars(std::vector<std::string> order) const;

    const detail::Node& root() const { return *root_; }

private:
    friend ExprSpec parse(std::string_view text);
    friend ExprSpec partial(const ExprSpec& spec, std::string_view var);
    ExprSpec(std::shared_ptr<const detail::Node> root, std::vector<std::string> vars)
        : root_(std::move(root)), vars_(std::move(vars))
    {
    }

    std::shared_ptr<const detail::Node> root_;
    std::vector<std::string> vars_;
};

ExprSpec parse(std::string_view text);

/// Symbolic first derivative. The result keeps the variable list of `spec`
/// so it evaluates against the same arguments.
ExprSpec partial(const ExprSpec& spec, std::string_view var);

/// Arguments in the order of spec.vars(); all jets share one arity.
Jet2 eval_jet(const ExprSpec& spec, std::span<const Jet2> args);
Jet2 eval_jet(const ExprSpec& spec, const std::map<std::string, Jet2>& args);

double eval(const ExprSpec& spec, std::span<const double> args);
double eval(const ExprSpec& spec, const std::map<std::string, double>& args);

/// Point -> Jet2 contract for a scalar field.
class FieldHandle {
public:
    using EvalFn = std::function<Jet2(std::span<const double>)>;

    FieldHandle() = default;
    FieldHandle(int arity, std::string label, EvalFn fn);

    int arity() const noexcept { return arity_; }
    const std::string& label() const noexcept { return label_; }

    Jet2 operator()(std::span<const double> point) const;
    Jet2 operator()(std::initializer_list<double> point) const
    {
        return (*this)(std::span<const double>(point.begin(), point.size()));
    }

private:
    int arity_ = 0;
    std::string label_;
    EvalFn fn_;
};

/// Field given directly by an expression whose variables are coordinate
/// names; `coords` fixes the coordinate order (and the arity).
FieldHandle field_from_expr(const ExprSpec& spec, const std::vector<std::string>& coords,
                            std::string label = {});

/// h(field) for a one-variable reparametrisation h.
FieldHandle reparametrize(const FieldHandle& field, const ExprSpec& h);

}  // namespace bateman
