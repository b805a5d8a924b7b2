#include "bateman/scenario.hpp"

#include "bateman/construct.hpp"
#include "bateman/errors.hpp"
#include "bateman/expr.hpp"
#include "bateman/hydro.hpp"
#include "bateman/io.hpp"
#include "bateman/leznov.hpp"
#include "bateman/varlag.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <thread>

#ifndef BATEMAN_SCENARIO_DIR
#define BATEMAN_SCENARIO_DIR "scenarios"
#endif

namespace bateman {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::size_t uz(int i) { return static_cast<std::size_t>(i); }

// ---------------------------------------------------------------------------
// Schema

struct TypeInfo {
    ScenarioMode mode;
    std::vector<std::string> exprs;       // required expression keys
    std::vector<std::string> optional;    // optional expression keys
    std::vector<std::string> lists;       // required expression-list keys
    std::vector<std::string> equations;
    int sample_dims;                      // 0: not sampled
};

const std::map<std::string, TypeInfo>& type_table()
{
    static const std::map<std::string, TypeInfo> t{
        {"implicit_fg", {ScenarioMode::verify, {"F", "G"}, {}, {}, {"complex_bateman"}, 4}},
        {"holo_sum", {ScenarioMode::verify, {"f", "g"}, {}, {}, {"complex_bateman"}, 4}},
        {"field4", {ScenarioMode::verify, {"phi"}, {}, {}, {"complex_bateman"}, 4}},
        {"implicit_3d",
         {ScenarioMode::verify,
          {"F", "G", "K"},
          {},
          {},
          {"euclidean_3d", "euclidean_first_order_1", "euclidean_first_order_2"},
          3}},
        {"hodograph",
         {ScenarioMode::verify,
          {"f", "g"},
          {},
          {},
          {"another_complex_bateman", "another_complex_bateman_conjugate", "hodograph_identity", "round_trip",
           "moebius_covariance", "born_infeld", "born_infeld_integrability"},
          2}},
        {"leznov",
         {ScenarioMode::verify,
          {},
          {},
          {"Q", "P"},
          {"constraint", "D_phi", "Dbar_phi", "zero_curvature", "holomorphy", "complex_bateman"},
          -1}},
        {"multifield_exprs",
         {ScenarioMode::verify, {"phi1", "phi2", "phibar1", "phibar2"}, {}, {}, {"multifield_det"}, 3}},
        {"varlag",
         {ScenarioMode::verify,
          {"f", "g", "W"},
          {"H"},
          {},
          {"on_shell", "el_psi", "el_phibar", "el_phi", "el_combined", "divergence"},
          0}},
        {"hydro", {ScenarioMode::simulate, {"u0", "v0"}, {}, {}, {"drift", "drift_refinement", "transport"}, 0}},
        {"multifield",
         {ScenarioMode::simulate, {}, {}, {"init"}, {"multifield_det", "multifield_refinement"}, 0}},
    };
    return t;
}

[[noreturn]] void bad(const std::string& where, const std::string& what)
{
    throw ScenarioError(where + ": " + what);
}

const json& need(const json& o, const std::string& key, const std::string& where)
{
    if (!o.is_object() || !o.contains(key)) bad(where, "missing '" + key + "'");
    return o.at(key);
}

double number(const json& o, const std::string& key, const std::string& where)
{
    const json& v = need(o, key, where);
    if (!v.is_number()) bad(where, "'" + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) bad(where, "'" + key + "' must be finite");
    return d;
}

double number_or(const json& o, const std::string& key, double fallback, const std::string& where)
{
    return o.contains(key) ? number(o, key, where) : fallback;
}

int integer_or(const json& o, const std::string& key, int fallback, const std::string& where)
{
    if (!o.contains(key)) return fallback;
    const json& v = o.at(key);
    if (!v.is_number_integer()) bad(where, "'" + key + "' must be an integer");
    return v.get<int>();
}

std::string text(const json& o, const std::string& key, const std::string& where)
{
    const json& v = need(o, key, where);
    if (!v.is_string()) bad(where, "'" + key + "' must be a string");
    return v.get<std::string>();
}

ExprSpec expr(const json& o, const std::string& key, const std::string& where)
{
    const json& v = need(o, key, where);
    std::string s;
    if (v.is_string()) {
        s = v.get<std::string>();
    } else if (v.is_number()) {
        s = format_double(v.get<double>());
    } else {
        bad(where, "'" + key + "' must be an expression string");
    }
    try {
        return parse(s);
    } catch (const ParseError& e) {
        throw ParseError(where + "." + key + ": " + e.what(), e.position());
    }
}

std::vector<ExprSpec> expr_list(const json& o, const std::string& key, const std::string& where)
{
    const json& v = need(o, key, where);
    if (!v.is_array() || v.empty()) bad(where, "'" + key + "' must be a non-empty array of expressions");
    std::vector<ExprSpec> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        json wrap = json::object();
        wrap["e"] = v[i];
        out.push_back(expr(wrap, "e", where + "." + key + "[" + std::to_string(i) + "]"));
    }
    return out;
}

ImplicitSolveConfig solve_config(const json& c, const std::string& where)
{
    ImplicitSolveConfig cfg;
    if (c.contains("config")) {
        const json& o = c.at("config");
        const std::string w = where + ".config";
        if (!o.is_object()) bad(w, "must be an object");
        cfg.seed = number_or(o, "seed", cfg.seed, w);
        cfg.newton_tol = number_or(o, "newton_tol", cfg.newton_tol, w);
        cfg.max_iter = integer_or(o, "max_iter", cfg.max_iter, w);
        cfg.degenerate_rel = number_or(o, "degenerate_rel", cfg.degenerate_rel, w);
        if (o.contains("seed_vec")) {
            const json& s = o.at("seed_vec");
            if (!s.is_array()) bad(w, "'seed_vec' must be an array");
            for (const auto& x : s) {
                if (!x.is_number()) bad(w, "'seed_vec' entries must be numbers");
                cfg.seed_vec.push_back(x.get<double>());
            }
        }
        if (o.contains("bracket")) {
            const json& b = o.at("bracket");
            if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number()) {
                bad(w, "'bracket' must be [lo, hi]");
            }
            cfg.bracket = std::pair{b[0].get<double>(), b[1].get<double>()};
        }
    }
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        bad(where, e.what());
    }
    return cfg;
}

struct Sampling {
    int count = 200;
    std::vector<std::array<double, 2>> box;
};

std::vector<std::array<double, 2>> default_box(const std::string& type, int dims)
{
    if (type == "implicit_3d") return std::vector<std::array<double, 2>>(uz(dims), {0.2, 1.0});
    return std::vector<std::array<double, 2>>(uz(dims), {-0.5, 0.5});
}

Sampling sampling(const json& c, const std::string& type, int dims, const std::string& where)
{
    Sampling s;
    s.box = default_box(type, dims);
    if (!c.contains("sampling")) {
        if (type == "hodograph") bad(where, "hodograph cases need sampling.box over (u, v)");
        return s;
    }
    const json& o = c.at("sampling");
    const std::string w = where + ".sampling";
    s.count = integer_or(o, "count", s.count, w);
    if (s.count < 1) bad(w, "count must be >= 1");
    if (o.contains("box")) {
        const json& b = o.at("box");
        if (!b.is_array() || static_cast<int>(b.size()) != dims) {
            bad(w, "box must list " + std::to_string(dims) + " [min, max] pairs");
        }
        s.box.clear();
        for (const auto& r : b) {
            if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number()) {
                bad(w, "box entries must be [min, max]");
            }
            const double lo = r[0].get<double>(), hi = r[1].get<double>();
            if (!(lo < hi)) bad(w, "box entries need min < max");
            s.box.push_back({lo, hi});
        }
    } else if (type == "hodograph") {
        bad(w, "hodograph cases need a box over (u, v)");
    }
    return s;
}

struct CheckSpec {
    std::string equation;
    double tolerance = 0.0;
    bool per_h2 = false;  // tolerance is a multiple of h^2
    json opts;
};

bool grid_check(const std::string& type) { return type == "varlag" || type == "hydro" || type == "multifield"; }

CheckSpec check_spec(const json& o, const std::string& type, const TypeInfo& info, const std::string& where)
{
    CheckSpec c;
    c.equation = text(o, "equation", where);
    if (std::find(info.equations.begin(), info.equations.end(), c.equation) == info.equations.end()) {
        bad(where, "equation '" + c.equation + "' is not available for case type '" + type + "'");
    }
    const bool has_tol = o.contains("tolerance"), has_h2 = o.contains("tolerance_h2");
    if (has_tol == has_h2) bad(where, "give exactly one of 'tolerance' and 'tolerance_h2'");
    if (has_tol) {
        c.tolerance = number(o, "tolerance", where);
        if (c.tolerance < 0.0) bad(where, "tolerance must be >= 0");
    } else {
        if (!grid_check(type)) bad(where, "'tolerance_h2' only applies to grid checks");
        c.tolerance = number(o, "tolerance_h2", where);
        if (!(c.tolerance > 0.0)) bad(where, "tolerance_h2 must be > 0");
        c.per_h2 = true;
    }
    for (const char* k : {"reparam", "reparam_bar"}) {
        if (o.contains(k)) expr(o, k, where);
    }
    if (o.contains("maps") && integer_or(o, "maps", 1, where) < 1) bad(where, "maps must be >= 1");
    if (o.contains("lambda") && !(number(o, "lambda", where) > 0.0)) bad(where, "lambda must be > 0");
    if (o.contains("n")) {
        const json& n = o.at("n");
        if (!n.is_array() || n.empty()) bad(where, "'n' must be a non-empty list");
        for (const auto& k : n) {
            if (!k.is_number_integer() || k.get<int>() < 1) bad(where, "'n' entries must be integers >= 1");
        }
    }
    c.opts = o;
    return c;
}

std::vector<CheckSpec> case_checks(const json& scenario, const json& c, const std::string& type, const std::string& where)
{
    const json* list = c.contains("checks") ? &c.at("checks") : scenario.contains("checks") ? &scenario.at("checks") : nullptr;
    if (!list || !list->is_array() || list->empty()) bad(where, "no checks");
    const TypeInfo& info = type_table().at(type);
    std::vector<CheckSpec> out;
    for (std::size_t i = 0; i < list->size(); ++i) {
        out.push_back(check_spec((*list)[i], type, info, where + ".checks[" + std::to_string(i) + "]"));
    }
    return out;
}

void validate_case(const json& scenario, const json& c, ScenarioMode mode, const std::string& where)
{
    if (!c.is_object()) bad(where, "must be an object");
    const std::string type = text(c, "type", where);
    const auto it = type_table().find(type);
    if (it == type_table().end()) bad(where, "unknown case type '" + type + "'");
    const TypeInfo& info = it->second;
    if (info.mode != mode) {
        bad(where, "case type '" + type + "' belongs to " +
                       (info.mode == ScenarioMode::verify ? "verify" : "simulate") + " scenarios");
    }
    if (c.contains("label") && !c.at("label").is_string()) bad(where, "'label' must be a string");
    for (const auto& k : info.exprs) expr(c, k, where);
    for (const auto& k : info.optional) {
        if (c.contains(k)) expr(c, k, where);
    }
    for (const auto& k : info.lists) expr_list(c, k, where);
    solve_config(c, where);
    if (info.sample_dims > 0) sampling(c, type, info.sample_dims, where);
    if (type == "leznov") {
        const int n = integer_or(c, "n", 2, where);
        if (n != 2 && n != 3) bad(where, "leznov n must be 2 or 3");
        sampling(c, type, 2 * n, where);
    }
    if (type == "multifield" && need(c, "init", where).size() != 4) bad(where, "'init' needs u1, u2, v1, v2");
    if (type == "implicit_3d") number(c, "c", where);
    if (type == "varlag") {
        const json& g = need(c, "grid", where);
        number(g, "t0", where + ".grid");
        number(g, "x0", where + ".grid");
        if (!(number(g, "size", where + ".grid") > 0.0)) bad(where + ".grid", "size must be > 0");
        if (integer_or(g, "n", 0, where + ".grid") < 5) bad(where + ".grid", "n must be >= 5");
        const json& s = need(c, "seed", where);
        if (!s.is_array() || s.size() != 2) bad(where, "'seed' must be [u, v]");
    }
    if (type == "hydro" || type == "multifield") {
        const json& g = need(c, "grid", where);
        if (!g.is_object()) bad(where + ".grid", "must be an object");
        if (integer_or(g, type == "hydro" ? "nx" : "n", 0, where + ".grid") < 1) {
            bad(where + ".grid", "node count must be >= 1");
        }
    }
    case_checks(scenario, c, type, where);
}

// ---------------------------------------------------------------------------
// Running

struct Outputs {
    std::string dir;
    std::string stem;
    std::vector<std::string>* files;

    bool enabled() const { return !dir.empty(); }
    std::string path(const std::string& suffix) const
    {
        const std::string name = stem + suffix;
        files->push_back(name);
        return (fs::path(dir) / name).string();
    }
};

std::mt19937_64 case_rng(std::uint64_t seed, std::size_t case_index)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(case_index)};
    return std::mt19937_64(seq);
}

std::vector<std::vector<double>> sample_points(std::mt19937_64& rng, const Sampling& s)
{
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < s.count; ++i) {
        std::vector<double> p;
        for (const auto& r : s.box) p.push_back(std::uniform_real_distribution<double>(r[0], r[1])(rng));
        pts.push_back(std::move(p));
    }
    return pts;
}

ResidualReport grid_report(const std::string& equation, std::size_t samples, double value)
{
    ResidualReport r;
    r.equation = equation;
    r.samples = samples;
    r.max_norm = value;
    r.rms_norm = value;
    return r;
}

using PointEval = std::function<std::vector<ResidualSample>(std::span<const double>)>;

// Each evaluation may yield several samples (one per equation component);
// NumericalError or a non-finite sample skips the whole point.
ResidualReport sweep_multi(const std::string& equation, const std::vector<std::vector<double>>& pts,
                           const PointEval& eval)
{
    ReportBuilder b(equation);
    for (const auto& p : pts) {
        std::vector<ResidualSample> got;
        try {
            got = eval(p);
        } catch (const NumericalError&) {
            b.skip();
            continue;
        }
        const bool finite = std::all_of(got.begin(), got.end(), [](const ResidualSample& s) {
            return std::isfinite(s.raw) && std::isfinite(s.scale) && std::isfinite(s.normalized);
        });
        if (!finite || got.empty()) {
            b.skip();
            continue;
        }
        for (const auto& s : got) b.add(s);
    }
    return b.finish();
}

Jet2 maybe_reparam(const Jet2& j, const json& opts, const char* key)
{
    if (!opts.contains(key)) return j;
    const ExprSpec h = parse(opts.at(key).get<std::string>()).with_vars({"s"});
    const Jet2 arg[] = {jet_var(0, j.value(), 1)};
    const Jet2 inner[] = {j};
    return jet_compose(eval_jet(h, arg), inner);
}

struct CaseContext {
    const json& c;
    std::string type;
    std::string label;
    ImplicitSolveConfig cfg;
    std::mt19937_64 rng;
};

std::string check_label(const CheckSpec& chk, const CaseContext& cx)
{
    std::string s = chk.equation;
    if (chk.opts.contains("reparam")) s += " o " + chk.opts.at("reparam").get<std::string>();
    return s + " [" + cx.label + "]";
}

void run_field_case(const FieldHandle& field, const std::vector<CheckSpec>& checks, CaseContext& cx,
                    std::vector<CheckReport>& out)
{
    const TypeInfo& info = type_table().at(cx.type);
    const auto pts = sample_points(cx.rng, sampling(cx.c, cx.type, info.sample_dims, ""));
    for (const auto& chk : checks) {
        const std::string& e = chk.equation;
        const auto report = sweep_multi(check_label(chk, cx), pts, [&](std::span<const double> p) {
            const Jet2 j = maybe_reparam(field(p), chk.opts, "reparam");
            if (e == "complex_bateman") return std::vector{res_complex_bateman(j)};
            if (e == "euclidean_3d") return std::vector{res_euclidean_3d(j)};
            if (e == "euclidean_first_order_1") return std::vector{res_euclidean_first_order(j, 0)};
            return std::vector{res_euclidean_first_order(j, 1)};
        });
        out.push_back(judge(report, chk.tolerance));
    }
}

LinearMap2 random_map(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    LinearMap2 m;
    m.a = 1.0 + 0.3 * d(rng);
    m.b = 0.3 * d(rng);
    m.c = 0.3 * d(rng);
    m.d = 1.0 + 0.3 * d(rng);
    m.shift_t = d(rng);
    m.shift_x = d(rng);
    return m;
}

void run_hodograph_case(const std::vector<CheckSpec>& checks, CaseContext& cx, std::vector<CheckReport>& out)
{
    const HodographSolution sol(expr(cx.c, "f", ""), expr(cx.c, "g", ""), cx.cfg);
    const auto pts = sample_points(cx.rng, sampling(cx.c, cx.type, 2, ""));
    // (u, v) sample -> (t, x) -> Newton preimage from a seed perturbed by 1%.
    auto jets_at = [&](std::span<const double> uv) {
        const auto tx = sol.forward(uv[0], uv[1]);
        return sol.jets(tx[0], tx[1], {uv[0] * 1.01, uv[1] * 1.01});
    };
    for (const auto& chk : checks) {
        const std::string& e = chk.equation;
        std::vector<LinearMap2> maps;
        if (e == "moebius_covariance") {
            const int count = integer_or(chk.opts, "maps", 10, "");
            for (int i = 0; i < count; ++i) maps.push_back(random_map(cx.rng));
        }
        const double lambda = number_or(chk.opts, "lambda", 1.0, "");
        const auto report = sweep_multi(check_label(chk, cx), pts, [&](std::span<const double> uv) {
            std::vector<ResidualSample> r;
            if (e == "hodograph_identity") {
                const auto fw = sol.forward_jets(uv[0], uv[1]);
                // x_u = -u t_u, x_v = -v t_v.
                r.push_back(ResidualSample::from_terms({fw[1].d(0), uv[0] * fw[0].d(0)}));
                r.push_back(ResidualSample::from_terms({fw[1].d(1), uv[1] * fw[0].d(1)}));
                return r;
            }
            if (e == "round_trip") {
                const auto tx = sol.forward(uv[0], uv[1]);
                const auto back_uv = sol.invert(tx[0], tx[1], {uv[0] * 1.01, uv[1] * 1.01});
                const auto back = sol.forward(back_uv[0], back_uv[1]);
                const double err = std::max(std::fabs(back[0] - tx[0]), std::fabs(back[1] - tx[1]));
                r.push_back(ResidualSample::make(err, 1.0));
                return r;
            }
            const auto j = jets_at(uv);
            // phi = v, phibar = u.
            if (e == "another_complex_bateman" || e == "another_complex_bateman_conjugate") {
                const Jet2 phi = maybe_reparam(j[1], chk.opts, "reparam");
                const Jet2 bar = maybe_reparam(j[0], chk.opts, "reparam_bar");
                r.push_back(res_another_complex_bateman(phi, bar, e == "another_complex_bateman_conjugate"));
                return r;
            }
            if (e == "moebius_covariance") {
                const auto tx = sol.forward(uv[0], uv[1]);
                const std::array<double, 2> seed{uv[0] * 1.01, uv[1] * 1.01};
                const FieldPair pair{
                    FieldHandle(2, "phi", [&sol, seed](std::span<const double> p) { return sol.jets(p[0], p[1], seed)[1]; }),
                    FieldHandle(2, "phibar",
                                [&sol, seed](std::span<const double> p) { return sol.jets(p[0], p[1], seed)[0]; })};
                for (const auto& m : maps) {
                    const FieldPair tp = transform_solution(pair, m);
                    const auto q = m.apply(tx[0], tx[1]);
                    const Jet2 phi = tp.first({q[0], q[1]});
                    const Jet2 bar = tp.second({q[0], q[1]});
                    r.push_back(res_another_complex_bateman(phi, bar));
                    // Speed ratio transforms by the Moebius map.
                    const double V = moebius_transform(j[1].d(0) / j[1].d(1), m);
                    r.push_back(ResidualSample::from_terms({phi.d(0) / phi.d(1), -V}));
                }
                return r;
            }
            const GradientJet g = BornInfeldField::from_jets(j[0], j[1], lambda);
            if (e == "born_infeld") {
                r.push_back(res_born_infeld(g.as_jet(), lambda));
            } else {
                r.push_back(ResidualSample::from_terms({g.phi_x_t, -g.phi_t_x}));
            }
            return r;
        });
        out.push_back(judge(report, chk.tolerance));
    }
}

void run_leznov_case(const std::vector<CheckSpec>& checks, CaseContext& cx, std::vector<CheckReport>& out)
{
    const int n = integer_or(cx.c, "n", 2, "");
    const LeznovSystem sys(n, expr_list(cx.c, "Q", ""), expr_list(cx.c, "P", ""), cx.cfg);
    const auto pts = sample_points(cx.rng, sampling(cx.c, cx.type, 2 * n, ""));
    for (const auto& chk : checks) {
        const std::string& e = chk.equation;
        ResidualReport report;
        if (e == "zero_curvature") {
            // Points where the speeds are singular are skipped inside the sweep.
            report = verify_zero_curvature(derive_speeds(sys), pts, SpeedBinding::v_on_x_block);
            report.equation = check_label(chk, cx);
        } else {
            if (e == "complex_bateman" && n != 2) throw ScenarioError("complex_bateman needs a leznov case with n = 2");
            report = sweep_multi(check_label(chk, cx), pts, [&](std::span<const double> p) {
                std::vector<ResidualSample> r;
                const auto sol = solve_constraints(sys, p);
                if (e == "constraint") {
                    r.push_back(ResidualSample::make(sol.residual, 1.0));
                } else if (e == "complex_bateman") {
                    r.push_back(res_complex_bateman(sol.jets[0]));
                } else if (e == "holomorphy") {
                    r = holomorphy_conditions(sys, p);
                } else {
                    const SpeedValues s = speed_values(speed_jets(sys, sol, p));
                    const auto op = e == "D_phi" ? LeznovOperator::D : LeznovOperator::Dbar;
                    for (const Jet2& phi : sol.jets) r.push_back(apply_D(phi, s, op, SpeedBinding::v_on_x_block));
                }
                return r;
            });
        }
        out.push_back(judge(report, chk.tolerance));
    }
}

void run_multifield_exprs_case(const std::vector<CheckSpec>& checks, CaseContext& cx, std::vector<CheckReport>& out)
{
    const std::vector<std::string> coords{"x1", "x2", "x3"};
    std::array<FieldHandle, 4> f;
    const char* keys[] = {"phi1", "phi2", "phibar1", "phibar2"};
    for (int i = 0; i < 4; ++i) f[uz(i)] = field_from_expr(expr(cx.c, keys[i], ""), coords);
    const auto pts = sample_points(cx.rng, sampling(cx.c, cx.type, 3, ""));
    for (const auto& chk : checks) {
        const auto report = sweep_multi(check_label(chk, cx), pts, [&](std::span<const double> p) {
            const Jet2 a = f[0](p), b = f[1](p), c = f[2](p), d = f[3](p);
            return std::vector{res_multifield_det(a, b, c, d, 1), res_multifield_det(a, b, c, d, 2)};
        });
        out.push_back(judge(report, chk.tolerance));
    }
}

void run_varlag_case(const std::vector<CheckSpec>& checks, CaseContext& cx, std::vector<CheckReport>& out,
                     const Outputs& files, std::size_t case_index)
{
    const HodographSolution sol(expr(cx.c, "f", ""), expr(cx.c, "g", ""), cx.cfg);
    const json& g = cx.c.at("grid");
    const int n = g.at("n").get<int>();
    const double size = g.at("size").get<double>();
    const double h = size / (n - 1);
    const ExprSpec W = expr(cx.c, "W", "");
    const std::array<double, 2> seed{cx.c.at("seed")[0].get<double>(), cx.c.at("seed")[1].get<double>()};
    const FieldGrid grid =
        hodograph_field_grid(sol, W, g.at("t0").get<double>(), g.at("x0").get<double>(), h, h, n, n, seed);
    if (files.enabled()) write_csv(files.path(".case" + std::to_string(case_index) + ".fields.csv"), field_grid_table(grid));
    const DiscreteFunctional fn(cx.c.contains("H") ? std::optional<ExprSpec>(expr(cx.c, "H", "")) : std::nullopt);
    const DegeneracyReport rep = onshell_degeneracy(fn, grid, W);
    const std::size_t inner = uz((n - 4) * (n - 4));
    for (const auto& chk : checks) {
        const std::string& e = chk.equation;
        const double v = e == "on_shell"      ? rep.on_shell
                         : e == "el_psi"      ? rep.psi
                         : e == "el_phibar"   ? rep.phibar
                         : e == "el_phi"      ? rep.phi
                         : e == "el_combined" ? rep.combined
                                              : rep.divergence;
        const std::size_t samples = e == "on_shell" || e == "divergence" ? uz((n - 2) * (n - 2)) : inner;
        out.push_back(judge(grid_report(check_label(chk, cx), samples, v), chk.per_h2 ? chk.tolerance * h * h : chk.tolerance));
    }
}

CharGridSpec char_spec(const json& g)
{
    CharGridSpec s;
    s.nx = integer_or(g, "nx", s.nx, "grid");
    s.x0 = number_or(g, "x0", s.x0, "grid");
    s.length = number_or(g, "length", s.length, "grid");
    s.t0 = number_or(g, "t0", s.t0, "grid");
    s.t_end = number_or(g, "t_end", s.t_end, "grid");
    s.cfl = number_or(g, "cfl", s.cfl, "grid");
    s.dt = number_or(g, "dt", s.dt, "grid");
    if (g.contains("periodic")) s.periodic = g.at("periodic").get<bool>();
    s.validate();
    return s;
}

MultiGridSpec multi_spec(const json& g)
{
    MultiGridSpec s;
    s.n = integer_or(g, "n", s.n, "grid");
    s.length = number_or(g, "length", s.length, "grid");
    s.t_end = number_or(g, "t_end", s.t_end, "grid");
    s.cfl = number_or(g, "cfl", s.cfl, "grid");
    s.dt = number_or(g, "dt", s.dt, "grid");
    s.validate();
    return s;
}

std::vector<int> n_list(const json& opts)
{
    std::vector<int> out;
    if (!opts.contains("n")) return {1, 2, 3, 4, 5};
    for (const auto& k : opts.at("n")) out.push_back(k.get<int>());
    return out;
}

// Grid dumps are written before the checks run so an abort in a refinement
// run still leaves the base grid behind.
void run_hydro_case(const std::vector<CheckSpec>& checks, CaseContext& cx, std::vector<CheckReport>& out,
                    const Outputs& files, std::size_t case_index)
{
    const ExprSpec u0 = expr(cx.c, "u0", ""), v0 = expr(cx.c, "v0", "");
    const CharGridSpec spec = char_spec(cx.c.at("grid"));
    const std::string stem = ".case" + std::to_string(case_index);
    CharGrid grid;
    try {
        grid = integrate_characteristics(u0, v0, spec);
    } catch (const IntegrationAbort& a) {
        if (files.enabled() && a.partial_1d) write_grid(*a.partial_1d, files.path(stem + ".partial.csv"));
        if (files.enabled() && a.partial_1d) files.files->push_back(files.stem + stem + ".partial.csv.json");
        throw;
    }
    if (files.enabled()) {
        write_grid(grid, files.path(stem + ".grid.csv"));
        files.files->push_back(files.stem + stem + ".grid.csv.json");
    }
    const double h2 = grid.h * grid.h;
    std::optional<CharGrid> fine;
    const std::size_t nodes = uz(grid.levels() * grid.nodes());
    for (const auto& chk : checks) {
        const double tol = chk.per_h2 ? chk.tolerance * h2 : chk.tolerance;
        if (chk.equation == "transport") {
            out.push_back(judge(grid_report(check_label(chk, cx), nodes, transport_residual(grid).normalized()), tol));
            continue;
        }
        for (int n : n_list(chk.opts)) {
            const double coarse = conservation_drift(grid, n);
            const std::string label = check_label(chk, cx);
            const std::string eq = label.substr(0, chk.equation.size()) + " n=" + std::to_string(n) +
                                   label.substr(chk.equation.size());
            if (chk.equation == "drift") {
                out.push_back(judge(grid_report(eq, nodes, coarse), tol));
                continue;
            }
            // drift(h/2) / drift(h): second order gives 1/4.
            if (!fine) {
                CharGridSpec s2 = spec;
                s2.nx *= 2;
                if (s2.dt > 0.0) s2.dt *= 0.5;
                fine = integrate_characteristics(u0, v0, s2);
            }
            const double f = conservation_drift(*fine, n);
            const double ratio = coarse == 0.0 ? (f == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()) : f / coarse;
            out.push_back(judge(grid_report(eq, nodes, ratio), tol));
        }
    }
}

void run_multifield_case(const std::vector<CheckSpec>& checks, CaseContext& cx, std::vector<CheckReport>& out,
                         const Outputs& files, std::size_t case_index)
{
    const auto list = expr_list(cx.c, "init", "");
    const std::array<ExprSpec, 4> init{list[0], list[1], list[2], list[3]};
    const MultiGridSpec spec = multi_spec(cx.c.at("grid"));
    const std::string stem = ".case" + std::to_string(case_index);
    MultiCharGrid grid;
    try {
        grid = integrate_multifield(init, spec);
    } catch (const IntegrationAbort& a) {
        if (files.enabled() && a.partial_2d) write_csv(files.path(stem + ".partial.csv"), multigrid_table(*a.partial_2d));
        throw;
    }
    if (files.enabled()) write_csv(files.path(stem + ".grid.csv"), multigrid_table(grid));
    const double coarse = multifield_det_residual(grid).normalized();
    const double h2 = grid.h * grid.h;
    const std::size_t nodes = uz(std::max(0, grid.levels() - 2) * grid.n * grid.n);
    for (const auto& chk : checks) {
        const double tol = chk.per_h2 ? chk.tolerance * h2 : chk.tolerance;
        if (chk.equation == "multifield_det") {
            out.push_back(judge(grid_report(check_label(chk, cx), nodes, coarse), tol));
            continue;
        }
        // K = residual / h^2 on n and 2n nodes; reports |K(h/2) / K(h) - 1|.
        MultiGridSpec s2 = spec;
        s2.n *= 2;
        if (s2.dt > 0.0) s2.dt *= 0.5;
        const MultiCharGrid g2 = integrate_multifield(init, s2);
        const double K1 = coarse / h2, K2 = multifield_det_residual(g2).normalized() / (g2.h * g2.h);
        const double drift = K1 == 0.0 ? (K2 == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()) : std::fabs(K2 / K1 - 1.0);
        out.push_back(judge(grid_report(check_label(chk, cx), nodes, drift), tol));
    }
}

std::string case_label(const json& c, std::size_t i)
{
    if (c.contains("label")) return c.at("label").get<std::string>();
    return "case " + std::to_string(i);
}

void run_case(const json& scenario, const json& c, std::size_t index, std::uint64_t seed, const Outputs& files,
              std::vector<CheckReport>& out)
{
    const std::string type = c.at("type").get<std::string>();
    const auto checks = case_checks(scenario, c, type, "case");
    CaseContext cx{c, type, case_label(c, index), solve_config(c, "case"), case_rng(seed, index)};
    if (type == "implicit_fg") {
        run_field_case(solve_implicit_fg(expr(c, "F", ""), expr(c, "G", ""), cx.cfg), checks, cx, out);
    } else if (type == "holo_sum") {
        run_field_case(holo_sum(expr(c, "f", ""), expr(c, "g", "")), checks, cx, out);
    } else if (type == "field4") {
        run_field_case(field_from_expr(expr(c, "phi", ""), {"x1", "x2", "xb1", "xb2"}), checks, cx, out);
    } else if (type == "implicit_3d") {
        run_field_case(implicit_3d(expr(c, "F", ""), expr(c, "G", ""), expr(c, "K", ""), c.at("c").get<double>(), cx.cfg),
                       checks, cx, out);
    } else if (type == "hodograph") {
        run_hodograph_case(checks, cx, out);
    } else if (type == "leznov") {
        run_leznov_case(checks, cx, out);
    } else if (type == "multifield_exprs") {
        run_multifield_exprs_case(checks, cx, out);
    } else if (type == "varlag") {
        run_varlag_case(checks, cx, out, files, index);
    } else if (type == "hydro") {
        run_hydro_case(checks, cx, out, files, index);
    } else {
        run_multifield_case(checks, cx, out, files, index);
    }
}

std::string sci(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 3);
    return std::string(buf, r.ptr);
}

json number_json(double v)
{
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? json("nan") : json(v > 0 ? "inf" : "-inf");
}

}  // namespace

// ---------------------------------------------------------------------------

Scenario parse_scenario(const std::string& text_in)
{
    json j;
    try {
        j = json::parse(text_in);
    } catch (const json::parse_error& e) {
        throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ScenarioError("scenario must be a JSON object");
    Scenario s;
    s.name = text(j, "name", "scenario");
    if (s.name.empty() || !std::all_of(s.name.begin(), s.name.end(), [](char ch) {
            return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-';
        })) {
        throw ScenarioError("scenario: name must be non-empty and use [A-Za-z0-9_-]");
    }
    s.anchor = text(j, "paper_anchor", "scenario");
    if (s.anchor.empty()) throw ScenarioError("scenario: paper_anchor must be non-empty");
    const std::string mode = j.contains("mode") ? text(j, "mode", "scenario") : "verify";
    if (mode == "verify") {
        s.mode = ScenarioMode::verify;
    } else if (mode == "simulate") {
        s.mode = ScenarioMode::simulate;
    } else {
        throw ScenarioError("scenario: mode must be verify or simulate");
    }
    if (j.contains("seed")) {
        const json& sd = j.at("seed");
        if (!sd.is_number_unsigned() && !(sd.is_number_integer() && sd.get<std::int64_t>() >= 0)) {
            throw ScenarioError("scenario: seed must be a non-negative integer");
        }
        s.seed = sd.get<std::uint64_t>();
    }
    if (j.contains("expect_abort")) {
        s.expect_abort = text(j, "expect_abort", "scenario");
        if (s.expect_abort != "crossing" && s.expect_abort != "cfl") {
            throw ScenarioError("scenario: expect_abort must be crossing or cfl");
        }
        if (s.mode != ScenarioMode::simulate) throw ScenarioError("scenario: expect_abort needs mode simulate");
    }
    const json& cases = need(j, "cases", "scenario");
    if (!cases.is_array() || cases.empty()) throw ScenarioError("scenario: cases must be a non-empty array");
    for (std::size_t i = 0; i < cases.size(); ++i) {
        validate_case(j, cases[i], s.mode, "cases[" + std::to_string(i) + "]");
    }
    s.body = std::move(j);
    return s;
}

Scenario load_scenario(const std::string& path)
{
    std::string body;
    try {
        body = read_text(path);
    } catch (const std::exception& e) {
        throw ScenarioError(e.what());
    }
    return parse_scenario(body);
}

CheckReport judge(ResidualReport report, double tolerance)
{
    CheckReport c;
    c.tolerance = tolerance;
    c.pass = report.samples > 0 && report.max_norm <= tolerance && report.skipped_fraction() <= kMaxSkippedFraction;
    c.report = std::move(report);
    return c;
}

ScenarioResult run_scenario(const Scenario& sc, const RunOptions& options)
{
    ScenarioResult r;
    r.name = sc.name;
    r.anchor = sc.anchor;
    r.seed = options.seed.value_or(sc.seed);
    Outputs files{options.out_dir, sc.name, &r.files};
    try {
        if (files.enabled()) fs::create_directories(options.out_dir);
        const json& cases = sc.body.at("cases");
        for (std::size_t i = 0; i < cases.size(); ++i) run_case(sc.body, cases[i], i, r.seed, files, r.reports);
        const bool ok = std::all_of(r.reports.begin(), r.reports.end(), [](const CheckReport& c) { return c.pass; });
        r.exit_code = ok ? exit_pass : exit_fail;
    } catch (const IntegrationAbort& a) {
        r.exit_code = exit_abort;
        double t = 0.0;
        if (a.partial_1d && !a.partial_1d->t.empty()) t = a.partial_1d->t.back();
        if (a.partial_2d && !a.partial_2d->t.empty()) t = a.partial_2d->t.back();
        r.abort = AbortRecord{a.kind() == AbortKind::crossing ? "crossing" : "cfl", a.level(), t};
        r.error = a.what();
    } catch (const NumericalError& e) {
        r.exit_code = exit_numerical;
        r.error = e.what();
    } catch (const ParseError& e) {
        r.exit_code = exit_invalid;
        r.error = e.what();
    } catch (const std::invalid_argument& e) {
        r.exit_code = exit_invalid;
        r.error = e.what();
    } catch (const nlohmann::json::exception& e) {
        r.exit_code = exit_invalid;
        r.error = e.what();
    } catch (const std::exception& e) {
        r.exit_code = exit_numerical;
        r.error = e.what();
    }
    if (files.enabled()) {
        const std::string name = sc.name + ".report.json";
        r.files.push_back(name);
        write_text((fs::path(options.out_dir) / name).string(), report_json(r));
    }
    return r;
}

ScenarioResult run_scenario_file(const std::string& path, const RunOptions& options)
{
    try {
        return run_scenario(load_scenario(path), options);
    } catch (const std::exception& e) {
        ScenarioResult r;
        r.name = fs::path(path).stem().string();
        r.seed = options.seed.value_or(0);
        r.exit_code = exit_invalid;
        r.error = e.what();
        return r;
    }
}

std::string report_json(const ScenarioResult& r)
{
    json j;
    j["scenario"] = r.name;
    j["paper_anchor"] = r.anchor;
    j["reports"] = json::array();
    for (const auto& c : r.reports) {
        json e;
        e["equation"] = c.report.equation;
        e["samples"] = c.report.samples;
        e["skipped"] = c.report.skipped_singular;
        e["max_norm"] = number_json(c.report.max_norm);
        e["rms_norm"] = number_json(c.report.rms_norm);
        e["tolerance"] = number_json(c.tolerance);
        e["pass"] = c.pass;
        j["reports"].push_back(std::move(e));
    }
    j["seed"] = r.seed;
    j["version"] = kVersion;
    j["exit_code"] = r.exit_code;
    if (r.abort) {
        j["abort"] = {{"kind", r.abort->kind}, {"level", r.abort->level}, {"t", number_json(r.abort->t)}};
    }
    if (!r.error.empty()) j["error"] = r.error;
    return j.dump(2) + "\n";
}

std::string default_scenario_dir() { return BATEMAN_SCENARIO_DIR; }

SuiteResult run_suite(const std::string& dir, const RunOptions& options, int jobs)
{
    std::vector<std::string> paths;
    if (!fs::is_directory(dir)) throw ScenarioError("scenario directory not found: " + dir);
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json") paths.push_back(e.path().string());
    }
    std::sort(paths.begin(), paths.end());

    SuiteResult s;
    s.rows.resize(paths.size());
    std::vector<std::string> expect(paths.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < paths.size(); i = next++) {
            RunOptions o = options;
            const std::string stem = fs::path(paths[i]).stem().string();
            if (!o.out_dir.empty()) o.out_dir = (fs::path(o.out_dir) / stem).string();
            try {
                const Scenario sc = load_scenario(paths[i]);
                expect[i] = sc.expect_abort;
                s.rows[i] = run_scenario(sc, o);
            } catch (const std::exception&) {
                s.rows[i] = run_scenario_file(paths[i], o);
            }
        }
    };
    const int n = std::max(1, std::min<int>(jobs, static_cast<int>(paths.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    // Table: claim, anchor, worst max_norm against its tolerance, verdict.
    struct Row {
        std::string claim, anchor, max_norm, tolerance, verdict;
    };
    std::vector<Row> rows;
    bool all = true;
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
        const ScenarioResult& r = s.rows[i];
        Row row{r.name, r.anchor, "-", "-", ""};
        const CheckReport* worst = nullptr;
        double worst_ratio = -1.0;
        for (const auto& c : r.reports) {
            const double ratio = c.tolerance > 0.0 ? c.report.max_norm / c.tolerance
                                 : c.report.max_norm == 0.0 ? 0.0
                                                            : std::numeric_limits<double>::infinity();
            if (!c.pass && (!worst || worst->pass)) {
                worst = &c;
                worst_ratio = ratio;
            } else if ((!worst || c.pass == worst->pass) && ratio > worst_ratio) {
                worst = &c;
                worst_ratio = ratio;
            }
        }
        if (worst) {
            row.max_norm = sci(worst->report.max_norm);
            row.tolerance = sci(worst->tolerance);
        }
        bool ok = r.pass();
        if (!expect[i].empty()) {
            ok = r.exit_code == exit_abort && r.abort && r.abort->kind == expect[i];
            row.verdict = std::string(ok ? "PASS" : "FAIL") + " (expected " + expect[i] + " abort";
            if (r.abort) row.verdict += ", got " + r.abort->kind + " at level " + std::to_string(r.abort->level);
            row.verdict += ")";
        } else {
            row.verdict = ok ? "PASS" : "FAIL (exit " + std::to_string(r.exit_code) + ")";
        }
        all = all && ok;
        rows.push_back(std::move(row));
    }
    std::size_t w[4] = {5, 6, 8, 9};
    for (const auto& r : rows) {
        w[0] = std::max(w[0], r.claim.size());
        w[1] = std::max(w[1], r.anchor.size());
        w[2] = std::max(w[2], r.max_norm.size());
        w[3] = std::max(w[3], r.tolerance.size());
    }
    auto pad = [](const std::string& x, std::size_t n) { return x + std::string(n - x.size(), ' '); };
    std::string t = pad("claim", w[0]) + "  " + pad("anchor", w[1]) + "  " + pad("max_norm", w[2]) + "  " +
                    pad("tolerance", w[3]) + "  result\n";
    for (const auto& r : rows) {
        t += pad(r.claim, w[0]) + "  " + pad(r.anchor, w[1]) + "  " + pad(r.max_norm, w[2]) + "  " +
             pad(r.tolerance, w[3]) + "  " + r.verdict + "\n";
    }
    t += std::to_string(rows.size()) + " scenarios, " +
         std::to_string(std::count_if(rows.begin(), rows.end(), [](const Row& r) { return r.verdict.rfind("PASS", 0) == 0; })) +
         " passed\n";
    s.table = std::move(t);
    s.exit_code = all ? exit_pass : exit_fail;
    if (!options.out_dir.empty()) {
        fs::create_directories(options.out_dir);
        write_text((fs::path(options.out_dir) / "suite.txt").string(), s.table);
    }
    return s;
}

}  // namespace bateman
