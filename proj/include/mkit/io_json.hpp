#pragma once

// JSON forms of expressions, noise specs, localizers and models.
//
// Expressions are s-expressions: a number is a constant, ["var", i] is
// variable i, and every other node is [op, args...] with op one of
//   + - * / (binary; + and * also n-ary), neg, exp, log, sin, cos, sqrt, tanh,
//   ["pow", a, c], ["psi", radius, a], ["phi", radius, a].

#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mkit/errors.hpp"
#include "mkit/euler.hpp"
#include "mkit/expr.hpp"
#include "mkit/jump_sde.hpp"
#include "mkit/localization.hpp"
#include "mkit/noise.hpp"

namespace mkit {

using Json = nlohmann::json;

namespace detail {

inline const Json& require(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw ConfigurationError(std::string("missing field '") + key + "'");
    return j.at(key);
}

inline double number(const Json& j, const char* what) {
    if (!j.is_number()) throw ConfigurationError(std::string(what) + " must be a number");
    return j.get<double>();
}

/// Accepts numbers and the strings "inf" / "-inf".
inline double extended_number(const Json& j, const char* what) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    return number(j, what);
}

inline Json extended_to_json(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return x;
}

}  // namespace detail

// ============================================================================
// Expressions
// ============================================================================

[[nodiscard]] inline Expr expr_from_json(const Json& j) {
    if (j.is_number()) return Expr(j.get<double>());
    if (!j.is_array() || j.empty() || !j[0].is_string())
        throw ConfigurationError("expression must be a number or [op, args...]: " + j.dump());
    const std::string op = j[0].get<std::string>();
    const std::size_t n = j.size() - 1;
    auto arg = [&](std::size_t i) { return expr_from_json(j[i]); };
    auto need = [&](std::size_t k) {
        if (n != k) throw ConfigurationError("'" + op + "' takes " + std::to_string(k) + " arguments");
    };
    if (op == "var") {
        need(1);
        if (!j[1].is_number_unsigned()) throw ConfigurationError("variable index must be a non-negative integer");
        return Expr::var(j[1].get<std::size_t>());
    }
    if (op == "+" || op == "*") {
        if (n < 2) throw ConfigurationError("'" + op + "' takes at least 2 arguments");
        Expr r = arg(1);
        for (std::size_t i = 2; i <= n; ++i) r = op == "+" ? r + arg(i) : r * arg(i);
        return r;
    }
    if (op == "-") {
        if (n == 1) return -arg(1);
        need(2);
        return arg(1) - arg(2);
    }
    if (op == "/") {
        need(2);
        return arg(1) / arg(2);
    }
    if (op == "pow") {
        need(2);
        return pow(arg(1), detail::number(j[2], "pow exponent"));
    }
    if (op == "psi" || op == "phi") {
        need(2);
        const double a = detail::number(j[1], "bump radius");
        return op == "psi" ? psi_bump(a, arg(2)) : phi_bump(a, arg(2));
    }
    need(1);
    if (op == "neg") return -arg(1);
    if (op == "exp") return exp(arg(1));
    if (op == "log") return log(arg(1));
    if (op == "sin") return sin(arg(1));
    if (op == "cos") return cos(arg(1));
    if (op == "sqrt") return sqrt(arg(1));
    if (op == "tanh") return tanh(arg(1));
    throw ConfigurationError("unknown expression operator '" + op + "'");
}

[[nodiscard]] inline Json expr_to_json(const Expr& e) {
    const auto& n = e.node();
    const auto sub = [](const std::shared_ptr<const Expr::Node>& c) { return expr_to_json(Expr::from_node(c)); };
    switch (n.op) {
        case Op::Const: return n.param;
        case Op::Var: return Json::array({"var", n.var});
        case Op::Add: return Json::array({"+", sub(n.lhs), sub(n.rhs)});
        case Op::Sub: return Json::array({"-", sub(n.lhs), sub(n.rhs)});
        case Op::Mul: return Json::array({"*", sub(n.lhs), sub(n.rhs)});
        case Op::Div: return Json::array({"/", sub(n.lhs), sub(n.rhs)});
        case Op::Neg: return Json::array({"neg", sub(n.lhs)});
        case Op::Pow: return Json::array({"pow", sub(n.lhs), n.param});
        case Op::Exp: return Json::array({"exp", sub(n.lhs)});
        case Op::Log: return Json::array({"log", sub(n.lhs)});
        case Op::Sin: return Json::array({"sin", sub(n.lhs)});
        case Op::Cos: return Json::array({"cos", sub(n.lhs)});
        case Op::Sqrt: return Json::array({"sqrt", sub(n.lhs)});
        case Op::Tanh: return Json::array({"tanh", sub(n.lhs)});
        case Op::Psi: return Json::array({"psi", n.param, sub(n.lhs)});
        case Op::Phi: return Json::array({"phi", n.param, sub(n.lhs)});
    }
    return nullptr;
}

[[nodiscard]] inline std::vector<Expr> exprs_from_json(const Json& j) {
    if (!j.is_array()) throw ConfigurationError("expected a list of expressions");
    std::vector<Expr> out;
    for (const auto& e : j) out.push_back(expr_from_json(e));
    return out;
}

// ============================================================================
// Noise specs
// ============================================================================
//
// {"components": [law...], "weights": [weight...], "seed_policy": "explicit"}
// law:    {"law": "gaussian", "mean", "variance"} | {"law": "exponential", "rate"}
//       | {"law": "truncated", "log_density", "log_density_grad", "lo", "hi"}
//       | {"law": "external", "log_density_grad", "lo", "hi"}
// weight: {"kind": "constant", "value"} | {"kind": "cutoff", "center", "inner", "outer"}
// Shorthands: {"standard_gaussian": J}, {"brownian_grid": {"drivers", "level"}},
// {"iid": {"count", "law", "weight"}}.

[[nodiscard]] inline ComponentLaw law_from_json(const Json& j) {
    const std::string kind = detail::require(j, "law").get<std::string>();
    if (kind == "gaussian")
        return GaussianLaw{j.value("mean", 0.0), j.value("variance", 1.0)};
    if (kind == "exponential") return ExponentialLaw{j.value("rate", 1.0)};
    if (kind == "truncated")
        return TruncatedSmoothLaw{expr_from_json(detail::require(j, "log_density")),
                                  expr_from_json(detail::require(j, "log_density_grad")),
                                  detail::number(detail::require(j, "lo"), "lo"),
                                  detail::number(detail::require(j, "hi"), "hi")};
    if (kind == "external") {
        ExternalLaw l{expr_from_json(detail::require(j, "log_density_grad"))};
        if (j.contains("lo")) l.lo = detail::extended_number(j["lo"], "lo");
        if (j.contains("hi")) l.hi = detail::extended_number(j["hi"], "hi");
        return l;
    }
    throw ConfigurationError("unknown law '" + kind + "'");
}

[[nodiscard]] inline Json law_to_json(const ComponentLaw& law) {
    return std::visit(
        [](const auto& l) -> Json {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, GaussianLaw>) return {{"law", "gaussian"}, {"mean", l.mean}, {"variance", l.variance}};
            else if constexpr (std::is_same_v<L, ExponentialLaw>) return {{"law", "exponential"}, {"rate", l.rate}};
            else if constexpr (std::is_same_v<L, TruncatedSmoothLaw>)
                return {{"law", "truncated"}, {"log_density", expr_to_json(l.log_density)},
                        {"log_density_grad", expr_to_json(l.log_density_grad)}, {"lo", l.lo}, {"hi", l.hi}};
            else
                return {{"law", "external"}, {"log_density_grad", expr_to_json(l.log_density_grad)},
                        {"lo", detail::extended_to_json(l.lo)}, {"hi", detail::extended_to_json(l.hi)}};
        },
        law);
}

[[nodiscard]] inline WeightSpec weight_from_json(const Json& j) {
    const std::string kind = j.value("kind", std::string("constant"));
    if (kind == "constant") return ConstantWeight{j.value("value", 1.0)};
    if (kind == "cutoff")
        return SmoothCutoffWeight{j.value("center", 0.0), detail::number(detail::require(j, "inner"), "inner"),
                                  detail::number(detail::require(j, "outer"), "outer")};
    throw ConfigurationError("unknown weight kind '" + kind + "'");
}

[[nodiscard]] inline Json weight_to_json(const WeightSpec& w) {
    if (const auto* c = std::get_if<ConstantWeight>(&w)) return {{"kind", "constant"}, {"value", c->value}};
    const auto& s = std::get<SmoothCutoffWeight>(w);
    return {{"kind", "cutoff"}, {"center", s.center}, {"inner", s.inner}, {"outer", s.outer}};
}

[[nodiscard]] inline NoiseSpec noise_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigurationError("noise spec must be an object");
    if (j.contains("standard_gaussian")) return standard_gaussian_spec(j["standard_gaussian"].get<std::size_t>());
    if (j.contains("brownian_grid")) {
        const auto& b = j["brownian_grid"];
        return brownian_grid_spec(b.value("drivers", std::size_t{1}), b.value("level", 0u));
    }
    if (j.contains("iid")) {
        const auto& b = j["iid"];
        const Json w = b.value("weight", Json::object());
        return iid_spec(detail::require(b, "count").get<std::size_t>(),
                        NoiseComponent{law_from_json(detail::require(b, "law")), weight_from_json(w)});
    }
    const auto& comps = detail::require(j, "components");
    if (!comps.is_array()) throw ConfigurationError("components must be a list");
    const Json weights = j.value("weights", Json::array());
    if (!weights.empty() && weights.size() != comps.size())
        throw ConfigurationError("weights must be empty or match the components");
    std::vector<NoiseComponent> out;
    for (std::size_t i = 0; i < comps.size(); ++i)
        out.push_back({law_from_json(comps[i]), weights.empty() ? WeightSpec{ConstantWeight{}} : weight_from_json(weights[i])});
    return NoiseSpec(std::move(out));
}

[[nodiscard]] inline Json noise_to_json(const NoiseSpec& spec) {
    Json comps = Json::array(), weights = Json::array();
    for (const auto& c : spec.components()) {
        comps.push_back(law_to_json(c.law));
        weights.push_back(weight_to_json(c.weight));
    }
    return {{"components", comps}, {"weights", weights}, {"seed_policy", "explicit"}};
}

// ============================================================================
// Localizers and models
// ============================================================================

/// [{"statistic": expr, "kind": "psi" | "phi", "radius": a}, ...]
[[nodiscard]] inline LocalizationSpec localization_from_json(const Json& j) {
    LocalizationSpec s;
    if (j.is_null()) return s;
    if (!j.is_array()) throw ConfigurationError("localization must be a list of terms");
    for (const auto& t : j) {
        const std::string kind = t.value("kind", std::string("psi"));
        if (kind != "psi" && kind != "phi") throw ConfigurationError("localization kind must be psi or phi");
        s.terms.push_back({expr_from_json(detail::require(t, "statistic")), kind == "psi" ? BumpKind::Psi : BumpKind::Phi,
                           detail::number(detail::require(t, "radius"), "radius")});
    }
    return s;
}

/// {"drift": expr, "diffusion": expr, "x0": x, "horizon": t}
[[nodiscard]] inline DiffusionModel diffusion_from_json(const Json& j) {
    DiffusionModel m;
    if (j.contains("drift")) m.drift = expr_from_json(j["drift"]);
    if (j.contains("diffusion")) m.diffusion = expr_from_json(j["diffusion"]);
    m.x0 = j.value("x0", 0.0);
    m.horizon = j.value("horizon", 1.0);
    return m;
}

/// {"dim", "jump": [expr], "rate": expr, "drift": [expr],
///  "marks": {"family": "lebesgue" | "gaussian" | "sech", "scale"}, "rate_bound",
///  "jump_lower": expr, "rate_lower": expr, "x0": [..]}; "default" selects the
/// built-in study model.
[[nodiscard]] inline JumpModel jump_model_from_json(const Json& j) {
    if (j.is_string() && j.get<std::string>() == "default") return default_jump_model();
    if (!j.is_object()) throw ConfigurationError("jump model must be an object or \"default\"");
    JumpModel m;
    m.dim = j.value("dim", std::size_t{1});
    m.jump = exprs_from_json(detail::require(j, "jump"));
    m.drift = exprs_from_json(detail::require(j, "drift"));
    if (j.contains("rate")) m.rate = expr_from_json(j["rate"]);
    m.rate_bound = j.value("rate_bound", 1.0);
    if (j.contains("jump_lower")) m.jump_lower = expr_from_json(j["jump_lower"]);
    if (j.contains("rate_lower")) m.rate_lower = expr_from_json(j["rate_lower"]);
    m.x0 = j.value("x0", std::vector<double>(m.dim, 0.0));
    if (j.contains("marks")) {
        const auto& mk = j["marks"];
        const std::string fam = mk.value("family", std::string("lebesgue"));
        if (fam == "lebesgue") m.marks.family = MarkFamily::Lebesgue;
        else if (fam == "gaussian") m.marks.family = MarkFamily::Gaussian;
        else if (fam == "sech") m.marks.family = MarkFamily::Sech;
        else throw ConfigurationError("unknown mark family '" + fam + "'");
        m.marks.scale = mk.value("scale", 1.0);
    }
    return m;
}

// ============================================================================
// Files
// ============================================================================

[[nodiscard]] inline Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw ConfigurationError("invalid JSON in '" + path + "': " + e.what());
    }
}

}  // namespace mkit
