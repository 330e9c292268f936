#include "evoctl/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace evoctl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Jet gaussian_jet(const GaussianBump& g, double u) {
    const double x = u - g.center;
    const double e = g.rate * std::exp(-g.width * x * x);
    const double w = g.width;
    return {e, e * (-2.0 * w * x), e * (4.0 * w * w * x * x - 2.0 * w),
            e * (-8.0 * w * w * w * x * x * x + 12.0 * w * w * x)};
}

Jet decay_jet(const DecayPolynomial& p, double u) {
    const int m = 2 * p.half_power;
    const double y = u - p.center;
    auto term = [&](int order) {
        if (order > m) return 0.0;
        double coeff = p.scale;
        for (int i = 0; i < order; ++i) coeff *= static_cast<double>(m - i);
        return coeff * std::pow(y, m - order);
    };
    return {term(0), term(1), term(2), term(3)};
}

// Written in terms of inv_d = 1/D and q = c3 E / D so that large |z| saturates instead of overflowing.
Jet sigmoid_jet(const Sigmoid& s, double u) {
    const auto& c = s.c;
    const double slope = c[3] * c[4];
    const double z = c[3] * (c[4] * u - c[5]);
    double inv_d = 0.0;
    double q = 0.0;
    if (z > 0.0) {
        const double em = std::exp(-z);
        const double denom = c[1] * em + c[2];
        inv_d = em / denom;
        q = c[2] / denom;
    } else {
        const double e = std::exp(z);
        const double denom = c[1] + c[2] * e;
        inv_d = 1.0 / denom;
        q = c[2] * e / denom;
    }
    const double base = c[0] * inv_d;
    const double k1 = slope, k2 = slope * slope, k3 = slope * slope * slope;
    return {base + c[6], -base * k1 * q, base * (2.0 * k2 * q * q - k2 * q),
            base * (-6.0 * k3 * q * q * q + 6.0 * k3 * q * q - k3 * q)};
}

void add(Jet& acc, const Jet& j, double sign = 1.0) {
    acc.v += sign * j.v;
    acc.d1 += sign * j.d1;
    acc.d2 += sign * j.d2;
    acc.d3 += sign * j.d3;
}

std::string describe(double u, double a = kNaN) {
    std::ostringstream os;
    os.precision(6);
    os << "u=" << u;
    if (!std::isnan(a)) os << " a=" << a;
    return os.str();
}

}  // namespace

void Landscape::validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw LandscapeError("epsilon must be positive and finite");
    if (decay.half_power < 1) throw LandscapeError("decay exponent p3 must be an integer >= 1");
    for (const auto& b : bumps) {
        if (b.width < 0.0) throw LandscapeError("gaussian widths g_j must be non-negative");
    }
    if (efficacy.empty()) throw LandscapeError("efficacy b1 needs at least one sigmoid term");
    std::visit(overloaded{[](const ConstantInteraction& ci) {
                              if (!(ci.value > 0.0)) throw LandscapeError("constant interaction c must be positive");
                          },
                          [](const ExponentialInteraction& ei) {
                              if (!(ei.scale > 0.0)) throw LandscapeError("exponential interaction scale must be positive");
                          },
                          [](const QuadraticInteraction& qi) {
                              if (!(qi.base > 0.0) || qi.curvature < 0.0)
                                  throw LandscapeError("quadratic interaction needs base > 0 and curvature >= 0");
                          }},
               interaction);
    std::visit(overloaded{[](const IdentityRate&) {},
                          [](const LinearRate& lr) {
                              if (!(lr.slope > 0.0)) throw LandscapeError("linear rate slope must be positive");
                          },
                          [](const SaturatingRate& sr) {
                              if (!(sr.half_saturation > 0.0)) throw LandscapeError("half saturation must be positive");
                          }},
               rate);
}

Jet Landscape::b0(double u) const {
    Jet j;
    for (const auto& b : bumps) add(j, gaussian_jet(b, u));
    add(j, decay_jet(decay, u), -1.0);
    return j;
}

Jet Landscape::b1(double u) const {
    Jet j;
    for (const auto& s : efficacy) add(j, sigmoid_jet(s, u));
    return j;
}

Jet Landscape::c(double u) const {
    return std::visit(overloaded{[](const ConstantInteraction& ci) { return Jet{ci.value, 0.0, 0.0, 0.0}; },
                                 [u](const ExponentialInteraction& ei) {
                                     const double v = ei.scale * std::exp(ei.rate * u);
                                     return Jet{v, v * ei.rate, v * ei.rate * ei.rate, v * ei.rate * ei.rate * ei.rate};
                                 },
                                 [u](const QuadraticInteraction& qi) {
                                     const double y = u - qi.center;
                                     return Jet{qi.base + qi.curvature * y * y, 2.0 * qi.curvature * y,
                                                2.0 * qi.curvature, 0.0};
                                 }},
                      interaction);
}

double Landscape::k(double n) const {
    return std::visit(overloaded{[n](const IdentityRate&) { return n; },
                                 [n](const LinearRate& lr) { return lr.slope * n; },
                                 [n](const SaturatingRate& sr) { return n / (1.0 + n / sr.half_saturation); }},
                      rate);
}

double Landscape::dk(double n) const {
    return std::visit(overloaded{[](const IdentityRate&) { return 1.0; },
                                 [](const LinearRate& lr) { return lr.slope; },
                                 [n](const SaturatingRate& sr) {
                                     const double d = 1.0 + n / sr.half_saturation;
                                     return 1.0 / (d * d);
                                 }},
                      rate);
}

double Landscape::k_tilde(double n) const {
    return std::visit(overloaded{[](const IdentityRate&) { return 1.0; },
                                 [](const LinearRate& lr) { return lr.slope; },
                                 [n](const SaturatingRate& sr) { return 1.0 / (1.0 + n / sr.half_saturation); }},
                      rate);
}

double Landscape::dk_tilde(double n) const {
    return std::visit(overloaded{[](const IdentityRate&) { return 0.0; }, [](const LinearRate&) { return 0.0; },
                                 [n](const SaturatingRate& sr) {
                                     const double d = 1.0 + n / sr.half_saturation;
                                     return -1.0 / (sr.half_saturation * d * d);
                                 }},
                      rate);
}

double eval_b0(double u, const Landscape& L) { return L.b0(u).v; }
double eval_b1(double u, const Landscape& L) { return L.b1(u).v; }

double eval_h(double u, double a, const Landscape& L) {
    const double c = L.c(u).v;
    if (!(c > 0.0)) throw LandscapeError("interaction c(u) is not positive at " + describe(u));
    return (L.b0(u).v - a * L.b1(u).v) / c;
}

double eval_dh(double u, double a, const Landscape& L) {
    const Jet c = L.c(u);
    if (!(c.v > 0.0)) throw LandscapeError("interaction c(u) is not positive at " + describe(u));
    const Jet b0 = L.b0(u), b1 = L.b1(u);
    const double b = b0.v - a * b1.v;
    const double db = b0.d1 - a * b1.d1;
    return (db * c.v - b * c.d1) / (c.v * c.v);
}

std::vector<double> GridSpec::nodes() const {
    std::vector<double> out;
    if (points <= 0) return out;
    if (points == 1) return {range.lo};
    out.reserve(static_cast<std::size_t>(points));
    const double step = range.width() / static_cast<double>(points - 1);
    for (int i = 0; i < points; ++i) out.push_back(i + 1 == points ? range.hi : range.lo + step * i);
    return out;
}

bool HypothesisReport::all_pass() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.pass; }) &&
           nonpositive_interaction.empty();
}

HypothesisReport check_hypotheses(const Landscape& L, const GridSpec& u_grid, const GridSpec& a_grid,
                                  const HypothesisOptions& opts) {
    if (u_grid.points < 2 || a_grid.points < 1) throw LandscapeError("hypothesis grids must be non-empty");
    HypothesisReport rep;
    rep.u_grid = u_grid;
    rep.a_grid = a_grid;
    const auto us = u_grid.nodes();
    const auto as = a_grid.nodes();

    for (double u : us) {
        if (!(L.c(u).v > 0.0)) rep.nonpositive_interaction.push_back(u);
    }

    // H1: k vanishes only at 0 and k'(0) > 0; the analytic k'(0) is cross-checked by a central difference.
    {
        auto& v = rep.verdicts[0];
        v.name = "H1";
        const double dk0 = L.dk(0.0);
        const double step = 1e-5;
        const double fd = (L.k(step) - L.k(-step)) / (2.0 * step);
        if (L.k(0.0) != 0.0 || !(dk0 > 0.0)) {
            v.pass = false;
            v.detail = "k(0) != 0 or k'(0) <= 0";
            v.witnesses.push_back({0.0, kNaN});
        } else if (std::abs(fd - dk0) > 1e-6 * std::max(1.0, std::abs(dk0))) {
            v.pass = false;
            v.detail = "analytic k'(0) disagrees with finite difference";
            v.witnesses.push_back({0.0, kNaN});
        }
        for (int i = 1; i <= 200 && v.pass; ++i) {
            const double n = 2.0 * i / 200.0;
            if (!(L.k(n) > 0.0)) {
                v.pass = false;
                v.detail = "k vanishes or changes sign for n > 0";
                v.witnesses.push_back({n, kNaN});
            }
        }
        if (v.pass) v.detail = "k(0)=0, k'(0)=" + std::to_string(dk0);
    }

    // H2: b1 > 0 and b1' < 0.
    {
        auto& v = rep.verdicts[1];
        v.name = "H2";
        for (double u : us) {
            const Jet b1 = L.b1(u);
            if (!(b1.v > 0.0) || !(b1.d1 < 0.0)) v.witnesses.push_back({u, kNaN});
        }
        v.pass = v.witnesses.empty();
        v.detail = v.pass ? "b1 > 0 and b1' < 0 on grid" : std::to_string(v.witnesses.size()) + " grid points violate";
    }

    // H3: c'/c > b1'/b1, i.e. b1' c - c' b1 < 0 when c, b1 > 0.
    {
        auto& v = rep.verdicts[2];
        v.name = "H3";
        for (double u : us) {
            const Jet b1 = L.b1(u), c = L.c(u);
            const bool ok = c.v > 0.0 && b1.v > 0.0 && c.d1 / c.v > b1.d1 / b1.v;
            if (!ok) v.witnesses.push_back({u, kNaN});
        }
        v.pass = v.witnesses.empty();
        v.detail = v.pass ? "c'/c > b1'/b1 on grid" : std::to_string(v.witnesses.size()) + " grid points violate";
    }

    // H4: isolated, finitely many critical points of h(., a) and decaying tails.
    {
        auto& v = rep.verdicts[3];
        v.name = "H4";
        const double lo = u_grid.range.lo, hi = u_grid.range.hi;
        for (double a : as) {
            int sign_changes = 0;
            int flat_run = 0;
            double prev = eval_dh(us.front(), a, L);
            for (std::size_t i = 1; i < us.size(); ++i) {
                const double cur = eval_dh(us[i], a, L);
                if ((prev > 0.0 && cur < 0.0) || (prev < 0.0 && cur > 0.0)) ++sign_changes;
                flat_run = std::abs(cur) < opts.derivative_tol ? flat_run + 1 : 0;
                if (flat_run >= 3) {
                    v.witnesses.push_back({us[i], a});
                    v.detail = "non-isolated critical points";
                    break;
                }
                prev = cur;
            }
            if (sign_changes > opts.max_critical_points) {
                v.witnesses.push_back({lo, a});
                v.detail = "too many critical points";
            }
            for (int i = 0; i <= opts.tail_points; ++i) {
                const double t = opts.tail_length * i / opts.tail_points;
                if (!(eval_dh(lo - t, a, L) > 0.0)) {
                    v.witnesses.push_back({lo - t, a});
                    v.detail = "h not increasing on left tail";
                    break;
                }
            }
            for (int i = 0; i <= opts.tail_points; ++i) {
                const double t = opts.tail_length * i / opts.tail_points;
                if (!(eval_dh(hi + t, a, L) < 0.0)) {
                    v.witnesses.push_back({hi + t, a});
                    v.detail = "h not decreasing on right tail";
                    break;
                }
            }
        }
        v.pass = v.witnesses.empty();
        if (v.pass) v.detail = "isolated critical points and decaying tails";
    }
    return rep;
}

namespace {

Landscape make(std::string name, std::array<double, 3> r, std::array<double, 3> g, std::array<double, 3> ub,
               DecayPolynomial p, std::vector<Sigmoid> s, double a_max) {
    Landscape L;
    L.name = std::move(name);
    for (int j = 0; j < 3; ++j) L.bumps.push_back({r[j], g[j], ub[j]});
    L.decay = p;
    L.efficacy = std::move(s);
    L.max_dose = a_max;
    return L;
}

}  // namespace

Landscape preset(const std::string& name) {
    if (name == "a")
        return make("a", {0, 0.41, 0.86}, {0, 1.9, 2.5}, {0, 0.8, 0}, {0.1, 0.65, 3},
                    {Sigmoid{{1, 0.9, 1, 0.5, 1, 0.3, 0}}}, 1.75);
    if (name == "b")
        return make("b", {0.26, 0.4, 0.96}, {13, 8.9, 7.9}, {-0.01, 0.35, 0.87}, {2.8, 0.6, 6},
                    {Sigmoid{{1, 0.9, 1, 11, 1, 0.5, 0}}}, 0.7);
    if (name == "c")
        return make("c", {0.5, 0.7, 0.35}, {18.6, 9.8, 8.8}, {0, 0.25, 0.68}, {10, 0.55, 5},
                    {Sigmoid{{-0.462, 1, 10.1, -1.44, 10, 0, 0}}, Sigmoid{{-0.633, 1, 10.1, -1.44, 10, 3.7, 1.1}}},
                    0.7);
    if (name == "d")
        return make("d", {0.6, 0.4, 0.95}, {14.3, 13.7, 13.8}, {0, 0.47, 0.87}, {1, 0.46, 6},
                    {Sigmoid{{1, 0.9, 1, 6.7, 1, 0.2, 0}}}, 1.3);
    // Constant efficacy: violates the strict monotonicity of b1.
    if (name == "flat-efficacy")
        return make("flat-efficacy", {0, 0.41, 0.86}, {0, 1.9, 2.5}, {0, 0.8, 0}, {0.1, 0.65, 3},
                    {Sigmoid{{0, 1, 0, 0, 0, 0, 0.5}}}, 1.75);
    throw LandscapeError("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() { return {"a", "b", "c", "d"}; }

}  // namespace evoctl
