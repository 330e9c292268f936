#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace evoctl {

/// Value and first three derivatives of a scalar function at a point.
struct Jet {
    double v = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double d3 = 0.0;
};

struct GaussianBump {
    double rate = 0.0;     // r_j
    double width = 0.0;    // g_j, 1/trait^2
    double center = 0.0;   // u_j
};

/// Even-power decay p1 (u - p2)^(2 p3).
struct DecayPolynomial {
    double scale = 0.0;
    double center = 0.0;
    int half_power = 1;
};

/// One term c1 / (c2 + c3 exp(c4 (c5 u - c6))) + c7.
struct Sigmoid {
    std::array<double, 7> c{};
};

struct ConstantInteraction {
    double value = 1.0;
};
/// c(u) = scale * exp(rate * u)
struct ExponentialInteraction {
    double scale = 1.0;
    double rate = 0.0;
};
/// c(u) = base + curvature * (u - center)^2
struct QuadraticInteraction {
    double base = 1.0;
    double curvature = 0.0;
    double center = 0.0;
};
using InteractionSpec = std::variant<ConstantInteraction, ExponentialInteraction, QuadraticInteraction>;

/// k(n) = n
struct IdentityRate {};
/// k(n) = slope * n
struct LinearRate {
    double slope = 1.0;
};
/// k(n) = n / (1 + n / half_saturation); continued by the same closed form for n < 0.
struct SaturatingRate {
    double half_saturation = 1.0;
};
using RateSpec = std::variant<IdentityRate, LinearRate, SaturatingRate>;

class LandscapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One model instance: b0, b1, c, k and the timescale separation rate.
struct Landscape {
    std::string name;
    std::vector<GaussianBump> bumps;
    DecayPolynomial decay;
    std::vector<Sigmoid> efficacy;
    InteractionSpec interaction = ConstantInteraction{};
    RateSpec rate = IdentityRate{};
    double epsilon = 0.01;
    /// Largest tolerable dose a_M; informational, used as the default dose grid.
    double max_dose = 1.0;

    /// Throws LandscapeError on structural problems (p3 < 1, negative g_j, epsilon <= 0, ...).
    void validate() const;

    Jet b0(double u) const;
    Jet b1(double u) const;
    Jet c(double u) const;

    /// k(n) and k'(n).
    double k(double n) const;
    double dk(double n) const;
    /// k(n)/n continued at n = 0 by k'(0).
    double k_tilde(double n) const;
    double dk_tilde(double n) const;
};

double eval_b0(double u, const Landscape& L);
double eval_b1(double u, const Landscape& L);
/// (b0(u) - a b1(u)) / c(u); throws LandscapeError if c(u) <= 0.
double eval_h(double u, double a, const Landscape& L);
/// d/du h(u, a).
double eval_dh(double u, double a, const Landscape& L);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
};

struct GridSpec {
    Interval range;
    int points = 2000;

    std::vector<double> nodes() const;
};

struct HypothesisVerdict {
    std::string name;
    bool pass = true;
    std::string detail;
    /// (u, a) pairs where the hypothesis fails; a is NaN for dose-independent checks.
    std::vector<std::array<double, 2>> witnesses;
};

struct HypothesisReport {
    std::array<HypothesisVerdict, 4> verdicts;
    GridSpec u_grid;
    GridSpec a_grid;
    /// c(u) <= 0 somewhere on the grid.
    std::vector<double> nonpositive_interaction;

    bool all_pass() const;
};

struct HypothesisOptions {
    double derivative_tol = 1e-8;
    /// Tails for the radial decay check are sampled on [lo - tail, lo] and [hi, hi + tail].
    double tail_length = 1.0;
    int tail_points = 200;
    /// More sign changes of dh/du than this on the grid is treated as non-isolated critical points.
    int max_critical_points = 50;
};

HypothesisReport check_hypotheses(const Landscape& L, const GridSpec& u_grid, const GridSpec& a_grid,
                                  const HypothesisOptions& opts = {});

/// Built-in example landscapes "a", "b", "c", "d".
Landscape preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace evoctl
