#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "evoctl/dynamics.hpp"
#include "evoctl/landscape.hpp"

namespace evoctl {

class EquilibriumError : public std::runtime_error {
public:
    enum class Kind { h3_violation, non_hyperbolic, grid_too_coarse, window_too_small };
    EquilibriumError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

enum class EqLabel { stable_node, saddle, fold_candidate };
std::string to_string(EqLabel l);

/// Dose making (u, h(u, a)) an equilibrium: a*(u) = (b0'c - c'b0) / (b1'c - c'b1).
double a_star(double u, const Landscape& L);
/// Analytic derivatives of a*.
double a_star_prime(double u, const Landscape& L);
double a_star_second(double u, const Landscape& L);
/// a*' written as c (b'' - c'' h*) / (b1'c - b1 c'); used to cross-check a_star_prime.
double a_star_prime_via_curvature(double u, const Landscape& L);
/// h*(u) = h(u, a*(u)).
double h_star(double u, const Landscape& L);
inline State equilibrium_state(double u, const Landscape& L) { return {u, h_star(u, L)}; }

inline constexpr double kDerivTol = 1e-8;

EqLabel classify(double u, const Landscape& L, double deriv_tol = kDerivTol);

/// Eigenvalues of the upper-triangular reduced Jacobian at (u, h*(u)).
struct EquilibriumSpectrum {
    /// -lambda1(u) = -c(u) / k~(h*(u)), always negative.
    double fast = 0.0;
    /// eps * lambda2(u) * a*'(u) with lambda2 = (b1'c - b1 c') / c < 0.
    double slow = 0.0;
};
EquilibriumSpectrum jacobian_eigs(double u, const Landscape& L);

/// Closed-form Jacobian of f_reduced at an equilibrium on the branch.
Matrix2 equilibrium_jacobian(double u, const Landscape& L);
/// Central-difference Jacobian of f_reduced(., a) at x.
Matrix2 jacobian_fd(const State& x, double a, const Landscape& L, double step = 1e-6);
/// Real eigenvalues (sorted ascending); complex pairs return their real parts.
std::pair<double, double> eigenvalues(const Matrix2& m);
/// Unit eigenvector for a real eigenvalue.
Vec2 eigenvector(const Matrix2& m, double lambda);

struct EquilibriumBranch {
    std::vector<double> u;
    std::vector<double> a;
    std::vector<double> h;
    std::vector<double> a_prime;
    std::vector<EqLabel> label;
    std::vector<EquilibriumSpectrum> eigs;
};

EquilibriumBranch build_branch(const Landscape& L, const GridSpec& grid, double deriv_tol = kDerivTol);

struct Component {
    Interval u;
    /// Left and right endpoint equilibria and the extreme doses they belong to.
    State left;
    State right;
    double a_left = 0.0;
    double a_right = 0.0;
    EqLabel left_label = EqLabel::stable_node;
    EqLabel right_label = EqLabel::stable_node;
    /// 1: node-node, 2: saddle-saddle, 3: node-saddle.
    int type = 1;
};

struct HyperbolicityReport {
    bool hyperbolic = true;
    /// Trait values where a*(u) = a+- with a*'(u) = 0.
    std::vector<double> witnesses;
};

struct BranchOptions {
    GridSpec grid{{-0.5, 1.5}, 2000};
    double deriv_tol = kDerivTol;
    /// Bisection tolerance on u for endpoints and folds.
    double refine_tol = 1e-12;
    /// |a*(u_fold) - a+-| below this counts as a fold touching the range boundary.
    double dose_tol = 1e-9;
};

HyperbolicityReport is_hyperbolic(const DoseRange& A, const Landscape& L, const BranchOptions& opts = {});

/// Maximal u-intervals with a*(u) in A, typed by their endpoints. Throws EquilibriumError.
std::vector<Component> components(const DoseRange& A, const Landscape& L, const BranchOptions& opts = {});

/// Zeros of a*' on the grid, refined by bisection.
std::vector<double> fold_points(const Landscape& L, const BranchOptions& opts = {});

/// CSV with columns u,a_star,h_star,a_star_prime,label.
void write_branch_csv(std::ostream& os, const EquilibriumBranch& br);

}  // namespace evoctl
