#pragma once

#include <cmath>

namespace evoctl {

/// Point or tangent vector in (trait, population) coordinates.
struct Vec2 {
    double u = 0.0;
    double n = 0.0;

    constexpr Vec2& operator+=(const Vec2& o) {
        u += o.u;
        n += o.n;
        return *this;
    }
    constexpr Vec2& operator-=(const Vec2& o) {
        u -= o.u;
        n -= o.n;
        return *this;
    }
    constexpr Vec2& operator*=(double s) {
        u *= s;
        n *= s;
        return *this;
    }
    friend constexpr Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
    friend constexpr Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
    friend constexpr Vec2 operator*(double s, Vec2 a) { return a *= s; }
    friend constexpr Vec2 operator*(Vec2 a, double s) { return a *= s; }
    friend constexpr Vec2 operator-(const Vec2& a) { return {-a.u, -a.n}; }
    friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

using State = Vec2;

constexpr double dot(const Vec2& a, const Vec2& b) { return a.u * b.u + a.n * b.n; }
/// Rotation by +90 degrees: (v1, v2) -> (-v2, v1).
constexpr Vec2 perp(const Vec2& v) { return {-v.n, v.u}; }
/// <a^perp, b>
constexpr double cross(const Vec2& a, const Vec2& b) { return a.u * b.n - a.n * b.u; }
inline double norm(const Vec2& v) { return std::hypot(v.u, v.n); }
inline double distance(const Vec2& a, const Vec2& b) { return norm(a - b); }
inline bool finite(const Vec2& v) { return std::isfinite(v.u) && std::isfinite(v.n); }

/// Row-major 2x2 matrix.
struct Matrix2 {
    double a11 = 0, a12 = 0, a21 = 0, a22 = 0;
};

}  // namespace evoctl
