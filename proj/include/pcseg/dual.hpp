#pragma once

#include <cmath>

namespace pcseg {

// Forward-mode dual number carrying two derivative slots (d/dr_i, d/dr_next).
// Segment losses are rational in the two predicted radii once the wedge angle
// is fixed, so propagating duals through the closed forms yields exact
// analytic partials of whatever branch was evaluated.
struct Dual2 {
    double v = 0.0;
    double d0 = 0.0;
    double d1 = 0.0;

    Dual2() = default;
    Dual2(double value) : v(value) {}
    Dual2(double value, double g0, double g1) : v(value), d0(g0), d1(g1) {}

    static Dual2 var0(double value) { return {value, 1.0, 0.0}; }
    static Dual2 var1(double value) { return {value, 0.0, 1.0}; }
};

inline Dual2 operator+(const Dual2& a, const Dual2& b) { return {a.v + b.v, a.d0 + b.d0, a.d1 + b.d1}; }
inline Dual2 operator-(const Dual2& a, const Dual2& b) { return {a.v - b.v, a.d0 - b.d0, a.d1 - b.d1}; }
inline Dual2 operator-(const Dual2& a) { return {-a.v, -a.d0, -a.d1}; }
inline Dual2 operator*(const Dual2& a, const Dual2& b) {
    return {a.v * b.v, a.d0 * b.v + a.v * b.d0, a.d1 * b.v + a.v * b.d1};
}
inline Dual2 operator/(const Dual2& a, const Dual2& b) {
    const double inv = 1.0 / b.v;
    const double q = a.v * inv;
    return {q, (a.d0 - q * b.d0) * inv, (a.d1 - q * b.d1) * inv};
}

inline Dual2 operator+(double a, const Dual2& b) { return Dual2(a) + b; }
inline Dual2 operator-(double a, const Dual2& b) { return Dual2(a) - b; }
inline Dual2 operator*(double a, const Dual2& b) { return Dual2(a) * b; }
inline Dual2 operator/(double a, const Dual2& b) { return Dual2(a) / b; }

inline Dual2 min(const Dual2& a, const Dual2& b) { return a.v <= b.v ? a : b; }
inline Dual2 max(const Dual2& a, const Dual2& b) { return a.v >= b.v ? a : b; }
inline Dual2 abs(const Dual2& a) { return a.v < 0.0 ? -a : a; }
inline Dual2 sqrt(const Dual2& a) {
    const double s = std::sqrt(a.v);
    const double g = 0.5 / s;
    return {s, g * a.d0, g * a.d1};
}

}  // namespace pcseg
