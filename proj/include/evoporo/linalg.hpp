#pragma once

#include <array>
#include <cmath>

namespace evoporo {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator-() const { return {-x, -y}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }

    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

// 2x2 matrix, row-major.
struct Mat2 {
    std::array<double, 4> a{0.0, 0.0, 0.0, 0.0};

    Mat2() = default;
    Mat2(double a00, double a01, double a10, double a11) : a{a00, a01, a10, a11} {}

    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static Mat2 outer(const Vec2& u, const Vec2& v) {
        return {u.x * v.x, u.x * v.y, u.y * v.x, u.y * v.y};
    }

    double operator()(int i, int j) const { return a[2 * i + j]; }
    double& operator()(int i, int j) { return a[2 * i + j]; }

    Mat2 operator+(const Mat2& o) const {
        return {a[0] + o.a[0], a[1] + o.a[1], a[2] + o.a[2], a[3] + o.a[3]};
    }
    Mat2 operator-(const Mat2& o) const {
        return {a[0] - o.a[0], a[1] - o.a[1], a[2] - o.a[2], a[3] - o.a[3]};
    }
    Mat2 operator*(double s) const { return {a[0] * s, a[1] * s, a[2] * s, a[3] * s}; }

    Mat2 operator*(const Mat2& o) const {
        return {a[0] * o.a[0] + a[1] * o.a[2], a[0] * o.a[1] + a[1] * o.a[3],
                a[2] * o.a[0] + a[3] * o.a[2], a[2] * o.a[1] + a[3] * o.a[3]};
    }
    Vec2 operator*(const Vec2& v) const {
        return {a[0] * v.x + a[1] * v.y, a[2] * v.x + a[3] * v.y};
    }

    Mat2 transposed() const { return {a[0], a[2], a[1], a[3]}; }
    double det() const { return a[0] * a[3] - a[1] * a[2]; }
    double trace() const { return a[0] + a[3]; }

    Mat2 inverse() const {
        const double d = det();
        return {a[3] / d, -a[1] / d, -a[2] / d, a[0] / d};
    }

    double max_abs() const {
        return std::max(std::max(std::fabs(a[0]), std::fabs(a[1])),
                        std::max(std::fabs(a[2]), std::fabs(a[3])));
    }

    // Eigenvalues of the symmetrized matrix; used for SPD checks and
    // coercivity floors.
    std::array<double, 2> sym_eigenvalues() const {
        const double m = 0.5 * (a[0] + a[3]);
        const double off = 0.5 * (a[1] + a[2]);
        const double d = 0.5 * (a[0] - a[3]);
        const double r = std::sqrt(d * d + off * off);
        return {m - r, m + r};
    }
};

inline Mat2 operator*(double s, const Mat2& m) { return m * s; }

} // namespace evoporo
