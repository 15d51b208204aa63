#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace ddfeec {

// Forward-mode scalar carrying one tangent.
struct Dual {
    double v = 0.0;
    double d = 0.0;
    Dual() = default;
    Dual(double value, double tangent = 0.0) : v(value), d(tangent) {}
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }
inline Dual& operator+=(Dual& a, Dual b) { return a = a + b; }
inline Dual& operator-=(Dual& a, Dual b) { return a = a - b; }
inline Dual& operator*=(Dual& a, Dual b) { return a = a * b; }
inline Dual& operator/=(Dual& a, Dual b) { return a = a / b; }
inline Dual exp(Dual a) {
    const double e = std::exp(a.v);
    return {e, e * a.d};
}

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline Dual sigmoid(Dual x) {
    const double s = sigmoid(x.v);
    return {s, s * (1.0 - s) * x.d};
}

inline constexpr double kKnotFloor = 1e-3;
inline constexpr int kMaxDegree = 6;

// Breakpoints 0 = t_0 < ... < t_n = 1 from n logits: increments sigmoid(l) + floor, normalized.
template <class T>
std::vector<T> realize_knots_t(const std::vector<T>& logits) {
    const std::size_t n = logits.size();
    std::vector<T> inc(n);
    T total(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        inc[i] = sigmoid(logits[i]) + T(kKnotFloor);
        total += inc[i];
    }
    std::vector<T> t(n + 1);
    t[0] = T(0.0);
    T acc(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        acc += inc[i];
        t[i + 1] = acc / total;
    }
    t[n] = T(1.0);
    return t;
}

inline std::vector<double> realize_knots(const std::vector<double>& logits) {
    return realize_knots_t<double>(logits);
}

// Cell index c with breaks[c] <= x < breaks[c+1]; the last cell is closed.
inline int find_cell(const std::vector<double>& breaks, double x) {
    const int n = static_cast<int>(breaks.size()) - 1;
    const auto it = std::upper_bound(breaks.begin(), breaks.end(), x);
    return std::clamp(static_cast<int>(it - breaks.begin()) - 1, 0, n - 1);
}

// Values and first derivatives of the degree+1 B-splines that are nonzero on cell c of the open
// (clamped) knot vector built from the breakpoints. Function k of the output is global basis
// index c + k.
template <class T>
void bspline_cell(const std::vector<T>& breaks, int degree, int c, T x, T* val, T* der) {
    const int n = static_cast<int>(breaks.size()) - 1;
    auto U = [&](int i) -> T {
        const int j = i - degree;
        if (j <= 0) return breaks[0];
        if (j >= n) return breaks[n];
        return breaks[j];
    };
    const int span = c + degree;
    T N[kMaxDegree + 1], left[kMaxDegree + 1], right[kMaxDegree + 1], Nlow[kMaxDegree + 1];
    N[0] = T(1.0);
    for (int j = 1; j <= degree; ++j) {
        left[j] = x - U(span + 1 - j);
        right[j] = U(span + j) - x;
        T saved(0.0);
        for (int r = 0; r < j; ++r) {
            const T tmp = N[r] / (right[r + 1] + left[j - r]);
            N[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        N[j] = saved;
        if (j == degree - 1)
            for (int r = 0; r <= j; ++r) Nlow[r] = N[r];
    }
    for (int k = 0; k <= degree; ++k) val[k] = N[k];
    if (degree == 0) {
        der[0] = T(0.0);
        return;
    }
    if (degree == 1) Nlow[0] = T(1.0);
    // N'_{i,p} = p N_{i,p-1}/(U_{i+p}-U_i) - p N_{i+1,p-1}/(U_{i+p+1}-U_{i+1}), i = span-p+k
    for (int k = 0; k <= degree; ++k) {
        const int i = span - degree + k;
        T d(0.0);
        if (k >= 1) d += T(static_cast<double>(degree)) * Nlow[k - 1] / (U(i + degree) - U(i));
        if (k <= degree - 1) d -= T(static_cast<double>(degree)) * Nlow[k] / (U(i + degree + 1) - U(i + 1));
        der[k] = d;
    }
}

// Greville abscissae of the clamped basis on the given breakpoints.
inline std::vector<double> greville(const std::vector<double>& breaks, int degree) {
    const int n = static_cast<int>(breaks.size()) - 1;
    auto U = [&](int i) {
        const int j = i - degree;
        if (j <= 0) return breaks[0];
        if (j >= n) return breaks[n];
        return breaks[j];
    };
    std::vector<double> g(n + degree);
    for (int a = 0; a < n + degree; ++a) {
        double s = 0.0;
        for (int k = 1; k <= degree; ++k) s += U(a + k);
        g[a] = degree > 0 ? s / degree : 0.5 * (U(a) + U(a + 1));
    }
    return g;
}

}  // namespace ddfeec
