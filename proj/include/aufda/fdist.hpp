#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace aufda {

/// Fisher F distribution with df1, df2 > 0.
struct FDist {
    double df1;
    double df2;

    FDist(double df1_, double df2_) : df1(df1_), df2(df2_) {
        if (!(df1 > 0.0) || !(df2 > 0.0))
            throw std::invalid_argument("FDist: degrees of freedom must be positive");
    }
};

namespace detail {

// Lentz-evaluated continued fraction for the incomplete beta (the classic
// betacf form). Capped at 500 terms; df up to ~1e4 converges well before.
inline double beta_continued_fraction(double x, double a, double b) {
    constexpr int kMaxIter = 500;
    constexpr double kTiny = 1e-300;
    constexpr double kEps = 1e-15;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw std::runtime_error("incomplete beta: continued fraction did not converge in 500 "
                             "iterations (a=" + std::to_string(a) +
                             ", b=" + std::to_string(b) + ")");
}

/// Regularized incomplete beta I_x(a, b), with the symmetry switch at
/// x = (a+1)/(a+b+2) so the continued fraction is always in its fast region.
inline double regularized_incomplete_beta(double x, double a, double b) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    if (x < (a + 1.0) / (a + b + 2.0))
        return std::exp(log_front) * beta_continued_fraction(x, a, b) / a;
    return 1.0 - std::exp(log_front) * beta_continued_fraction(1.0 - x, b, a) / b;
}

}  // namespace detail

/// P(F <= x). x must be >= 0.
inline double f_cdf(const FDist& dist, double x) {
    if (x < 0.0) throw std::domain_error("f_cdf: x must be >= 0");
    if (x == 0.0) return 0.0;
    const double y = dist.df1 * x / (dist.df1 * x + dist.df2);
    return detail::regularized_incomplete_beta(y, 0.5 * dist.df1, 0.5 * dist.df2);
}

/// Quantile: the x with f_cdf(x) = p, by bracketing + bisection.
inline double f_quantile(const FDist& dist, double p) {
    if (!(p > 0.0) || !(p < 1.0))
        throw std::domain_error("f_quantile: p must be in (0, 1)");
    double hi = 1.0;
    int grow = 0;
    while (f_cdf(dist, hi) < p) {
        hi *= 2.0;
        if (++grow > 2000) throw std::runtime_error("f_quantile: bracket growth failed");
    }
    double lo = 0.0;
    for (int it = 0; it < 2000; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;  // interval at floating-point resolution
        (f_cdf(dist, mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace aufda
