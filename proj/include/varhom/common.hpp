// Shared vocabulary: error types, small fixed-capacity vectors, norms.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace varhom {

/// Largest spatial dimension d and number of components m supported.
inline constexpr int kMaxDim = 3;
inline constexpr int kMaxComp = 3;
inline constexpr int kMaxMatrix = kMaxDim * kMaxComp;

/// Bad input: violated precondition, malformed parameters or config.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical failure: non-finite energies, exhausted budgets that cannot be
/// reported as a best-so-far value.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Frobenius norm of a flattened m x d matrix (or Euclidean norm of a vector).
inline double norm2(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

inline double pow_norm(std::span<const double> a, double p) {
    return std::pow(norm2(a), p);
}

inline bool all_finite(std::span<const double> a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

/// Point in R^d with d <= kMaxDim, stored inline.
struct SmallVec {
    std::array<double, kMaxMatrix> data{};
    int size = 0;

    SmallVec() = default;
    explicit SmallVec(int n) : size(n) {}
    SmallVec(std::span<const double> s) : size(static_cast<int>(s.size())) {
        for (int i = 0; i < size; ++i) data[i] = s[i];
    }
    double& operator[](int i) { return data[i]; }
    double operator[](int i) const { return data[i]; }
    std::span<double> span() { return {data.data(), static_cast<std::size_t>(size)}; }
    std::span<const double> span() const { return {data.data(), static_cast<std::size_t>(size)}; }
    operator std::span<const double>() const { return span(); }
};

/// Finite surrogates for limsup / liminf of a sequence: max / min over the
/// last k entries.
inline double tail_max(std::span<const double> seq, std::size_t k) {
    require(!seq.empty(), "tail_max: empty sequence");
    double v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = seq.size() - std::min(k, seq.size()); i < seq.size(); ++i) v = std::max(v, seq[i]);
    return v;
}

inline double tail_min(std::span<const double> seq, std::size_t k) {
    require(!seq.empty(), "tail_min: empty sequence");
    double v = std::numeric_limits<double>::infinity();
    for (std::size_t i = seq.size() - std::min(k, seq.size()); i < seq.size(); ++i) v = std::min(v, seq[i]);
    return v;
}

/// Requires a strictly monotone schedule; `field` names it in the message.
inline void require_strictly_monotone(std::span<const double> seq, bool decreasing, const std::string& field) {
    require(!seq.empty(), field + " must be nonempty");
    for (std::size_t i = 1; i < seq.size(); ++i) {
        const bool ok = decreasing ? seq[i] < seq[i - 1] : seq[i] > seq[i - 1];
        require(ok, field + " must be strictly " + (decreasing ? "decreasing" : "increasing"));
    }
}

}  // namespace varhom
