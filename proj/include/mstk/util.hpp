#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mstk {

// Errors raised by the toolkit. Callers that need to distinguish input
// problems from numeric ones catch the concrete type.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConvergenceError : public std::runtime_error {
public:
    explicit ConvergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace rng {

// Stable 64-bit stream label hash (FNV-1a over the label, folded into the
// master seed, finalized splitmix64-style). Every randomized stage derives
// its own stream as derive_seed(master, "stage-name"), so adding a stage
// never perturbs another stage's draws.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : label) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::uint64_t z = master ^ h;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_engine(std::uint64_t master, std::string_view label) {
    return std::mt19937_64(derive_seed(master, label));
}

}  // namespace rng

namespace num {

inline double log_sum_exp(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

inline double sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

// Standard normal CDF.
inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Two-sided p-value for a z statistic.
inline double z_pvalue(double z) {
    return 2.0 * normal_cdf(-std::fabs(z));
}

double gamma_p(double a, double x);  // regularized lower incomplete gamma

// Survival function of the chi-square distribution with df degrees of freedom.
inline double chi2_sf(double x, double df) {
    if (x <= 0.0) return 1.0;
    return 1.0 - gamma_p(df / 2.0, x / 2.0);
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw DataError("median of empty vector");
    std::size_t n = v.size();
    std::sort(v.begin(), v.end());
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Dense row-major matrix, just large enough for the Newton solves here.
class Matrix {
public:
    Matrix() : rows_(0), cols_(0) {}
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows_(r), cols_(c), data_(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    std::size_t rows_, cols_;
    std::vector<double> data_;
};

// Solves A x = b for symmetric positive definite A via Cholesky.
// Throws DataError when A is not (numerically) positive definite; the
// message names the offending pivot column when names are supplied.
std::vector<double> cholesky_solve(Matrix a, std::vector<double> b,
                                   const std::vector<std::string>* col_names = nullptr);

// Inverse of an SPD matrix (used for observed-information standard errors).
Matrix spd_inverse(const Matrix& a, const std::vector<std::string>* col_names = nullptr);

}  // namespace num

namespace str {

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);
std::string lower(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);

// Formats a double with the given number of decimals (fixed notation),
// trimming to a stable text form so that identical runs emit identical bytes.
std::string fixed(double v, int decimals);

// Compact general formatting used in CSV reports.
std::string num(double v);

}  // namespace str

namespace csv {

// Quotes a field if it contains a comma, quote or newline.
std::string escape(const std::string& field);

// Splits one CSV line honoring double-quote escaping.
std::vector<std::string> parse_line(const std::string& line);

}  // namespace csv

}  // namespace mstk
