#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sugmine {

inline constexpr const char* kToolVersion = "sugmine 0.1.0";

// Error taxonomy mirrored by CLI exit codes: usage -> 1, data -> 2, numeric -> 3.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// Dense row-major matrix of doubles; the numeric workhorse for embeddings,
/// attention and gradients.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    double* row_ptr(int i) { return a.data() + static_cast<size_t>(i) * cols; }
    const double* row_ptr(int i) const { return a.data() + static_cast<size_t>(i) * cols; }

    size_t size() const { return a.size(); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : a)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(a.begin(), a.end(), v); }
};

// C (+)= A * B
inline void matmul_into(const Mat& A, const Mat& B, Mat& C, bool accumulate = false) {
    C.rows = A.rows;
    C.cols = B.cols;
    C.a.resize(static_cast<size_t>(C.rows) * C.cols);
    if (!accumulate) C.fill(0.0);
    for (int i = 0; i < A.rows; ++i) {
        const double* arow = A.row_ptr(i);
        double* crow = C.row_ptr(i);
        for (int p = 0; p < A.cols; ++p) {
            const double aip = arow[p];
            if (aip == 0.0) continue;
            const double* brow = B.row_ptr(p);
            for (int j = 0; j < B.cols; ++j) crow[j] += aip * brow[j];
        }
    }
}

// C (+)= A * B^T
inline void matmul_nt_into(const Mat& A, const Mat& B, Mat& C, bool accumulate = false) {
    C.rows = A.rows;
    C.cols = B.rows;
    C.a.resize(static_cast<size_t>(C.rows) * C.cols);
    if (!accumulate) C.fill(0.0);
    for (int i = 0; i < A.rows; ++i) {
        const double* arow = A.row_ptr(i);
        double* crow = C.row_ptr(i);
        for (int j = 0; j < B.rows; ++j) {
            const double* brow = B.row_ptr(j);
            double s = 0.0;
            for (int p = 0; p < A.cols; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

// C (+)= A^T * B
inline void matmul_tn_into(const Mat& A, const Mat& B, Mat& C, bool accumulate = false) {
    C.rows = A.cols;
    C.cols = B.cols;
    C.a.resize(static_cast<size_t>(C.rows) * C.cols);
    if (!accumulate) C.fill(0.0);
    for (int i = 0; i < A.rows; ++i) {
        const double* arow = A.row_ptr(i);
        const double* brow = B.row_ptr(i);
        for (int p = 0; p < A.cols; ++p) {
            const double aip = arow[p];
            if (aip == 0.0) continue;
            double* crow = C.row_ptr(p);
            for (int j = 0; j < B.cols; ++j) crow[j] += aip * brow[j];
        }
    }
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// FNV-1a, used for run manifests (stability matters, cryptography does not).
inline std::uint64_t fnv1a64(const void* data, size_t n,
                             std::uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hash_hex(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return std::string(buf);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + path);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("short write: " + path);
}

inline std::string file_hash_hex(const std::string& path) { return hash_hex(read_file(path)); }

inline double uniform_real(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
}

inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
    return d(rng);
}

inline void log_line(const std::string& stage, const std::string& msg) {
    std::fprintf(stderr, "[%s] %s\n", stage.c_str(), msg.c_str());
}

}  // namespace sugmine
