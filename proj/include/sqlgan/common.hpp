#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace sqlgan {

// Raised for bad user input: config files, flags, malformed records.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a computation cannot continue (non-finite loss, bad checkpoint).
class RuntimeAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A named, mutable view over one parameter (or gradient) tensor.
struct TensorRef {
    std::string name;
    double* data = nullptr;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;

    std::span<double> values() const { return {data, static_cast<std::size_t>(rows * cols)}; }
};

inline TensorRef tensor_ref(std::string name, Matrix& m) { return {std::move(name), m.data(), m.rows(), m.cols()}; }
inline TensorRef tensor_ref(std::string name, Vector& v) { return {std::move(name), v.data(), v.rows(), 1}; }

// Global L2 norm over a collection of tensors.
double global_norm(std::span<const TensorRef> tensors);

bool all_finite(std::span<const TensorRef> tensors);

void fill_zero(std::span<const TensorRef> tensors);

// Deterministic random source. All randomness in the project flows from one
// root seed through named substreams, and none of the transforms below
// depend on implementation-defined <random> distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }
    Rng substream(std::string_view name) const;
    Rng substream(std::uint64_t index) const;

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 bits of precision.
    double uniform();
    // Uniform integer in [0, n), n > 0, by rejection.
    std::size_t uniform_index(std::size_t n);
    // Standard normal via Box-Muller.
    double normal();

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_index(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

// Lower-case hex SHA-256 digests.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

// Shortest round-trip decimal representation, locale independent.
std::string format_double(double v);

}  // namespace sqlgan
