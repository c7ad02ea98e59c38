#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gridveil {

using Bytes = std::vector<std::uint8_t>;

std::string to_hex(const Bytes& data);
std::string to_hex(const std::uint8_t* data, std::size_t len);
Bytes from_hex(std::string_view hex);

// Deterministic RNG. All randomness in the project flows through this so a
// scenario seed fully determines a run. Mapping helpers are hand-rolled
// because std::uniform_int_distribution is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    std::uint64_t next_u64() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, n), n > 0; rejection sampling to avoid modulo bias
    std::uint64_t uniform(std::uint64_t n) {
        if (n == 0)
            throw std::invalid_argument("Rng::uniform: n must be > 0");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    // uniform in [lo, hi] inclusive
    std::uint64_t uniform_range(std::uint64_t lo, std::uint64_t hi) {
        return lo + uniform(hi - lo + 1);
    }

    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    void fill(std::uint8_t* out, std::size_t len) {
        std::size_t i = 0;
        while (i < len) {
            std::uint64_t v = next_u64();
            for (int b = 0; b < 8 && i < len; ++b, ++i)
                out[i] = static_cast<std::uint8_t>(v >> (8 * b));
        }
    }

    Bytes bytes(std::size_t len) {
        Bytes out(len);
        fill(out.data(), len);
        return out;
    }

    // Knuth's product method; fine for the small rates used here
    std::uint32_t poisson(double mean) {
        if (mean <= 0.0)
            return 0;
        double limit = std::exp(-mean);
        double p = 1.0;
        std::uint32_t k = 0;
        do {
            ++k;
            p *= uniform01();
        } while (p > limit);
        return k - 1;
    }

    // derive an independent stream for a named purpose
    Rng fork(std::string_view label) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : label)
            h = (h ^ static_cast<std::uint8_t>(c)) * 0x100000001b3ULL;
        return Rng(next_u64() ^ h);
    }

private:
    std::uint64_t state_;
};

// Domain operation result: an error code plus an optional value. Rejections
// are values, not exceptions; exceptions are reserved for misuse and I/O.
template <typename T, typename E>
struct Outcome {
    E code{};
    std::optional<T> value;
    std::string detail;

    bool ok() const { return code == E{}; }
    const T& operator*() const { return *value; }
    T& operator*() { return *value; }
    const T* operator->() const { return &*value; }

    static Outcome success(T v) { return Outcome{E{}, std::move(v), {}}; }
    static Outcome failure(E e, std::string d = {}) { return Outcome{e, std::nullopt, std::move(d)}; }
};

template <typename E>
struct Status {
    E code{};
    std::string detail;
    bool ok() const { return code == E{}; }
    static Status success() { return Status{E{}, {}}; }
    static Status failure(E e, std::string d = {}) { return Status{e, std::move(d)}; }
};

}  // namespace gridveil
