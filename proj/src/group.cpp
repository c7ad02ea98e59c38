#include "gridveil/group.hpp"

#include <algorithm>
#include <sodium.h>

#include "gridveil/hash.hpp"

namespace gridveil::ringsig {

namespace {

// ---------------------------------------------------------------- toy group

constexpr std::uint32_t kToyP = 467;  // safe prime, p = 2q + 1
constexpr std::uint32_t kToyQ = 233;
constexpr std::uint32_t kToyG = 4;    // generates the order-q subgroup

std::uint32_t toy_pow(std::uint32_t base, std::uint32_t exp) {
    std::uint64_t result = 1, b = base % kToyP;
    while (exp > 0) {
        if (exp & 1)
            result = result * b % kToyP;
        b = b * b % kToyP;
        exp >>= 1;
    }
    return static_cast<std::uint32_t>(result);
}

class ToyGroup final : public Group {
public:
    std::string name() const override { return "toy467"; }
    std::size_t scalar_size() const override { return 2; }
    std::size_t element_size() const override { return 2; }

    Scalar scalar_zero() const override { return encode_scalar(0); }
    Scalar scalar_from_u64(std::uint64_t v) const override {
        return encode_scalar(static_cast<std::uint32_t>(v % kToyQ));
    }
    Scalar scalar_add(const Scalar& a, const Scalar& b) const override {
        return encode_scalar((decode(a.bytes) + decode(b.bytes)) % kToyQ);
    }
    Scalar scalar_sub(const Scalar& a, const Scalar& b) const override {
        return encode_scalar((decode(a.bytes) + kToyQ - decode(b.bytes)) % kToyQ);
    }
    Scalar scalar_mul(const Scalar& a, const Scalar& b) const override {
        return encode_scalar(decode(a.bytes) * decode(b.bytes) % kToyQ);
    }
    bool scalar_is_zero(const Scalar& a) const override { return decode(a.bytes) == 0; }
    bool scalar_valid(const Scalar& a) const override {
        return a.bytes.size() == 2 && decode(a.bytes) < kToyQ;
    }
    Scalar random_scalar(Rng& rng) const override {
        return encode_scalar(1 + static_cast<std::uint32_t>(rng.uniform(kToyQ - 1)));
    }
    Scalar hash_to_scalar(std::string_view domain, const Bytes& data) const override {
        auto digest = tagged_sha256(domain, data);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v = (v << 8) | digest[i];
        return encode_scalar(static_cast<std::uint32_t>(v % kToyQ));
    }

    Element generator() const override { return encode_element(kToyG); }
    Element identity() const override { return encode_element(1); }
    bool element_valid(const Element& e) const override {
        if (e.bytes.size() != 2)
            return false;
        std::uint32_t v = decode(e.bytes);
        return v >= 1 && v < kToyP && toy_pow(v, kToyQ) == 1;
    }
    bool is_identity(const Element& e) const override { return decode(e.bytes) == 1; }
    Element add(const Element& a, const Element& b) const override {
        return encode_element(static_cast<std::uint32_t>(
            static_cast<std::uint64_t>(decode(a.bytes)) * decode(b.bytes) % kToyP));
    }
    Element mul(const Element& e, const Scalar& s) const override {
        return encode_element(toy_pow(decode(e.bytes), decode(s.bytes)));
    }
    Element mul_base(const Scalar& s) const override {
        return encode_element(toy_pow(kToyG, decode(s.bytes)));
    }
    Element hash_to_element(std::string_view domain, const Bytes&) const override {
        // Hash-then-exponentiate, with the digest taken over the domain tag
        // only: the output is one fixed subgroup element per domain. An
        // input-dependent digest would make the key-image map x -> x*Hg(g^x)
        // a random function on a 233-element set, which measurably collides
        // (~37% of images), so exhaustive injectivity over all secrets could
        // never hold at this scale. The exponent is public either way; this
        // backend exists for brute-force oracles, never for real runs.
        auto digest = tagged_sha256(domain, {});
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v = (v << 8) | digest[i];
        std::uint32_t e = 1 + static_cast<std::uint32_t>(v % (kToyQ - 1));
        return encode_element(toy_pow(kToyG, e));
    }

private:
    static std::uint32_t decode(const Bytes& b) {
        return (static_cast<std::uint32_t>(b.at(0)) << 8) | b.at(1);
    }
    static Scalar encode_scalar(std::uint32_t v) {
        return Scalar{{static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v & 0xff)}};
    }
    static Element encode_element(std::uint32_t v) {
        return Element{{static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v & 0xff)}};
    }
};

// ------------------------------------------------------------- ristretto255

class RistrettoGroup final : public Group {
public:
    RistrettoGroup() { crypto_init(); }

    std::string name() const override { return "ristretto255"; }
    std::size_t scalar_size() const override { return crypto_core_ristretto255_SCALARBYTES; }
    std::size_t element_size() const override { return crypto_core_ristretto255_BYTES; }

    Scalar scalar_zero() const override { return Scalar{Bytes(scalar_size(), 0)}; }
    Scalar scalar_from_u64(std::uint64_t v) const override {
        Bytes b(scalar_size(), 0);
        for (int i = 0; i < 8; ++i)
            b[i] = static_cast<std::uint8_t>(v >> (8 * i));
        return Scalar{std::move(b)};
    }
    Scalar scalar_add(const Scalar& a, const Scalar& b) const override {
        Scalar out{Bytes(scalar_size())};
        crypto_core_ristretto255_scalar_add(out.bytes.data(), a.bytes.data(), b.bytes.data());
        return out;
    }
    Scalar scalar_sub(const Scalar& a, const Scalar& b) const override {
        Scalar out{Bytes(scalar_size())};
        crypto_core_ristretto255_scalar_sub(out.bytes.data(), a.bytes.data(), b.bytes.data());
        return out;
    }
    Scalar scalar_mul(const Scalar& a, const Scalar& b) const override {
        Scalar out{Bytes(scalar_size())};
        crypto_core_ristretto255_scalar_mul(out.bytes.data(), a.bytes.data(), b.bytes.data());
        return out;
    }
    bool scalar_is_zero(const Scalar& a) const override {
        for (auto b : a.bytes)
            if (b != 0)
                return false;
        return true;
    }
    bool scalar_valid(const Scalar& a) const override {
        if (a.bytes.size() != scalar_size())
            return false;
        // canonical iff reducing the zero-extended value is a no-op
        std::uint8_t wide[64] = {0};
        std::copy(a.bytes.begin(), a.bytes.end(), wide);
        Bytes reduced(scalar_size());
        crypto_core_ristretto255_scalar_reduce(reduced.data(), wide);
        return reduced == a.bytes;
    }
    Scalar random_scalar(Rng& rng) const override {
        // 64 uniform bytes reduced mod the order; comes from the caller's
        // deterministic stream, not the system RNG
        std::uint8_t wide[64];
        Scalar out{Bytes(scalar_size())};
        do {
            rng.fill(wide, sizeof wide);
            crypto_core_ristretto255_scalar_reduce(out.bytes.data(), wide);
        } while (scalar_is_zero(out));
        return out;
    }
    Scalar hash_to_scalar(std::string_view domain, const Bytes& data) const override {
        auto digest = tagged_sha512(domain, data);
        Scalar out{Bytes(scalar_size())};
        crypto_core_ristretto255_scalar_reduce(out.bytes.data(), digest.data());
        return out;
    }

    Element generator() const override {
        Element out{Bytes(element_size())};
        auto one = scalar_from_u64(1);
        crypto_scalarmult_ristretto255_base(out.bytes.data(), one.bytes.data());
        return out;
    }
    Element identity() const override { return Element{Bytes(element_size(), 0)}; }
    bool element_valid(const Element& e) const override {
        return e.bytes.size() == element_size() &&
               crypto_core_ristretto255_is_valid_point(e.bytes.data()) == 1;
    }
    bool is_identity(const Element& e) const override {
        for (auto b : e.bytes)
            if (b != 0)
                return false;
        return true;
    }
    Element add(const Element& a, const Element& b) const override {
        if (is_identity(a))
            return b;
        if (is_identity(b))
            return a;
        Element out{Bytes(element_size())};
        if (crypto_core_ristretto255_add(out.bytes.data(), a.bytes.data(), b.bytes.data()) != 0)
            throw std::invalid_argument("ristretto add: invalid point");
        return out;
    }
    Element mul(const Element& e, const Scalar& s) const override {
        if (!element_valid(e))
            throw std::invalid_argument("ristretto mul: invalid point");
        if (scalar_is_zero(s) || is_identity(e))
            return identity();
        Element out{Bytes(element_size())};
        if (crypto_scalarmult_ristretto255(out.bytes.data(), s.bytes.data(), e.bytes.data()) != 0)
            return identity();  // libsodium signals an identity result via rc
        return out;
    }
    Element mul_base(const Scalar& s) const override {
        if (scalar_is_zero(s))
            return identity();
        Element out{Bytes(element_size())};
        if (crypto_scalarmult_ristretto255_base(out.bytes.data(), s.bytes.data()) != 0)
            return identity();
        return out;
    }
    Element hash_to_element(std::string_view domain, const Bytes& data) const override {
        auto digest = tagged_sha512(domain, data);
        Element out{Bytes(element_size())};
        crypto_core_ristretto255_from_hash(out.bytes.data(), digest.data());
        return out;
    }
};

}  // namespace

std::shared_ptr<const Group> toy_group() {
    static auto instance = std::make_shared<ToyGroup>();
    return instance;
}

std::shared_ptr<const Group> ristretto_group() {
    static auto instance = std::make_shared<RistrettoGroup>();
    return instance;
}

std::shared_ptr<const Group> group_by_name(std::string_view name) {
    if (name == "toy467")
        return toy_group();
    if (name == "ristretto255")
        return ristretto_group();
    throw std::invalid_argument("unknown group backend: " + std::string(name));
}

}  // namespace gridveil::ringsig
