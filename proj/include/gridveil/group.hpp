#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "gridveil/common.hpp"

namespace gridveil::ringsig {

// Canonical byte encodings; fixed width per backend.
struct Scalar {
    Bytes bytes;
    bool operator==(const Scalar&) const = default;
};

struct Element {
    Bytes bytes;
    bool operator==(const Element&) const = default;
};

// A prime-order cyclic group with the hooks the one-time ring signature
// scheme needs: scalar arithmetic mod the group order, scalar
// multiplication, a hash-to-scalar and a hash-to-group map.
//
// Two backends ship: ristretto255 for real runs, and a tiny multiplicative
// subgroup (p = 467, q = 233) small enough that tests can brute-force
// discrete logs and enumerate every secret key.
class Group {
public:
    virtual ~Group() = default;

    virtual std::string name() const = 0;
    virtual std::size_t scalar_size() const = 0;
    virtual std::size_t element_size() const = 0;

    virtual Scalar scalar_zero() const = 0;
    virtual Scalar scalar_from_u64(std::uint64_t v) const = 0;
    virtual Scalar scalar_add(const Scalar& a, const Scalar& b) const = 0;
    virtual Scalar scalar_sub(const Scalar& a, const Scalar& b) const = 0;
    virtual Scalar scalar_mul(const Scalar& a, const Scalar& b) const = 0;
    virtual bool scalar_is_zero(const Scalar& a) const = 0;
    virtual bool scalar_valid(const Scalar& a) const = 0;
    // uniform in [1, q-1]
    virtual Scalar random_scalar(Rng& rng) const = 0;
    virtual Scalar hash_to_scalar(std::string_view domain, const Bytes& data) const = 0;

    virtual Element generator() const = 0;
    virtual Element identity() const = 0;
    virtual bool element_valid(const Element& e) const = 0;
    virtual bool is_identity(const Element& e) const = 0;
    // group operation (written additively)
    virtual Element add(const Element& a, const Element& b) const = 0;
    // scalar multiplication s*e
    virtual Element mul(const Element& e, const Scalar& s) const = 0;
    virtual Element mul_base(const Scalar& s) const = 0;
    virtual Element hash_to_element(std::string_view domain, const Bytes& data) const = 0;
};

// p = 467 (safe prime), q = 233, generator g = 4. Elements are the
// quadratic residues mod p encoded as 2-byte big-endian integers; scalars
// are 2-byte big-endian integers mod q. The hash-to-element map is
// hash-then-exponentiate, which leaks the discrete log of its output to
// anyone who can hash -- usable only for testing, never for real runs.
std::shared_ptr<const Group> toy_group();

// ristretto255 via libsodium; proper Elligator-based hash-to-group.
std::shared_ptr<const Group> ristretto_group();

std::shared_ptr<const Group> group_by_name(std::string_view name);

}  // namespace gridveil::ringsig
