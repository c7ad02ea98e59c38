#include "gridveil/ringsig.hpp"

#include "gridveil/hash.hpp"

namespace gridveil::ringsig {

namespace {

constexpr std::string_view kImageDomain = "gv.ringsig.keyimage.v1";
constexpr std::string_view kChallengeDomain = "gv.ringsig.challenge.v1";
constexpr std::string_view kStealthDomain = "gv.ringsig.stealth.v1";

void append_u16(Bytes& buf, std::size_t v) {
    buf.push_back(static_cast<std::uint8_t>(v >> 8));
    buf.push_back(static_cast<std::uint8_t>(v & 0xff));
}

void append_blob(Bytes& buf, const Bytes& b) {
    append_u16(buf, b.size());
    buf.insert(buf.end(), b.begin(), b.end());
}

// transcript prefix shared by signer and verifier
Bytes challenge_prefix(const Bytes& message, const std::vector<Element>& ring,
                       const KeyImage& image) {
    Bytes buf;
    append_blob(buf, message);
    append_u16(buf, ring.size());
    for (const auto& p : ring)
        append_blob(buf, p.bytes);
    append_blob(buf, image.point.bytes);
    return buf;
}

}  // namespace

KeyPair gen(const Group& g, Rng& rng) {
    KeyPair kp;
    kp.secret = g.random_scalar(rng);
    kp.pub = g.mul_base(kp.secret);
    return kp;
}

KeyPair gen_from_seed(const Group& g, std::uint64_t seed) {
    Rng rng(seed);
    return gen(g, rng);
}

KeyPair keypair_from_secret(const Group& g, const Scalar& secret) {
    if (!g.scalar_valid(secret) || g.scalar_is_zero(secret))
        throw std::invalid_argument("keypair_from_secret: secret not in [1, q-1]");
    return KeyPair{secret, g.mul_base(secret)};
}

KeyImage key_image(const Group& g, const Scalar& secret, const Element& pub) {
    return KeyImage{g.mul(g.hash_to_element(kImageDomain, pub.bytes), secret)};
}

Outcome<RingSignature, Error> sig(const Group& g, const Bytes& message,
                                  const std::vector<Element>& ring,
                                  std::size_t signer_index, const Scalar& secret, Rng& rng,
                                  std::uint32_t min_ring_size) {
    using R = Outcome<RingSignature, Error>;
    if (ring.size() < min_ring_size)
        return R::failure(Error::ring_too_small,
                          "ring of " + std::to_string(ring.size()) + " below minimum " +
                              std::to_string(min_ring_size));
    if (signer_index >= ring.size())
        return R::failure(Error::signer_not_in_ring, "signer index out of range");
    for (const auto& p : ring)
        if (!g.element_valid(p) || g.is_identity(p))
            return R::failure(Error::invalid_params, "ring member not a valid group element");
    if (!g.scalar_valid(secret) || g.scalar_is_zero(secret) ||
        !(g.mul_base(secret) == ring[signer_index]))
        return R::failure(Error::signer_not_in_ring, "secret does not open ring[signer_index]");

    const std::size_t n = ring.size();
    RingSignature out;
    out.ring = ring;
    out.key_image = key_image(g, secret, ring[signer_index]);
    out.c.assign(n, g.scalar_zero());
    out.r.assign(n, g.scalar_zero());

    Bytes transcript = challenge_prefix(message, ring, out.key_image);
    Scalar k = g.random_scalar(rng);
    Scalar c_sum = g.scalar_zero();

    for (std::size_t i = 0; i < n; ++i) {
        Element hp = g.hash_to_element(kImageDomain, ring[i].bytes);
        Element li, ri;
        if (i == signer_index) {
            li = g.mul_base(k);
            ri = g.mul(hp, k);
        } else {
            out.c[i] = g.random_scalar(rng);
            out.r[i] = g.random_scalar(rng);
            li = g.add(g.mul(ring[i], out.c[i]), g.mul_base(out.r[i]));
            ri = g.add(g.mul(hp, out.r[i]), g.mul(out.key_image.point, out.c[i]));
            c_sum = g.scalar_add(c_sum, out.c[i]);
        }
        append_blob(transcript, li.bytes);
        append_blob(transcript, ri.bytes);
    }

    Scalar h = g.hash_to_scalar(kChallengeDomain, transcript);
    out.c[signer_index] = g.scalar_sub(h, c_sum);
    out.r[signer_index] =
        g.scalar_sub(k, g.scalar_mul(out.c[signer_index], secret));
    return R::success(std::move(out));
}

bool ver(const Group& g, const Bytes& message, const RingSignature& s) {
    const std::size_t n = s.ring.size();
    if (n == 0 || s.c.size() != n || s.r.size() != n)
        return false;
    if (!g.element_valid(s.key_image.point) || g.is_identity(s.key_image.point))
        return false;
    for (const auto& p : s.ring)
        if (!g.element_valid(p) || g.is_identity(p))
            return false;
    for (std::size_t i = 0; i < n; ++i)
        if (!g.scalar_valid(s.c[i]) || !g.scalar_valid(s.r[i]))
            return false;

    Bytes transcript = challenge_prefix(message, s.ring, s.key_image);
    Scalar c_sum = g.scalar_zero();
    for (std::size_t i = 0; i < n; ++i) {
        Element hp = g.hash_to_element(kImageDomain, s.ring[i].bytes);
        Element li = g.add(g.mul(s.ring[i], s.c[i]), g.mul_base(s.r[i]));
        Element ri = g.add(g.mul(hp, s.r[i]), g.mul(s.key_image.point, s.c[i]));
        append_blob(transcript, li.bytes);
        append_blob(transcript, ri.bytes);
        c_sum = g.scalar_add(c_sum, s.c[i]);
    }
    Scalar h = g.hash_to_scalar(kChallengeDomain, transcript);
    return h == c_sum;
}

KeyImageRegistry::LinkResult KeyImageRegistry::lnk(const RingSignature& s,
                                                   const std::string& tx_id) {
    auto it = images_.find(s.key_image.point.bytes);
    if (it != images_.end())
        return LinkResult{false, it->second};
    images_.emplace(s.key_image.point.bytes, tx_id);
    return LinkResult{true, {}};
}

bool KeyImageRegistry::contains(const KeyImage& image) const {
    return images_.count(image.point.bytes) > 0;
}

// ------------------------------------------------------------------ stealth

StealthReceiver make_receiver(const Group& g, Rng& rng) {
    StealthReceiver r;
    r.view_secret = g.random_scalar(rng);
    r.spend_secret = g.random_scalar(rng);
    r.view_pub = g.mul_base(r.view_secret);
    r.spend_pub = g.mul_base(r.spend_secret);
    return r;
}

Outcome<StealthOutput, Error> derive_stealth(const Group& g, const Element& view_pub,
                                             const Element& spend_pub,
                                             const Scalar& ephemeral_secret) {
    using R = Outcome<StealthOutput, Error>;
    if (!g.element_valid(view_pub) || !g.element_valid(spend_pub))
        return R::failure(Error::invalid_params, "receiver key not a valid group element");
    if (g.is_identity(view_pub) || g.is_identity(spend_pub))
        return R::failure(Error::identity_element, "receiver key is the identity");
    if (!g.scalar_valid(ephemeral_secret) || g.scalar_is_zero(ephemeral_secret))
        return R::failure(Error::identity_element, "degenerate ephemeral scalar");

    StealthOutput out;
    out.ephemeral_pub = g.mul_base(ephemeral_secret);
    Element shared = g.mul(view_pub, ephemeral_secret);  // r*A
    Scalar h = g.hash_to_scalar(kStealthDomain, shared.bytes);
    out.one_time_pub = g.add(g.mul_base(h), spend_pub);  // Hs(r*A)*G + B
    return R::success(std::move(out));
}

Outcome<Scalar, Error> recover_stealth_secret(const Group& g, const StealthReceiver& recv,
                                              const StealthOutput& output) {
    using R = Outcome<Scalar, Error>;
    if (!g.element_valid(output.ephemeral_pub) || g.is_identity(output.ephemeral_pub))
        return R::failure(Error::identity_element, "degenerate ephemeral key");
    Element shared = g.mul(output.ephemeral_pub, recv.view_secret);  // a*R = r*A
    Scalar h = g.hash_to_scalar(kStealthDomain, shared.bytes);
    Scalar one_time_secret = g.scalar_add(h, recv.spend_secret);  // x' = Hs(a*R) + b
    if (!(g.mul_base(one_time_secret) == output.one_time_pub))
        return R::failure(Error::no_matching_output, "output not addressed to this receiver");
    return R::success(std::move(one_time_secret));
}

Outcome<PaymentProof, Error> prove_payment(const Group& g, const Scalar& ephemeral_secret,
                                           const Element& published_ephemeral,
                                           std::string trade_id) {
    using R = Outcome<PaymentProof, Error>;
    if (!g.scalar_valid(ephemeral_secret) ||
        !(g.mul_base(ephemeral_secret) == published_ephemeral))
        return R::failure(Error::wrong_ephemeral, "ephemeral does not open the published key");
    return R::success(PaymentProof{std::move(trade_id), ephemeral_secret});
}

bool verify_payment_proof(const Group& g, const PaymentProof& proof, const StealthOutput& output,
                          const Element& view_pub, const Element& spend_pub) {
    if (!g.scalar_valid(proof.ephemeral_secret) || g.scalar_is_zero(proof.ephemeral_secret))
        return false;
    if (!(g.mul_base(proof.ephemeral_secret) == output.ephemeral_pub))
        return false;
    auto derived = derive_stealth(g, view_pub, spend_pub, proof.ephemeral_secret);
    return derived.ok() && derived->one_time_pub == output.one_time_pub;
}

std::vector<std::size_t> audit_scan(const Group& g, const TrackingKey& tracking,
                                    const std::vector<StealthOutput>& outputs) {
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        const auto& out = outputs[i];
        if (!g.element_valid(out.ephemeral_pub) || g.is_identity(out.ephemeral_pub))
            continue;
        Element shared = g.mul(out.ephemeral_pub, tracking.view_secret);
        Scalar h = g.hash_to_scalar(kStealthDomain, shared.bytes);
        if (g.add(g.mul_base(h), tracking.spend_pub) == out.one_time_pub)
            hits.push_back(i);
    }
    return hits;
}

// --------------------------------------------------------- wire encodings

Bytes serialize(const RingSignature& s) {
    Bytes buf;
    append_u16(buf, s.ring.size());
    for (const auto& p : s.ring)
        append_blob(buf, p.bytes);
    append_blob(buf, s.key_image.point.bytes);
    for (const auto& c : s.c)
        append_blob(buf, c.bytes);
    for (const auto& r : s.r)
        append_blob(buf, r.bytes);
    return buf;
}

namespace {

bool read_u16(const Bytes& buf, std::size_t& pos, std::size_t& out) {
    if (pos + 2 > buf.size())
        return false;
    out = (static_cast<std::size_t>(buf[pos]) << 8) | buf[pos + 1];
    pos += 2;
    return true;
}

bool read_blob(const Bytes& buf, std::size_t& pos, Bytes& out) {
    std::size_t len = 0;
    if (!read_u16(buf, pos, len) || pos + len > buf.size())
        return false;
    out.assign(buf.begin() + pos, buf.begin() + pos + len);
    pos += len;
    return true;
}

}  // namespace

Outcome<RingSignature, Error> deserialize_ring_signature(const Group& g, const Bytes& data) {
    using R = Outcome<RingSignature, Error>;
    RingSignature s;
    std::size_t pos = 0, n = 0;
    if (!read_u16(data, pos, n) || n == 0)
        return R::failure(Error::malformed);
    s.ring.resize(n);
    for (auto& p : s.ring)
        if (!read_blob(data, pos, p.bytes))
            return R::failure(Error::malformed);
    if (!read_blob(data, pos, s.key_image.point.bytes))
        return R::failure(Error::malformed);
    s.c.resize(n);
    s.r.resize(n);
    for (auto& c : s.c)
        if (!read_blob(data, pos, c.bytes))
            return R::failure(Error::malformed);
    for (auto& r : s.r)
        if (!read_blob(data, pos, r.bytes))
            return R::failure(Error::malformed);
    if (pos != data.size())
        return R::failure(Error::malformed, "trailing bytes");
    for (const auto& p : s.ring)
        if (!g.element_valid(p))
            return R::failure(Error::malformed, "invalid ring element");
    return R::success(std::move(s));
}

}  // namespace gridveil::ringsig
