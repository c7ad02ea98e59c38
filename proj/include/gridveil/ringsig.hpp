#pragma once

#include <map>
#include <vector>

#include "gridveil/group.hpp"

// Signing and verification are pure given explicit randomness and safe for
// unrestricted concurrent use; KeyImageRegistry follows the ledger's
// single-writer rule.
namespace gridveil::ringsig {

enum class Error {
    ok = 0,
    invalid_params,
    identity_element,
    no_matching_output,
    signer_not_in_ring,
    ring_too_small,
    wrong_ephemeral,
    malformed,
};

constexpr std::uint32_t kDefaultMinRingSize = 3;

struct KeyPair {
    Scalar secret;
    Element pub;
};

// I = x * Hg(P). Fixed per key pair: reuse across signatures is what LNK
// detects.
struct KeyImage {
    Element point;
    bool operator==(const KeyImage&) const = default;
};

// One-time linkable ring signature: per-member challenge/response scalar
// pairs closing over a hash of the commitment points.
struct RingSignature {
    std::vector<Element> ring;
    KeyImage key_image;
    std::vector<Scalar> c;
    std::vector<Scalar> r;
};

KeyPair gen(const Group& g, Rng& rng);
KeyPair gen_from_seed(const Group& g, std::uint64_t seed);
KeyPair keypair_from_secret(const Group& g, const Scalar& secret);

KeyImage key_image(const Group& g, const Scalar& secret, const Element& pub);

// Signs on behalf of ring[signer_index]; every other member is a decoy.
// The minimum ring size is policy, not mathematics: pass 1 to produce the
// zero-mixin signatures the traceability analyses study.
Outcome<RingSignature, Error> sig(const Group& g, const Bytes& message,
                                  const std::vector<Element>& ring,
                                  std::size_t signer_index, const Scalar& secret, Rng& rng,
                                  std::uint32_t min_ring_size = kDefaultMinRingSize);

// Accepts exactly when the ring equations close; rejection is a value.
bool ver(const Group& g, const Bytes& message, const RingSignature& s);

// Append-only key image registry backing the double-spend check.
class KeyImageRegistry {
public:
    struct LinkResult {
        bool fresh = false;
        std::string prior_tx;  // set when linked
    };

    // fresh inserts the image under tx_id; linked reports the prior spend
    LinkResult lnk(const RingSignature& s, const std::string& tx_id);
    bool contains(const KeyImage& image) const;
    std::size_t size() const { return images_.size(); }

private:
    std::map<Bytes, std::string> images_;
};

// ------------------------------------------------------------------ stealth

struct StealthReceiver {
    Scalar view_secret;   // a
    Scalar spend_secret;  // b
    Element view_pub;     // A = a*G
    Element spend_pub;    // B = b*G
};

StealthReceiver make_receiver(const Group& g, Rng& rng);

// Published per transfer: R = r*G and the one-time destination key
// P' = Hs(r*A)*G + B. Distinct ephemerals give unlinkable destinations.
struct StealthOutput {
    Element ephemeral_pub;  // R
    Element one_time_pub;   // P'
    bool operator==(const StealthOutput&) const = default;
};

Outcome<StealthOutput, Error> derive_stealth(const Group& g, const Element& view_pub,
                                             const Element& spend_pub,
                                             const Scalar& ephemeral_secret);

// x' = Hs(a*R) + b, checked against the published one-time key.
Outcome<Scalar, Error> recover_stealth_secret(const Group& g, const StealthReceiver& recv,
                                              const StealthOutput& output);

// Disclosing the ephemeral proves payment to a specific output without
// revealing anything about other outputs.
struct PaymentProof {
    std::string trade_id;
    Scalar ephemeral_secret;
};

Outcome<PaymentProof, Error> prove_payment(const Group& g, const Scalar& ephemeral_secret,
                                           const Element& published_ephemeral,
                                           std::string trade_id);

bool verify_payment_proof(const Group& g, const PaymentProof& proof, const StealthOutput& output,
                          const Element& view_pub, const Element& spend_pub);

// View-secret plus spend public key: detects incoming outputs, cannot spend.
struct TrackingKey {
    Scalar view_secret;
    Element spend_pub;
};

std::vector<std::size_t> audit_scan(const Group& g, const TrackingKey& tracking,
                                    const std::vector<StealthOutput>& outputs);

// --------------------------------------------------------- wire encodings

// Length-prefixed, fixed field order; signatures verify across processes.
Bytes serialize(const RingSignature& s);
Outcome<RingSignature, Error> deserialize_ring_signature(const Group& g, const Bytes& data);

}  // namespace gridveil::ringsig
