#pragma once

#include <array>
#include <map>
#include <optional>
#include <shared_mutex>
#include <variant>
#include <vector>

#include "gridveil/common.hpp"

namespace gridveil::onion {

using RouterId = std::uint64_t;
using Key32 = std::array<std::uint8_t, 32>;
using Sig64 = std::array<std::uint8_t, 64>;

enum class OnionError {
    ok = 0,
    payload_too_large,
    not_addressed_to_me,
    corrupt_layer,
    bad_signature,
    expired,
    stale_record,
    insufficient_routers,
    too_many_hops,
    decrypt_failed,
    bad_bundle,
};

const char* to_string(OnionError e);

// Wire geometry. Every cell on every link is exactly kCellSize bytes:
//   [version:1][nonce:24][key-tag:8][ciphertext][junk padding]
// The ciphertext length is never written anywhere; a relay recovers it by
// trying the short arithmetic ladder of admissible lengths, so the header
// reveals nothing about remaining hops. Relay layers shrink by
// kLayerOverhead each; the innermost plaintext is padded to a fixed size.
constexpr std::size_t kCellSize = 1024;
constexpr std::size_t kHeaderSize = 1 + 24 + 8;
constexpr std::size_t kRelayMetaSize = 1 + 8 + 24 + 8;  // kind, next router, nonce', tag'
constexpr std::size_t kMacSize = 16;
constexpr std::size_t kLayerOverhead = kRelayMetaSize + kMacSize;  // 57
constexpr std::size_t kFinalPlainSize = 720;
constexpr std::size_t kMaxHops = 5;
constexpr std::size_t kMaxPayload = kFinalPlainSize - 3;
constexpr std::uint8_t kCellVersion = 1;

// ------------------------------------------------------- directory records

struct RouterKeys {
    Key32 enc_pub{};   // X25519, layer-key agreement
    Key32 enc_sec{};
    Key32 sign_pub{};  // Ed25519
    Sig64 sign_sec{};
};

RouterKeys make_router_keys(Rng& rng);

struct RouterInfo {
    RouterId id = 0;
    Key32 enc_pub{};
    Key32 sign_pub{};
    std::vector<std::string> contact_addresses;  // synthetic locators, not topology
    std::uint64_t timestamp_ms = 0;
    std::string text;
    Sig64 signature{};
    bool operator==(const RouterInfo&) const = default;
};

RouterInfo make_router_info(RouterId id, const RouterKeys& keys,
                            std::vector<std::string> contact_addresses,
                            std::uint64_t timestamp_ms, std::string text = {});
bool verify_router_info(const RouterInfo& info);

struct DestinationKeys {
    Key32 e2e_pub{};  // X25519, garlic end-to-end
    Key32 e2e_sec{};
    Key32 sign_pub{};
    Sig64 sign_sec{};
    Key32 revocation_pub{};
};

DestinationKeys make_destination_keys(Rng& rng);

struct LeaseEntry {
    RouterId router = 0;
    std::uint64_t tunnel_id = 0;
    bool operator==(const LeaseEntry&) const = default;
};

struct LeaseSet {
    std::string destination;
    std::vector<LeaseEntry> entries;  // tunnel entry points
    std::uint64_t expiry_ms = 0;
    Key32 e2e_pub{};
    Key32 revocation_pub{};
    Key32 sign_pub{};
    std::uint64_t timestamp_ms = 0;
    Sig64 signature{};
    bool operator==(const LeaseSet&) const = default;
};

LeaseSet make_leaseset(std::string destination, std::vector<LeaseEntry> entries,
                       std::uint64_t expiry_ms, const DestinationKeys& keys,
                       std::uint64_t timestamp_ms);
bool verify_leaseset(const LeaseSet& ls);

// Replicated keyed store; records live under SHA-256 of their identifier.
// Router ids and destination ids are distinct namespaces.
class DirectoryStore {
public:
    Status<OnionError> publish(const RouterInfo& info);
    Status<OnionError> publish(const LeaseSet& ls, std::uint64_t now_ms);

    std::optional<RouterInfo> lookup_router(RouterId id) const;
    std::optional<LeaseSet> lookup_leaseset(const std::string& destination,
                                            std::uint64_t now_ms) const;
    std::vector<RouterId> router_ids() const;

    static std::array<std::uint8_t, 32> record_key(const std::string& identifier);

private:
    mutable std::shared_mutex mutex_;
    std::map<std::array<std::uint8_t, 32>, std::vector<RouterInfo>> routers_;
    std::map<std::array<std::uint8_t, 32>, std::vector<LeaseSet>> leases_;
};

// ------------------------------------------------------------------ tunnels

struct Tunnel {
    std::uint64_t id = 0;
    std::vector<RouterId> hops;     // unidirectional; last hop is the entry point
    std::vector<Key32> layer_keys;  // one per hop
};

// Selects hop_count distinct routers uniformly (last = a lease entry point),
// excluding the sender, and derives per-hop layer keys from each hop's
// published encryption key via an ephemeral exchange.
Outcome<Tunnel, OnionError> build_path(const DirectoryStore& directory, RouterId sender,
                                       const LeaseSet& receiver, std::size_t hop_count,
                                       Rng& rng);

// -------------------------------------------------------------------- cells

struct OnionPacket {
    Bytes cell;  // exactly kCellSize
    bool operator==(const OnionPacket&) const = default;
};

Outcome<OnionPacket, OnionError> wrap(const Bytes& payload, const Tunnel& tunnel, Rng& rng);

struct PeelRelay {
    RouterId next_router = 0;
    OnionPacket next_cell;
};
struct PeelDeliver {
    Bytes payload;
};
using PeelResult = std::variant<PeelRelay, PeelDeliver>;

// Removes exactly one layer. NotAddressedToMe when the key tag does not
// match this key; CorruptLayer when the tag matches but no admissible
// ciphertext authenticates.
Outcome<PeelResult, OnionError> peel(const OnionPacket& packet, const Key32& layer_key);

// ------------------------------------------------------------------- garlic

struct Clove {
    std::string destination;
    Bytes payload;
    bool operator==(const Clove&) const = default;
};

struct GarlicBundle {
    std::vector<Clove> cloves;
};

constexpr std::size_t kBundlePlainSize = 640;
constexpr std::size_t kSealedBundleSize = 32 + kMacSize + kBundlePlainSize;

// Serialize, pad to kBundlePlainSize and seal to the destination's e2e key;
// every sealed bundle is the same size regardless of clove count.
Outcome<Bytes, OnionError> seal_bundle(const GarlicBundle& bundle, const Key32& dest_e2e_pub,
                                       Rng& rng);

// Opens a sealed bundle and returns exactly the cloves addressed to
// `destination`. A wrong secret fails outright; no partial cloves.
Outcome<std::vector<Clove>, OnionError> open_bundle(const Bytes& sealed,
                                                    const std::string& destination,
                                                    const Key32& e2e_sec);

// ------------------------------------------------------------ cover traffic

// Poisson(rate) zero-asset trades per slot; returns the slot index of each
// scheduled cover trade. Cover trades reuse the full trading choreography,
// so their cells are indistinguishable from real ones.
std::vector<std::uint32_t> cover_trade_slots(double rate_per_slot, std::uint32_t slot_count,
                                             Rng& rng);

}  // namespace gridveil::onion
