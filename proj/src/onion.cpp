#include "gridveil/onion.hpp"

#include <algorithm>
#include <cstring>
#include <mutex>
#include <set>

#include <sodium.h>

#include "gridveil/hash.hpp"

namespace gridveil::onion {

namespace {

constexpr std::string_view kKcDomain = "gv.onion.kc.v1";
constexpr std::string_view kLayerDomain = "gv.onion.layerkey.v1";
constexpr std::string_view kPadDomain = "gv.onion.pad.v1";
constexpr std::string_view kE2eKeyDomain = "gv.onion.e2ekey.v1";
constexpr std::string_view kE2eNonceDomain = "gv.onion.e2enonce.v1";

constexpr std::uint8_t kKindRelay = 1;
constexpr std::uint8_t kKindDeliver = 2;

constexpr std::size_t kMaxCiphertext = kCellSize - kHeaderSize;  // 991
constexpr std::size_t kFinalCiphertext = kFinalPlainSize + kMacSize;

void put_u64(Bytes& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
        v = (v << 8) | p[i];
    return v;
}

void put_u16(Bytes& buf, std::size_t v) {
    buf.push_back(static_cast<std::uint8_t>(v >> 8));
    buf.push_back(static_cast<std::uint8_t>(v & 0xff));
}

void put_blob(Bytes& buf, const std::string& s) {
    put_u16(buf, s.size());
    buf.insert(buf.end(), s.begin(), s.end());
}

std::array<std::uint8_t, 24> nonce_from(const Bytes& cell, std::size_t offset) {
    std::array<std::uint8_t, 24> n;
    std::copy(cell.begin() + offset, cell.begin() + offset + 24, n.begin());
    return n;
}

std::array<std::uint8_t, 8> key_tag(const Key32& key,
                                    const std::array<std::uint8_t, 24>& nonce) {
    return mac8(key, kKcDomain, Bytes(nonce.begin(), nonce.end()));
}

}  // namespace

const char* to_string(OnionError e) {
    switch (e) {
        case OnionError::ok: return "ok";
        case OnionError::payload_too_large: return "PayloadTooLarge";
        case OnionError::not_addressed_to_me: return "NotAddressedToMe";
        case OnionError::corrupt_layer: return "CorruptLayer";
        case OnionError::bad_signature: return "BadSignature";
        case OnionError::expired: return "Expired";
        case OnionError::stale_record: return "StaleRecord";
        case OnionError::insufficient_routers: return "InsufficientRouters";
        case OnionError::too_many_hops: return "TooManyHops";
        case OnionError::decrypt_failed: return "DecryptFailed";
        case OnionError::bad_bundle: return "BadBundle";
    }
    return "?";
}

// ------------------------------------------------------- directory records

RouterKeys make_router_keys(Rng& rng) {
    crypto_init();
    RouterKeys k;
    rng.fill(k.enc_sec.data(), k.enc_sec.size());
    crypto_scalarmult_base(k.enc_pub.data(), k.enc_sec.data());
    Key32 seed;
    rng.fill(seed.data(), seed.size());
    crypto_sign_seed_keypair(k.sign_pub.data(), k.sign_sec.data(), seed.data());
    return k;
}

DestinationKeys make_destination_keys(Rng& rng) {
    crypto_init();
    DestinationKeys k;
    rng.fill(k.e2e_sec.data(), k.e2e_sec.size());
    crypto_scalarmult_base(k.e2e_pub.data(), k.e2e_sec.data());
    Key32 seed;
    rng.fill(seed.data(), seed.size());
    crypto_sign_seed_keypair(k.sign_pub.data(), k.sign_sec.data(), seed.data());
    rng.fill(k.revocation_pub.data(), k.revocation_pub.size());
    return k;
}

namespace {

Bytes router_info_bytes(const RouterInfo& info) {
    Bytes b;
    put_u64(b, info.id);
    b.insert(b.end(), info.enc_pub.begin(), info.enc_pub.end());
    b.insert(b.end(), info.sign_pub.begin(), info.sign_pub.end());
    put_u16(b, info.contact_addresses.size());
    for (const auto& a : info.contact_addresses)
        put_blob(b, a);
    put_u64(b, info.timestamp_ms);
    put_blob(b, info.text);
    return b;
}

Bytes leaseset_bytes(const LeaseSet& ls) {
    Bytes b;
    put_blob(b, ls.destination);
    put_u16(b, ls.entries.size());
    for (const auto& e : ls.entries) {
        put_u64(b, e.router);
        put_u64(b, e.tunnel_id);
    }
    put_u64(b, ls.expiry_ms);
    b.insert(b.end(), ls.e2e_pub.begin(), ls.e2e_pub.end());
    b.insert(b.end(), ls.revocation_pub.begin(), ls.revocation_pub.end());
    b.insert(b.end(), ls.sign_pub.begin(), ls.sign_pub.end());
    put_u64(b, ls.timestamp_ms);
    return b;
}

}  // namespace

RouterInfo make_router_info(RouterId id, const RouterKeys& keys,
                            std::vector<std::string> contact_addresses,
                            std::uint64_t timestamp_ms, std::string text) {
    crypto_init();
    RouterInfo info;
    info.id = id;
    info.enc_pub = keys.enc_pub;
    info.sign_pub = keys.sign_pub;
    info.contact_addresses = std::move(contact_addresses);
    info.timestamp_ms = timestamp_ms;
    info.text = std::move(text);
    Bytes msg = router_info_bytes(info);
    crypto_sign_detached(info.signature.data(), nullptr, msg.data(), msg.size(),
                         keys.sign_sec.data());
    return info;
}

bool verify_router_info(const RouterInfo& info) {
    crypto_init();
    Bytes msg = router_info_bytes(info);
    return crypto_sign_verify_detached(info.signature.data(), msg.data(), msg.size(),
                                       info.sign_pub.data()) == 0;
}

LeaseSet make_leaseset(std::string destination, std::vector<LeaseEntry> entries,
                       std::uint64_t expiry_ms, const DestinationKeys& keys,
                       std::uint64_t timestamp_ms) {
    crypto_init();
    LeaseSet ls;
    ls.destination = std::move(destination);
    ls.entries = std::move(entries);
    ls.expiry_ms = expiry_ms;
    ls.e2e_pub = keys.e2e_pub;
    ls.revocation_pub = keys.revocation_pub;
    ls.sign_pub = keys.sign_pub;
    ls.timestamp_ms = timestamp_ms;
    Bytes msg = leaseset_bytes(ls);
    crypto_sign_detached(ls.signature.data(), nullptr, msg.data(), msg.size(),
                         keys.sign_sec.data());
    return ls;
}

bool verify_leaseset(const LeaseSet& ls) {
    crypto_init();
    Bytes msg = leaseset_bytes(ls);
    return crypto_sign_verify_detached(ls.signature.data(), msg.data(), msg.size(),
                                       ls.sign_pub.data()) == 0;
}

std::array<std::uint8_t, 32> DirectoryStore::record_key(const std::string& identifier) {
    return sha256(Bytes(identifier.begin(), identifier.end()));
}

Status<OnionError> DirectoryStore::publish(const RouterInfo& info) {
    if (!verify_router_info(info))
        return Status<OnionError>::failure(OnionError::bad_signature);
    auto key = record_key("router:" + std::to_string(info.id));
    std::unique_lock lock(mutex_);
    auto& records = routers_[key];
    for (const auto& r : records)
        if (r.timestamp_ms > info.timestamp_ms)
            return Status<OnionError>::failure(OnionError::stale_record,
                                               "newer record already published");
    records.push_back(info);
    return Status<OnionError>::success();
}

Status<OnionError> DirectoryStore::publish(const LeaseSet& ls, std::uint64_t now_ms) {
    if (!verify_leaseset(ls))
        return Status<OnionError>::failure(OnionError::bad_signature);
    if (ls.expiry_ms <= now_ms)
        return Status<OnionError>::failure(OnionError::expired);
    if (ls.entries.empty())
        return Status<OnionError>::failure(OnionError::bad_signature, "no entry points");
    auto key = record_key("dest:" + ls.destination);
    std::unique_lock lock(mutex_);
    leases_[key].push_back(ls);
    return Status<OnionError>::success();
}

std::optional<RouterInfo> DirectoryStore::lookup_router(RouterId id) const {
    auto key = record_key("router:" + std::to_string(id));
    std::shared_lock lock(mutex_);
    auto it = routers_.find(key);
    if (it == routers_.end() || it->second.empty())
        return std::nullopt;
    const RouterInfo* newest = &it->second.front();
    for (const auto& r : it->second)
        if (r.timestamp_ms >= newest->timestamp_ms)
            newest = &r;
    return *newest;
}

std::optional<LeaseSet> DirectoryStore::lookup_leaseset(const std::string& destination,
                                                        std::uint64_t now_ms) const {
    auto key = record_key("dest:" + destination);
    std::shared_lock lock(mutex_);
    auto it = leases_.find(key);
    if (it == leases_.end())
        return std::nullopt;
    const LeaseSet* newest = nullptr;
    for (const auto& ls : it->second) {
        if (ls.expiry_ms <= now_ms)
            continue;  // lookups never return expired records
        if (!newest || ls.timestamp_ms >= newest->timestamp_ms)
            newest = &ls;
    }
    if (!newest)
        return std::nullopt;
    return *newest;
}

std::vector<RouterId> DirectoryStore::router_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<RouterId> ids;
    for (const auto& [key, records] : routers_)
        if (!records.empty())
            ids.push_back(records.front().id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

// ------------------------------------------------------------------ tunnels

Outcome<Tunnel, OnionError> build_path(const DirectoryStore& directory, RouterId sender,
                                       const LeaseSet& receiver, std::size_t hop_count,
                                       Rng& rng) {
    using R = Outcome<Tunnel, OnionError>;
    crypto_init();
    if (hop_count == 0 || hop_count > kMaxHops)
        return R::failure(OnionError::too_many_hops);
    if (receiver.entries.empty())
        return R::failure(OnionError::insufficient_routers, "lease set has no entry points");

    const LeaseEntry& entry = receiver.entries[rng.uniform(receiver.entries.size())];
    if (!directory.lookup_router(entry.router))
        return R::failure(OnionError::insufficient_routers, "entry point not in directory");

    std::vector<RouterId> eligible;
    for (RouterId id : directory.router_ids())
        if (id != sender && id != entry.router)
            eligible.push_back(id);
    if (eligible.size() + 1 < hop_count)
        return R::failure(OnionError::insufficient_routers,
                          std::to_string(eligible.size()) + " eligible routers for " +
                              std::to_string(hop_count) + " hops");

    // uniform sample of hop_count-1 distinct intermediates (partial shuffle)
    Tunnel tunnel;
    for (std::size_t i = 0; i + 1 < hop_count; ++i) {
        std::size_t j = i + rng.uniform(eligible.size() - i);
        std::swap(eligible[i], eligible[j]);
        tunnel.hops.push_back(eligible[i]);
    }
    tunnel.hops.push_back(entry.router);
    tunnel.id = rng.next_u64();

    Key32 eph_sec;
    rng.fill(eph_sec.data(), eph_sec.size());
    for (std::size_t i = 0; i < tunnel.hops.size(); ++i) {
        auto info = directory.lookup_router(tunnel.hops[i]);
        if (!info)
            return R::failure(OnionError::insufficient_routers, "hop vanished from directory");
        Key32 shared;
        if (crypto_scalarmult(shared.data(), eph_sec.data(), info->enc_pub.data()) != 0)
            return R::failure(OnionError::insufficient_routers, "degenerate hop key");
        Bytes material(shared.begin(), shared.end());
        put_u64(material, tunnel.id);
        material.push_back(static_cast<std::uint8_t>(i));
        tunnel.layer_keys.push_back(tagged_sha256(kLayerDomain, material));
    }
    return R::success(std::move(tunnel));
}

// -------------------------------------------------------------------- cells

Outcome<OnionPacket, OnionError> wrap(const Bytes& payload, const Tunnel& tunnel, Rng& rng) {
    using R = Outcome<OnionPacket, OnionError>;
    crypto_init();
    const std::size_t n = tunnel.hops.size();
    if (n == 0 || n > kMaxHops || tunnel.layer_keys.size() != n)
        return R::failure(OnionError::too_many_hops);
    if (payload.size() > kMaxPayload)
        return R::failure(OnionError::payload_too_large,
                          std::to_string(payload.size()) + " > " + std::to_string(kMaxPayload));

    // innermost plaintext, padded to a fixed size so the final ciphertext
    // length is one of a small admissible ladder
    Bytes plain;
    plain.reserve(kFinalPlainSize);
    plain.push_back(kKindDeliver);
    put_u16(plain, payload.size());
    plain.insert(plain.end(), payload.begin(), payload.end());
    Bytes junk = rng.bytes(kFinalPlainSize - plain.size());
    plain.insert(plain.end(), junk.begin(), junk.end());

    std::vector<std::array<std::uint8_t, 24>> nonces(n);
    for (auto& nonce : nonces)
        rng.fill(nonce.data(), nonce.size());

    Bytes ct;
    for (std::size_t idx = n; idx-- > 0;) {
        ct.assign(plain.size() + kMacSize, 0);
        crypto_secretbox_easy(ct.data(), plain.data(), plain.size(), nonces[idx].data(),
                              tunnel.layer_keys[idx].data());
        if (idx == 0)
            break;
        // relay layer for hop idx-1: route to hop idx, then its header fields
        plain.clear();
        plain.push_back(kKindRelay);
        put_u64(plain, tunnel.hops[idx]);
        plain.insert(plain.end(), nonces[idx].begin(), nonces[idx].end());
        auto tag = key_tag(tunnel.layer_keys[idx], nonces[idx]);
        plain.insert(plain.end(), tag.begin(), tag.end());
        plain.insert(plain.end(), ct.begin(), ct.end());
    }

    OnionPacket packet;
    packet.cell.reserve(kCellSize);
    packet.cell.push_back(kCellVersion);
    packet.cell.insert(packet.cell.end(), nonces[0].begin(), nonces[0].end());
    auto tag0 = key_tag(tunnel.layer_keys[0], nonces[0]);
    packet.cell.insert(packet.cell.end(), tag0.begin(), tag0.end());
    packet.cell.insert(packet.cell.end(), ct.begin(), ct.end());
    Bytes pad = rng.bytes(kCellSize - packet.cell.size());
    packet.cell.insert(packet.cell.end(), pad.begin(), pad.end());
    return R::success(std::move(packet));
}

Outcome<PeelResult, OnionError> peel(const OnionPacket& packet, const Key32& layer_key) {
    using R = Outcome<PeelResult, OnionError>;
    crypto_init();
    const Bytes& cell = packet.cell;
    if (cell.size() != kCellSize || cell[0] != kCellVersion)
        return R::failure(OnionError::corrupt_layer, "bad cell frame");

    auto nonce = nonce_from(cell, 1);
    auto tag = key_tag(layer_key, nonce);
    if (!std::equal(tag.begin(), tag.end(), cell.begin() + 25))
        return R::failure(OnionError::not_addressed_to_me);

    // admissible ciphertext lengths: final size plus a whole number of
    // relay layers; the length itself is never on the wire
    Bytes plain;
    bool opened = false;
    for (std::size_t layers = kMaxHops; layers-- > 0;) {
        std::size_t ct_len = kFinalCiphertext + layers * kLayerOverhead;
        if (ct_len > kMaxCiphertext || kHeaderSize + ct_len > cell.size())
            continue;
        plain.assign(ct_len - kMacSize, 0);
        if (crypto_secretbox_open_easy(plain.data(), cell.data() + kHeaderSize, ct_len,
                                       nonce.data(), layer_key.data()) == 0) {
            opened = true;
            break;
        }
    }
    if (!opened)
        return R::failure(OnionError::corrupt_layer, "no admissible layer authenticates");

    if (plain[0] == kKindDeliver) {
        std::size_t len = (static_cast<std::size_t>(plain[1]) << 8) | plain[2];
        if (3 + len > plain.size())
            return R::failure(OnionError::corrupt_layer, "payload length out of range");
        return R::success(PeelResult{PeelDeliver{Bytes(plain.begin() + 3, plain.begin() + 3 + len)}});
    }
    if (plain[0] != kKindRelay || plain.size() < kRelayMetaSize)
        return R::failure(OnionError::corrupt_layer, "unknown layer kind");

    PeelRelay relay;
    relay.next_router = get_u64(plain.data() + 1);
    Bytes& next = relay.next_cell.cell;
    next.reserve(kCellSize);
    next.push_back(kCellVersion);
    next.insert(next.end(), plain.begin() + 9, plain.begin() + kRelayMetaSize);  // nonce' + tag'
    next.insert(next.end(), plain.begin() + kRelayMetaSize, plain.end());       // inner ct
    // deterministic junk from this hop's key; unpredictable from the wire
    Bytes key_bytes(layer_key.begin(), layer_key.end());
    auto pad_key = tagged_sha256(kPadDomain, key_bytes);
    auto next_nonce = nonce_from(next, 1);
    Bytes pad = keystream(pad_key, next_nonce, kCellSize - next.size());
    next.insert(next.end(), pad.begin(), pad.end());
    return R::success(PeelResult{std::move(relay)});
}

// ------------------------------------------------------------------- garlic

Outcome<Bytes, OnionError> seal_bundle(const GarlicBundle& bundle, const Key32& dest_e2e_pub,
                                       Rng& rng) {
    using R = Outcome<Bytes, OnionError>;
    crypto_init();
    if (bundle.cloves.empty())
        return R::failure(OnionError::bad_bundle, "a bundle carries at least one clove");

    Bytes plain;
    put_u16(plain, bundle.cloves.size());
    for (const auto& clove : bundle.cloves) {
        put_blob(plain, clove.destination);
        put_u16(plain, clove.payload.size());
        plain.insert(plain.end(), clove.payload.begin(), clove.payload.end());
    }
    if (plain.size() > kBundlePlainSize)
        return R::failure(OnionError::payload_too_large,
                          "bundle exceeds " + std::to_string(kBundlePlainSize) + " bytes");
    Bytes junk = rng.bytes(kBundlePlainSize - plain.size());
    plain.insert(plain.end(), junk.begin(), junk.end());

    Key32 eph_sec, eph_pub, shared;
    rng.fill(eph_sec.data(), eph_sec.size());
    crypto_scalarmult_base(eph_pub.data(), eph_sec.data());
    if (crypto_scalarmult(shared.data(), eph_sec.data(), dest_e2e_pub.data()) != 0)
        return R::failure(OnionError::bad_bundle, "degenerate destination key");

    Bytes key_material(shared.begin(), shared.end());
    key_material.insert(key_material.end(), eph_pub.begin(), eph_pub.end());
    key_material.insert(key_material.end(), dest_e2e_pub.begin(), dest_e2e_pub.end());
    auto key = tagged_sha256(kE2eKeyDomain, key_material);

    Bytes nonce_material(eph_pub.begin(), eph_pub.end());
    nonce_material.insert(nonce_material.end(), dest_e2e_pub.begin(), dest_e2e_pub.end());
    auto nonce_full = tagged_sha256(kE2eNonceDomain, nonce_material);

    Bytes out(eph_pub.begin(), eph_pub.end());
    out.resize(32 + plain.size() + kMacSize);
    crypto_secretbox_easy(out.data() + 32, plain.data(), plain.size(), nonce_full.data(),
                          key.data());
    return R::success(std::move(out));
}

Outcome<std::vector<Clove>, OnionError> open_bundle(const Bytes& sealed,
                                                    const std::string& destination,
                                                    const Key32& e2e_sec) {
    using R = Outcome<std::vector<Clove>, OnionError>;
    crypto_init();
    if (sealed.size() != kSealedBundleSize)
        return R::failure(OnionError::bad_bundle, "wrong sealed size");

    Key32 eph_pub, dest_pub, shared;
    std::copy(sealed.begin(), sealed.begin() + 32, eph_pub.begin());
    crypto_scalarmult_base(dest_pub.data(), e2e_sec.data());
    if (crypto_scalarmult(shared.data(), e2e_sec.data(), eph_pub.data()) != 0)
        return R::failure(OnionError::decrypt_failed);

    Bytes key_material(shared.begin(), shared.end());
    key_material.insert(key_material.end(), eph_pub.begin(), eph_pub.end());
    key_material.insert(key_material.end(), dest_pub.begin(), dest_pub.end());
    auto key = tagged_sha256(kE2eKeyDomain, key_material);

    Bytes nonce_material(eph_pub.begin(), eph_pub.end());
    nonce_material.insert(nonce_material.end(), dest_pub.begin(), dest_pub.end());
    auto nonce_full = tagged_sha256(kE2eNonceDomain, nonce_material);

    Bytes plain(kBundlePlainSize, 0);
    if (crypto_secretbox_open_easy(plain.data(), sealed.data() + 32, sealed.size() - 32,
                                   nonce_full.data(), key.data()) != 0)
        return R::failure(OnionError::decrypt_failed);

    std::size_t pos = 0;
    auto read_u16 = [&](std::size_t& out) {
        if (pos + 2 > plain.size())
            return false;
        out = (static_cast<std::size_t>(plain[pos]) << 8) | plain[pos + 1];
        pos += 2;
        return true;
    };
    std::size_t count = 0;
    if (!read_u16(count))
        return R::failure(OnionError::bad_bundle);
    std::vector<Clove> mine;
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t dest_len = 0, payload_len = 0;
        if (!read_u16(dest_len) || pos + dest_len > plain.size())
            return R::failure(OnionError::bad_bundle);
        std::string dest(plain.begin() + pos, plain.begin() + pos + dest_len);
        pos += dest_len;
        if (!read_u16(payload_len) || pos + payload_len > plain.size())
            return R::failure(OnionError::bad_bundle);
        Bytes payload(plain.begin() + pos, plain.begin() + pos + payload_len);
        pos += payload_len;
        if (dest == destination)
            mine.push_back(Clove{std::move(dest), std::move(payload)});
    }
    return R::success(std::move(mine));
}

// ------------------------------------------------------------ cover traffic

std::vector<std::uint32_t> cover_trade_slots(double rate_per_slot, std::uint32_t slot_count,
                                             Rng& rng) {
    std::vector<std::uint32_t> slots;
    if (rate_per_slot <= 0.0)
        return slots;
    for (std::uint32_t s = 0; s < slot_count; ++s) {
        std::uint32_t n = rng.poisson(rate_per_slot);
        for (std::uint32_t i = 0; i < n; ++i)
            slots.push_back(s);
    }
    return slots;
}

}  // namespace gridveil::onion
