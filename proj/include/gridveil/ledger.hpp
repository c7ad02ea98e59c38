#pragma once

#include <compare>
#include <iosfwd>
#include <map>
#include <set>
#include <variant>
#include <vector>

#include "gridveil/common.hpp"

namespace gridveil::ledger {

// All quantities are integers: watts, fiat cents, slot indices, and
// parts-per-million for ratios/scores. Replay must be bit-exact, so no
// floating point enters the derived state.
constexpr std::uint32_t kPpm = 1'000'000;

enum class AssetKind { production, consumption };
enum class Side { ask, bid };
enum class OfferState { open, matched, expired };

const char* to_string(AssetKind k);
const char* to_string(Side s);
const char* to_string(OfferState s);

struct TimeInterval {
    std::uint32_t start = 0;
    std::uint32_t end = 0;  // inclusive

    bool valid() const { return start <= end; }
    std::uint32_t slot_count() const { return end - start + 1; }
    bool contains(std::uint32_t slot) const { return slot >= start && slot <= end; }
    bool contains(const TimeInterval& other) const {
        return other.start >= start && other.end <= end;
    }
    auto operator<=>(const TimeInterval&) const = default;
};

struct AnonAddress {
    std::string value;
    auto operator<=>(const AnonAddress&) const = default;
};

using ProsumerId = std::string;
using TokenId = std::uint64_t;
using OfferId = std::uint64_t;
using TradeId = std::uint64_t;

struct EnergyAsset {
    TokenId id = 0;
    AssetKind kind = AssetKind::production;
    std::uint64_t power_w = 0;
    TimeInterval interval;
    AnonAddress holder;
    bool operator==(const EnergyAsset&) const = default;
};

struct ProsumerRecord {
    ProsumerId id;
    std::uint64_t max_generation_w = 0;
    std::uint64_t max_consumption_w = 0;
    std::uint32_t reputation_ppm = kPpm;
    bool operator==(const ProsumerRecord&) const = default;
};

struct AssetSpec {
    AssetKind kind = AssetKind::production;
    std::uint64_t power_w = 0;
    TimeInterval interval;
    bool operator==(const AssetSpec&) const = default;
};

struct Offer {
    OfferId id = 0;
    Side side = Side::ask;
    AssetSpec spec;
    std::uint64_t unit_price_cents = 0;  // per watt-slot
    AnonAddress poster;
    OfferState state = OfferState::open;
    std::uint32_t posted_slot = 0;
    TokenId backing_token = 0;  // asks only
    bool operator==(const Offer&) const = default;
};

// Public ring references recorded with a spend: token ids of the ring
// members plus the key image. The registry is fed from here.
struct RingMetadata {
    std::vector<TokenId> ring_token_ids;
    std::string key_image_hex;
    bool operator==(const RingMetadata&) const = default;
};

struct TransferRecord {
    std::vector<std::uint64_t> measured_w;  // one entry per slot of the interval
    std::uint32_t fulfillment_ppm = 0;      // delivered / promised
    bool operator==(const TransferRecord&) const = default;
};

struct Trade {
    TradeId id = 0;
    OfferId offer_id = 0;
    AnonAddress seller;
    AnonAddress buyer;
    AssetSpec spec;
    TokenId token = 0;
    std::uint64_t escrow_cents = 0;
    std::uint32_t posted_slot = 0;
    std::uint32_t cleared_slot = 0;
    std::optional<TransferRecord> transfer;
    bool settled = false;
    std::uint64_t seller_paid_cents = 0;
    std::uint64_t buyer_refund_cents = 0;
    std::optional<RingMetadata> ring;
    bool operator==(const Trade&) const = default;
};

// ------------------------------------------------------------------- events

struct PolicySet {
    std::uint32_t slot = 0;
    std::uint64_t rate_cents_per_watt_slot = 0;
    bool operator==(const PolicySet&) const = default;
};
struct ProsumerRegistered {
    std::uint32_t slot = 0;
    ProsumerId prosumer;
    std::uint64_t max_generation_w = 0;
    std::uint64_t max_consumption_w = 0;
    std::uint32_t initial_reputation_ppm = kPpm;
    bool operator==(const ProsumerRegistered&) const = default;
};
struct FiatIssued {
    std::uint32_t slot = 0;
    ProsumerId prosumer;  // DSO-side linkage, known at issuance
    AnonAddress to;
    std::uint64_t amount_cents = 0;
    bool operator==(const FiatIssued&) const = default;
};
struct EnergyWithdrawn {
    std::uint32_t slot = 0;
    TokenId token = 0;
    ProsumerId prosumer;
    AssetKind kind = AssetKind::production;
    std::uint64_t power_w = 0;
    TimeInterval interval;
    AnonAddress holder;
    bool operator==(const EnergyWithdrawn&) const = default;
};
struct AssetSplit {
    std::uint32_t slot = 0;
    TokenId parent = 0;
    TokenId child_a = 0;
    std::uint64_t power_a = 0;
    TimeInterval interval_a;
    TokenId child_b = 0;
    std::uint64_t power_b = 0;
    TimeInterval interval_b;
    bool operator==(const AssetSplit&) const = default;
};
struct OfferPosted {
    std::uint32_t slot = 0;
    OfferId offer = 0;
    AnonAddress poster;
    Side side = Side::ask;
    AssetKind kind = AssetKind::production;
    std::uint64_t power_w = 0;
    TimeInterval interval;
    std::uint64_t unit_price_cents = 0;
    TokenId backing_token = 0;
    bool operator==(const OfferPosted&) const = default;
};
struct OfferAccepted {
    std::uint32_t slot = 0;
    TradeId trade = 0;
    OfferId offer = 0;
    AnonAddress acceptor;
    std::uint64_t escrow_cents = 0;
    TokenId seller_token = 0;  // the transferred token (bids; asks use the backing token)
    std::optional<RingMetadata> ring;
    bool operator==(const OfferAccepted&) const = default;
};
struct TransferRecorded {
    std::uint32_t slot = 0;
    TradeId trade = 0;
    std::vector<std::uint64_t> measured_w;
    bool operator==(const TransferRecorded&) const = default;
};
struct FinancialSettled {
    std::uint32_t slot = 0;
    TradeId trade = 0;
    std::uint64_t seller_amount_cents = 0;
    std::uint64_t buyer_refund_cents = 0;
    bool operator==(const FinancialSettled&) const = default;
};
struct ReputationUpdated {
    std::uint32_t slot = 0;
    ProsumerId prosumer;
    std::uint32_t ratio_ppm = 0;
    bool operator==(const ReputationUpdated&) const = default;
};
struct MeterReading {
    std::uint32_t slot = 0;
    ProsumerId prosumer;
    std::int64_t net_w = 0;  // positive = consumption from the grid
    bool operator==(const MeterReading&) const = default;
};
struct SlotAdvanced {
    std::uint32_t slot = 0;
    bool operator==(const SlotAdvanced&) const = default;
};

using Event = std::variant<PolicySet, ProsumerRegistered, FiatIssued, EnergyWithdrawn,
                           AssetSplit, OfferPosted, OfferAccepted, TransferRecorded,
                           FinancialSettled, ReputationUpdated, MeterReading, SlotAdvanced>;

enum class LedgerError {
    ok = 0,
    unknown_prosumer,
    capacity_exceeded,
    unbacked_ask,
    negative_price,
    offer_not_open,
    insufficient_funds,
    not_subdividable,
    trade_unknown,
    interval_not_elapsed,
    not_delivered,
    already_settled,
    policy_missing,
    invalid_interval,
    double_spend,
    unknown_token,
    bad_measurement,
    stale_slot,
};

const char* to_string(LedgerError e);

// Derived state is a pure fold of the event log; replaying from genesis
// reproduces it bit-identically (see canonical_state_json).
struct DerivedState {
    std::uint32_t current_slot = 0;
    std::optional<std::uint64_t> policy_rate;
    std::map<ProsumerId, ProsumerRecord> prosumers;
    std::map<ProsumerId, std::set<AnonAddress>> prosumer_addresses;  // DSO-side view
    std::map<TokenId, EnergyAsset> tokens;                           // live tokens
    std::map<AnonAddress, std::uint64_t> fiat_cents;
    std::map<OfferId, Offer> offers;
    std::map<TradeId, Trade> trades;
    std::set<std::string> key_images;
    // scheduled withdrawn power per (prosumer, kind, slot); never decreases
    std::map<ProsumerId, std::map<std::uint32_t, std::uint64_t>> scheduled_production_w;
    std::map<ProsumerId, std::map<std::uint32_t, std::uint64_t>> scheduled_consumption_w;
    std::uint64_t fiat_issued_total = 0;
    TokenId next_token_id = 1;
    OfferId next_offer_id = 1;
    TradeId next_trade_id = 1;

    bool operator==(const DerivedState&) const = default;
};

struct ClearingViolation {
    OfferId offer = 0;
    std::optional<TradeId> trade;
    std::uint32_t posted_slot = 0;
    std::optional<std::uint32_t> cleared_slot;  // empty: still open/expired
    std::uint32_t latency_slots = 0;
    bool operator==(const ClearingViolation&) const = default;
};

struct SettlementResult {
    std::uint64_t seller_amount_cents = 0;
    std::uint64_t buyer_refund_cents = 0;
};

struct LedgerConfig {
    std::uint32_t clearing_deadline_slots = 2;
};

// score <- (1 - 0.1) * score + 0.1 * ratio, in integer ppm
std::uint32_t smoothed_reputation(std::uint32_t score_ppm, std::uint32_t ratio_ppm);

// Single-writer append: all mutations run through one ordered event log.
// Snapshots of the derived state may be shared freely across readers; there
// is no internal locking beyond that rule.
class Ledger {
public:
    explicit Ledger(LedgerConfig cfg = {}) : cfg_(cfg) {}

    template <typename T>
    using Result = Outcome<T, LedgerError>;
    using Check = Status<LedgerError>;

    // DSO-side bootstrap
    Check set_policy(std::uint64_t rate_cents_per_watt_slot);
    Check register_prosumer(const ProsumerId& id, std::uint64_t max_generation_w,
                            std::uint64_t max_consumption_w,
                            std::uint32_t initial_reputation_ppm = kPpm);
    Check issue_fiat(const ProsumerId& prosumer, const AnonAddress& to, std::uint64_t cents);

    // trading workflow
    Result<EnergyAsset> withdraw_energy_asset(const ProsumerId& prosumer, AssetKind kind,
                                              std::uint64_t power_w, TimeInterval interval,
                                              const AnonAddress& target);
    Result<Offer> post_offer(const AnonAddress& poster, Side side, const AssetSpec& spec,
                             std::int64_t unit_price_cents);
    Result<Trade> accept_offer(const AnonAddress& acceptor, OfferId offer,
                               std::optional<RingMetadata> ring = std::nullopt);
    Result<std::pair<EnergyAsset, EnergyAsset>> split_asset(TokenId token,
                                                            std::uint64_t power_part_w,
                                                            TimeInterval interval_part);
    Result<TransferRecord> record_energy_transfer(TradeId trade,
                                                  std::vector<std::uint64_t> measured_w);
    Result<SettlementResult> settle_financial(TradeId trade);
    Result<std::uint32_t> update_reputation(const ProsumerId& prosumer, std::uint32_t ratio_ppm);
    Check record_meter_reading(const ProsumerId& prosumer, std::int64_t net_w);
    Check advance_slot(std::uint32_t slot);

    // Net amount owed over the window, computed only from the prosumer's own
    // events plus the public price policy. Negative: the DSO owes the
    // prosumer.
    Result<std::int64_t> compute_bill(const ProsumerId& prosumer, TimeInterval window) const;

    std::vector<ClearingViolation> check_clearing_deadlines(std::uint32_t current_slot) const;

    // open offers matching the filter in price-time priority (asks: lowest
    // price first; bids: highest first), offer-id tiebreak
    std::vector<OfferId> open_offers_sorted(Side side,
                                            const std::optional<AssetSpec>& filter = {}) const;

    const DerivedState& state() const { return state_; }
    const std::vector<Event>& events() const { return log_; }
    const LedgerConfig& config() const { return cfg_; }

    static void apply(DerivedState& s, const Event& e);
    static DerivedState replay(const std::vector<Event>& events);
    static Ledger from_events(LedgerConfig cfg, std::vector<Event> events);

private:
    void append(Event e);

    LedgerConfig cfg_;
    std::vector<Event> log_;
    DerivedState state_;
};

// Structural safety/conservation checks over a full event log; returns
// human-readable findings, empty when clean.
std::vector<std::string> verify_invariants(const std::vector<Event>& events);

// ---------------------------------------------------------- serialization

// Line-delimited JSON, one event per line, canonical field order, schema
// version header; replays are byte-exact across implementations.
std::string events_to_jsonl(const std::vector<Event>& events);
std::vector<Event> events_from_jsonl(const std::string& text);
void save_events(const std::string& path, const std::vector<Event>& events);
std::vector<Event> load_events(const std::string& path);

// canonical single-line JSON of the derived state, for bit-exact comparison
std::string canonical_state_json(const DerivedState& s);

}  // namespace gridveil::ledger
