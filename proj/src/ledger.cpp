#include "gridveil/ledger.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gridveil::ledger {

using ordered_json = nlohmann::ordered_json;

const char* to_string(AssetKind k) {
    return k == AssetKind::production ? "production" : "consumption";
}
const char* to_string(Side s) { return s == Side::ask ? "ask" : "bid"; }
const char* to_string(OfferState s) {
    switch (s) {
        case OfferState::open: return "open";
        case OfferState::matched: return "matched";
        default: return "expired";
    }
}

const char* to_string(LedgerError e) {
    switch (e) {
        case LedgerError::ok: return "ok";
        case LedgerError::unknown_prosumer: return "UnknownProsumer";
        case LedgerError::capacity_exceeded: return "CapacityExceeded";
        case LedgerError::unbacked_ask: return "UnbackedAsk";
        case LedgerError::negative_price: return "NegativePrice";
        case LedgerError::offer_not_open: return "OfferNotOpen";
        case LedgerError::insufficient_funds: return "InsufficientFunds";
        case LedgerError::not_subdividable: return "NotSubdividable";
        case LedgerError::trade_unknown: return "TradeUnknown";
        case LedgerError::interval_not_elapsed: return "IntervalNotElapsed";
        case LedgerError::not_delivered: return "NotDelivered";
        case LedgerError::already_settled: return "AlreadySettled";
        case LedgerError::policy_missing: return "PolicyMissing";
        case LedgerError::invalid_interval: return "InvalidInterval";
        case LedgerError::double_spend: return "DoubleSpend";
        case LedgerError::unknown_token: return "UnknownToken";
        case LedgerError::bad_measurement: return "BadMeasurement";
        case LedgerError::stale_slot: return "StaleSlot";
    }
    return "?";
}

std::uint32_t smoothed_reputation(std::uint32_t score_ppm, std::uint32_t ratio_ppm) {
    std::uint64_t next = (9ull * score_ppm + ratio_ppm) / 10ull;
    return static_cast<std::uint32_t>(std::min<std::uint64_t>(next, kPpm));
}

namespace {

std::uint64_t trade_cost_cents(std::uint64_t unit_price, const AssetSpec& spec) {
    return unit_price * spec.power_w * spec.interval.slot_count();
}

std::uint32_t fulfillment_ppm(const AssetSpec& spec, const std::vector<std::uint64_t>& measured) {
    std::uint64_t promised = spec.power_w * spec.interval.slot_count();
    if (promised == 0)
        return kPpm;  // zero-asset trades are trivially fulfilled
    std::uint64_t delivered = 0;
    for (auto w : measured)
        delivered += std::min(w, spec.power_w);  // over-delivery does not overfulfill
    std::uint64_t ratio = delivered * kPpm / promised;
    return static_cast<std::uint32_t>(std::min<std::uint64_t>(ratio, kPpm));
}

// the prosumer that the DSO associates with an address, if any
std::optional<ProsumerId> address_owner(const DerivedState& s, const AnonAddress& addr) {
    for (const auto& [id, addrs] : s.prosumer_addresses)
        if (addrs.count(addr))
            return id;
    return std::nullopt;
}

std::uint64_t& slot_count(std::map<std::uint32_t, std::uint64_t>& m, std::uint32_t slot) {
    return m[slot];
}

}  // namespace

// -------------------------------------------------------------------- apply

void Ledger::apply(DerivedState& s, const Event& event) {
    std::visit(
        [&s](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, PolicySet>) {
                s.policy_rate = e.rate_cents_per_watt_slot;
            } else if constexpr (std::is_same_v<T, ProsumerRegistered>) {
                s.prosumers[e.prosumer] = ProsumerRecord{e.prosumer, e.max_generation_w,
                                                         e.max_consumption_w,
                                                         e.initial_reputation_ppm};
                s.prosumer_addresses[e.prosumer];
            } else if constexpr (std::is_same_v<T, FiatIssued>) {
                s.fiat_cents[e.to] += e.amount_cents;
                s.fiat_issued_total += e.amount_cents;
                s.prosumer_addresses[e.prosumer].insert(e.to);
            } else if constexpr (std::is_same_v<T, EnergyWithdrawn>) {
                s.tokens[e.token] =
                    EnergyAsset{e.token, e.kind, e.power_w, e.interval, e.holder};
                s.prosumer_addresses[e.prosumer].insert(e.holder);
                auto& sched = e.kind == AssetKind::production ? s.scheduled_production_w
                                                              : s.scheduled_consumption_w;
                for (std::uint32_t sl = e.interval.start; sl <= e.interval.end; ++sl)
                    slot_count(sched[e.prosumer], sl) += e.power_w;
                s.next_token_id = std::max(s.next_token_id, e.token + 1);
            } else if constexpr (std::is_same_v<T, AssetSplit>) {
                auto parent = s.tokens.at(e.parent);
                s.tokens.erase(e.parent);
                s.tokens[e.child_a] =
                    EnergyAsset{e.child_a, parent.kind, e.power_a, e.interval_a, parent.holder};
                s.tokens[e.child_b] =
                    EnergyAsset{e.child_b, parent.kind, e.power_b, e.interval_b, parent.holder};
                s.next_token_id = std::max(s.next_token_id, std::max(e.child_a, e.child_b) + 1);
            } else if constexpr (std::is_same_v<T, OfferPosted>) {
                Offer o;
                o.id = e.offer;
                o.side = e.side;
                o.spec = AssetSpec{e.kind, e.power_w, e.interval};
                o.unit_price_cents = e.unit_price_cents;
                o.poster = e.poster;
                o.state = OfferState::open;
                o.posted_slot = e.slot;
                o.backing_token = e.backing_token;
                s.offers[e.offer] = o;
                s.next_offer_id = std::max(s.next_offer_id, e.offer + 1);
            } else if constexpr (std::is_same_v<T, OfferAccepted>) {
                auto& offer = s.offers.at(e.offer);
                offer.state = OfferState::matched;
                Trade t;
                t.id = e.trade;
                t.offer_id = e.offer;
                t.spec = offer.spec;
                t.posted_slot = offer.posted_slot;
                t.cleared_slot = e.slot;
                t.escrow_cents = e.escrow_cents;
                t.ring = e.ring;
                if (offer.side == Side::ask) {
                    t.seller = offer.poster;
                    t.buyer = e.acceptor;
                    t.token = offer.backing_token;
                } else {
                    t.seller = e.acceptor;
                    t.buyer = offer.poster;
                    t.token = e.seller_token;
                }
                // move the energy token to the buyer
                if (t.token != 0) {
                    auto it = s.tokens.find(t.token);
                    if (it != s.tokens.end())
                        it->second.holder = t.buyer;
                }
                // escrow the funds
                s.fiat_cents[t.buyer] -= e.escrow_cents;
                if (e.ring)
                    s.key_images.insert(e.ring->key_image_hex);
                s.trades[e.trade] = t;
                s.next_trade_id = std::max(s.next_trade_id, e.trade + 1);
            } else if constexpr (std::is_same_v<T, TransferRecorded>) {
                auto& t = s.trades.at(e.trade);
                TransferRecord rec;
                rec.measured_w = e.measured_w;
                rec.fulfillment_ppm = fulfillment_ppm(t.spec, e.measured_w);
                t.transfer = rec;
                s.tokens.erase(t.token);  // consumed by delivery
            } else if constexpr (std::is_same_v<T, FinancialSettled>) {
                auto& t = s.trades.at(e.trade);
                t.settled = true;
                t.seller_paid_cents = e.seller_amount_cents;
                t.buyer_refund_cents = e.buyer_refund_cents;
                s.fiat_cents[t.seller] += e.seller_amount_cents;
                s.fiat_cents[t.buyer] += e.buyer_refund_cents;
            } else if constexpr (std::is_same_v<T, ReputationUpdated>) {
                auto& p = s.prosumers.at(e.prosumer);
                p.reputation_ppm = smoothed_reputation(p.reputation_ppm, e.ratio_ppm);
            } else if constexpr (std::is_same_v<T, MeterReading>) {
                (void)e;  // bills read meter events straight from the log
            } else if constexpr (std::is_same_v<T, SlotAdvanced>) {
                s.current_slot = e.slot;
                for (auto& [id, offer] : s.offers)
                    if (offer.state == OfferState::open && offer.spec.interval.end < e.slot)
                        offer.state = OfferState::expired;
            }
        },
        event);
}

DerivedState Ledger::replay(const std::vector<Event>& events) {
    DerivedState s;
    for (const auto& e : events)
        apply(s, e);
    return s;
}

Ledger Ledger::from_events(LedgerConfig cfg, std::vector<Event> events) {
    Ledger l(cfg);
    l.state_ = replay(events);
    l.log_ = std::move(events);
    return l;
}

void Ledger::append(Event e) {
    apply(state_, e);
    log_.push_back(std::move(e));
}

// ---------------------------------------------------------------- operations

Ledger::Check Ledger::set_policy(std::uint64_t rate) {
    append(PolicySet{state_.current_slot, rate});
    return Check::success();
}

Ledger::Check Ledger::register_prosumer(const ProsumerId& id, std::uint64_t max_gen,
                                        std::uint64_t max_cons, std::uint32_t rep_ppm) {
    if (rep_ppm > kPpm)
        return Check::failure(LedgerError::bad_measurement, "reputation above 1.0");
    append(ProsumerRegistered{state_.current_slot, id, max_gen, max_cons, rep_ppm});
    return Check::success();
}

Ledger::Check Ledger::issue_fiat(const ProsumerId& prosumer, const AnonAddress& to,
                                 std::uint64_t cents) {
    if (!state_.prosumers.count(prosumer))
        return Check::failure(LedgerError::unknown_prosumer, prosumer);
    append(FiatIssued{state_.current_slot, prosumer, to, cents});
    return Check::success();
}

Ledger::Result<EnergyAsset> Ledger::withdraw_energy_asset(const ProsumerId& prosumer,
                                                          AssetKind kind, std::uint64_t power_w,
                                                          TimeInterval interval,
                                                          const AnonAddress& target) {
    using R = Result<EnergyAsset>;
    auto pit = state_.prosumers.find(prosumer);
    if (pit == state_.prosumers.end())
        return R::failure(LedgerError::unknown_prosumer, prosumer);
    if (!interval.valid())
        return R::failure(LedgerError::invalid_interval);

    // capacity is enforced per slot over everything already scheduled
    const std::uint64_t cap = kind == AssetKind::production ? pit->second.max_generation_w
                                                            : pit->second.max_consumption_w;
    const auto& sched = kind == AssetKind::production ? state_.scheduled_production_w
                                                      : state_.scheduled_consumption_w;
    const auto sit = sched.find(prosumer);
    for (std::uint32_t sl = interval.start; sl <= interval.end; ++sl) {
        std::uint64_t used = 0;
        if (sit != sched.end()) {
            auto it = sit->second.find(sl);
            if (it != sit->second.end())
                used = it->second;
        }
        if (used + power_w > cap)
            return R::failure(LedgerError::capacity_exceeded,
                              "slot " + std::to_string(sl) + ": " +
                                  std::to_string(used + power_w) + " W > " +
                                  std::to_string(cap) + " W");
    }

    TokenId id = state_.next_token_id;
    append(EnergyWithdrawn{state_.current_slot, id, prosumer, kind, power_w, interval, target});
    return R::success(state_.tokens.at(id));
}

Ledger::Result<Offer> Ledger::post_offer(const AnonAddress& poster, Side side,
                                         const AssetSpec& spec, std::int64_t unit_price_cents) {
    using R = Result<Offer>;
    if (unit_price_cents < 0)
        return R::failure(LedgerError::negative_price);
    if (!spec.interval.valid())
        return R::failure(LedgerError::invalid_interval);

    TokenId backing = 0;
    if (side == Side::ask) {
        // a token may back at most one open ask
        std::set<TokenId> busy;
        for (const auto& [id, o] : state_.offers)
            if (o.state == OfferState::open && o.side == Side::ask && o.poster == poster)
                busy.insert(o.backing_token);
        for (const auto& [id, tok] : state_.tokens) {
            if (busy.count(id))
                continue;
            if (tok.holder == poster && tok.kind == spec.kind && tok.power_w == spec.power_w &&
                tok.interval == spec.interval) {
                backing = id;
                break;
            }
        }
        if (backing == 0)
            return R::failure(LedgerError::unbacked_ask,
                              "poster holds no free token matching the ask");
    }

    OfferId id = state_.next_offer_id;
    append(OfferPosted{state_.current_slot, id, poster, side, spec.kind, spec.power_w,
                       spec.interval, static_cast<std::uint64_t>(unit_price_cents), backing});
    return R::success(state_.offers.at(id));
}

Ledger::Result<Trade> Ledger::accept_offer(const AnonAddress& acceptor, OfferId offer_id,
                                           std::optional<RingMetadata> ring) {
    using R = Result<Trade>;
    auto oit = state_.offers.find(offer_id);
    if (oit == state_.offers.end())
        return R::failure(LedgerError::offer_not_open, "no such offer");
    const Offer& offer = oit->second;
    if (offer.state != OfferState::open)
        return R::failure(LedgerError::offer_not_open, to_string(offer.state));

    const std::uint64_t cost = trade_cost_cents(offer.unit_price_cents, offer.spec);
    const AnonAddress& buyer = offer.side == Side::ask ? acceptor : offer.poster;
    auto bit = state_.fiat_cents.find(buyer);
    const std::uint64_t funds = bit == state_.fiat_cents.end() ? 0 : bit->second;
    if (funds < cost)
        return R::failure(LedgerError::insufficient_funds,
                          std::to_string(funds) + " < " + std::to_string(cost));

    TokenId seller_token = 0;
    if (offer.side == Side::bid) {
        // acceptor sells: must hold a matching token
        for (const auto& [id, tok] : state_.tokens)
            if (tok.holder == acceptor && tok.kind == offer.spec.kind &&
                tok.power_w == offer.spec.power_w && tok.interval == offer.spec.interval) {
                seller_token = id;
                break;
            }
        if (seller_token == 0)
            return R::failure(LedgerError::unbacked_ask, "acceptor holds no matching token");
    } else {
        // the backing token must still exist and sit with the poster
        auto tit = state_.tokens.find(offer.backing_token);
        if (tit == state_.tokens.end() || !(tit->second.holder == offer.poster))
            return R::failure(LedgerError::offer_not_open, "backing token no longer held");
    }

    if (ring && state_.key_images.count(ring->key_image_hex))
        return R::failure(LedgerError::double_spend, ring->key_image_hex);

    TradeId id = state_.next_trade_id;
    append(OfferAccepted{state_.current_slot, id, offer_id, acceptor, cost, seller_token,
                         std::move(ring)});
    return R::success(state_.trades.at(id));
}

Ledger::Result<std::pair<EnergyAsset, EnergyAsset>> Ledger::split_asset(
    TokenId token, std::uint64_t power_part_w, TimeInterval interval_part) {
    using R = Result<std::pair<EnergyAsset, EnergyAsset>>;
    auto it = state_.tokens.find(token);
    if (it == state_.tokens.end())
        return R::failure(LedgerError::unknown_token);
    const EnergyAsset& asset = it->second;
    if (!interval_part.valid() || !asset.interval.contains(interval_part))
        return R::failure(LedgerError::not_subdividable, "interval not contained");
    if (power_part_w > asset.power_w)
        return R::failure(LedgerError::not_subdividable, "power part exceeds token");

    std::uint64_t power_a = power_part_w, power_b = 0;
    TimeInterval int_a = interval_part, int_b;
    if (interval_part == asset.interval) {
        // pure power split over the full interval
        if (power_part_w == asset.power_w)
            return R::failure(LedgerError::not_subdividable, "split leaves an empty remainder");
        power_b = asset.power_w - power_part_w;
        int_b = asset.interval;
    } else if (power_part_w == asset.power_w) {
        // pure interval split: the part must be a prefix or suffix so the
        // remainder is a single contiguous interval
        power_b = asset.power_w;
        if (interval_part.start == asset.interval.start) {
            int_b = TimeInterval{interval_part.end + 1, asset.interval.end};
        } else if (interval_part.end == asset.interval.end) {
            int_b = TimeInterval{asset.interval.start, interval_part.start - 1};
        } else {
            return R::failure(LedgerError::not_subdividable,
                              "interior interval split would need three tokens");
        }
    } else {
        return R::failure(LedgerError::not_subdividable,
                          "split must partition either power or interval, not both");
    }

    TokenId a = state_.next_token_id, b = state_.next_token_id + 1;
    append(AssetSplit{state_.current_slot, token, a, power_a, int_a, b, power_b, int_b});
    return R::success(std::make_pair(state_.tokens.at(a), state_.tokens.at(b)));
}

Ledger::Result<TransferRecord> Ledger::record_energy_transfer(
    TradeId trade_id, std::vector<std::uint64_t> measured_w) {
    using R = Result<TransferRecord>;
    auto it = state_.trades.find(trade_id);
    if (it == state_.trades.end())
        return R::failure(LedgerError::trade_unknown);
    const Trade& t = it->second;
    if (t.transfer)
        return R::failure(LedgerError::already_settled, "transfer already recorded");
    if (state_.current_slot <= t.spec.interval.end)
        return R::failure(LedgerError::interval_not_elapsed,
                          "interval ends at slot " + std::to_string(t.spec.interval.end));
    if (measured_w.size() != t.spec.interval.slot_count())
        return R::failure(LedgerError::bad_measurement,
                          "expected " + std::to_string(t.spec.interval.slot_count()) +
                              " slot readings");

    append(TransferRecorded{state_.current_slot, trade_id, std::move(measured_w)});
    const Trade& updated = state_.trades.at(trade_id);

    // fulfilment feeds the seller's reputation when the DSO can attribute it
    if (auto owner = address_owner(state_, updated.seller))
        append(ReputationUpdated{state_.current_slot, *owner, updated.transfer->fulfillment_ppm});
    return R::success(*updated.transfer);
}

Ledger::Result<SettlementResult> Ledger::settle_financial(TradeId trade_id) {
    using R = Result<SettlementResult>;
    auto it = state_.trades.find(trade_id);
    if (it == state_.trades.end())
        return R::failure(LedgerError::trade_unknown);
    const Trade& t = it->second;
    if (!t.transfer)
        return R::failure(LedgerError::not_delivered);
    if (t.settled)
        return R::failure(LedgerError::already_settled);

    // escrow released proportionally to fulfilment, remainder refunded
    std::uint64_t seller_amount =
        t.escrow_cents * t.transfer->fulfillment_ppm / kPpm;
    std::uint64_t refund = t.escrow_cents - seller_amount;
    append(FinancialSettled{state_.current_slot, trade_id, seller_amount, refund});
    return R::success(SettlementResult{seller_amount, refund});
}

Ledger::Result<std::uint32_t> Ledger::update_reputation(const ProsumerId& prosumer,
                                                        std::uint32_t ratio_ppm) {
    using R = Result<std::uint32_t>;
    if (!state_.prosumers.count(prosumer))
        return R::failure(LedgerError::unknown_prosumer, prosumer);
    if (ratio_ppm > kPpm)
        return R::failure(LedgerError::bad_measurement, "ratio above 1.0");
    append(ReputationUpdated{state_.current_slot, prosumer, ratio_ppm});
    return R::success(state_.prosumers.at(prosumer).reputation_ppm);
}

Ledger::Check Ledger::record_meter_reading(const ProsumerId& prosumer, std::int64_t net_w) {
    if (!state_.prosumers.count(prosumer))
        return Check::failure(LedgerError::unknown_prosumer, prosumer);
    append(MeterReading{state_.current_slot, prosumer, net_w});
    return Check::success();
}

Ledger::Check Ledger::advance_slot(std::uint32_t slot) {
    if (slot < state_.current_slot)
        return Check::failure(LedgerError::stale_slot);
    append(SlotAdvanced{slot});
    return Check::success();
}

Ledger::Result<std::int64_t> Ledger::compute_bill(const ProsumerId& prosumer,
                                                  TimeInterval window) const {
    using R = Result<std::int64_t>;
    if (!state_.policy_rate)
        return R::failure(LedgerError::policy_missing);
    auto ait = state_.prosumer_addresses.find(prosumer);
    if (ait == state_.prosumer_addresses.end())
        return R::failure(LedgerError::unknown_prosumer, prosumer);
    const auto& own = ait->second;

    // Bill locality: keep only events the prosumer authored or that address
    // it, then fold. The public price policy is the only shared input.
    std::int64_t owed = 0;
    std::map<TradeId, const Trade*> own_trades;
    for (const auto& [id, t] : state_.trades)
        if (own.count(t.buyer) || own.count(t.seller))
            own_trades[id] = &t;

    for (const auto& event : log_) {
        if (const auto* fs = std::get_if<FinancialSettled>(&event)) {
            if (fs->slot < window.start || fs->slot > window.end)
                continue;
            auto it = own_trades.find(fs->trade);
            if (it == own_trades.end())
                continue;
            if (own.count(it->second->buyer))
                owed += static_cast<std::int64_t>(fs->seller_amount_cents);
            if (own.count(it->second->seller))
                owed -= static_cast<std::int64_t>(fs->seller_amount_cents);
        } else if (const auto* mr = std::get_if<MeterReading>(&event)) {
            if (mr->prosumer != prosumer || mr->slot < window.start || mr->slot > window.end)
                continue;
            owed += mr->net_w * static_cast<std::int64_t>(*state_.policy_rate);
        }
    }
    return R::success(owed);
}

std::vector<ClearingViolation> Ledger::check_clearing_deadlines(
    std::uint32_t current_slot) const {
    std::vector<ClearingViolation> out;
    const std::uint32_t deadline = cfg_.clearing_deadline_slots;
    std::map<OfferId, const Trade*> by_offer;
    for (const auto& [id, t] : state_.trades)
        by_offer[t.offer_id] = &t;

    for (const auto& [id, offer] : state_.offers) {
        if (offer.state == OfferState::matched) {
            const Trade* t = by_offer.at(id);
            std::uint32_t latency = t->cleared_slot - t->posted_slot;
            if (latency > deadline)
                out.push_back(ClearingViolation{id, t->id, t->posted_slot, t->cleared_slot,
                                                latency});
        } else {
            // open or expired: still unmatched, measured against now
            std::uint32_t latency =
                current_slot > offer.posted_slot ? current_slot - offer.posted_slot : 0;
            if (latency > deadline)
                out.push_back(
                    ClearingViolation{id, std::nullopt, offer.posted_slot, std::nullopt, latency});
        }
    }
    return out;
}

std::vector<OfferId> Ledger::open_offers_sorted(Side side,
                                                const std::optional<AssetSpec>& filter) const {
    std::vector<const Offer*> open;
    for (const auto& [id, o] : state_.offers) {
        if (o.state != OfferState::open || o.side != side)
            continue;
        if (filter && !(o.spec == *filter))
            continue;
        open.push_back(&o);
    }
    std::sort(open.begin(), open.end(), [side](const Offer* a, const Offer* b) {
        if (a->unit_price_cents != b->unit_price_cents)
            return side == Side::ask ? a->unit_price_cents < b->unit_price_cents
                                     : a->unit_price_cents > b->unit_price_cents;
        if (a->posted_slot != b->posted_slot)
            return a->posted_slot < b->posted_slot;
        return a->id < b->id;
    });
    std::vector<OfferId> out;
    out.reserve(open.size());
    for (const auto* o : open)
        out.push_back(o->id);
    return out;
}

// --------------------------------------------------------------- invariants

std::vector<std::string> verify_invariants(const std::vector<Event>& events) {
    std::vector<std::string> findings;
    DerivedState s;
    // independent per-slot tallies maintained alongside the fold
    std::map<std::uint32_t, std::int64_t> production_outstanding;  // withdrawn - retired
    std::map<std::uint32_t, std::int64_t> consumption_outstanding;
    std::uint64_t escrow_total = 0;

    std::size_t index = 0;
    for (const auto& event : events) {
        // pre-apply bookkeeping that needs the prior state
        if (const auto* acc = std::get_if<OfferAccepted>(&event)) {
            escrow_total += acc->escrow_cents;
        } else if (const auto* fs = std::get_if<FinancialSettled>(&event)) {
            escrow_total -= fs->seller_amount_cents + fs->buyer_refund_cents;
        } else if (const auto* tr = std::get_if<TransferRecorded>(&event)) {
            auto it = s.trades.find(tr->trade);
            if (it != s.trades.end() && s.tokens.count(it->second.token)) {
                const auto& tok = s.tokens.at(it->second.token);
                auto& out = tok.kind == AssetKind::production ? production_outstanding
                                                              : consumption_outstanding;
                for (std::uint32_t sl = tok.interval.start; sl <= tok.interval.end; ++sl)
                    out[sl] -= static_cast<std::int64_t>(tok.power_w);
            }
        } else if (const auto* w = std::get_if<EnergyWithdrawn>(&event)) {
            auto& out = w->kind == AssetKind::production ? production_outstanding
                                                         : consumption_outstanding;
            for (std::uint32_t sl = w->interval.start; sl <= w->interval.end; ++sl)
                out[sl] += static_cast<std::int64_t>(w->power_w);
            // capacity safety at the moment of withdrawal
            auto pit = s.prosumers.find(w->prosumer);
            if (pit == s.prosumers.end()) {
                findings.push_back("event " + std::to_string(index) +
                                   ": withdrawal for unregistered prosumer " + w->prosumer);
            } else {
                std::uint64_t cap = w->kind == AssetKind::production
                                        ? pit->second.max_generation_w
                                        : pit->second.max_consumption_w;
                const auto& sched = w->kind == AssetKind::production
                                        ? s.scheduled_production_w
                                        : s.scheduled_consumption_w;
                auto sit = sched.find(w->prosumer);
                for (std::uint32_t sl = w->interval.start; sl <= w->interval.end; ++sl) {
                    std::uint64_t used = 0;
                    if (sit != sched.end()) {
                        auto u = sit->second.find(sl);
                        if (u != sit->second.end())
                            used = u->second;
                    }
                    if (used + w->power_w > cap)
                        findings.push_back("event " + std::to_string(index) +
                                           ": capacity violation for " + w->prosumer +
                                           " at slot " + std::to_string(sl));
                }
            }
        }

        Ledger::apply(s, event);
        ++index;

        // energy conservation: per slot, live token power equals
        // withdrawn-minus-retired for each kind
        std::map<std::uint32_t, std::int64_t> live_prod, live_cons;
        for (const auto& [id, tok] : s.tokens) {
            auto& live = tok.kind == AssetKind::production ? live_prod : live_cons;
            for (std::uint32_t sl = tok.interval.start; sl <= tok.interval.end; ++sl)
                live[sl] += static_cast<std::int64_t>(tok.power_w);
        }
        auto check_kind = [&](const std::map<std::uint32_t, std::int64_t>& live,
                              const std::map<std::uint32_t, std::int64_t>& outstanding,
                              const char* kind) {
            for (const auto& [sl, outstanding_w] : outstanding) {
                std::int64_t live_w = 0;
                if (auto it = live.find(sl); it != live.end())
                    live_w = it->second;
                if (live_w != outstanding_w)
                    findings.push_back("event " + std::to_string(index - 1) + ": " + kind +
                                       " conservation broken at slot " + std::to_string(sl) +
                                       " (live " + std::to_string(live_w) + " W, outstanding " +
                                       std::to_string(outstanding_w) + " W)");
            }
        };
        check_kind(live_prod, production_outstanding, "production");
        check_kind(live_cons, consumption_outstanding, "consumption");

        // fiat conservation: balances plus escrow equal everything issued
        std::uint64_t balances = 0;
        for (const auto& [addr, cents] : s.fiat_cents)
            balances += cents;
        if (balances + escrow_total != s.fiat_issued_total)
            findings.push_back("event " + std::to_string(index - 1) +
                               ": fiat conservation broken (balances " +
                               std::to_string(balances) + " + escrow " +
                               std::to_string(escrow_total) + " != issued " +
                               std::to_string(s.fiat_issued_total) + ")");
    }
    return findings;
}

// ------------------------------------------------------------ serialization

namespace {

constexpr int kSchemaVersion = 1;

ordered_json interval_json(const TimeInterval& iv) {
    return ordered_json{{"start", iv.start}, {"end", iv.end}};
}

TimeInterval interval_from(const ordered_json& j) {
    return TimeInterval{j.at("start").get<std::uint32_t>(), j.at("end").get<std::uint32_t>()};
}

ordered_json event_json(const Event& event) {
    ordered_json j;
    std::visit(
        [&j](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, PolicySet>) {
                j["kind"] = "policy_set";
                j["slot"] = e.slot;
                j["rate"] = e.rate_cents_per_watt_slot;
            } else if constexpr (std::is_same_v<T, ProsumerRegistered>) {
                j["kind"] = "prosumer_registered";
                j["slot"] = e.slot;
                j["prosumer"] = e.prosumer;
                j["max_generation_w"] = e.max_generation_w;
                j["max_consumption_w"] = e.max_consumption_w;
                j["reputation_ppm"] = e.initial_reputation_ppm;
            } else if constexpr (std::is_same_v<T, FiatIssued>) {
                j["kind"] = "fiat_issued";
                j["slot"] = e.slot;
                j["prosumer"] = e.prosumer;
                j["to"] = e.to.value;
                j["amount_cents"] = e.amount_cents;
            } else if constexpr (std::is_same_v<T, EnergyWithdrawn>) {
                j["kind"] = "energy_withdrawn";
                j["slot"] = e.slot;
                j["token"] = e.token;
                j["prosumer"] = e.prosumer;
                j["asset_kind"] = to_string(e.kind);
                j["power_w"] = e.power_w;
                j["interval"] = interval_json(e.interval);
                j["holder"] = e.holder.value;
            } else if constexpr (std::is_same_v<T, AssetSplit>) {
                j["kind"] = "asset_split";
                j["slot"] = e.slot;
                j["parent"] = e.parent;
                j["child_a"] = e.child_a;
                j["power_a"] = e.power_a;
                j["interval_a"] = interval_json(e.interval_a);
                j["child_b"] = e.child_b;
                j["power_b"] = e.power_b;
                j["interval_b"] = interval_json(e.interval_b);
            } else if constexpr (std::is_same_v<T, OfferPosted>) {
                j["kind"] = "offer_posted";
                j["slot"] = e.slot;
                j["offer"] = e.offer;
                j["poster"] = e.poster.value;
                j["side"] = to_string(e.side);
                j["asset_kind"] = to_string(e.kind);
                j["power_w"] = e.power_w;
                j["interval"] = interval_json(e.interval);
                j["unit_price_cents"] = e.unit_price_cents;
                j["backing_token"] = e.backing_token;
            } else if constexpr (std::is_same_v<T, OfferAccepted>) {
                j["kind"] = "offer_accepted";
                j["slot"] = e.slot;
                j["trade"] = e.trade;
                j["offer"] = e.offer;
                j["acceptor"] = e.acceptor.value;
                j["escrow_cents"] = e.escrow_cents;
                j["seller_token"] = e.seller_token;
                if (e.ring) {
                    j["ring"] = e.ring->ring_token_ids;
                    j["key_image"] = e.ring->key_image_hex;
                }
            } else if constexpr (std::is_same_v<T, TransferRecorded>) {
                j["kind"] = "transfer_recorded";
                j["slot"] = e.slot;
                j["trade"] = e.trade;
                j["measured_w"] = e.measured_w;
            } else if constexpr (std::is_same_v<T, FinancialSettled>) {
                j["kind"] = "financial_settled";
                j["slot"] = e.slot;
                j["trade"] = e.trade;
                j["seller_amount_cents"] = e.seller_amount_cents;
                j["buyer_refund_cents"] = e.buyer_refund_cents;
            } else if constexpr (std::is_same_v<T, ReputationUpdated>) {
                j["kind"] = "reputation_updated";
                j["slot"] = e.slot;
                j["prosumer"] = e.prosumer;
                j["ratio_ppm"] = e.ratio_ppm;
            } else if constexpr (std::is_same_v<T, MeterReading>) {
                j["kind"] = "meter_reading";
                j["slot"] = e.slot;
                j["prosumer"] = e.prosumer;
                j["net_w"] = e.net_w;
            } else if constexpr (std::is_same_v<T, SlotAdvanced>) {
                j["kind"] = "slot_advanced";
                j["slot"] = e.slot;
            }
        },
        event);
    return j;
}

Event event_from_json(const ordered_json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    auto slot = [&j] { return j.at("slot").get<std::uint32_t>(); };
    auto asset_kind = [&j] {
        return j.at("asset_kind").get<std::string>() == "production" ? AssetKind::production
                                                                     : AssetKind::consumption;
    };
    if (kind == "policy_set")
        return PolicySet{slot(), j.at("rate").get<std::uint64_t>()};
    if (kind == "prosumer_registered")
        return ProsumerRegistered{slot(), j.at("prosumer").get<std::string>(),
                                  j.at("max_generation_w").get<std::uint64_t>(),
                                  j.at("max_consumption_w").get<std::uint64_t>(),
                                  j.at("reputation_ppm").get<std::uint32_t>()};
    if (kind == "fiat_issued")
        return FiatIssued{slot(), j.at("prosumer").get<std::string>(),
                          AnonAddress{j.at("to").get<std::string>()},
                          j.at("amount_cents").get<std::uint64_t>()};
    if (kind == "energy_withdrawn")
        return EnergyWithdrawn{slot(),
                               j.at("token").get<TokenId>(),
                               j.at("prosumer").get<std::string>(),
                               asset_kind(),
                               j.at("power_w").get<std::uint64_t>(),
                               interval_from(j.at("interval")),
                               AnonAddress{j.at("holder").get<std::string>()}};
    if (kind == "asset_split")
        return AssetSplit{slot(),
                          j.at("parent").get<TokenId>(),
                          j.at("child_a").get<TokenId>(),
                          j.at("power_a").get<std::uint64_t>(),
                          interval_from(j.at("interval_a")),
                          j.at("child_b").get<TokenId>(),
                          j.at("power_b").get<std::uint64_t>(),
                          interval_from(j.at("interval_b"))};
    if (kind == "offer_posted")
        return OfferPosted{slot(),
                           j.at("offer").get<OfferId>(),
                           AnonAddress{j.at("poster").get<std::string>()},
                           j.at("side").get<std::string>() == "ask" ? Side::ask : Side::bid,
                           asset_kind(),
                           j.at("power_w").get<std::uint64_t>(),
                           interval_from(j.at("interval")),
                           j.at("unit_price_cents").get<std::uint64_t>(),
                           j.at("backing_token").get<TokenId>()};
    if (kind == "offer_accepted") {
        OfferAccepted e{slot(),
                        j.at("trade").get<TradeId>(),
                        j.at("offer").get<OfferId>(),
                        AnonAddress{j.at("acceptor").get<std::string>()},
                        j.at("escrow_cents").get<std::uint64_t>(),
                        j.at("seller_token").get<TokenId>(),
                        std::nullopt};
        if (j.contains("ring"))
            e.ring = RingMetadata{j.at("ring").get<std::vector<TokenId>>(),
                                  j.at("key_image").get<std::string>()};
        return e;
    }
    if (kind == "transfer_recorded")
        return TransferRecorded{slot(), j.at("trade").get<TradeId>(),
                                j.at("measured_w").get<std::vector<std::uint64_t>>()};
    if (kind == "financial_settled")
        return FinancialSettled{slot(), j.at("trade").get<TradeId>(),
                                j.at("seller_amount_cents").get<std::uint64_t>(),
                                j.at("buyer_refund_cents").get<std::uint64_t>()};
    if (kind == "reputation_updated")
        return ReputationUpdated{slot(), j.at("prosumer").get<std::string>(),
                                 j.at("ratio_ppm").get<std::uint32_t>()};
    if (kind == "meter_reading")
        return MeterReading{slot(), j.at("prosumer").get<std::string>(),
                            j.at("net_w").get<std::int64_t>()};
    if (kind == "slot_advanced")
        return SlotAdvanced{slot()};
    throw std::runtime_error("unknown event kind: " + kind);
}

}  // namespace

std::string events_to_jsonl(const std::vector<Event>& events) {
    std::ostringstream out;
    out << ordered_json{{"schema", "gridveil.ledger.events"}, {"version", kSchemaVersion}}.dump()
        << '\n';
    for (const auto& e : events)
        out << event_json(e).dump() << '\n';
    return out.str();
}

std::vector<Event> events_from_jsonl(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("event log: empty input");
    auto header = ordered_json::parse(line);
    if (header.at("schema") != "gridveil.ledger.events" ||
        header.at("version").get<int>() != kSchemaVersion)
        throw std::runtime_error("event log: unsupported schema header");
    std::vector<Event> events;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        events.push_back(event_from_json(ordered_json::parse(line)));
    }
    return events;
}

void save_events(const std::string& path, const std::vector<Event>& events) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path + " for writing");
    out << events_to_jsonl(events);
}

std::vector<Event> load_events(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return events_from_jsonl(buf.str());
}

std::string canonical_state_json(const DerivedState& s) {
    ordered_json j;
    j["current_slot"] = s.current_slot;
    j["policy_rate"] = s.policy_rate ? ordered_json(*s.policy_rate) : ordered_json(nullptr);
    j["prosumers"] = ordered_json::object();
    for (const auto& [id, p] : s.prosumers)
        j["prosumers"][id] = {{"max_generation_w", p.max_generation_w},
                              {"max_consumption_w", p.max_consumption_w},
                              {"reputation_ppm", p.reputation_ppm}};
    j["addresses"] = ordered_json::object();
    for (const auto& [id, addrs] : s.prosumer_addresses) {
        auto arr = ordered_json::array();
        for (const auto& a : addrs)
            arr.push_back(a.value);
        j["addresses"][id] = arr;
    }
    j["tokens"] = ordered_json::object();
    for (const auto& [id, tok] : s.tokens)
        j["tokens"][std::to_string(id)] = {{"kind", to_string(tok.kind)},
                                           {"power_w", tok.power_w},
                                           {"interval", interval_json(tok.interval)},
                                           {"holder", tok.holder.value}};
    j["fiat"] = ordered_json::object();
    for (const auto& [addr, cents] : s.fiat_cents)
        j["fiat"][addr.value] = cents;
    j["offers"] = ordered_json::object();
    for (const auto& [id, o] : s.offers)
        j["offers"][std::to_string(id)] = {{"side", to_string(o.side)},
                                           {"state", to_string(o.state)},
                                           {"power_w", o.spec.power_w},
                                           {"interval", interval_json(o.spec.interval)},
                                           {"price", o.unit_price_cents},
                                           {"poster", o.poster.value},
                                           {"posted_slot", o.posted_slot},
                                           {"backing_token", o.backing_token}};
    j["trades"] = ordered_json::object();
    for (const auto& [id, t] : s.trades) {
        ordered_json tj{{"offer", t.offer_id},
                        {"seller", t.seller.value},
                        {"buyer", t.buyer.value},
                        {"token", t.token},
                        {"escrow_cents", t.escrow_cents},
                        {"posted_slot", t.posted_slot},
                        {"cleared_slot", t.cleared_slot},
                        {"settled", t.settled},
                        {"seller_paid_cents", t.seller_paid_cents},
                        {"buyer_refund_cents", t.buyer_refund_cents}};
        if (t.transfer)
            tj["fulfillment_ppm"] = t.transfer->fulfillment_ppm;
        if (t.ring) {
            tj["ring"] = t.ring->ring_token_ids;
            tj["key_image"] = t.ring->key_image_hex;
        }
        j["trades"][std::to_string(id)] = tj;
    }
    j["key_images"] = ordered_json::array();
    for (const auto& k : s.key_images)
        j["key_images"].push_back(k);
    j["fiat_issued_total"] = s.fiat_issued_total;
    return j.dump();
}

}  // namespace gridveil::ledger
