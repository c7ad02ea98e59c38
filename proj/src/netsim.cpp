#include "gridveil/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gridveil/hash.hpp"
#include "gridveil/ringsig.hpp"
#include "gridveil/scenario.hpp"

namespace gridveil::netsim {

using ordered_json = nlohmann::ordered_json;
using onion::RouterId;

const char* to_string(TraceKind k) {
    switch (k) {
        case TraceKind::send: return "send";
        case TraceKind::relay: return "relay";
        case TraceKind::deliver: return "deliver";
        case TraceKind::ledger_append: return "ledger_append";
        case TraceKind::meter_reading: return "meter_reading";
    }
    return "?";
}

std::vector<std::string> validate_scenario(const Scenario& s) {
    std::vector<std::string> d;
    if (s.prosumers.size() < 2)
        d.push_back("prosumers: at least two participants are required");
    std::set<std::string> names;
    for (const auto& p : s.prosumers) {
        if (p.name.empty() || p.name == "dso")
            d.push_back("prosumers: names must be non-empty and distinct from 'dso'");
        if (!names.insert(p.name).second)
            d.push_back("prosumers: duplicate name '" + p.name + "'");
    }
    if (s.slot_count == 0)
        d.push_back("slot_count: must be positive");
    if (s.slot_ms == 0)
        d.push_back("slot_ms: must be positive");
    if (s.cover_rate_per_slot < 0)
        d.push_back("cover_rate_per_slot: must be >= 0");
    if (s.hop_count == 0 || s.hop_count > onion::kMaxHops)
        d.push_back("hop_count: must be in [1, " + std::to_string(onion::kMaxHops) + "]");
    // hop_count intermediates need enough distinct routers besides sender
    // and entry point, otherwise every path build hits InsufficientRouters
    std::size_t roster = s.prosumers.size() + 1 + s.extra_routers;
    if (roster < s.hop_count + 1)
        d.push_back("hop_count: roster of " + std::to_string(roster) +
                    " routers cannot satisfy hop_count " + std::to_string(s.hop_count) +
                    " (InsufficientRouters precondition)");
    if (s.min_ring_size == 0)
        d.push_back("min_ring_size: must be >= 1");
    if (s.ring_size < s.min_ring_size)
        d.push_back("ring_size: below min_ring_size");
    if (s.zero_mixin_fraction < 0 || s.zero_mixin_fraction > 1)
        d.push_back("zero_mixin_fraction: must be in [0, 1]");
    if (s.adversary_output_fraction < 0 || s.adversary_output_fraction > 1)
        d.push_back("adversary_output_fraction: must be in [0, 1]");
    if (s.link.drop_prob < 0 || s.link.drop_prob > 1)
        d.push_back("link.drop_prob: must be in [0, 1]");
    if (s.link.base_ms == 0)
        d.push_back("link.base_ms: must be positive");
    if (s.group != "toy467" && s.group != "ristretto255")
        d.push_back("group: unknown backend '" + s.group + "'");
    for (const auto& v : s.adversary_vantage) {
        if (v == "all" || v == "none")
            continue;
        auto dash = v.find('-');
        if (dash == std::string::npos)
            d.push_back("adversary_vantage: entries are 'all', 'none' or 'src-dst'");
    }
    for (std::size_t i = 0; i < s.demand.size(); ++i) {
        const auto& item = s.demand[i];
        auto where = "demand[" + std::to_string(i) + "]";
        if (!names.count(item.seller))
            d.push_back(where + ".seller: unknown prosumer '" + item.seller + "'");
        if (!names.count(item.buyer))
            d.push_back(where + ".buyer: unknown prosumer '" + item.buyer + "'");
        if (item.seller == item.buyer)
            d.push_back(where + ": seller and buyer must differ");
        if (!item.interval.valid())
            d.push_back(where + ".interval: start must not exceed end");
        if (item.interval.start <= item.post_slot)
            d.push_back(where + ".interval: must start after post_slot");
        if (item.interval.end + 2 > s.slot_count)
            d.push_back(where + ".interval: delivery and settlement must fit the run");
        if (item.delivery_ppm > ledger::kPpm)
            d.push_back(where + ".delivery_ppm: must be <= 1000000");
        if (item.post_slot >= s.slot_count)
            d.push_back(where + ".post_slot: beyond the run");
    }
    return d;
}

Outcome<double, NetsimError> anonymity_entropy(const std::vector<double>& posterior) {
    using R = Outcome<double, NetsimError>;
    if (posterior.empty())
        return R::failure(NetsimError::not_a_distribution, "empty posterior");
    double sum = 0;
    for (double p : posterior) {
        if (p < 0 || !std::isfinite(p))
            return R::failure(NetsimError::not_a_distribution, "negative or non-finite mass");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        return R::failure(NetsimError::not_a_distribution,
                          "mass sums to " + std::to_string(sum));
    double bits = 0;
    for (double p : posterior)
        if (p > 0)
            bits -= p * std::log2(p);
    return R::success(bits);
}

// --------------------------------------------------------------- simulation

namespace {

constexpr std::uint64_t kAppReactionMs = 20;

using Key32 = onion::Key32;

struct Node {
    std::string name;
    RouterId router = 0;
    std::string dest_id;
    onion::RouterKeys router_keys;
    onion::DestinationKeys dest_keys;
    ringsig::StealthReceiver stealth;
    ledger::AnonAddress fiat_addr;
    RouterId entry_router = 0;
    std::uint64_t inbound_tunnel_id = 0;
};

// one demand-like work item; cover trades reuse the same pipeline
struct WorkItem {
    DemandItem demand;
    bool is_cover = false;
    ledger::OfferId offer = 0;
    ledger::TradeId trade = 0;
    ledger::TokenId token = 0;
};

struct Flight {
    onion::OnionPacket cell;
    std::vector<std::uint64_t> msg_ids;
    std::size_t obs_size = 0;
    std::string to_dest;
};

struct Batch {
    std::vector<onion::Clove> cloves;
    std::vector<std::uint64_t> msg_ids;
    bool scheduled = false;
};

class Sim {
public:
    explicit Sim(const Scenario& sc)
        : sc_(sc),
          master_(sc.seed),
          rng_setup_(master_.fork("setup")),
          rng_net_(master_.fork("net")),
          rng_app_(master_.fork("app")),
          rng_crypto_(master_.fork("crypto")),
          rng_adv_(master_.fork("adversary")),
          group_(ringsig::group_by_name(sc.group)),
          ledger_(ledger::LedgerConfig{sc.clearing_deadline_slots}) {}

    Outcome<RunResult, NetsimError> execute() {
        using R = Outcome<RunResult, NetsimError>;
        auto diags = validate_scenario(sc_);
        if (!diags.empty()) {
            std::string joined;
            for (const auto& d : diags)
                joined += d + "; ";
            return R::failure(NetsimError::invalid_scenario, joined);
        }

        setup_roster();
        genesis();
        schedule_slots();
        schedule_work();
        run_loop();
        finish_truth();

        RunResult result;
        result.scenario = sc_;
        result.config_hash = scenario_config_hash(sc_);
        result.trace = std::move(trace_);
        result.ledger = std::move(ledger_);
        result.view = std::move(view_);
        result.truth = std::move(truth_);
        result.hop_observed_cells = std::move(hop_cells_);
        for (const auto& [name, node] : nodes_)
            result.endpoint_ids.push_back(node.dest_id);
        result.metrics =
            compute_metrics(sc_, result.trace, result.view, result.ledger, result.truth);
        return R::success(std::move(result));
    }

private:
    using Action = std::function<void()>;
    struct QueueEntry {
        std::uint64_t t;
        std::uint64_t seq;
        Action action;
        bool operator>(const QueueEntry& o) const {
            return t != o.t ? t > o.t : seq > o.seq;
        }
    };

    void schedule(std::uint64_t t, Action action) {
        queue_.push(QueueEntry{t, next_seq_++, std::move(action)});
    }

    void run_loop() {
        while (!queue_.empty()) {
            QueueEntry entry = queue_.top();
            queue_.pop();
            if (entry.t > horizon_ms())
                continue;  // events beyond the run are discarded
            now_ = entry.t;
            entry.action();
        }
    }

    std::uint64_t horizon_ms() const {
        return static_cast<std::uint64_t>(sc_.slot_count) * sc_.slot_ms;
    }

    std::uint32_t slot_of(std::uint64_t t) const {
        return static_cast<std::uint32_t>(t / sc_.slot_ms);
    }

    // ------------------------------------------------------------- setup

    void setup_roster() {
        RouterId next_router = 1;
        auto add_node = [&](const std::string& name) {
            Node n;
            n.name = name;
            n.router = next_router++;
            n.dest_id = "dest:" + name;
            n.router_keys = onion::make_router_keys(rng_setup_);
            n.dest_keys = onion::make_destination_keys(rng_setup_);
            n.stealth = ringsig::make_receiver(*group_, rng_setup_);
            n.fiat_addr = ledger::AnonAddress{
                to_hex(tagged_sha256("gv.sim.fiat", rng_setup_.bytes(16)).data(), 16)};
            nodes_[name] = n;
        };
        for (const auto& p : sc_.prosumers)
            add_node(p.name);
        add_node("dso");
        for (std::uint32_t i = 0; i < sc_.extra_routers; ++i) {
            RouterId id = next_router++;
            relay_keys_[id] = onion::make_router_keys(rng_setup_);
        }

        // publish RouterInfos
        for (const auto& [name, node] : nodes_) {
            auto info = onion::make_router_info(node.router, node.router_keys,
                                                {"loc-" + std::to_string(node.router)}, 0);
            directory_.publish(info);
            by_router_[node.router] = name;
        }
        for (const auto& [id, keys] : relay_keys_) {
            auto info = onion::make_router_info(id, keys, {"loc-" + std::to_string(id)}, 0);
            directory_.publish(info);
        }

        // inbound tunnels and lease sets: a random entry router forwards
        // one final hop to the owner
        std::vector<RouterId> all_routers = directory_.router_ids();
        for (auto& [name, node] : nodes_) {
            std::vector<RouterId> candidates;
            for (RouterId id : all_routers)
                if (id != node.router)
                    candidates.push_back(id);
            node.entry_router = candidates[rng_setup_.uniform(candidates.size())];
            node.inbound_tunnel_id = rng_setup_.next_u64();

            onion::Tunnel inbound;
            inbound.id = node.inbound_tunnel_id;
            inbound.hops = {node.router};
            Key32 key = tagged_sha256("gv.sim.inbound", rng_setup_.bytes(32));
            inbound.layer_keys = {key};
            install_key(node.router, key);
            inbound_tunnels_[{node.entry_router, node.inbound_tunnel_id}] = inbound;

            auto ls = onion::make_leaseset(
                node.dest_id, {onion::LeaseEntry{node.entry_router, node.inbound_tunnel_id}},
                horizon_ms() + 1, node.dest_keys, 0);
            directory_.publish(ls, 0);
        }
    }

    void genesis() {
        ledger_.set_policy(sc_.price_policy_rate);
        trace_ledger("policy_set", 0, 0, dso().router);
        for (const auto& p : sc_.prosumers) {
            ledger_.register_prosumer(p.name, p.max_generation_w, p.max_consumption_w);
            trace_ledger("prosumer_registered", 0, 0, dso().router);
            ledger_.issue_fiat(p.name, nodes_.at(p.name).fiat_addr, p.initial_fiat_cents);
            trace_ledger("fiat_issued", 0, 0, dso().router);
        }
        // Decoy pool: zero-power tokens at fresh one-time addresses. These
        // are the "unspent transactions owned by an adversary": only tokens
        // that never become real spends may carry the adversary flag, or the
        // chain-reaction deduction rule would produce false positives.
        for (std::uint32_t i = 0; i < sc_.genesis_token_pool; ++i) {
            const auto& owner = sc_.prosumers[rng_setup_.uniform(sc_.prosumers.size())];
            issue_token(owner.name, ledger::AssetKind::production, 0, ledger::TimeInterval{0, 0},
                        true);
        }
    }

    // DSO-side token issuance to a fresh stealth address
    ledger::TokenId issue_token(const std::string& prosumer, ledger::AssetKind kind,
                                std::uint64_t power_w, ledger::TimeInterval interval,
                                bool adversary_eligible = false) {
        const Node& owner = nodes_.at(prosumer);
        auto eph = group_->random_scalar(rng_crypto_);
        auto out = ringsig::derive_stealth(*group_, owner.stealth.view_pub,
                                           owner.stealth.spend_pub, eph);
        if (!out.ok())
            throw std::logic_error("stealth derivation failed in issuance");
        ledger::AnonAddress addr{to_hex(out->one_time_pub.bytes)};
        auto token = ledger_.withdraw_energy_asset(prosumer, kind, power_w, interval, addr);
        if (!token.ok())
            return 0;  // capacity rejection: surfaces as an unfilled work item
        OutputInfo info;
        info.token = token->id;
        info.adversary_owned =
            adversary_eligible && rng_adv_.uniform01() < sc_.adversary_output_fraction;
        info.one_time_key_hex = to_hex(out->one_time_pub.bytes);
        info.ephemeral_hex = to_hex(out->ephemeral_pub.bytes);
        truth_.outputs[token->id] = info;
        stealth_outputs_[token->id] = *out;
        trace_ledger("energy_withdrawn", 0, 0, dso().router);
        return token->id;
    }

    Node& dso() { return nodes_.at("dso"); }

    void install_key(RouterId router, const Key32& key) {
        installed_keys_[router].push_back(key);
    }

    // ---------------------------------------------------------- schedule

    void schedule_slots() {
        for (std::uint32_t s = 1; s <= sc_.slot_count; ++s) {
            std::uint64_t t = static_cast<std::uint64_t>(s) * sc_.slot_ms;
            if (t > horizon_ms())
                break;
            schedule(t, [this, s] {
                ledger_.advance_slot(s);
                trace_ledger("slot_advanced", 0, 0, dso().router);
            });
        }
        // final advance right at the horizon so deadline scans see the end
        schedule(horizon_ms(), [this] {
            ledger_.advance_slot(sc_.slot_count);
        });
    }

    void schedule_work() {
        for (const auto& d : sc_.demand) {
            WorkItem item;
            item.demand = d;
            work_.push_back(item);
        }
        // cover trades: full trading choreography with zero-value assets
        Rng cover_rng = rng_app_.fork("cover");
        auto slots = onion::cover_trade_slots(sc_.cover_rate_per_slot, sc_.slot_count, cover_rng);
        for (auto s : slots) {
            if (s + 3 > sc_.slot_count)
                continue;  // settlement would fall outside the run
            WorkItem item;
            item.is_cover = true;
            item.demand.power_w = 0;
            item.demand.unit_price_cents = 0;
            item.demand.post_slot = s;
            item.demand.interval = ledger::TimeInterval{s + 1, s + 1};
            item.demand.delivery_ppm = ledger::kPpm;
            std::size_t a = cover_rng.uniform(sc_.prosumers.size());
            std::size_t b = cover_rng.uniform(sc_.prosumers.size() - 1);
            if (b >= a)
                ++b;
            item.demand.seller = sc_.prosumers[a].name;
            item.demand.buyer = sc_.prosumers[b].name;
            work_.push_back(item);
        }

        for (std::size_t i = 0; i < work_.size(); ++i) {
            const auto& item = work_[i];
            std::uint64_t t = static_cast<std::uint64_t>(item.demand.post_slot) * sc_.slot_ms +
                              rng_app_.uniform(sc_.slot_ms / 8 + 1);
            schedule(t, [this, i] { start_trade(i); });
        }
    }

    // ------------------------------------------------------ app behavior

    void start_trade(std::size_t idx) {
        WorkItem& item = work_[idx];
        const auto& d = item.demand;
        ordered_json req{{"t", "wreq"},
                         {"item", idx},
                         {"kind", "production"},
                         {"power", d.power_w},
                         {"start", d.interval.start},
                         {"end", d.interval.end}};
        send_message(d.seller, "dest:dso", req.dump(), item.is_cover ? "cover_wreq" : "wreq");
    }

    void handle_wreq(const ordered_json& msg) {
        std::size_t idx = msg.at("item").get<std::size_t>();
        WorkItem& item = work_[idx];
        const auto& d = item.demand;
        ledger::TokenId token =
            issue_token(d.seller, ledger::AssetKind::production, d.power_w, d.interval);
        if (token == 0)
            return;  // rejected by capacity validation
        item.token = token;
        // the seller's chain filter picks the token up and continues
        schedule(now_ + kAppReactionMs, [this, idx] { post_and_notify(idx); });
    }

    void post_and_notify(std::size_t idx) {
        WorkItem& item = work_[idx];
        const auto& d = item.demand;
        const Node& seller = nodes_.at(d.seller);
        ledger::AnonAddress poster{to_hex(stealth_outputs_.at(item.token).one_time_pub.bytes)};
        auto offer = ledger_.post_offer(
            poster, ledger::Side::ask,
            ledger::AssetSpec{ledger::AssetKind::production, d.power_w, d.interval},
            static_cast<std::int64_t>(d.unit_price_cents));
        if (!offer.ok())
            return;
        item.offer = offer->id;
        trace_ledger("offer_posted", offer->id, 0, seller.router);

        ordered_json notify{{"t", "notify"},
                            {"item", idx},
                            {"offer", offer->id},
                            {"reply", seller.dest_id}};
        send_message(d.seller, nodes_.at(d.buyer).dest_id, notify.dump(),
                     item.is_cover ? "cover_notify" : "notify");
    }

    void handle_notify(const ordered_json& msg) {
        std::size_t idx = msg.at("item").get<std::size_t>();
        WorkItem& item = work_[idx];
        const auto& d = item.demand;
        const Node& buyer = nodes_.at(d.buyer);
        std::uint64_t delay = static_cast<std::uint64_t>(d.accept_delay_slots) * sc_.slot_ms;
        std::string reply = msg.at("reply").get<std::string>();
        ordered_json accept{{"t", "accept"},
                            {"item", idx},
                            {"offer", msg.at("offer").get<std::uint64_t>()},
                            {"payer", buyer.fiat_addr.value}};
        schedule(now_ + delay + kAppReactionMs, [this, idx, reply, accept] {
            send_message(work_[idx].demand.buyer, reply, accept.dump(),
                         work_[idx].is_cover ? "cover_accept" : "accept");
        });
    }

    void handle_accept(const ordered_json& msg) {
        std::size_t idx = msg.at("item").get<std::size_t>();
        WorkItem& item = work_[idx];
        const auto& d = item.demand;
        if (item.token == 0 || item.offer == 0)
            return;

        // ring-signed spend of the seller's one-time output
        const Node& seller = nodes_.at(d.seller);
        const auto& output = stealth_outputs_.at(item.token);
        auto one_time = ringsig::recover_stealth_secret(*group_, seller.stealth, output);
        if (!one_time.ok())
            throw std::logic_error("owner failed to recover one-time secret");

        bool zero_mixin = rng_app_.uniform01() < sc_.zero_mixin_fraction;
        std::size_t ring_size = zero_mixin ? 1 : sc_.ring_size;
        std::vector<ledger::TokenId> candidates;
        for (const auto& [tid, info] : truth_.outputs)
            if (tid != item.token)
                candidates.push_back(tid);
        std::vector<ledger::TokenId> ring_tokens;
        while (ring_tokens.size() + 1 < ring_size && !candidates.empty()) {
            std::size_t j = rng_app_.uniform(candidates.size());
            ring_tokens.push_back(candidates[j]);
            candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(j));
        }
        std::size_t signer_index = rng_app_.uniform(ring_tokens.size() + 1);
        ring_tokens.insert(ring_tokens.begin() + static_cast<std::ptrdiff_t>(signer_index),
                           item.token);
        std::vector<ringsig::Element> ring;
        for (auto tid : ring_tokens)
            ring.push_back(stealth_outputs_.at(tid).one_time_pub);

        Bytes context;
        {
            std::string ctx = "spend:offer=" + std::to_string(item.offer) +
                              ";payer=" + msg.at("payer").get<std::string>();
            context.assign(ctx.begin(), ctx.end());
        }
        auto signature =
            ringsig::sig(*group_, context, ring, signer_index, *one_time, rng_crypto_, 1);
        if (!signature.ok() || !ringsig::ver(*group_, context, *signature))
            throw std::logic_error("ring signature generation failed");

        ledger::RingMetadata meta{ring_tokens, to_hex(signature->key_image.point.bytes)};
        ledger::AnonAddress payer{msg.at("payer").get<std::string>()};
        auto trade = ledger_.accept_offer(payer, item.offer, meta);
        if (!trade.ok())
            return;  // expired or unfunded: surfaces in the deadline scan
        item.trade = trade->id;
        truth_.spends.push_back(SpendTruth{trade->id, item.token});
        trace_ledger("offer_accepted", item.offer, trade->id, seller.router);

        // meter report once the delivery interval has elapsed
        std::uint64_t t_meter =
            static_cast<std::uint64_t>(d.interval.end + 1) * sc_.slot_ms +
            rng_app_.uniform(sc_.slot_ms / 8 + 1);
        std::size_t idx_copy = idx;
        schedule(std::max(t_meter, now_ + 1), [this, idx_copy] { send_meter(idx_copy); });
    }

    void send_meter(std::size_t idx) {
        WorkItem& item = work_[idx];
        if (item.trade == 0)
            return;
        const auto& d = item.demand;
        trace_network(TraceKind::meter_reading, nodes_.at(d.seller).router, 0, 0, 0);
        ordered_json meter{{"t", "meter"},
                           {"item", idx},
                           {"trade", item.trade},
                           {"ppm", d.delivery_ppm}};
        send_message(d.seller, "dest:dso", meter.dump(), item.is_cover ? "cover_meter" : "meter");
    }

    void handle_meter(const ordered_json& msg) {
        std::size_t idx = msg.at("item").get<std::size_t>();
        WorkItem& item = work_[idx];
        const auto& d = item.demand;
        std::uint64_t per_slot = d.power_w * d.delivery_ppm / ledger::kPpm;
        std::vector<std::uint64_t> measured(d.interval.slot_count(), per_slot);
        auto rec = ledger_.record_energy_transfer(item.trade, measured);
        if (!rec.ok())
            return;
        trace_ledger("transfer_recorded", item.offer, item.trade, dso().router);
        auto settled = ledger_.settle_financial(item.trade);
        if (settled.ok())
            trace_ledger("financial_settled", item.offer, item.trade, dso().router);
    }

    // --------------------------------------------------------- messaging

    void send_message(const std::string& from, const std::string& to_dest,
                      const std::string& payload, const std::string& kind) {
        std::uint64_t msg_id = ++next_msg_id_;
        MessageTruth mt;
        mt.msg_id = msg_id;
        mt.sender_router = nodes_.at(from).router;
        mt.kind = kind;
        auto ls = directory_.lookup_leaseset(to_dest, now_);
        if (ls) {
            for (const auto& [name, node] : nodes_)
                if (node.dest_id == to_dest)
                    mt.receiver_router = node.router;
        }
        truth_.messages.push_back(mt);
        if (!ls)
            return;

        Batch& batch = batches_[{from, to_dest}];
        batch.cloves.push_back(onion::Clove{to_dest, Bytes(payload.begin(), payload.end())});
        batch.msg_ids.push_back(msg_id);
        if (!batch.scheduled) {
            batch.scheduled = true;
            schedule(now_ + sc_.batching_delay_ms, [this, from, to_dest] {
                flush_batch(from, to_dest);
            });
        }
    }

    void flush_batch(const std::string& from, const std::string& to_dest) {
        auto it = batches_.find({from, to_dest});
        if (it == batches_.end() || it->second.cloves.empty())
            return;
        Batch batch = std::move(it->second);
        batches_.erase(it);

        auto ls = directory_.lookup_leaseset(to_dest, now_);
        if (!ls)
            return;
        const Node& sender = nodes_.at(from);

        // bundles are capacity-bounded; overflow spills into fresh bundles
        std::size_t i = 0;
        while (i < batch.cloves.size()) {
            onion::GarlicBundle bundle;
            std::vector<std::uint64_t> ids;
            std::size_t used = 2;
            while (i < batch.cloves.size()) {
                std::size_t need = 4 + batch.cloves[i].destination.size() +
                                   batch.cloves[i].payload.size();
                if (!bundle.cloves.empty() && used + need > onion::kBundlePlainSize)
                    break;
                used += need;
                bundle.cloves.push_back(batch.cloves[i]);
                ids.push_back(batch.msg_ids[i]);
                ++i;
            }
            dispatch_bundle(sender, *ls, bundle, ids, used);
        }
    }

    void dispatch_bundle(const Node& sender, const onion::LeaseSet& ls,
                         const onion::GarlicBundle& bundle, std::vector<std::uint64_t> ids,
                         std::size_t wire_bytes) {
        auto tunnel = outbound_tunnel(sender, ls);
        if (!tunnel)
            return;
        auto sealed = onion::seal_bundle(bundle, ls.e2e_pub, rng_net_);
        if (!sealed.ok())
            return;
        // deliver payload: inbound tunnel tag, then the sealed bundle
        Bytes payload;
        for (int b = 0; b < 8; ++b)
            payload.push_back(static_cast<std::uint8_t>(ls.entries[0].tunnel_id >> (8 * b)));
        payload.insert(payload.end(), sealed->begin(), sealed->end());
        auto cell = onion::wrap(payload, *tunnel, rng_net_);
        if (!cell.ok())
            return;

        Flight flight;
        flight.cell = *cell;
        flight.msg_ids = std::move(ids);
        flight.to_dest = ls.destination;
        // without padding the adversary sees a payload-dependent size,
        // constant along the path
        flight.obs_size = sc_.pad_cells ? onion::kCellSize : 100 + wire_bytes;

        RouterId first = tunnel->hops[0];
        transmit(sender.router, first, flight, TraceKind::send);
    }

    const onion::Tunnel* outbound_tunnel(const Node& sender, const onion::LeaseSet& ls) {
        auto key = std::make_pair(sender.name, ls.destination);
        auto it = tunnel_cache_.find(key);
        if (it != tunnel_cache_.end())
            return &it->second;
        auto built = onion::build_path(directory_, sender.router, ls, sc_.hop_count, rng_net_);
        if (!built.ok())
            return nullptr;
        // the tunnel build installs each hop's layer key
        for (std::size_t h = 0; h < built->hops.size(); ++h)
            install_key(built->hops[h], built->layer_keys[h]);
        return &tunnel_cache_.emplace(key, std::move(*built)).first->second;
    }

    void transmit(RouterId from, RouterId to, Flight flight, TraceKind kind) {
        if (rng_net_.uniform01() < sc_.link.drop_prob)
            return;  // lost on this link; no observation, nothing arrives
        std::uint64_t lat = sc_.link.base_ms + rng_net_.uniform(sc_.link.jitter_ms + 1);
        std::uint64_t seq = trace_network(kind, from, to, flight.obs_size,
                                          flight.msg_ids.empty() ? 0 : flight.msg_ids[0]);
        observe(from, to, flight.obs_size, seq);
        schedule(now_ + lat, [this, to, flight = std::move(flight), seq] {
            arrive(to, flight, seq);
        });
    }

    void arrive(RouterId router, const Flight& flight, std::uint64_t link_seq) {
        // try every key installed at this router
        auto keys_it = installed_keys_.find(router);
        if (keys_it == installed_keys_.end())
            return;
        for (const auto& key : keys_it->second) {
            auto peeled = onion::peel(flight.cell, key);
            if (peeled.code == onion::OnionError::not_addressed_to_me)
                continue;
            if (!peeled.ok())
                return;  // corrupt cell dies here
            if (auto* relay = std::get_if<onion::PeelRelay>(&*peeled)) {
                hop_cells_.push_back(flight.cell.cell);
                Flight next = flight;
                next.cell = relay->next_cell;
                transmit(router, relay->next_router, std::move(next), TraceKind::relay);
                return;
            }
            auto& deliver = std::get<onion::PeelDeliver>(*peeled);
            if (deliver.payload.size() < 8)
                return;
            std::uint64_t tag = 0;
            for (int b = 7; b >= 0; --b)
                tag = (tag << 8) | deliver.payload[b];
            Bytes sealed(deliver.payload.begin() + 8, deliver.payload.end());

            auto inbound = inbound_tunnels_.find({router, tag});
            if (inbound != inbound_tunnels_.end()) {
                // entry point: forward through the owner's inbound tunnel
                hop_cells_.push_back(flight.cell.cell);
                hop_cells_.push_back(deliver.payload);
                Bytes payload = deliver.payload;
                auto cell = onion::wrap(payload, inbound->second, rng_net_);
                if (!cell.ok())
                    return;
                Flight next = flight;
                next.cell = *cell;
                transmit(router, inbound->second.hops[0], std::move(next), TraceKind::relay);
                return;
            }
            // final hop: this router hosts the destination
            deliver_to_node(router, sealed, flight, link_seq);
            return;
        }
    }

    void deliver_to_node(RouterId router, const Bytes& sealed, const Flight& flight,
                         std::uint64_t link_seq) {
        auto name_it = by_router_.find(router);
        if (name_it == by_router_.end())
            return;
        Node& node = nodes_.at(name_it->second);
        if (node.dest_id != flight.to_dest)
            return;
        auto cloves = onion::open_bundle(sealed, node.dest_id, node.dest_keys.e2e_sec);
        if (!cloves.ok())
            return;
        trace_network(TraceKind::deliver, router, router, flight.obs_size,
                      flight.msg_ids.empty() ? 0 : flight.msg_ids[0]);
        for (auto id : flight.msg_ids) {
            for (auto& mt : truth_.messages)
                if (mt.msg_id == id) {
                    mt.delivered = true;
                    mt.deliver_t_ms = now_;
                    mt.final_obs_seq = link_seq;
                }
        }
        for (const auto& clove : *cloves)
            handle_clove(clove);
    }

    void handle_clove(const onion::Clove& clove) {
        auto msg = ordered_json::parse(std::string(clove.payload.begin(), clove.payload.end()));
        const std::string type = msg.at("t").get<std::string>();
        if (type == "wreq")
            handle_wreq(msg);
        else if (type == "notify")
            handle_notify(msg);
        else if (type == "accept")
            handle_accept(msg);
        else if (type == "meter")
            handle_meter(msg);
    }

    // ------------------------------------------------------------ tracing

    std::uint64_t trace_network(TraceKind kind, RouterId src, RouterId dst, std::size_t size,
                                std::uint64_t msg_id) {
        TraceEvent e;
        e.t_ms = now_;
        e.seq = next_trace_seq_++;
        e.kind = kind;
        e.src_router = src;
        e.dst_router = dst;
        e.msg_id = msg_id;
        e.size_bytes = size;
        e.slot = slot_of(now_);
        trace_.push_back(e);
        return e.seq;
    }

    void trace_ledger(const std::string& detail, ledger::OfferId offer, ledger::TradeId trade,
                      RouterId actor) {
        TraceEvent e;
        e.t_ms = now_;
        e.seq = next_trace_seq_++;
        e.kind = TraceKind::ledger_append;
        e.src_router = actor;
        e.detail = detail;
        e.slot = slot_of(now_);
        e.offer_id = offer;
        e.trade_id = trade;
        trace_.push_back(e);
    }

    void observe(RouterId src, RouterId dst, std::size_t size, std::uint64_t seq) {
        bool watched = false;
        for (const auto& v : sc_.adversary_vantage) {
            if (v == "all") {
                watched = true;
            } else if (v == "none") {
                continue;
            } else {
                auto dash = v.find('-');
                if (dash != std::string::npos &&
                    std::to_string(src) == v.substr(0, dash) &&
                    std::to_string(dst) == v.substr(dash + 1))
                    watched = true;
            }
        }
        if (!watched)
            return;
        view_.observations.push_back(Observation{now_, seq, size, src, dst});
    }

    void finish_truth() {
        std::sort(truth_.messages.begin(), truth_.messages.end(),
                  [](const MessageTruth& a, const MessageTruth& b) { return a.msg_id < b.msg_id; });
        for (std::size_t i = 0; i < work_.size(); ++i) {
            const auto& item = work_[i];
            truth_.demand_outcomes.push_back(DemandOutcome{
                i, item.is_cover, item.demand.post_slot, item.offer, item.trade});
        }
    }

    const Scenario& sc_;
    Rng master_, rng_setup_, rng_net_, rng_app_, rng_crypto_, rng_adv_;
    std::shared_ptr<const ringsig::Group> group_;
    ledger::Ledger ledger_;
    onion::DirectoryStore directory_;

    std::map<std::string, Node> nodes_;
    std::map<RouterId, std::string> by_router_;
    std::map<RouterId, onion::RouterKeys> relay_keys_;
    std::map<RouterId, std::vector<Key32>> installed_keys_;
    std::map<std::pair<RouterId, std::uint64_t>, onion::Tunnel> inbound_tunnels_;
    std::map<std::pair<std::string, std::string>, onion::Tunnel> tunnel_cache_;
    std::map<std::pair<std::string, std::string>, Batch> batches_;
    std::map<ledger::TokenId, ringsig::StealthOutput> stealth_outputs_;
    std::vector<WorkItem> work_;

    std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>> queue_;
    std::uint64_t next_seq_ = 0;
    std::uint64_t now_ = 0;
    std::uint64_t next_msg_id_ = 0;
    std::uint64_t next_trace_seq_ = 0;

    std::vector<TraceEvent> trace_;
    AdversaryView view_;
    GroundTruth truth_;
    std::vector<Bytes> hop_cells_;
};

}  // namespace

Outcome<RunResult, NetsimError> run(const Scenario& scenario) {
    Sim sim(scenario);
    return sim.execute();
}

// ------------------------------------------------------------------ metrics

std::vector<TradeLatency> clearing_latency(const std::vector<TraceEvent>& trace,
                                           std::uint32_t final_slot,
                                           std::uint32_t deadline_slots) {
    std::map<std::uint64_t, std::uint32_t> posted, cleared;
    std::map<std::uint64_t, std::uint64_t> trade_of;
    for (const auto& e : trace) {
        if (e.kind != TraceKind::ledger_append)
            continue;
        if (e.detail == "offer_posted")
            posted[e.offer_id] = e.slot;
        else if (e.detail == "offer_accepted") {
            cleared[e.offer_id] = e.slot;
            trade_of[e.offer_id] = e.trade_id;
        }
    }
    std::vector<TradeLatency> out;
    for (const auto& [offer, at] : posted) {
        TradeLatency tl;
        tl.offer = offer;
        tl.posted_slot = at;
        if (auto it = cleared.find(offer); it != cleared.end()) {
            tl.cleared_slot = it->second;
            tl.trade = trade_of[offer];
            tl.latency_slots = it->second - at;
        } else {
            tl.latency_slots = final_slot > at ? final_slot - at : 0;
        }
        tl.violation = tl.latency_slots > deadline_slots;
        out.push_back(tl);
    }
    return out;
}

MetricsReport compute_metrics(const Scenario& scenario, const std::vector<TraceEvent>& trace,
                              const AdversaryView& view, const ledger::Ledger& ledger,
                              const GroundTruth& truth) {
    (void)view;
    MetricsReport m;
    m.trade_latencies =
        clearing_latency(trace, scenario.slot_count, scenario.clearing_deadline_slots);
    // demand items that never produced an offer (e.g. a dropped withdrawal
    // request) still count as uncleared trades
    for (const auto& outcome : truth.demand_outcomes) {
        if (outcome.is_cover || outcome.offer != 0)
            continue;
        TradeLatency tl;
        tl.offer = 0;
        tl.posted_slot = outcome.post_slot;
        tl.latency_slots = scenario.slot_count > outcome.post_slot
                               ? scenario.slot_count - outcome.post_slot
                               : 0;
        tl.violation = tl.latency_slots > scenario.clearing_deadline_slots;
        m.trade_latencies.push_back(tl);
    }
    for (const auto& tl : m.trade_latencies)
        if (tl.violation)
            ++m.deadline_violations;

    // sender anonymity set per delivered message: peers with a send event
    // inside the feasible time window, uniform posterior
    const std::uint64_t window =
        static_cast<std::uint64_t>(scenario.hop_count + 1) *
        (scenario.link.base_ms + scenario.link.jitter_ms);
    std::vector<std::pair<std::uint64_t, onion::RouterId>> sends;
    for (const auto& e : trace)
        if (e.kind == TraceKind::send)
            sends.emplace_back(e.t_ms, e.src_router);
    for (const auto& e : trace) {
        if (e.kind != TraceKind::deliver)
            continue;
        std::set<onion::RouterId> candidates;
        for (const auto& [t, router] : sends)
            if (t + window >= e.t_ms && t <= e.t_ms)
                candidates.insert(router);
        if (candidates.empty())
            continue;
        double bits = std::log2(static_cast<double>(candidates.size()));
        m.per_message_entropy_bits.push_back(bits);
        ++m.messages_delivered;
    }
    if (!m.per_message_entropy_bits.empty()) {
        double sum = 0;
        for (double b : m.per_message_entropy_bits)
            sum += b;
        m.mean_entropy_bits = sum / static_cast<double>(m.per_message_entropy_bits.size());
    }

    std::size_t sent = 0;
    for (const auto& e : trace) {
        if (e.kind == TraceKind::send || e.kind == TraceKind::relay) {
            m.bytes_sent_by_router[e.src_router] += e.size_bytes;
            ++m.cells_transmitted;
        }
        if (e.kind == TraceKind::send)
            ++sent;
    }
    m.messages_dropped = sent > m.messages_delivered ? sent - m.messages_delivered : 0;
    (void)ledger;
    return m;
}

// ---------------------------------------------------------- serialization

namespace {

ordered_json trace_event_json(const TraceEvent& e) {
    return ordered_json{{"t", e.t_ms},         {"seq", e.seq},
                        {"kind", to_string(e.kind)}, {"src", e.src_router},
                        {"dst", e.dst_router}, {"msg", e.msg_id},
                        {"size", e.size_bytes}, {"detail", e.detail},
                        {"slot", e.slot},      {"offer", e.offer_id},
                        {"trade", e.trade_id}};
}

}  // namespace

std::string trace_to_jsonl(const RunResult& r) {
    std::ostringstream out;
    out << ordered_json{{"schema", "gridveil.trace"},
                        {"version", 1},
                        {"name", r.scenario.name},
                        {"seed", r.scenario.seed},
                        {"config_hash", r.config_hash}}
               .dump()
        << '\n';
    for (const auto& e : r.trace)
        out << trace_event_json(e).dump() << '\n';
    return out.str();
}

std::string view_to_jsonl(const RunResult& r) {
    std::ostringstream out;
    out << ordered_json{{"schema", "gridveil.adversary_view"},
                        {"version", 1},
                        {"seed", r.scenario.seed},
                        {"config_hash", r.config_hash}}
               .dump()
        << '\n';
    for (const auto& o : r.view.observations)
        out << ordered_json{{"t", o.t_ms},
                            {"seq", o.seq},
                            {"size", o.size_bytes},
                            {"src", o.src_router},
                            {"dst", o.dst_router}}
                   .dump()
            << '\n';
    return out.str();
}

std::string truth_to_jsonl(const RunResult& r) {
    std::ostringstream out;
    out << ordered_json{{"schema", "gridveil.ground_truth"},
                        {"version", 1},
                        {"seed", r.scenario.seed},
                        {"config_hash", r.config_hash}}
               .dump()
        << '\n';
    for (const auto& mt : r.truth.messages)
        out << ordered_json{{"row", "message"},          {"msg", mt.msg_id},
                            {"sender", mt.sender_router}, {"receiver", mt.receiver_router},
                            {"kind", mt.kind},            {"delivered", mt.delivered},
                            {"t", mt.deliver_t_ms},       {"obs", mt.final_obs_seq}}
                   .dump()
            << '\n';
    for (const auto& sp : r.truth.spends)
        out << ordered_json{{"row", "spend"}, {"trade", sp.trade}, {"token", sp.spent_token}}
                   .dump()
            << '\n';
    for (const auto& [tid, info] : r.truth.outputs)
        out << ordered_json{{"row", "output"},
                            {"token", tid},
                            {"adversary", info.adversary_owned},
                            {"key", info.one_time_key_hex},
                            {"eph", info.ephemeral_hex}}
                   .dump()
            << '\n';
    for (const auto& d : r.truth.demand_outcomes)
        out << ordered_json{{"row", "demand"},
                            {"index", d.index},
                            {"cover", d.is_cover},
                            {"post_slot", d.post_slot},
                            {"offer", d.offer},
                            {"trade", d.trade}}
                   .dump()
            << '\n';
    return out.str();
}

AdversaryView view_from_jsonl(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("adversary view: empty input");
    auto header = ordered_json::parse(line);
    if (header.at("schema") != "gridveil.adversary_view")
        throw std::runtime_error("adversary view: wrong schema");
    AdversaryView view;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        auto j = ordered_json::parse(line);
        view.observations.push_back(Observation{j.at("t").get<std::uint64_t>(),
                                                j.at("seq").get<std::uint64_t>(),
                                                j.at("size").get<std::size_t>(),
                                                j.at("src").get<RouterId>(),
                                                j.at("dst").get<RouterId>()});
    }
    return view;
}

GroundTruth truth_from_jsonl(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("ground truth: empty input");
    auto header = ordered_json::parse(line);
    if (header.at("schema") != "gridveil.ground_truth")
        throw std::runtime_error("ground truth: wrong schema");
    GroundTruth truth;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        auto j = ordered_json::parse(line);
        const std::string row = j.at("row").get<std::string>();
        if (row == "message") {
            MessageTruth mt;
            mt.msg_id = j.at("msg").get<std::uint64_t>();
            mt.sender_router = j.at("sender").get<RouterId>();
            mt.receiver_router = j.at("receiver").get<RouterId>();
            mt.kind = j.at("kind").get<std::string>();
            mt.delivered = j.at("delivered").get<bool>();
            mt.deliver_t_ms = j.at("t").get<std::uint64_t>();
            mt.final_obs_seq = j.at("obs").get<std::uint64_t>();
            truth.messages.push_back(mt);
        } else if (row == "spend") {
            truth.spends.push_back(SpendTruth{j.at("trade").get<std::uint64_t>(),
                                              j.at("token").get<std::uint64_t>()});
        } else if (row == "output") {
            OutputInfo info;
            info.token = j.at("token").get<std::uint64_t>();
            info.adversary_owned = j.at("adversary").get<bool>();
            info.one_time_key_hex = j.at("key").get<std::string>();
            info.ephemeral_hex = j.at("eph").get<std::string>();
            truth.outputs[info.token] = info;
        } else if (row == "demand") {
            truth.demand_outcomes.push_back(DemandOutcome{
                j.at("index").get<std::size_t>(), j.at("cover").get<bool>(),
                j.at("post_slot").get<std::uint32_t>(), j.at("offer").get<std::uint64_t>(),
                j.at("trade").get<std::uint64_t>()});
        }
    }
    return truth;
}

std::string metrics_to_csv(const RunResult& r) {
    std::ostringstream out;
    out << "# gridveil.metrics v1\n";
    out << "# name " << r.scenario.name << "\n";
    out << "# seed " << r.scenario.seed << "\n";
    out << "# config " << r.config_hash << "\n";
    out << "metric,value\n";
    const auto& m = r.metrics;
    out << "deadline_violations," << m.deadline_violations << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", m.mean_entropy_bits);
    out << "mean_entropy_bits," << buf << "\n";
    out << "messages_delivered," << m.messages_delivered << "\n";
    out << "messages_dropped," << m.messages_dropped << "\n";
    out << "cells_transmitted," << m.cells_transmitted << "\n";
    for (const auto& tl : m.trade_latencies) {
        out << "offer_" << tl.offer << "_latency_slots," << tl.latency_slots << "\n";
        out << "offer_" << tl.offer << "_violation," << (tl.violation ? 1 : 0) << "\n";
    }
    for (const auto& [router, bytes] : m.bytes_sent_by_router)
        out << "router_" << router << "_bytes_sent," << bytes << "\n";
    return out.str();
}

std::string summary_text(const RunResult& r) {
    std::ostringstream out;
    const auto& m = r.metrics;
    out << "scenario: " << r.scenario.name << " (seed " << r.scenario.seed << ")\n";
    out << "config hash: " << r.config_hash << "\n";
    out << "slots: " << r.scenario.slot_count << " x " << r.scenario.slot_ms << " ms\n";
    out << "ledger events: " << r.ledger.events().size() << "\n";
    out << "messages delivered: " << m.messages_delivered
        << " (dropped " << m.messages_dropped << ")\n";
    out << "cells transmitted: " << m.cells_transmitted << "\n";
    out << "mean sender anonymity entropy: " << m.mean_entropy_bits << " bits\n";
    out << "deadline violations: " << m.deadline_violations << "\n";
    for (const auto& tl : m.trade_latencies) {
        out << "  offer " << tl.offer << ": posted slot " << tl.posted_slot;
        if (tl.cleared_slot)
            out << ", cleared slot " << *tl.cleared_slot;
        else
            out << ", uncleared";
        out << ", latency " << tl.latency_slots
            << (tl.violation ? " slots [VIOLATION]" : " slots") << "\n";
    }
    return out.str();
}

}  // namespace gridveil::netsim
