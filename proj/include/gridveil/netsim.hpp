#pragma once

#include <map>
#include <vector>

#include "gridveil/ledger.hpp"
#include "gridveil/onion.hpp"

namespace gridveil::netsim {

enum class NetsimError {
    ok = 0,
    invalid_scenario,
    not_a_distribution,
};

// ----------------------------------------------------------------- scenario

struct LinkModel {
    std::uint32_t base_ms = 10;
    std::uint32_t jitter_ms = 5;
    double drop_prob = 0.0;
};

struct ProsumerSpec {
    std::string name;
    std::uint64_t max_generation_w = 500;
    std::uint64_t max_consumption_w = 500;
    std::uint64_t initial_fiat_cents = 100000;
};

struct DemandItem {
    std::string seller;
    std::string buyer;
    std::uint64_t power_w = 0;
    ledger::TimeInterval interval;
    std::uint64_t unit_price_cents = 0;
    std::uint32_t post_slot = 0;
    std::uint32_t accept_delay_slots = 0;    // engineered clearing delay
    std::uint32_t delivery_ppm = 1'000'000;  // delivered fraction of the promise
};

// The seed fully determines a run; the roster is fixed for the run.
struct Scenario {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    std::uint32_t slot_count = 20;
    std::uint32_t slot_ms = 1000;
    std::uint64_t price_policy_rate = 1;
    std::vector<ProsumerSpec> prosumers;
    std::uint32_t extra_routers = 4;
    LinkModel link;
    std::vector<DemandItem> demand;
    double cover_rate_per_slot = 0.0;
    std::uint32_t min_ring_size = 3;
    std::uint32_t ring_size = 3;
    double zero_mixin_fraction = 0.0;
    double adversary_output_fraction = 0.0;
    std::uint32_t hop_count = 3;
    std::uint32_t batching_delay_ms = 0;
    bool pad_cells = true;
    std::uint32_t clearing_deadline_slots = 2;
    std::string group = "ristretto255";
    std::uint32_t genesis_token_pool = 12;
    // "all", "none", or explicit links as "src-dst" router id pairs
    std::vector<std::string> adversary_vantage{"all"};
};

// empty when the scenario is runnable; each entry cites the field
std::vector<std::string> validate_scenario(const Scenario& s);

// -------------------------------------------------------------------- trace

enum class TraceKind { send, relay, deliver, ledger_append, meter_reading };

const char* to_string(TraceKind k);

struct TraceEvent {
    std::uint64_t t_ms = 0;
    std::uint64_t seq = 0;
    TraceKind kind = TraceKind::send;
    onion::RouterId src_router = 0;
    onion::RouterId dst_router = 0;
    std::uint64_t msg_id = 0;       // network events
    std::size_t size_bytes = 0;
    std::string detail;             // ledger event kind etc.
    std::uint32_t slot = 0;
    std::uint64_t offer_id = 0;
    std::uint64_t trade_id = 0;
    bool operator==(const TraceEvent&) const = default;
};

// ISP-vantage observation: time, size, link. Never payloads, never
// destination ids.
struct Observation {
    std::uint64_t t_ms = 0;
    std::uint64_t seq = 0;
    std::size_t size_bytes = 0;
    onion::RouterId src_router = 0;
    onion::RouterId dst_router = 0;
    bool operator==(const Observation&) const = default;
};

struct AdversaryView {
    std::vector<Observation> observations;
};

// ------------------------------------------------------------- ground truth

struct MessageTruth {
    std::uint64_t msg_id = 0;
    onion::RouterId sender_router = 0;
    onion::RouterId receiver_router = 0;
    std::string kind;
    bool delivered = false;
    std::uint64_t deliver_t_ms = 0;
    std::uint64_t final_obs_seq = 0;  // seq of the last-link observation
};

struct SpendTruth {
    ledger::TradeId trade = 0;
    ledger::TokenId spent_token = 0;
};

struct OutputInfo {
    ledger::TokenId token = 0;
    bool adversary_owned = false;
    std::string one_time_key_hex;
    std::string ephemeral_hex;
};

struct DemandOutcome {
    std::size_t index = 0;
    bool is_cover = false;
    std::uint32_t post_slot = 0;
    ledger::OfferId offer = 0;  // 0: never reached the ledger
    ledger::TradeId trade = 0;
};

struct GroundTruth {
    std::vector<MessageTruth> messages;
    std::vector<SpendTruth> spends;
    std::map<ledger::TokenId, OutputInfo> outputs;
    std::vector<DemandOutcome> demand_outcomes;
};

// ------------------------------------------------------------------ metrics

struct TradeLatency {
    ledger::OfferId offer = 0;
    std::optional<ledger::TradeId> trade;
    std::uint32_t posted_slot = 0;
    std::optional<std::uint32_t> cleared_slot;
    std::uint32_t latency_slots = 0;
    bool violation = false;
    bool operator==(const TradeLatency&) const = default;
};

struct MetricsReport {
    std::vector<TradeLatency> trade_latencies;
    std::size_t deadline_violations = 0;
    std::vector<double> per_message_entropy_bits;
    double mean_entropy_bits = 0.0;
    std::map<onion::RouterId, std::uint64_t> bytes_sent_by_router;
    std::size_t messages_delivered = 0;
    std::size_t messages_dropped = 0;
    std::size_t cells_transmitted = 0;
    bool operator==(const MetricsReport&) const = default;
};

struct RunResult {
    Scenario scenario;
    std::string config_hash;
    std::vector<TraceEvent> trace;
    ledger::Ledger ledger;
    AdversaryView view;
    MetricsReport metrics;
    GroundTruth truth;
    // every intermediate hop's observable inputs, for endpoint-secrecy checks
    std::vector<Bytes> hop_observed_cells;
    std::vector<std::string> endpoint_ids;
};

Outcome<RunResult, NetsimError> run(const Scenario& scenario);

// Shannon entropy of a sender posterior, in bits.
Outcome<double, NetsimError> anonymity_entropy(const std::vector<double>& posterior);

// Per-offer clearing latency recomputed from the trace alone; must agree
// with ledger::check_clearing_deadlines on the same run.
std::vector<TradeLatency> clearing_latency(const std::vector<TraceEvent>& trace,
                                           std::uint32_t final_slot,
                                           std::uint32_t deadline_slots);

// metrics are a pure function of trace + view + ledger
MetricsReport compute_metrics(const Scenario& scenario, const std::vector<TraceEvent>& trace,
                              const AdversaryView& view, const ledger::Ledger& ledger,
                              const GroundTruth& truth);

// ---------------------------------------------------------- serialization

std::string trace_to_jsonl(const RunResult& r);
std::string view_to_jsonl(const RunResult& r);
std::string truth_to_jsonl(const RunResult& r);
std::string metrics_to_csv(const RunResult& r);
std::string summary_text(const RunResult& r);

AdversaryView view_from_jsonl(const std::string& text);
GroundTruth truth_from_jsonl(const std::string& text);

}  // namespace gridveil::netsim
