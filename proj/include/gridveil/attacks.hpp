#pragma once

#include <set>

#include "gridveil/netsim.hpp"

namespace gridveil::attacks {

// Attack operations consume only the adversary view and public ledger data.
// Ground truth enters through the scoring functions and nowhere else.

// ---------------------------------------------------- timing correlation

struct TimingAttackConfig {
    std::uint64_t window_ms = 30;     // correlation window; > 0
    std::size_t size_tolerance = 0;   // bytes
};

struct TimingGuess {
    std::uint64_t final_obs_seq = 0;  // the delivery observation this names
    onion::RouterId guessed_sender = 0;
    onion::RouterId receiver = 0;
    std::size_t chain_length = 0;
};

struct TimingAttackResult {
    TimingAttackConfig config;
    std::vector<TimingGuess> guesses;
};

// Greedy size-and-window chain matching: find terminal observations (no
// plausible follow-on within the window), then walk each chain backwards
// choosing the closest-in-time predecessor of matching size.
TimingAttackResult timing_correlation_attack(const netsim::AdversaryView& view,
                                             const TimingAttackConfig& config);

struct TimingScore {
    std::size_t total_delivered = 0;
    std::size_t guessed = 0;
    std::size_t correct = 0;
    std::optional<double> success_rate;  // empty when nothing to score
};

TimingScore score_timing_attack(const TimingAttackResult& result,
                                const netsim::GroundTruth& truth);

// ------------------------------------------------- zero-mixin chain reaction

struct RingTransaction {
    ledger::TradeId tx = 0;
    std::vector<ledger::TokenId> ring;
};

struct TraceabilityResult {
    std::size_t total_inputs = 0;
    std::size_t deduced = 0;
    double fraction_traceable = 0.0;
    std::map<std::size_t, std::size_t> depth_histogram;  // deduction round -> count
    std::map<ledger::TradeId, ledger::TokenId> deduced_spends;
};

// Iterates the deduction rule to fixpoint: a ring whose members are all
// known-spent-elsewhere or adversary-owned except one exposes its spender.
TraceabilityResult chain_reaction_traceability(
    const std::vector<RingTransaction>& transactions,
    const std::set<ledger::TokenId>& adversary_outputs);

// ring references are public ledger data
std::vector<RingTransaction> ring_transactions_from_ledger(const ledger::Ledger& l);
std::set<ledger::TokenId> adversary_outputs_from_truth(const netsim::GroundTruth& truth);

struct TraceabilityScore {
    std::size_t checked = 0;
    std::size_t mismatches = 0;  // any nonzero value is a soundness failure
    bool sound = true;
};

TraceabilityScore score_traceability(const TraceabilityResult& result,
                                     const netsim::GroundTruth& truth);

// ------------------------------------------------------------ zk cost model

struct ZkpCostModel {
    double prove_ms = 180000.0;  // 3 min per private transaction
    double verify_ms = 8.5;
    bool valid() const { return prove_ms >= 0 && verify_ms >= 0; }
};

struct RingCostModel {
    double sign_ms = 0.0;
    double verify_ms = 0.0;
};

struct PipelineRow {
    std::string scheme;  // ring | zkp_prove_inline | zkp_verify_only
    double workload_tx_per_slot = 0;
    double per_tx_latency_ms = 0;
    double utilization = 0;  // per-slot processing time / slot length
    bool deadline_violated = false;
};

// Per-transaction end-to-end processing latency and slot utilization per
// scheme; a scheme violates the clearing deadline when its latency exceeds
// deadline_slots * slot_ms or its utilization exceeds 1.
std::vector<PipelineRow> zkp_throughput_comparison(const std::vector<double>& workloads,
                                                   const ZkpCostModel& zkp,
                                                   const RingCostModel& ring,
                                                   std::uint32_t slot_ms,
                                                   std::uint32_t deadline_slots);

}  // namespace gridveil::attacks
