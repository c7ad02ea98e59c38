#include "gridveil/attacks.hpp"

#include <algorithm>

namespace gridveil::attacks {

using netsim::Observation;

namespace {

bool size_matches(std::size_t a, std::size_t b, std::size_t tol) {
    return a >= b ? a - b <= tol : b - a <= tol;
}

}  // namespace

TimingAttackResult timing_correlation_attack(const netsim::AdversaryView& view,
                                             const TimingAttackConfig& config) {
    if (config.window_ms == 0)
        throw std::invalid_argument("timing attack: window must be positive");
    TimingAttackResult result;
    result.config = config;

    std::vector<const Observation*> obs;
    obs.reserve(view.observations.size());
    for (const auto& o : view.observations)
        obs.push_back(&o);
    std::sort(obs.begin(), obs.end(), [](const Observation* a, const Observation* b) {
        return a->t_ms != b->t_ms ? a->t_ms < b->t_ms : a->seq < b->seq;
    });

    // terminal observations: nothing of matching size leaves the receiving
    // router within the window afterwards
    auto is_terminal = [&](const Observation* o) {
        for (const Observation* later : obs) {
            if (later->t_ms <= o->t_ms)
                continue;
            if (later->t_ms > o->t_ms + config.window_ms)
                break;
            if (later->src_router == o->dst_router &&
                size_matches(later->size_bytes, o->size_bytes, config.size_tolerance))
                return false;
        }
        return true;
    };

    std::set<std::uint64_t> used;
    for (const Observation* terminal : obs) {
        if (!is_terminal(terminal))
            continue;
        // walk the chain backwards, greedily taking the closest predecessor
        const Observation* cur = terminal;
        std::size_t length = 1;
        while (true) {
            const Observation* best = nullptr;
            for (const Observation* prev : obs) {
                if (prev->t_ms >= cur->t_ms)
                    break;
                if (prev->t_ms + config.window_ms < cur->t_ms)
                    continue;
                if (prev->dst_router != cur->src_router || used.count(prev->seq))
                    continue;
                if (!size_matches(prev->size_bytes, cur->size_bytes, config.size_tolerance))
                    continue;
                if (!best || prev->t_ms > best->t_ms ||
                    (prev->t_ms == best->t_ms && prev->seq > best->seq))
                    best = prev;
            }
            if (!best)
                break;
            used.insert(best->seq);
            cur = best;
            ++length;
        }
        result.guesses.push_back(
            TimingGuess{terminal->seq, cur->src_router, terminal->dst_router, length});
    }
    return result;
}

TimingScore score_timing_attack(const TimingAttackResult& result,
                                const netsim::GroundTruth& truth) {
    TimingScore score;
    std::map<std::uint64_t, const netsim::MessageTruth*> by_obs;
    for (const auto& mt : truth.messages) {
        if (!mt.delivered)
            continue;
        ++score.total_delivered;
        by_obs[mt.final_obs_seq] = &mt;
    }
    for (const auto& guess : result.guesses) {
        auto it = by_obs.find(guess.final_obs_seq);
        if (it == by_obs.end())
            continue;
        ++score.guessed;
        if (guess.guessed_sender == it->second->sender_router)
            ++score.correct;
    }
    if (score.total_delivered > 0 && !result.guesses.empty())
        score.success_rate =
            static_cast<double>(score.correct) / static_cast<double>(score.total_delivered);
    return score;
}

// ------------------------------------------------- zero-mixin chain reaction

TraceabilityResult chain_reaction_traceability(
    const std::vector<RingTransaction>& transactions,
    const std::set<ledger::TokenId>& adversary_outputs) {
    TraceabilityResult result;
    result.total_inputs = transactions.size();
    if (transactions.empty())
        return result;

    std::map<ledger::TokenId, ledger::TradeId> spent_by;  // deduced so far
    std::set<ledger::TradeId> resolved;

    // synchronous rounds: each pass deduces only from the previous pass's
    // knowledge, so the depth histogram reflects true chain length
    std::size_t round = 0;
    bool progress = true;
    while (progress) {
        progress = false;
        ++round;
        std::vector<std::pair<ledger::TradeId, ledger::TokenId>> found;
        for (const auto& tx : transactions) {
            if (resolved.count(tx.tx))
                continue;
            ledger::TokenId candidate = 0;
            std::size_t candidates = 0;
            for (auto member : tx.ring) {
                if (adversary_outputs.count(member))
                    continue;  // the adversary knows it owns this decoy
                auto it = spent_by.find(member);
                if (it != spent_by.end() && it->second != tx.tx)
                    continue;  // already known spent elsewhere
                ++candidates;
                candidate = member;
            }
            if (candidates == 1)
                found.emplace_back(tx.tx, candidate);
        }
        for (const auto& [tx, token] : found) {
            if (spent_by.count(token))
                continue;  // contradictory double deduction; leave unresolved
            spent_by[token] = tx;
            resolved.insert(tx);
            result.deduced_spends[tx] = token;
            ++result.depth_histogram[round];
            ++result.deduced;
            progress = true;
        }
    }
    result.fraction_traceable =
        static_cast<double>(result.deduced) / static_cast<double>(result.total_inputs);
    return result;
}

std::vector<RingTransaction> ring_transactions_from_ledger(const ledger::Ledger& l) {
    std::vector<RingTransaction> out;
    for (const auto& [id, trade] : l.state().trades)
        if (trade.ring)
            out.push_back(RingTransaction{id, trade.ring->ring_token_ids});
    return out;
}

std::set<ledger::TokenId> adversary_outputs_from_truth(const netsim::GroundTruth& truth) {
    std::set<ledger::TokenId> owned;
    for (const auto& [token, info] : truth.outputs)
        if (info.adversary_owned)
            owned.insert(token);
    return owned;
}

TraceabilityScore score_traceability(const TraceabilityResult& result,
                                     const netsim::GroundTruth& truth) {
    TraceabilityScore score;
    std::map<ledger::TradeId, ledger::TokenId> actual;
    for (const auto& spend : truth.spends)
        actual[spend.trade] = spend.spent_token;
    for (const auto& [tx, token] : result.deduced_spends) {
        ++score.checked;
        auto it = actual.find(tx);
        if (it == actual.end() || it->second != token)
            ++score.mismatches;
    }
    score.sound = score.mismatches == 0;
    return score;
}

// ------------------------------------------------------------ zk cost model

std::vector<PipelineRow> zkp_throughput_comparison(const std::vector<double>& workloads,
                                                   const ZkpCostModel& zkp,
                                                   const RingCostModel& ring,
                                                   std::uint32_t slot_ms,
                                                   std::uint32_t deadline_slots) {
    if (!zkp.valid() || ring.sign_ms < 0 || ring.verify_ms < 0)
        throw std::invalid_argument("cost model times must be nonnegative");
    const double deadline_ms = static_cast<double>(deadline_slots) * slot_ms;
    std::vector<PipelineRow> rows;
    auto add = [&](const char* scheme, double workload, double per_tx_ms) {
        PipelineRow row;
        row.scheme = scheme;
        row.workload_tx_per_slot = workload;
        row.per_tx_latency_ms = per_tx_ms;
        row.utilization = workload * per_tx_ms / static_cast<double>(slot_ms);
        row.deadline_violated = per_tx_ms > deadline_ms || row.utilization > 1.0;
        rows.push_back(row);
    };
    for (double w : workloads) {
        add("ring", w, ring.sign_ms + ring.verify_ms);
        add("zkp_prove_inline", w, zkp.prove_ms + zkp.verify_ms);
        add("zkp_verify_only", w, zkp.verify_ms);
    }
    return rows;
}

}  // namespace gridveil::attacks
