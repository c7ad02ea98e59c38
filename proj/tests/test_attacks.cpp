#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gridveil/attacks.hpp"

using namespace gridveil;
using namespace gridveil::attacks;
using gridveil::netsim::DemandItem;
using gridveil::netsim::ProsumerSpec;
using gridveil::netsim::Scenario;

namespace {

Scenario single_flow_scenario(std::uint64_t seed) {
    Scenario s;
    s.name = "single-flow";
    s.seed = seed;
    s.slot_count = 12;
    s.prosumers = {ProsumerSpec{"alice", 500, 500, 100000},
                   ProsumerSpec{"bob", 500, 500, 100000}};
    s.extra_routers = 5;
    s.demand = {DemandItem{"alice", "bob", 300, ledger::TimeInterval{5, 8}, 2, 3, 0,
                           ledger::kPpm}};
    s.group = "toy467";
    s.genesis_token_pool = 4;
    s.pad_cells = false;
    s.cover_rate_per_slot = 0.0;
    s.batching_delay_ms = 0;
    return s;
}

Scenario traffic_scenario(std::uint64_t seed, bool countermeasures) {
    Scenario s;
    s.name = countermeasures ? "cm-on" : "cm-off";
    s.seed = seed;
    s.slot_count = 16;
    for (int i = 0; i < 6; ++i)
        s.prosumers.push_back(ProsumerSpec{"p" + std::to_string(i), 1000, 1000, 500000});
    s.extra_routers = 5;
    for (std::size_t i = 0; i < 4; ++i) {
        DemandItem d;
        d.seller = s.prosumers[i].name;
        d.buyer = s.prosumers[(i + 2) % 6].name;
        d.power_w = 100 + 10 * i;
        std::uint32_t post = 2 + 3 * static_cast<std::uint32_t>(i);
        d.post_slot = post;
        d.interval = ledger::TimeInterval{post + 1, post + 2};
        d.unit_price_cents = 1;
        s.demand.push_back(d);
    }
    s.group = "ristretto255";
    s.pad_cells = countermeasures;
    s.batching_delay_ms = countermeasures ? 150 : 0;
    s.cover_rate_per_slot = countermeasures ? 2.0 : 0.0;
    return s;
}

TimingAttackConfig config_for(const Scenario& s) {
    TimingAttackConfig cfg;
    cfg.window_ms = 2 * (s.link.base_ms + s.link.jitter_ms);
    cfg.size_tolerance = 0;
    return cfg;
}

}  // namespace

TEST_CASE("timing attack: unique unpadded single flow is fully deanonymized") {
    auto result = netsim::run(single_flow_scenario(3));
    REQUIRE(result.ok());

    auto attack = timing_correlation_attack(result->view, config_for(result->scenario));
    auto score = score_timing_attack(attack, result->truth);
    REQUIRE(score.success_rate.has_value());
    CHECK(*score.success_rate == 1.0);
    CHECK(score.total_delivered == 4);  // withdraw, notify, accept, meter
    CHECK(score.correct == 4);
}

TEST_CASE("timing attack: empty view yields no guesses and no rate") {
    netsim::AdversaryView empty;
    auto attack = timing_correlation_attack(empty, TimingAttackConfig{30, 0});
    CHECK(attack.guesses.empty());

    auto result = netsim::run(single_flow_scenario(3));
    REQUIRE(result.ok());
    auto score = score_timing_attack(attack, result->truth);
    CHECK_FALSE(score.success_rate.has_value());
    CHECK(score.correct == 0);

    CHECK_THROWS(timing_correlation_attack(empty, TimingAttackConfig{0, 0}));
}

TEST_CASE("timing attack: countermeasures never help the attacker (seed sweep)") {
    double mean_off = 0, mean_on = 0;
    const int seeds = 6;
    for (int seed = 1; seed <= seeds; ++seed) {
        auto off = netsim::run(traffic_scenario(seed, false));
        auto on = netsim::run(traffic_scenario(seed, true));
        REQUIRE(off.ok());
        REQUIRE(on.ok());
        auto off_attack = timing_correlation_attack(off->view, config_for(off->scenario));
        auto on_attack = timing_correlation_attack(on->view, config_for(on->scenario));
        auto off_score = score_timing_attack(off_attack, off->truth);
        auto on_score = score_timing_attack(on_attack, on->truth);
        double off_rate = off_score.success_rate.value_or(0.0);
        double on_rate = on_score.success_rate.value_or(0.0);
        CAPTURE(seed);
        CHECK(on_rate <= off_rate);
        mean_off += off_rate;
        mean_on += on_rate;
    }
    CHECK(mean_on / seeds < mean_off / seeds);
}

TEST_CASE("chain reaction: all zero-mixin rings are fully traceable") {
    std::vector<RingTransaction> txs;
    for (std::uint64_t i = 1; i <= 10; ++i)
        txs.push_back(RingTransaction{i, {100 + i}});
    auto result = chain_reaction_traceability(txs, {});
    CHECK(result.fraction_traceable == 1.0);
    CHECK(result.deduced == 10);
    CHECK(result.depth_histogram.at(1) == 10);
}

TEST_CASE("chain reaction: healthy rings resist first-pass deduction") {
    // rings of 3 over a shared pool, no adversary outputs, no zero-mixins:
    // every ring keeps 3 candidates, so the fixpoint is immediate
    Rng rng(99);
    std::vector<RingTransaction> txs;
    for (std::uint64_t i = 0; i < 50; ++i) {
        std::vector<ledger::TokenId> ring{1 + i};
        while (ring.size() < 3) {
            ledger::TokenId decoy = 1 + rng.uniform(200);
            if (std::find(ring.begin(), ring.end(), decoy) == ring.end())
                ring.push_back(decoy);
        }
        txs.push_back(RingTransaction{i + 1, ring});
    }
    auto result = chain_reaction_traceability(txs, {});
    CHECK(result.fraction_traceable == 0.0);
    CHECK(result.deduced == 0);
    CHECK(result.depth_histogram.empty());
}

TEST_CASE("chain reaction: deductions cascade through shared decoys") {
    // tx1 is zero-mixin; its deduced spend strips tx2's only cover, and so on
    std::vector<RingTransaction> txs{
        RingTransaction{1, {10}},
        RingTransaction{2, {10, 20}},
        RingTransaction{3, {10, 20, 30}},
    };
    auto result = chain_reaction_traceability(txs, {});
    CHECK(result.fraction_traceable == 1.0);
    CHECK(result.deduced_spends.at(1) == 10);
    CHECK(result.deduced_spends.at(2) == 20);
    CHECK(result.deduced_spends.at(3) == 30);
    CHECK(result.depth_histogram.at(1) == 1);
    CHECK(result.depth_histogram.at(2) == 1);
    CHECK(result.depth_histogram.at(3) == 1);
}

TEST_CASE("chain reaction: adversary-owned decoys expose spends") {
    // 2 decoys per ring drawn from a pool the adversary mostly owns
    Rng rng(7);
    std::set<ledger::TokenId> adversary;
    for (ledger::TokenId t = 1000; t < 1080; ++t)
        adversary.insert(t);  // 80 owned decoy outputs
    std::vector<ledger::TokenId> pool(adversary.begin(), adversary.end());
    for (ledger::TokenId t = 2000; t < 2020; ++t)
        pool.push_back(t);  // 20 honest decoys

    std::vector<RingTransaction> txs;
    for (std::uint64_t i = 0; i < 50; ++i) {
        std::vector<ledger::TokenId> ring{1 + i};
        while (ring.size() < 3) {
            ledger::TokenId decoy = pool[rng.uniform(pool.size())];
            if (std::find(ring.begin(), ring.end(), decoy) == ring.end())
                ring.push_back(decoy);
        }
        txs.push_back(RingTransaction{i + 1, ring});
    }
    auto result = chain_reaction_traceability(txs, adversary);
    CHECK(result.fraction_traceable >= 0.6);
    CHECK(result.fraction_traceable < 1.0);
    // ground truth by construction: tx i spends token i
    for (const auto& [tx, token] : result.deduced_spends)
        CHECK(token == tx);
}

TEST_CASE("chain reaction over a simulated ledger, scored against truth") {
    Scenario s = traffic_scenario(5, false);
    s.name = "zero-mixin-run";
    s.zero_mixin_fraction = 1.0;
    s.min_ring_size = 1;
    s.ring_size = 1;
    auto run = netsim::run(s);
    REQUIRE(run.ok());

    auto txs = ring_transactions_from_ledger(run->ledger);
    REQUIRE_FALSE(txs.empty());
    auto result = chain_reaction_traceability(txs, adversary_outputs_from_truth(run->truth));
    CHECK(result.fraction_traceable == 1.0);

    auto score = score_traceability(result, run->truth);
    CHECK(score.sound);
    CHECK(score.checked == txs.size());
    CHECK(score.mismatches == 0);
}

TEST_CASE("larger rings never increase traceability (ring size sweep)") {
    auto base = traffic_scenario(9, false);
    base.adversary_output_fraction = 0.7;
    double last = 2.0;
    for (std::uint32_t ring : {1u, 3u, 5u}) {
        Scenario s = base;
        s.min_ring_size = 1;
        s.ring_size = ring;
        s.zero_mixin_fraction = ring == 1 ? 1.0 : 0.0;
        auto run = netsim::run(s);
        REQUIRE(run.ok());
        auto result = chain_reaction_traceability(
            ring_transactions_from_ledger(run->ledger),
            adversary_outputs_from_truth(run->truth));
        auto score = score_traceability(result, run->truth);
        CHECK(score.sound);
        CHECK(result.fraction_traceable <= last);
        last = result.fraction_traceable;
    }
}

TEST_CASE("zkp cost model: deadline arithmetic is exact") {
    ZkpCostModel zkp;  // 180 s prove, 8.5 ms verify
    RingCostModel ring;
    auto rows = zkp_throughput_comparison({1.0, 100.0}, zkp, ring, 1000, 2);
    REQUIRE(rows.size() == 6);

    for (const auto& row : rows) {
        CAPTURE(row.scheme);
        CAPTURE(row.workload_tx_per_slot);
        if (row.scheme == "zkp_prove_inline") {
            // proving alone dwarfs the two-slot deadline at any workload
            CHECK(row.per_tx_latency_ms == 180008.5);
            CHECK(row.deadline_violated);
        } else if (row.scheme == "zkp_verify_only") {
            CHECK(row.per_tx_latency_ms == 8.5);
            if (row.workload_tx_per_slot == 100.0) {
                // 8.5 ms x 100 = 850 ms < 1 s
                CHECK(row.utilization == doctest::Approx(0.85));
                CHECK_FALSE(row.deadline_violated);
            } else {
                CHECK_FALSE(row.deadline_violated);
            }
        } else {
            CHECK_FALSE(row.deadline_violated);
        }
    }

    // the workload at which verify-only saturates the slot
    auto saturated = zkp_throughput_comparison({118.0}, zkp, ring, 1000, 2);
    CHECK(saturated[2].scheme == "zkp_verify_only");
    CHECK(saturated[2].deadline_violated);  // 118 x 8.5 ms > 1 s
}

TEST_CASE("zkp cost model: zero prove time collapses the schemes") {
    ZkpCostModel zkp{0.0, 8.5};
    RingCostModel ring{0.0, 8.5};
    auto rows = zkp_throughput_comparison({10.0}, zkp, ring, 1000, 2);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].per_tx_latency_ms == rows[1].per_tx_latency_ms);
    CHECK(rows[1].per_tx_latency_ms == rows[2].per_tx_latency_ms);
    CHECK(rows[0].deadline_violated == rows[1].deadline_violated);

    CHECK_THROWS(zkp_throughput_comparison({1.0}, ZkpCostModel{-1, 0}, ring, 1000, 2));
}
