#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include <json.hpp>
#include <sodium.h>

#include "gridveil/hash.hpp"
#include "gridveil/ringsig.hpp"

using namespace gridveil;
using namespace gridveil::ringsig;

namespace {

Bytes msg(const std::string& s) { return Bytes(s.begin(), s.end()); }

std::vector<Element> make_ring(const Group& g, Rng& rng, std::size_t n,
                               std::vector<KeyPair>* keys = nullptr) {
    std::vector<Element> ring;
    for (std::size_t i = 0; i < n; ++i) {
        auto kp = gen(g, rng);
        if (keys)
            keys->push_back(kp);
        ring.push_back(kp.pub);
    }
    return ring;
}

}  // namespace

TEST_CASE("sign/verify round trip on both backends") {
    for (auto g : {toy_group(), ristretto_group()}) {
        Rng rng(101);
        std::vector<KeyPair> keys;
        auto ring = make_ring(*g, rng, 3, &keys);
        auto s = sig(*g, msg("energy trade 1"), ring, 1, keys[1].secret, rng);
        REQUIRE(s.ok());
        CHECK(ver(*g, msg("energy trade 1"), *s));
    }
}

TEST_CASE("completeness over randomized toy instances, rings 3-8") {
    auto g = toy_group();
    Rng rng(2024);
    for (int iter = 0; iter < 300; ++iter) {
        std::size_t n = 3 + rng.uniform(6);
        std::vector<KeyPair> keys;
        auto ring = make_ring(*g, rng, n, &keys);
        std::size_t signer = rng.uniform(n);
        Bytes m = rng.bytes(1 + rng.uniform(40));
        auto s = sig(*g, m, ring, signer, keys[signer].secret, rng);
        REQUIRE(s.ok());
        CHECK(ver(*g, m, *s));
    }
}

TEST_CASE("ring below minimum is rejected at signing") {
    auto g = toy_group();
    Rng rng(3);
    std::vector<KeyPair> keys;
    auto ring = make_ring(*g, rng, 1, &keys);
    auto s = sig(*g, msg("m"), ring, 0, keys[0].secret, rng);
    CHECK(s.code == Error::ring_too_small);

    // explicit min of 1 admits zero-mixin signatures
    auto s1 = sig(*g, msg("m"), ring, 0, keys[0].secret, rng, 1);
    REQUIRE(s1.ok());
    CHECK(ver(*g, msg("m"), *s1));
}

TEST_CASE("secret that does not open the claimed ring slot is rejected") {
    auto g = toy_group();
    Rng rng(4);
    std::vector<KeyPair> keys;
    auto ring = make_ring(*g, rng, 3, &keys);
    auto s = sig(*g, msg("m"), ring, 0, keys[1].secret, rng);
    CHECK(s.code == Error::signer_not_in_ring);
    auto s2 = sig(*g, msg("m"), ring, 7, keys[1].secret, rng);
    CHECK(s2.code == Error::signer_not_in_ring);
}

TEST_CASE("same key yields the same key image over different rings") {
    auto g = toy_group();
    Rng rng(5);
    std::vector<KeyPair> keys;
    auto ring1 = make_ring(*g, rng, 3, &keys);
    auto ring2 = make_ring(*g, rng, 4);
    ring2[2] = keys[0].pub;

    auto s1 = sig(*g, msg("first spend"), ring1, 0, keys[0].secret, rng);
    auto s2 = sig(*g, msg("second spend"), ring2, 2, keys[0].secret, rng);
    REQUIRE(s1.ok());
    REQUIRE(s2.ok());
    CHECK(s1->key_image == s2->key_image);
}

TEST_CASE("signer position does not change key image or validity") {
    auto g = toy_group();
    Rng rng(6);
    std::vector<KeyPair> keys;
    auto ring = make_ring(*g, rng, 4, &keys);
    // move the signer's key to a different slot
    auto swapped = ring;
    std::swap(swapped[0], swapped[3]);

    auto a = sig(*g, msg("m"), ring, 0, keys[0].secret, rng);
    auto b = sig(*g, msg("m"), swapped, 3, keys[0].secret, rng);
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    CHECK(ver(*g, msg("m"), *a));
    CHECK(ver(*g, msg("m"), *b));
    CHECK(a->key_image == b->key_image);
}

// A flipped message re-rolls the challenge hash, so rejection is certain
// only up to the challenge space: every flip must be rejected on
// ristretto255 (collision rate 2^-252), while on the 233-element toy group
// chance acceptance at rate 1/233 is unavoidable and is itself the
// prediction to check.
TEST_CASE("single-bit message tamper: universal rejection on the real group") {
    auto g = ristretto_group();
    Rng rng(7);
    std::vector<KeyPair> keys;
    auto ring = make_ring(*g, rng, 3, &keys);
    Bytes m = msg("offer:300W@2c");
    auto s = sig(*g, m, ring, 1, keys[1].secret, rng);
    REQUIRE(s.ok());
    REQUIRE(ver(*g, m, *s));

    for (std::size_t byte = 0; byte < m.size(); ++byte) {
        for (int bit = 0; bit < 8; ++bit) {
            Bytes flipped = m;
            flipped[byte] ^= static_cast<std::uint8_t>(1u << bit);
            CHECK_FALSE(ver(*g, flipped, *s));
        }
    }
}

TEST_CASE("single-bit message tamper: toy false-accept rate matches 1/q") {
    auto g = toy_group();
    Rng rng(7);
    std::uint64_t flips = 0, accepts = 0;
    for (int iter = 0; iter < 40; ++iter) {
        std::vector<KeyPair> keys;
        auto ring = make_ring(*g, rng, 3, &keys);
        Bytes m = rng.bytes(12);
        auto s = sig(*g, m, ring, 1, keys[1].secret, rng);
        REQUIRE(s.ok());
        for (std::size_t byte = 0; byte < m.size(); ++byte) {
            for (int bit = 0; bit < 8; ++bit) {
                Bytes flipped = m;
                flipped[byte] ^= static_cast<std::uint8_t>(1u << bit);
                ++flips;
                if (ver(*g, flipped, *s))
                    ++accepts;
            }
        }
    }
    // 3840 flips, mean 16.5 accepts, sd ~4.1; assert within +-5 sd
    CHECK(flips == 3840);
    CHECK(accepts < 37);
}

TEST_CASE("tampered ring member or scalars are rejected") {
    auto g = toy_group();
    Rng rng(8);
    std::vector<KeyPair> keys;
    auto ring = make_ring(*g, rng, 3, &keys);
    Bytes m = msg("payload");
    auto s = sig(*g, m, ring, 0, keys[0].secret, rng);
    REQUIRE(s.ok());

    auto substituted = *s;
    substituted.ring[2] = gen(*g, rng).pub;
    CHECK_FALSE(ver(*g, m, substituted));

    auto scalar_flip = *s;
    scalar_flip.c[1].bytes[1] ^= 0x01;
    CHECK_FALSE(ver(*g, m, scalar_flip));

    auto response_flip = *s;
    response_flip.r[0].bytes[1] ^= 0x04;
    CHECK_FALSE(ver(*g, m, response_flip));

    auto image_flip = *s;
    image_flip.key_image.point = g->hash_to_element("other", m);
    CHECK_FALSE(ver(*g, m, image_flip));
}

TEST_CASE("lnk: first spend fresh, reuse linked, distinct keys both fresh") {
    auto g = toy_group();
    Rng rng(9);
    std::vector<KeyPair> keys;
    auto ring = make_ring(*g, rng, 3, &keys);

    KeyImageRegistry reg;
    auto s1 = sig(*g, msg("t1"), ring, 0, keys[0].secret, rng);
    REQUIRE(s1.ok());
    auto l1 = reg.lnk(*s1, "tx-1");
    CHECK(l1.fresh);

    // same secret, different ring: linked to the first transaction
    auto ring2 = make_ring(*g, rng, 3);
    ring2[1] = keys[0].pub;
    auto s2 = sig(*g, msg("t2"), ring2, 1, keys[0].secret, rng);
    REQUIRE(s2.ok());
    auto l2 = reg.lnk(*s2, "tx-2");
    CHECK_FALSE(l2.fresh);
    CHECK(l2.prior_tx == "tx-1");

    // different key, overlapping ring: fresh
    auto s3 = sig(*g, msg("t3"), ring, 1, keys[1].secret, rng);
    REQUIRE(s3.ok());
    auto l3 = reg.lnk(*s3, "tx-3");
    CHECK(l3.fresh);
    CHECK(reg.size() == 2);
}

TEST_CASE("key image injectivity: exhaustive over all 232 toy secrets") {
    auto g = toy_group();
    std::set<Bytes> images;
    for (std::uint32_t x = 1; x < 233; ++x) {
        auto kp = keypair_from_secret(*g, g->scalar_from_u64(x));
        auto img = key_image(*g, kp.secret, kp.pub);
        CHECK(g->element_valid(img.point));
        images.insert(img.point.bytes);
    }
    CHECK(images.size() == 232);
}

// Exhaustive sweep of the whole signature space for a one-key ring over the
// toy group: all (c, r, key-image) tuples, 12.6M verifications.
//
// What it establishes, and what it cannot: for the honest key image the
// accepting set is exactly the 233-member signing family {k = c*x + r},
// i.e. no signature outside the family exists for the true image. For any
// wrong image the (c, r) -> (L, R) map is a bijection, so acceptance is
// pure hash collision at rate 1/q -- at q = 233 such chance forgeries are
// unavoidable for any hash-based scheme, and the sweep pins their rate to
// the random-oracle prediction. On the real backend the same rate is
// 2^-252.
//
// The sweep recomputes the verification equation directly (incremental
// hash over the fixed transcript prefix) and is cross-checked against
// ver() on a sample so the fast path cannot drift from the implementation.
TEST_CASE("exhaustive signature-space sweep matches the algebraic structure") {
    auto gp = toy_group();
    const Group& g = *gp;
    const std::uint32_t q = 233;

    auto kp = keypair_from_secret(g, g.scalar_from_u64(57));
    std::vector<Element> ring{kp.pub};
    Bytes m = msg("forge me");
    auto honest_image = key_image(g, kp.secret, kp.pub);

    // element tables
    Element hp = g.hash_to_element("gv.ringsig.keyimage.v1", kp.pub.bytes);
    std::vector<Element> pow_g(q), pow_p(q), pow_hp(q);
    for (std::uint32_t e = 0; e < q; ++e) {
        auto s = g.scalar_from_u64(e);
        pow_g[e] = g.mul_base(s);
        pow_p[e] = g.mul(kp.pub, s);
        pow_hp[e] = g.mul(hp, s);
    }
    // all 232 non-identity subgroup elements as key image candidates
    std::vector<Element> candidates;
    for (std::uint32_t e = 1; e < q; ++e)
        candidates.push_back(pow_g[e]);

    auto blob = [](Bytes& buf, const Bytes& b) {
        buf.push_back(static_cast<std::uint8_t>(b.size() >> 8));
        buf.push_back(static_cast<std::uint8_t>(b.size() & 0xff));
        buf.insert(buf.end(), b.begin(), b.end());
    };

    std::uint64_t accepting = 0, accepting_honest_image = 0;
    std::set<std::uint32_t> honest_family_k;  // k = c*x + r for honest accepts
    const std::uint32_t secret_x = 57;
    Rng sample_rng(1234);
    int cross_checked = 0;

    for (const auto& image : candidates) {
        // transcript prefix for this image (fixed message and ring)
        Bytes prefix;
        blob(prefix, m);
        prefix.push_back(0);
        prefix.push_back(1);  // ring size
        blob(prefix, kp.pub.bytes);
        blob(prefix, image.bytes);
        std::string domain = "gv.ringsig.challenge.v1";
        Bytes tagged(domain.begin(), domain.end());
        tagged.push_back(0x00);
        tagged.insert(tagged.end(), prefix.begin(), prefix.end());
        crypto_hash_sha256_state prefix_state;
        crypto_hash_sha256_init(&prefix_state);
        crypto_hash_sha256_update(&prefix_state, tagged.data(), tagged.size());

        std::vector<Element> pow_image(q);
        for (std::uint32_t e = 0; e < q; ++e)
            pow_image[e] = g.mul(image, g.scalar_from_u64(e));

        for (std::uint32_t c = 0; c < q; ++c) {
            for (std::uint32_t r = 0; r < q; ++r) {
                Element li = g.add(pow_p[c], pow_g[r]);
                Element ri = g.add(pow_hp[r], pow_image[c]);
                std::uint8_t tail[8] = {0, 2, li.bytes[0], li.bytes[1],
                                        0, 2, ri.bytes[0], ri.bytes[1]};
                crypto_hash_sha256_state st = prefix_state;
                crypto_hash_sha256_update(&st, tail, 8);
                std::uint8_t digest[32];
                crypto_hash_sha256_final(&st, digest);
                std::uint64_t v = 0;
                for (int i = 0; i < 8; ++i)
                    v = (v << 8) | digest[i];
                bool accepts = (v % q) == c;

                if (accepts) {
                    ++accepting;
                    if (image == honest_image.point) {
                        ++accepting_honest_image;
                        honest_family_k.insert((c * secret_x + r) % q);
                    }
                }
                // sampled agreement with the real verifier
                if (accepts || sample_rng.uniform(4096) == 0) {
                    RingSignature cand;
                    cand.ring = ring;
                    cand.key_image = KeyImage{image};
                    cand.c = {g.scalar_from_u64(c)};
                    cand.r = {g.scalar_from_u64(r)};
                    CHECK(ver(g, m, cand) == accepts);
                    ++cross_checked;
                }
            }
        }
    }

    // honest image: exactly the signing family, one tuple per commitment k
    CHECK(accepting_honest_image == 233);
    CHECK(honest_family_k.size() == 233);

    // wrong images: chance acceptance only, at the 1/q random-oracle rate.
    // 231 wrong images x 233^2 tuples x 1/233 gives mean 53823, sd ~232;
    // the band below is +-5 sd.
    std::uint64_t wrong = accepting - accepting_honest_image;
    CHECK(wrong > 52660);
    CHECK(wrong < 54990);
    CHECK(cross_checked > 1000);
}

TEST_CASE("stealth: distinct ephemerals give distinct one-time keys") {
    auto g = toy_group();
    Rng rng(10);
    auto recv = make_receiver(*g, rng);

    // frozen ephemerals, verified distinct by enumeration below
    auto o1 = derive_stealth(*g, recv.view_pub, recv.spend_pub, g->scalar_from_u64(5));
    auto o2 = derive_stealth(*g, recv.view_pub, recv.spend_pub, g->scalar_from_u64(9));
    REQUIRE(o1.ok());
    REQUIRE(o2.ok());
    CHECK_FALSE(o1->one_time_pub == o2->one_time_pub);
    CHECK_FALSE(o1->one_time_pub == recv.spend_pub);
    CHECK_FALSE(o2->one_time_pub == recv.spend_pub);
}

TEST_CASE("stealth: receiver recovers the one-time secret, others cannot") {
    for (auto g : {toy_group(), ristretto_group()}) {
        Rng rng(11);
        auto recv = make_receiver(*g, rng);
        auto eph = g->random_scalar(rng);
        auto out = derive_stealth(*g, recv.view_pub, recv.spend_pub, eph);
        REQUIRE(out.ok());

        auto x = recover_stealth_secret(*g, recv, *out);
        REQUIRE(x.ok());
        CHECK(g->mul_base(*x) == out->one_time_pub);

        // a different receiver sees no matching output
        auto other = make_receiver(*g, rng);
        auto miss = recover_stealth_secret(*g, other, *out);
        CHECK(miss.code == Error::no_matching_output);
    }
}

TEST_CASE("stealth rejects identity inputs") {
    auto g = toy_group();
    Rng rng(12);
    auto recv = make_receiver(*g, rng);

    auto bad = derive_stealth(*g, g->identity(), recv.spend_pub, g->scalar_from_u64(3));
    CHECK(bad.code == Error::identity_element);
    auto bad2 = derive_stealth(*g, recv.view_pub, g->identity(), g->scalar_from_u64(3));
    CHECK(bad2.code == Error::identity_element);
    auto bad3 = derive_stealth(*g, recv.view_pub, recv.spend_pub, g->scalar_zero());
    CHECK(bad3.code == Error::identity_element);

    StealthOutput degenerate{g->identity(), recv.spend_pub};
    auto rec = recover_stealth_secret(*g, recv, degenerate);
    CHECK(rec.code == Error::identity_element);
}

TEST_CASE("payment proofs validate only against their own output") {
    auto g = toy_group();
    Rng rng(13);
    auto recv = make_receiver(*g, rng);

    // small scenario: three transfers, all pairs cross-checked
    std::vector<Scalar> ephemerals;
    std::vector<StealthOutput> outputs;
    for (int i = 0; i < 3; ++i) {
        auto e = g->random_scalar(rng);
        auto out = derive_stealth(*g, recv.view_pub, recv.spend_pub, e);
        REQUIRE(out.ok());
        ephemerals.push_back(e);
        outputs.push_back(*out);
    }

    for (std::size_t i = 0; i < 3; ++i) {
        auto proof = prove_payment(*g, ephemerals[i], outputs[i].ephemeral_pub, "trade-" + std::to_string(i));
        REQUIRE(proof.ok());
        for (std::size_t j = 0; j < 3; ++j) {
            bool expect = i == j;
            CHECK(verify_payment_proof(*g, *proof, outputs[j], recv.view_pub, recv.spend_pub) == expect);
        }
    }

    // proving with the wrong ephemeral fails up front
    auto wrong = prove_payment(*g, ephemerals[0], outputs[1].ephemeral_pub, "t");
    CHECK(wrong.code == Error::wrong_ephemeral);
}

TEST_CASE("audit scan finds exactly the receiver's outputs and cannot spend") {
    auto g = toy_group();
    Rng rng(14);
    auto recv = make_receiver(*g, rng);
    auto other = make_receiver(*g, rng);

    std::vector<StealthOutput> ledger;
    std::set<std::size_t> expected;
    for (int i = 0; i < 5; ++i) {
        bool to_recv = (i == 1 || i == 3);
        const auto& target = to_recv ? recv : other;
        auto out = derive_stealth(*g, target.view_pub, target.spend_pub, g->random_scalar(rng));
        REQUIRE(out.ok());
        if (to_recv)
            expected.insert(ledger.size());
        ledger.push_back(*out);
    }

    TrackingKey tracking{recv.view_secret, recv.spend_pub};
    auto hits = audit_scan(*g, tracking, ledger);
    CHECK(std::set<std::size_t>(hits.begin(), hits.end()) == expected);
    CHECK(audit_scan(*g, tracking, {}).empty());

    // the tracking key alone cannot produce a valid spend: signing with the
    // view secret in place of the one-time secret fails verification
    auto out = ledger[1];
    std::vector<Element> ring{out.one_time_pub, gen(*g, rng).pub, gen(*g, rng).pub};
    auto attempt = sig(*g, msg("steal"), ring, 0, recv.view_secret, rng);
    CHECK(attempt.code == Error::signer_not_in_ring);
}

// Frozen wire vectors: any drift in byte encodings, transcript layout or
// domain tags breaks these, which is exactly what they are for.
TEST_CASE("shipped signature vectors verify as recorded") {
    std::ifstream in(std::string(GRIDVEIL_FIXTURES) + "/ringsig_vectors.json");
    REQUIRE(in.good());
    auto doc = nlohmann::json::parse(in);
    REQUIRE(doc.at("schema") == "gridveil.ringsig_vectors");
    std::size_t checked = 0;
    for (const auto& v : doc.at("vectors")) {
        auto g = group_by_name(v.at("group").get<std::string>());
        Bytes message = from_hex(v.at("message").get<std::string>());
        auto sig_bytes = from_hex(v.at("signature").get<std::string>());
        auto s = deserialize_ring_signature(*g, sig_bytes);
        REQUIRE(s.ok());
        CHECK(ver(*g, message, *s) == v.at("valid").get<bool>());
        ++checked;
    }
    CHECK(checked >= 8);
}

TEST_CASE("serialization round trip preserves verifiability") {
    for (auto g : {toy_group(), ristretto_group()}) {
        Rng rng(15);
        std::vector<KeyPair> keys;
        auto ring = make_ring(*g, rng, 4, &keys);
        Bytes m = msg("wire");
        auto s = sig(*g, m, ring, 2, keys[2].secret, rng);
        REQUIRE(s.ok());

        Bytes wire = serialize(*s);
        auto back = deserialize_ring_signature(*g, wire);
        REQUIRE(back.ok());
        CHECK(back->ring == s->ring);
        CHECK(back->key_image == s->key_image);
        CHECK(ver(*g, m, *back));

        // truncation and trailing garbage are rejected
        Bytes cut(wire.begin(), wire.end() - 3);
        CHECK_FALSE(deserialize_ring_signature(*g, cut).ok());
        Bytes extended = wire;
        extended.push_back(0x00);
        CHECK_FALSE(deserialize_ring_signature(*g, extended).ok());
    }
}
