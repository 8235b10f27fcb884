// Attack-harness tests: MAC-level forgery statistics, wire-level forgeries
// against a live authenticator, replay, and in-flight bit modification.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "caiba/attack.hpp"
#include "caiba/node.hpp"
#include "caiba/phy.hpp"
#include "caiba/roles.hpp"
#include "doctest.h"

using namespace caiba;

namespace {

Key128 make_key(std::uint8_t seed) {
    Key128 k{};
    for (auto& b : k) b = seed++;
    return k;
}

ChannelKeys make_channel_keys(std::uint8_t seed) {
    ChannelKeys ck;
    ck.group = make_key(seed);
    ck.source.hash_key = make_key(static_cast<std::uint8_t>(seed + 0x40));
    ck.source.masking_key = make_key(static_cast<std::uint8_t>(seed + 0x80));
    return ck;
}

bool run_until(Bus& bus, const std::function<bool()>& finished, std::uint64_t max_quanta) {
    for (std::uint64_t q = 0; q < max_quanta; ++q) {
        bus.tick();
        if (finished()) {
            bus.run(600);
            return true;
        }
    }
    return false;
}

constexpr double kQuantumNs = 100.0;  // 1 Mbit/s at ten quanta per bit

}  // namespace

TEST_CASE("monte carlo forgery rate matches 2^-w") {
    SUBCASE("w = 8") {
        const ForgeryReport r = forgery_monte_carlo(8, 100000, 7);
        CHECK(r.expected_mean == doctest::Approx(390.625));
        CHECK(r.std_dev == doctest::Approx(19.75).epsilon(0.01));
        // Three-sigma band around the binomial mean.
        CHECK(r.successes >= 332);
        CHECK(r.successes <= 450);
    }
    SUBCASE("w = 24") {
        const ForgeryReport r = forgery_monte_carlo(24, 10000, 7);
        CHECK(r.successes <= 1);
    }
    SUBCASE("deterministic under a fixed seed") {
        const ForgeryReport a = forgery_monte_carlo(8, 20000, 99);
        const ForgeryReport b = forgery_monte_carlo(8, 20000, 99);
        CHECK(a.successes == b.successes);
    }
}

namespace {

struct ForgeryRig {
    Bus bus{kQuantumNs};
    SharedLog log;
    std::unique_ptr<TransmitterNode> tx;
    std::unique_ptr<AuthenticatorNode> auth;
    std::unique_ptr<ReceiverNode> rx;
    std::unique_ptr<ForgeryAttacker> attacker;
};

// One genuine sender, one live authenticator, one receiver, plus a forger
// with partial key material. The sender finishes its traffic before the
// attacker starts so the two never contend for the same identifier.
ForgeryRig make_forgery_rig(unsigned tag_width, ForgeryAttackerConfig::Mode mode,
                            std::uint64_t genuine, std::uint64_t attempts) {
    ForgeryRig r;
    const BitTiming timing = BitTiming::for_quanta(10);
    const ChannelKeys ck = make_channel_keys(0x30);

    TransmitterConfig tc;
    tc.traffic = {{0x100, 8, genuine, true}};
    tc.keys[0x100] = ck;
    tc.tag_width = tag_width;
    r.tx = std::make_unique<TransmitterNode>("tx", timing, tc, &r.log);

    AuthenticatorConfig ac;
    ac.keys[0x100] = ck;
    ac.active_ids = {0x100};
    ac.tag_width = tag_width;
    r.auth = std::make_unique<AuthenticatorNode>("auth", timing, ac);

    ReceiverConfig rc;
    rc.subscriptions = {{0x100, true, tag_width, ck.group}};
    rc.send_reset_requests = false;  // forgeries fail on purpose; no recovery
    r.rx = std::make_unique<ReceiverNode>("rx", timing, rc, &r.log);

    ForgeryAttackerConfig fc;
    fc.mode = mode;
    fc.target_id = 0x100;
    fc.tag_width = tag_width;
    fc.group_key = ck.group;
    fc.source_keys = ck.source;
    fc.attempts = attempts;
    fc.start_after = genuine;
    fc.seed = 0xA77AC4;
    r.attacker = std::make_unique<ForgeryAttacker>("attacker", timing, fc);

    r.bus.attach(r.tx.get(), 0.0);
    r.bus.attach(r.auth.get(), 1.0);
    r.bus.attach(r.rx.get(), 10.0);
    r.bus.attach(r.attacker.get(), 5.0);
    return r;
}

}  // namespace

TEST_CASE("rogue authenticator must guess the integrity tag") {
    // The attacker holds the source keys: it can pre-compensate the real
    // source tag, so every attempt survives the wire (valid CRC) and reaches
    // the SecOC check, where it succeeds only if the guessed integrity tag
    // was right: p = 2^-w.
    SUBCASE("w = 8") {
        ForgeryRig r = make_forgery_rig(8, ForgeryAttackerConfig::Mode::GuessIntegrityTag, 30, 2000);
        REQUIRE(run_until(
            r.bus, [&] { return r.tx->done() && r.attacker->done(); }, 40'000'000));

        CHECK(r.attacker->stats().built == 2000);
        CHECK(r.attacker->stats().completed == 2000);  // CRC always valid
        CHECK(r.attacker->stats().aborted == 0);
        CHECK(r.attacker->stats().observed == 30);

        // Every attempt produced a clean SecOC verdict.
        CHECK(r.rx->stats().accepts + r.rx->stats().rejects == 2030);
        const std::uint64_t forged = r.log.forged_accepts();
        CHECK(r.rx->stats().accepts == 30 + forged);
        // Binomial(2000, 2^-8): mean 7.8, sigma 2.8.
        CHECK(forged >= 1);
        CHECK(forged <= 19);
    }
    SUBCASE("w = 24") {
        ForgeryRig r =
            make_forgery_rig(24, ForgeryAttackerConfig::Mode::GuessIntegrityTag, 10, 500);
        REQUIRE(run_until(
            r.bus, [&] { return r.tx->done() && r.attacker->done(); }, 20'000'000));
        CHECK(r.attacker->stats().completed == 500);
        CHECK(r.log.forged_accepts() == 0);
        CHECK(r.rx->stats().accepts == 10);
        CHECK(r.rx->stats().rejects == 500);
    }
}

TEST_CASE("group member must guess the source tag to masquerade") {
    // The attacker holds the group key: it can compute a valid integrity tag,
    // but the live authenticator XORs the (unknown) source tag over the
    // emitted field. Unless the attacker's pre-flip guessed that tag, the
    // sampled field no longer matches the CRC and the frame dies on the wire
    // before any receiver issues a verdict.
    SUBCASE("w = 8") {
        ForgeryRig r = make_forgery_rig(8, ForgeryAttackerConfig::Mode::GuessSourceTag, 20, 600);
        REQUIRE(run_until(
            r.bus, [&] { return r.tx->done() && r.attacker->done(); }, 40'000'000));

        CHECK(r.attacker->stats().built == 600);
        const std::uint64_t forged = r.log.forged_accepts();
        // A wrong guess never parses; a right guess is a valid SecOC frame.
        CHECK(r.attacker->stats().completed == forged);
        CHECK(r.attacker->stats().aborted == 600 - forged);
        CHECK(r.rx->stats().rejects == 0);
        CHECK(forged >= 1);
        CHECK(forged <= 12);
    }
    SUBCASE("w = 24") {
        ForgeryRig r = make_forgery_rig(24, ForgeryAttackerConfig::Mode::GuessSourceTag, 10, 300);
        REQUIRE(run_until(
            r.bus, [&] { return r.tx->done() && r.attacker->done(); }, 20'000'000));
        CHECK(r.log.forged_accepts() == 0);
        CHECK(r.attacker->stats().completed == 0);
        CHECK(r.attacker->stats().aborted == 300);
        CHECK(r.rx->stats().accepts == 10);
    }
}

TEST_CASE("replayed frames are rejected by the freshness check") {
    Bus bus(kQuantumNs);
    SharedLog log;
    const BitTiming timing = BitTiming::for_quanta(10);
    const ChannelKeys ck = make_channel_keys(0x50);

    TransmitterConfig tc;
    tc.traffic = {{0x100, 8, 10, true}};
    tc.keys[0x100] = ck;
    tc.aggregate_source_tag = false;  // plain SecOC: replays get clean verdicts
    TransmitterNode tx("tx", timing, tc, &log);

    ReceiverConfig rc;
    rc.subscriptions = {{0x100, true, kDefaultTagWidth, ck.group}};
    rc.send_reset_requests = false;
    ReceiverNode rx("rx", timing, rc, &log);

    ReplayConfig pc;
    pc.target_id = 0x100;
    pc.replays = 30;
    pc.start_after = 10;
    ReplayNode replayer("replayer", timing, pc);

    bus.attach(&tx, 0.0);
    bus.attach(&rx, 10.0);
    bus.attach(&replayer, 20.0);
    REQUIRE(run_until(
        bus, [&] { return tx.done() && replayer.done(); }, 10'000'000));

    CHECK(replayer.stats().observed >= 10);
    CHECK(replayer.stats().recorded == 10);
    CHECK(replayer.stats().replayed == 30);
    CHECK(rx.stats().accepts == 10);   // the genuine traffic
    CHECK(rx.stats().rejects == 30);   // every replay
    CHECK(log.forged_accepts() == 0);
    CHECK(rx.port_metrics().crc_errors == 0);  // replays are bit-perfect copies
}

TEST_CASE("in-flight payload modification with a patched crc is rejected") {
    Bus bus(kQuantumNs);
    SharedLog log;
    const BitTiming timing = BitTiming::for_quanta(10);
    const ChannelKeys ck = make_channel_keys(0x70);

    BitModConfig bc;
    bc.target_id = 0x100;
    bc.seed = 5;
    BitModAttacker attacker("attacker", timing, bc);

    TransmitterConfig tc;
    tc.traffic = {{0x100, 8, 20, true}};
    tc.keys[0x100] = ck;
    tc.aggregate_source_tag = false;
    // The genuine transmitter would normally error-flag the mismatch between
    // what it drives and what it samples; the attack model assumes it cannot
    // (otherwise in-flight modification is plain denial of service).
    tc.tolerant_monitor = true;
    tc.built_hook = [&](const EncodedFrame& image) { attacker.arm(image); };
    TransmitterNode tx("tx", timing, tc, &log);

    ReceiverConfig rc;
    rc.subscriptions = {{0x100, true, kDefaultTagWidth, ck.group}};
    rc.send_reset_requests = false;
    ReceiverNode rx0("rx0", timing, rc, &log);
    rc.request_index = 1;
    ReceiverNode rx1("rx1", timing, rc, &log);

    bus.attach(&tx, 0.0);
    bus.attach(&attacker, 12.0);
    bus.attach(&rx0, 5.0);
    bus.attach(&rx1, 25.0);
    REQUIRE(run_until(
        bus, [&] { return tx.done(); }, 10'000'000));

    CHECK(attacker.stats().armed == 20);
    CHECK(attacker.stats().skipped == 0);
    CHECK(attacker.stats().attacked == 20);
    CHECK(attacker.stats().flips_driven > 0);

    // The patched CRC keeps every frame parseable: no wire-level errors, the
    // transmitter never retried, and both receivers reached a SecOC verdict.
    CHECK(tx.stats().completed == 20);
    CHECK(tx.stats().retransmissions == 0);
    CHECK(rx0.port_metrics().crc_errors == 0);
    CHECK(rx1.port_metrics().crc_errors == 0);
    CHECK(rx0.stats().accepts == 0);
    CHECK(rx0.stats().rejects == 20);
    CHECK(rx1.stats().accepts == 0);
    CHECK(rx1.stats().rejects == 20);
    CHECK(log.forged_accepts() == 0);
}

TEST_CASE("bit modification of an aggregated frame is declined while armed") {
    // With a pending aggregation override the final wire image is unknown at
    // build time, so the modifier cannot plan a CRC patch and skips.
    const BitTiming timing = BitTiming::for_quanta(10);
    BitModConfig bc;
    bc.target_id = 0x100;
    BitModAttacker attacker("attacker", timing, bc);

    Frame f;
    f.can_id = 0x100;
    f.dlc = 8;
    f.secured = true;
    f.counter_lsb = 1;
    f.tag = 0xABCDEF;
    f.app_data = BitString::from_uint(0x123456789ull, 36);
    BitString payload = f.app_data;
    payload.append(BitString::from_uint(f.counter_lsb, kCounterLsbBits));
    payload.append(BitString::from_uint(f.tag ^ 0x55AA55, kDefaultTagWidth));
    attacker.arm(encode_frame(f, payload));
    CHECK(attacker.stats().armed == 0);
    CHECK(attacker.stats().skipped == 1);

    attacker.arm(encode_frame(f));
    CHECK(attacker.stats().armed == 1);
}
