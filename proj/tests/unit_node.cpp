// End-to-end node tests: transmitters, receivers, and the authenticator on a
// shared quantum bus.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

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

// Ticks until `finished` holds, then drains the wire so every node reaches
// bus-idle again. Returns false if the budget ran out first.
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

TEST_CASE("plain secoc traffic is accepted end to end") {
    Bus bus(kQuantumNs);
    SharedLog log;
    const BitTiming timing = BitTiming::for_quanta(10);
    const ChannelKeys ck = make_channel_keys(0x10);

    TransmitterConfig tc;
    tc.traffic = {{0x100, 8, 40, true}};
    tc.keys[0x100] = ck;
    tc.aggregate_source_tag = false;
    tc.seed = 7;
    TransmitterNode tx("tx0", timing, tc, &log);

    ReceiverConfig rc;
    rc.subscriptions = {{0x100, true, 24, ck.group}};
    ReceiverNode rx0("rx0", timing, rc, &log);
    rc.request_index = 1;
    ReceiverNode rx1("rx1", timing, rc, &log);

    bus.attach(&tx, 0.0);
    bus.attach(&rx0, 12.0);
    bus.attach(&rx1, 38.0);

    REQUIRE(run_until(bus, [&] { return tx.done(); }, 2'000'000));

    CHECK(tx.stats().built == 40);
    CHECK(tx.stats().completed == 40);
    CHECK(tx.stats().aborted == 0);
    CHECK(tx.stats().retransmissions == 0);
    CHECK(rx0.stats().accepts == 40);
    CHECK(rx1.stats().accepts == 40);
    CHECK(rx0.stats().rejects == 0);
    CHECK(log.accepts() == 80);
    CHECK(log.forged_accepts() == 0);
    CHECK(log.nonce_reuse_events() == 0);
    // Counter advanced monotonically through two LSB wraps.
    CHECK(rx0.channel(0x100).last_accepted == 40);
    CHECK(tx.port_metrics().ack_errors == 0);
    CHECK(tx.port_metrics().bit_errors == 0);
    CHECK(rx0.port_metrics().intermission_dominant == 0);
}

TEST_CASE("caiba aggregation with live authenticator: receivers accept everything") {
    Bus bus(kQuantumNs);
    SharedLog log;
    const BitTiming timing = BitTiming::for_quanta(10);
    const std::vector<std::uint16_t> ids{0x100, 0x120, 0x140};
    std::map<std::uint16_t, ChannelKeys> keys;
    for (std::size_t i = 0; i < ids.size(); ++i)
        keys[ids[i]] = make_channel_keys(static_cast<std::uint8_t>(0x11 * (i + 1)));

    // Three senders so frames collide and arbitrate while the authenticator
    // follows whoever wins.
    std::vector<std::unique_ptr<TransmitterNode>> txs;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        TransmitterConfig tc;
        tc.traffic = {{ids[i], static_cast<std::uint8_t>(i == 2 ? 6 : 8), 12, true}};
        tc.keys[ids[i]] = keys[ids[i]];
        tc.seed = 100 + i;
        txs.push_back(std::make_unique<TransmitterNode>("tx" + std::to_string(i), timing, tc, &log));
    }

    AuthenticatorConfig ac;
    ac.keys = keys;
    ac.active_ids = ids;
    AuthenticatorNode auth("auth0", timing, ac);

    ReceiverConfig rc;
    for (std::uint16_t id : ids) rc.subscriptions.push_back({id, true, 24, keys[id].group});
    ReceiverNode rx0("rx0", timing, rc, &log);
    rc.request_index = 1;
    ReceiverNode rx1("rx1", timing, rc, &log);

    bus.attach(txs[0].get(), 0.0);
    bus.attach(txs[1].get(), 2.0);
    bus.attach(txs[2].get(), 5.0);
    bus.attach(&auth, 8.0);
    bus.attach(&rx0, 20.0);
    bus.attach(&rx1, 40.0);

    auto all_done = [&] {
        for (auto& t : txs)
            if (!t->done()) return false;
        return true;
    };
    REQUIRE(run_until(bus, all_done, 4'000'000));

    for (auto& t : txs) {
        CHECK(t->stats().completed == 12);
        CHECK(t->stats().aborted == 0);
        CHECK(t->stats().healthy_tag_regions == 12);
        CHECK(t->stats().faulty_tag_regions == 0);
    }
    CHECK(rx0.stats().accepts == 36);
    CHECK(rx1.stats().accepts == 36);
    CHECK(rx0.stats().rejects == 0);
    CHECK(rx1.stats().rejects == 0);
    CHECK(log.forged_accepts() == 0);

    // The authenticator ran one session per frame and touched every tag bit:
    // pass, inject, and erase all occurred, as did the stretch compensation
    // for injections that follow a recessive sample.
    CHECK(auth.stats().sessions == 36);
    CHECK(auth.stats().tag_bits_passed + auth.stats().flips_dominant + auth.stats().erases ==
          36 * 24);
    CHECK(auth.stats().flips_dominant > 0);
    CHECK(auth.stats().erases > 0);
    CHECK(auth.stats().tag_bits_passed > 0);
    CHECK(auth.stats().compensations > 0);
    CHECK(auth.stats().discarded_sessions == 0);
    CHECK(auth.stats().commits == 36);
    CHECK(auth.last_counter(0x100) == 12);
    CHECK(bus.multi_erase_quanta() == 0);

    // Arbitration happened at least once given three contending senders.
    std::uint64_t losses = 0;
    for (auto& t : txs) losses += t->port_metrics().arbitration_losses;
    CHECK(losses > 0);
}

TEST_CASE("without an authenticator aggregated frames never verify and get aborted") {
    Bus bus(kQuantumNs);
    SharedLog log;
    const BitTiming timing = BitTiming::for_quanta(10);
    const ChannelKeys ck = make_channel_keys(0x33);

    TransmitterConfig tc;
    tc.traffic = {{0x100, 8, 5, true}};
    tc.keys[0x100] = ck;
    tc.max_retransmissions = 1;
    tc.seed = 5;
    TransmitterNode tx("tx0", timing, tc, &log);

    ReceiverConfig rc;
    rc.subscriptions = {{0x100, true, 24, ck.group}};
    rc.send_reset_requests = false;
    ReceiverNode rx0("rx0", timing, rc, &log);

    bus.attach(&tx, 0.0);
    bus.attach(&rx0, 25.0);

    REQUIRE(run_until(bus, [&] { return tx.done(); }, 2'000'000));

    CHECK(tx.stats().completed == 0);
    CHECK(tx.stats().aborted == 5);
    CHECK(rx0.stats().accepts == 0);
    CHECK(log.accepts() == 0);
    // The sender saw its own tag region unrepaired.
    CHECK(tx.stats().healthy_tag_regions == 0);
    CHECK(tx.stats().faulty_tag_regions >= 3);
    CHECK(tx.stats().auth_inactive_events == 1);
    CHECK(tx.stats().no_backup_events == 1);
    CHECK(tx.stats().handovers_sent == 0);
}

TEST_CASE("arbitration: lower identifier wins, loser retries and completes") {
    Bus bus(kQuantumNs);
    bus.trace.enabled = true;
    SharedLog log;
    const BitTiming timing = BitTiming::for_quanta(10);

    TransmitterConfig a;
    a.traffic = {{0x100, 4, 1, false}};
    a.seed = 1;
    TransmitterNode txa("txa", timing, a, &log);

    TransmitterConfig b;
    b.traffic = {{0x101, 4, 1, false}};
    b.seed = 2;
    TransmitterNode txb("txb", timing, b, &log);

    ReceiverConfig rc;
    rc.subscriptions = {{0x100, false, 24, {}}, {0x101, false, 24, {}}};
    ReceiverNode rx0("rx0", timing, rc, &log);

    txa.set_trace(&bus.trace);
    txb.set_trace(&bus.trace);
    bus.attach(&txa, 0.0);
    bus.attach(&txb, 3.0);
    bus.attach(&rx0, 20.0);

    REQUIRE(run_until(bus, [&] { return txa.done() && txb.done(); }, 500'000));

    CHECK(txa.port_metrics().arbitration_losses == 0);
    CHECK(txb.port_metrics().arbitration_losses == 1);
    CHECK(rx0.stats().legacy_frames == 2);

    std::vector<std::string> completed_ids;
    for (const auto& ev : bus.trace.events)
        if (ev.kind == "tx_end") completed_ids.push_back(ev.detail);
    REQUIRE(completed_ids.size() == 2);
    CHECK(completed_ids[0] == std::to_string(0x100));
    CHECK(completed_ids[1] == std::to_string(0x101));
}

TEST_CASE("mixed legacy and secured traffic coexist") {
    Bus bus(kQuantumNs);
    SharedLog log;
    const BitTiming timing = BitTiming::for_quanta(10);
    const ChannelKeys ck = make_channel_keys(0x21);

    TransmitterConfig tc;
    tc.traffic = {{0x100, 8, 10, true}, {0x300, 5, 10, false}};
    tc.keys[0x100] = ck;
    tc.seed = 9;
    TransmitterNode tx("tx0", timing, tc, &log);

    AuthenticatorConfig ac;
    ac.keys[0x100] = ck;
    ac.active_ids = {0x100};
    AuthenticatorNode auth("auth0", timing, ac);

    ReceiverConfig rc;
    rc.subscriptions = {{0x100, true, 24, ck.group}, {0x300, false, 24, {}}};
    ReceiverNode rx0("rx0", timing, rc, &log);

    bus.attach(&tx, 0.0);
    bus.attach(&auth, 4.0);
    bus.attach(&rx0, 30.0);

    REQUIRE(run_until(bus, [&] { return tx.done(); }, 2'000'000));

    CHECK(rx0.stats().accepts == 10);
    CHECK(rx0.stats().legacy_frames == 10);
    CHECK(rx0.stats().rejects == 0);
    // Sessions only on the keyed identifier; legacy frames pass untouched.
    CHECK(auth.stats().sessions == 10);
    CHECK(tx.stats().completed == 20);
    CHECK(tx.stats().aborted == 0);
}

TEST_CASE("receiver desync triggers a counter reset after exactly five failures") {
    Bus bus(kQuantumNs);
    bus.trace.enabled = true;
    SharedLog log;
    const BitTiming timing = BitTiming::for_quanta(10);
    const std::uint16_t data_id = 0x100;
    const std::uint16_t announce_id = 0x021;
    const std::uint16_t broadcast_id = 0x030;

    ProtocolIds protocol;
    protocol.announce[data_id] = announce_id;
    protocol.broadcast[data_id] = broadcast_id;

    std::map<std::uint16_t, ChannelKeys> keys;
    keys[data_id] = make_channel_keys(0x51);
    keys[broadcast_id] = make_channel_keys(0x71);

    TransmitterConfig tc;
    tc.traffic = {{data_id, 8, 60, true}};
    tc.keys = keys;
    tc.protocol = protocol;
    tc.seed = 3;
    TransmitterNode tx("tx0", timing, tc, &log);
    tx.set_trace(&bus.trace);

    AuthenticatorConfig ac;
    ac.keys = keys;
    ac.active_ids = {data_id, broadcast_id};
    ac.protocol = protocol;
    AuthenticatorNode auth("auth0", timing, ac);

    ReceiverConfig rc;
    rc.subscriptions = {{data_id, true, 24, keys[data_id].group},
                        {broadcast_id, true, 24, keys[broadcast_id].group}};
    rc.protocol = protocol;
    rc.faults.deaf_id = data_id;
    rc.faults.deaf_after = 10;
    rc.faults.deaf_count = 40;
    ReceiverNode rx0("rx0", timing, rc, &log);

    ReceiverConfig rc1;
    rc1.subscriptions = rc.subscriptions;
    rc1.protocol = protocol;
    rc1.request_index = 1;
    ReceiverNode rx1("rx1", timing, rc1, &log);

    bus.attach(&tx, 0.0);
    bus.attach(&auth, 5.0);
    bus.attach(&rx0, 22.0);
    bus.attach(&rx1, 40.0);

    REQUIRE(run_until(bus, [&] { return tx.done(); }, 6'000'000));

    // rx0 processed 10, slept through 40, rejected exactly 5, recovered, and
    // accepted the rest; rx1 never skipped a beat.
    CHECK(rx0.stats().rejects == 5);
    CHECK(rx0.stats().reset_requests_sent == 1);
    CHECK(rx0.stats().recoveries_started == 1);
    CHECK(rx0.stats().recoveries_completed == 1);
    CHECK(tx.stats().counter_resets == 1);
    CHECK(auth.stats().announce_refreshes == 1);
    CHECK(rx1.stats().rejects == 0);

    // Every data frame after recovery verified, and the five failures were
    // consecutive: find rx0's verdicts on the data id and check the pattern.
    std::vector<bool> pattern;
    for (const auto& v : log.verdicts())
        if (v.receiver == "rx0" && v.can_id == data_id) pattern.push_back(v.accepted);
    REQUIRE(pattern.size() == 60 - 40);
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        const bool expect_reject = i >= 10 && i < 15;
        CHECK(pattern[i] == !expect_reject);
    }
    CHECK(log.nonce_reuse_events() == 0);
    CHECK(log.forged_accepts() == 0);
    CHECK(rx0.channel(data_id).consecutive_failures == 0);
    CHECK_FALSE(rx0.in_recovery(data_id));
}

TEST_CASE("authenticator failure hands the role to the backup unit") {
    Bus bus(kQuantumNs);
    bus.trace.enabled = true;
    SharedLog log;
    const BitTiming timing = BitTiming::for_quanta(10);
    const std::uint16_t data_id = 0x100;

    std::map<std::uint16_t, ChannelKeys> keys;
    keys[data_id] = make_channel_keys(0x61);

    TransmitterConfig tc;
    tc.traffic = {{data_id, 8, 30, true}};
    tc.keys = keys;
    tc.backup_authenticator = 1;
    tc.seed = 11;
    TransmitterNode tx("tx0", timing, tc, &log);
    tx.set_trace(&bus.trace);

    AuthenticatorConfig a0;
    a0.keys = keys;
    a0.active_ids = {data_id};
    a0.index = 0;
    a0.disable_at_quantum = 1;  // resolved lazily: dies before the first frame
    AuthenticatorNode auth0("auth0", timing, a0);

    AuthenticatorConfig a1;
    a1.keys = keys;
    a1.index = 1;  // passive until named by a handover
    AuthenticatorNode auth1("auth1", timing, a1);

    ReceiverConfig rc;
    rc.subscriptions = {{data_id, true, 24, keys[data_id].group}};
    rc.send_reset_requests = false;
    ReceiverNode rx0("rx0", timing, rc, &log);

    bus.attach(&tx, 0.0);
    bus.attach(&auth0, 3.0);
    bus.attach(&auth1, 6.0);
    bus.attach(&rx0, 28.0);

    REQUIRE(run_until(bus, [&] { return tx.done(); }, 4'000'000));

    CHECK(tx.stats().auth_inactive_events == 1);
    CHECK(tx.stats().handovers_sent == 1);
    CHECK(auth1.stats().adoptions == 1);
    CHECK(auth1.responsible_for(data_id));
    // The first data frame burned its retry budget while nobody repaired the
    // tag field; everything after the adoption flowed normally.
    CHECK(tx.stats().aborted == 1);
    CHECK(tx.stats().completed == 29);
    CHECK(rx0.stats().accepts == 29);
    CHECK(auth1.stats().sessions >= 29);
    CHECK(tx.stats().faulty_tag_regions == 3);
    CHECK(tx.stats().healthy_tag_regions == 29);
}

TEST_CASE("wire trace captures frame boundaries and modification events") {
    Bus bus(kQuantumNs);
    bus.trace.enabled = true;
    SharedLog log;
    const BitTiming timing = BitTiming::for_quanta(10);
    const ChannelKeys ck = make_channel_keys(0x44);

    TransmitterConfig tc;
    tc.traffic = {{0x100, 8, 3, true}};
    tc.keys[0x100] = ck;
    tc.seed = 21;
    TransmitterNode tx("tx0", timing, tc, &log);
    tx.set_trace(&bus.trace);

    AuthenticatorConfig ac;
    ac.keys[0x100] = ck;
    ac.active_ids = {0x100};
    AuthenticatorNode auth("auth0", timing, ac);
    auth.set_trace(&bus.trace);

    ReceiverConfig rc;
    rc.subscriptions = {{0x100, true, 24, ck.group}};
    ReceiverNode rx0("rx0", timing, rc, &log);

    bus.attach(&tx, 0.0);
    bus.attach(&auth, 5.0);
    bus.attach(&rx0, 25.0);

    REQUIRE(run_until(bus, [&] { return tx.done(); }, 500'000));

    std::uint64_t starts = 0, ends = 0, mods = 0;
    for (const auto& ev : bus.trace.events) {
        if (ev.kind == "tx_start") ++starts;
        if (ev.kind == "tx_end") ++ends;
        if (ev.kind == "rbf_dominant" || ev.kind == "rbf_erase") ++mods;
    }
    CHECK(starts == 3);
    CHECK(ends == 3);
    CHECK(mods == auth.stats().flips_dominant + auth.stats().erases);
    CHECK(mods > 0);
    CHECK(bus.trace.emission.size() == bus.now());
}
