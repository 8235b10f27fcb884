// unit_secoc.cpp — freshness reconstruction, verification, counter reset.

#include <random>

#include "doctest.h"

#include "caiba/oracles.hpp"
#include "caiba/secoc.hpp"

using namespace caiba;

namespace {
const Key128 kGroupKey = parse_key_hex("a0a1a2a3a4a5a6a7a8a9aaabacadaeaf");
}

TEST_CASE("counter reconstruction picks the next match above last_accepted") {
    CHECK(reconstruct_counter(5, 6) == 6);
    CHECK(reconstruct_counter(5, 5) == 21);   // wrapped a full LSB period
    CHECK(reconstruct_counter(30, 2) == 34);  // 34 & 15 == 2
    CHECK(reconstruct_counter(0, 1) == 1);
    CHECK(reconstruct_counter(0, 0) == 16);
    CHECK(reconstruct_counter(15, 0) == 16);
}

TEST_CASE("counter reconstruction property: minimal strictly-greater match") {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 5000; ++i) {
        const std::uint64_t last = rng() % 1'000'000;
        const std::uint8_t lsb = static_cast<std::uint8_t>(rng() % 16);
        const std::uint64_t c = reconstruct_counter(last, lsb);
        CHECK(c > last);
        CHECK((c & 15) == lsb);
        CHECK(c - last <= 16);
    }
}

TEST_CASE("counter reconstruction overflow") {
    const std::uint64_t top = ~0ull;
    CHECK_THROWS_AS(reconstruct_counter(top, 3), CounterOverflow);
    CHECK_THROWS_AS(reconstruct_counter(top - 2, static_cast<std::uint8_t>((top - 2) & 15)),
                    CounterOverflow);
    // Largest representable reconstruction still works.
    CHECK(reconstruct_counter(top - 1, 15) == top);
}

TEST_CASE("reset_counter increments the MSB and zeroes the rest") {
    const auto r = reset_counter(0x7, 4);
    CHECK(r.new_base == 0x0000000100000000ull);
    CHECK(r.msb_value == 1);

    const auto r2 = reset_counter(0x00000002deadbeefull, 4);
    CHECK(r2.new_base == 0x0000000300000000ull);
    CHECK(r2.msb_value == 3);
}

TEST_CASE("reset_counter exhaustion") {
    CHECK_THROWS_AS(reset_counter(0xFFFFFFFF00000001ull, 4), CounterOverflow);
}

TEST_CASE("integrity tag is deterministic and counter-sensitive") {
    SecocContext ctx(kGroupKey, 24);
    const auto data = BitString::parse("1100101011110000");
    const auto t1 = ctx.integrity_tag(0x123, data, 41);
    CHECK(t1 == ctx.integrity_tag(0x123, data, 41));
    CHECK(t1 != ctx.integrity_tag(0x123, data, 42));
    CHECK(t1 != ctx.integrity_tag(0x124, data, 41));
    CHECK(t1 < (1u << 24));
}

TEST_CASE("integrity tag matches a direct CMAC computation") {
    SecocContext ctx(kGroupKey, 24);
    const auto data = BitString::parse("1011 0010");  // parse skips separators
    REQUIRE(data.size() == 8);
    std::vector<std::uint8_t> msg;
    msg.push_back(0x01);
    msg.push_back(0x23);
    const auto data_bytes = data.to_bytes();
    msg.insert(msg.end(), data_bytes.begin(), data_bytes.end());
    const auto ctr = be64(99);
    msg.insert(msg.end(), ctr.begin(), ctr.end());
    const Block full = oracles::cmac_reference(kGroupKey, msg);
    CHECK(ctx.integrity_tag(0x123, data, 99) == Cmac::truncate_bits(full, 24));
}

TEST_CASE("SecocContext validates the tag width") {
    CHECK_NOTHROW(SecocContext(kGroupKey, 8));
    CHECK_NOTHROW(SecocContext(kGroupKey, 16));
    CHECK_NOTHROW(SecocContext(kGroupKey, 24));
    CHECK_THROWS_AS(SecocContext(kGroupKey, 12), std::invalid_argument);
    CHECK_THROWS_AS(SecocContext(kGroupKey, 0), std::invalid_argument);
}

TEST_CASE("verification accepts genuine frames and tracks failures") {
    SecocContext ctx(kGroupKey, 24);
    ReceiverChannelState rx;

    // Sender side: counters 1, 2, 3 on CAN ID 0x155.
    const auto data = BitString::parse("101010100101");
    for (std::uint64_t c = 1; c <= 3; ++c) {
        const auto tag = ctx.integrity_tag(0x155, data, c);
        const auto res = secoc_verify(ctx, 0x155, data, static_cast<std::uint8_t>(c & 15), tag, rx);
        CHECK(res.accepted);
        CHECK(res.counter == c);
        CHECK(rx.last_accepted == c);
        CHECK(rx.consecutive_failures == 0);
    }

    // Tampered payload: reject, streak counts up.
    auto bad = data;
    bad.flip(0);
    const auto good_tag = ctx.integrity_tag(0x155, data, 4);
    for (int i = 1; i <= 3; ++i) {
        const auto res = secoc_verify(ctx, 0x155, bad, 4 & 15, good_tag, rx);
        CHECK_FALSE(res.accepted);
        CHECK(rx.consecutive_failures == static_cast<std::uint32_t>(i));
        CHECK(rx.last_accepted == 3);  // unchanged on reject
    }

    // A genuine frame clears the streak.
    const auto res = secoc_verify(ctx, 0x155, data, 4 & 15, good_tag, rx);
    CHECK(res.accepted);
    CHECK(rx.consecutive_failures == 0);
    CHECK(rx.last_accepted == 4);
}

TEST_CASE("replayed frames fail verification") {
    SecocContext ctx(kGroupKey, 24);
    ReceiverChannelState rx;
    const auto data = BitString::parse("111000111000");
    const auto tag5 = ctx.integrity_tag(0x20, data, 5);
    CHECK(secoc_verify(ctx, 0x20, data, 5, tag5, rx).accepted);
    // Same wire bits again: freshness reconstructs to 21, MAC no longer matches.
    const auto replay = secoc_verify(ctx, 0x20, data, 5, tag5, rx);
    CHECK_FALSE(replay.accepted);
    CHECK(replay.counter == 21);
}

TEST_CASE("sender/receiver stay in sync across a counter reset") {
    SecocContext ctx(kGroupKey, 24);
    ReceiverChannelState rx;
    const auto data = BitString::parse("0110");

    std::uint64_t sender = 1;
    for (; sender <= 10; ++sender) {
        const auto tag = ctx.integrity_tag(0x30, data, sender);
        CHECK(secoc_verify(ctx, 0x30, data, sender & 15, tag, rx).accepted);
    }

    // Reset as the recovery path does, then receiver adopts base - 1.
    const auto reset = reset_counter(sender, 4);
    rx.last_accepted = reset.new_base - 1;
    rx.consecutive_failures = 0;
    const auto tag = ctx.integrity_tag(0x30, data, reset.new_base);
    const auto res =
        secoc_verify(ctx, 0x30, data, static_cast<std::uint8_t>(reset.new_base & 15), tag, rx);
    CHECK(res.accepted);
    CHECK(res.counter == reset.new_base);
}
