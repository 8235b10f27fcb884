// unit_bpmac.cpp — bit-parallel MAC: table derivation, batch vs online,
// blinding cache, and the committed vectors.

#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "json.hpp"

#include "caiba/bpmac.hpp"
#include "caiba/oracles.hpp"

using namespace caiba;

namespace {

const BpMacKeys kKeys{
    parse_key_hex("101112131415161718191a1b1c1d1e1f"),
    parse_key_hex("2f2e2d2c2b2a29282726252423222120"),
};

BitString random_bits(std::mt19937_64& rng, std::size_t n) {
    BitString s;
    for (std::size_t i = 0; i < n; ++i) s.push_back((rng() & 1u) != 0);
    return s;
}

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    REQUIRE_MESSAGE(in.good(), "cannot open ", path);
    return nlohmann::json::parse(in);
}

}  // namespace

TEST_CASE("table derivation costs two cipher calls per bit position") {
    BlockCipher hash(kKeys.hash_key);
    const auto table = derive_table(hash, 47, 24);
    CHECK(hash.call_count() == 2 * 47);
    CHECK(table.bitflip.size() == 47);
    for (auto v : table.bitflip) CHECK(v < (1u << 24));
    CHECK(table.default_tag < (1u << 24));
}

TEST_CASE("bitflip entries are the XOR of the two per-value tags") {
    // Setting bit i in the all-zero message must flip the tag by bitflip[i].
    BpMac mac(kKeys, 47, 24);
    const auto zero = BitString::zeros(47);
    const std::uint32_t base = mac.tag(zero, 7);
    for (unsigned i = 0; i < 47; ++i) {
        auto m = zero;
        m.set(i, true);
        CHECK((mac.tag(m, 7) ^ base) == mac.table().bitflip[i]);
    }
}

TEST_CASE("tags match the definitional reference") {
    std::mt19937_64 rng(21);
    for (unsigned tag_bits : {8u, 16u, 24u}) {
        BpMac mac(kKeys, 47, tag_bits);
        for (int i = 0; i < 50; ++i) {
            const auto msg = random_bits(rng, rng() % 48);
            const std::uint64_t counter = rng() % 1000;
            CAPTURE(tag_bits);
            CAPTURE(msg.to_string());
            CAPTURE(counter);
            CHECK(mac.tag(msg, counter) ==
                  oracles::bpmac_reference(kKeys.hash_key, kKeys.masking_key, 47, tag_bits, msg,
                                           counter));
        }
    }
}

TEST_CASE("the tag is independent of trailing zero bits") {
    // default_tag aggregates all max_bits positions, so a short message and
    // its zero-padded extension agree.
    BpMac mac(kKeys, 47, 24);
    const auto msg = BitString::parse("1011001");
    auto padded = msg;
    while (padded.size() < 47) padded.push_back(false);
    CHECK(mac.tag(msg, 3) == mac.tag(padded, 3));
}

TEST_CASE("online evaluation equals batch on random messages") {
    std::mt19937_64 rng(22);
    BpMac batch(kKeys, 47, 24);
    BpMac online(kKeys, 47, 24);
    for (int i = 0; i < 10'000; ++i) {
        const auto msg = random_bits(rng, 47);
        const std::uint64_t counter = i;
        online.online_begin();
        for (std::size_t b = 0; b < msg.size(); ++b) {
            online.online_feed_bit(msg[b]);
            if (b == 20) online.online_counter(counter);  // nonce known mid-stream
        }
        REQUIRE(online.online_done() == batch.tag(msg, counter));
    }
}

TEST_CASE("online feed costs at most one XOR per set bit plus finalize") {
    BpMacTable table;
    {
        BlockCipher hash(kKeys.hash_key);
        table = derive_table(hash, 47, 24);
    }
    BlockCipher masking(kKeys.masking_key);
    BlindingCache cache;
    std::mt19937_64 rng(23);
    const auto msg = random_bits(rng, 47);
    std::size_t ones = 0;
    for (std::size_t i = 0; i < msg.size(); ++i) ones += msg[i] ? 1 : 0;

    auto st = online_init(table);
    for (std::size_t i = 0; i < msg.size(); ++i) online_feed(table, st, msg[i]);
    online_set_nonce(st, 5);
    (void)online_finalize(table, st, masking, cache);
    CHECK(st.xor_ops == ones + 1);
    CHECK(st.xor_ops <= msg.size() + 1);
}

TEST_CASE("online state enforces its lifecycle") {
    BpMacTable table;
    {
        BlockCipher hash(kKeys.hash_key);
        table = derive_table(hash, 8, 24);
    }
    BlockCipher masking(kKeys.masking_key);
    BlindingCache cache;

    SUBCASE("feed past max_bits") {
        auto st = online_init(table);
        for (int i = 0; i < 8; ++i) online_feed(table, st, true);
        CHECK_THROWS_AS(online_feed(table, st, true), std::length_error);
    }
    SUBCASE("finalize without a nonce") {
        auto st = online_init(table);
        online_feed(table, st, true);
        CHECK_THROWS_AS(online_finalize(table, st, masking, cache), std::logic_error);
    }
    SUBCASE("feed after finalize") {
        auto st = online_init(table);
        online_set_nonce(st, 1);
        (void)online_finalize(table, st, masking, cache);
        CHECK_THROWS_AS(online_feed(table, st, false), std::logic_error);
    }
    SUBCASE("double finalize") {
        auto st = online_init(table);
        online_set_nonce(st, 1);
        (void)online_finalize(table, st, masking, cache);
        CHECK_THROWS_AS(online_finalize(table, st, masking, cache), std::logic_error);
    }
}

TEST_CASE("derive_table validates parameters") {
    BlockCipher hash(kKeys.hash_key);
    CHECK_THROWS_AS(derive_table(hash, 1u << 17, 24), std::length_error);
    CHECK_THROWS_AS(derive_table(hash, 8, 0), std::invalid_argument);
    CHECK_THROWS_AS(derive_table(hash, 8, 25), std::invalid_argument);
}

TEST_CASE("tag_batch rejects over-long messages") {
    BpMacTable table;
    {
        BlockCipher hash(kKeys.hash_key);
        table = derive_table(hash, 8, 24);
    }
    BlockCipher masking(kKeys.masking_key);
    BlindingCache cache;
    CHECK_THROWS_AS(tag_batch(table, masking, cache, BitString::zeros(9), 0), std::length_error);
}

TEST_CASE("blinding cache serves five counters per cipher call") {
    BlockCipher masking(kKeys.masking_key);
    BlindingCache cache;
    for (std::uint64_t c = 0; c < 100; ++c) {
        const auto cached = cache.get(masking, c, 24);
        BlockCipher fresh(kKeys.masking_key);
        CHECK(cached == blinding_tag(fresh, c, 24));
    }
    CHECK(cache.misses() == 20);
    CHECK(cache.hits() == 80);
    CHECK(masking.call_count() == 20);

    // Revisiting the cached block is free; jumping away costs a miss.
    (void)cache.get(masking, 99, 24);
    CHECK(cache.hits() == 81);
    (void)cache.get(masking, 5, 24);
    CHECK(cache.misses() == 21);
}

TEST_CASE("blinding slots come from consecutive 3-byte slices") {
    // Counters 5k..5k+4 share one encryption; their tags are bytes
    // [0..2], [3..5], [6..8], [9..11], [12..14] of that block.
    BlockCipher masking(kKeys.masking_key);
    Block input{};
    const auto ctr = be64(7);  // block index for counters 35..39
    std::copy(ctr.begin(), ctr.end(), input.begin() + 8);
    const Block enc = masking.encrypt(input);
    for (unsigned slot = 0; slot < 5; ++slot) {
        const std::uint32_t expect = (static_cast<std::uint32_t>(enc[3 * slot]) << 16) |
                                     (static_cast<std::uint32_t>(enc[3 * slot + 1]) << 8) |
                                     enc[3 * slot + 2];
        CHECK(blinding_tag(masking, 35 + slot, 24) == expect);
    }
}

TEST_CASE("distinct nonces give distinct tags almost surely") {
    BpMac mac(kKeys, 47, 24);
    const auto msg = BitString::parse("10110011101");
    std::set<std::uint32_t> tags;
    for (std::uint64_t c = 0; c < 101; ++c) tags.insert(mac.tag(msg, c));
    CHECK(tags.size() >= 99);
}

TEST_CASE("bpmac golden vectors") {
    const auto root = load_json(CAIBA_SOURCE_DIR "/vectors/bpmac_vectors.json");
    const BpMacKeys keys{
        parse_key_hex(root.at("hash_key").get<std::string>()),
        parse_key_hex(root.at("masking_key").get<std::string>()),
    };
    const unsigned max_bits = root.at("max_bits").get<unsigned>();
    for (const auto& c : root.at("cases")) {
        const unsigned tag_bits = c.at("tag_bits").get<unsigned>();
        BpMac mac(keys, max_bits, tag_bits);
        const auto msg = BitString::parse(c.at("message").get<std::string>());
        const auto counter = c.at("counter").get<std::uint64_t>();
        const auto expected =
            static_cast<std::uint32_t>(std::stoul(c.at("tag").get<std::string>(), nullptr, 16));
        CAPTURE(c.dump());
        CHECK(mac.tag(msg, counter) == expected);
    }
}
