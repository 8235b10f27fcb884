// oracles.cpp — reference implementations and golden-vector generation.

#include "caiba/oracles.hpp"

#include <cstdio>
#include <random>

#include "json.hpp"

namespace caiba::oracles {

using ordered_json = nlohmann::ordered_json;

std::uint16_t crc15_long_division(const BitString& bits) {
    // Generator polynomial, highest degree first: x^15 + x^14 + x^10 + x^8 +
    // x^7 + x^4 + x^3 + 1.
    static const BitString gen = BitString::parse("1100010110011001");
    // Dividend: message followed by 15 zero bits.
    std::vector<std::uint8_t> rem;
    rem.reserve(bits.size() + 15);
    for (std::size_t i = 0; i < bits.size(); ++i) rem.push_back(bits[i] ? 1 : 0);
    for (int i = 0; i < 15; ++i) rem.push_back(0);
    for (std::size_t i = 0; i + 15 < rem.size(); ++i) {
        if (!rem[i]) continue;
        for (std::size_t j = 0; j < gen.size(); ++j) rem[i + j] ^= gen[j] ? 1 : 0;
    }
    std::uint16_t crc = 0;
    for (std::size_t i = rem.size() - 15; i < rem.size(); ++i) {
        crc = static_cast<std::uint16_t>((crc << 1) | rem[i]);
    }
    return crc;
}

Block cmac_reference(const Key128& key, const std::vector<std::uint8_t>& msg) {
    BlockCipher aes(key);

    auto left_shift = [](const Block& in) {
        Block out{};
        for (std::size_t i = 0; i < 16; ++i) {
            out[i] = static_cast<std::uint8_t>(in[i] << 1);
            if (i + 1 < 16 && (in[i + 1] & 0x80u)) out[i] |= 1u;
        }
        return out;
    };

    // Generate_Subkey (RFC 4493, figure 2.2).
    const Block l = aes.encrypt(Block{});
    Block sk1 = left_shift(l);
    if (l[0] & 0x80u) sk1[15] ^= 0x87u;
    Block sk2 = left_shift(sk1);
    if (sk1[0] & 0x80u) sk2[15] ^= 0x87u;

    // AES-CMAC (RFC 4493, figure 2.3).
    std::size_t n = (msg.size() + 15) / 16;
    bool flag = false;
    if (n == 0) {
        n = 1;
    } else {
        flag = (msg.size() % 16 == 0);
    }

    Block m_last{};
    if (flag) {
        for (std::size_t i = 0; i < 16; ++i) m_last[i] = msg[(n - 1) * 16 + i] ^ sk1[i];
    } else {
        Block padded{};
        const std::size_t rem = msg.size() - (n - 1) * 16;
        for (std::size_t i = 0; i < rem; ++i) padded[i] = msg[(n - 1) * 16 + i];
        padded[rem] = 0x80u;
        for (std::size_t i = 0; i < 16; ++i) m_last[i] = padded[i] ^ sk2[i];
    }

    Block x{};
    for (std::size_t b = 0; b + 1 < n; ++b) {
        Block y;
        for (std::size_t i = 0; i < 16; ++i) y[i] = x[i] ^ msg[b * 16 + i];
        x = aes.encrypt(y);
    }
    Block y;
    for (std::size_t i = 0; i < 16; ++i) y[i] = x[i] ^ m_last[i];
    return aes.encrypt(y);
}

std::uint32_t bpmac_reference(const Key128& hash_key, const Key128& masking_key,
                              unsigned max_bits, unsigned tag_bits, const BitString& message,
                              std::uint64_t counter) {
    BlockCipher hash(hash_key);
    BlockCipher mask(masking_key);

    auto bit_tag = [&](std::uint32_t index, bool value) {
        Block blk{};
        blk[0] = static_cast<std::uint8_t>(index >> 24);
        blk[1] = static_cast<std::uint8_t>(index >> 16);
        blk[2] = static_cast<std::uint8_t>(index >> 8);
        blk[3] = static_cast<std::uint8_t>(index);
        blk[15] = value ? 1 : 0;
        const Block e = hash.encrypt(blk);
        const std::uint32_t t24 = (static_cast<std::uint32_t>(e[0]) << 16) |
                                  (static_cast<std::uint32_t>(e[1]) << 8) | e[2];
        return t24 >> (24 - tag_bits);
    };

    std::uint32_t acc = 0;
    for (unsigned i = 0; i < max_bits; ++i) {
        const bool bit = i < message.size() && message[i];
        acc ^= bit_tag(i, bit);
    }

    Block in{};
    const auto idx = be64(counter / 5);
    for (std::size_t i = 0; i < 8; ++i) in[8 + i] = idx[i];
    const Block out = mask.encrypt(in);
    const std::size_t slot = static_cast<std::size_t>(counter % 5);
    const std::uint32_t blind24 = (static_cast<std::uint32_t>(out[3 * slot]) << 16) |
                                  (static_cast<std::uint32_t>(out[3 * slot + 1]) << 8) |
                                  out[3 * slot + 2];
    return acc ^ (blind24 >> (24 - tag_bits));
}

namespace {

std::string bits_hex_u16(std::uint16_t v) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%04x", v);
    return buf;
}

std::string tag_hex_u32(std::uint32_t v, unsigned bits) {
    char buf[12];
    std::snprintf(buf, sizeof buf, "0x%0*x", static_cast<int>((bits + 3) / 4), v);
    return buf;
}

BitString random_bits(std::mt19937_64& rng, std::size_t n) {
    BitString s;
    for (std::size_t i = 0; i < n; ++i) s.push_back((rng() & 1u) != 0);
    return s;
}

}  // namespace

std::string crc15_vectors_json() {
    ordered_json root;
    root["algorithm"] = "CRC-15/CAN";
    root["polynomial"] = "0x4599";
    root["init"] = "0x0000";
    ordered_json cases = ordered_json::array();

    auto add = [&](const std::string& note, const BitString& bits) {
        ordered_json c;
        c["note"] = note;
        c["bits"] = bits.to_string();
        c["crc"] = bits_hex_u16(crc15_long_division(bits));
        cases.push_back(c);
    };

    add("empty", BitString{});
    add("all-zero 19 bits", BitString::zeros(19));
    add("single one", BitString::parse("1"));
    add("alternating 16 bits", BitString::parse("1010101010101010"));
    // Frame prefix SOF..data for ID 0x123, DLC 1, data 0xAB.
    {
        BitString prefix;
        prefix.push_back(false);
        prefix.append(BitString::from_uint(0x123, 11));
        prefix.push_back(false);
        prefix.push_back(false);
        prefix.push_back(false);
        prefix.append(BitString::from_uint(1, 4));
        prefix.append(BitString::from_uint(0xAB, 8));
        add("frame prefix id=0x123 dlc=1 data=0xab", prefix);
    }
    std::mt19937_64 rng(0x6372633135ull);  // "crc15"
    for (int i = 0; i < 8; ++i) {
        const std::size_t n = 8 + static_cast<std::size_t>(rng() % 90);
        add("random", random_bits(rng, n));
    }
    root["cases"] = cases;
    return root.dump(2) + "\n";
}

std::string cmac_vectors_json() {
    ordered_json root;
    root["algorithm"] = "AES-128-CMAC (RFC 4493)";
    ordered_json cases = ordered_json::array();

    auto add = [&](const std::string& note, const Key128& key,
                   const std::vector<std::uint8_t>& msg) {
        ordered_json c;
        c["note"] = note;
        c["key"] = to_hex(key);
        c["message"] = to_hex(msg);
        c["cmac"] = to_hex(cmac_reference(key, msg));
        cases.push_back(c);
    };

    // The four examples from RFC 4493 section 4.
    const Key128 rfc_key = parse_key_hex("2b7e151628aed2a6abf7158809cf4f3c");
    const std::vector<std::uint8_t> rfc_msg = {
        0x6b, 0xc1, 0xbe, 0xe2, 0x2e, 0x40, 0x9f, 0x96, 0xe9, 0x3d, 0x7e, 0x11, 0x73, 0x93,
        0x17, 0x2a, 0xae, 0x2d, 0x8a, 0x57, 0x1e, 0x03, 0xac, 0x9c, 0x9e, 0xb7, 0x6f, 0xac,
        0x45, 0xaf, 0x8e, 0x51, 0x30, 0xc8, 0x1c, 0x46, 0xa3, 0x5c, 0xe4, 0x11, 0xe5, 0xfb,
        0xc1, 0x19, 0x1a, 0x0a, 0x52, 0xef, 0xf6, 0x9f, 0x24, 0x45, 0xdf, 0x4f, 0x9b, 0x17,
        0xad, 0x2b, 0x41, 0x7b, 0xe6, 0x6c, 0x37, 0x10};
    add("rfc4493 example 1 (len 0)", rfc_key, {});
    add("rfc4493 example 2 (len 16)", rfc_key,
        std::vector<std::uint8_t>(rfc_msg.begin(), rfc_msg.begin() + 16));
    add("rfc4493 example 3 (len 40)", rfc_key,
        std::vector<std::uint8_t>(rfc_msg.begin(), rfc_msg.begin() + 40));
    add("rfc4493 example 4 (len 64)", rfc_key, rfc_msg);

    // Protocol-shaped inputs: can_id_16be || payload || counter_64be.
    const Key128 group_key = parse_key_hex("000102030405060708090a0b0c0d0e0f");
    auto protocol_msg = [](std::uint16_t id, std::vector<std::uint8_t> data, std::uint64_t ctr) {
        std::vector<std::uint8_t> m;
        m.push_back(static_cast<std::uint8_t>(id >> 8));
        m.push_back(static_cast<std::uint8_t>(id & 0xFF));
        m.insert(m.end(), data.begin(), data.end());
        const auto c = be64(ctr);
        m.insert(m.end(), c.begin(), c.end());
        return m;
    };
    add("protocol id=0x123 data=a5 ctr=1", group_key, protocol_msg(0x123, {0xA5}, 1));
    add("protocol id=0x123 data=a5 ctr=2", group_key, protocol_msg(0x123, {0xA5}, 2));
    add("protocol id=0x7ff data=deadbeef90 ctr=2^32", group_key,
        protocol_msg(0x7FF, {0xDE, 0xAD, 0xBE, 0xEF, 0x90}, 1ull << 32));

    root["cases"] = cases;
    return root.dump(2) + "\n";
}

std::string bpmac_vectors_json() {
    ordered_json root;
    root["algorithm"] = "bit-parallel MAC (per-bit PRF XOR + blinding slice)";
    const Key128 hash_key = parse_key_hex("101112131415161718191a1b1c1d1e1f");
    const Key128 masking_key = parse_key_hex("2f2e2d2c2b2a29282726252423222120");
    root["hash_key"] = to_hex(hash_key);
    root["masking_key"] = to_hex(masking_key);
    root["max_bits"] = 47;
    ordered_json cases = ordered_json::array();

    auto add = [&](const std::string& note, unsigned tag_bits, const BitString& msg,
                   std::uint64_t counter) {
        ordered_json c;
        c["note"] = note;
        c["tag_bits"] = tag_bits;
        c["message"] = msg.to_string();
        c["counter"] = counter;
        c["tag"] = tag_hex_u32(bpmac_reference(hash_key, masking_key, 47, tag_bits, msg, counter), tag_bits);
        cases.push_back(c);
    };

    add("empty message", 24, BitString{}, 0);
    add("single zero bit", 24, BitString::parse("0"), 0);
    add("single one bit", 24, BitString::parse("1"), 0);
    add("counter advances within one blinding block", 24, BitString::parse("1"), 4);
    add("counter crosses blinding block", 24, BitString::parse("1"), 5);
    add("11-bit id only", 24, BitString::from_uint(0x123, 11), 7);
    add("full 47-bit message", 24,
        BitString::parse("10110111000101011101000110010110101001110101011"), 12345);
    add("full 47-bit message, 16-bit tags", 16,
        BitString::parse("10110111000101011101000110010110101001110101011"), 12345);
    add("full 47-bit message, 8-bit tags", 8,
        BitString::parse("10110111000101011101000110010110101001110101011"), 12345);
    std::mt19937_64 rng(0x62706d6163ull);  // "bpmac"
    for (int i = 0; i < 6; ++i) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng() % 47);
        add("random", 24, random_bits(rng, n), rng() % 1000);
    }

    root["cases"] = cases;
    return root.dump(2) + "\n";
}

}  // namespace caiba::oracles
