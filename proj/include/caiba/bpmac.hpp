// bpmac.hpp
//
// Bit-parallel Carter–Wegman MAC over short messages. Keying splits into a
// hash key (k1) that derives the per-bit correction table and a masking key
// (k2) that generates one-time blinding tags from a nonce counter.
//
// The table is immutable after derivation: the tag of a message is
//
//     tag = default_tag XOR (bitflip[i] for every set message bit i)
//           XOR blinding_tag(counter)
//
// which the online path evaluates with one conditional XOR per received bit
// and a single XOR at finalization — cheap enough to run between a bit's
// sample point and the next bit's drive window.

#pragma once

#include <cstdint>
#include <vector>

#include "caiba/bits.hpp"
#include "caiba/crypto.hpp"

namespace caiba {

struct BpMacKeys {
    Key128 hash_key{};     // k1: bit-tag derivation
    Key128 masking_key{};  // k2: blinding tags
};

struct BpMacTable {
    unsigned max_bits = 0;
    unsigned tag_bits = 24;
    std::uint32_t default_tag = 0;        // tag of the all-zero message, pre-blinding
    std::vector<std::uint32_t> bitflip;   // max_bits entries, values < 2^tag_bits
};

// Precompute the per-bit table: 2 block encryptions per message bit.
// max_bits must be <= 2^16.
BpMacTable derive_table(const BlockCipher& hash_cipher, unsigned max_bits, unsigned tag_bits);

// Uncached blinding tag: slot (counter mod 5) of E_k2(counter / 5).
std::uint32_t blinding_tag(const BlockCipher& masking_cipher, std::uint64_t counter,
                           unsigned tag_bits);

// Five blinding tags come out of each cipher call; consecutive counters hit
// the cache four times out of five.
class BlindingCache {
public:
    std::uint32_t get(const BlockCipher& masking_cipher, std::uint64_t counter, unsigned tag_bits);

    std::uint64_t hits() const { return hits_; }
    std::uint64_t misses() const { return misses_; }

private:
    bool valid_ = false;
    std::uint64_t cached_block_ = 0;
    std::array<std::uint32_t, 5> slots_{};  // 24-bit slot values
    std::uint64_t hits_ = 0;
    std::uint64_t misses_ = 0;
};

std::uint32_t tag_batch(const BpMacTable& table, const BlockCipher& masking_cipher,
                        BlindingCache& cache, const BitString& message, std::uint64_t counter);

// Incremental evaluation; single owner, bits fed in index order.
struct OnlineState {
    std::uint32_t acc = 0;
    unsigned next_index = 0;
    std::uint64_t counter = 0;
    bool have_counter = false;
    bool finalized = false;
    std::uint64_t xor_ops = 0;  // accumulator XORs (feed + finalize)
};

OnlineState online_init(const BpMacTable& table);
void online_feed(const BpMacTable& table, OnlineState& st, bool bit);
void online_set_nonce(OnlineState& st, std::uint64_t counter);
std::uint32_t online_finalize(const BpMacTable& table, OnlineState& st,
                              const BlockCipher& masking_cipher, BlindingCache& cache);

// Everything a node needs to produce or reproduce source tags for one
// CAN ID: table, masking cipher, blinding cache, and one online state.
class BpMac {
public:
    BpMac(const BpMacKeys& keys, unsigned max_bits, unsigned tag_bits);

    std::uint32_t tag(const BitString& message, std::uint64_t counter);

    void online_begin() { state_ = online_init(table_); }
    void online_feed_bit(bool bit) { online_feed(table_, state_, bit); }
    void online_counter(std::uint64_t c) { online_set_nonce(state_, c); }
    std::uint32_t online_done() { return online_finalize(table_, state_, masking_, cache_); }

    const BpMacTable& table() const { return table_; }
    const BlockCipher& masking_cipher() const { return masking_; }
    const BlindingCache& cache() const { return cache_; }

private:
    BlockCipher masking_;
    BpMacTable table_;
    BlindingCache cache_;
    OnlineState state_;
};

}  // namespace caiba
