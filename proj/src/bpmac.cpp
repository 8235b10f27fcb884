// bpmac.cpp — bit-parallel MAC: table derivation, blinding, batch + online paths.

#include "caiba/bpmac.hpp"

#include <stdexcept>

namespace caiba {

namespace {

// Input block for the bit-tag PRF: message bit index i (32-bit big-endian)
// in bytes 0..3, bit value in byte 15.
Block encode_index(std::uint32_t index, bool value) {
    Block blk{};
    blk[0] = static_cast<std::uint8_t>(index >> 24);
    blk[1] = static_cast<std::uint8_t>(index >> 16);
    blk[2] = static_cast<std::uint8_t>(index >> 8);
    blk[3] = static_cast<std::uint8_t>(index);
    blk[15] = value ? 1 : 0;
    return blk;
}

// First three bytes of a cipher output, narrowed to the configured width.
std::uint32_t truncate_tag(const Block& b, unsigned tag_bits) {
    const std::uint32_t t24 = (static_cast<std::uint32_t>(b[0]) << 16) |
                              (static_cast<std::uint32_t>(b[1]) << 8) | b[2];
    return t24 >> (24 - tag_bits);
}

void check_tag_bits(unsigned tag_bits) {
    if (tag_bits == 0 || tag_bits > 24) throw std::invalid_argument("bpmac: tag_bits must be 1..24");
}

}  // namespace

BpMacTable derive_table(const BlockCipher& hash_cipher, unsigned max_bits, unsigned tag_bits) {
    check_tag_bits(tag_bits);
    if (max_bits > (1u << 16)) throw std::length_error("bpmac: max_bits exceeds 2^16");
    BpMacTable t;
    t.max_bits = max_bits;
    t.tag_bits = tag_bits;
    t.bitflip.resize(max_bits);
    for (unsigned i = 0; i < max_bits; ++i) {
        const Block e0 = hash_cipher.encrypt(encode_index(i, false));
        const Block e1 = hash_cipher.encrypt(encode_index(i, true));
        const std::uint32_t t0 = truncate_tag(e0, tag_bits);
        t.default_tag ^= t0;
        t.bitflip[i] = t0 ^ truncate_tag(e1, tag_bits);
    }
    return t;
}

std::uint32_t blinding_tag(const BlockCipher& masking_cipher, std::uint64_t counter,
                           unsigned tag_bits) {
    check_tag_bits(tag_bits);
    Block in{};
    const auto idx = be64(counter / 5);
    for (std::size_t i = 0; i < 8; ++i) in[8 + i] = idx[i];
    const Block out = masking_cipher.encrypt(in);
    const std::size_t slot = static_cast<std::size_t>(counter % 5);
    const std::uint32_t t24 = (static_cast<std::uint32_t>(out[3 * slot]) << 16) |
                              (static_cast<std::uint32_t>(out[3 * slot + 1]) << 8) |
                              out[3 * slot + 2];
    return t24 >> (24 - tag_bits);
}

std::uint32_t BlindingCache::get(const BlockCipher& masking_cipher, std::uint64_t counter,
                                 unsigned tag_bits) {
    check_tag_bits(tag_bits);
    const std::uint64_t block_index = counter / 5;
    const std::size_t slot = static_cast<std::size_t>(counter % 5);
    if (!valid_ || cached_block_ != block_index) {
        Block in{};
        const auto idx = be64(block_index);
        for (std::size_t i = 0; i < 8; ++i) in[8 + i] = idx[i];
        const Block out = masking_cipher.encrypt(in);
        for (std::size_t s = 0; s < 5; ++s) {
            slots_[s] = (static_cast<std::uint32_t>(out[3 * s]) << 16) |
                        (static_cast<std::uint32_t>(out[3 * s + 1]) << 8) | out[3 * s + 2];
        }
        cached_block_ = block_index;
        valid_ = true;
        ++misses_;
    } else {
        ++hits_;
    }
    return slots_[slot] >> (24 - tag_bits);
}

std::uint32_t tag_batch(const BpMacTable& table, const BlockCipher& masking_cipher,
                        BlindingCache& cache, const BitString& message, std::uint64_t counter) {
    if (message.size() > table.max_bits) throw std::length_error("bpmac: message exceeds max_bits");
    std::uint32_t acc = table.default_tag;
    for (std::size_t i = 0; i < message.size(); ++i) {
        if (message[i]) acc ^= table.bitflip[i];
    }
    return acc ^ cache.get(masking_cipher, counter, table.tag_bits);
}

OnlineState online_init(const BpMacTable& table) {
    OnlineState st;
    st.acc = table.default_tag;
    return st;
}

void online_feed(const BpMacTable& table, OnlineState& st, bool bit) {
    if (st.finalized) throw std::logic_error("bpmac: feed after finalize");
    if (st.next_index >= table.max_bits) throw std::length_error("bpmac: message exceeds max_bits");
    if (bit) {
        st.acc ^= table.bitflip[st.next_index];
        ++st.xor_ops;
    }
    ++st.next_index;
}

void online_set_nonce(OnlineState& st, std::uint64_t counter) {
    if (st.finalized) throw std::logic_error("bpmac: nonce set after finalize");
    st.counter = counter;
    st.have_counter = true;
}

std::uint32_t online_finalize(const BpMacTable& table, OnlineState& st,
                              const BlockCipher& masking_cipher, BlindingCache& cache) {
    if (st.finalized) throw std::logic_error("bpmac: double finalize");
    if (!st.have_counter) throw std::logic_error("bpmac: finalize without nonce");
    st.acc ^= cache.get(masking_cipher, st.counter, table.tag_bits);
    ++st.xor_ops;
    st.finalized = true;
    return st.acc;
}

BpMac::BpMac(const BpMacKeys& keys, unsigned max_bits, unsigned tag_bits)
    : masking_(keys.masking_key), table_([&] {
          BlockCipher hash(keys.hash_key);
          return derive_table(hash, max_bits, tag_bits);
      }()) {
    state_ = online_init(table_);
    state_.finalized = true;  // no message in flight until online_begin()
}

std::uint32_t BpMac::tag(const BitString& message, std::uint64_t counter) {
    return tag_batch(table_, masking_, cache_, message, counter);
}

}  // namespace caiba
