// oracles.hpp
//
// Reference oracles: small, independent re-implementations of the checkable
// math (CRC-15 by polynomial long division, one-shot CMAC, the definitional
// bit-parallel MAC). They exist to generate the committed golden-vector
// files and to cross-check the production code paths in tests — nothing in
// the protocol stack calls them.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caiba/bits.hpp"
#include "caiba/crypto.hpp"

namespace caiba::oracles {

// CRC-15 as polynomial long division over GF(2): append 15 zero bits and
// reduce by x^15+x^14+x^10+x^8+x^7+x^4+x^3+1.
std::uint16_t crc15_long_division(const BitString& bits);

// One-shot AES-CMAC, written against RFC 4493 step by step.
Block cmac_reference(const Key128& key, const std::vector<std::uint8_t>& msg);

// Definitional bit-parallel tag: XOR of per-bit PRF outputs over all table
// positions (absent bits contribute their zero-valued bit tag), plus the
// blinding slice — no precomputed table, no accumulator algebra.
std::uint32_t bpmac_reference(const Key128& hash_key, const Key128& masking_key,
                              unsigned max_bits, unsigned tag_bits, const BitString& message,
                              std::uint64_t counter);

// Golden-vector generators; each returns the JSON text written to
// crc15_vectors.json / cmac_vectors.json / bpmac_vectors.json.
std::string crc15_vectors_json();
std::string cmac_vectors_json();
std::string bpmac_vectors_json();

}  // namespace caiba::oracles
