// secoc.hpp
//
// SecOC-profile receiver side: truncated CMAC over (CAN ID, payload,
// monotonic counter), freshness reconstruction from the 4 transmitted
// counter bits, and the counter-reset arithmetic used by the recovery
// protocol. Receivers here are deliberately plain — they hold a group key,
// a last-accepted counter, and nothing else, so the same verification code
// runs whether or not an authenticator rewrites tags upstream.

#pragma once

#include <cstdint>
#include <stdexcept>

#include "caiba/bits.hpp"
#include "caiba/crypto.hpp"

namespace caiba {

class CounterOverflow : public std::runtime_error {
public:
    CounterOverflow() : std::runtime_error("secoc: counter space exhausted") {}
};

// Smallest counter value greater than last_accepted whose low 4 bits equal
// lsb. Throws CounterOverflow when the 64-bit counter space runs out.
std::uint64_t reconstruct_counter(std::uint64_t last_accepted, std::uint8_t lsb);

// Counter-reset step: treat the msb_bytes most-significant bytes as an
// integer, increment it, zero the remainder.
struct CounterReset {
    std::uint64_t new_base = 0;  // counter value of the first post-reset frame
    std::uint32_t msb_value = 0;  // incremented most-significant-byte value (what gets announced)
};
CounterReset reset_counter(std::uint64_t counter, unsigned msb_bytes = 4);

// Group-keyed integrity MAC for one CAN ID.
class SecocContext {
public:
    SecocContext(const Key128& group_key, unsigned tag_width);

    // truncate(CMAC(can_id_16be || app_data_bytes || counter_64be))
    std::uint32_t integrity_tag(std::uint16_t can_id, const BitString& app_data,
                                std::uint64_t counter) const;

    unsigned tag_width() const { return tag_width_; }

private:
    Cmac cmac_;
    unsigned tag_width_;
};

struct ReceiverChannelState {
    std::uint64_t last_accepted = 0;
    std::uint32_t consecutive_failures = 0;
};

struct VerifyResult {
    bool accepted = false;
    std::uint64_t counter = 0;  // reconstructed freshness value
};

// Recompute the tag under the reconstructed counter and compare
// (constant-shape: the full tag is always compared). Accept advances
// last_accepted and clears the failure streak; Reject increments it.
VerifyResult secoc_verify(const SecocContext& ctx, std::uint16_t can_id, const BitString& app_data,
                          std::uint8_t counter_lsb, std::uint32_t tag,
                          ReceiverChannelState& state);

}  // namespace caiba
