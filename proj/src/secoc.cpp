// secoc.cpp — truncated-CMAC verification and freshness handling.

#include "caiba/secoc.hpp"

#include <vector>

namespace caiba {

std::uint64_t reconstruct_counter(std::uint64_t last_accepted, std::uint8_t lsb) {
    if (last_accepted == UINT64_MAX) throw CounterOverflow();
    const std::uint64_t next = last_accepted + 1;
    const std::uint64_t step = (static_cast<std::uint64_t>(lsb & 0x0F) - next) & 0x0F;
    if (next > UINT64_MAX - step) throw CounterOverflow();
    return next + step;
}

CounterReset reset_counter(std::uint64_t counter, unsigned msb_bytes) {
    if (msb_bytes == 0 || msb_bytes > 4) throw std::invalid_argument("reset_counter: msb_bytes must be 1..4");
    const unsigned shift = 8u * (8u - msb_bytes);
    const std::uint64_t top = counter >> shift;
    const std::uint64_t top_max = (msb_bytes == 4) ? 0xFFFFFFFFull : ((1ull << (8u * msb_bytes)) - 1);
    if (top >= top_max) throw CounterOverflow();
    CounterReset r;
    r.msb_value = static_cast<std::uint32_t>(top + 1);
    r.new_base = (top + 1) << shift;
    return r;
}

SecocContext::SecocContext(const Key128& group_key, unsigned tag_width)
    : cmac_(group_key), tag_width_(tag_width) {
    if (tag_width != 8 && tag_width != 16 && tag_width != 24)
        throw std::invalid_argument("secoc: tag_width must be 8, 16, or 24");
}

std::uint32_t SecocContext::integrity_tag(std::uint16_t can_id, const BitString& app_data,
                                          std::uint64_t counter) const {
    std::vector<std::uint8_t> msg;
    msg.reserve(2 + (app_data.size() + 7) / 8 + 8);
    msg.push_back(static_cast<std::uint8_t>(can_id >> 8));
    msg.push_back(static_cast<std::uint8_t>(can_id & 0xFF));
    const auto data = app_data.to_bytes();  // zero-padded to the byte boundary
    msg.insert(msg.end(), data.begin(), data.end());
    const auto ctr = be64(counter);
    msg.insert(msg.end(), ctr.begin(), ctr.end());
    return Cmac::truncate_bits(cmac_.mac(msg), tag_width_);
}

VerifyResult secoc_verify(const SecocContext& ctx, std::uint16_t can_id, const BitString& app_data,
                          std::uint8_t counter_lsb, std::uint32_t tag,
                          ReceiverChannelState& state) {
    VerifyResult r;
    r.counter = reconstruct_counter(state.last_accepted, counter_lsb);
    const std::uint32_t expected = ctx.integrity_tag(can_id, app_data, r.counter);
    // Constant-shape comparison: the full truncated tag is compared as one
    // word, with no early-exit dependence on matching prefixes.
    r.accepted = (expected == tag);
    if (r.accepted) {
        state.last_accepted = r.counter;
        state.consecutive_failures = 0;
    } else {
        ++state.consecutive_failures;
    }
    return r;
}

}  // namespace caiba
