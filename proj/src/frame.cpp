// frame.cpp — CAN base-format codec: CRC-15, stuffing, frame (de)serialization.

#include "caiba/frame.hpp"

#include <stdexcept>

namespace caiba {

namespace {

// Unstuffed bit offsets of the fixed header fields.
constexpr std::size_t kSofOffset = 0;
constexpr std::size_t kIdOffset = 1;
constexpr std::size_t kControlOffset = 12;  // RTR, IDE, r0
constexpr std::size_t kDlcOffset = 15;
constexpr std::size_t kDataOffset = 19;
constexpr unsigned kCrcBits = 15;
// CRC delimiter + ACK slot + ACK delimiter + EOF, all outside the stuffing region.
constexpr std::size_t kTailBits = 3 + kEofBits;

void validate_frame(const Frame& f) {
    if (f.can_id >= (1u << kCanIdBits)) throw std::invalid_argument("frame: can_id exceeds 11 bits");
    if (f.dlc > 8) throw std::invalid_argument("frame: dlc exceeds 8");
    if (f.secured) {
        if (f.tag_width != 8 && f.tag_width != 16 && f.tag_width != 24)
            throw std::invalid_argument("frame: tag_width must be 8, 16, or 24");
        if (8u * f.dlc < kCounterLsbBits + f.tag_width)
            throw std::invalid_argument("frame: dlc too small for counter and tag");
    }
    if (f.app_data.size() != f.app_data_bits())
        throw std::invalid_argument("frame: app_data length does not match dlc/layout");
}

}  // namespace

std::uint16_t crc15(const BitString& bits) {
    std::uint16_t crc = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        const bool crcnxt = bits[i] ^ (((crc >> 14) & 1u) != 0);
        crc = static_cast<std::uint16_t>((crc << 1) & 0x7FFF);
        if (crcnxt) crc ^= kCrc15Poly;
    }
    return crc;
}

const char* to_string(DecodeError e) {
    switch (e) {
        case DecodeError::None: return "None";
        case DecodeError::StuffError: return "StuffError";
        case DecodeError::CrcError: return "CrcError";
        case DecodeError::FormError: return "FormError";
    }
    return "?";
}

BitString Frame::payload_bits() const {
    BitString p = app_data;
    if (secured) {
        p.append(BitString::from_uint(counter_lsb, kCounterLsbBits));
        p.append(BitString::from_uint(tag, tag_width));
    }
    return p;
}

BitString stuff_bits(const BitString& in, std::vector<std::size_t>* positions) {
    BitString out;
    unsigned run = 0;
    bool run_val = false;
    for (std::size_t i = 0; i < in.size(); ++i) {
        const bool b = in[i];
        out.push_back(b);
        if (run != 0 && b == run_val) {
            ++run;
        } else {
            run = 1;
            run_val = b;
        }
        if (run == 5) {
            const bool s = !run_val;
            out.push_back(s);
            if (positions) positions->push_back(out.size() - 1);
            run = 1;
            run_val = s;
        }
    }
    return out;
}

DestuffResult destuff_bits(const BitString& in) {
    DestuffResult r;
    unsigned run = 0;
    bool run_val = false;
    for (std::size_t i = 0; i < in.size(); ++i) {
        const bool b = in[i];
        if (run == 5) {
            // This position must be a stuff bit, complementary to the run.
            if (b == run_val) {
                r.error = DecodeError::StuffError;
                return r;
            }
            r.stuff_positions.push_back(i);
            run = 1;
            run_val = b;
            continue;
        }
        r.bits.push_back(b);
        if (run != 0 && b == run_val) {
            ++run;
        } else {
            run = 1;
            run_val = b;
        }
    }
    return r;
}

EncodedFrame encode_frame(const Frame& frame, const std::optional<BitString>& override_payload) {
    validate_frame(frame);
    const unsigned data_bits = 8u * frame.dlc;
    if (override_payload && override_payload->size() != data_bits)
        throw std::invalid_argument("encode_frame: override payload length mismatch");

    BitString head;
    head.push_back(false);  // SOF, dominant
    head.append(BitString::from_uint(frame.can_id, kCanIdBits));
    head.push_back(false);  // RTR (data frame)
    head.push_back(false);  // IDE (base format)
    head.push_back(false);  // r0
    head.append(BitString::from_uint(frame.dlc, 4));
    head.append(frame.payload_bits());

    const std::uint16_t crc = crc15(head);
    BitString region = head;
    region.append(BitString::from_uint(crc, kCrcBits));

    EncodedFrame e;
    e.frame = frame;
    e.crc = crc;

    BitString stuffed_region = stuff_bits(region, &e.stuff_positions);

    BitString tail;
    tail.push_back(true);  // CRC delimiter
    tail.push_back(true);  // ACK slot (transmitted recessive)
    tail.push_back(true);  // ACK delimiter
    for (unsigned i = 0; i < kEofBits; ++i) tail.push_back(true);

    e.unstuffed = region;
    e.unstuffed.append(tail);
    e.stuffed = stuffed_region;
    e.stuffed.append(tail);
    e.ack_slot_index = stuffed_region.size() + 1;
    e.eof_span = {stuffed_region.size() + 3, stuffed_region.size() + 3 + kEofBits};

    // Map unstuffed region indices to stuffed indices for the field spans.
    std::vector<std::size_t> to_stuffed(region.size());
    {
        std::size_t next_stuff = 0;
        std::size_t k = 0;
        for (std::size_t i = 0; i < stuffed_region.size(); ++i) {
            if (next_stuff < e.stuff_positions.size() && e.stuff_positions[next_stuff] == i) {
                ++next_stuff;
                continue;
            }
            to_stuffed[k++] = i;
        }
    }

    if (data_bits > 0) {
        e.data_span = {to_stuffed[kDataOffset], to_stuffed[kDataOffset + data_bits - 1] + 1};
    } else {
        e.data_span = {to_stuffed[kDlcOffset] + 4, to_stuffed[kDlcOffset] + 4};
    }
    if (frame.secured) {
        const std::size_t tag_first = kDataOffset + data_bits - frame.tag_width;
        e.tag_span = {to_stuffed[tag_first], to_stuffed[kDataOffset + data_bits - 1] + 1};
    }

    e.transmit = e.stuffed;
    if (override_payload) {
        for (unsigned k = 0; k < data_bits; ++k) {
            e.transmit.set(to_stuffed[kDataOffset + k], (*override_payload)[k]);
        }
    }
    return e;
}

DecodeResult decode_frame(const BitString& stuffed, const PayloadLayout& layout) {
    DecodeResult r;
    std::size_t i = 0;          // cursor into the stuffed image
    unsigned run = 0;
    bool run_val = false;
    bool failed = false;
    DecodeError err = DecodeError::None;

    // Pull the next destuffed bit of the stuffing region.
    auto next_bit = [&]() -> bool {
        if (failed) return false;
        if (run == 5) {
            if (i >= stuffed.size()) {
                failed = true;
                err = DecodeError::FormError;
                return false;
            }
            const bool s = stuffed[i++];
            if (s == run_val) {
                failed = true;
                err = DecodeError::StuffError;
                return false;
            }
            run = 1;
            run_val = s;
        }
        if (i >= stuffed.size()) {
            failed = true;
            err = DecodeError::FormError;
            return false;
        }
        const bool b = stuffed[i++];
        if (run != 0 && b == run_val) {
            ++run;
        } else {
            run = 1;
            run_val = b;
        }
        return b;
    };
    auto take_uint = [&](unsigned width) -> std::uint64_t {
        std::uint64_t v = 0;
        for (unsigned k = 0; k < width; ++k) v = (v << 1) | (next_bit() ? 1u : 0u);
        return v;
    };
    auto fail = [&](DecodeError e) {
        r.error = e;
        return r;
    };

    if (next_bit() != false) return fail(failed ? err : DecodeError::FormError);  // SOF dominant
    Frame f;
    f.can_id = static_cast<std::uint16_t>(take_uint(kCanIdBits));
    const bool rtr = next_bit();
    const bool ide = next_bit();
    const bool r0 = next_bit();
    f.dlc = static_cast<std::uint8_t>(take_uint(4));
    if (failed) return fail(err);
    if (rtr || ide || r0) return fail(DecodeError::FormError);  // base-format data frames only
    if (f.dlc > 8) return fail(DecodeError::FormError);

    BitString payload;
    for (unsigned k = 0; k < 8u * f.dlc; ++k) payload.push_back(next_bit());
    const std::uint16_t recv_crc = static_cast<std::uint16_t>(take_uint(kCrcBits));
    if (failed) return fail(err);

    // A run of five ending on the last CRC bit is still followed by a stuff bit.
    if (run == 5) {
        if (i >= stuffed.size()) return fail(DecodeError::FormError);
        if (stuffed[i] == run_val) return fail(DecodeError::StuffError);
        ++i;
    }

    // Fixed-form tail: CRC delimiter, ACK slot, ACK delimiter, EOF.
    if (stuffed.size() - i != kTailBits) return fail(DecodeError::FormError);
    if (!stuffed[i]) return fail(DecodeError::FormError);      // CRC delimiter recessive
    // stuffed[i + 1] is the ACK slot; dominant (acked) and recessive both parse.
    if (!stuffed[i + 2]) return fail(DecodeError::FormError);  // ACK delimiter recessive

    // CRC result is evaluated before the EOF field, matching the point in the
    // frame where a CAN receiver signals it.
    BitString covered;
    covered.push_back(false);
    covered.append(BitString::from_uint(f.can_id, kCanIdBits));
    covered.push_back(false);
    covered.push_back(false);
    covered.push_back(false);
    covered.append(BitString::from_uint(f.dlc, 4));
    covered.append(payload);
    if (crc15(covered) != recv_crc) return fail(DecodeError::CrcError);

    for (std::size_t k = i + 3; k < stuffed.size(); ++k) {
        if (!stuffed[k]) return fail(DecodeError::FormError);  // EOF recessive
    }

    f.secured = layout.secured;
    if (layout.secured) {
        f.tag_width = layout.tag_width;
        const unsigned trailer = kCounterLsbBits + layout.tag_width;
        if (payload.size() < trailer) return fail(DecodeError::FormError);
        const std::size_t app_bits = payload.size() - trailer;
        f.app_data = payload.slice(0, app_bits);
        f.counter_lsb = static_cast<std::uint8_t>(payload.to_uint(app_bits, kCounterLsbBits));
        f.tag = static_cast<std::uint32_t>(payload.to_uint(app_bits + kCounterLsbBits, layout.tag_width));
    } else {
        f.app_data = payload;
    }
    r.frame = f;
    return r;
}

}  // namespace caiba
