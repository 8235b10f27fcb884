// frame.hpp
//
// CAN 2.0A base-format frame codec: CRC-15, bit stuffing, and the full
// serialization used by the quantum-level bus model. Secured frames carry
// the SecOC-style trailer inside the data field:
//
//     data field = app_data || counter_lsb(4) || tag(tag_width)
//
// Encoding always produces the *canonical* wire image — the frame as it
// should look after the authenticator has done its work (tag = integrity
// tag). A transmitter that aggregates a source-authenticating tag into the
// tag field passes the XORed payload as an override: the emitted bits
// differ, but CRC and stuff positions stay those of the canonical image,
// because that is the frame every receiver is meant to sample.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "caiba/bits.hpp"

namespace caiba {

inline constexpr unsigned kCanIdBits = 11;
inline constexpr unsigned kCounterLsbBits = 4;
inline constexpr unsigned kDefaultTagWidth = 24;
inline constexpr unsigned kEofBits = 7;
inline constexpr unsigned kIntermissionBits = 3;

// CRC-15/CAN: x^15 + x^14 + x^10 + x^8 + x^7 + x^4 + x^3 + 1, init 0,
// bit-serial MSB-first, no reflection, no final XOR.
inline constexpr std::uint16_t kCrc15Poly = 0x4599;

std::uint16_t crc15(const BitString& bits);

// Logical frame content. `app_data` is a bit string (secured payloads are
// not byte-aligned); for unsecured frames it is the whole data field and
// counter_lsb/tag/tag_width are ignored.
struct Frame {
    std::uint16_t can_id = 0;  // 11-bit identifier
    std::uint8_t dlc = 0;      // 0..8 data bytes
    BitString app_data;
    bool secured = false;
    std::uint8_t counter_lsb = 0;   // 4-bit freshness value on the wire
    std::uint32_t tag = 0;          // up to 24 bits, MSB-aligned within tag_width
    std::uint8_t tag_width = kDefaultTagWidth;  // 8, 16, or 24

    // Number of app_data bits the data field has room for.
    unsigned app_data_bits() const {
        unsigned total = 8u * dlc;
        if (!secured) return total;
        unsigned trailer = kCounterLsbBits + tag_width;
        return total >= trailer ? total - trailer : 0;
    }

    // The full data field (app_data || counter_lsb || tag for secured frames).
    BitString payload_bits() const;
};

// Half-open index range into the stuffed wire image.
struct BitSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool contains(std::size_t i) const { return i >= begin && i < end; }
    std::size_t length() const { return end - begin; }
};

struct EncodedFrame {
    Frame frame;            // canonical logical content
    BitString unstuffed;    // SOF..EOF without stuff bits (canonical values)
    BitString stuffed;      // canonical wire image, stuff bits inserted
    BitString transmit;     // image the transmitter drives (== stuffed unless overridden)
    std::vector<std::size_t> stuff_positions;  // indices into `stuffed`, ascending

    std::uint16_t crc = 0;
    std::size_t ack_slot_index = 0;  // index into `stuffed`
    BitSpan eof_span;                // indices into `stuffed`
    BitSpan data_span;               // whole data field, stuff bits included
    BitSpan tag_span;                // tag bits of a secured frame, stuff bits included

    bool has_override() const { return transmit != stuffed; }
};

enum class DecodeError {
    None = 0,
    StuffError,  // six identical bits in the stuffing region / bad stuff bit
    CrcError,    // CRC field does not match the received bits
    FormError,   // fixed-form bit (delimiter/EOF) violated, or truncated input
};

const char* to_string(DecodeError e);

struct DecodeResult {
    std::optional<Frame> frame;
    DecodeError error = DecodeError::None;
    bool ok() const { return frame.has_value(); }
};

// How a decoder should split the data field. Unsecured by default.
struct PayloadLayout {
    bool secured = false;
    std::uint8_t tag_width = kDefaultTagWidth;
};

// Insert a complementary bit after every run of five identical bits.
// Stuff bits count toward subsequent runs. `positions` (if non-null)
// receives the indices of the inserted bits in the output string.
BitString stuff_bits(const BitString& in, std::vector<std::size_t>* positions = nullptr);

// Remove stuff bits; DecodeError::StuffError if a run of six identical
// bits appears (i.e. a stuff bit equals the five bits before it).
struct DestuffResult {
    BitString bits;
    DecodeError error = DecodeError::None;
    std::vector<std::size_t> stuff_positions;
};
DestuffResult destuff_bits(const BitString& in);

// Serialize a frame. `override_payload`, if given, must have the same
// length as frame.payload_bits(); it substitutes the emitted data-field
// bits while CRC and stuffing layout remain canonical.
EncodedFrame encode_frame(const Frame& frame,
                          const std::optional<BitString>& override_payload = std::nullopt);

// Parse a complete stuffed wire image back into a frame.
DecodeResult decode_frame(const BitString& stuffed, const PayloadLayout& layout = {});

}  // namespace caiba
