// bits.hpp
//
// BitString: a small dynamic bit vector used throughout the codec and the
// bus model. Bits are stored one-per-byte (0/1) in transmission order
// (MSB-first for every multi-bit field), which keeps indexing trivial and
// is plenty fast at the scales this simulator runs at.

#pragma once

#include <cstdint>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace caiba {

class BitString {
public:
    BitString() = default;

    explicit BitString(std::initializer_list<int> bits) {
        bits_.reserve(bits.size());
        for (int b : bits) push_back(b != 0);
    }

    static BitString zeros(std::size_t n) {
        BitString s;
        s.bits_.assign(n, 0);
        return s;
    }

    // Parse a string of '0'/'1' characters; other characters (spaces,
    // underscores) are skipped so test vectors can be written readably.
    static BitString parse(const std::string& text) {
        BitString s;
        for (char c : text) {
            if (c == '0' || c == '1') s.push_back(c == '1');
        }
        return s;
    }

    // The top `width` bits of `value`, most-significant bit first.
    static BitString from_uint(std::uint64_t value, unsigned width) {
        if (width > 64) throw std::invalid_argument("BitString::from_uint: width > 64");
        BitString s;
        s.bits_.reserve(width);
        for (unsigned i = width; i-- > 0;) s.push_back((value >> i) & 1u);
        return s;
    }

    // First `nbits` of a byte buffer, each byte MSB-first.
    static BitString from_bytes(std::span<const std::uint8_t> bytes, std::size_t nbits) {
        if (nbits > bytes.size() * 8) throw std::invalid_argument("BitString::from_bytes: not enough bytes");
        BitString s;
        s.bits_.reserve(nbits);
        for (std::size_t i = 0; i < nbits; ++i) {
            s.push_back((bytes[i / 8] >> (7 - i % 8)) & 1u);
        }
        return s;
    }

    void push_back(bool bit) { bits_.push_back(bit ? 1 : 0); }

    void append(const BitString& other) {
        bits_.insert(bits_.end(), other.bits_.begin(), other.bits_.end());
    }

    std::size_t size() const { return bits_.size(); }
    bool empty() const { return bits_.empty(); }

    bool operator[](std::size_t i) const { return bits_[i] != 0; }

    void set(std::size_t i, bool bit) { bits_.at(i) = bit ? 1 : 0; }

    void flip(std::size_t i) { bits_.at(i) ^= 1; }

    BitString slice(std::size_t begin, std::size_t end) const {
        if (begin > end || end > bits_.size()) throw std::out_of_range("BitString::slice");
        BitString s;
        s.bits_.assign(bits_.begin() + static_cast<std::ptrdiff_t>(begin),
                       bits_.begin() + static_cast<std::ptrdiff_t>(end));
        return s;
    }

    // Interpret bits [begin, begin+width) as an MSB-first unsigned value.
    std::uint64_t to_uint(std::size_t begin, unsigned width) const {
        if (width > 64 || begin + width > bits_.size()) throw std::out_of_range("BitString::to_uint");
        std::uint64_t v = 0;
        for (unsigned i = 0; i < width; ++i) v = (v << 1) | bits_[begin + i];
        return v;
    }

    // Pack into bytes, MSB-first, zero-padding the final partial byte.
    std::vector<std::uint8_t> to_bytes() const {
        std::vector<std::uint8_t> out((bits_.size() + 7) / 8, 0);
        for (std::size_t i = 0; i < bits_.size(); ++i) {
            if (bits_[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
        }
        return out;
    }

    std::string to_string() const {
        std::string s;
        s.reserve(bits_.size());
        for (auto b : bits_) s.push_back(b ? '1' : '0');
        return s;
    }

    bool operator==(const BitString& other) const { return bits_ == other.bits_; }
    bool operator!=(const BitString& other) const { return bits_ != other.bits_; }

    // XOR of two equal-length strings.
    BitString operator^(const BitString& other) const {
        if (size() != other.size()) throw std::invalid_argument("BitString::operator^: length mismatch");
        BitString s = *this;
        for (std::size_t i = 0; i < bits_.size(); ++i) s.bits_[i] ^= other.bits_[i];
        return s;
    }

private:
    std::vector<std::uint8_t> bits_;
};

}  // namespace caiba
