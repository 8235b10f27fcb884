// crypto.hpp
//
// 128-bit block cipher (AES-128, backed by OpenSSL) and AES-CMAC per
// RFC 4493. These are the only cryptographic primitives the protocol
// stack needs; both MAC schemes and the key-derivation tables are built
// on single-block encryptions and CMAC calls.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace caiba {

using Block = std::array<std::uint8_t, 16>;
using Key128 = std::array<std::uint8_t, 16>;

// Parse exactly 32 hex characters into a key; throws std::invalid_argument.
Key128 parse_key_hex(const std::string& hex);
std::string to_hex(std::span<const std::uint8_t> bytes);
std::array<std::uint8_t, 8> be64(std::uint64_t v);

// AES-128-ECB single-block encryption with a reusable context.
// Not thread-safe; each simulation owns its own cipher instances.
class BlockCipher {
public:
    explicit BlockCipher(const Key128& key);
    ~BlockCipher();
    BlockCipher(BlockCipher&& other) noexcept;
    BlockCipher& operator=(BlockCipher&& other) noexcept;
    BlockCipher(const BlockCipher&) = delete;
    BlockCipher& operator=(const BlockCipher&) = delete;

    Block encrypt(const Block& in) const;

    // Number of block encryptions performed (used by tests that pin the
    // cipher-call budget of the caching layers).
    std::uint64_t call_count() const { return calls_; }

private:
    void* ctx_ = nullptr;  // EVP_CIPHER_CTX
    mutable std::uint64_t calls_ = 0;
};

// AES-CMAC (RFC 4493). Subkeys are derived once at construction.
class Cmac {
public:
    explicit Cmac(const Key128& key);

    Block mac(std::span<const std::uint8_t> msg) const;

    // Leading (most-significant) `bits` of a block as an unsigned value.
    static std::uint32_t truncate_bits(const Block& t, unsigned bits);

    const BlockCipher& cipher() const { return cipher_; }

private:
    BlockCipher cipher_;
    Block k1_{};
    Block k2_{};
};

}  // namespace caiba
