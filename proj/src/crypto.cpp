// crypto.cpp — AES-128 block primitive (OpenSSL EVP) and RFC 4493 CMAC.

#include "caiba/crypto.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <stdexcept>

namespace caiba {

namespace {

int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

// Doubling in GF(2^128) with the CMAC reduction constant.
Block dbl(const Block& in) {
    Block out{};
    std::uint8_t carry = 0;
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>((in[static_cast<std::size_t>(i)] << 1) | carry);
        carry = static_cast<std::uint8_t>(in[static_cast<std::size_t>(i)] >> 7);
    }
    if (in[0] & 0x80u) out[15] ^= 0x87u;
    return out;
}

}  // namespace

Key128 parse_key_hex(const std::string& hex) {
    if (hex.size() != 32) throw std::invalid_argument("key must be 32 hex characters");
    Key128 k{};
    for (std::size_t i = 0; i < 16; ++i) {
        const int hi = hex_nibble(hex[2 * i]);
        const int lo = hex_nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw std::invalid_argument("key contains non-hex characters");
        k[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return k;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0x0F]);
    }
    return s;
}

std::array<std::uint8_t, 8> be64(std::uint64_t v) {
    std::array<std::uint8_t, 8> out{};
    for (int i = 7; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v & 0xFF);
        v >>= 8;
    }
    return out;
}

BlockCipher::BlockCipher(const Key128& key) {
    EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
    if (!ctx) throw std::runtime_error("EVP_CIPHER_CTX_new failed");
    if (EVP_EncryptInit_ex(ctx, EVP_aes_128_ecb(), nullptr, key.data(), nullptr) != 1) {
        EVP_CIPHER_CTX_free(ctx);
        throw std::runtime_error("EVP_EncryptInit_ex failed");
    }
    EVP_CIPHER_CTX_set_padding(ctx, 0);
    ctx_ = ctx;
}

BlockCipher::~BlockCipher() {
    if (ctx_) EVP_CIPHER_CTX_free(static_cast<EVP_CIPHER_CTX*>(ctx_));
}

BlockCipher::BlockCipher(BlockCipher&& other) noexcept : ctx_(other.ctx_), calls_(other.calls_) {
    other.ctx_ = nullptr;
}

BlockCipher& BlockCipher::operator=(BlockCipher&& other) noexcept {
    if (this != &other) {
        if (ctx_) EVP_CIPHER_CTX_free(static_cast<EVP_CIPHER_CTX*>(ctx_));
        ctx_ = other.ctx_;
        calls_ = other.calls_;
        other.ctx_ = nullptr;
    }
    return *this;
}

Block BlockCipher::encrypt(const Block& in) const {
    Block out{};
    int outlen = 0;
    if (EVP_EncryptUpdate(static_cast<EVP_CIPHER_CTX*>(ctx_), out.data(), &outlen, in.data(),
                          static_cast<int>(in.size())) != 1 ||
        outlen != static_cast<int>(out.size())) {
        throw std::runtime_error("EVP_EncryptUpdate failed");
    }
    ++calls_;
    return out;
}

Cmac::Cmac(const Key128& key) : cipher_(key) {
    const Block l = cipher_.encrypt(Block{});
    k1_ = dbl(l);
    k2_ = dbl(k1_);
}

Block Cmac::mac(std::span<const std::uint8_t> msg) const {
    const std::size_t len = msg.size();
    std::size_t n = (len + 15) / 16;
    bool complete = (n != 0) && (len % 16 == 0);
    if (n == 0) n = 1;

    Block last{};
    if (complete) {
        for (std::size_t i = 0; i < 16; ++i) last[i] = msg[(n - 1) * 16 + i] ^ k1_[i];
    } else {
        const std::size_t rem = len - (n - 1) * 16;
        for (std::size_t i = 0; i < rem; ++i) last[i] = msg[(n - 1) * 16 + i];
        last[rem] = 0x80u;
        for (std::size_t i = 0; i < 16; ++i) last[i] ^= k2_[i];
    }

    Block x{};
    for (std::size_t b = 0; b + 1 < n; ++b) {
        for (std::size_t i = 0; i < 16; ++i) x[i] ^= msg[b * 16 + i];
        x = cipher_.encrypt(x);
    }
    for (std::size_t i = 0; i < 16; ++i) x[i] ^= last[i];
    return cipher_.encrypt(x);
}

std::uint32_t Cmac::truncate_bits(const Block& t, unsigned bits) {
    if (bits == 0 || bits > 32) throw std::invalid_argument("truncate_bits: bits must be 1..32");
    std::uint64_t v = (static_cast<std::uint64_t>(t[0]) << 24) | (static_cast<std::uint64_t>(t[1]) << 16) |
                      (static_cast<std::uint64_t>(t[2]) << 8) | t[3];
    return static_cast<std::uint32_t>(v >> (32 - bits));
}

}  // namespace caiba
