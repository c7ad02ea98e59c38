#include "gridveil/hash.hpp"

#include <algorithm>
#include <mutex>
#include <sodium.h>

namespace gridveil {

void crypto_init() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0)
            throw std::runtime_error("sodium_init failed");
    });
}

std::string to_hex(const Bytes& data) { return to_hex(data.data(), data.size()); }

std::string to_hex(const std::uint8_t* data, std::size_t len) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0xf]);
    }
    return out;
}

static int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0)
        throw std::invalid_argument("from_hex: odd length");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = hex_nibble(hex[2 * i]);
        int lo = hex_nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0)
            throw std::invalid_argument("from_hex: bad digit");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

std::array<std::uint8_t, 32> sha256(const Bytes& data) {
    crypto_init();
    std::array<std::uint8_t, 32> out;
    crypto_hash_sha256(out.data(), data.data(), data.size());
    return out;
}

std::array<std::uint8_t, 64> sha512(const Bytes& data) {
    crypto_init();
    std::array<std::uint8_t, 64> out;
    crypto_hash_sha512(out.data(), data.data(), data.size());
    return out;
}

static Bytes with_domain(std::string_view domain, const Bytes& data) {
    Bytes buf;
    buf.reserve(domain.size() + 1 + data.size());
    buf.insert(buf.end(), domain.begin(), domain.end());
    buf.push_back(0x00);  // tag terminator
    buf.insert(buf.end(), data.begin(), data.end());
    return buf;
}

std::array<std::uint8_t, 32> tagged_sha256(std::string_view domain, const Bytes& data) {
    return sha256(with_domain(domain, data));
}

std::array<std::uint8_t, 64> tagged_sha512(std::string_view domain, const Bytes& data) {
    return sha512(with_domain(domain, data));
}

std::array<std::uint8_t, 8> mac8(const std::array<std::uint8_t, 32>& key,
                                 std::string_view domain, const Bytes& data) {
    crypto_init();
    Bytes msg = with_domain(domain, data);
    std::array<std::uint8_t, crypto_auth_hmacsha256_BYTES> full;
    crypto_auth_hmacsha256(full.data(), msg.data(), msg.size(), key.data());
    std::array<std::uint8_t, 8> out;
    std::copy(full.begin(), full.begin() + 8, out.begin());
    return out;
}

Bytes keystream(const std::array<std::uint8_t, 32>& key,
                const std::array<std::uint8_t, 24>& nonce, std::size_t len) {
    crypto_init();
    Bytes out(len);
    if (len > 0)
        crypto_stream_xchacha20(out.data(), len, nonce.data(), key.data());
    return out;
}

}  // namespace gridveil
