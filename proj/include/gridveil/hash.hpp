#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "gridveil/common.hpp"

namespace gridveil {

// Thin wrappers over libsodium. Every protocol hash goes through a
// domain-separation tag so key-image, challenge and stealth derivations
// can never collide across contexts.

void crypto_init();  // sodium_init, idempotent

std::array<std::uint8_t, 32> sha256(const Bytes& data);
std::array<std::uint8_t, 64> sha512(const Bytes& data);

std::array<std::uint8_t, 32> tagged_sha256(std::string_view domain, const Bytes& data);
std::array<std::uint8_t, 64> tagged_sha512(std::string_view domain, const Bytes& data);

// HMAC-SHA256 truncated to 8 bytes; used for cell key-confirmation tags
std::array<std::uint8_t, 8> mac8(const std::array<std::uint8_t, 32>& key,
                                 std::string_view domain, const Bytes& data);

// XChaCha20 keystream for padding and layer streams
Bytes keystream(const std::array<std::uint8_t, 32>& key,
                const std::array<std::uint8_t, 24>& nonce, std::size_t len);

}  // namespace gridveil
