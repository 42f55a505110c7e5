#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace prefroute {

// FNV-1a, used for content fingerprints of datasets, vocabularies and models.
class Fingerprint {
 public:
  Fingerprint& add(std::string_view bytes) {
    for (const char c : bytes) {
      hash_ ^= static_cast<unsigned char>(c);
      hash_ *= 0x100000001b3ull;
    }
    return *this;
  }

  Fingerprint& add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      hash_ ^= (v >> (8 * i)) & 0xffu;
      hash_ *= 0x100000001b3ull;
    }
    return *this;
  }

  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  return Fingerprint{}.add(bytes).value();
}

std::string fingerprint_hex(std::uint64_t v);
std::uint64_t parse_fingerprint_hex(std::string_view hex);

}  // namespace prefroute
