#include "prefroute/fingerprint.hpp"
#include "prefroute/rng.hpp"

#include <algorithm>

#include "prefroute/errors.hpp"

namespace prefroute {

std::vector<std::uint32_t> Rng::sample_without_replacement(std::uint32_t n,
                                                           std::uint32_t k) {
  std::vector<std::uint32_t> pool(n);
  for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
  // Partial Fisher-Yates: the first k slots end up holding the sample.
  for (std::uint32_t i = 0; i < k; ++i) {
    const std::uint32_t j = i + static_cast<std::uint32_t>(below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::uint64_t child_seed(std::uint64_t master, std::string_view label,
                         std::uint64_t index) {
  Fingerprint fp;
  fp.add(label).add(master).add(index);
  // One extra mix step so nearby (master, index) pairs land far apart.
  Rng mix(fp.value());
  return mix.next();
}

std::string fingerprint_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

std::uint64_t parse_fingerprint_hex(std::string_view hex) {
  if (hex.size() != 16) throw ValidationError("fingerprint must be 16 hex digits");
  std::uint64_t v = 0;
  for (const char c : hex) {
    v <<= 4;
    if (c >= '0' && c <= '9')
      v |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f')
      v |= static_cast<std::uint64_t>(c - 'a' + 10);
    else
      throw ValidationError("bad fingerprint digit");
  }
  return v;
}

}  // namespace prefroute
