#pragma once

#include <cstdint>
#include <string_view>

namespace clinloop {

// 64-bit FNV-1a. Used for all content fingerprints (vocabulary, bundle,
// stage output digests).
class Fnv64 {
 public:
  Fnv64& update(std::string_view s) {
    for (unsigned char c : s) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  Fnv64& update_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      state_ ^= (v >> (i * 8)) & 0xff;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  return Fnv64().update(s).digest();
}

}  // namespace clinloop
