// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#include "svtnet/common.hpp"

namespace svtnet {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t sub_seed(std::uint64_t seed, const std::string& stream) {
  return splitmix64(splitmix64(seed) ^ fnv1a(stream));
}

std::uint64_t sub_seed(std::uint64_t seed, const std::string& stream, std::uint64_t key) {
  return splitmix64(sub_seed(seed, stream) ^ splitmix64(key + 0x632BE59BD9B4E019ULL));
}

}  // namespace svtnet
