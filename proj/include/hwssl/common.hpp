#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace hwssl {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an unseen-writer protocol invariant is broken.
class ProtocolViolation : public Error {
 public:
  using Error::Error;
};

using WriterId = std::uint32_t;

/// Identifies one fragment inside a corpus.
struct SampleKey {
  WriterId writer_id = 0;
  std::uint32_t sample_index = 0;

  auto operator<=>(const SampleKey&) const = default;
};

inline std::string to_string(const SampleKey& key) {
  return std::to_string(key.writer_id) + "_" + std::to_string(key.sample_index);
}

}  // namespace hwssl

template <>
struct std::hash<hwssl::SampleKey> {
  std::size_t operator()(const hwssl::SampleKey& k) const noexcept {
    return (static_cast<std::size_t>(k.writer_id) << 32) ^ k.sample_index;
  }
};
