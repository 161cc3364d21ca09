#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "relearn/nn.hpp"

namespace relearn::nn {

/// A layer stack plus free-form string metadata (model kind, window id, ...).
struct Checkpoint {
  LayerStack stack;
  std::map<std::string, std::string> metadata;
};

/// JSON document: {"format": "relearn-stack", "version": 1, "metadata": {...},
/// "layers": [{"kind", "input", "output", "activation"?, "trainable", "params"}]}.
/// Doubles are written with max_digits10 precision, so a round trip is bit-exact.
std::string to_json_string(const Checkpoint& ckpt);
/// Throws SchemaError on malformed documents or inconsistent shapes.
Checkpoint from_json_string(std::string_view text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws InputError if the file cannot be read, SchemaError if it is malformed.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text);

/// Hash of every layer's shape and parameter bytes.
std::uint64_t checksum(const LayerStack& stack);
/// Hash restricted to the dense layers that precede the first LSTM layer.
std::uint64_t feature_checksum(const LayerStack& stack);

std::string to_hex(std::uint64_t value);

}  // namespace relearn::nn
