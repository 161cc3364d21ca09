#include "relearn/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "relearn/error.hpp"

namespace relearn::nn {

using nlohmann::json;

std::string to_json_string(const Checkpoint& ckpt) {
  json doc;
  doc["format"] = "relearn-stack";
  doc["version"] = 1;
  doc["metadata"] = ckpt.metadata;
  json layers = json::array();
  for (std::size_t l = 0; l < ckpt.stack.size(); ++l) {
    const Layer& layer = ckpt.stack.layer(l);
    json entry;
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      entry["kind"] = "dense";
      entry["activation"] = std::string(to_string(d->activation()));
    } else {
      entry["kind"] = "lstm";
    }
    entry["input"] = input_size(layer);
    entry["output"] = output_size(layer);
    entry["trainable"] = ckpt.stack.trainable(l);
    entry["params"] = parameters(layer);
    layers.push_back(std::move(entry));
  }
  doc["layers"] = std::move(layers);
  return doc.dump();
}

Checkpoint from_json_string(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "relearn-stack") throw SchemaError("unknown checkpoint format");
    if (doc.at("version").get<int>() != 1) throw SchemaError("unsupported checkpoint version");
    Checkpoint ckpt;
    if (doc.contains("metadata")) ckpt.metadata = doc["metadata"].get<std::map<std::string, std::string>>();
    for (const auto& entry : doc.at("layers")) {
      const auto kind = entry.at("kind").get<std::string>();
      const auto in = entry.at("input").get<std::size_t>();
      const auto out = entry.at("output").get<std::size_t>();
      auto params = entry.at("params").get<std::vector<double>>();
      Layer layer = kind == "dense"
                        ? Layer(DenseLayer(in, out, activation_from_string(entry.at("activation").get<std::string>())))
                    : kind == "lstm" ? Layer(LstmLayer(in, out))
                                     : throw SchemaError("unknown layer kind '" + kind + "'");
      if (params.size() != parameters(layer).size()) {
        throw SchemaError("layer '" + kind + "' expects " + std::to_string(parameters(layer).size()) +
                          " parameters, found " + std::to_string(params.size()));
      }
      parameters(layer) = std::move(params);
      try {
        ckpt.stack.add(std::move(layer), entry.at("trainable").get<bool>());
      } catch (const ShapeError& e) {
        throw SchemaError(e.what());
      }
    }
    if (ckpt.stack.empty()) throw SchemaError("checkpoint has no layers");
    return ckpt;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  out << to_json_string(ckpt) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view text) {
  return fnv1a({reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

namespace {

std::uint64_t hash_layer(const Layer& layer, std::uint64_t h) {
  const std::uint64_t dims[3] = {layer.index(), input_size(layer), output_size(layer)};
  h = fnv1a({reinterpret_cast<const unsigned char*>(dims), sizeof(dims)}, h);
  const auto& p = parameters(layer);
  return fnv1a({reinterpret_cast<const unsigned char*>(p.data()), p.size() * sizeof(double)}, h);
}

}  // namespace

std::uint64_t checksum(const LayerStack& stack) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& layer : stack.layers()) h = hash_layer(layer, h);
  return h;
}

std::uint64_t feature_checksum(const LayerStack& stack) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& layer : stack.layers()) {
    if (is_recurrent(layer)) break;
    h = hash_layer(layer, h);
  }
  return h;
}

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace relearn::nn
