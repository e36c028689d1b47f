#include "convformer/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "convformer/error.hpp"
#include "convformer/run_config.hpp"

namespace convformer {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json body_of(const Model& model) {
  json tensors = json::array();
  const ParameterSet& p = model.params();
  for (ParamId id = 0; id < p.size(); ++id) {
    const Tensor& t = p.value(id);
    tensors.push_back({{"name", p.name(id)},
                       {"shape", t.shape()},
                       {"trainable", p.trainable(id)},
                       {"data", std::vector<double>(t.data().begin(), t.data().end())}});
  }
  json j;
  j["format"] = "convformer-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = model_config_to_json(model.config());
  j["tensors"] = std::move(tensors);
  return j;
}

}  // namespace

std::string serialize_checkpoint(const Model& model) {
  json j = body_of(model);
  j["checksum"] = hex(fnv1a64(j.dump()));
  return j.dump() + "\n";
}

Model deserialize_checkpoint(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error&) {
    throw UserError(source + ": checkpoint integrity check failed (not valid JSON)");
  }
  if (!j.is_object() || !j.contains("checksum") || !j["checksum"].is_string()) {
    throw UserError(source + ": checkpoint integrity check failed (no checksum)");
  }
  const std::string expected = j["checksum"].get<std::string>();
  j.erase("checksum");
  if (hex(fnv1a64(j.dump())) != expected) throw UserError(source + ": checkpoint integrity check failed (checksum mismatch)");
  try {
    if (j.at("format") != "convformer-checkpoint") throw UserError(source + ": not a checkpoint file");
    if (j.at("version") != kCheckpointVersion) throw UserError(source + ": unsupported checkpoint version");
    Model model(model_config_from_json(j.at("config"), "config"), 0);
    ParameterSet& p = model.params();
    const json& tensors = j.at("tensors");
    if (tensors.size() != p.size()) throw UserError(source + ": tensor count does not match the model config");
    for (ParamId id = 0; id < p.size(); ++id) {
      const json& e = tensors[id];
      if (e.at("name") != p.name(id)) throw UserError(source + ": unexpected tensor '" + e.at("name").get<std::string>() + "'");
      const Shape shape = e.at("shape").get<Shape>();
      if (shape != p.value(id).shape()) throw UserError(source + ": shape mismatch for '" + p.name(id) + "'");
      p.mutable_value(id) = Tensor(shape, e.at("data").get<std::vector<double>>());
    }
    return model;
  } catch (const json::exception& e) {
    throw UserError(source + ": malformed checkpoint: " + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write checkpoint '" + path.string() + "'");
  out << serialize_checkpoint(model);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str(), path.string());
}

}  // namespace convformer
