#include "convformer/run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "convformer/error.hpp"

namespace convformer {

using nlohmann::json;

namespace {

/// Reads the members of one JSON object, remembering which keys were used.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  void read(const std::string& key, bool& out) {
    if (auto* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key), "expected a boolean");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, double& out) {
    if (auto* v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key), "expected a number");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, std::size_t& out) { out = static_cast<std::size_t>(read_u64(key, out)); }
  void read(const std::string& key, std::string& out) {
    if (auto* v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  template <typename Parse, typename T>
  void read_enum(const std::string& key, T& out, Parse parse) {
    std::string s;
    if (!find(key)) return;
    read(key, s);
    try {
      out = parse(s);
    } catch (const UserError& e) {
      throw ConfigError(field(key), e.what());
    }
  }

  ObjectReader child(const std::string& key) {
    static const json empty = json::object();
    const json* v = find(key);
    return ObjectReader(v ? *v : empty, field(key));
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(field(k), "unknown key");
    }
  }

 private:
  std::uint64_t read_u64(const std::string& key, std::uint64_t def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number_unsigned()) {
      throw ConfigError(field(key), "expected a non-negative integer");
    }
    return v->get<std::uint64_t>();
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
void checked(const std::string& field, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const UserError& e) {
    throw ConfigError(field, e.what());
  }
}

std::string window_mode_name(mixers::WindowMode m) {
  return m == mixers::WindowMode::Additive ? "additive" : "multiplicative";
}

mixers::WindowMode parse_window_mode(const std::string& s) {
  if (s == "additive") return mixers::WindowMode::Additive;
  if (s == "multiplicative") return mixers::WindowMode::Multiplicative;
  throw UserError("unknown window mode '" + s + "' (expected additive or multiplicative)");
}

std::string negative_mode_name(data::NegativeMode m) { return m == data::NegativeMode::Target ? "target" : "history"; }

data::NegativeMode parse_negative_mode(const std::string& s) {
  if (s == "target") return data::NegativeMode::Target;
  if (s == "history") return data::NegativeMode::History;
  throw UserError("unknown negative mode '" + s + "' (expected target or history)");
}

mixers::Padding padding_from(const std::string& s) { return mixers::parse_padding(s); }
mixers::MixerKind kind_from(const std::string& s) { return mixers::parse_mixer_kind(s); }

void read_model(ObjectReader& r, ModelConfig& m, bool with_vocab) {
  r.read("max_len", m.max_len);
  r.read("hidden", m.hidden);
  r.read("layers", m.layers);
  r.read("dropout_hidden", m.dropout_hidden);
  r.read("dropout_attn", m.dropout_attn);
  r.read("accelerated", m.accelerated);
  r.read("ln_eps", m.ln_eps);
  if (with_vocab) r.read("vocab_size", m.vocab_size);
  ObjectReader mx = r.child("mixer");
  mx.read_enum("kind", m.mixer.kind, kind_from);
  mx.read("kernel_size", m.mixer.kernel_size);
  mx.read("window", m.mixer.window);
  mx.read_enum("padding", m.mixer.padding, padding_from);
  mx.read("causal", m.mixer.causal);
  mx.read_enum("window_mode", m.mixer.window_mode, parse_window_mode);
  mx.read("normalize_fixed", m.mixer.normalize_fixed);
  mx.finish();
}

void validate_model(const ModelConfig& m, const std::string& path, bool with_vocab) {
  auto f = [&](const char* k) { return path + "." + k; };
  if (m.max_len < 1) throw ConfigError(f("max_len"), "must be >= 1");
  if (m.hidden < 1) throw ConfigError(f("hidden"), "must be >= 1");
  if (!(m.dropout_hidden >= 0.0 && m.dropout_hidden < 1.0)) throw ConfigError(f("dropout_hidden"), "must be in [0, 1)");
  if (!(m.dropout_attn >= 0.0 && m.dropout_attn < 1.0)) throw ConfigError(f("dropout_attn"), "must be in [0, 1)");
  if (!(m.ln_eps > 0.0)) throw ConfigError(f("ln_eps"), "must be positive");
  if (with_vocab && m.vocab_size < 2) throw ConfigError(f("vocab_size"), "must be >= 2");
  checked(path + ".mixer", [&] { m.mixer.validate(m.max_len); });
  if (m.accelerated && m.mixer.uses_kernel() && m.mixer.padding == mixers::Padding::Reflect) {
    throw ConfigError(f("accelerated"), "the accelerated path does not support reflect padding");
  }
}

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& m) {
  json j;
  j["max_len"] = m.max_len;
  j["hidden"] = m.hidden;
  j["layers"] = m.layers;
  j["dropout_hidden"] = m.dropout_hidden;
  j["dropout_attn"] = m.dropout_attn;
  j["accelerated"] = m.accelerated;
  j["ln_eps"] = m.ln_eps;
  j["vocab_size"] = m.vocab_size;
  j["mixer"] = {
      {"kind", mixers::to_string(m.mixer.kind)},
      {"kernel_size", m.mixer.kernel_size},
      {"window", m.mixer.window},
      {"padding", mixers::to_string(m.mixer.padding)},
      {"causal", m.mixer.causal},
      {"window_mode", window_mode_name(m.mixer.window_mode)},
      {"normalize_fixed", m.mixer.normalize_fixed},
  };
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path) {
  ModelConfig m;
  ObjectReader r(j, path);
  read_model(r, m, true);
  r.finish();
  validate_model(m, path, true);
  return m;
}

RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  ObjectReader root(j, "");
  const json* ver = root.find("schema_version");
  if (!ver) throw ConfigError("schema_version", "required");
  if (!ver->is_number_integer() || ver->get<long long>() != kConfigSchemaVersion) {
    throw ConfigError("schema_version", "unsupported version (expected " + std::to_string(kConfigSchemaVersion) + ")");
  }

  ObjectReader d = root.child("data");
  d.read("path", c.data.path);
  d.read("min_count", c.data.min_count);
  d.read("valid_candidates", c.data.valid_candidates);
  d.read("test_candidates", c.data.test_candidates);
  d.read("candidate_seed", c.data.candidate_seed);
  d.finish();
  if (c.data.path.empty()) throw ConfigError("data.path", "required: path to the sequence file");
  if (c.data.min_count < 1) throw ConfigError("data.min_count", "must be >= 1");

  ObjectReader m = root.child("model");
  read_model(m, c.model, false);
  m.read("init_seed", c.init_seed);
  m.finish();
  validate_model(c.model, "model", false);

  ObjectReader t = root.child("train");
  t.read("lr", c.train.lr);
  t.read("batch", c.train.batch);
  t.read("max_epochs", c.train.max_epochs);
  t.read("patience", c.train.patience);
  t.read("seed", c.train.seed);
  t.read_enum("negatives", c.train.negatives, parse_negative_mode);
  t.read_enum("valid_mode", c.train.valid_mode, parse_eval_mode);
  t.read("record_time", c.train.record_time);
  t.finish();
  if (!(c.train.lr > 0.0) || !std::isfinite(c.train.lr)) throw ConfigError("train.lr", "must be > 0");
  if (c.train.batch < 1) throw ConfigError("train.batch", "must be >= 1");
  if (c.train.max_epochs < 1) throw ConfigError("train.max_epochs", "must be >= 1");
  if (c.train.patience < 1) throw ConfigError("train.patience", "must be >= 1");

  ObjectReader e = root.child("eval");
  e.read_enum("mode", c.eval.mode, parse_eval_mode);
  e.read_enum("split", c.eval.split, parse_split);
  e.finish();

  ObjectReader o = root.child("output");
  o.read("dir", c.output.dir);
  o.finish();
  if (c.output.dir.empty()) throw ConfigError("output.dir", "must not be empty");

  root.finish();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UserError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_run_config(j);
}

nlohmann::json to_json(const RunConfig& c) {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["data"] = {{"path", c.data.path},
               {"min_count", c.data.min_count},
               {"valid_candidates", c.data.valid_candidates},
               {"test_candidates", c.data.test_candidates},
               {"candidate_seed", c.data.candidate_seed}};
  json m = model_config_to_json(c.model);
  m.erase("vocab_size");
  m["init_seed"] = c.init_seed;
  j["model"] = m;
  j["train"] = {{"lr", c.train.lr},
                {"batch", c.train.batch},
                {"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience},
                {"seed", c.train.seed},
                {"negatives", negative_mode_name(c.train.negatives)},
                {"valid_mode", to_string(c.train.valid_mode)},
                {"record_time", c.train.record_time}};
  j["eval"] = {{"mode", to_string(c.eval.mode)}, {"split", to_string(c.eval.split)}};
  j["output"] = {{"dir", c.output.dir}};
  return j;
}

}  // namespace convformer
