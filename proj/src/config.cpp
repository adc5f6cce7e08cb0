#include "direct/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "direct/errors.hpp"

extern char** environ;

namespace direct::config {

namespace {

const char* const kOptimizerKinds[] = {"quasi_newton", "sgd"};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Reads fields of one JSON object, remembering which keys were consumed and every problem seen.
class Reader {
 public:
  Reader(const Json& j, std::string prefix, std::vector<std::string>& errors)
      : j_(j), prefix_(std::move(prefix)), errors_(errors) {
    if (!j_.is_object()) errors_.push_back(where("") + ": expected an object");
  }

  ~Reader() {
    if (!j_.is_object()) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) errors_.push_back(where(key) + ": unknown key");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      errors_.push_back(where(key) + ": wrong type (" + std::string(j_.at(key).type_name()) + ")");
    }
  }

  template <typename T>
  void get_optional(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key) || j_.at(key).is_null()) return;
    T value{};
    get(key, value);
    out = value;
  }

  template <typename E, std::size_t N>
  void get_enum(const std::string& key, E& out, const char* const (&names)[N]) {
    std::string s;
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    get(key, s);
    for (std::size_t i = 0; i < N; ++i) {
      if (s == names[i]) {
        out = static_cast<E>(i);
        return;
      }
    }
    std::string allowed;
    for (std::size_t i = 0; i < N; ++i) allowed += (i ? ", " : "") + std::string(names[i]);
    errors_.push_back(where(key) + ": '" + s + "' is not one of " + allowed);
  }

  const Json* child(const std::string& key) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }

  std::string where(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

 private:
  const Json& j_;
  std::string prefix_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

const char* const kModelNames[] = {"glm", "logistic", "bnn"};
const char* const kVariationalNames[] = {"mean_field", "mixture"};
const char* const kEntropyNames[] = {"bound", "sgd"};

[[noreturn]] void fail(const std::vector<std::string>& errors) {
  std::ostringstream msg;
  msg << "invalid configuration (" << errors.size() << " problem" << (errors.size() == 1 ? "" : "s") << "):";
  for (const auto& e : errors) msg << "\n  " << e;
  throw ConfigError(msg.str());
}

std::vector<std::string> problems(const RunConfig& c) {
  std::vector<std::string> errors;
  if (c.mbar < 2) errors.emplace_back("mbar: must be at least 2");
  if (c.mbar > 65535) errors.emplace_back("mbar: must fit in 16 bits");
  if (c.mbar_sigma < 1) errors.emplace_back("mbar_sigma: must be positive");
  if (c.model != ModelKind::bnn && (c.b == 0 || c.b % 2 != 0)) errors.emplace_back("b: must be even and positive");
  if (c.variational.kind == VariationalKind::mixture) {
    if (c.variational.r < 1) errors.emplace_back("variational.r: must be positive");
    if (c.model != ModelKind::glm) errors.emplace_back("variational.kind: mixtures are supported for glm only");
  }
  if (!(c.variational.perturbation >= 0.0)) errors.emplace_back("variational.perturbation: must be non-negative");
  const auto& o = c.optimizer;
  if (o.max_iterations == 0) errors.emplace_back("optimizer.max_iterations: must be positive");
  if (!(o.grad_tol > 0.0)) errors.emplace_back("optimizer.grad_tol: must be positive");
  if (o.memory == 0) errors.emplace_back("optimizer.memory: must be positive");
  if (!(o.wolfe_c1 > 0.0 && o.wolfe_c1 < o.wolfe_c2 && o.wolfe_c2 < 1.0)) {
    errors.emplace_back("optimizer.wolfe_c1/wolfe_c2: need 0 < c1 < c2 < 1");
  }
  if (!(o.learning_rate > 0.0)) errors.emplace_back("optimizer.learning_rate: must be positive");
  if (!(o.lr_decay >= 0.0)) errors.emplace_back("optimizer.lr_decay: must be non-negative");
  if (o.batch_size == 0) errors.emplace_back("optimizer.batch_size: must be positive");
  if (o.mc_samples < 2) errors.emplace_back("optimizer.mc_samples: must be at least 2");
  if (!(o.time_budget >= 0.0)) errors.emplace_back("optimizer.time_budget: must be non-negative");
  if (o.trace_stride == 0) errors.emplace_back("optimizer.trace_stride: must be positive");
  const auto& f = c.features;
  if (f.lengthscales) {
    for (double l : *f.lengthscales) {
      if (!(l > 0.0)) {
        errors.emplace_back("features.lengthscales: entries must be positive");
        break;
      }
    }
  }
  if (f.signal_sd && !(*f.signal_sd > 0.0)) errors.emplace_back("features.signal_sd: must be positive");
  if (f.noise_var && !(*f.noise_var > 0.0)) errors.emplace_back("features.noise_var: must be positive");
  if (f.quantize_bits != 8 && f.quantize_bits != 16) errors.emplace_back("features.quantize_bits: must be 8 or 16");
  if (f.chunk_rows == 0) errors.emplace_back("features.chunk_rows: must be positive");
  if (c.model == ModelKind::bnn) {
    if (c.bnn_layers.empty() || c.bnn_layers.back() != 1) errors.emplace_back("bnn.layers: last width must be 1");
    for (auto w : c.bnn_layers) {
      if (w == 0) {
        errors.emplace_back("bnn.layers: widths must be positive");
        break;
      }
    }
  }
  if (c.paths.train.empty()) errors.emplace_back("paths.train: required");
  return errors;
}

Json parse_value(const std::string& raw) {
  try {
    return Json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    return Json(raw);
  }
}

}  // namespace

std::string to_string(ModelKind k) { return kModelNames[static_cast<int>(k)]; }
std::string to_string(VariationalKind k) { return kVariationalNames[static_cast<int>(k)]; }
std::string to_string(MixtureEntropy k) { return kEntropyNames[static_cast<int>(k)]; }

Json to_json(const RunConfig& c) {
  Json j;
  j["model"] = to_string(c.model);
  j["variational"] = {{"kind", to_string(c.variational.kind)},
                      {"r", c.variational.r},
                      {"entropy", to_string(c.variational.entropy)},
                      {"perturbation", c.variational.perturbation}};
  j["mbar"] = c.mbar;
  j["mbar_sigma"] = c.mbar_sigma;
  j["b"] = c.b;
  j["seed"] = c.seed;
  const auto& o = c.optimizer;
  j["optimizer"] = {{"kind", kOptimizerKinds[static_cast<int>(o.optimizer)]},
                    {"max_iterations", o.max_iterations},
                    {"grad_tol", o.grad_tol},
                    {"memory", o.memory},
                    {"wolfe_c1", o.wolfe_c1},
                    {"wolfe_c2", o.wolfe_c2},
                    {"learning_rate", o.learning_rate},
                    {"lr_decay", o.lr_decay},
                    {"batch_size", o.batch_size},
                    {"mc_samples", o.mc_samples},
                    {"time_budget", o.time_budget},
                    {"trace_stride", o.trace_stride}};
  const auto& f = c.features;
  j["features"] = {{"standardize", f.standardize},
                   {"lengthscales", f.lengthscales ? Json(*f.lengthscales) : Json(nullptr)},
                   {"signal_sd", f.signal_sd ? Json(*f.signal_sd) : Json(nullptr)},
                   {"noise_var", f.noise_var ? Json(*f.noise_var) : Json(nullptr)},
                   {"quantize_bits", f.quantize_bits},
                   {"chunk_rows", f.chunk_rows}};
  j["bnn"] = {{"layers", c.bnn_layers}};
  j["paths"] = {{"train", c.paths.train},
                {"target", c.paths.target},
                {"artifact", c.paths.artifact},
                {"trace", c.paths.trace}};
  return j;
}

RunConfig from_json(const Json& j) {
  RunConfig c;
  std::vector<std::string> errors;
  {
    Reader top(j, "", errors);
    top.get_enum("model", c.model, kModelNames);
    top.get("mbar", c.mbar);
    top.get("mbar_sigma", c.mbar_sigma);
    top.get("b", c.b);
    top.get("seed", c.seed);
    if (const Json* v = top.child("variational")) {
      Reader r(*v, "variational", errors);
      r.get_enum("kind", c.variational.kind, kVariationalNames);
      r.get("r", c.variational.r);
      r.get_enum("entropy", c.variational.entropy, kEntropyNames);
      r.get("perturbation", c.variational.perturbation);
    }
    if (const Json* v = top.child("optimizer")) {
      Reader r(*v, "optimizer", errors);
      auto& o = c.optimizer;
      r.get_enum("kind", o.optimizer, kOptimizerKinds);
      r.get("max_iterations", o.max_iterations);
      r.get("grad_tol", o.grad_tol);
      r.get("memory", o.memory);
      r.get("wolfe_c1", o.wolfe_c1);
      r.get("wolfe_c2", o.wolfe_c2);
      r.get("learning_rate", o.learning_rate);
      r.get("lr_decay", o.lr_decay);
      r.get("batch_size", o.batch_size);
      r.get("mc_samples", o.mc_samples);
      r.get("time_budget", o.time_budget);
      r.get("trace_stride", o.trace_stride);
    }
    if (const Json* v = top.child("features")) {
      Reader r(*v, "features", errors);
      auto& f = c.features;
      r.get("standardize", f.standardize);
      r.get_optional("lengthscales", f.lengthscales);
      r.get_optional("signal_sd", f.signal_sd);
      r.get_optional("noise_var", f.noise_var);
      r.get("quantize_bits", f.quantize_bits);
      r.get("chunk_rows", f.chunk_rows);
    }
    if (const Json* v = top.child("bnn")) {
      Reader r(*v, "bnn", errors);
      r.get("layers", c.bnn_layers);
    }
    if (const Json* v = top.child("paths")) {
      Reader r(*v, "paths", errors);
      r.get("train", c.paths.train);
      r.get("target", c.paths.target);
      r.get("artifact", c.paths.artifact);
      r.get("trace", c.paths.trace);
    }
  }
  if (!errors.empty()) fail(errors);
  c.optimizer.seed = c.seed;
  return c;
}

void validate(const RunConfig& config) {
  const auto errors = problems(config);
  if (!errors.empty()) fail(errors);
}

void apply_env_overrides(Json& j, const std::map<std::string, std::string>& env) {
  static const std::string prefix = "DIRECT_";
  for (const auto& [name, raw] : env) {
    if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size()) continue;
    std::string key = lower(name.substr(prefix.size()));
    Json* node = &j;
    std::size_t pos = 0;
    while (true) {
      const auto sep = key.find("__", pos);
      const std::string part = key.substr(pos, sep == std::string::npos ? std::string::npos : sep - pos);
      if (sep == std::string::npos) {
        (*node)[part] = parse_value(raw);
        break;
      }
      if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = Json::object();
      node = &(*node)[part];
      pos = sep + 2;
    }
  }
}

std::map<std::string, std::string> direct_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    if (entry.rfind("DIRECT_", 0) == 0) out.emplace(entry.substr(0, eq), entry.substr(eq + 1));
  }
  return out;
}

RunConfig load(const std::string& path, const std::map<std::string, std::string>& env) {
  Json j = Json::object();
  std::filesystem::path base;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    try {
      j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    base = std::filesystem::path(path).parent_path();
  }
  apply_env_overrides(j, env);
  RunConfig c = from_json(j);
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative() && !base.empty()) p = (base / p).string();
  };
  resolve(c.paths.train);
  resolve(c.paths.artifact);
  resolve(c.paths.trace);
  return c;
}

}  // namespace direct::config
