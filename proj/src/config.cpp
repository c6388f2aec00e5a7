#include "fcprint/config.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <fstream>
#include <set>

#include "fcprint/container.hpp"
#include "fcprint/error.hpp"

namespace fcprint::cli {

namespace {

using nlohmann::json;

// Typed, path-aware access to one JSON object. Every accessor records the key
// so finish() can reject anything unexpected.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where("") + " must be an object", path_);
  }

  bool has(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  const json& raw(const char* key) { return obj_.at(key); }
  std::string where(const std::string& key) const {
    if (path_.empty()) return key.empty() ? "config" : key;
    return key.empty() ? path_ : path_ + "." + key;
  }

  void read(const char* key, bool& out) {
    if (!has(key)) return;
    if (!raw(key).is_boolean()) fail(key, "a boolean");
    out = raw(key).get<bool>();
  }
  void read(const char* key, int& out) {
    if (!has(key)) return;
    if (!raw(key).is_number_integer()) fail(key, "an integer");
    out = raw(key).get<int>();
  }
  template <std::unsigned_integral T>
  void read(const char* key, T& out) {
    if (!has(key)) return;
    if (!raw(key).is_number_unsigned()) fail(key, "a non-negative integer");
    out = raw(key).get<T>();
  }
  void read(const char* key, double& out) {
    if (!has(key)) return;
    if (!raw(key).is_number()) fail(key, "a number");
    out = raw(key).get<double>();
    if (!std::isfinite(out)) fail(key, "a finite number");
  }
  void read(const char* key, std::string& out) {
    if (!has(key)) return;
    if (!raw(key).is_string()) fail(key, "a string");
    out = raw(key).get<std::string>();
  }
  void read(const char* key, std::vector<std::string>& out) {
    if (!has(key)) return;
    if (!raw(key).is_array()) fail(key, "an array of strings");
    out.clear();
    for (const auto& v : raw(key)) {
      if (!v.is_string()) fail(key, "an array of strings");
      out.push_back(v.get<std::string>());
    }
  }
  void read(const char* key, std::vector<int>& out) {
    if (!has(key)) return;
    if (!raw(key).is_array()) fail(key, "an array of integers");
    out.clear();
    for (const auto& v : raw(key)) {
      if (!v.is_number_integer()) fail(key, "an array of integers");
      out.push_back(v.get<int>());
    }
  }
  void read(const char* key, std::vector<std::size_t>& out) {
    if (!has(key)) return;
    if (!raw(key).is_array()) fail(key, "an array of non-negative integers");
    out.clear();
    for (const auto& v : raw(key)) {
      if (!v.is_number_unsigned()) fail(key, "an array of non-negative integers");
      out.push_back(v.get<std::size_t>());
    }
  }

  [[noreturn]] void fail(const char* key, const std::string& expected) const {
    throw ConfigError("config field '" + where(key) + "' must be " + expected, where(key));
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown config field '" + where(key) + "'", where(key));
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void check_range(const std::vector<int>& range, const char* field) {
  if (range.size() != 2) throw ConfigError(std::string("config field '") + field + "' must be [lo, hi]", field);
  if (range[0] < 2 || range[1] > 64 || range[0] > range[1]) {
    throw ConfigError(std::string("config field '") + field + "' must satisfy 2 <= lo <= hi <= 64", field);
  }
}

std::vector<int> expand(const std::vector<int>& range) {
  std::vector<int> out;
  for (int v = range[0]; v <= range[1]; ++v) out.push_back(v);
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!cohort_dir) {
    try {
      synth::CohortConfig c = cohort;
      c.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(e.what(), "cohort." + e.field());
    }
    const auto& sessions = cohort.sessions;
    auto known = [&](const std::string& s) { return std::find(sessions.begin(), sessions.end(), s) != sessions.end(); };
    if (!known(train_session)) throw ConfigError("train_session '" + train_session + "' is not a cohort session", "train_session");
    for (const auto& s : test_sessions) {
      if (!known(s)) throw ConfigError("test session '" + s + "' is not a cohort session", "test_sessions");
    }
  }
  if (test_sessions.empty()) throw ConfigError("test_sessions must not be empty", "test_sessions");
  if (methods.empty()) throw ConfigError("methods must not be empty", "methods");
  if (pipeline.K < 2 || pipeline.K > 64) throw ConfigError("K must be in [2, 64]", "K");
  if (pipeline.L < 2 || pipeline.L > 64) throw ConfigError("L must be in [2, 64]", "L");
  if (pipeline.L > pipeline.K) throw ConfigError("L must not exceed K", "L");
  if (pipeline.ksvd_iterations < 1) throw ConfigError("ksvd_iterations must be >= 1", "ksvd_iterations");
  check_range(grid_K, "grid.K");
  check_range(grid_L, "grid.L");
  if (n_perm < 0) throw ConfigError("n_perm must be >= 0", "n_perm");
  try {
    pipeline.ae.arch.validate();
    pipeline.ae.train.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(e.what(), "autoencoder." + e.field());
  }
  const auto& prep = pipeline.preprocessing;
  if (prep.bandpass && !(prep.low_hz >= 0.0 && prep.low_hz < prep.high_hz && prep.high_hz <= prep.sample_rate_hz / 2.0)) {
    throw ConfigError("band must satisfy 0 <= low_hz < high_hz <= sample_rate_hz/2", "preprocessing.bandpass");
  }
}

std::vector<int> ExperimentConfig::grid_K_values() const { return expand(grid_K); }
std::vector<int> ExperimentConfig::grid_L_values() const { return expand(grid_L); }

ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig c;
  Section top(j, "");

  if (top.has("cohort")) {
    Section s(top.raw("cohort"), "cohort");
    auto& co = c.cohort;
    s.read("n_subjects", co.n_subjects);
    s.read("p_rois", co.p_rois);
    s.read("n_timepoints", co.n_timepoints);
    s.read("sessions", co.sessions);
    s.read("subject_strength", co.subject_strength);
    s.read("group_strength", co.group_strength);
    s.read("task_strength", co.task_strength);
    s.read("noise_std", co.noise_std);
    s.read("rank_subject", co.rank_subject);
    s.read("rank_group", co.rank_group);
    s.read("rank_task", co.rank_task);
    s.read("subject_networks", co.subject_networks);
    s.read("n_networks", co.n_networks);
    s.finish();
  }
  std::string cohort_dir;
  top.read("cohort_dir", cohort_dir);
  if (!cohort_dir.empty()) c.cohort_dir = cohort_dir;

  top.read("train_session", c.train_session);
  top.read("test_sessions", c.test_sessions);
  if (top.has("methods")) {
    std::vector<std::string> names;
    top.read("methods", names);
    c.methods.clear();
    for (const auto& n : names) {
      try {
        c.methods.push_back(fingerprint::method_from_string(n));
      } catch (const ConfigError& e) {
        throw ConfigError(e.what(), "methods");
      }
    }
  }
  top.read("K", c.pipeline.K);
  top.read("L", c.pipeline.L);
  top.read("ksvd_iterations", c.pipeline.ksvd_iterations);
  if (top.has("grid")) {
    Section g(top.raw("grid"), "grid");
    g.read("K", c.grid_K);
    g.read("L", c.grid_L);
    g.finish();
  }
  top.read("n_networks", c.n_networks);
  top.read("n_perm", c.n_perm);
  top.read("both_directions", c.both_directions);
  top.read("fisher_z", c.pipeline.fisher_z);
  if (top.has("refine_target")) {
    std::string target;
    top.read("refine_target", target);
    c.pipeline.refine_target = fingerprint::refine_target_from_string(target);
  }
  std::string out;
  top.read("output_dir", out);
  if (!out.empty()) c.output_dir = out;
  top.read("seed", c.seed);

  if (top.has("autoencoder")) {
    Section a(top.raw("autoencoder"), "autoencoder");
    auto& arch = c.pipeline.ae.arch;
    auto& tc = c.pipeline.ae.train;
    std::vector<int> channels;
    for (const auto& l : arch.encoder) channels.push_back(l.out_channels);
    int kernel = arch.encoder.front().kernel;
    int stride = arch.encoder.front().stride;
    a.read("channels", channels);
    a.read("kernel", kernel);
    a.read("stride", stride);
    if (channels.empty()) a.fail("channels", "a nonempty array of integers");
    arch.encoder.clear();
    for (int ch : channels) arch.encoder.push_back({ch, kernel, stride});
    a.read("latent_dim", arch.latent_dim);
    if (a.has("activation")) {
      std::string act;
      a.read("activation", act);
      try {
        arch.activation = convae::activation_from_string(act);
      } catch (const ConfigError&) {
        a.fail("activation", "\"tanh\" or \"identity\"");
      }
    }
    a.read("epochs", tc.epochs);
    a.read("batch_size", tc.batch_size);
    a.read("learning_rate", tc.learning_rate);
    a.read("beta1", tc.beta1);
    a.read("beta2", tc.beta2);
    a.read("epsilon", tc.epsilon);
    a.read("init_scale", tc.init_scale);
    a.finish();
  }
  if (top.has("preprocessing")) {
    Section p(top.raw("preprocessing"), "preprocessing");
    auto& prep = c.pipeline.preprocessing;
    p.read("detrend", prep.detrend);
    if (p.has("bandpass")) {
      Section b(p.raw("bandpass"), "preprocessing.bandpass");
      prep.bandpass = true;
      b.read("low_hz", prep.low_hz);
      b.read("high_hz", prep.high_hz);
      b.read("sample_rate_hz", prep.sample_rate_hz);
      b.finish();
    }
    p.finish();
  }
  top.finish();

  c.cohort.seed = c.seed;
  c.pipeline.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what(), "config");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what(), "config");
  }
  return parse_config(j);
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  if (c.cohort_dir) {
    j["cohort_dir"] = c.cohort_dir->string();
  } else {
    const auto& co = c.cohort;
    j["cohort"] = {{"n_subjects", co.n_subjects},       {"p_rois", co.p_rois},
                   {"n_timepoints", co.n_timepoints},   {"sessions", co.sessions},
                   {"subject_strength", co.subject_strength}, {"group_strength", co.group_strength},
                   {"task_strength", co.task_strength}, {"noise_std", co.noise_std},
                   {"rank_subject", co.rank_subject},   {"rank_group", co.rank_group},
                   {"rank_task", co.rank_task},         {"subject_networks", co.subject_networks},
                   {"n_networks", co.n_networks}};
  }
  j["train_session"] = c.train_session;
  j["test_sessions"] = c.test_sessions;
  std::vector<std::string> methods;
  for (auto m : c.methods) methods.push_back(fingerprint::to_string(m));
  j["methods"] = methods;
  j["K"] = c.pipeline.K;
  j["L"] = c.pipeline.L;
  j["ksvd_iterations"] = c.pipeline.ksvd_iterations;
  j["grid"] = {{"K", c.grid_K}, {"L", c.grid_L}};
  j["n_networks"] = c.n_networks;
  j["n_perm"] = c.n_perm;
  j["both_directions"] = c.both_directions;
  j["fisher_z"] = c.pipeline.fisher_z;
  j["refine_target"] = fingerprint::to_string(c.pipeline.refine_target);
  j["output_dir"] = c.output_dir.string();
  j["seed"] = c.seed;
  const auto& arch = c.pipeline.ae.arch;
  const auto& tc = c.pipeline.ae.train;
  std::vector<int> channels;
  for (const auto& l : arch.encoder) channels.push_back(l.out_channels);
  j["autoencoder"] = {{"channels", channels},
                      {"kernel", arch.encoder.front().kernel},
                      {"stride", arch.encoder.front().stride},
                      {"latent_dim", arch.latent_dim},
                      {"activation", convae::to_string(arch.activation)},
                      {"epochs", tc.epochs},
                      {"batch_size", tc.batch_size},
                      {"learning_rate", tc.learning_rate},
                      {"beta1", tc.beta1},
                      {"beta2", tc.beta2},
                      {"epsilon", tc.epsilon},
                      {"init_scale", tc.init_scale}};
  const auto& prep = c.pipeline.preprocessing;
  j["preprocessing"] = {{"detrend", prep.detrend}};
  if (prep.bandpass) {
    j["preprocessing"]["bandpass"] = {
        {"low_hz", prep.low_hz}, {"high_hz", prep.high_hz}, {"sample_rate_hz", prep.sample_rate_hz}};
  }
  return j;
}

void apply_overrides(ExperimentConfig& c, const Overrides& o) {
  if (o.seed) {
    c.seed = *o.seed;
    c.cohort.seed = *o.seed;
    c.pipeline.seed = *o.seed;
  }
  if (o.out) c.output_dir = *o.out;
  if (o.refine_target) c.pipeline.refine_target = fingerprint::refine_target_from_string(*o.refine_target);
  if (o.fisher_z) c.pipeline.fisher_z = true;
}

}  // namespace fcprint::cli
