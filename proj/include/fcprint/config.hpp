#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fcprint/fingerprint.hpp"
#include "fcprint/synth.hpp"

namespace fcprint::cli {

// One experiment, read from a JSON file. Every key is optional except where
// noted; unknown keys are rejected so typos surface as configuration errors.
struct ExperimentConfig {
  synth::CohortConfig cohort;
  // When set, the cohort is read from a `synth` output directory instead of
  // being generated from `cohort`.
  std::optional<std::filesystem::path> cohort_dir;
  std::string train_session = "rest";
  std::vector<std::string> test_sessions{"motor", "wm", "emotion"};
  std::vector<fingerprint::Method> methods{fingerprint::Method::finn_raw, fingerprint::Method::baseline_groupavg,
                                           fingerprint::Method::convae_sdl};
  fingerprint::PipelineConfig pipeline;
  std::vector<int> grid_K{2, 15};  // inclusive [lo, hi]
  std::vector<int> grid_L{2, 15};
  std::size_t n_networks = 12;
  int n_perm = 1000;
  bool both_directions = false;
  std::filesystem::path output_dir = "fcprint_out";
  std::uint64_t seed = 0;

  // Checks cross-field invariants; throws ConfigError naming the field.
  void validate() const;
  std::vector<int> grid_K_values() const;
  std::vector<int> grid_L_values() const;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical JSON form; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const ExperimentConfig& c);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> refine_target;
  bool fisher_z = false;
};

void apply_overrides(ExperimentConfig& c, const Overrides& o);

}  // namespace fcprint::cli
