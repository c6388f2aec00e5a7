#pragma once

#include <filesystem>
#include <string>

#include "fcprint/config.hpp"
#include "fcprint/synth.hpp"

namespace fcprint::cli {

// Subcommands. Data products go to c.output_dir; progress goes to stderr.
// Every command is a pure function of the config, so reruns are
// byte-identical.
void cmd_synth(const ExperimentConfig& c);
void cmd_run(const ExperimentConfig& c);
void cmd_grid(const ExperimentConfig& c);
void cmd_ablate(const ExperimentConfig& c);
// Header JSON of a container, pretty-printed.
std::string cmd_inspect(const std::filesystem::path& container);

// Writes one container per (subject, session) under dir/series plus
// dir/manifest.json listing each file with its SHA-256.
void write_cohort(const synth::TimeSeriesSet& set, const synth::CohortConfig& config, const std::filesystem::path& dir);
// Reads a cohort written by write_cohort, verifying every checksum.
synth::TimeSeriesSet read_cohort(const std::filesystem::path& dir);

// Full command-line entry point; returns the process exit code
// (0 success, 2 configuration error, 3 runtime or numeric failure).
int run_cli(int argc, char** argv);

}  // namespace fcprint::cli
