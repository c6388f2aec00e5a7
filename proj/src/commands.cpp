#include "fcprint/commands.hpp"

#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "fcprint/container.hpp"
#include "fcprint/error.hpp"
#include "fcprint/fingerprint.hpp"
#include "fcprint/rng.hpp"

namespace fcprint::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log(const std::string& msg) { std::cerr << "[fcprint] " << msg << '\n'; }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

std::string series_file(const std::string& subject, const std::string& session) {
  return "series/" + subject + "_" + session + ".fcm";
}

synth::TimeSeriesSet resolve_cohort(const ExperimentConfig& c) {
  synth::TimeSeriesSet set = c.cohort_dir ? read_cohort(*c.cohort_dir) : synth::generate_cohort(c.cohort);
  set.session_index(c.train_session);
  for (const auto& s : c.test_sessions) set.session_index(s);
  return set;
}

std::string pair_tag(const std::string& train, const std::string& test) { return train + "_" + test; }

// Stream for permutation draws of (test session index, method).
std::uint64_t permutation_seed(const ExperimentConfig& c, std::size_t test_index, fingerprint::Method m) {
  return derive_seed(c.seed, {stream::kPermutation, test_index, static_cast<std::uint64_t>(m)});
}

json histogram(const fingerprint::PermutationReport& report, std::size_t n) {
  std::vector<std::size_t> counts(n + 1, 0);
  for (double a : report.null_accuracies) ++counts[static_cast<std::size_t>(std::llround(a * double(n)))];
  json out = json::array();
  for (std::size_t hits = 0; hits <= n; ++hits) {
    if (counts[hits] == 0) continue;
    out.push_back({{"hits", hits}, {"accuracy", double(hits) / double(n)}, {"count", counts[hits]}});
  }
  return out;
}

std::vector<fingerprint::Method> sdl_methods(const ExperimentConfig& c) {
  std::vector<fingerprint::Method> out;
  for (auto m : c.methods) {
    if (m != fingerprint::Method::finn_raw) out.push_back(m);
  }
  return out;
}

void write_dictionary(const fs::path& dir, const std::string& stem, const sparse::KsvdResult& fit,
                      const fingerprint::PipelineConfig& pc, const std::string& session) {
  auto d = io::MatrixContainer::from_matrix(fit.dictionary.atoms, "dictionary");
  d.header["K"] = pc.K;
  d.header["L"] = pc.L;
  d.header["seed"] = pc.seed;
  d.header["session"] = session;
  d.header["objective_history"] = fit.report.objective_history;
  io::write_container(dir / (stem + "_dictionary.fcm"), d);
  auto x = io::MatrixContainer::from_matrix(fit.codes.codes, "sparse_codes");
  x.header["K"] = pc.K;
  x.header["L"] = pc.L;
  x.header["seed"] = pc.seed;
  x.header["session"] = session;
  io::write_container(dir / (stem + "_codes.fcm"), x);
}

json architecture_json(const convae::Architecture& arch) {
  json layers = json::array();
  for (const auto& l : arch.encoder) {
    layers.push_back({{"out_channels", l.out_channels}, {"kernel", l.kernel}, {"stride", l.stride}});
  }
  return {{"input_size", arch.input_size},
          {"encoder", layers},
          {"latent_dim", arch.latent_dim},
          {"activation", convae::to_string(arch.activation)}};
}

}  // namespace

void write_cohort(const synth::TimeSeriesSet& set, const synth::CohortConfig& config, const fs::path& dir) {
  set.validate();
  ensure_dir(dir / "series");
  json entries = json::array();
  for (std::size_t i = 0; i < set.n_subjects(); ++i) {
    for (std::size_t s = 0; s < set.n_sessions(); ++s) {
      auto c = io::MatrixContainer::from_matrix(set.at(i, s), "timeseries");
      c.header["subject"] = set.subject_ids[i];
      c.header["session"] = set.session_labels[s];
      c.header["seed"] = config.seed;
      const std::string bytes = io::serialize(c);
      const std::string rel = series_file(set.subject_ids[i], set.session_labels[s]);
      io::write_text(dir / rel, bytes);
      entries.push_back({{"subject", set.subject_ids[i]},
                         {"session", set.session_labels[s]},
                         {"file", rel},
                         {"sha256", io::sha256_hex(bytes)}});
    }
  }
  json manifest = {{"format", "fcprint-cohort-1"},
                   {"subjects", set.subject_ids},
                   {"sessions", set.session_labels},
                   {"seed", config.seed},
                   {"entries", entries}};
  io::write_json(dir / "manifest.json", manifest);
}

synth::TimeSeriesSet read_cohort(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(io::read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw IoError("cohort manifest is not valid JSON: " + std::string(e.what()));
  }
  synth::TimeSeriesSet set;
  try {
    set.subject_ids = manifest.at("subjects").get<std::vector<std::string>>();
    set.session_labels = manifest.at("sessions").get<std::vector<std::string>>();
    std::map<std::pair<std::string, std::string>, json> by_key;
    for (const auto& e : manifest.at("entries")) {
      by_key[{e.at("subject").get<std::string>(), e.at("session").get<std::string>()}] = e;
    }
    set.data.resize(set.subject_ids.size());
    for (std::size_t i = 0; i < set.subject_ids.size(); ++i) {
      for (const auto& session : set.session_labels) {
        auto it = by_key.find({set.subject_ids[i], session});
        if (it == by_key.end()) throw IoError("manifest lacks " + set.subject_ids[i] + "/" + session);
        const std::string bytes = io::read_text(dir / it->second.at("file").get<std::string>());
        if (io::sha256_hex(bytes) != it->second.at("sha256").get<std::string>()) {
          throw IoError("checksum mismatch for " + it->second.at("file").get<std::string>());
        }
        set.data[i].push_back(io::deserialize(bytes).to_matrix());
      }
    }
  } catch (const json::exception& e) {
    throw IoError("malformed cohort manifest: " + std::string(e.what()));
  }
  set.validate();
  return set;
}

void cmd_synth(const ExperimentConfig& c) {
  if (c.cohort_dir) throw ConfigError("synth generates a cohort; remove cohort_dir", "cohort_dir");
  const synth::TimeSeriesSet set = synth::generate_cohort(c.cohort);
  write_cohort(set, c.cohort, c.output_dir);
  log("wrote " + std::to_string(set.n_subjects() * set.n_sessions()) + " series to " + c.output_dir.string());
}

void cmd_run(const ExperimentConfig& c) {
  const synth::TimeSeriesSet cohort = resolve_cohort(c);
  ensure_dir(c.output_dir);
  const auto& pc = c.pipeline;
  const std::size_t train_idx = cohort.session_index(c.train_session);
  const auto train_conns = connectome::session_connectomes(cohort, train_idx, pc.preprocessing);

  std::optional<convae::TrainResult> autoencoder;
  for (auto m : c.methods) {
    if (m != fingerprint::Method::convae_sdl) continue;
    std::vector<Eigen::MatrixXd> train;
    for (const auto& conn : train_conns) train.push_back(pc.fisher_z ? connectome::fisher_z(conn.matrix) : conn.matrix);
    log("training autoencoder on session " + c.train_session);
    autoencoder = fingerprint::train_autoencoder(train, pc);
    auto params = io::MatrixContainer::from_vector(autoencoder->params.values, "autoencoder_params");
    params.header["architecture"] = architecture_json(autoencoder->params.arch);
    params.header["seed"] = autoencoder->params.seed;
    params.header["session"] = c.train_session;
    params.header["loss_history"] = autoencoder->loss_history;
    io::write_container(c.output_dir / ("autoencoder_" + c.train_session + ".fcm"), params);
    io::CsvTable losses;
    losses.header = {"epoch", "loss"};
    for (std::size_t e = 0; e < autoencoder->loss_history.size(); ++e) {
      losses.rows.push_back({std::to_string(e + 1), io::format_double(autoencoder->loss_history[e])});
    }
    io::write_csv(c.output_dir / ("ae_loss_" + c.train_session + ".csv"), losses);
  }

  io::CsvTable accuracy;
  accuracy.header = {"train_session", "test_session"};
  for (auto m : c.methods) accuracy.header.push_back(fingerprint::to_string(m));
  if (c.both_directions) {
    for (auto m : c.methods) {
      accuracy.header.push_back(fingerprint::to_string(m) + "_reverse");
      accuracy.header.push_back(fingerprint::to_string(m) + "_mean");
    }
  }
  io::CsvTable perm_table;
  perm_table.header = {"train_session", "test_session", "method", "observed_accuracy", "p_value", "n_perm"};

  json records = json::array();
  for (std::size_t t = 0; t < c.test_sessions.size(); ++t) {
    const std::string& test = c.test_sessions[t];
    const auto test_conns = connectome::session_connectomes(cohort, cohort.session_index(test), pc.preprocessing);
    const auto pair = fingerprint::make_session_pair(train_conns, test_conns, pc.fisher_z);
    std::vector<std::string> row{c.train_session, test};
    std::vector<std::string> reverse_cols;
    json record = {{"train_session", c.train_session}, {"test_session", test}};

    for (auto m : c.methods) {
      const std::string name = fingerprint::to_string(m);
      fingerprint::PipelineConfig mc = pc;
      mc.method = m;
      log("running " + name + " on " + c.train_session + " -> " + test);
      const auto output = fingerprint::run_on_pair(pair, mc, autoencoder ? &*autoencoder : nullptr);
      const auto& result = output.result;
      const std::string stem = pair_tag(c.train_session, test) + "_" + name;

      auto sim = io::MatrixContainer::from_matrix(result.simmat.values, "similarity");
      sim.header["rows_session"] = c.train_session;
      sim.header["cols_session"] = test;
      sim.header["subjects"] = pair.subject_ids;
      sim.header["method"] = name;
      sim.header["seed"] = c.seed;
      io::write_container(c.output_dir / ("simmat_" + stem + ".fcm"), sim);
      if (output.dictionaries) {
        write_dictionary(c.output_dir, stem + "_train", output.dictionaries->train, mc, c.train_session);
        write_dictionary(c.output_dir, stem + "_test", output.dictionaries->test, mc, test);
      }

      row.push_back(io::format_double(result.accuracy));
      record["accuracy"][name] = result.accuracy;
      record["predictions"][name] = result.predictions;
      if (c.both_directions) {
        const double rev = fingerprint::identify_reverse(result.simmat).accuracy;
        reverse_cols.push_back(io::format_double(rev));
        reverse_cols.push_back(io::format_double(0.5 * (result.accuracy + rev)));
        record["accuracy_reverse"][name] = rev;
        record["accuracy_mean"][name] = 0.5 * (result.accuracy + rev);
      }
      if (c.n_perm > 0) {
        const auto report = fingerprint::permutation_test(result, c.n_perm, permutation_seed(c, t, m));
        perm_table.rows.push_back({c.train_session, test, name, io::format_double(report.observed_accuracy),
                                   io::format_double(report.p_value), std::to_string(c.n_perm)});
        record["p_value"][name] = report.p_value;
        io::write_json(c.output_dir / ("perm_" + stem + ".json"),
                       {{"train_session", c.train_session},
                        {"test_session", test},
                        {"method", name},
                        {"observed_accuracy", report.observed_accuracy},
                        {"p_value", report.p_value},
                        {"n_perm", c.n_perm},
                        {"null_histogram", histogram(report, result.predictions.size())}});
      }
    }
    row.insert(row.end(), reverse_cols.begin(), reverse_cols.end());
    accuracy.rows.push_back(row);
    records.push_back(record);
  }

  io::write_csv(c.output_dir / "accuracy.csv", accuracy);
  if (c.n_perm > 0) io::write_csv(c.output_dir / "permutation.csv", perm_table);
  std::vector<std::string> methods;
  for (auto m : c.methods) methods.push_back(fingerprint::to_string(m));
  // Results do not depend on where they are written.
  json recorded = to_json(c);
  recorded.erase("output_dir");
  io::write_json(c.output_dir / "summary.json", {{"train_session", c.train_session},
                                                 {"methods", methods},
                                                 {"seed", c.seed},
                                                 {"n_subjects", cohort.n_subjects()},
                                                 {"config", recorded},
                                                 {"records", records}});
}

void cmd_grid(const ExperimentConfig& c) {
  const auto methods = sdl_methods(c);
  if (methods.empty()) throw ConfigError("grid needs baseline_groupavg or convae_sdl in methods", "methods");
  const synth::TimeSeriesSet cohort = resolve_cohort(c);
  ensure_dir(c.output_dir);
  for (const auto& test : c.test_sessions) {
    for (auto m : methods) {
      fingerprint::PipelineConfig mc = c.pipeline;
      mc.method = m;
      log("grid " + fingerprint::to_string(m) + " on " + c.train_session + " -> " + test);
      const auto cells =
          fingerprint::grid_search(cohort, c.train_session, test, mc, c.grid_K_values(), c.grid_L_values());
      io::CsvTable table;
      table.header = {"K", "L", "accuracy"};
      for (const auto& cell : cells) {
        if (!cell.accuracy) continue;
        table.rows.push_back({std::to_string(cell.K), std::to_string(cell.L), io::format_double(*cell.accuracy)});
      }
      io::write_csv(c.output_dir / ("grid_" + pair_tag(c.train_session, test) + "_" + fingerprint::to_string(m) + ".csv"),
                    table);
    }
  }
}

void cmd_ablate(const ExperimentConfig& c) {
  const synth::TimeSeriesSet cohort = resolve_cohort(c);
  ensure_dir(c.output_dir);
  const auto p = static_cast<std::size_t>(cohort.at(0, 0).rows());
  if (c.n_networks < 1 || c.n_networks > p) throw ConfigError("n_networks must be in [1, p_rois]", "n_networks");
  const synth::NetworkPartition partition = synth::default_partition(p, c.n_networks);
  for (const auto& test : c.test_sessions) {
    for (auto m : c.methods) {
      fingerprint::PipelineConfig mc = c.pipeline;
      mc.method = m;
      log("ablation " + fingerprint::to_string(m) + " on " + c.train_session + " -> " + test);
      const auto report = fingerprint::ablation(cohort, partition, c.train_session, test, mc);
      io::CsvTable table;
      table.header = {"network", "name", "accuracy", "delta"};
      table.rows.push_back({"baseline", "none", io::format_double(report.baseline_accuracy), io::format_double(0.0)});
      for (const auto& row : report.rows) {
        if (!row.warning.empty()) log("warning: " + row.warning);
        table.rows.push_back({std::to_string(row.network), row.name,
                              row.accuracy ? io::format_double(*row.accuracy) : "",
                              row.delta ? io::format_double(*row.delta) : ""});
      }
      io::write_csv(
          c.output_dir / ("ablation_" + pair_tag(c.train_session, test) + "_" + fingerprint::to_string(m) + ".csv"),
          table);
    }
  }
}

std::string cmd_inspect(const fs::path& container) { return io::read_header(container).dump(2); }

int run_cli(int argc, char** argv) {
  CLI::App app{"Functional-connectome fingerprinting experiments"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;
  std::uint64_t seed = 0;
  std::string out;
  std::string refine_target;
  bool both_directions = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out, "override the output directory");
    sub->add_option("--refine-target", refine_target, "residual | original");
    sub->add_flag("--fisher-z", overrides.fisher_z, "Fisher z-transform connectomes");
    sub->add_flag("--both-directions", both_directions, "also report reverse identification");
  };
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic cohort");
  CLI::App* run_cmd = app.add_subcommand("run", "identification for every session pair");
  CLI::App* grid_cmd = app.add_subcommand("grid", "(K, L) grid search");
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "network ablation");
  for (CLI::App* sub : {synth_cmd, run_cmd, grid_cmd, ablate_cmd}) add_common(sub);
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "print a container header");
  std::string container_path;
  inspect_cmd->add_option("container", container_path, "matrix container")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (inspect_cmd->parsed()) {
      std::cout << cmd_inspect(container_path) << '\n';
      return 0;
    }
    ExperimentConfig config = load_config(config_path);
    for (CLI::App* sub : {synth_cmd, run_cmd, grid_cmd, ablate_cmd}) {
      if (!sub->parsed()) continue;
      if (sub->count("--seed")) overrides.seed = seed;
      if (sub->count("--out")) overrides.out = out;
      if (sub->count("--refine-target")) overrides.refine_target = refine_target;
    }
    apply_overrides(config, overrides);
    if (both_directions) config.both_directions = true;

    if (synth_cmd->parsed()) cmd_synth(config);
    if (run_cmd->parsed()) cmd_run(config);
    if (grid_cmd->parsed()) cmd_grid(config);
    if (ablate_cmd->parsed()) cmd_ablate(config);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error";
    if (!e.field().empty()) std::cerr << " [" << e.field() << "]";
    std::cerr << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace fcprint::cli
