#include <CLI11.hpp>

#include "dagcsp/config.hpp"
#include "dagcsp/models.hpp"
#include "dagcsp/propagate.hpp"
#include "dagcsp/reconstruct.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace dagcsp;

namespace {

struct CommonFlags {
  std::string config_file;
  std::string case_name;
  std::string directions;
  std::int64_t seed = -1;
  int workers = -1;
  std::int64_t samples = -1;
  std::int64_t budget = -1;
  std::string policy;
  std::string out_dir;
  bool overwrite = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool wants_directions) {
  cmd->add_option("--config", f.config_file, "run-configuration file");
  cmd->add_option("--case", f.case_name, "built-in case: linear5|reactors|funcapprox");
  if (wants_directions)
    cmd->add_option("--directions", f.directions, "propagation letters, e.g. f, b, fb");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--workers", f.workers, "worker threads (default: all cores)");
  cmd->add_option("--samples", f.samples, "target feasible samples per subproblem");
  cmd->add_option("--budget", f.budget, "evaluation budget");
  cmd->add_option("--policy", f.policy, "sampler policy: sobol_rejection|adaptive_mixture");
  cmd->add_option("--out", f.out_dir, "output directory")->required();
  cmd->add_flag("--overwrite", f.overwrite, "replace an existing output directory");
}

RunConfig assemble_config(const CommonFlags& f) {
  RunConfig cfg =
      f.config_file.empty() ? RunConfig::empty() : RunConfig::from_file(f.config_file);
  if (!f.case_name.empty()) cfg.set("run.case", f.case_name);
  if (!f.directions.empty()) cfg.set("run.directions", f.directions);
  if (f.seed >= 0) cfg.set("run.seed", std::to_string(f.seed));
  if (f.workers >= 0) cfg.set("run.workers", std::to_string(f.workers));
  if (f.samples >= 0) cfg.set("sampler.target", std::to_string(f.samples));
  if (f.budget >= 0) cfg.set("sampler.budget", std::to_string(f.budget));
  if (!f.policy.empty()) cfg.set("sampler.policy", f.policy);
  cfg.finalize();
  return cfg;
}

int effective_workers(const RunConfig& cfg) {
  return cfg.workers > 0 ? cfg.workers : default_workers();
}

void dump_config_echo(const fs::path& dir, const RunConfig& cfg) {
  nlohmann::json j;
  for (const auto& [k, v] : cfg.raw()) j[k] = v;
  std::ofstream(dir / "config.json") << j.dump(2) << "\n";
}

RunConfig config_from_echo(const fs::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) throw IoError("missing config.json in " + dir.string());
  const auto j = nlohmann::json::parse(in);
  std::map<std::string, std::string> raw;
  for (const auto& [k, v] : j.items()) raw[k] = v.get<std::string>();
  RunConfig cfg;
  cfg.load_raw(raw);
  cfg.finalize();
  return cfg;
}

int cmd_propagate(const CommonFlags& flags) {
  RunConfig cfg = assemble_config(flags);
  const GraphSpec graph = cfg.build_graph_spec();
  prepare_output_dir(flags.out_dir, flags.overwrite);

  PropagationState state =
      propagate(graph, cfg.directions, cfg.sampler, cfg.nlp, cfg.surrogate, cfg.domain,
                cfg.seed, effective_workers(cfg));
  state.config_hash = cfg.propagation_hash();
  state.save(flags.out_dir);
  dump_config_echo(flags.out_dir, cfg);

  std::cout << "propagate " << (graph.name.empty() ? "custom" : graph.name)
            << " directions=" << cfg.directions << " seed=" << cfg.seed << "\n";
  for (const auto& pass : state.passes) {
    std::cout << "pass " << pass.tag << ":\n";
    for (const auto& ns : pass.nodes)
      std::cout << "  node " << ns.node << ": " << ns.samples.feasible_count() << "/"
                << ns.samples.size() << " feasible samples"
                << (ns.has_classifier
                        ? ", train_acc=" + std::to_string(ns.classifier_cv.final_train_metric)
                        : "")
                << "\n";
  }
  std::cout << "constituent_evals=" << state.counter.constituent_evals
            << " nlp_solves=" << state.counter.nlp_solves << "\n";
  std::cout << "state written to " << flags.out_dir << "\n";
  return 0;
}

int cmd_reconstruct(const std::string& state_dir, const CommonFlags& flags,
                    std::int64_t target, bool adaptive) {
  RunConfig cfg =
      flags.config_file.empty() ? config_from_echo(state_dir) : assemble_config(flags);
  const PropagationState state = PropagationState::load(state_dir);
  if (cfg.propagation_hash() != state.config_hash)
    throw StateMismatch("configuration hash disagrees with the saved propagation state");
  const GraphSpec graph = cfg.build_graph_spec();

  prepare_output_dir(flags.out_dir, flags.overwrite);
  const Index target_k = target > 0 ? static_cast<Index>(target) : cfg.reconstruct_target;
  const std::int64_t budget = flags.budget > 0 ? flags.budget : cfg.reconstruct_budget;
  const std::uint64_t seed = flags.seed >= 0 ? static_cast<std::uint64_t>(flags.seed)
                                             : mix_seed(cfg.seed, "reconstruct-cli");

  ReconstructionResult result =
      reconstruct(graph, state, target_k, budget, seed, effective_workers(cfg),
                  adaptive || cfg.reconstruct_adaptive);
  write_csv(result.joint_samples, fs::path(flags.out_dir) / "joint_samples.csv");
  write_run_metrics(flags.out_dir, result, cfg.propagation_hash(), graph.name);
  dump_config_echo(flags.out_dir, cfg);

  std::cout << "reconstruct: " << result.feasible_count
            << " joint feasible, AR=" << result.acceptance_ratio
            << " (evals=" << result.counter.constituent_evals << ")\n";
  return 0;
}

int cmd_baseline(const CommonFlags& flags, std::int64_t target) {
  RunConfig cfg = assemble_config(flags);
  const GraphSpec graph = cfg.build_graph_spec();
  prepare_output_dir(flags.out_dir, flags.overwrite);

  SamplerConfig scfg = cfg.sampler;
  if (target > 0) scfg.target_feasible = static_cast<int>(target);
  scfg.workers = effective_workers(cfg);

  ReconstructionResult result = simultaneous(graph, scfg);
  write_csv(result.joint_samples, fs::path(flags.out_dir) / "joint_samples.csv");
  write_run_metrics(flags.out_dir, result, cfg.propagation_hash(), graph.name);
  dump_config_echo(flags.out_dir, cfg);

  std::cout << "baseline: " << result.feasible_count
            << " joint feasible, AR=" << result.acceptance_ratio
            << " (evals=" << result.counter.constituent_evals << ")\n";
  return 0;
}

int cmd_compare(const std::string& dir_a, const std::string& dir_b,
                const std::string& out_file) {
  const RunMetrics a = read_run_metrics(dir_a);
  const RunMetrics b = read_run_metrics(dir_b);
  if (a.graph_hash != b.graph_hash)
    throw GraphMismatch("runs were produced on different graphs");

  nlohmann::json j;
  j["ar_a"] = a.acceptance_ratio;
  j["ar_b"] = b.acceptance_ratio;
  if (b.acceptance_ratio > 0)
    j["ar_ratio"] = a.acceptance_ratio / b.acceptance_ratio;
  else
    j["ar_ratio"] = "inf";
  j["evals_a"] = a.counter.constituent_evals;
  j["evals_b"] = b.counter.constituent_evals;
  j["feasible_a"] = a.feasible;
  j["feasible_b"] = b.feasible;
  j["source_a"] = a.source;
  j["source_b"] = b.source;
  const std::string text = j.dump(2);
  std::cout << text << "\n";
  if (!out_file.empty()) std::ofstream(out_file) << text << "\n";
  return 0;
}

int cmd_export(const std::string& state_dir, int pass, int node, const std::string& what,
               const std::string& out_file) {
  const PropagationState state = PropagationState::load(state_dir);
  const std::size_t p = pass < 0 ? state.passes.size() - 1 : static_cast<std::size_t>(pass);
  if (p >= state.passes.size()) throw ConfigError("pass index out of range");
  const NodeState& ns = state.node_state(p, node);
  SampleSet out = ns.samples;
  if (what == "v")
    out = project_params(out, node);
  else if (what != "all")
    throw ConfigError("--what must be v or all");
  write_csv(out, out_file);
  std::cout << "wrote " << out.size() << " rows (" << out.dim() << " cols) to " << out_file
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feasible-set characterization on DAGs of constituent functions"};
  app.require_subcommand(1);

  CommonFlags prop_flags, base_flags, recon_flags;
  std::string state_dir, dir_a, dir_b, out_file, what = "v";
  std::int64_t target = -1;
  int pass = -1, node = 0;
  bool adaptive = false;

  CLI::App* prop = app.add_subcommand("propagate", "solve and propagate node subproblems");
  add_common(prop, prop_flags, true);

  CLI::App* recon = app.add_subcommand("reconstruct", "rebuild the joint feasible set");
  recon->add_option("--state", state_dir, "propagation state directory")->required();
  recon->add_option("--target", target, "target joint feasible samples");
  recon->add_flag("--adaptive", adaptive, "adaptive draws over the discrete product set");
  add_common(recon, recon_flags, false);

  CLI::App* base = app.add_subcommand("baseline", "simultaneous sampling baseline");
  base->add_option("--target", target, "target joint feasible samples");
  add_common(base, base_flags, false);

  CLI::App* comp = app.add_subcommand("compare", "compare two result directories");
  comp->add_option("--a", dir_a, "first results directory")->required();
  comp->add_option("--b", dir_b, "second results directory")->required();
  comp->add_option("--out", out_file, "write the report JSON here");

  CLI::App* expo = app.add_subcommand("export", "export node samples from a saved state");
  expo->add_option("--state", state_dir, "propagation state directory")->required();
  expo->add_option("--pass", pass, "pass index (default: final)");
  expo->add_option("--node", node, "node id")->required();
  expo->add_option("--what", what, "v (parameter projection) or all");
  expo->add_option("--out", out_file, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (prop->parsed()) return cmd_propagate(prop_flags);
    if (recon->parsed()) return cmd_reconstruct(state_dir, recon_flags, target, adaptive);
    if (base->parsed()) return cmd_baseline(base_flags, target);
    if (comp->parsed()) return cmd_compare(dir_a, dir_b, out_file);
    if (expo->parsed()) return cmd_export(state_dir, pass, node, what, out_file);
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
