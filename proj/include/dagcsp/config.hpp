#pragma once

#include "dagcsp/graph.hpp"
#include "dagcsp/propagate.hpp"
#include "dagcsp/reconstruct.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace dagcsp {

// Declarative run configuration: an INI-style file of [section] key = value
// pairs, with CLI flags overriding file values.
class RunConfig {
 public:
  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig empty() { return RunConfig(); }

  // key is "section.name", e.g. "run.directions"
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback = "") const;

  // fills defaults for the referenced case, then parses typed knobs
  void finalize();

  // deterministic digest of the propagation-relevant entries
  std::uint64_t propagation_hash() const;

  GraphSpec build_graph_spec() const;

  // typed views (valid after finalize)
  std::string case_name;
  std::string directions = "f";
  std::uint64_t seed = 0;
  int workers = 0;  // 0: all cores
  SamplerConfig sampler;
  SurrogateConfig surrogate;
  NlpConfig nlp;
  DomainConfig domain;
  Index reconstruct_target = 2000;
  std::int64_t reconstruct_budget = 1000000;
  bool reconstruct_adaptive = false;

  const std::map<std::string, std::string>& raw() const { return raw_; }
  void load_raw(const std::map<std::string, std::string>& raw);

 private:
  std::map<std::string, std::string> raw_;
};

// metrics.json sidecar for a results directory
void write_run_metrics(const std::filesystem::path& dir, const ReconstructionResult& result,
                       std::uint64_t config_hash, const std::string& case_name);

struct RunMetrics {
  double acceptance_ratio = 0.0;
  Index feasible = 0;
  EvalCounter counter;
  std::string source;
  std::string directions;
  std::uint64_t graph_hash = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string case_name;
};

RunMetrics read_run_metrics(const std::filesystem::path& dir);

// guards against clobbering existing results
void prepare_output_dir(const std::filesystem::path& dir, bool overwrite);

}  // namespace dagcsp
