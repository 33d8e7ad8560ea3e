#include "dagcsp/config.hpp"

#include "dagcsp/models.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace dagcsp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

Mat parse_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::stringstream ss(text);
  std::string row;
  while (std::getline(ss, row, ';')) {
    row = trim(row);
    if (row.empty()) continue;
    rows.push_back(parse_numbers(row));
  }
  if (rows.empty()) return Mat(0, 0);
  Mat m(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw ConfigError("ragged matrix literal: " + text);
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return m;
}

// "lo1,hi1 ; lo2,hi2 ; ..." per dimension
Box parse_box(const std::string& text) {
  const Mat m = parse_matrix(text);
  if (m.cols() != 2) throw ConfigError("box literal needs lo,hi pairs: " + text);
  return Box(m.col(0), m.col(1));
}

double to_double(const std::string& s) { return std::stod(s); }
std::int64_t to_int(const std::string& s) { return std::stoll(s); }

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  RunConfig cfg;
  std::string line, section;
  while (std::getline(in, line)) {
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("bad config line: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError("key outside a section: " + line);
    cfg.raw_[section + "." + key] = value;
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) { raw_[key] = value; }

bool RunConfig::has(const std::string& key) const { return raw_.count(key) > 0; }

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = raw_.find(key);
  return it == raw_.end() ? fallback : it->second;
}

void RunConfig::load_raw(const std::map<std::string, std::string>& raw) { raw_ = raw; }

void RunConfig::finalize() {
  case_name = get("run.case");
  if (case_name.empty() && !has("graph.nodes"))
    throw ConfigError("config needs run.case or a [graph] declaration");

  auto default_to = [this](const std::string& key, const std::string& value) {
    if (!has(key)) raw_[key] = value;
  };

  // per-case defaults; any file or flag value wins
  if (case_name == "linear5") {
    default_to("run.directions", "f");
    default_to("sampler.target", "1500");
    default_to("sampler.budget", "60000");
    default_to("nlp.starts", "4");
    default_to("nlp.max_iter", "60");
  } else if (case_name == "reactors") {
    default_to("run.directions", "b");
    default_to("sampler.target", "1200");
    default_to("sampler.budget", "120000");
    default_to("sampler.policy", "adaptive_mixture");
    default_to("nlp.starts", "4");
  } else if (case_name == "funcapprox") {
    default_to("run.directions", "b");
    default_to("sampler.target", "1500");
    default_to("sampler.budget", "150000");
    default_to("sampler.policy", "adaptive_mixture");
    default_to("nlp.coupling_b", "off");  // box-constrained embedded solves only
    default_to("nlp.starts", "4");
  }

  directions = get("run.directions", "f");
  if (directions.empty()) throw ConfigError("run.directions must be nonempty");
  for (char c : directions)
    if (c != 'f' && c != 'b')
      throw ConfigError("run.directions may only contain 'f' and 'b'");
  seed = static_cast<std::uint64_t>(to_int(get("run.seed", "0")));
  workers = static_cast<int>(to_int(get("run.workers", "0")));

  sampler.target_feasible = static_cast<int>(to_int(get("sampler.target", "1000")));
  sampler.max_evaluations = to_int(get("sampler.budget", "200000"));
  const std::string policy = get("sampler.policy", "sobol_rejection");
  if (policy == "sobol_rejection")
    sampler.policy = SamplerPolicy::SobolRejection;
  else if (policy == "adaptive_mixture")
    sampler.policy = SamplerPolicy::AdaptiveMixture;
  else
    throw ConfigError("unknown sampler.policy " + policy);
  sampler.mixture_components = static_cast<int>(to_int(get("sampler.mixture_components", "8")));
  sampler.refine_fraction = to_double(get("sampler.refine_fraction", "0.5"));
  sampler.seed = seed;
  if (sampler.target_feasible < 1) throw ConfigError("sampler.target must be positive");
  if (sampler.max_evaluations < sampler.target_feasible)
    throw ConfigError("sampler.budget must be at least sampler.target");

  surrogate.k_folds = static_cast<int>(to_int(get("surrogate.folds", "2")));
  surrogate.jitter_fraction = to_double(get("surrogate.jitter", "0.01"));
  surrogate.max_classifier_points =
      static_cast<Index>(to_int(get("surrogate.max_classifier_points", "2000")));
  surrogate.max_regressor_points =
      static_cast<Index>(to_int(get("surrogate.max_regressor_points", "600")));
  if (has("surrogate.svm_c")) surrogate.svm_grid.reg_c = parse_numbers(get("surrogate.svm_c"));
  if (has("surrogate.svm_gamma"))
    surrogate.svm_grid.rbf_gamma = parse_numbers(get("surrogate.svm_gamma"));
  if (has("surrogate.krr_gamma"))
    surrogate.krr_grid.rbf_gamma = parse_numbers(get("surrogate.krr_gamma"));
  if (has("surrogate.krr_lambda"))
    surrogate.krr_grid.ridge_lambda = parse_numbers(get("surrogate.krr_lambda"));

  nlp.n_starts = static_cast<int>(to_int(get("nlp.starts", "6")));
  nlp.max_iter = static_cast<int>(to_int(get("nlp.max_iter", "80")));
  nlp.tol = to_double(get("nlp.tol", "1e-6"));
  nlp.penalty_weight = to_double(get("nlp.penalty", "1e3"));
  nlp.feas_tol = to_double(get("nlp.feas_tol", "1e-3"));
  nlp.res_tol_frac = to_double(get("nlp.res_tol", "1e-2"));
  const std::string cb = get("nlp.coupling_b", "auto");
  if (cb == "auto")
    nlp.coupling_b = CouplingBMode::Auto;
  else if (cb == "on")
    nlp.coupling_b = CouplingBMode::On;
  else if (cb == "off")
    nlp.coupling_b = CouplingBMode::Off;
  else
    throw ConfigError("nlp.coupling_b must be auto|on|off");

  domain.n_sobol = static_cast<int>(to_int(get("domain.n_sobol", "8192")));
  domain.inflation = to_double(get("domain.inflation", "0.05"));

  reconstruct_target = static_cast<Index>(to_int(get("reconstruct.target", "2000")));
  reconstruct_budget = to_int(get("reconstruct.budget", "1000000"));
  reconstruct_adaptive = get("reconstruct.adaptive", "false") == "true";
}

std::uint64_t RunConfig::propagation_hash() const {
  // covers everything that shapes the propagation result
  static const char* prefixes[] = {"run.case", "run.directions", "run.seed", "sampler.",
                                   "surrogate.", "nlp.", "domain.", "graph.", "node."};
  std::uint64_t h = 0x9e3779b97f4a7c15ull;
  for (const auto& [key, value] : raw_) {
    bool relevant = false;
    for (const char* p : prefixes)
      if (key.rfind(p, 0) == 0) {
        relevant = true;
        break;
      }
    if (!relevant) continue;
    h = mix_seed(h, key + "=" + value);
  }
  return h;
}

GraphSpec RunConfig::build_graph_spec() const {
  if (!case_name.empty()) return make_case(case_name);

  // affine graph declared in the config: per-node boxes, constraint rows
  // C v + D u + e <= 0, and per-edge payload maps A v + B u + c
  const int n = static_cast<int>(to_int(get("graph.nodes")));
  if (n < 1) throw ConfigError("graph.nodes must be positive");

  std::vector<EdgeSpec> edges;
  {
    std::stringstream ss(get("graph.edges", ""));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      const auto gt = item.find('>');
      const auto colon = item.find(':');
      if (gt == std::string::npos) throw ConfigError("bad edge literal: " + item);
      EdgeSpec e;
      e.from = static_cast<int>(to_int(item.substr(0, gt)));
      if (colon == std::string::npos) {
        e.to = static_cast<int>(to_int(item.substr(gt + 1)));
        e.dim = 1;
      } else {
        e.to = static_cast<int>(to_int(item.substr(gt + 1, colon - gt - 1)));
        e.dim = static_cast<int>(to_int(item.substr(colon + 1)));
      }
      edges.push_back(e);
    }
  }

  std::vector<NodeSpec> nodes(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::string pre = "node." + std::to_string(i) + ".";
    NodeSpec& node = nodes[static_cast<std::size_t>(i)];
    node.id = i;
    if (!has(pre + "box")) throw ConfigError("missing " + pre + "box");
    node.param_box = parse_box(get(pre + "box"));
    node.cheap = get(pre + "cheap", "false") == "true";

    const Mat C = parse_matrix(get(pre + "constraint.C", ""));
    const Mat D = parse_matrix(get(pre + "constraint.D", ""));
    Vec e_off;
    {
      const auto nums = parse_numbers(get(pre + "constraint.e", ""));
      e_off = Eigen::Map<const Vec>(nums.data(), static_cast<Index>(nums.size()));
    }
    node.n_constraints = static_cast<int>(std::max(C.rows(), D.rows()));
    if (e_off.size() == 0 && node.n_constraints > 0)
      e_off = Vec::Zero(node.n_constraints);

    struct EdgeMap {
      Mat A, B;
      Vec c;
    };
    std::map<int, EdgeMap> maps;
    for (const auto& edge : edges) {
      if (edge.from != i) continue;
      const std::string epre = pre + "edge." + std::to_string(edge.to) + ".";
      EdgeMap m;
      m.A = parse_matrix(get(epre + "A", ""));
      m.B = parse_matrix(get(epre + "B", ""));
      const auto nums = parse_numbers(get(epre + "c", ""));
      if (nums.empty())
        m.c = Vec::Zero(edge.dim);
      else
        m.c = Eigen::Map<const Vec>(nums.data(), static_cast<Index>(nums.size()));
      maps[edge.to] = std::move(m);
    }

    node.model = [C, D, e_off, maps, nc = node.n_constraints](const Vec& v, const Vec& u,
                                                              const Vec&) {
      NodeEval ev;
      for (const auto& [to, m] : maps) {
        Vec y = m.c;
        if (m.A.size() > 0) y += m.A * v;
        if (m.B.size() > 0) y += m.B * u;
        ev.outputs.push_back(std::move(y));
      }
      if (nc > 0) {
        Vec g = e_off;
        if (C.size() > 0) g += C * v;
        if (D.size() > 0) g += D * u;
        ev.constraints = std::move(g);
      }
      return ev;
    };
  }

  std::optional<Box> coupling;
  if (has("graph.coupling")) coupling = parse_box(get("graph.coupling"));
  const int eps_dims = static_cast<int>(to_int(get("graph.eps_dims", "0")));
  GraphSpec g = build_graph(std::move(nodes), std::move(edges), std::move(coupling), eps_dims);
  g.name = get("graph.name", "custom");
  if (get("graph.lifted", "false") == "true") return lift_coupling(g);
  return g;
}

void write_run_metrics(const std::filesystem::path& dir, const ReconstructionResult& result,
                       std::uint64_t config_hash, const std::string& case_name) {
  nlohmann::json j;
  j["acceptance_ratio"] = result.acceptance_ratio;
  j["feasible"] = result.feasible_count;
  j["constituent_evals"] = result.counter.constituent_evals;
  j["constraint_evals"] = result.counter.constraint_evals;
  j["nlp_solves"] = result.counter.nlp_solves;
  j["source"] = result.source == RunSource::Decomposition
                    ? "decomposition(" + result.directions + ")"
                    : "simultaneous";
  j["directions"] = result.directions;
  j["graph_hash"] = result.graph_hash;
  j["config_hash"] = config_hash;
  j["seed"] = result.seed;
  j["case"] = case_name;
  std::ofstream(dir / "metrics.json") << j.dump(2) << "\n";
}

RunMetrics read_run_metrics(const std::filesystem::path& dir) {
  std::ifstream in(dir / "metrics.json");
  if (!in) throw IoError("missing metrics.json in " + dir.string());
  const auto j = nlohmann::json::parse(in);
  RunMetrics m;
  m.acceptance_ratio = j.at("acceptance_ratio").get<double>();
  m.feasible = j.at("feasible").get<Index>();
  m.counter.constituent_evals = j.at("constituent_evals").get<std::int64_t>();
  m.counter.constraint_evals = j.at("constraint_evals").get<std::int64_t>();
  m.counter.nlp_solves = j.at("nlp_solves").get<std::int64_t>();
  m.source = j.at("source").get<std::string>();
  m.directions = j.value("directions", "");
  m.graph_hash = j.at("graph_hash").get<std::uint64_t>();
  m.config_hash = j.at("config_hash").get<std::uint64_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.case_name = j.value("case", "");
  return m;
}

void prepare_output_dir(const std::filesystem::path& dir, bool overwrite) {
  if (std::filesystem::exists(dir) && !std::filesystem::is_empty(dir)) {
    if (!overwrite)
      throw IoError("output directory " + dir.string() +
                    " exists; pass --overwrite to replace it");
    std::filesystem::remove_all(dir);
  }
  std::filesystem::create_directories(dir);
}

}  // namespace dagcsp
