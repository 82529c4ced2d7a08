// SPDX-License-Identifier: Apache-2.0
#include "lsesmp/harness.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

namespace lsesmp {

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"n_t", "transmit antennas N_t (default 8)"},
      {"n_r", "receive antennas N_r (default 8)"},
      {"n_s", "streams N_s (default 8)"},
      {"t_len", "training blocks T (default 16; gaussian design needs n_s*t_len >= n_r*n_t)"},
      {"eta", "sparsity ratio of the Bernoulli-Gaussian channel (default 0.05)"},
      {"u_h", "mean of nonzero channel entries (default 10)"},
      {"var_h", "variance of nonzero channel entries (default 10)"},
      {"snr_db", "comma list of SNR values in dB (default 20)"},
      {"sweep", "snr | sparsity | iterations | training_len | beta | exit (default snr)"},
      {"sweep_values", "comma list swept by `sweep`; for snr it replaces snr_db"},
      {"trials", "Monte-Carlo trials per point (default 200)"},
      {"seed", "base seed, 64-bit unsigned (default 1)"},
      {"estimators", "comma list from lse_smp, lse, genie_ls, omp (default all)"},
      {"max_iters", "LSE-SMP iteration cap (default 20)"},
      {"eps", "LSE-SMP convergence tolerance on |dh| and |dL| (default 1e-6)"},
      {"llr_clamp", "LLR clamp magnitude (default 30)"},
      {"out", "output CSV path (default stdout)"},
      {"threads", "worker threads for Monte-Carlo trials (default 1)"},
      {"design", "training design: gaussian | kron (default gaussian)"},
      {"exit_axis", "for sweep = exit: t_len | beta (default t_len)"},
      {"support_threshold", "b_hat threshold for the reported and fine-LSE support (default 0.5)"},
      {"pinv_rel_tol", "pseudo-inverse relative tolerance (default 1e-10)"},
  };
  return keys;
}

const char* to_string(SweepKind k) {
  switch (k) {
    case SweepKind::snr: return "snr";
    case SweepKind::sparsity: return "sparsity";
    case SweepKind::iterations: return "iterations";
    case SweepKind::training_len: return "training_len";
    case SweepKind::beta: return "beta";
    case SweepKind::exit: return "exit";
  }
  return "?";
}

const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::lse_smp: return "lse_smp";
    case EstimatorKind::lse: return "lse";
    case EstimatorKind::genie_ls: return "genie_ls";
    case EstimatorKind::omp: return "omp";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* b = v.data();
  const char* e = v.data() + v.size();
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e) throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a number");
  return out;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(parse_number<double>(key, item));
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

std::string accepted_keys() {
  std::string s;
  for (const auto& [k, _] : config_keys()) s += (s.empty() ? "" : ", ") + k;
  return s;
}

}  // namespace

void apply_key(SweepConfig& cfg, const std::string& key, const std::string& value) {
  auto i = [&] { return parse_number<int>(key, value); };
  auto d = [&] { return parse_number<double>(key, value); };
  if (key == "n_t") cfg.dims.n_t = i();
  else if (key == "n_r") cfg.dims.n_r = i();
  else if (key == "n_s") cfg.dims.n_s = i();
  else if (key == "t_len") cfg.dims.t_len = i();
  else if (key == "eta") cfg.channel.eta = d();
  else if (key == "u_h") cfg.channel.u_h = d();
  else if (key == "var_h") cfg.channel.var_h = d();
  else if (key == "snr_db") cfg.snr_db = parse_doubles(key, value);
  else if (key == "sweep") {
    static const std::map<std::string, SweepKind> kinds = {
        {"snr", SweepKind::snr},       {"sparsity", SweepKind::sparsity},
        {"iterations", SweepKind::iterations}, {"training_len", SweepKind::training_len},
        {"beta", SweepKind::beta},     {"exit", SweepKind::exit}};
    auto it = kinds.find(value);
    if (it == kinds.end()) throw ConfigError("key 'sweep': unknown kind '" + value + "'");
    cfg.sweep = it->second;
  } else if (key == "sweep_values") cfg.sweep_values = parse_doubles(key, value);
  else if (key == "trials") cfg.trials = i();
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "estimators") {
    static const std::map<std::string, EstimatorKind> names = {{"lse_smp", EstimatorKind::lse_smp},
                                                               {"lse", EstimatorKind::lse},
                                                               {"genie_ls", EstimatorKind::genie_ls},
                                                               {"omp", EstimatorKind::omp}};
    cfg.estimators.clear();
    for (const auto& n : split_list(value)) {
      auto it = names.find(n);
      if (it == names.end()) throw ConfigError("key 'estimators': unknown estimator '" + n + "'");
      cfg.estimators.push_back(it->second);
    }
  } else if (key == "max_iters") cfg.estimator.max_iters = i();
  else if (key == "eps") cfg.estimator.eps = d();
  else if (key == "llr_clamp") cfg.estimator.llr_clamp = d();
  else if (key == "out") cfg.out = value;
  else if (key == "threads") cfg.threads = i();
  else if (key == "design") {
    if (value == "gaussian") cfg.design = TrainingDesign::gaussian;
    else if (value == "kron") cfg.design = TrainingDesign::kron;
    else throw ConfigError("key 'design': expected gaussian or kron, got '" + value + "'");
  } else if (key == "exit_axis") {
    if (value != "t_len" && value != "beta") throw ConfigError("key 'exit_axis': expected t_len or beta");
    cfg.exit_axis = value;
  } else if (key == "support_threshold") cfg.estimator.support_threshold = d();
  else if (key == "pinv_rel_tol") cfg.estimator.pinv_rel_tol = d();
  else throw ConfigError("unknown config key '" + key + "'; accepted keys: " + accepted_keys());
}

SweepConfig parse_config(std::istream& in, const std::string& origin) {
  SweepConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    try {
      apply_key(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

SweepConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(f, path);
}

void SweepConfig::use_paper_scale() {
  dims = SystemDims{32, 64, 32, 64};
}

void SweepConfig::validate() const {
  try {
    // the EXIT recursion never builds a training matrix
    dims.validate(sweep == SweepKind::exit ? TrainingDesign::kron : design);
    channel.validate();
    EstimatorConfig e = estimator;
    e.prior_mean = channel.u_h;
    e.prior_variance = channel.var_h;
    e.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (snr_db.empty()) throw ConfigError("snr_db must not be empty");
  if (sweep != SweepKind::snr && sweep_values.empty())
    throw ConfigError(std::string("sweep_values is required for sweep = ") + to_string(sweep));
  if (estimators.empty() && sweep != SweepKind::exit) throw ConfigError("estimators must not be empty");
  for (double v : sweep_values) {
    if (sweep == SweepKind::sparsity && !(v > 0 && v < 1)) throw ConfigError("sparsity values must lie in (0, 1)");
    if ((sweep == SweepKind::iterations || sweep == SweepKind::training_len) && !(v >= 1 && v == std::floor(v)))
      throw ConfigError("iteration and training_len values must be positive integers");
    if (sweep == SweepKind::beta && !(v >= 0)) throw ConfigError("beta values must be >= 0");
    if (sweep == SweepKind::exit && exit_axis == "t_len" && !(v >= 1 && v == std::floor(v)))
      throw ConfigError("exit t_len values must be positive integers");
  }
}

}  // namespace lsesmp
