// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsesmp/bounds.hpp"
#include "lsesmp/channel_model.hpp"
#include "lsesmp/estimator.hpp"

#include <cstdint>
#include <fstream>
#include <optional>
#include <map>
#include <string>
#include <vector>

namespace lsesmp {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class SweepKind { snr, sparsity, iterations, training_len, beta, exit };
enum class EstimatorKind { lse_smp, lse, genie_ls, omp };

struct SweepConfig {
  SystemDims dims{};
  SparseChannelSpec channel{};
  std::vector<double> snr_db{20.0};
  SweepKind sweep = SweepKind::snr;
  std::vector<double> sweep_values;
  int trials = 200;
  std::uint64_t seed = 1;
  std::vector<EstimatorKind> estimators{EstimatorKind::lse_smp, EstimatorKind::lse, EstimatorKind::genie_ls,
                                        EstimatorKind::omp};
  EstimatorConfig estimator{};
  std::string out;
  int threads = 1;
  TrainingDesign design = TrainingDesign::gaussian;
  std::string exit_axis = "t_len";

  void use_paper_scale();
  void validate() const;
};

// Documented config keys with one-line help, in display order.
const std::vector<std::pair<std::string, std::string>>& config_keys();

SweepConfig parse_config(std::istream& in, const std::string& origin = "<config>");
SweepConfig load_config(const std::string& path);
void apply_key(SweepConfig& cfg, const std::string& key, const std::string& value);

const char* to_string(SweepKind k);
const char* to_string(EstimatorKind k);

struct SweepRecord {
  double sweep_value = 0;
  double snr_db = 0;
  std::string estimator;
  double nmse_db = 0;
  double nmse_std_db = 0;
  double crlb_lse_db = 0;
  double crlb_lsesmp_db = 0;
  double iters_mean = 0;
  int trials = 0;
  std::uint64_t seed = 0;
};

struct ExitRow {
  double sweep_value = 0;
  double sigma2_in = 0;
  double sigma2_out = 0;
  std::optional<double> fixed_point;
  std::optional<double> ber_predicted;
  int steps = 0;
};

struct CrlbRow {
  double snr_db = 0;
  double crlb_lse_db = 0;
  double crlb_lse_smp_db = 0;
};

// Per-estimator NMSE samples from one trial, plus the trial's two bound traces.
struct TrialOutcome {
  bool ok = false;
  std::string error;
  std::vector<std::vector<double>> nmse;  // [estimator][iteration column]
  std::vector<double> iters;              // [estimator]
  double crlb_lse = 0;
  double crlb_lsesmp = 0;
};

std::vector<SweepRecord> run_sweep(const SweepConfig& cfg, std::ostream* log = nullptr);
std::vector<ExitRow> run_exit(const SweepConfig& cfg);
std::vector<CrlbRow> run_crlb(const SweepConfig& cfg, std::ostream* log = nullptr);
ExitParams exit_params_for(const SweepConfig& cfg, double sweep_value);

// Mean NMSE in dB and its one-standard-error half-width in dB (delta method).
std::pair<double, double> mean_db_with_se(const std::vector<double>& linear);

std::string format_double(double v);
extern const char* const sweep_csv_header;
extern const char* const exit_csv_header;
extern const char* const crlb_csv_header;
void write_sweep_csv(std::ostream& os, const std::vector<SweepRecord>& rows);
void write_exit_csv(std::ostream& os, const std::vector<ExitRow>& rows);
void write_crlb_csv(std::ostream& os, const std::vector<CrlbRow>& rows);

// Opens (and truncates) the output up front so an unwritable path fails early.
std::ofstream open_output(const std::string& path);

struct BeamspaceRow {
  std::string label;
  int paths = 0;
  double dominant_fraction = 0;    // energy share of the strongest beam entry
  double effective_sparsity = 0;   // fraction of entries carrying 99% of the energy
};
extern const char* const beamspace_csv_header;
std::vector<BeamspaceRow> beamspace_demo(const SystemDims& dims, std::uint64_t seed);
void write_beamspace_csv(std::ostream& os, const std::vector<BeamspaceRow>& rows);

struct CheckLine {
  std::string name;
  bool pass;
  std::string detail;
};
std::vector<CheckLine> run_validation(std::uint64_t seed);

}  // namespace lsesmp
