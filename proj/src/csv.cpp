// SPDX-License-Identifier: Apache-2.0
#include "lsesmp/harness.hpp"

#include <charconv>
#include <fstream>
#include <ostream>

namespace lsesmp {

const char* const sweep_csv_header =
    "sweep_value,snr_db,estimator,nmse_db,nmse_std_db,crlb_lse_db,crlb_lsesmp_db,iters_mean,trials,seed";
const char* const exit_csv_header = "sweep_value,sigma2_in,sigma2_out,fixed_point,ber_predicted,steps";
const char* const crlb_csv_header = "snr_db,crlb_lse_db,crlb_lse_smp_db";

// Shortest decimal that round-trips.
std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, end);
}

static std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

void write_sweep_csv(std::ostream& os, const std::vector<SweepRecord>& rows) {
  os << sweep_csv_header << '\n';
  for (const auto& r : rows)
    os << format_double(r.sweep_value) << ',' << format_double(r.snr_db) << ',' << r.estimator << ','
       << format_double(r.nmse_db) << ',' << format_double(r.nmse_std_db) << ',' << format_double(r.crlb_lse_db)
       << ',' << format_double(r.crlb_lsesmp_db) << ',' << format_double(r.iters_mean) << ',' << r.trials << ','
       << r.seed << '\n';
}

void write_exit_csv(std::ostream& os, const std::vector<ExitRow>& rows) {
  os << exit_csv_header << '\n';
  for (const auto& r : rows)
    os << format_double(r.sweep_value) << ',' << format_double(r.sigma2_in) << ',' << format_double(r.sigma2_out)
       << ',' << opt(r.fixed_point) << ',' << opt(r.ber_predicted) << ',' << r.steps << '\n';
}

void write_crlb_csv(std::ostream& os, const std::vector<CrlbRow>& rows) {
  os << crlb_csv_header << '\n';
  for (const auto& r : rows)
    os << format_double(r.snr_db) << ',' << format_double(r.crlb_lse_db) << ',' << format_double(r.crlb_lse_smp_db)
       << '\n';
}

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open output file '" + path + "' for writing");
  return f;
}

}  // namespace lsesmp
