// SPDX-License-Identifier: Apache-2.0
// Published performance claims checked at desk scale. Kept apart from the unit
// tests because some of them cannot hold here (see README).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lsesmp/estimator.hpp"

using namespace lsesmp;

TEST_CASE("lse_smp beats genie-tuned omp at very low sparsity") {
  SystemDims dims;
  SparseChannelSpec spec;
  spec.eta = 0.007;
  EstimatorConfig cfg;
  double smp = 0, greedy = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    RandomStream rng = stream_for_trial(20, std::uint64_t(t));
    const auto inst = make_instance<double>(dims, spec, 20.0, TrainingDesign::gaussian, rng);
    smp += run_lse_smp(inst, cfg).nmse_trace.back();
    greedy += nmse(omp_baseline(inst, Eigen::Index(inst.b_true.sum())), inst.h_true);
  }
  const double smp_db = 10 * std::log10(smp / trials), omp_db = 10 * std::log10(greedy / trials);
  CHECK_MESSAGE(omp_db > smp_db, "omp " << omp_db << " dB, lse_smp " << smp_db << " dB");
}
