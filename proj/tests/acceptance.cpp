// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include "lsesmp/harness.hpp"
#include "oracles.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

using namespace lsesmp;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

VectorXr random_support(RandomStream& rng, int n, int k) {
  VectorXr b = VectorXr::Zero(n);
  while (b.sum() < k) b(int(rng.uniform() * n)) = 1;
  return b;
}

struct Edgewise {
  MatrixXr s, lv;
  VectorXr y, h, vh;
  double noise;
};

Edgewise random_edgewise(RandomStream& rng, int m, int n) {
  Edgewise t;
  t.s = rng.gaussian_matrix(m, n);
  t.h = rng.gaussian_matrix(n, 1).col(0) * 3;
  t.vh = rng.gaussian_matrix(n, 1).col(0).cwiseAbs().array() + 0.1;
  t.y = t.s * t.h + rng.gaussian_matrix(m, 1).col(0);
  t.lv = 2 * rng.gaussian_matrix(n, m);
  t.noise = 0.5 + rng.uniform();
  return t;
}

SmpState<double> state_of(const Edgewise& t) {
  SmpState<double> st;
  st.l_v = t.lv;
  st.h_hat = t.h;
  st.v_h = t.vh;
  st.zero_probabilities = false;
  return st;
}

Outcome c1() {
  RandomStream rng(101);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  for (auto [m, n] : {std::pair{2, 3}, std::pair{3, 4}, std::pair{5, 7}, std::pair{8, 12}, std::pair{8, 8}})
    for (int rep = 0; rep < 5; ++rep) {
      const Edgewise t = random_edgewise(rng, m, n);
      const MatrixXr pv = t.lv.unaryExpr([](double l) { return logistic(l); });
      const VectorXr own_var = VectorXr::Constant(n, 10.0);
      auto st = state_of(t);
      sum_node_update<double>(st, t.y, t.s, t.noise, t.h, own_var, 30, 1e-12 * t.noise);
      const auto o = oracle::brute_force_sum_node(t.s, t.y, t.h, t.vh, pv, t.noise, t.h, own_var, 30, 1e-12 * t.noise);
      worst = std::max({worst, (st.u_s - o.e).cwiseAbs().maxCoeff(), (st.v_s - o.v).cwiseAbs().maxCoeff(),
                        (st.l_s - o.l).cwiseAbs().maxCoeff()});
      const double l0 = -1.3;
      variable_node_update(st, l0, 30.0);
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < m; ++k) {
          double acc = l0;
          for (int o2 = 0; o2 < m; ++o2)
            if (o2 != k) acc += st.l_s(o2, j);
          acc = std::clamp(acc, -30.0, 30.0);
          worst = std::max(worst, std::abs(acc - st.l_v(j, k)));
        }
    }
  const double secs = seconds_since(t0);
  return {worst < 1e-12 && secs < 1, fmt("max deviation %.3g, %.3f s", worst, secs)};
}

Outcome c2() {
  RandomStream rng(102);
  double worst = 0;
  int edges = 0;
  while (edges < 1000) {
    const Edgewise t = random_edgewise(rng, 8, 12);
    auto st = state_of(t);
    // unclamped so the comparison covers the raw message
    sum_node_update<double>(st, t.y, t.s, t.noise, t.h, t.vh, 1e300, 1e-12 * t.noise);
    for (int k = 0; k < 8; ++k)
      for (int j = 0; j < 12; ++j, ++edges) {
        const double p = oracle::prob_sum_node(t.y(k), st.u_s(k, j), st.v_s(k, j), t.s(k, j), t.h(j), t.vh(j));
        worst = std::max(worst, std::abs(logistic(st.l_s(k, j)) - p));
      }
  }
  return {worst < 1e-12, fmt("%d edges, max |logistic(L) - p| %.3g", edges, worst)};
}

Outcome c3() {
  const auto t0 = std::chrono::steady_clock::now();
  SystemDims dims;
  SparseChannelSpec spec;
  spec.eta = 0.1;
  RandomStream rng(103);
  const auto inst = make_instance<double>(dims, spec, 10.0, TrainingDesign::gaussian, rng);
  const long n = inst.h_true.size();
  const VectorXr clean = inst.s_bar * inst.h_true;
  const double sd = std::sqrt(inst.noise_variance);
  const int trials = 10000;
  VectorXr sum = VectorXr::Zero(n), sum2 = VectorXr::Zero(n);
  double mse = 0;
  RandomStream noise(1030);
  for (int t = 0; t < trials; ++t) {
    ProblemInstance<double> p = inst;
    p.y_bar = clean + sd * noise.gaussian_matrix(clean.size(), 1).col(0);
    const VectorXr e = genie_ls(p) - inst.h_true;
    sum += e;
    sum2 += e.cwiseProduct(e);
    mse += e.squaredNorm();
  }
  mse /= trials;
  double worst_z = 0;
  for (long i = 0; i < n; ++i) {
    if (inst.b_true(i) == 0) {
      if (sum2(i) != 0) worst_z = INFINITY;
      continue;
    }
    const double mean = sum(i) / trials, var = sum2(i) / trials - mean * mean;
    worst_z = std::max(worst_z, std::abs(mean) / std::sqrt(var / trials));
  }
  const double bound = crlb_lse_smp(inst.s_bar, inst.b_true, inst.noise_variance).trace_mse;
  const double rel = std::abs(mse - bound) / bound;
  const double secs = seconds_since(t0);
  return {worst_z < 5 && rel < 0.05 && secs < 120,
          fmt("support %d, max |bias|/se %.2f, MSE %.4g vs bound %.4g (%.2f%%), %.1f s", int(inst.b_true.sum()), worst_z,
              mse, bound, 100 * rel, secs)};
}

Outcome c4() {
  const auto t0 = std::chrono::steady_clock::now();
  RandomStream rng(104);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const MatrixXr s = rng.gaussian_matrix(18, 12);
    const VectorXr b = random_support(rng, 12, 1 + t % 12);
    const VectorXr h = b.cwiseProduct(rng.gaussian_matrix(12, 1).col(0) * 3);
    const double nv = 0.05 + rng.uniform();
    const VectorXr y = s * h + std::sqrt(nv) * rng.gaussian_matrix(18, 1).col(0);
    worst = std::max(worst, score_identity_check<double>(s, b, h, y, nv));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-8 && secs < 5, fmt("max residual %.3g, %.3f s", worst, secs)};
}

Outcome c5() {
  RandomStream rng(105);
  int trace_violations = 0;
  double worst_interlace = 0;
  for (int t = 0; t < 1000; ++t) {
    const int n = 12, k = 1 + t % 11;
    const MatrixXr s = rng.gaussian_matrix(20, n);
    const VectorXr b = random_support(rng, n, k);
    const double nv = 0.1 + rng.uniform();
    const auto c = crlb_lse<double>(s, nv);
    const auto r = crlb_lse_smp<double>(s, b, nv);
    if (!(r.trace_mse <= c.trace_mse)) ++trace_violations;
    if (t >= 100) continue;
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if (b(i) == 1) idx.push_back(i);
    MatrixXr sub(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) sub(i, j) = r.cov(idx[size_t(i)], idx[size_t(j)]);
    const VectorXr lam = Eigen::SelfAdjointEigenSolver<MatrixXr>(c.cov).eigenvalues().reverse();
    const VectorXr mu = Eigen::SelfAdjointEigenSolver<MatrixXr>(sub).eigenvalues().reverse();
    for (int i = 0; i < k; ++i) {
      worst_interlace = std::max(worst_interlace, mu(i) - lam(i));
      worst_interlace = std::max(worst_interlace, lam(i + n - k) - mu(i));
    }
  }
  return {trace_violations == 0 && worst_interlace <= 1e-9,
          fmt("trace violations %d/1000, worst interlacing excess %.3g", trace_violations, worst_interlace)};
}

SweepConfig desk(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is, "acceptance");
}

const SweepRecord& find(const std::vector<SweepRecord>& rows, double v, const std::string& est) {
  for (const auto& r : rows)
    if (r.sweep_value == v && r.estimator == est) return r;
  throw std::runtime_error("missing row");
}

Outcome c6() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_sweep(
      desk("sweep = iterations\nsweep_values = 5, 20\neta = 0.031\nsnr_db = 20\ntrials = 200\nseed = 6\n"
           "estimators = lse_smp\n"));
  const double a = find(rows, 5, "lse_smp").nmse_db, b = find(rows, 20, "lse_smp").nmse_db;
  const double secs = seconds_since(t0);
  return {std::abs(a - b) <= 1 && secs < 300,
          fmt("iter 5 %.2f dB, iter 20 %.2f dB, gap %.2f dB, %.1f s", a, b, a - b, secs)};
}

bool overlap(const SweepRecord& a, const SweepRecord& b) {
  return a.nmse_db - 2 * a.nmse_std_db <= b.nmse_db + 2 * b.nmse_std_db &&
         b.nmse_db - 2 * b.nmse_std_db <= a.nmse_db + 2 * a.nmse_std_db;
}

Outcome c7() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_sweep(desk(
      "sweep = sparsity\nsweep_values = 0.05, 0.5\nsnr_db = 20\ntrials = 200\nseed = 7\nestimators = lse_smp, lse\n"));
  const auto &s1 = find(rows, 0.05, "lse_smp"), &s2 = find(rows, 0.5, "lse_smp");
  const auto &l1 = find(rows, 0.05, "lse"), &l2 = find(rows, 0.5, "lse");
  const double gain = s2.nmse_db - s1.nmse_db;
  const double secs = seconds_since(t0);
  const bool pass = gain >= 3 && !overlap(s1, s2) && overlap(l1, l2) && secs < 600;
  return {pass, fmt("LSE-SMP %.2f+-%.2f vs %.2f+-%.2f dB (gain %.2f), LSE %.2f+-%.2f vs %.2f+-%.2f dB, %.1f s",
                    s1.nmse_db, 2 * s1.nmse_std_db, s2.nmse_db, 2 * s2.nmse_std_db, gain, l1.nmse_db,
                    2 * l1.nmse_std_db, l2.nmse_db, 2 * l2.nmse_std_db, secs)};
}

Outcome c8() {
  const auto rows = run_sweep(desk(
      "sweep = snr\nsweep_values = 10, 20, 30\neta = 0.05\ntrials = 200\nseed = 8\nestimators = lse_smp, lse, omp\n"));
  bool vs_lse = true, vs_omp = true;
  std::string d;
  for (double snr : {10.0, 20.0, 30.0}) {
    const double s = find(rows, snr, "lse_smp").nmse_db, l = find(rows, snr, "lse").nmse_db,
                 o = find(rows, snr, "omp").nmse_db;
    vs_lse = vs_lse && s <= l - 1;
    vs_omp = vs_omp && s <= o - 1;
    d += fmt("%g dB: smp %.2f lse %.2f omp %.2f; ", snr, s, l, o);
  }
  d += fmt("margin over LSE %s, over OMP %s", vs_lse ? "met" : "missed", vs_omp ? "met" : "missed");
  return {vs_lse && vs_omp, d};
}

Outcome c9() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  int points = 0;
  for (int a = 0; a < 10; ++a)
    for (int b = 0; b < 10; ++b)
      for (int c = 0; c < 10; ++c)
        for (int d = 0; d < 10; ++d, ++points) {
          const double l = -8 + 16.0 * a / 9;
          ExitParams p;
          p.n_t = 2 << b;
          p.snr = std::pow(10.0, -1 + 4.0 * c / 9);
          p.beta = std::pow(10.0, -2 + 4.0 * d / 9);
          const double sh = p.snr, uh = std::sqrt(p.beta * sh);
          const double ref = oracle::zeta_unsimplified(l, p.n_t, 1, sh, uh, 1);
          worst = std::max(worst, std::abs(exit_zeta(l, p) - ref) / std::max(1.0, std::abs(ref)));
        }
  const double secs = seconds_since(t0);
  return {worst < 1e-10 && secs < 10, fmt("%d points, max deviation %.3g, %.3f s", points, worst, secs)};
}

Outcome c10() {
  std::mt19937_64 gen(110);
  std::normal_distribution<double> normal;
  double worst_z = 0, worst_doubling = 0;
  int idx = 0;
  for (double u : {0.05, 0.3, 1.0, 3.0, 10.0})
    for (auto [nt, beta] : {std::pair{8, 0.5}, std::pair{32, 10.0}, std::pair{64, 3.0}, std::pair{16, 40.0}}) {
      ExitParams p;
      p.n_t = nt;
      p.beta = beta;
      p.snr = 10;
      int used = 0;
      const double q = exit_expectation(u, p, &used);
      const double half = detail::exit_integral(u, p, used / 2);
      worst_doubling = std::max(worst_doubling, std::abs(q - half) / std::abs(q));
      const int n = 10000000;
      double s = 0, s2 = 0;
      const double sd = std::sqrt(2 * u);
      for (int i = 0; i < n; ++i) {
        const double z = exit_zeta(u + sd * normal(gen), p);
        s += z;
        s2 += z * z;
      }
      const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
      worst_z = std::max(worst_z, std::abs(q - mean) / se);
      ++idx;
    }
  return {worst_z < 4 && worst_doubling < 1e-8,
          fmt("%d points, max |quad - MC|/se %.2f, doubling change %.3g", idx, worst_z, worst_doubling)};
}

struct FixedPointScan {
  bool ok = true;
  std::string detail;
};

// Exactly one fixed point per setting, reached from u = 0.01, ordered as asked.
FixedPointScan scan(double l0, bool& monotone_t, bool& increasing_beta) {
  FixedPointScan out;
  monotone_t = increasing_beta = true;
  double prev = -INFINITY;
  for (int t : {16, 32, 64, 128, 256}) {
    ExitParams p;
    p.n_t = 32;
    p.snr = 10;
    p.beta = 10;
    p.l_0 = l0;
    p.t_len = t;
    const auto roots = exit_fixed_points(p);
    const auto tr = exit_trajectory(p, 0.01);
    out.detail += fmt("T=%d: %zu root(s)", t, roots.size());
    if (tr.fixed_point) out.detail += fmt(" u*=%.4g; ", *tr.fixed_point);
    else out.detail += "; ";
    if (roots.size() != 1 || !tr.fixed_point) {
      out.ok = false;
      continue;
    }
    if (*tr.fixed_point < prev) monotone_t = false;
    prev = *tr.fixed_point;
  }
  prev = -INFINITY;
  for (double beta : {0.8, 3.2, 12.8, 51.2}) {
    ExitParams p;
    p.n_t = 32;
    p.snr = 10;
    p.beta = beta;
    p.l_0 = l0;
    p.t_len = 64;
    const auto roots = exit_fixed_points(p);
    const auto tr = exit_trajectory(p, 0.01);
    out.detail += fmt("beta=%g: %zu root(s)", beta, roots.size());
    if (tr.fixed_point) out.detail += fmt(" u*=%.4g; ", *tr.fixed_point);
    else out.detail += "; ";
    if (roots.size() != 1 || !tr.fixed_point) {
      out.ok = false;
      continue;
    }
    if (!(*tr.fixed_point > prev)) increasing_beta = false;
    prev = *tr.fixed_point;
  }
  return out;
}

Outcome c11() {
  const auto t0 = std::chrono::steady_clock::now();
  bool mt = false, ib = false;
  const auto r = scan(logit(0.125), mt, ib);
  const double secs = seconds_since(t0);
  bool mt2 = false, ib2 = false;
  const auto mirrored = scan(-logit(0.125), mt2, ib2);
  std::printf("INFO criterion 11 with l_0 = +%.4f: %s%s\n", -logit(0.125),
              mirrored.ok && mt2 && ib2 ? "all conditions hold; " : "conditions fail; ", mirrored.detail.c_str());
  return {r.ok && mt && ib && secs < 30, fmt("l_0 = %.4f: ", logit(0.125)) + r.detail + fmt("%.1f s", secs)};
}

Outcome c12() {
  bool mono = true;
  double prev = ber_predict(0);
  for (int i = 1; i <= 1000; ++i) {
    const double v = ber_predict(0.02 * i);
    mono = mono && v < prev;
    prev = v;
  }
  const double err = std::abs(ber_predict(4) - oracle::half_erfc_1);
  return {ber_predict(0) == 0.5 && mono && err < 1e-12,
          fmt("P(0) = %.17g, monotone %s, |P(4) - oracle| %.3g", ber_predict(0), mono ? "yes" : "no", err)};
}

Outcome c13() {
  const std::string base =
      "sweep = snr\nsweep_values = 0, 15, 30\ntrials = 24\nseed = 13\neta = 0.06\nestimators = lse_smp, lse, genie_ls, omp\n";
  auto run = [&](int threads) {
    auto c = desk(base);
    c.threads = threads;
    std::ostringstream os;
    write_sweep_csv(os, run_sweep(c));
    return os.str();
  };
  auto run_exit_csv = [&](int) {
    std::ostringstream os;
    write_exit_csv(os, run_exit(desk("sweep = exit\nsweep_values = 16, 64\neta = 0.875\nn_t = 32\n")));
    return os.str();
  };
  auto run_crlb_csv = [&](int threads) {
    auto c = desk("snr_db = 0, 20\ntrials = 20\nseed = 3\n");
    c.threads = threads;
    std::ostringstream os;
    write_crlb_csv(os, run_crlb(c));
    return os.str();
  };
  const std::string a = run(1), b = run(1), c = run(4), d = run(4);
  const bool sweeps = a == b && a == c && c == d;
  const bool exits = run_exit_csv(1) == run_exit_csv(1);
  const bool crlbs = run_crlb_csv(1) == run_crlb_csv(3);
  return {sweeps && exits && crlbs, fmt("sweep %s, exit %s, crlb %s (%zu bytes)", sweeps ? "identical" : "differs",
                                        exits ? "identical" : "differs", crlbs ? "identical" : "differs", a.size())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> all = {
      {"message-passing updates match edge-wise loops", c1},
      {"LLR and probability forms agree", c2},
      {"genie LS attains the bound", c3},
      {"score identity", c4},
      {"bound ordering and eigenvalue interlacing", c5},
      {"five iterations are enough", c6},
      {"sparsity benefit", c7},
      {"estimator ordering", c8},
      {"zeta forms agree", c9},
      {"EXIT quadrature vs Monte Carlo", c10},
      {"EXIT fixed points", c11},
      {"BER prediction", c12},
      {"reproducible CSV", c13},
  };
  int failed = 0;
  for (size_t i = 0; i < all.size(); ++i) {
    Outcome o;
    try {
      o = all[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %zu: %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, all[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, all.size());
  return failed ? 1 : 0;
}
