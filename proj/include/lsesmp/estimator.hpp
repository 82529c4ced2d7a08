// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lsesmp/channel_model.hpp"
#include "lsesmp/numerics.hpp"

#include <algorithm>
#include <vector>

namespace lsesmp {

// How the own edge s*h_ij is modelled in the b_ij = 1 hypothesis at a sum node.
enum class OwnEdge {
  estimate,        // mean h_hat, variance v_h (plug-in; degenerates to a z-test)
  prior_variance,  // mean h_hat, variance var_h of the nonzero prior
};

enum class EmRule {
  literal,         // unweighted r / mu averages, alternative N(r; h_hat, v_h + mu)
  weighted_prior,  // inverse-variance r / mu, alternative N(r; u_h, var_h + mu)
};

struct EstimatorConfig {
  int max_iters = 20;
  double eps = 1e-6;
  double initial_sparsity = 0.5;
  double llr_clamp = 30;
  double variance_floor = 1e-12;  // relative to sigma_n^2
  double pinv_rel_tol = 1e-10;
  double support_threshold = 0.5;
  double eta_min = 1e-4;
  double em_skip_rel = 1e-8;  // |s| below this times rms(S) is left out of r/mu

  // Nonzero-entry prior, known to the receiver.
  double prior_mean = 10;
  double prior_variance = 10;

  OwnEdge own_edge = OwnEdge::prior_variance;
  EmRule em_rule = EmRule::weighted_prior;
  bool hard_fine_support = true;  // fine LSE keeps only entries with b >= support_threshold

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("EstimatorConfig: max_iters must be >= 1");
    if (!(eps > 0)) throw std::invalid_argument("EstimatorConfig: eps must be positive");
    if (!(initial_sparsity > 0 && initial_sparsity < 1))
      throw std::invalid_argument("EstimatorConfig: initial_sparsity must lie in (0, 1)");
    if (!(llr_clamp > 0) || !std::isfinite(llr_clamp))
      throw std::invalid_argument("EstimatorConfig: llr_clamp must be positive and finite");
    if (!(variance_floor > 0)) throw std::invalid_argument("EstimatorConfig: variance_floor must be positive");
    if (!(pinv_rel_tol > 0 && pinv_rel_tol < 1))
      throw std::invalid_argument("EstimatorConfig: pinv_rel_tol must lie in (0, 1)");
    if (!(support_threshold > 0 && support_threshold < 1))
      throw std::invalid_argument("EstimatorConfig: support_threshold must lie in (0, 1)");
    if (!(eta_min > 0 && eta_min < 0.5)) throw std::invalid_argument("EstimatorConfig: eta_min must lie in (0, 0.5)");
    if (!(prior_variance > 0)) throw std::invalid_argument("EstimatorConfig: prior_variance must be positive");
  }
};

template <typename Scalar>
struct SmpState {
  Mat<Scalar> l_v;  // N x M, variable -> sum
  Mat<Scalar> l_s;  // M x N, sum -> variable
  Mat<Scalar> u_s;  // M x N, e^s
  Mat<Scalar> v_s;  // M x N, v^s
  Vec<Scalar> h_hat;
  Vec<Scalar> v_h;
  Vec<Scalar> l_post;  // full-column posterior LLR
  Vec<Scalar> b_soft;
  Scalar eta_hat = 0.5;
  int iter = 0;
  bool zero_probabilities = true;  // p^v = 0 on the first sum-node pass

  Mat<Scalar> p_v() const {
    if (zero_probabilities) return Mat<Scalar>::Zero(l_v.rows(), l_v.cols());
    return l_v.unaryExpr([](Scalar l) { return logistic(l); });
  }
};

template <typename Scalar>
struct EstimateResult {
  Vec<Scalar> h_star;
  Vec<Scalar> h_fine;
  Vec<Scalar> b_soft;
  Vec<int> support;
  std::vector<Scalar> eta_trace;
  std::vector<Scalar> nmse_trace;
  int iters_used = 0;
  bool converged = false;
  bool coarse_rank_deficient = false;
};

template <typename Scalar>
struct LsResult {
  Vec<Scalar> h;
  Vec<Scalar> v_h;
  bool rank_deficient = false;
};

template <typename Scalar>
void check_system(const Vec<Scalar>& y, const Mat<Scalar>& s, const char* who) {
  if (s.rows() != y.size())
    throw std::invalid_argument(std::string(who) + ": S has " + std::to_string(s.rows()) + " rows but y has " +
                                std::to_string(y.size()) + " entries");
  require_finite(s, who);
  require_finite(y, who);
}

template <typename Scalar>
LsResult<Scalar> lse_coarse(const Vec<Scalar>& y, const Mat<Scalar>& s, Scalar noise_var,
                            Scalar pinv_rel_tol = Scalar(1e-10)) {
  check_system(y, s, "lse_coarse");
  const Mat<Scalar> gram = s.transpose() * s;
  LsResult<Scalar> out;
  Eigen::LLT<Mat<Scalar>> llt(gram);
  Mat<Scalar> inv;
  if (llt.info() == Eigen::Success && llt.rcond() > Scalar(1e-13)) {
    inv = llt.solve(Mat<Scalar>::Identity(gram.rows(), gram.cols()));
  } else {
    inv = pseudo_inverse(gram, pinv_rel_tol);
    out.rank_deficient = true;
  }
  out.h = inv * (s.transpose() * y);
  out.v_h = noise_var * inv.diagonal();
  return out;
}

// Sum-node pass. Interference moments use state.h_hat / state.v_h; the own
// edge of the b = 1 hypothesis uses (own_mean, own_var).
template <typename Scalar>
void sum_node_update(SmpState<Scalar>& st, const Vec<Scalar>& y, const Mat<Scalar>& s, Scalar noise_var,
                     const Vec<Scalar>& own_mean, const Vec<Scalar>& own_var, Scalar llr_clamp,
                     Scalar variance_floor) {
  const Eigen::Index m = s.rows(), n = s.cols();
  const Mat<Scalar> p = st.p_v().transpose();  // M x N
  const Mat<Scalar> s2 = s.array().square().matrix();
  const auto h = st.h_hat.transpose().array().replicate(m, 1);
  const auto vh = st.v_h.transpose().array().replicate(m, 1);

  const Mat<Scalar> terms_u = (s.array() * h * p.array()).matrix();
  const Mat<Scalar> terms_v = (s2.array() * (h.square() * p.array() * (1 - p.array()) + vh * p.array())).matrix();
  const Vec<Scalar> row_u = terms_u.rowwise().sum();
  const Vec<Scalar> row_v = terms_v.rowwise().sum();

  st.u_s = (row_u.replicate(1, n) - terms_u);
  st.v_s = ((row_v.replicate(1, n) - terms_v).array() + noise_var).max(variance_floor).matrix();

  st.l_s.resize(m, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < m; ++k) {
      const Scalar v = st.v_s(k, j);
      const Scalar a = v + s2(k, j) * own_var(j);
      const Scalar r0 = y(k) - st.u_s(k, j);
      const Scalar r1 = r0 - s(k, j) * own_mean(j);
      Scalar l = Scalar(-0.5) * std::log(a / v) - r1 * r1 / (2 * a) + r0 * r0 / (2 * v);
      if (!std::isfinite(l) || !std::isfinite(st.u_s(k, j)))
        throw NumericError("sum_node_update: non-finite message on edge (" + std::to_string(k) + ", " +
                           std::to_string(j) + ")");
      st.l_s(k, j) = std::clamp(l, -llr_clamp, llr_clamp);
    }
}

// Plain form: own edge uses (h_hat, v_h).
template <typename Scalar>
void sum_node_update(SmpState<Scalar>& st, const Vec<Scalar>& y, const Mat<Scalar>& s, Scalar noise_var,
                     Scalar llr_clamp = 30, Scalar variance_floor_rel = Scalar(1e-12)) {
  const Vec<Scalar> mean = st.h_hat, var = st.v_h;
  sum_node_update(st, y, s, noise_var, mean, var, llr_clamp, variance_floor_rel * noise_var);
}

template <typename Scalar>
void variable_node_update(SmpState<Scalar>& st, Scalar l0, Scalar llr_clamp = 30) {
  const Vec<Scalar> tot = st.l_s.colwise().sum().transpose();
  const Eigen::Index m = st.l_s.rows();
  st.l_v = ((tot.replicate(1, m) - st.l_s.transpose()).array() + l0)
               .max(-llr_clamp)
               .min(llr_clamp)
               .matrix();
  st.l_post = (tot.array() + l0).max(-llr_clamp).min(llr_clamp).matrix();
  st.b_soft = st.l_post.unaryExpr([](Scalar l) { return logistic(l); });
}

template <typename Scalar>
struct FineResult {
  Vec<Scalar> h;
  Vec<Scalar> v_h;          // zero where the pseudo-inverse dropped an entry
  Vec<Scalar> kept_weight;  // diag(Q^+ Q), 1 on the resolved support
};

// h = Q^+ (S U_b)^T y, V = sigma^2 Q^+, Q = U_b S^T S U_b.
template <typename Scalar>
FineResult<Scalar> lse_fine(const Vec<Scalar>& y, const Mat<Scalar>& s, const Vec<Scalar>& b, Scalar noise_var,
                            Scalar pinv_rel_tol = Scalar(1e-10)) {
  check_system(y, s, "lse_fine");
  if (b.size() != s.cols())
    throw std::invalid_argument("lse_fine: weight vector length does not match S columns");
  if ((b.array() < 0).any() || (b.array() > 1).any())
    throw std::invalid_argument("lse_fine: weights must lie in [0, 1]");
  // Zero-weight columns of S U_b vanish, so Q^+ is the pseudo-inverse of the
  // active block padded with zeros.
  const auto idx = active_indices(b);
  const Eigen::Index n = b.size();
  FineResult<Scalar> out{Vec<Scalar>::Zero(n), Vec<Scalar>::Zero(n), Vec<Scalar>::Zero(n)};
  if (idx.empty()) return out;
  const Mat<Scalar> sb = s(Eigen::all, idx) * b(idx).asDiagonal();
  const Mat<Scalar> q = sb.transpose() * sb;
  if (!(q.array() != 0).any()) return out;
  const Mat<Scalar> qp = pseudo_inverse(q, pinv_rel_tol);
  out.h(idx) = qp * (sb.transpose() * y);
  out.v_h(idx) = noise_var * qp.diagonal();
  out.kept_weight(idx) = (qp * q).diagonal();
  return out;
}

template <typename Scalar>
struct PseudoObservation {
  Vec<Scalar> r;
  Vec<Scalar> mu;
};

// Per-entry pseudo-observation r_ij and its noise level mu_ij from the sum-node
// messages of column ij. Terms with tiny |s| are skipped.
template <typename Scalar>
PseudoObservation<Scalar> pseudo_observation(const SmpState<Scalar>& st, const Vec<Scalar>& y,
                                             const Mat<Scalar>& s, Scalar skip_rel, bool weighted) {
  const Eigen::Index m = s.rows(), n = s.cols();
  const Scalar rms = std::sqrt(s.squaredNorm() / Scalar(s.size()));
  const Scalar floor = skip_rel * rms;
  PseudoObservation<Scalar> po{Vec<Scalar>(n), Vec<Scalar>(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    Scalar a = 0, c = 0, w = 0;
    Eigen::Index used = 0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const Scalar sk = s(k, j);
      if (!(std::abs(sk) >= floor) || sk == 0) continue;
      const Scalar res = y(k) - st.u_s(k, j);
      if (weighted) {
        a += sk * res;
        w += sk * sk;
        c += sk * sk / st.v_s(k, j);
      } else {
        a += res / sk;
        c += st.v_s(k, j) / (sk * sk);
      }
      ++used;
    }
    if (used == 0) throw NumericError("em_update_sparsity: every training entry of column " + std::to_string(j) +
                                      " is below the skip floor");
    if (weighted) {
      po.r(j) = a / w;
      po.mu(j) = Scalar(1) / c;
    } else {
      po.r(j) = a / Scalar(used);
      po.mu(j) = c / Scalar(used);
    }
  }
  return po;
}

template <typename Scalar>
Scalar em_eta_from(const PseudoObservation<Scalar>& po, const Vec<Scalar>& alt_mean, const Vec<Scalar>& alt_var,
                   Scalar eta, Scalar eta_min) {
  const Scalar l0 = logit(eta);
  Scalar acc = 0;
  for (Eigen::Index j = 0; j < po.r.size(); ++j) {
    const Scalar mu = po.mu(j);
    acc += logistic(l0 + gaussian_logpdf(po.r(j), alt_mean(j), alt_var(j) + mu) -
                    gaussian_logpdf(po.r(j), Scalar(0), mu));
  }
  return std::clamp(acc / Scalar(po.r.size()), eta_min, Scalar(1) - eta_min);
}

// EM step for eta as written: alternative N(r; h_hat, v_h + mu), unweighted averages.
template <typename Scalar>
Scalar em_update_sparsity(const SmpState<Scalar>& st, const Vec<Scalar>& y, const Mat<Scalar>& s,
                          Scalar eta_min = Scalar(1e-4), Scalar skip_rel = Scalar(1e-8)) {
  if (!(st.eta_hat > 0 && st.eta_hat < 1)) throw std::invalid_argument("em_update_sparsity: eta must lie in (0, 1)");
  const auto po = pseudo_observation(st, y, s, skip_rel, false);
  return em_eta_from(po, st.h_hat, st.v_h, st.eta_hat, eta_min);
}

// Variant used by run_lse_smp by default: inverse-variance pseudo-observation,
// alternative hypothesis drawn from the nonzero prior.
template <typename Scalar>
Scalar em_update_sparsity_prior(const SmpState<Scalar>& st, const Vec<Scalar>& y, const Mat<Scalar>& s,
                                Scalar prior_mean, Scalar prior_var, Scalar eta_min = Scalar(1e-4),
                                Scalar skip_rel = Scalar(1e-8)) {
  if (!(st.eta_hat > 0 && st.eta_hat < 1)) throw std::invalid_argument("em_update_sparsity: eta must lie in (0, 1)");
  const auto po = pseudo_observation(st, y, s, skip_rel, true);
  const Eigen::Index n = s.cols();
  return em_eta_from<Scalar>(po, Vec<Scalar>::Constant(n, prior_mean), Vec<Scalar>::Constant(n, prior_var),
                             st.eta_hat, eta_min);
}

template <typename Scalar>
Scalar nmse(const Vec<Scalar>& est, const Vec<Scalar>& truth) {
  if (est.size() != truth.size()) throw std::invalid_argument("nmse: length mismatch");
  const Scalar den = truth.squaredNorm();
  if (!(den > 0)) throw std::domain_error("nmse: true channel is zero");
  return (est - truth).squaredNorm() / den;
}

template <typename Scalar>
EstimateResult<Scalar> run_lse_smp(const Vec<Scalar>& y, const Mat<Scalar>& s, Scalar noise_var,
                                   const EstimatorConfig& cfg, const Vec<Scalar>* truth = nullptr) {
  cfg.validate();
  check_system(y, s, "run_lse_smp");
  if (!(noise_var > 0)) throw std::invalid_argument("run_lse_smp: noise variance must be positive");
  const Eigen::Index m = s.rows(), n = s.cols();
  const Scalar clamp = Scalar(cfg.llr_clamp);
  const Scalar vfloor = Scalar(cfg.variance_floor) * noise_var;

  EstimateResult<Scalar> res;
  SmpState<Scalar> st;
  const auto coarse = lse_coarse(y, s, noise_var, Scalar(cfg.pinv_rel_tol));
  res.coarse_rank_deficient = coarse.rank_deficient;
  st.h_hat = coarse.h;
  st.v_h = coarse.v_h.array().max(vfloor).matrix();
  st.l_v = Mat<Scalar>::Zero(n, m);
  st.l_post = Vec<Scalar>::Zero(n);
  st.eta_hat = Scalar(cfg.initial_sparsity);
  st.zero_probabilities = true;

  const Vec<Scalar> prior_var = Vec<Scalar>::Constant(n, Scalar(cfg.prior_variance));
  Vec<Scalar> h_star_prev = coarse.h;
  Vec<Scalar> l_prev = st.l_post;

  for (int it = 1; it <= cfg.max_iters; ++it) {
    st.iter = it;
    try {
      const Vec<Scalar> own_mean = st.h_hat;
      const Vec<Scalar>& own_var = cfg.own_edge == OwnEdge::estimate ? st.v_h : prior_var;
      sum_node_update(st, y, s, noise_var, own_mean, own_var, clamp, vfloor);
      variable_node_update(st, logit(st.eta_hat), clamp);
      st.zero_probabilities = false;

      Vec<Scalar> w = st.b_soft;
      if (cfg.hard_fine_support)
        w = (st.b_soft.array() >= Scalar(cfg.support_threshold)).select(st.b_soft, Scalar(0));
      const auto fine = lse_fine(y, s, w, noise_var, Scalar(cfg.pinv_rel_tol));

      Scalar eta_next;
      if (cfg.em_rule == EmRule::literal) {
        SmpState<Scalar> view = st;
        view.h_hat = fine.h;
        view.v_h = fine.v_h.array().max(vfloor).matrix();
        eta_next = em_update_sparsity(view, y, s, Scalar(cfg.eta_min), Scalar(cfg.em_skip_rel));
      } else {
        eta_next = em_update_sparsity_prior(st, y, s, Scalar(cfg.prior_mean), Scalar(cfg.prior_variance),
                                            Scalar(cfg.eta_min), Scalar(cfg.em_skip_rel));
      }

      res.h_fine = fine.h;
      res.h_star = fine.h.cwiseProduct(st.b_soft);
      // Message-passing state carries the value of an active entry, w * h_fine,
      // and keeps the previous value where the pseudo-inverse dropped the entry.
      for (Eigen::Index j = 0; j < n; ++j) {
        if (fine.kept_weight(j) > Scalar(0.5)) {
          st.h_hat(j) = w(j) * fine.h(j);
          st.v_h(j) = std::max(w(j) * w(j) * fine.v_h(j), vfloor);
        }
      }
      st.eta_hat = eta_next;
      if (!std::isfinite(eta_next)) throw NumericError("non-finite sparsity estimate");
      if (!res.h_star.allFinite() || !st.h_hat.allFinite())
        throw NumericError("non-finite channel estimate (fine LSE on " + std::to_string(int((w.array() > 0).count())) +
                           " entries)");
    } catch (const NumericError& e) {
      throw NumericError("run_lse_smp iteration " + std::to_string(it) + ": " + e.what());
    }

    res.eta_trace.push_back(st.eta_hat);
    if (truth) res.nmse_trace.push_back(nmse(res.h_star, *truth));
    res.iters_used = it;
    const Scalar dh = (res.h_star - h_star_prev).norm();
    const Scalar dl = (st.l_post - l_prev).norm();
    h_star_prev = res.h_star;
    l_prev = st.l_post;
    if (dh < Scalar(cfg.eps) && dl < Scalar(cfg.eps)) {
      res.converged = true;
      break;
    }
  }
  res.b_soft = st.b_soft;
  res.support = (st.b_soft.array() >= Scalar(cfg.support_threshold)).template cast<int>();
  return res;
}

template <typename Scalar>
EstimateResult<Scalar> run_lse_smp(const ProblemInstance<Scalar>& inst, const EstimatorConfig& cfg,
                                   bool with_truth = true) {
  return run_lse_smp(inst.y_bar, inst.s_bar, inst.noise_variance, cfg, with_truth ? &inst.h_true : nullptr);
}

template <typename Scalar>
Vec<Scalar> lse_baseline(const ProblemInstance<Scalar>& inst) {
  return lse_coarse(inst.y_bar, inst.s_bar, inst.noise_variance).h;
}

template <typename Scalar>
Vec<Scalar> genie_ls(const ProblemInstance<Scalar>& inst, Scalar pinv_rel_tol = Scalar(1e-10)) {
  return lse_fine(inst.y_bar, inst.s_bar, inst.b_true, inst.noise_variance, pinv_rel_tol).h;
}

// Greedy selection on normalized residual correlation, LS refit each step.
template <typename Scalar>
Vec<Scalar> omp(const Vec<Scalar>& y, const Mat<Scalar>& s, Eigen::Index k) {
  check_system(y, s, "omp");
  if (k < 0 || k > s.rows() || k > s.cols())
    throw std::invalid_argument("omp: sparsity " + std::to_string(k) + " exceeds system size " +
                                dims_str(s.rows(), s.cols()));
  const Eigen::Index n = s.cols();
  const Vec<Scalar> norms = s.colwise().norm().transpose();
  std::vector<Eigen::Index> sel;
  std::vector<bool> used(size_t(n), false);
  Vec<Scalar> resid = y, coef;
  for (Eigen::Index step = 0; step < k; ++step) {
    const Vec<Scalar> corr = s.transpose() * resid;
    Eigen::Index best = -1;
    Scalar best_v = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (used[size_t(j)] || norms(j) == 0) continue;
      const Scalar v = std::abs(corr(j)) / norms(j);
      if (v > best_v) best_v = v, best = j;
    }
    if (best < 0) break;
    used[size_t(best)] = true;
    sel.push_back(best);
    Mat<Scalar> sub(s.rows(), Eigen::Index(sel.size()));
    for (size_t c = 0; c < sel.size(); ++c) sub.col(Eigen::Index(c)) = s.col(sel[c]);
    coef = sub.colPivHouseholderQr().solve(y);
    resid = y - sub * coef;
  }
  Vec<Scalar> out = Vec<Scalar>::Zero(n);
  for (size_t c = 0; c < sel.size(); ++c) out(sel[c]) = coef(Eigen::Index(c));
  return out;
}

template <typename Scalar>
Vec<Scalar> omp_baseline(const ProblemInstance<Scalar>& inst, Eigen::Index k) {
  return omp(inst.y_bar, inst.s_bar, k);
}

}  // namespace lsesmp
