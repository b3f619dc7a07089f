#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mdns/lattice.hpp"

namespace mdns {

/// Normalised effective sample size (sum w)^2 / (M sum w^2) of w = e^{W},
/// computed from log-weights.
double ess(std::span<const double> log_weights);

/// log Z - mean(W): Monte Carlo estimate of KL(P^u || P*).
double path_kl_estimate(std::span<const double> log_weights, double logZ_exact);

/// Row/column magnetisations and correlations.
///
/// Index k runs over {-floor(L/2), ..., floor(L/2)} and refers to physical
/// row (k mod L); for even L the two ends alias the same row and both are
/// kept, so arrays have 2 floor(L/2) + 1 entries. corr_row[a][b] is
/// C^row(k_a, k_b). corr_vs_distance[r] averages C(k, k + r) over the L
/// physical rows (columns), r = 0..floor(L/2).
struct ObservableReport {
  ModelKind kind = ModelKind::Ising;
  int L = 0;
  std::size_t samples = 0;
  double magnetization = 0.0;
  std::vector<double> mag_row, mag_col;
  std::vector<std::vector<double>> corr_row, corr_col;
  std::vector<double> corr_dist_row, corr_dist_col;
};

struct ObservableErrors {
  double mag_err = 0.0;
  double corr_err = 0.0;
};

/// k values in order, -floor(L/2)..floor(L/2).
std::vector<int> observable_indices(int L);

/// Ising: M(i) = E[spin_i], C(i, j) = E[s_i s_j] - E[s_i] E[s_j].
ObservableReport ising_observables(int L, std::span<const TokenSeq> samples);
/// Potts: M(i) = (q max_c n_c / n - 1) / (q - 1), C(i, j) = P(x_i = x_j) - 1/q.
ObservableReport potts_observables(int L, int q, std::span<const TokenSeq> samples);
ObservableReport observables(const ModelSpec& spec, std::span<const TokenSeq> samples);

/// mag_err = (1/2L) sum_k |dM_row(k)| + |dM_col(k)|,
/// corr_err = (1/L^2) sum_{k,l} |dC_row(k,l)| + |dC_col(k,l)|.
ObservableErrors observable_errors(const ObservableReport& report, const ObservableReport& truth);

void to_json(nlohmann::json& j, const ObservableReport& r);
void to_json(nlohmann::json& j, const ObservableErrors& e);

/// Columns r, C_row, C_col.
void write_corr_csv(const ObservableReport& r, std::ostream& os);

}  // namespace mdns
