#include "mdns/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <nlohmann/json.hpp>

#include "mdns/error.hpp"

namespace mdns {
namespace {

int wrap(int k, int L) { return ((k % L) + L) % L; }

// Builds the k-indexed arrays from per-site magnetisations and a pair
// function C(i, j) defined on same-column and same-row pairs.
template <class Pair>
void fill_report(ObservableReport& rep, const std::vector<double>& site_mag, Pair&& C) {
  const int L = rep.L;
  const auto ks = observable_indices(L);
  const std::size_t K = ks.size();
  rep.mag_row.assign(K, 0.0);
  rep.mag_col.assign(K, 0.0);
  rep.corr_row.assign(K, std::vector<double>(K, 0.0));
  rep.corr_col.assign(K, std::vector<double>(K, 0.0));

  // Physical-row tables first, then alias into k order.
  std::vector<double> mrow(L, 0.0), mcol(L, 0.0);
  std::vector<std::vector<double>> crow(L, std::vector<double>(L, 0.0)), ccol = crow;
  for (int r = 0; r < L; ++r)
    for (int c = 0; c < L; ++c) {
      mrow[r] += site_mag[r * L + c];
      mcol[c] += site_mag[r * L + c];
    }
  for (int a = 0; a < L; ++a)
    for (int b = 0; b < L; ++b)
      for (int c = 0; c < L; ++c) {
        crow[a][b] += C(a * L + c, b * L + c);
        ccol[a][b] += C(c * L + a, c * L + b);
      }
  for (std::size_t i = 0; i < K; ++i) {
    rep.mag_row[i] = mrow[wrap(ks[i], L)];
    rep.mag_col[i] = mcol[wrap(ks[i], L)];
    for (std::size_t j = 0; j < K; ++j) {
      rep.corr_row[i][j] = crow[wrap(ks[i], L)][wrap(ks[j], L)];
      rep.corr_col[i][j] = ccol[wrap(ks[i], L)][wrap(ks[j], L)];
    }
  }
  rep.corr_dist_row.assign(L / 2 + 1, 0.0);
  rep.corr_dist_col.assign(L / 2 + 1, 0.0);
  for (int r = 0; r <= L / 2; ++r) {
    for (int k = 0; k < L; ++k) {
      rep.corr_dist_row[r] += crow[k][(k + r) % L];
      rep.corr_dist_col[r] += ccol[k][(k + r) % L];
    }
    rep.corr_dist_row[r] /= L;
    rep.corr_dist_col[r] /= L;
  }
  double m = 0.0;
  for (double v : site_mag) m += v;
  rep.magnetization = m / static_cast<double>(site_mag.size());
}

void check_samples(int L, std::span<const TokenSeq> samples) {
  if (L < 2) throw_config("observables need L >= 2");
  if (samples.empty()) throw_config("observables need at least one sample");
  for (const auto& x : samples)
    if (static_cast<int>(x.size()) != L * L) throw_config("sample length does not match L * L");
}

}  // namespace

double ess(std::span<const double> log_weights) {
  if (log_weights.empty()) throw_config("ess needs at least one weight");
  const double m = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(m)) throw_numeric("ess received a non-finite maximum log-weight");
  double s1 = 0.0, s2 = 0.0;
  for (double w : log_weights) {
    const double e = std::exp(w - m);
    s1 += e;
    s2 += e * e;
  }
  return s1 * s1 / (static_cast<double>(log_weights.size()) * s2);
}

double path_kl_estimate(std::span<const double> log_weights, double logZ_exact) {
  if (log_weights.empty()) throw_config("path_kl_estimate needs at least one weight");
  double mean = 0.0;
  for (double w : log_weights) mean += w;
  return logZ_exact - mean / static_cast<double>(log_weights.size());
}

std::vector<int> observable_indices(int L) {
  std::vector<int> ks;
  for (int k = -(L / 2); k <= L / 2; ++k) ks.push_back(k);
  return ks;
}

ObservableReport ising_observables(int L, std::span<const TokenSeq> samples) {
  check_samples(L, samples);
  const int D = L * L;
  const double n = static_cast<double>(samples.size());
  std::vector<double> mean(D, 0.0);
  // Second moments on the pairs the report needs: same column (row pairs)
  // and same row (column pairs), indexed [a][b][c].
  std::vector<double> row_pair(static_cast<std::size_t>(L) * L * L, 0.0), col_pair = row_pair;
  std::vector<int> s(D);
  for (const auto& x : samples) {
    for (int i = 0; i < D; ++i) {
      s[i] = lattice::ising_spin(x[i]);
      mean[i] += s[i];
    }
    for (int a = 0; a < L; ++a)
      for (int b = 0; b < L; ++b)
        for (int c = 0; c < L; ++c) {
          row_pair[(a * L + b) * L + c] += s[a * L + c] * s[b * L + c];
          col_pair[(a * L + b) * L + c] += s[c * L + a] * s[c * L + b];
        }
  }
  for (auto& v : mean) v /= n;
  ObservableReport rep;
  rep.kind = ModelKind::Ising;
  rep.L = L;
  rep.samples = samples.size();
  auto C = [&](int i, int j) {
    const int ai = i / L, ci = i % L, aj = j / L, cj = j % L;
    double second;
    if (ci == cj)
      second = row_pair[(ai * L + aj) * L + ci] / n;
    else
      second = col_pair[(ci * L + cj) * L + ai] / n;
    return second - mean[i] * mean[j];
  };
  fill_report(rep, mean, C);
  return rep;
}

ObservableReport potts_observables(int L, int q, std::span<const TokenSeq> samples) {
  check_samples(L, samples);
  if (q < 2) throw_config("Potts observables need q >= 2");
  const int D = L * L;
  const double n = static_cast<double>(samples.size());
  std::vector<double> counts(static_cast<std::size_t>(D) * q, 0.0);
  std::vector<double> row_eq(static_cast<std::size_t>(L) * L * L, 0.0), col_eq = row_eq;
  for (const auto& x : samples) {
    for (int i = 0; i < D; ++i) counts[i * q + x[i] - 1] += 1.0;
    for (int a = 0; a < L; ++a)
      for (int b = 0; b < L; ++b)
        for (int c = 0; c < L; ++c) {
          row_eq[(a * L + b) * L + c] += x[a * L + c] == x[b * L + c];
          col_eq[(a * L + b) * L + c] += x[c * L + a] == x[c * L + b];
        }
  }
  std::vector<double> mag(D);
  for (int i = 0; i < D; ++i) {
    const double mx = *std::max_element(counts.begin() + i * q, counts.begin() + (i + 1) * q);
    mag[i] = (q * mx / n - 1.0) / (q - 1.0);
  }
  ObservableReport rep;
  rep.kind = ModelKind::Potts;
  rep.L = L;
  rep.samples = samples.size();
  auto C = [&](int i, int j) {
    const int ai = i / L, ci = i % L, aj = j / L, cj = j % L;
    const double eq = ci == cj ? row_eq[(ai * L + aj) * L + ci] : col_eq[(ci * L + cj) * L + ai];
    return eq / n - 1.0 / q;
  };
  fill_report(rep, mag, C);
  return rep;
}

ObservableReport observables(const ModelSpec& spec, std::span<const TokenSeq> samples) {
  return spec.kind == ModelKind::Ising ? ising_observables(spec.L, samples)
                                       : potts_observables(spec.L, spec.N, samples);
}

ObservableErrors observable_errors(const ObservableReport& report, const ObservableReport& truth) {
  if (report.L != truth.L || report.mag_row.size() != truth.mag_row.size())
    throw_config("observable reports have different lattice sizes");
  const int L = report.L;
  ObservableErrors e;
  for (std::size_t k = 0; k < report.mag_row.size(); ++k)
    e.mag_err += std::abs(report.mag_row[k] - truth.mag_row[k]) + std::abs(report.mag_col[k] - truth.mag_col[k]);
  e.mag_err /= 2.0 * L;
  for (std::size_t k = 0; k < report.corr_row.size(); ++k)
    for (std::size_t l = 0; l < report.corr_row.size(); ++l)
      e.corr_err += std::abs(report.corr_row[k][l] - truth.corr_row[k][l]) +
                    std::abs(report.corr_col[k][l] - truth.corr_col[k][l]);
  e.corr_err /= static_cast<double>(L) * L;
  return e;
}

void to_json(nlohmann::json& j, const ObservableReport& r) {
  j = nlohmann::json{{"kind", to_string(r.kind)},
                     {"L", r.L},
                     {"samples", r.samples},
                     {"k", observable_indices(r.L)},
                     {"magnetization", r.magnetization},
                     {"mag_row", r.mag_row},
                     {"mag_col", r.mag_col},
                     {"corr_row", r.corr_row},
                     {"corr_col", r.corr_col},
                     {"corr_vs_distance", {{"row", r.corr_dist_row}, {"col", r.corr_dist_col}}}};
}

void to_json(nlohmann::json& j, const ObservableErrors& e) {
  j = nlohmann::json{{"mag_err", e.mag_err}, {"corr_err", e.corr_err}};
}

void write_corr_csv(const ObservableReport& r, std::ostream& os) {
  os << "r,C_row,C_col\n";
  os.precision(12);
  for (std::size_t i = 0; i < r.corr_dist_row.size(); ++i)
    os << i << ',' << r.corr_dist_row[i] << ',' << r.corr_dist_col[i] << '\n';
}

}  // namespace mdns
