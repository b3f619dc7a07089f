#include "mdns/score.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include <nlohmann/json.hpp>

#include "mdns/error.hpp"
#include "mdns/kernels.hpp"
#include "mdns/rng.hpp"

namespace mdns {
namespace {

constexpr int kSigmaWidth = 32;
constexpr int kSigmaDepth = 3;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void silu_inplace(const std::vector<double>& z, std::vector<double>& h) {
  h.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) h[i] = z[i] * sigmoid(z[i]);
}

// dz = dh * silu'(z), in place on dh.
void silu_backward(const std::vector<double>& z, double* dh, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double s = sigmoid(z[i]);
    dh[i] *= s * (1.0 + z[i] * (1.0 - s));
  }
}

void time_features(double t, double* f) {
  f[0] = std::sin(std::numbers::pi * t);
  f[1] = std::cos(std::numbers::pi * t);
}

void transpose(const double* w, int in, int out, std::vector<double>& wt) {
  wt.resize(static_cast<std::size_t>(in) * out);
  for (int k = 0; k < in; ++k)
    for (int j = 0; j < out; ++j) wt[static_cast<std::size_t>(j) * in + k] = w[static_cast<std::size_t>(k) * out + j];
}

}  // namespace

void to_json(nlohmann::json& j, const ScoreArch& arch) {
  j = nlohmann::json{{"hidden", arch.hidden},
                     {"time_conditioned", arch.time_conditioned},
                     {"precondition", arch.precondition}};
}

void from_json(const nlohmann::json& j, ScoreArch& arch) {
  try {
    arch.hidden = j.value("hidden", std::vector<int>{128, 128});
    arch.time_conditioned = j.value("time_conditioned", false);
    arch.precondition = j.value("precondition", false);
  } catch (const nlohmann::json::exception& e) {
    throw_config(std::string("invalid arch: ") + e.what());
  }
}

ScoreModel::ScoreModel(const ModelSpec& spec, const ScoreArch& arch, std::uint64_t seed)
    : spec_(spec), arch_(arch), precond_beta_(spec.beta) {
  spec_.validate();
  if (arch_.hidden.empty()) throw_config("score model needs at least one hidden layer");
  for (int h : arch_.hidden)
    if (h <= 0) throw_config("hidden layer widths must be positive");
  if (arch_.precondition && spec_.kind != ModelKind::Ising)
    throw_config("preconditioning is only defined for the Ising model");
  build_layout();

  // Fan-in scaled uniform for every hidden layer, zeros for biases and the
  // final layer.
  Rng rng = stream(seed, "init", 0);
  auto fill_uniform = [&](std::size_t off, std::size_t n, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < n; ++i) params_[off + i] = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
  };
  const int D = spec_.sites();
  const int H0 = arch_.hidden[0];
  const int first_fan_in = D * (spec_.N + 1) + (arch_.time_conditioned ? 2 : 0);
  fill_uniform(embed_off_, static_cast<std::size_t>(D) * (spec_.N + 1) * H0, first_fan_in);
  if (arch_.time_conditioned) fill_uniform(embed_time_off_, 2 * static_cast<std::size_t>(H0), first_fan_in);
  for (std::size_t i = 0; i + 1 < dense_.size(); ++i)
    fill_uniform(dense_[i].w_off, static_cast<std::size_t>(dense_[i].in) * dense_[i].out, dense_[i].in);
  for (std::size_t i = 0; i + 1 < sigma_layers_.size(); ++i)
    fill_uniform(sigma_layers_[i].w_off, static_cast<std::size_t>(sigma_layers_[i].in) * sigma_layers_[i].out,
                 sigma_layers_[i].in);
}

void ScoreModel::build_layout() {
  const int D = spec_.sites();
  const int N = spec_.N;
  std::size_t off = 0;
  auto add = [&](const std::string& name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int s : shape) n *= static_cast<std::size_t>(s);
    tensors_.push_back({name, std::move(shape), off, n});
    off += n;
    return tensors_.back().offset;
  };
  const auto& H = arch_.hidden;
  embed_off_ = add("embed", {D * (N + 1), H[0]});
  if (arch_.time_conditioned) embed_time_off_ = add("embed_time", {2, H[0]});
  b0_off_ = add("b0", {H[0]});
  for (std::size_t l = 1; l < H.size(); ++l) {
    Dense d{H[l - 1], H[l], 0, 0};
    d.w_off = add("w" + std::to_string(l), {H[l - 1], H[l]});
    d.b_off = add("b" + std::to_string(l), {H[l]});
    dense_.push_back(d);
  }
  Dense o{H.back(), D * N, 0, 0};
  o.w_off = add("w_out", {H.back(), D * N});
  o.b_off = add("b_out", {D * N});
  dense_.push_back(o);

  if (arch_.time_conditioned && arch_.precondition) {
    int in = 2;
    for (int l = 0; l <= kSigmaDepth; ++l) {
      const int out = l < kSigmaDepth ? kSigmaWidth : 1;
      Dense d{in, out, 0, 0};
      d.w_off = add("sigma_w" + std::to_string(l), {in, out});
      d.b_off = add("sigma_b" + std::to_string(l), {out});
      sigma_layers_.push_back(d);
      in = out;
    }
  }
  params_.assign(off, 0.0f);
}

void ScoreModel::set_precondition_beta(double beta) {
  precond_beta_ = beta;
  cache_valid_ = false;
}

std::span<float> ScoreModel::mutable_params() {
  dirty_ = true;
  cache_valid_ = false;
  return params_;
}

void ScoreModel::sync() {
  if (!dirty_) return;
  p64_.assign(params_.begin(), params_.end());
  wt_.resize(dense_.size());
  for (std::size_t i = 0; i < dense_.size(); ++i) transpose(&p64_[dense_[i].w_off], dense_[i].in, dense_[i].out, wt_[i]);
  sigma_wt_.resize(sigma_layers_.size());
  for (std::size_t i = 0; i < sigma_layers_.size(); ++i)
    transpose(&p64_[sigma_layers_[i].w_off], sigma_layers_[i].in, sigma_layers_[i].out, sigma_wt_[i]);
  dirty_ = false;
}

void ScoreModel::check_query(const double* times) const {
  if (arch_.time_conditioned && times == nullptr) throw_config("time-conditioned score model requires t");
  if (!arch_.time_conditioned && times != nullptr) throw_config("t supplied to a score model without time conditioning");
}

void ScoreModel::sigma_forward(const double* feats, std::size_t count, std::vector<std::vector<double>>& z,
                               std::vector<std::vector<double>>& h, std::vector<double>& sigma) const {
  const auto& k = kernels::active();
  z.resize(sigma_layers_.size());
  h.resize(sigma_layers_.size());
  const double* input = feats;
  for (std::size_t l = 0; l < sigma_layers_.size(); ++l) {
    const Dense& d = sigma_layers_[l];
    z[l].resize(count * d.out);
    k.gemm(input, count, d.in, &p64_[d.w_off], &p64_[d.b_off], d.out, z[l].data());
    if (l + 1 < sigma_layers_.size()) {
      silu_inplace(z[l], h[l]);
      input = h[l].data();
    }
  }
  sigma.assign(z.back().begin(), z.back().end());
}

void ScoreModel::forward_impl(const Token* states, const double* times, std::size_t count) {
  const auto& k = kernels::active();
  const int D = spec_.sites();
  const int N = spec_.N;
  const std::size_t DN = static_cast<std::size_t>(D) * N;
  const int H0 = arch_.hidden[0];
  const std::size_t layers = arch_.hidden.size();
  z_.resize(layers);
  h_.resize(layers);

  if (times) {
    feats_.resize(2 * count);
    for (std::size_t b = 0; b < count; ++b) time_features(times[b], &feats_[2 * b]);
  }

  // First layer as an embedding sum over sites.
  z_[0].resize(count * H0);
  const double* embed = &p64_[embed_off_];
  for (std::size_t b = 0; b < count; ++b) {
    double* zr = &z_[0][b * H0];
    std::memcpy(zr, &p64_[b0_off_], sizeof(double) * H0);
    const Token* x = states + b * D;
    for (int d = 0; d < D; ++d) k.axpy(H0, 1.0, embed + static_cast<std::size_t>(d * (N + 1) + x[d]) * H0, zr);
    if (times) {
      k.axpy(H0, feats_[2 * b], &p64_[embed_time_off_], zr);
      k.axpy(H0, feats_[2 * b + 1], &p64_[embed_time_off_ + H0], zr);
    }
  }
  silu_inplace(z_[0], h_[0]);
  for (std::size_t l = 1; l < layers; ++l) {
    const Dense& d = dense_[l - 1];
    z_[l].resize(count * d.out);
    k.gemm(h_[l - 1].data(), count, d.in, &p64_[d.w_off], &p64_[d.b_off], d.out, z_[l].data());
    silu_inplace(z_[l], h_[l]);
  }
  const Dense& o = dense_.back();
  logits_.resize(count * DN);
  k.gemm(h_[layers - 1].data(), count, o.in, &p64_[o.w_off], &p64_[o.b_off], o.out, logits_.data());

  out_.resize(count * DN);
  const bool precond = arch_.precondition;
  if (!arch_.time_conditioned) {
    std::vector<double> bias(precond ? DN : 0);
    for (std::size_t b = 0; b < count; ++b) {
      if (precond) precondition_bias({states + b * D, static_cast<std::size_t>(D)}, bias);
      for (int d = 0; d < D; ++d) {
        const double* l = &logits_[b * DN + d * N];
        double* s = &out_[b * DN + d * N];
        double m = -INFINITY;
        for (int n = 0; n < N; ++n) {
          s[n] = l[n] + (precond ? bias[d * N + n] : 0.0);
          m = std::max(m, s[n]);
        }
        double tot = 0.0;
        for (int n = 0; n < N; ++n) {
          s[n] = std::exp(s[n] - m);
          tot += s[n];
        }
        for (int n = 0; n < N; ++n) s[n] /= tot;
      }
    }
  } else {
    if (precond) {
      sigma_forward(feats_.data(), count, sz_, sh_, sigma_);
      ratio_.resize(count * DN);
      for (std::size_t b = 0; b < count; ++b)
        precondition_bias({states + b * D, static_cast<std::size_t>(D)}, {&ratio_[b * DN], DN});
    }
    for (std::size_t b = 0; b < count; ++b)
      for (std::size_t i = 0; i < DN; ++i) {
        const double ls = logits_[b * DN + i] + (precond ? sigma_[b] * ratio_[b * DN + i] : 0.0);
        out_[b * DN + i] = std::exp(ls);
      }
  }

  cache_count_ = count;
  cache_states_.assign(states, states + count * D);
  if (times)
    cache_times_.assign(times, times + count);
  else
    cache_times_.clear();
  cache_valid_ = true;
}

bool ScoreModel::cache_matches(const Token* states, const double* times, std::size_t count) const {
  if (!cache_valid_ || dirty_ || count != cache_count_) return false;
  if (std::memcmp(states, cache_states_.data(), count * spec_.sites()) != 0) return false;
  if ((times == nullptr) != cache_times_.empty()) return false;
  return !times || std::memcmp(times, cache_times_.data(), count * sizeof(double)) == 0;
}

void ScoreModel::precondition_bias(std::span<const Token> x, std::span<double> out) const {
  const int D = spec_.sites();
  const int N = spec_.N;
  std::fill(out.begin(), out.begin() + static_cast<std::size_t>(D) * N, 0.0);
  if (!arch_.precondition) return;
  ModelSpec s = spec_;
  s.beta = precond_beta_;
  if (!arch_.time_conditioned) {
    for (int d = 0; d < D; ++d)
      if (x[d] == kMask) lattice::conditional_logits(s, x, d, out.subspan(static_cast<std::size_t>(d) * N, N));
    return;
  }
  // UDNS: log pi(x^{d<-n}) / pi(x) = -beta (H(x^{d<-n}) - H(x)).
  for (int d = 0; d < D; ++d)
    for (int n = 1; n <= N; ++n)
      if (n != x[d]) out[d * N + n - 1] = -s.beta * lattice::delta_energy(s, x, d, static_cast<Token>(n));
}

void ScoreModel::evaluate(const Token* states, const double* times, std::size_t count, double* out) {
  check_query(times);
  sync();
  forward_impl(states, times, count);
  std::memcpy(out, out_.data(), sizeof(double) * out_.size());
}

void ScoreModel::raw_logits(const Token* states, const double* times, std::size_t count, double* out) {
  check_query(times);
  sync();
  forward_impl(states, times, count);
  std::memcpy(out, logits_.data(), sizeof(double) * logits_.size());
}

double ScoreModel::sigma(double t) {
  if (sigma_layers_.empty()) return 0.0;
  sync();
  double f[2];
  time_features(t, f);
  std::vector<std::vector<double>> z, h;
  std::vector<double> s;
  sigma_forward(f, 1, z, h, s);
  return s[0];
}

void ScoreModel::backward(const Token* states, const double* times, std::size_t count, const double* adjoint,
                          GradBuffer& grads) {
  if (grads.size() != params_.size()) throw_config("gradient buffer does not match the parameter count");
  check_query(times);
  sync();
  if (!cache_matches(states, times, count)) forward_impl(states, times, count);

  const auto& k = kernels::active();
  const int D = spec_.sites();
  const int N = spec_.N;
  const std::size_t DN = static_cast<std::size_t>(D) * N;
  const std::size_t layers = arch_.hidden.size();

  // Through the head.
  std::vector<double> dl(count * DN);
  std::vector<double> dsigma;
  if (!arch_.time_conditioned) {
    for (std::size_t r = 0; r < count * D; ++r) {
      const double* s = &out_[r * N];
      const double* a = adjoint + r * N;
      double dot = 0.0;
      for (int n = 0; n < N; ++n) dot += a[n] * s[n];
      for (int n = 0; n < N; ++n) dl[r * N + n] = s[n] * (a[n] - dot);
    }
  } else {
    for (std::size_t i = 0; i < count * DN; ++i) dl[i] = adjoint[i] * out_[i];
    if (arch_.precondition) {
      dsigma.assign(count, 0.0);
      for (std::size_t b = 0; b < count; ++b)
        for (std::size_t i = 0; i < DN; ++i) dsigma[b] += dl[b * DN + i] * ratio_[b * DN + i];
    }
  }

  // Output and hidden layers.
  std::vector<double> dh, dz = std::move(dl);
  for (std::size_t l = layers; l-- > 0;) {
    const Dense& d = dense_[l];  // layer mapping h_[l] to the next activation
    k.ger(h_[l].data(), dz.data(), count, d.in, d.out, &grads[d.w_off], &grads[d.b_off]);
    dh.resize(count * d.in);
    k.gemm(dz.data(), count, d.out, wt_[l].data(), nullptr, d.in, dh.data());
    silu_backward(z_[l], dh.data(), dh.size());
    std::swap(dz, dh);
  }

  // Embedding layer.
  const int H0 = arch_.hidden[0];
  for (std::size_t b = 0; b < count; ++b) {
    const double* g = &dz[b * H0];
    const Token* x = states + b * D;
    for (int d = 0; d < D; ++d)
      k.axpy(H0, 1.0, g, &grads[embed_off_ + static_cast<std::size_t>(d * (N + 1) + x[d]) * H0]);
    if (times) {
      k.axpy(H0, feats_[2 * b], g, &grads[embed_time_off_]);
      k.axpy(H0, feats_[2 * b + 1], g, &grads[embed_time_off_ + H0]);
    }
    k.axpy(H0, 1.0, g, &grads[b0_off_]);
  }

  // Sigma network.
  if (!dsigma.empty()) {
    std::vector<double> g = std::move(dsigma);
    for (std::size_t l = sigma_layers_.size(); l-- > 0;) {
      const Dense& d = sigma_layers_[l];
      const double* input = l == 0 ? feats_.data() : sh_[l - 1].data();
      k.ger(input, g.data(), count, d.in, d.out, &grads[d.w_off], &grads[d.b_off]);
      if (l == 0) break;
      std::vector<double> gin(count * d.in);
      k.gemm(g.data(), count, d.out, sigma_wt_[l].data(), nullptr, d.in, gin.data());
      silu_backward(sz_[l - 1], gin.data(), gin.size());
      g = std::move(gin);
    }
  }
}

}  // namespace mdns
