#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mdns/lattice.hpp"

namespace mdns {

/// Anything that maps a batch of (state, t) queries to D x N score matrices.
///
/// `states` holds `count` sequences of length D back to back; `times` holds
/// one time per query, or is null for time-free scores. `out` receives
/// count x D x N values.
class ScoreFunction {
 public:
  virtual ~ScoreFunction() = default;
  virtual int sites() const = 0;
  virtual int vocab() const = 0;
  virtual bool time_conditioned() const { return false; }
  virtual void evaluate(const Token* states, const double* times, std::size_t count, double* out) = 0;
};

struct ScoreArch {
  std::vector<int> hidden{128, 128};
  /// Time-conditioned models are UDNS scores: t enters as (sin pi t, cos pi t)
  /// and the head is s = exp(logits) (positive rate ratios). Otherwise the
  /// head is a row softmax over the N tokens.
  bool time_conditioned = false;
  /// Adds the closed-form Ising single-site logits before the head.
  bool precondition = false;

  friend bool operator==(const ScoreArch&, const ScoreArch&) = default;
};

void to_json(nlohmann::json& j, const ScoreArch& arch);
void from_json(const nlohmann::json& j, ScoreArch& arch);

struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Gradient accumulator, one double per parameter in flat order.
using GradBuffer = std::vector<double>;

/// MLP score model.
///
/// Layout: the input one-hot over N + 1 tokens per site feeds a first dense
/// layer stored as an embedding table (D (N+1) x H1); hidden layers use SiLU;
/// the final layer maps to D N logits and starts at zero, so a fresh model is
/// exactly uniform (masked head) or exactly 1 (UDNS head). Weights are stored
/// in-by-out so a row of activations times the matrix is a contiguous gemm.
///
/// With preconditioning on a time-conditioned model a scalar network
/// sigma(t) (three SiLU layers of width 32) scales the Ising log-ratio
/// -beta (H(x^{d<-n}) - H(x)) before it is added to the logits.
///
/// Parameters are float32; all arithmetic runs in double on a cached copy.
class ScoreModel final : public ScoreFunction {
 public:
  ScoreModel(const ModelSpec& spec, const ScoreArch& arch, std::uint64_t seed);

  int sites() const override { return spec_.sites(); }
  int vocab() const override { return spec_.N; }
  bool time_conditioned() const override { return arch_.time_conditioned; }

  const ModelSpec& spec() const { return spec_; }
  const ScoreArch& arch() const { return arch_; }
  /// Inverse temperature used by the preconditioning term (warm-up swaps it).
  void set_precondition_beta(double beta);
  double precondition_beta() const { return precond_beta_; }

  const std::vector<ParamTensor>& tensors() const { return tensors_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<const float> params() const { return params_; }
  /// Any write through the returned span invalidates the cached double copy.
  std::span<float> mutable_params();
  GradBuffer make_grads() const { return GradBuffer(params_.size(), 0.0); }

  void evaluate(const Token* states, const double* times, std::size_t count, double* out) override;

  /// grads += d(sum_{b,d,n} adjoint[b,d,n] s[b,d,n]) / d(theta). Reuses the
  /// activations of the previous evaluate when it saw the same queries.
  void backward(const Token* states, const double* times, std::size_t count, const double* adjoint,
                GradBuffer& grads);

  /// Raw network output before preconditioning and the head (count x D x N).
  void raw_logits(const Token* states, const double* times, std::size_t count, double* out);

  /// Additive preconditioning term for one query (D x N), zero when disabled.
  void precondition_bias(std::span<const Token> x, std::span<double> out) const;
  /// sigma(t) of the preconditioning network (0 when absent).
  double sigma(double t);

 private:
  struct Dense {
    int in = 0;
    int out = 0;
    std::size_t w_off = 0;
    std::size_t b_off = 0;
  };

  void build_layout();
  void sync();
  void check_query(const double* times) const;
  void forward_impl(const Token* states, const double* times, std::size_t count);
  void sigma_forward(const double* feats, std::size_t count, std::vector<std::vector<double>>& z,
                     std::vector<std::vector<double>>& h, std::vector<double>& sigma) const;
  bool cache_matches(const Token* states, const double* times, std::size_t count) const;

  ModelSpec spec_;
  ScoreArch arch_;
  double precond_beta_;
  std::vector<ParamTensor> tensors_;
  std::vector<float> params_;

  // Offsets into the flat parameter vector.
  std::size_t embed_off_ = 0, embed_time_off_ = 0, b0_off_ = 0;
  std::vector<Dense> dense_;  // hidden-to-hidden layers then the output layer
  std::vector<Dense> sigma_layers_;  // features -> 32 -> 32 -> 32 -> 1

  // Double copies: w in-by-out, wt out-by-in.
  bool dirty_ = true;
  std::vector<double> p64_;
  std::vector<std::vector<double>> wt_;
  std::vector<std::vector<double>> sigma_wt_;

  // Activation cache of the most recent forward.
  std::size_t cache_count_ = 0;
  bool cache_valid_ = false;
  std::vector<Token> cache_states_;
  std::vector<double> cache_times_;
  std::vector<std::vector<double>> z_, h_;  // per hidden layer, count x H
  std::vector<double> feats_, logits_, out_, ratio_;
  std::vector<std::vector<double>> sz_, sh_;  // sigma net activations
  std::vector<double> sigma_;
};

}  // namespace mdns
