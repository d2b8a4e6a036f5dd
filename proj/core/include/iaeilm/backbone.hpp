#pragma once

// Small pre-norm transformer denoiser with per-block melody injection.
//
// Block layout (per block i):
//   [inject]  if placement == before_attn
//   h += Attn(LN(h) * (1 + scale_a) + shift_a)
//   [inject]  if placement == before_ffn
//   h += FFN(LN(h) * (1 + scale_f) + shift_f)
//
// (shift, scale) pairs come from the global embedding of (timestep, style).

#include "iaeilm/common.hpp"
#include "iaeilm/conditioning.hpp"
#include "iaeilm/melody.hpp"
#include "iaeilm/nn.hpp"

#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace iaeilm::backbone {

enum class Injector { ia_eilm, eilm_static, ea, film, none };
enum class Placement { before_ffn, before_attn };

std::string_view to_string(Injector i);
std::string_view to_string(Placement p);
Injector parse_injector(std::string_view s);
Placement parse_placement(std::string_view s);

struct BackboneConfig {
  int num_blocks = 4;
  int model_width = 128;
  int heads = 4;
  int ffn_mult = 4;
  Injector injector = Injector::ia_eilm;
  Placement placement = Placement::before_ffn;
  int melody_width = 64;
  int latent_dim = 112;
  int num_styles = 4;
  bool positional = true;
  melody::EncoderConfig encoder;

  /// Throws ConfigError on non-positive sizes or width not divisible by heads.
  void validate() const;
};

struct GlobalCond {
  double t = 0.0;
  int style_id = 0;
};

template <class S>
struct InjectorWeights {
  cond::IacrWeights<S> iacr;       // used by ia_eilm only
  cond::ProjectorWeights<S> proj;  // M -> 2D (modulation) or M -> D (addition)
};

template <class S>
struct BlockWeights {
  nn::Linear<S> ada;  // D -> 4D: shift_a, scale_a, shift_f, scale_f
  nn::Linear<S> qkv;
  nn::Linear<S> attn_out;
  nn::Linear<S> ffn_in;
  nn::Linear<S> ffn_out;
  InjectorWeights<S> inject;
};

template <class S>
struct BackboneWeights {
  nn::Linear<S> in_proj;
  Matrix<S> style_table;  // num_styles x D
  nn::Linear<S> time_mlp0;
  nn::Linear<S> time_mlp1;
  std::vector<BlockWeights<S>> blocks;
  nn::Linear<S> final_ada;  // D -> 2D: shift, scale
  nn::Linear<S> out_proj;

  BackboneWeights zeros_like() const;
  void collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out);
};

/// Random backbone, zero-initialized modulation/injection projectors and output layer.
template <class S>
BackboneWeights<S> init_backbone(const BackboneConfig& cfg, std::mt19937_64& rng);

/// [sin(1000 t w_k) | cos(1000 t w_k)], w_k = 10000^(-k / (width/2)).
template <class S>
Matrix<S> timestep_embedding(double t, int width);

/// Standard additive sinusoidal positions: even columns sin, odd columns cos.
template <class S>
Matrix<S> positional_encoding(Index frames, int width);

template <class S>
struct GlobalCache {
  Matrix<S> emb;
  Matrix<S> pre0;
  Matrix<S> act0;
  Matrix<S> e;
  Matrix<S> se;
  int style_id = 0;
};

/// Timestep sinusoid + style embedding through a two-layer SiLU network. Returns (1 x D).
template <class S>
Matrix<S> embed_global(const GlobalCond& g, const BackboneConfig& cfg, const BackboneWeights<S>& w,
                       GlobalCache<S>* cache = nullptr);

template <class S>
struct InjectCache {
  Matrix<S> h_in;
  cond::IacrCache<S> iacr;
  Matrix<S> condition;  // refined condition, melody, or pooled melody
  cond::ModulationParams<S> params;
};

template <class S>
struct BlockCache {
  Matrix<S> mod;  // 1 x 4D
  InjectCache<S> inject;
  nn::LayerNormCache<S> ln_attn;
  Matrix<S> attn_in;
  Matrix<S> qkv;
  std::vector<Matrix<S>> probs;
  Matrix<S> attn_concat;
  nn::LayerNormCache<S> ln_ffn;
  Matrix<S> ffn_in;
  Matrix<S> ffn_pre;
  Matrix<S> ffn_act;
};

template <class S>
struct ForwardCache {
  GlobalCache<S> global;
  Matrix<S> x;
  Matrix<S> melody;
  bool use_melody = false;
  std::vector<BlockCache<S>> blocks;
  nn::LayerNormCache<S> ln_final;
  Matrix<S> final_mod;
  Matrix<S> final_in;
};

/// Predicts the path velocity for x_t (T x latent_dim). `m` is the (T x M) melody
/// feature; it is ignored when the injector is `none` or `use_melody` is false.
template <class S>
Matrix<S> forward(const Matrix<S>& x_t, const GlobalCond& g, const Matrix<S>& m,
                  const BackboneConfig& cfg, const BackboneWeights<S>& w,
                  ForwardCache<S>* cache = nullptr, bool use_melody = true);

/// Accumulates weight gradients into `grad` and returns dL/dm (zero when the melody was unused).
template <class S>
Matrix<S> backward(const ForwardCache<S>& cache, const BackboneConfig& cfg,
                   const BackboneWeights<S>& w, const Matrix<S>& d_out, BackboneWeights<S>& grad);

}  // namespace iaeilm::backbone
