#include "iaeilm/backbone.hpp"

#include <cmath>

namespace iaeilm::backbone {

std::string_view to_string(Injector i) {
  switch (i) {
    case Injector::ia_eilm: return "IA_EILM";
    case Injector::eilm_static: return "EILM_STATIC";
    case Injector::ea: return "EA";
    case Injector::film: return "FILM";
    case Injector::none: return "NONE";
  }
  return "?";
}

std::string_view to_string(Placement p) {
  return p == Placement::before_ffn ? "BEFORE_FFN" : "BEFORE_ATTN";
}

Injector parse_injector(std::string_view s) {
  for (auto i : {Injector::ia_eilm, Injector::eilm_static, Injector::ea, Injector::film, Injector::none}) {
    if (s == to_string(i)) return i;
  }
  throw ConfigError("unknown injector '" + std::string(s) +
                    "' (expected IA_EILM, EILM_STATIC, EA, FILM or NONE)");
}

Placement parse_placement(std::string_view s) {
  if (s == "BEFORE_FFN") return Placement::before_ffn;
  if (s == "BEFORE_ATTN") return Placement::before_attn;
  throw ConfigError("unknown placement '" + std::string(s) + "' (expected BEFORE_FFN or BEFORE_ATTN)");
}

void BackboneConfig::validate() const {
  if (num_blocks < 1 || model_width < 1 || heads < 1 || ffn_mult < 1 || melody_width < 1 ||
      latent_dim < 1 || num_styles < 1) {
    throw ConfigError("backbone: all sizes must be positive");
  }
  if (model_width % heads != 0) {
    throw ConfigError("backbone: model_width " + std::to_string(model_width) +
                      " not divisible by heads " + std::to_string(heads));
  }
  if (model_width % 2 != 0) throw ConfigError("backbone: model_width must be even");
}

template <class S>
BackboneWeights<S> BackboneWeights<S>::zeros_like() const {
  BackboneWeights z = *this;
  std::vector<nn::ParamRef<S>> refs;
  z.collect("", refs);
  for (auto& r : refs) r.value->setZero();
  return z;
}

template <class S>
void BackboneWeights<S>::collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out) {
  using nn::ParamGroup;
  const std::string p = prefix.empty() ? "" : prefix + ".";
  in_proj.collect(p + "in_proj", ParamGroup::backbone, out);
  out.push_back({p + "style_table",
                 {static_cast<std::uint32_t>(style_table.rows()),
                  static_cast<std::uint32_t>(style_table.cols())},
                 ParamGroup::backbone,
                 &style_table});
  time_mlp0.collect(p + "time_mlp0", ParamGroup::backbone, out);
  time_mlp1.collect(p + "time_mlp1", ParamGroup::backbone, out);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto& b = blocks[i];
    const std::string bp = p + "blocks." + std::to_string(i) + ".";
    b.ada.collect(bp + "ada", ParamGroup::backbone, out);
    b.qkv.collect(bp + "attn.qkv", ParamGroup::backbone, out);
    b.attn_out.collect(bp + "attn.out", ParamGroup::backbone, out);
    b.ffn_in.collect(bp + "ffn.in", ParamGroup::backbone, out);
    b.ffn_out.collect(bp + "ffn.out", ParamGroup::backbone, out);
    if (b.inject.iacr.from_hidden.weight.size() > 0) {
      b.inject.iacr.from_hidden.collect(bp + "inject.iacr.from_hidden", ParamGroup::injector, out);
      b.inject.iacr.from_melody.collect(bp + "inject.iacr.from_melody", ParamGroup::injector, out);
    }
    if (b.inject.proj.weight.size() > 0) {
      b.inject.proj.collect(bp + "inject.proj", ParamGroup::injector, out);
    }
  }
  final_ada.collect(p + "final_ada", ParamGroup::backbone, out);
  out_proj.collect(p + "out_proj", ParamGroup::backbone, out);
}

template <class S>
BackboneWeights<S> init_backbone(const BackboneConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const Index d = cfg.model_width;
  const Index m = cfg.melody_width;
  BackboneWeights<S> w;
  // Injector weights draw from their own stream so the backbone is identical across injectors.
  std::mt19937_64 inject_rng(rng());
  w.in_proj = nn::linear_xavier<S>(cfg.latent_dim, d, rng);
  w.style_table.resize(cfg.num_styles, d);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (Index i = 0; i < w.style_table.size(); ++i) w.style_table.data()[i] = static_cast<S>(n01(rng));
  w.time_mlp0 = nn::linear_xavier<S>(d, d, rng);
  w.time_mlp1 = nn::linear_xavier<S>(d, d, rng);
  for (int b = 0; b < cfg.num_blocks; ++b) {
    BlockWeights<S> blk;
    blk.ada = nn::linear_zeros<S>(d, 4 * d);
    blk.qkv = nn::linear_xavier<S>(d, 3 * d, rng);
    blk.attn_out = nn::linear_xavier<S>(d, d, rng);
    blk.ffn_in = nn::linear_xavier<S>(d, d * cfg.ffn_mult, rng);
    blk.ffn_out = nn::linear_xavier<S>(d * cfg.ffn_mult, d, rng);
    switch (cfg.injector) {
      case Injector::ia_eilm:
        blk.inject.iacr = cond::IacrWeights<S>::xavier(d, m, inject_rng);
        blk.inject.proj = nn::linear_zeros<S>(m, 2 * d);
        break;
      case Injector::eilm_static:
      case Injector::film:
        blk.inject.proj = nn::linear_zeros<S>(m, 2 * d);
        break;
      case Injector::ea:
        blk.inject.proj = nn::linear_zeros<S>(m, d);
        break;
      case Injector::none:
        break;
    }
    w.blocks.push_back(std::move(blk));
  }
  w.final_ada = nn::linear_zeros<S>(d, 2 * d);
  w.out_proj = nn::linear_zeros<S>(d, cfg.latent_dim);
  return w;
}

template <class S>
Matrix<S> timestep_embedding(double t, int width) {
  const int half = width / 2;
  Matrix<S> e(1, width);
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
    const double arg = 1000.0 * t * freq;
    e(0, k) = static_cast<S>(std::sin(arg));
    e(0, half + k) = static_cast<S>(std::cos(arg));
  }
  return e;
}

template <class S>
Matrix<S> positional_encoding(Index frames, int width) {
  Matrix<S> pe(frames, width);
  for (Index pos = 0; pos < frames; ++pos) {
    for (int c = 0; c < width; c += 2) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(c) / static_cast<double>(width));
      pe(pos, c) = static_cast<S>(std::sin(angle));
      if (c + 1 < width) pe(pos, c + 1) = static_cast<S>(std::cos(angle));
    }
  }
  return pe;
}

template <class S>
Matrix<S> embed_global(const GlobalCond& g, const BackboneConfig& cfg, const BackboneWeights<S>& w,
                       GlobalCache<S>* cache) {
  if (g.style_id < 0 || g.style_id >= cfg.num_styles) {
    throw DomainError("style_id " + std::to_string(g.style_id) + " outside [0, " +
                      std::to_string(cfg.num_styles) + ")");
  }
  if (!(g.t >= 0.0 && g.t <= 1.0)) throw DomainError("timestep " + std::to_string(g.t) + " outside [0, 1]");
  GlobalCache<S> local;
  GlobalCache<S>& c = cache ? *cache : local;
  c.style_id = g.style_id;
  c.emb = timestep_embedding<S>(g.t, cfg.model_width);
  c.emb.row(0) += w.style_table.row(g.style_id);
  c.pre0 = nn::linear(c.emb, w.time_mlp0);
  c.act0 = nn::silu(c.pre0);
  c.e = nn::linear(c.act0, w.time_mlp1);
  c.se = nn::silu(c.e);
  return c.e;
}

namespace {

template <class S>
Matrix<S> ada_modulate(const Matrix<S>& n, const Matrix<S>& mod, Index shift_off, Index scale_off, Index d) {
  Matrix<S> a = n;
  const auto scale = (mod.block(0, scale_off, 1, d).array() + S(1)).eval();
  const auto shift = mod.block(0, shift_off, 1, d).array().eval();
  for (Index t = 0; t < n.rows(); ++t) a.row(t) = (n.row(t).array() * scale + shift).matrix();
  return a;
}

// Returns d(normalized); writes shift/scale gradients into dmod.
template <class S>
Matrix<S> ada_backward(const Matrix<S>& n, const Matrix<S>& mod, const Matrix<S>& da, Index shift_off,
                       Index scale_off, Index d, Matrix<S>& dmod) {
  dmod.block(0, shift_off, 1, d) += da.colwise().sum();
  dmod.block(0, scale_off, 1, d) += (da.array() * n.array()).colwise().sum().matrix();
  const auto scale = (mod.block(0, scale_off, 1, d).array() + S(1)).eval();
  Matrix<S> dn(da.rows(), d);
  for (Index t = 0; t < da.rows(); ++t) dn.row(t) = (da.row(t).array() * scale).matrix();
  return dn;
}

template <class S>
Matrix<S> inject_forward(const Matrix<S>& h, const Matrix<S>& m, Injector kind,
                         const InjectorWeights<S>& w, InjectCache<S>& c) {
  c.h_in = h;
  switch (kind) {
    case Injector::ia_eilm: {
      c.condition = cond::iacr(m, h, w.iacr, &c.iacr).values;
      c.params = cond::modulation_params(c.condition, w.proj);
      return cond::modulate_zero(h, c.params);
    }
    case Injector::eilm_static:
      c.params = cond::static_condition(m, w.proj);
      return cond::modulate_zero(h, c.params);
    case Injector::film:
      c.condition = cond::time_mean(m);
      c.params = cond::modulation_params(c.condition, w.proj);
      return cond::modulate_zero(h, c.params);
    case Injector::ea:
      return h + nn::linear(m, w.proj);
    case Injector::none:
      return h;
  }
  return h;
}

template <class S>
Matrix<S> join_params(const cond::ModulationParams<S>& p) {
  Matrix<S> gb(p.gamma.rows(), p.gamma.cols() * 2);
  gb << p.gamma, p.beta;
  return gb;
}

// Returns dL/dh_in; accumulates dm and injector gradients.
template <class S>
Matrix<S> inject_backward(const Matrix<S>& m, Injector kind, const InjectorWeights<S>& w,
                          const InjectCache<S>& c, const Matrix<S>& dout, InjectorWeights<S>& grad,
                          Matrix<S>& dm) {
  switch (kind) {
    case Injector::ia_eilm: {
      cond::ModulationParams<S> dp;
      Matrix<S> dh = cond::modulate_backward(c.h_in, c.params, dout, true, dp);
      const Matrix<S> dc = nn::linear_backward(c.condition, w.proj, join_params(dp), grad.proj);
      cond::iacr_backward(m, c.h_in, w.iacr, c.iacr, dc, grad.iacr, dm, dh);
      return dh;
    }
    case Injector::eilm_static: {
      cond::ModulationParams<S> dp;
      Matrix<S> dh = cond::modulate_backward(c.h_in, c.params, dout, true, dp);
      dm += nn::linear_backward(m, w.proj, join_params(dp), grad.proj);
      return dh;
    }
    case Injector::film: {
      cond::ModulationParams<S> dp;
      Matrix<S> dh = cond::modulate_backward(c.h_in, c.params, dout, true, dp);
      const Matrix<S> dpooled = nn::linear_backward(c.condition, w.proj, join_params(dp), grad.proj);
      const S inv_t = S(1) / static_cast<S>(m.rows());
      dm.rowwise() += dpooled.row(0) * inv_t;
      return dh;
    }
    case Injector::ea:
      dm += nn::linear_backward(m, w.proj, dout, grad.proj);
      return dout;
    case Injector::none:
      return dout;
  }
  return dout;
}

}  // namespace

template <class S>
Matrix<S> forward(const Matrix<S>& x_t, const GlobalCond& g, const Matrix<S>& m,
                  const BackboneConfig& cfg, const BackboneWeights<S>& w, ForwardCache<S>* cache,
                  bool use_melody) {
  const Index frames = x_t.rows();
  const Index d = cfg.model_width;
  expect_shape(x_t, -1, cfg.latent_dim, "backbone forward: x_t");
  if (static_cast<int>(w.blocks.size()) != cfg.num_blocks) {
    throw ConfigError("backbone forward: weights have " + std::to_string(w.blocks.size()) +
                      " blocks, config expects " + std::to_string(cfg.num_blocks));
  }
  const bool melody_on = use_melody && cfg.injector != Injector::none;
  if (melody_on) expect_shape(m, frames, cfg.melody_width, "backbone forward: melody feature");

  ForwardCache<S> local;
  ForwardCache<S>& c = cache ? *cache : local;
  c.use_melody = melody_on;
  c.x = x_t;
  if (melody_on) c.melody = m;
  embed_global(g, cfg, w, &c.global);

  Matrix<S> h = nn::linear(x_t, w.in_proj);
  if (cfg.positional) h += positional_encoding<S>(frames, cfg.model_width);

  const Index heads = cfg.heads;
  const Index dh = d / heads;
  const S attn_scale = S(1) / std::sqrt(static_cast<S>(dh));

  c.blocks.resize(w.blocks.size());
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    const auto& bw = w.blocks[b];
    auto& bc = c.blocks[b];
    bc.mod = nn::linear(c.global.se, bw.ada);

    if (melody_on && cfg.placement == Placement::before_attn) {
      h = inject_forward(h, m, cfg.injector, bw.inject, bc.inject);
    }

    bc.attn_in = ada_modulate(nn::layer_norm(h, bc.ln_attn), bc.mod, 0, d, d);
    bc.qkv = nn::linear(bc.attn_in, bw.qkv);
    bc.attn_concat.resize(frames, d);
    bc.probs.resize(static_cast<std::size_t>(heads));
    for (Index hd = 0; hd < heads; ++hd) {
      const auto q = bc.qkv.middleCols(hd * dh, dh);
      const auto k = bc.qkv.middleCols(d + hd * dh, dh);
      const auto v = bc.qkv.middleCols(2 * d + hd * dh, dh);
      Matrix<S>& p = bc.probs[static_cast<std::size_t>(hd)];
      p.resize(frames, frames);
      p.noalias() = q * k.transpose();
      p *= attn_scale;
      nn::softmax_rows(p);
      bc.attn_concat.middleCols(hd * dh, dh).noalias() = p * v;
    }
    h += nn::linear(bc.attn_concat, bw.attn_out);

    if (melody_on && cfg.placement == Placement::before_ffn) {
      h = inject_forward(h, m, cfg.injector, bw.inject, bc.inject);
    }

    bc.ffn_in = ada_modulate(nn::layer_norm(h, bc.ln_ffn), bc.mod, 2 * d, 3 * d, d);
    bc.ffn_pre = nn::linear(bc.ffn_in, bw.ffn_in);
    bc.ffn_act = nn::gelu(bc.ffn_pre);
    h += nn::linear(bc.ffn_act, bw.ffn_out);
  }

  c.final_mod = nn::linear(c.global.se, w.final_ada);
  c.final_in = ada_modulate(nn::layer_norm(h, c.ln_final), c.final_mod, 0, d, d);
  return nn::linear(c.final_in, w.out_proj);
}

template <class S>
Matrix<S> backward(const ForwardCache<S>& c, const BackboneConfig& cfg, const BackboneWeights<S>& w,
                   const Matrix<S>& d_out, BackboneWeights<S>& grad) {
  const Index frames = c.x.rows();
  const Index d = cfg.model_width;
  const Index heads = cfg.heads;
  const Index dh = d / heads;
  const S attn_scale = S(1) / std::sqrt(static_cast<S>(dh));

  Matrix<S> dm = Matrix<S>::Zero(frames, cfg.melody_width);
  Matrix<S> dse = Matrix<S>::Zero(1, d);

  // Output head.
  Matrix<S> d_final_in = nn::linear_backward(c.final_in, w.out_proj, d_out, grad.out_proj);
  Matrix<S> d_final_mod = Matrix<S>::Zero(1, 2 * d);
  Matrix<S> dn = ada_backward(c.ln_final.normalized, c.final_mod, d_final_in, 0, d, d, d_final_mod);
  Matrix<S> dh_res = nn::layer_norm_backward(c.ln_final, dn);
  dse += nn::linear_backward(c.global.se, w.final_ada, d_final_mod, grad.final_ada);

  for (std::size_t b = w.blocks.size(); b-- > 0;) {
    const auto& bw = w.blocks[b];
    auto& bg = grad.blocks[b];
    const auto& bc = c.blocks[b];
    Matrix<S> dmod = Matrix<S>::Zero(1, 4 * d);

    // FFN residual.
    {
      const Matrix<S> d_act = nn::linear_backward(bc.ffn_act, bw.ffn_out, dh_res, bg.ffn_out);
      const Matrix<S> d_pre = nn::gelu_backward(bc.ffn_pre, d_act);
      const Matrix<S> d_in = nn::linear_backward(bc.ffn_in, bw.ffn_in, d_pre, bg.ffn_in);
      const Matrix<S> d_norm = ada_backward(bc.ln_ffn.normalized, bc.mod, d_in, 2 * d, 3 * d, d, dmod);
      dh_res += nn::layer_norm_backward(bc.ln_ffn, d_norm);
    }

    if (c.use_melody && cfg.placement == Placement::before_ffn) {
      dh_res = inject_backward(c.melody, cfg.injector, bw.inject, bc.inject, dh_res, bg.inject, dm);
    }

    // Attention residual.
    {
      const Matrix<S> d_concat = nn::linear_backward(bc.attn_concat, bw.attn_out, dh_res, bg.attn_out);
      Matrix<S> d_qkv(frames, 3 * d);
      Matrix<S> d_scores(frames, frames);
      for (Index hd = 0; hd < heads; ++hd) {
        const auto q = bc.qkv.middleCols(hd * dh, dh);
        const auto k = bc.qkv.middleCols(d + hd * dh, dh);
        const auto v = bc.qkv.middleCols(2 * d + hd * dh, dh);
        const Matrix<S>& p = bc.probs[static_cast<std::size_t>(hd)];
        const auto d_o = d_concat.middleCols(hd * dh, dh);
        d_qkv.middleCols(2 * d + hd * dh, dh).noalias() = p.transpose() * d_o;
        d_scores.noalias() = d_o * v.transpose();
        for (Index r = 0; r < frames; ++r) {
          const S dotp = (d_scores.row(r).array() * p.row(r).array()).sum();
          d_scores.row(r) = (p.row(r).array() * (d_scores.row(r).array() - dotp)).matrix();
        }
        d_scores *= attn_scale;
        d_qkv.middleCols(hd * dh, dh).noalias() = d_scores * k;
        d_qkv.middleCols(d + hd * dh, dh).noalias() = d_scores.transpose() * q;
      }
      const Matrix<S> d_in = nn::linear_backward(bc.attn_in, bw.qkv, d_qkv, bg.qkv);
      const Matrix<S> d_norm = ada_backward(bc.ln_attn.normalized, bc.mod, d_in, 0, d, d, dmod);
      dh_res += nn::layer_norm_backward(bc.ln_attn, d_norm);
    }

    if (c.use_melody && cfg.placement == Placement::before_attn) {
      dh_res = inject_backward(c.melody, cfg.injector, bw.inject, bc.inject, dh_res, bg.inject, dm);
    }

    dse += nn::linear_backward(c.global.se, bw.ada, dmod, bg.ada);
  }

  // Input projection (positional encoding is constant).
  nn::linear_backward_params(c.x, dh_res, grad.in_proj);

  // Global embedding.
  const Matrix<S> de = nn::silu_backward(c.global.e, dse);
  const Matrix<S> d_act0 = nn::linear_backward(c.global.act0, w.time_mlp1, de, grad.time_mlp1);
  const Matrix<S> d_pre0 = nn::silu_backward(c.global.pre0, d_act0);
  const Matrix<S> d_emb = nn::linear_backward(c.global.emb, w.time_mlp0, d_pre0, grad.time_mlp0);
  grad.style_table.row(c.global.style_id) += d_emb.row(0);

  return dm;
}

#define IAEILM_INSTANTIATE(S)                                                                      \
  template struct BackboneWeights<S>;                                                              \
  template BackboneWeights<S> init_backbone<S>(const BackboneConfig&, std::mt19937_64&);           \
  template Matrix<S> timestep_embedding<S>(double, int);                                           \
  template Matrix<S> positional_encoding<S>(Index, int);                                           \
  template Matrix<S> embed_global<S>(const GlobalCond&, const BackboneConfig&,                     \
                                     const BackboneWeights<S>&, GlobalCache<S>*);                  \
  template Matrix<S> forward<S>(const Matrix<S>&, const GlobalCond&, const Matrix<S>&,             \
                                const BackboneConfig&, const BackboneWeights<S>&, ForwardCache<S>*, \
                                bool);                                                             \
  template Matrix<S> backward<S>(const ForwardCache<S>&, const BackboneConfig&,                    \
                                 const BackboneWeights<S>&, const Matrix<S>&, BackboneWeights<S>&);

IAEILM_INSTANTIATE(float)
IAEILM_INSTANTIATE(double)
#undef IAEILM_INSTANTIATE

}  // namespace iaeilm::backbone
