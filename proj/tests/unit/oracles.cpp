#include "oracles.hpp"

#include <cmath>

namespace oracle {

using iaeilm::Index;
using iaeilm::Matrix;

Grid to_grid(const Matrix<double>& m) {
  Grid g(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) g[r][c] = m(r, c);
  return g;
}

Matrix<double> from_grid(const Grid& g) {
  Matrix<double> m(static_cast<Index>(g.size()), g.empty() ? 0 : static_cast<Index>(g[0].size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = g[r][c];
  return m;
}

namespace {

std::size_t rows(const Grid& g) { return g.size(); }
std::size_t cols(const Grid& g) { return g.empty() ? 0 : g[0].size(); }

Grid zeros(std::size_t r, std::size_t c) { return Grid(r, std::vector<double>(c, 0.0)); }

Grid map_each(const Grid& x, double (*f)(double)) {
  Grid y = x;
  for (auto& row : y)
    for (auto& v : row) v = f(v);
  return y;
}

double gelu_tanh(double v) {
  const double k = std::sqrt(2.0 / 3.14159265358979323846);
  return 0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v)));
}

double silu(double v) { return v / (1.0 + std::exp(-v)); }
double tanh_(double v) { return std::tanh(v); }
double sin_(double v) { return std::sin(v); }

Grid layer_norm(const Grid& x) {
  Grid y = x;
  for (std::size_t t = 0; t < rows(x); ++t) {
    double mean = 0;
    for (double v : x[t]) mean += v;
    mean /= static_cast<double>(cols(x));
    double var = 0;
    for (double v : x[t]) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cols(x));
    for (std::size_t c = 0; c < cols(x); ++c) y[t][c] = (x[t][c] - mean) / std::sqrt(var + 1e-6);
  }
  return y;
}

// y = x * (1 + row[scale_off..]) + row[shift_off..]
Grid shift_scale(const Grid& x, const std::vector<double>& row, std::size_t shift_off, std::size_t scale_off) {
  Grid y = x;
  for (std::size_t t = 0; t < rows(x); ++t)
    for (std::size_t c = 0; c < cols(x); ++c) y[t][c] = x[t][c] * (1.0 + row[scale_off + c]) + row[shift_off + c];
  return y;
}

Grid add(const Grid& a, const Grid& b) {
  Grid y = a;
  for (std::size_t t = 0; t < rows(a); ++t)
    for (std::size_t c = 0; c < cols(a); ++c) y[t][c] += b[t][c];
  return y;
}

Grid inject(const Grid& h, const Grid& m, const iaeilm::backbone::BackboneConfig& cfg,
            const iaeilm::backbone::InjectorWeights<double>& w) {
  using iaeilm::backbone::Injector;
  const std::size_t T = rows(h), D = cols(h);
  auto modulate_zero_rows = [&](const Grid& gb) {
    Grid y = h;
    for (std::size_t t = 0; t < T; ++t) {
      const auto& r = gb[gb.size() == 1 ? 0 : t];
      for (std::size_t c = 0; c < D; ++c) y[t][c] = (r[c] + 1.0) * h[t][c] + r[D + c];
    }
    return y;
  };
  switch (cfg.injector) {
    case Injector::ia_eilm: {
      const Grid a = map_each(affine(h, w.iacr.from_hidden), tanh_);
      const Grid b = map_each(affine(m, w.iacr.from_melody), tanh_);
      Grid c = a;
      for (std::size_t t = 0; t < rows(c); ++t)
        for (std::size_t k = 0; k < cols(c); ++k) c[t][k] = a[t][k] * b[t][k];
      return modulate_zero_rows(affine(c, w.proj));
    }
    case Injector::eilm_static:
      return modulate_zero_rows(affine(m, w.proj));
    case Injector::film: {
      Grid pooled = zeros(1, cols(m));
      for (std::size_t t = 0; t < rows(m); ++t)
        for (std::size_t k = 0; k < cols(m); ++k) pooled[0][k] += m[t][k] / static_cast<double>(rows(m));
      return modulate_zero_rows(affine(pooled, w.proj));
    }
    case Injector::ea:
      return add(h, affine(m, w.proj));
    case Injector::none:
      return h;
  }
  return h;
}

}  // namespace

Grid conv1d(const Grid& x, const iaeilm::melody::ConvLayer<double>& layer) {
  const int k = layer.kernel, in = layer.in_channels, out = layer.out_channels();
  const int T = static_cast<int>(rows(x));
  Grid y = zeros(static_cast<std::size_t>(T), static_cast<std::size_t>(out));
  for (int t = 0; t < T; ++t) {
    for (int o = 0; o < out; ++o) {
      double acc = layer.bias(0, o);
      for (int j = 0; j < k; ++j) {
        const int src = t + j - k / 2;
        if (src < 0 || src >= T) continue;
        for (int i = 0; i < in; ++i) acc += x[src][i] * layer.weight(j * in + i, o);
      }
      y[t][o] = acc;
    }
  }
  return y;
}

Grid melody_encoder(const Grid& features, const iaeilm::melody::EncoderWeights<double>& w) {
  Grid h = features;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    h = conv1d(h, w.layers[l]);
    if (l + 1 < w.layers.size()) h = map_each(h, w.activation == iaeilm::melody::Activation::tanh ? tanh_ : sin_);
  }
  return h;
}

Grid affine(const Grid& x, const iaeilm::nn::Linear<double>& l) {
  Grid y = zeros(rows(x), static_cast<std::size_t>(l.out()));
  for (std::size_t t = 0; t < rows(x); ++t)
    for (Index o = 0; o < l.out(); ++o) {
      double acc = l.bias(0, o);
      for (Index i = 0; i < l.in(); ++i) acc += x[t][static_cast<std::size_t>(i)] * l.weight(i, o);
      y[t][static_cast<std::size_t>(o)] = acc;
    }
  return y;
}

Grid backbone_forward(const Grid& x, double t, int style, const Grid& m, const iaeilm::backbone::BackboneConfig& cfg,
                      const iaeilm::backbone::BackboneWeights<double>& w, bool use_melody) {
  const std::size_t T = rows(x);
  const std::size_t D = static_cast<std::size_t>(cfg.model_width);
  const std::size_t H = static_cast<std::size_t>(cfg.heads);
  const std::size_t dh = D / H;

  // Global embedding.
  Grid emb = zeros(1, D);
  for (std::size_t k = 0; k < D / 2; ++k) {
    const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(D / 2));
    emb[0][k] = std::sin(1000.0 * t * freq) + w.style_table(style, static_cast<Index>(k));
    emb[0][D / 2 + k] = std::cos(1000.0 * t * freq) + w.style_table(style, static_cast<Index>(D / 2 + k));
  }
  const Grid se = map_each(affine(map_each(affine(emb, w.time_mlp0), silu), w.time_mlp1), silu);

  Grid h = affine(x, w.in_proj);
  if (cfg.positional) {
    for (std::size_t p = 0; p < T; ++p)
      for (std::size_t c = 0; c < D; ++c) {
        const std::size_t pair = c - c % 2;
        const double angle = static_cast<double>(p) / std::pow(10000.0, static_cast<double>(pair) / static_cast<double>(D));
        h[p][c] += (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
      }
  }
  const bool melody_on = use_melody && cfg.injector != iaeilm::backbone::Injector::none;

  for (const auto& bw : w.blocks) {
    const std::vector<double> mod = affine(se, bw.ada)[0];
    if (melody_on && cfg.placement == iaeilm::backbone::Placement::before_attn) h = inject(h, m, cfg, bw.inject);

    const Grid a_in = shift_scale(layer_norm(h), mod, 0, D);
    const Grid qkv = affine(a_in, bw.qkv);
    Grid concat = zeros(T, D);
    for (std::size_t hd = 0; hd < H; ++hd) {
      for (std::size_t i = 0; i < T; ++i) {
        std::vector<double> score(T);
        double mx = -1e300;
        for (std::size_t j = 0; j < T; ++j) {
          double s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += qkv[i][hd * dh + c] * qkv[j][D + hd * dh + c];
          score[j] = s / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, score[j]);
        }
        double z = 0;
        for (auto& s : score) {
          s = std::exp(s - mx);
          z += s;
        }
        for (std::size_t c = 0; c < dh; ++c) {
          double acc = 0;
          for (std::size_t j = 0; j < T; ++j) acc += score[j] / z * qkv[j][2 * D + hd * dh + c];
          concat[i][hd * dh + c] = acc;
        }
      }
    }
    h = add(h, affine(concat, bw.attn_out));

    if (melody_on && cfg.placement == iaeilm::backbone::Placement::before_ffn) h = inject(h, m, cfg, bw.inject);

    const Grid f_in = shift_scale(layer_norm(h), mod, 2 * D, 3 * D);
    h = add(h, affine(map_each(affine(f_in, bw.ffn_in), gelu_tanh), bw.ffn_out));
  }
  const std::vector<double> fmod = affine(se, w.final_ada)[0];
  return affine(shift_scale(layer_norm(h), fmod, 0, D), w.out_proj);
}

Accuracy brute_force_metrics(const std::vector<double>& ref_hz, const std::vector<double>& est_hz) {
  int ref_voiced = 0, pitch_ok = 0, chroma_ok = 0, overall_ok = 0;
  for (std::size_t i = 0; i < ref_hz.size(); ++i) {
    const bool rv = ref_hz[i] > 0, ev = est_hz[i] > 0;
    bool within = false, within_chroma = false;
    if (rv && ev) {
      const double c = 1200.0 * std::log(est_hz[i] / ref_hz[i]) / std::log(2.0);
      within = std::fabs(c) <= 50.0;
      // Nearest octave-equivalent distance by search over whole octaves.
      double best = std::fabs(c);
      for (int k = -10; k <= 10; ++k) best = std::min(best, std::fabs(c - 1200.0 * k));
      within_chroma = best <= 50.0;
    }
    if (rv) {
      ++ref_voiced;
      if (within) ++pitch_ok;
      if (within_chroma) ++chroma_ok;
    }
    if ((!rv && !ev) || within) ++overall_ok;
  }
  Accuracy a;
  a.rpa_defined = ref_voiced > 0;
  if (ref_voiced > 0) {
    a.rpa = static_cast<double>(pitch_ok) / ref_voiced;
    a.rca = static_cast<double>(chroma_ok) / ref_voiced;
  }
  a.oa = ref_hz.empty() ? 0.0 : static_cast<double>(overall_ok) / static_cast<double>(ref_hz.size());
  return a;
}

}  // namespace oracle
