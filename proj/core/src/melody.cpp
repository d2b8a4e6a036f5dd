#include "iaeilm/melody.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace iaeilm::melody {

PitchSequence validate_pitch(PitchSequence p, OutOfRangePolicy policy) {
  if (!(p.frame_rate_hz > 0.0)) throw DomainError("pitch sequence: frame rate must be positive");
  for (std::size_t i = 0; i < p.f0_hz.size(); ++i) {
    double& f = p.f0_hz[i];
    if (!std::isfinite(f) || f < 0.0) {
      throw DomainError("pitch sequence: frame " + std::to_string(i) + " has invalid f0 " +
                        std::to_string(f));
    }
    if (f == 0.0) continue;
    if (f < kMinVoicedHz || f > kMaxVoicedHz) {
      if (policy == OutOfRangePolicy::clamp) {
        f = std::clamp(f, kMinVoicedHz, kMaxVoicedHz);
      } else {
        throw DomainError("pitch sequence: frame " + std::to_string(i) + " voiced f0 " +
                          std::to_string(f) + " Hz outside [50, 900] Hz");
      }
    }
  }
  return p;
}

double normalized_log_pitch(double hz) {
  static const double lo = std::log2(kMinVoicedHz);
  static const double span = std::log2(kMaxVoicedHz) - lo;
  return (std::log2(hz) - lo) / span;
}

PitchFeature extract_pitch_features(const PitchSequence& raw, OutOfRangePolicy policy) {
  const PitchSequence p = validate_pitch(raw, policy);
  PitchFeature feat{Matrix<double>::Zero(p.size(), 2)};
  for (Index i = 0; i < p.size(); ++i) {
    if (!p.voiced(i)) continue;
    feat.values(i, 0) = normalized_log_pitch(p.f0_hz[static_cast<std::size_t>(i)]);
    feat.values(i, 1) = 1.0;
  }
  return feat;
}

// Encoder ---------------------------------------------------------------------

namespace {

template <class S>
Matrix<S> im2col(const Matrix<S>& x, int kernel) {
  const Index frames = x.rows();
  const Index ch = x.cols();
  const int pad = kernel / 2;
  Matrix<S> col = Matrix<S>::Zero(frames, kernel * ch);
  for (Index t = 0; t < frames; ++t) {
    for (int j = 0; j < kernel; ++j) {
      const Index src = t + j - pad;
      if (src < 0 || src >= frames) continue;
      col.block(t, j * ch, 1, ch) = x.row(src);
    }
  }
  return col;
}

template <class S>
Matrix<S> col2im(const Matrix<S>& col, int kernel, Index ch) {
  const Index frames = col.rows();
  const int pad = kernel / 2;
  Matrix<S> x = Matrix<S>::Zero(frames, ch);
  for (Index t = 0; t < frames; ++t) {
    for (int j = 0; j < kernel; ++j) {
      const Index src = t + j - pad;
      if (src < 0 || src >= frames) continue;
      x.row(src) += col.block(t, j * ch, 1, ch);
    }
  }
  return x;
}

template <class S>
Matrix<S> activate(const Matrix<S>& x, Activation a) {
  return a == Activation::sine ? Matrix<S>(x.array().sin()) : Matrix<S>(x.array().tanh());
}

template <class S>
Matrix<S> activate_backward(const Matrix<S>& x, const Matrix<S>& dy, Activation a) {
  if (a == Activation::sine) return (dy.array() * x.array().cos()).matrix();
  return (dy.array() * (S(1) - x.array().tanh().square())).matrix();
}

}  // namespace

template <class S>
EncoderWeights<S> EncoderWeights<S>::zeros_like() const {
  EncoderWeights z = *this;
  for (auto& l : z.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return z;
}

template <class S>
void EncoderWeights<S>::collect(const std::string& prefix, std::vector<nn::ParamRef<S>>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string name = prefix + ".conv" + std::to_string(i);
    out.push_back({name + ".weight",
                   {static_cast<std::uint32_t>(l.kernel), static_cast<std::uint32_t>(l.in_channels),
                    static_cast<std::uint32_t>(l.out_channels())},
                   nn::ParamGroup::injector,
                   &l.weight});
    out.push_back({name + ".bias",
                   {static_cast<std::uint32_t>(l.out_channels())},
                   nn::ParamGroup::injector,
                   &l.bias});
  }
}

template <class S>
EncoderWeights<S> init_encoder(const EncoderConfig& cfg, int out_width, std::mt19937_64& rng) {
  if (cfg.kernel < 1 || cfg.kernel % 2 == 0) {
    throw ConfigError("melody encoder: kernel width must be a positive odd number");
  }
  if (out_width < 1) throw ConfigError("melody encoder: output width must be positive");
  std::vector<int> widths{2};
  widths.insert(widths.end(), cfg.hidden_channels.begin(), cfg.hidden_channels.end());
  widths.push_back(out_width);

  EncoderWeights<S> w;
  w.activation = cfg.activation;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const int in = widths[i];
    const int out = widths[i + 1];
    if (in < 1 || out < 1) throw ConfigError("melody encoder: channel counts must be positive");
    const double fan_in = static_cast<double>(in * cfg.kernel);
    double bound = std::sqrt(3.0 / fan_in);
    if (i == 0) bound *= cfg.first_layer_scale;
    std::uniform_real_distribution<double> u(-bound, bound);
    ConvLayer<S> l;
    l.kernel = cfg.kernel;
    l.in_channels = in;
    l.weight.resize(cfg.kernel * in, out);
    for (Index k = 0; k < l.weight.size(); ++k) l.weight.data()[k] = static_cast<S>(u(rng));
    l.bias = Matrix<S>::Zero(1, out);
    if (cfg.activation == Activation::sine && i + 2 < widths.size()) {
      // Spread phases so sine units do not all start odd-symmetric around zero.
      std::uniform_real_distribution<double> phase(-M_PI, M_PI);
      for (Index k = 0; k < l.bias.size(); ++k) l.bias.data()[k] = static_cast<S>(phase(rng));
    }
    w.layers.push_back(std::move(l));
  }
  return w;
}

template <class S>
Matrix<S> melody_encode(const PitchFeature& feat, const EncoderWeights<S>& w,
                        EncoderCache<S>* cache) {
  if (w.layers.empty()) throw ShapeError("melody_encode: encoder has no layers");
  if (feat.values.cols() != w.layers.front().in_channels) {
    throw ShapeError("melody_encode: feature " + shape_str(feat.values) + " has " +
                     std::to_string(feat.values.cols()) + " channels, encoder expects " +
                     std::to_string(w.layers.front().in_channels));
  }
  if (cache) {
    cache->columns.clear();
    cache->pre_activation.clear();
  }
  Matrix<S> x = feat.values.template cast<S>();
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    const auto& l = w.layers[i];
    Matrix<S> col = im2col(x, l.kernel);
    Matrix<S> y(col.rows(), l.out_channels());
    y.noalias() = col * l.weight;
    y.rowwise() += l.bias.row(0);
    if (cache) cache->columns.push_back(std::move(col));
    if (i + 1 < w.layers.size()) {
      x = activate(y, w.activation);
      if (cache) cache->pre_activation.push_back(std::move(y));
    } else {
      x = std::move(y);
    }
  }
  return x;
}

template <class S>
void melody_encode_backward(const EncoderCache<S>& cache, const EncoderWeights<S>& w,
                            const Matrix<S>& d_out, EncoderWeights<S>& grad) {
  Matrix<S> dy = d_out;
  for (std::size_t i = w.layers.size(); i-- > 0;) {
    const auto& l = w.layers[i];
    const Matrix<S>& col = cache.columns[i];
    grad.layers[i].weight.noalias() += col.transpose() * dy;
    grad.layers[i].bias.row(0) += dy.colwise().sum();
    if (i == 0) break;
    Matrix<S> dcol(col.rows(), col.cols());
    dcol.noalias() = dy * l.weight.transpose();
    const Matrix<S> dx = col2im(dcol, l.kernel, l.in_channels);
    dy = activate_backward(cache.pre_activation[i - 1], dx, w.activation);
  }
}

template <class S>
Matrix<S> interpolate(const Matrix<S>& m0, Index frames) {
  const Index src = m0.rows();
  if (src < 1 || frames < 1) throw ShapeError("interpolate: lengths must be >= 1");
  if (frames == src) return m0;
  Matrix<S> out(frames, m0.cols());
  for (Index j = 0; j < frames; ++j) {
    const double pos = frames == 1 ? 0.0
                                   : static_cast<double>(j) * static_cast<double>(src - 1) /
                                         static_cast<double>(frames - 1);
    const Index lo = std::min(static_cast<Index>(std::floor(pos)), src - 1);
    const Index hi = std::min(lo + 1, src - 1);
    const S frac = static_cast<S>(pos - static_cast<double>(lo));
    out.row(j) = (S(1) - frac) * m0.row(lo) + frac * m0.row(hi);
  }
  return out;
}

template <class S>
Matrix<S> interpolate_backward(const Matrix<S>& d_out, Index source_frames) {
  const Index frames = d_out.rows();
  if (source_frames < 1 || frames < 1) throw ShapeError("interpolate: lengths must be >= 1");
  if (frames == source_frames) return d_out;
  Matrix<S> d_src = Matrix<S>::Zero(source_frames, d_out.cols());
  for (Index j = 0; j < frames; ++j) {
    const double pos = frames == 1 ? 0.0
                                   : static_cast<double>(j) * static_cast<double>(source_frames - 1) /
                                         static_cast<double>(frames - 1);
    const Index lo = std::min(static_cast<Index>(std::floor(pos)), source_frames - 1);
    const Index hi = std::min(lo + 1, source_frames - 1);
    const S frac = static_cast<S>(pos - static_cast<double>(lo));
    d_src.row(lo) += (S(1) - frac) * d_out.row(j);
    d_src.row(hi) += frac * d_out.row(j);
  }
  return d_src;
}

// CSV -------------------------------------------------------------------------

void write_pitch_csv(std::ostream& os, const PitchSequence& p) {
  os << "frame,f0_hz\n";
  char buf[64];
  for (std::size_t i = 0; i < p.f0_hz.size(); ++i) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, p.f0_hz[i]);
    os << i << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf)) << '\n';
  }
}

PitchSequence read_pitch_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("pitch CSV: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "frame,f0_hz") throw IoError("pitch CSV: expected header 'frame,f0_hz', got '" + line + "'");
  PitchSequence p;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("pitch CSV: malformed row " + std::to_string(row));
    std::size_t frame = 0;
    double f0 = 0.0;
    const char* b = line.data();
    auto r1 = std::from_chars(b, b + comma, frame);
    auto r2 = std::from_chars(b + comma + 1, b + line.size(), f0);
    if (r1.ec != std::errc{} || r2.ec != std::errc{} || r2.ptr != b + line.size()) {
      throw IoError("pitch CSV: cannot parse row " + std::to_string(row) + ": '" + line + "'");
    }
    if (frame != row) {
      throw IoError("pitch CSV: frame index " + std::to_string(frame) + " out of order at row " +
                    std::to_string(row));
    }
    p.f0_hz.push_back(f0);
    ++row;
  }
  return p;
}

void write_pitch_csv(const std::filesystem::path& path, const PitchSequence& p) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_pitch_csv(os, p);
  if (!os) throw IoError("write failed: " + path.string());
}

PitchSequence read_pitch_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return read_pitch_csv(is);
}

#define IAEILM_INSTANTIATE(S)                                                                     \
  template struct EncoderWeights<S>;                                                              \
  template EncoderWeights<S> init_encoder<S>(const EncoderConfig&, int, std::mt19937_64&);        \
  template Matrix<S> melody_encode<S>(const PitchFeature&, const EncoderWeights<S>&,             \
                                      EncoderCache<S>*);                                          \
  template void melody_encode_backward<S>(const EncoderCache<S>&, const EncoderWeights<S>&,      \
                                          const Matrix<S>&, EncoderWeights<S>&);                  \
  template Matrix<S> interpolate<S>(const Matrix<S>&, Index);                                     \
  template Matrix<S> interpolate_backward<S>(const Matrix<S>&, Index);

IAEILM_INSTANTIATE(float)
IAEILM_INSTANTIATE(double)
#undef IAEILM_INSTANTIATE

}  // namespace iaeilm::melody
