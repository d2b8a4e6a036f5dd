#include "iaeilm/denoiser.hpp"

#include "json_io.hpp"

#include <map>

namespace iaeilm {

template <class S>
Denoiser<S> Denoiser<S>::init(const backbone::BackboneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Denoiser d;
  d.cfg = cfg;
  std::mt19937_64 rng(derive_seed(seed, 0x6e6574));
  d.net = backbone::init_backbone<S>(cfg, rng);
  if (cfg.injector != backbone::Injector::none) {
    std::mt19937_64 erng(derive_seed(seed, 0x656e63));
    d.encoder = melody::init_encoder<S>(cfg.encoder, cfg.melody_width, erng);
  }
  return d;
}

template <class S>
Denoiser<S> Denoiser<S>::zeros_like() const {
  Denoiser z;
  z.cfg = cfg;
  z.encoder = encoder.zeros_like();
  z.net = net.zeros_like();
  return z;
}

template <class S>
std::vector<nn::ParamRef<S>> Denoiser<S>::parameters() {
  std::vector<nn::ParamRef<S>> out;
  encoder.collect("melody_encoder", out);
  net.collect("", out);
  return out;
}

template <class S>
std::vector<nn::ParamRef<S>> Denoiser<S>::parameters() const {
  return const_cast<Denoiser*>(this)->parameters();
}

template <class S>
std::size_t Denoiser<S>::parameter_count(std::optional<nn::ParamGroup> group) const {
  std::size_t n = 0;
  for (const auto& p : parameters()) {
    if (!group || p.group == *group) n += static_cast<std::size_t>(p.value->size());
  }
  return n;
}

template <class S>
Matrix<S> Denoiser<S>::melody_feature(const melody::PitchFeature& feat, Index frames,
                                      DenoiserCache<S>* cache) const {
  if (cfg.injector == backbone::Injector::none) return Matrix<S>();
  if (cache) cache->source_frames = feat.size();
  const Matrix<S> m0 = melody::melody_encode(feat, encoder, cache ? &cache->encoder : nullptr);
  return melody::interpolate(m0, frames);
}

template <class S>
Matrix<S> Denoiser<S>::velocity(const Matrix<S>& x_t, double t, int style_id, const Matrix<S>& m,
                                bool use_melody) const {
  return backbone::forward(x_t, backbone::GlobalCond{t, style_id}, m, cfg, net,
                           static_cast<backbone::ForwardCache<S>*>(nullptr), use_melody);
}

template <class S>
double Denoiser<S>::loss_and_grad(const flow::FlowState<S>& state, int style_id,
                                  const melody::PitchFeature& feat, bool use_melody, Denoiser& grad) const {
  DenoiserCache<S> cache;
  const bool melody_on = use_melody && cfg.injector != backbone::Injector::none;
  const Matrix<S> m = melody_on ? melody_feature(feat, state.x0.rows(), &cache) : Matrix<S>();
  const Matrix<S> x_t = flow::forward_process(state);
  const Matrix<S> pred = backbone::forward(x_t, backbone::GlobalCond{state.t, style_id}, m, cfg, net,
                                           &cache.net, melody_on);
  Matrix<S> d_pred;
  const double l = flow::fm_loss(pred, state, &d_pred);
  const Matrix<S> dm = backbone::backward(cache.net, cfg, net, d_pred, grad.net);
  if (melody_on) {
    melody::melody_encode_backward(cache.encoder, encoder, melody::interpolate_backward(dm, cache.source_frames),
                                   grad.encoder);
  }
  return l;
}

template <class S>
double Denoiser<S>::loss(const flow::FlowState<S>& state, int style_id, const melody::PitchFeature& feat,
                         bool use_melody) const {
  const bool melody_on = use_melody && cfg.injector != backbone::Injector::none;
  const Matrix<S> m = melody_on ? melody_feature(feat, state.x0.rows()) : Matrix<S>();
  const Matrix<S> pred = velocity(flow::forward_process(state), state.t, style_id, m, melody_on);
  return flow::fm_loss(pred, state);
}

template <class S>
std::vector<ckpt::NamedTensor> Denoiser<S>::to_tensors() const {
  std::vector<ckpt::NamedTensor> out;
  for (const auto& p : parameters()) {
    ckpt::NamedTensor t{p.name, p.dims, {}};
    t.data.resize(static_cast<std::size_t>(p.value->size()));
    for (Index i = 0; i < p.value->size(); ++i) t.data[static_cast<std::size_t>(i)] = static_cast<float>(p.value->data()[i]);
    out.push_back(std::move(t));
  }
  return out;
}

template <class S>
void Denoiser<S>::from_tensors(const std::vector<ckpt::NamedTensor>& tensors) {
  std::map<std::string, const ckpt::NamedTensor*> by_name;
  for (const auto& t : tensors) {
    if (!by_name.emplace(t.name, &t).second) throw IoError("checkpoint: duplicate tensor " + t.name);
  }
  auto params = parameters();
  if (params.size() != tensors.size()) {
    throw IoError("checkpoint: holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                  std::to_string(params.size()));
  }
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw IoError("checkpoint: missing tensor " + p.name);
    if (it->second->dims != p.dims) throw IoError("checkpoint: shape mismatch for " + p.name);
    for (Index i = 0; i < p.value->size(); ++i) p.value->data()[i] = static_cast<S>(it->second->data[static_cast<std::size_t>(i)]);
  }
}

template <class S>
std::vector<S> flatten(const Denoiser<S>& d, std::optional<nn::ParamGroup> group) {
  std::vector<S> out;
  for (const auto& p : d.parameters()) {
    if (group && p.group != *group) continue;
    out.insert(out.end(), p.value->data(), p.value->data() + p.value->size());
  }
  return out;
}

template struct Denoiser<float>;
template struct Denoiser<double>;
template std::vector<float> flatten(const Denoiser<float>&, std::optional<nn::ParamGroup>);
template std::vector<double> flatten(const Denoiser<double>&, std::optional<nn::ParamGroup>);

namespace {

std::filesystem::path sidecar(const std::filesystem::path& p) { return p.string() + ".json"; }

}  // namespace

void save_model(const std::filesystem::path& path, const ModelFile& mf) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  ckpt::save(path, mf.model.to_tensors());
  nlohmann::json meta = {{"config", detail::to_json_value(mf.config)},
                         {"config_hash", config_hash(mf.config)},
                         {"dataset_hash", mf.dataset_hash},
                         {"step", mf.step}};
  detail::write_text(sidecar(path), meta.dump(2) + "\n");
}

ModelFile load_model(const std::filesystem::path& path) {
  ModelFile mf;
  const auto meta = detail::parse_json(detail::read_text(sidecar(path)));
  try {
    mf.config = default_train_config();
    detail::from_json_value(meta.at("config"), mf.config);
    mf.dataset_hash = meta.at("dataset_hash").get<std::string>();
    mf.step = meta.at("step").get<int>();
    if (meta.at("config_hash").get<std::string>() != config_hash(mf.config)) {
      throw IoError(sidecar(path).string() + ": config hash does not match the stored config");
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(sidecar(path).string() + ": " + e.what());
  }
  mf.model = Denoiser<float>::init(mf.config.backbone, 0);
  try {
    mf.model.from_tensors(ckpt::load(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return mf;
}

}  // namespace iaeilm
