#include "iaeilm/trainer.hpp"

#include "json_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>

namespace iaeilm::train {

double lr_at(const TrainConfig& cfg, int step) {
  if (cfg.warmup_steps <= 0 || step >= cfg.warmup_steps) return cfg.lr;
  return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
}

AdamW::AdamW(const TrainConfig& cfg, std::vector<bool> trainable)
    : beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps),
      weight_decay_(cfg.weight_decay),
      trainable_(std::move(trainable)) {}

void AdamW::step(std::vector<nn::ParamRef<float>>& params, const std::vector<nn::ParamRef<float>>& grads,
                 double lr) {
  if (params.size() != grads.size() || params.size() != trainable_.size()) {
    throw ShapeError("AdamW: parameter, gradient and mask lists differ in length");
  }
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (!trainable_[k]) continue;
      m_[k] = Matrix<float>::Zero(params[k].value->rows(), params[k].value->cols());
      v_[k] = m_[k];
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const auto step_size = static_cast<float>(lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<float>(eps_);
  const auto decay = static_cast<float>(1.0 - lr * weight_decay_);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!trainable_[k]) continue;
    auto& p = *params[k].value;
    const auto& g = *grads[k].value;
    m_[k] = b1 * m_[k] + (1.0f - b1) * g;
    v_[k] = b2 * v_[k] + (1.0f - b2) * g.cwiseAbs2();
    p *= decay;
    p.array() -= step_size * m_[k].array() / ((v_[k].array().sqrt() * inv_sqrt_bc2) + eps);
  }
}

double grad_norm(const std::vector<nn::ParamRef<float>>& grads, const std::vector<bool>& mask) {
  double s = 0.0;
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (mask[k]) s += grads[k].value->template cast<double>().squaredNorm();
  }
  return std::sqrt(s);
}

std::uint64_t batch_seed(const TrainConfig& cfg, int step, int micro) {
  return derive_seed(derive_seed(cfg.seed, 0x626174636800ULL + static_cast<std::uint64_t>(step)),
                     static_cast<std::uint64_t>(micro));
}

std::string checksum(const Denoiser<float>& model, nn::ParamGroup group) {
  const auto flat = flatten(model, group);
  return fnv1a_hex(std::string(reinterpret_cast<const char*>(flat.data()), flat.size() * sizeof(float)));
}

namespace {

struct BatchItem {
  int index = 0;
  double t = 0.0;
  bool drop_melody = false;
  std::uint64_t seed = 0;
};

std::vector<BatchItem> draw_batch(const TrainConfig& cfg, int n_train, int step, int micro) {
  const std::uint64_t base = batch_seed(cfg, step, micro);
  std::vector<BatchItem> items(static_cast<std::size_t>(cfg.batch_size));
  for (int b = 0; b < cfg.batch_size; ++b) {
    auto& it = items[static_cast<std::size_t>(b)];
    it.seed = derive_seed(base, static_cast<std::uint64_t>(b));
    std::mt19937_64 rng(it.seed);
    it.index = std::uniform_int_distribution<int>(0, n_train - 1)(rng);
    it.t = flow::sample_t(rng, cfg.t_min);
    if (cfg.cond_dropout > 0.0) it.drop_melody = std::bernoulli_distribution(cfg.cond_dropout)(rng);
  }
  return items;
}

flow::FlowState<float> item_state(const BatchItem& it, const synth::SynthSample& s) {
  // Noise stream is distinct from the one that picked index / t.
  std::mt19937_64 rng(derive_seed(it.seed, 0x7a));
  return flow::make_state(s.x0, flow::standard_normal<float>(s.x0.rows(), s.x0.cols(), rng), it.t);
}

void set_zero(Denoiser<float>& d) {
  for (auto& p : d.parameters()) p.value->setZero();
}

void add_into(Denoiser<float>& dst, const Denoiser<float>& src) {
  auto a = dst.parameters();
  const auto b = src.parameters();
  for (std::size_t k = 0; k < a.size(); ++k) *a[k].value += *b[k].value;
}

void scale(Denoiser<float>& d, float s) {
  for (auto& p : d.parameters()) *p.value *= s;
}

/// Per-sample losses for one micro-batch; gradients summed into `grad`.
/// Deterministic mode keeps one buffer per sample and reduces them in sample order,
/// so the result does not depend on the thread count.
std::vector<double> accumulate_batch(const Denoiser<float>& model, const std::vector<BatchItem>& items,
                                     const std::vector<synth::SynthSample>& train,
                                     const std::vector<melody::PitchFeature>& feats, bool deterministic,
                                     std::vector<Denoiser<float>>& buffers, Denoiser<float>& grad) {
  const int n = static_cast<int>(items.size());
  const int threads = std::max(1, std::min(worker_threads(), n));
  std::vector<double> losses(items.size());
  auto run_one = [&](int b, Denoiser<float>& into) {
    const auto& it = items[static_cast<std::size_t>(b)];
    const auto& s = train[static_cast<std::size_t>(it.index)];
    losses[static_cast<std::size_t>(b)] = model.loss_and_grad(item_state(it, s), s.style_id,
                                                              feats[static_cast<std::size_t>(it.index)],
                                                              !it.drop_melody, into);
  };
  const int nbuf = deterministic ? n : threads;
  while (static_cast<int>(buffers.size()) < nbuf) buffers.push_back(model.zeros_like());
  for (int k = 0; k < nbuf; ++k) set_zero(buffers[static_cast<std::size_t>(k)]);
  if (deterministic) {
    parallel_for(n, threads, [&](int b) { run_one(b, buffers[static_cast<std::size_t>(b)]); });
  } else {
    parallel_for(threads, threads, [&](int j) {
      for (int b = j * n / threads; b < (j + 1) * n / threads; ++b) run_one(b, buffers[static_cast<std::size_t>(j)]);
    });
  }
  for (int k = 0; k < nbuf; ++k) add_into(grad, buffers[static_cast<std::size_t>(k)]);
  return losses;
}

void dump_nan(const std::filesystem::path& out_dir, int step, int micro, const TrainConfig& cfg,
              const std::vector<BatchItem>& items, const std::vector<double>& losses, double gnorm) {
  if (out_dir.empty()) return;
  nlohmann::json j;
  j["step"] = step + 1;
  j["micro_batch"] = micro;
  j["batch_seed"] = batch_seed(cfg, step, micro);
  j["grad_norm"] = std::isfinite(gnorm) ? nlohmann::json(gnorm) : nlohmann::json(std::to_string(gnorm));
  for (std::size_t b = 0; b < items.size(); ++b) {
    const double l = b < losses.size() ? losses[b] : std::nan("");
    j["samples"].push_back({{"sample_seed", items[b].seed},
                            {"train_index", items[b].index},
                            {"t", items[b].t},
                            {"drop_melody", items[b].drop_melody},
                            {"loss", std::isfinite(l) ? nlohmann::json(l) : nlohmann::json(std::to_string(l))}});
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  detail::write_text(out_dir / "nan_dump.json", j.dump(2) + "\n");
}

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, int step) {
  char name[32];
  std::snprintf(name, sizeof name, "step_%06d.ckpt", step);
  return out_dir / "checkpoints" / name;
}

void prune_checkpoints(const std::filesystem::path& out_dir, int keep) {
  const auto dir = out_dir / "checkpoints";
  std::vector<std::filesystem::path> ckpts;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".ckpt") ckpts.push_back(e.path());
  }
  std::sort(ckpts.begin(), ckpts.end());
  for (std::size_t i = 0; i + static_cast<std::size_t>(keep) < ckpts.size(); ++i) {
    std::filesystem::remove(ckpts[i]);
    std::filesystem::remove(ckpts[i].string() + ".json");
  }
}

}  // namespace

void write_loss_csv(const std::filesystem::path& path, const std::vector<StepRecord>& history) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "step,loss,grad_norm,lr\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", r.step, r.loss, r.grad_norm, r.lr);
    os << buf;
  }
  if (!os) throw IoError("write failed: " + path.string());
}

double initial_batch_loss(const TrainConfig& cfg, const data::Dataset& ds, const Denoiser<float>& model) {
  const auto items = draw_batch(cfg, static_cast<int>(ds.train.size()), 0, 0);
  double sum = 0.0;
  for (const auto& it : items) {
    const auto& s = ds.train[static_cast<std::size_t>(it.index)];
    sum += model.loss(item_state(it, s), s.style_id, melody::extract_pitch_features(s.pitch), !it.drop_melody);
  }
  return sum / static_cast<double>(items.size());
}

TrainResult train(const TrainConfig& cfg, const data::Dataset& ds, const TrainOptions& opt) {
  cfg.validate();
  if (ds.train.empty()) throw ConfigError("train: training split is empty");
  if (cfg.freeze_backbone && cfg.backbone.injector == backbone::Injector::none) {
    throw ConfigError("train: --freeze-backbone with injector NONE leaves nothing to train");
  }
  const auto t_start = std::chrono::steady_clock::now();

  TrainResult res;
  res.model = Denoiser<float>::init(cfg.backbone, cfg.seed);
  auto params = res.model.parameters();
  std::vector<bool> trainable(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    trainable[k] = !cfg.freeze_backbone || params[k].group == nn::ParamGroup::injector;
    res.total_params += static_cast<std::size_t>(params[k].value->size());
    if (trainable[k]) res.trainable_params += static_cast<std::size_t>(params[k].value->size());
  }
  res.backbone_checksum_before = checksum(res.model, nn::ParamGroup::backbone);

  std::vector<melody::PitchFeature> feats;
  feats.reserve(ds.train.size());
  for (const auto& s : ds.train) feats.push_back(melody::extract_pitch_features(s.pitch));

  if (!opt.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(opt.out_dir / "checkpoints", ec);
    if (ec) throw IoError("cannot create " + (opt.out_dir / "checkpoints").string() + ": " + ec.message());
  }

  AdamW adam(cfg, trainable);
  Denoiser<float> grad = res.model.zeros_like();
  auto grad_refs = grad.parameters();
  std::vector<Denoiser<float>> buffers;
  const int n_train = static_cast<int>(ds.train.size());
  const double per_sample = 1.0 / static_cast<double>(cfg.batch_size * cfg.grad_accum);

  for (int step = 0; step < cfg.max_steps; ++step) {
    set_zero(grad);
    double loss_sum = 0.0;
    for (int micro = 0; micro < cfg.grad_accum; ++micro) {
      const auto items = draw_batch(cfg, n_train, step, micro);
      const auto losses = accumulate_batch(res.model, items, ds.train, feats, cfg.deterministic, buffers, grad);
      double micro_sum = 0.0;
      for (double l : losses) micro_sum += l;
      if (!std::isfinite(micro_sum)) {
        dump_nan(opt.out_dir, step, micro, cfg, items, losses, std::nan(""));
        throw NumericalError("non-finite loss at step " + std::to_string(step + 1) + " (batch seed " +
                             std::to_string(batch_seed(cfg, step, micro)) + ")");
      }
      loss_sum += micro_sum;
    }
    scale(grad, static_cast<float>(per_sample));
    const double gnorm = grad_norm(grad_refs, trainable);
    if (!std::isfinite(gnorm)) {
      dump_nan(opt.out_dir, step, 0, cfg, draw_batch(cfg, n_train, step, 0), {}, gnorm);
      throw NumericalError("non-finite gradient at step " + std::to_string(step + 1) + " (batch seed " +
                           std::to_string(batch_seed(cfg, step, 0)) + ")");
    }
    if (cfg.grad_clip > 0.0 && gnorm > cfg.grad_clip) scale(grad, static_cast<float>(cfg.grad_clip / gnorm));
    const double lr = lr_at(cfg, step);
    adam.step(params, grad_refs, lr);
    res.history.push_back({step + 1, loss_sum * per_sample, gnorm, lr});

    if (opt.log && (step == 0 || (step + 1) % std::max(1, opt.log_every) == 0)) {
      char line[160];
      std::snprintf(line, sizeof line, "step %5d  loss %.5f  grad_norm %.4f  lr %.3g\n", step + 1,
                    res.history.back().loss, gnorm, lr);
      *opt.log << line << std::flush;
    }
    if (!opt.out_dir.empty() && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      save_model(checkpoint_path(opt.out_dir, step + 1), {res.model, cfg, ds.hash, step + 1});
      prune_checkpoints(opt.out_dir, cfg.keep_checkpoints);
      write_loss_csv(opt.out_dir / "loss.csv", res.history);
    }
  }

  res.backbone_checksum_after = checksum(res.model, nn::ParamGroup::backbone);
  if (!opt.out_dir.empty()) {
    res.final_checkpoint = opt.out_dir / "model.ckpt";
    save_model(res.final_checkpoint, {res.model, cfg, ds.hash, cfg.max_steps});
    write_loss_csv(opt.out_dir / "loss.csv", res.history);
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

}  // namespace iaeilm::train
