#include "iaeilm/experiment.hpp"

#include "iaeilm/dataset.hpp"
#include "iaeilm/gradcheck.hpp"
#include "json_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace iaeilm::exp {

TrainConfig resolve_config(const std::optional<std::filesystem::path>& config_file, const Overrides& o) {
  TrainConfig cfg = default_train_config();
  if (config_file) cfg = train_config_from_json(detail::read_text(*config_file), cfg);
  if (o.seed) cfg.seed = *o.seed;
  if (o.deterministic) cfg.deterministic = true;
  if (o.freeze_backbone) cfg.freeze_backbone = true;
  if (o.injector) cfg.backbone.injector = *o.injector;
  if (o.placement) cfg.backbone.placement = *o.placement;
  if (o.guidance) {
    if (*o.guidance < 0.0) throw ConfigError("--cfg must be non-negative");
    cfg.guidance_scale = *o.guidance;
    if (*o.guidance > 0.0 && cfg.cond_dropout == 0.0) cfg.cond_dropout = kGuidanceDropout;
  }
  cfg.validate();
  return cfg;
}

data::Dataset cmd_gen_data(const DatasetConfig& cfg, const std::filesystem::path& out_dir) {
  auto ds = data::generate(cfg);
  data::save(ds, out_dir);
  return ds;
}

namespace {

nlohmann::json report_value(const metrics::MetricsReport& r) {
  return {{"rpa", detail::optional_number(r.rpa)},
          {"rca", detail::optional_number(r.rca)},
          {"oa", detail::optional_number(r.oa)},
          {"n_ref_voiced", r.n_ref_voiced},
          {"n_frames", r.n_frames}};
}

metrics::MetricsReport report_from(const nlohmann::json& j) {
  metrics::MetricsReport r;
  auto opt = [&](const char* k) -> std::optional<double> {
    return j.at(k).is_null() ? std::nullopt : std::optional<double>(j.at(k).get<double>());
  };
  r.rpa = opt("rpa");
  r.rca = opt("rca");
  r.oa = opt("oa");
  r.n_ref_voiced = j.at("n_ref_voiced").get<std::int64_t>();
  r.n_frames = j.at("n_frames").get<std::int64_t>();
  return r;
}

}  // namespace

TrainRun cmd_train(TrainConfig cfg, const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
                   std::ostream* log) {
  const auto ds = data::load(data_dir);
  cfg.data = ds.config;
  cfg.backbone.latent_dim = ds.config.synth.latent_dim();
  cfg.backbone.num_styles = ds.config.synth.num_styles;
  cfg.validate();

  TrainRun run;
  run.config = cfg;
  run.result = train::train(cfg, ds, {out_dir, log, 100});
  run.val = eval::evaluate_model(eval::model_generator(run.result.model, cfg.sample_steps, cfg.guidance_scale),
                                 ds.val, ds.config.synth, cfg.seed);
  const std::string hash = config_hash(cfg);
  eval::write_report(out_dir / "val", run.val, hash, cfg.seed);

  nlohmann::json rec = {{"config", detail::to_json_value(cfg)},
                        {"config_hash", hash},
                        {"dataset_hash", ds.hash},
                        {"loss_csv", "loss.csv"},
                        {"final_loss", run.result.history.empty() ? 0.0 : run.result.history.back().loss},
                        {"val", report_value(run.val.mean)},
                        {"wall_seconds", run.result.wall_seconds},
                        {"checkpoint", run.result.final_checkpoint.filename().string()},
                        {"total_params", run.result.total_params},
                        {"trainable_params", run.result.trainable_params},
                        {"backbone_checksum_before", run.result.backbone_checksum_before},
                        {"backbone_checksum_after", run.result.backbone_checksum_after}};
  detail::write_text(out_dir / "run.json", rec.dump(2) + "\n");
  if (log) {
    *log << "trainable parameters: " << run.result.trainable_params << " of " << run.result.total_params << "\n";
    if (cfg.freeze_backbone) {
      *log << "backbone checksum: " << run.result.backbone_checksum_before << " -> "
           << run.result.backbone_checksum_after << "\n";
    }
  }
  return run;
}

eval::EvalResult cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
                          const std::filesystem::path& out_dir, const EvalOptions& opt) {
  const auto mf = load_model(checkpoint);
  const auto ds = data::load(data_dir);
  if (mf.dataset_hash != ds.hash) {
    throw ConfigError("checkpoint " + checkpoint.string() + " was trained on dataset " + mf.dataset_hash +
                      " but " + data_dir.string() + " holds dataset " + ds.hash);
  }
  const std::uint64_t seed = opt.seed.value_or(mf.config.seed);
  const double guidance = opt.guidance.value_or(mf.config.guidance_scale);
  auto res = eval::evaluate_model(eval::model_generator(mf.model, mf.config.sample_steps, guidance),
                                  ds.split(opt.split), ds.config.synth, seed);
  eval::write_report(out_dir, res, config_hash(mf.config), seed);
  return res;
}

melody::PitchSequence cmd_sample(const std::filesystem::path& checkpoint, const std::filesystem::path& pitch_csv,
                                 int style_id, std::uint64_t seed, const std::filesystem::path& out_dir,
                                 std::optional<double> guidance) {
  const auto mf = load_model(checkpoint);
  const auto& world = mf.config.data.synth;
  if (style_id < 0 || style_id >= world.num_styles) {
    throw ConfigError("style " + std::to_string(style_id) + " outside [0, " + std::to_string(world.num_styles) + ")");
  }
  synth::SynthSample cond;
  cond.pitch = melody::validate_pitch(melody::read_pitch_csv(pitch_csv));
  cond.style_id = style_id;
  cond.x0 = Matrix<float>::Zero(cond.pitch.size(), world.latent_dim());
  const auto gen = eval::model_generator(mf.model, mf.config.sample_steps, guidance.value_or(mf.config.guidance_scale));
  const Matrix<float> x = gen(cond, seed);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::string csv;
  char buf[32];
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index c = 0; c < x.cols(); ++c) {
      std::snprintf(buf, sizeof buf, c ? ",%.7g" : "%.7g", static_cast<double>(x(r, c)));
      csv += buf;
    }
    csv += "\n";
  }
  detail::write_text(out_dir / "latent.csv", csv);
  const auto decoded = synth::decode_melody(x, world);
  melody::write_pitch_csv(out_dir / "melody.csv", decoded);
  return decoded;
}

std::string AblationVariant::label() const {
  return std::string(backbone::to_string(injector)) + "/" + std::string(backbone::to_string(placement));
}

std::vector<AblationVariant> ablation_variants() {
  using backbone::Injector;
  using backbone::Placement;
  return {{Injector::ea, Placement::before_ffn},
          {Injector::eilm_static, Placement::before_ffn},
          {Injector::ia_eilm, Placement::before_ffn},
          {Injector::ia_eilm, Placement::before_attn}};
}

const AblationCell& AblationTable::at(std::size_t variant, std::size_t seed_index) const {
  return cells.at(variant * num_seeds + seed_index);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

/// Finished run with a matching config hash, if any.
std::optional<metrics::MetricsReport> cached_test_report(const std::filesystem::path& run_dir, const std::string& hash) {
  const auto run = run_dir / "run.json";
  const auto report = run_dir / "test" / "report.json";
  if (!std::filesystem::exists(run) || !std::filesystem::exists(report)) return std::nullopt;
  try {
    const auto rec = detail::parse_json(detail::read_text(run));
    if (rec.at("config_hash").get<std::string>() != hash) return std::nullopt;
    const auto rep = detail::parse_json(detail::read_text(report));
    if (rep.at("config_hash").get<std::string>() != hash) return std::nullopt;
    return report_from(rep);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

std::string ablation_csv(const AblationTable& t) {
  std::string out = "variant,injector,placement,seed,rpa,rca,oa\n";
  const std::size_t nv = t.num_seeds ? t.cells.size() / t.num_seeds : 0;
  for (std::size_t v = 0; v < nv; ++v) {
    const auto& var = t.at(v, 0).variant;
    const std::string prefix = var.label() + "," + std::string(backbone::to_string(var.injector)) + "," +
                               std::string(backbone::to_string(var.placement)) + ",";
    double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    int n[3] = {0, 0, 0};
    for (std::size_t k = 0; k < t.num_seeds; ++k) {
      const auto& c = t.at(v, k);
      out += prefix + std::to_string(c.seed) + "," + fmt(c.test.rpa) + "," + fmt(c.test.rca) + "," + fmt(c.test.oa) + "\n";
      const std::optional<double> vals[3] = {c.test.rpa, c.test.rca, c.test.oa};
      for (int m = 0; m < 3; ++m) {
        if (!vals[m]) continue;
        sum[m] += *vals[m];
        sq[m] += *vals[m] * *vals[m];
        ++n[m];
      }
    }
    std::string mean_row = prefix + "mean", std_row = prefix + "std";
    for (int m = 0; m < 3; ++m) {
      const double mean = n[m] ? sum[m] / n[m] : 0.0;
      const double var_ = n[m] > 1 ? std::max(0.0, (sq[m] - n[m] * mean * mean) / (n[m] - 1)) : 0.0;
      mean_row += "," + (n[m] ? fmt(mean) : std::string());
      std_row += "," + (n[m] ? fmt(std::sqrt(var_)) : std::string());
    }
    out += mean_row + "\n" + std_row + "\n";
  }
  return out;
}

AblationTable cmd_ablate(const TrainConfig& base, const std::filesystem::path& data_dir,
                         const std::filesystem::path& out_dir, int num_seeds, std::ostream* log) {
  if (num_seeds < 1) throw ConfigError("ablate: need at least one seed");
  const auto ds = data::load(data_dir);
  AblationTable table;
  table.num_seeds = static_cast<std::size_t>(num_seeds);
  for (const auto& var : ablation_variants()) {
    for (int k = 0; k < num_seeds; ++k) {
      TrainConfig cfg = base;
      cfg.backbone.injector = var.injector;
      cfg.backbone.placement = var.placement;
      cfg.seed = base.seed + static_cast<std::uint64_t>(k);
      cfg.data = ds.config;
      cfg.backbone.latent_dim = ds.config.synth.latent_dim();
      cfg.backbone.num_styles = ds.config.synth.num_styles;
      const std::string hash = config_hash(cfg);
      const auto run_dir = out_dir / (std::string(backbone::to_string(var.injector)) + "_" +
                                      std::string(backbone::to_string(var.placement)) + "_seed" + std::to_string(k));
      AblationCell cell{var, cfg.seed, {}};
      if (auto cached = cached_test_report(run_dir, hash)) {
        cell.test = *cached;
        if (log) *log << "[ablate] " << var.label() << " seed " << cfg.seed << ": reusing " << run_dir.string() << "\n";
      } else {
        if (log) *log << "[ablate] " << var.label() << " seed " << cfg.seed << ": training\n";
        cmd_train(cfg, data_dir, run_dir, log);
        cell.test = cmd_eval(run_dir / "model.ckpt", data_dir, run_dir / "test").mean;
      }
      if (log) *log << "[ablate] " << var.label() << " seed " << cfg.seed << ": test rpa " << fmt(cell.test.rpa) << "\n";
      table.cells.push_back(cell);
    }
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  detail::write_text(out_dir / "ablation.csv", ablation_csv(table));
  return table;
}

int cmd_grad_check(std::ostream& os, bool verbose) {
  int failures = 0;
  for (const auto& r : gradcheck::run_all()) {
    gradcheck::print(os, r, verbose);
    if (!r.pass()) ++failures;
  }
  os << (failures ? "grad-check: " + std::to_string(failures) + " suite(s) failed\n" : "grad-check: all suites passed\n");
  return failures;
}

}  // namespace iaeilm::exp
