// iaeilm: synthetic melody-conditioned flow model, from data generation to ablations.
//
// Exit codes: 0 ok, 1 usage or configuration error, 2 numerical failure, 3 I/O error.

#include "iaeilm/backbone.hpp"
#include "iaeilm/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

enum Exit { kOk = 0, kUsage = 1, kNumerical = 2, kIo = 3 };

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool deterministic = false;
  bool freeze_backbone = false;
  std::string injector;
  std::string placement;
  double guidance = 0.0;
};

void add_train_flags(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config; keys override the defaults")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Training seed");
  app->add_flag("--deterministic", c.deterministic, "Fixed-order gradient reduction (bitwise reproducible)");
  app->add_flag("--freeze-backbone", c.freeze_backbone, "Update only the melody encoder, IACR and projectors");
  app->add_option("--injector", c.injector, "IA_EILM | EILM_STATIC | EA | FILM | NONE");
  app->add_option("--placement", c.placement, "BEFORE_FFN | BEFORE_ATTN");
  app->add_option("--cfg", c.guidance, "Guidance scale; > 0 also trains with melody dropout");
}

bool given(CLI::App* app, const std::string& name) {
  const auto* opt = app->get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

iaeilm::TrainConfig resolve(const Common& c, CLI::App* app) {
  iaeilm::exp::Overrides o;
  if (given(app, "--seed")) o.seed = c.seed;
  o.deterministic = c.deterministic;
  o.freeze_backbone = c.freeze_backbone;
  if (!c.injector.empty()) o.injector = iaeilm::backbone::parse_injector(c.injector);
  if (!c.placement.empty()) o.placement = iaeilm::backbone::parse_placement(c.placement);
  if (given(app, "--cfg")) o.guidance = c.guidance;
  std::optional<std::filesystem::path> file;
  if (!c.config.empty()) file = c.config;
  return iaeilm::exp::resolve_config(file, o);
}

void print_report(const iaeilm::metrics::MetricsReport& r) {
  auto show = [](const char* k, const std::optional<double>& v) {
    std::cout << k << ' ';
    if (v) std::cout << *v; else std::cout << "undefined";
    std::cout << '\n';
  };
  show("rpa", r.rpa);
  show("rca", r.rca);
  show("oa", r.oa);
  std::cout << "n_ref_voiced " << r.n_ref_voiced << "\nn_frames " << r.n_frames << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Melody-conditioned latent flow model on a synthetic song world"};
  app.require_subcommand(1);

  // gen-data
  Common gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate train/val/test splits");
  gen_cmd->add_option("--config", gen.config, "JSON config; its \"data\" section is used")->check(CLI::ExistingFile);
  gen_cmd->add_option("--seed", gen.seed, "Synthetic world seed");
  gen_cmd->add_option("--out", gen_out, "Output directory")->required();

  // train
  Common tr;
  std::string tr_data, tr_out;
  auto* train_cmd = app.add_subcommand("train", "Train a model and evaluate it on the validation split");
  add_train_flags(train_cmd, tr);
  train_cmd->add_option("--data", tr_data, "Dataset directory")->required();
  train_cmd->add_option("--out", tr_out, "Run directory")->required();

  // eval
  std::string ev_ckpt, ev_data, ev_out, ev_split = "test";
  std::uint64_t ev_seed = 0;
  double ev_cfg = 0.0;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", ev_ckpt, "Model checkpoint")->required();
  eval_cmd->add_option("--data", ev_data, "Dataset directory")->required();
  eval_cmd->add_option("--out", ev_out, "Report directory")->required();
  eval_cmd->add_option("--split", ev_split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--seed", ev_seed, "Sampling seed (default: training seed)");
  eval_cmd->add_option("--cfg", ev_cfg, "Guidance scale (default: from the checkpoint)");

  // sample
  std::string sm_ckpt, sm_pitch, sm_out;
  int sm_style = 0;
  std::uint64_t sm_seed = 0;
  double sm_cfg = 0.0;
  auto* sample_cmd = app.add_subcommand("sample", "Generate one latent for a pitch contour");
  sample_cmd->add_option("--checkpoint", sm_ckpt, "Model checkpoint")->required();
  sample_cmd->add_option("--pitch", sm_pitch, "Pitch CSV (frame,f0_hz)")->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--style", sm_style, "Style id");
  sample_cmd->add_option("--seed", sm_seed, "Sampling seed");
  sample_cmd->add_option("--cfg", sm_cfg, "Guidance scale (default: from the checkpoint)");
  sample_cmd->add_option("--out", sm_out, "Output directory")->required();

  // ablate
  Common ab;
  std::string ab_data, ab_out;
  int ab_seeds = 3;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and test the injector/placement ablation matrix");
  add_train_flags(ablate_cmd, ab);
  ablate_cmd->add_option("--data", ab_data, "Dataset directory")->required();
  ablate_cmd->add_option("--out", ab_out, "Output directory")->required();
  ablate_cmd->add_option("--seeds", ab_seeds, "Seeds per variant")->check(CLI::PositiveNumber);

  // grad-check
  bool gc_verbose = false;
  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference gradient checks (fp64)");
  grad_cmd->add_flag("-v,--verbose", gc_verbose, "Print every tensor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  namespace ex = iaeilm::exp;
  try {
    if (*gen_cmd) {
      auto cfg = resolve(gen, gen_cmd).data;
      if (gen_cmd->count("--seed")) cfg.synth.seed = gen.seed;
      const auto ds = ex::cmd_gen_data(cfg, gen_out);
      std::cout << "wrote " << ds.train.size() << "/" << ds.val.size() << "/" << ds.test.size()
                << " samples to " << gen_out << " (dataset " << ds.hash << ")\n";
    } else if (*train_cmd) {
      const auto run = ex::cmd_train(resolve(tr, train_cmd), tr_data, tr_out, &std::cout);
      std::cout << "validation:\n";
      print_report(run.val.mean);
    } else if (*eval_cmd) {
      ex::EvalOptions opt;
      opt.split = ev_split;
      if (eval_cmd->count("--seed")) opt.seed = ev_seed;
      if (eval_cmd->count("--cfg")) opt.guidance = ev_cfg;
      print_report(ex::cmd_eval(ev_ckpt, ev_data, ev_out, opt).mean);
    } else if (*sample_cmd) {
      std::optional<double> g;
      if (sample_cmd->count("--cfg")) g = sm_cfg;
      const auto mel = ex::cmd_sample(sm_ckpt, sm_pitch, sm_style, sm_seed, sm_out, g);
      std::cout << "wrote " << sm_out << "/latent.csv and melody.csv (" << mel.size() << " frames)\n";
    } else if (*ablate_cmd) {
      const auto table = ex::cmd_ablate(resolve(ab, ablate_cmd), ab_data, ab_out, ab_seeds, &std::cout);
      std::cout << ex::ablation_csv(table);
    } else if (*grad_cmd) {
      return ex::cmd_grad_check(std::cout, gc_verbose) == 0 ? kOk : kNumerical;
    }
  } catch (const iaeilm::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const iaeilm::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {  // ConfigError, ShapeError
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kOk;
}
