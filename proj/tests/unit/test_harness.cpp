#include "iaeilm/checkpoint.hpp"
#include "iaeilm/config.hpp"
#include "iaeilm/dataset.hpp"
#include "iaeilm/evaluate.hpp"
#include "iaeilm/experiment.hpp"
#include "iaeilm/trainer.hpp"

#include "fixtures.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

using namespace iaeilm;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("config JSON round-trips and hashes track content") {
  const auto c = fixtures::small_config();
  const auto back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(config_hash(back) == config_hash(c));
  auto d = c;
  d.lr *= 1.5;
  CHECK(config_hash(d) != config_hash(c));
  d = c;
  d.backbone.injector = backbone::Injector::ea;
  CHECK(config_hash(d) != config_hash(c));
  d = c;
  d.data.synth.seed += 1;
  CHECK(config_hash(d) != config_hash(c));
  CHECK(config_hash(d.data) != config_hash(c.data));
}

TEST_CASE("partial JSON overrides only the given keys; unknown keys fail") {
  const auto base = fixtures::small_config();
  const auto c = train_config_from_json(R"({"lr": 0.5, "backbone": {"heads": 4}})", base);
  CHECK(c.lr == 0.5);
  CHECK(c.backbone.heads == 4);
  CHECK(c.max_steps == base.max_steps);
  CHECK_THROWS_AS(train_config_from_json(R"({"learning_rate": 0.5})", base), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(R"({"backbone": {"depth": 3}})", base), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(R"({"lr": "fast"})", base), ConfigError);
}

TEST_CASE("validation catches inconsistent configurations") {
  auto c = fixtures::small_config();
  CHECK_NOTHROW(c.validate());
  c.backbone.latent_dim += 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = fixtures::small_config();
  c.warmup_steps = c.max_steps + 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("checkpoint bytes are little-endian and round-trip") {
  const std::vector<ckpt::NamedTensor> ts{{"a", {2}, {1.0f, -2.0f}}, {"w.b", {1, 2}, {0.5f, 3.0f}}};
  std::ostringstream os;
  ckpt::write_tensors(os, {ts[0]});
  const std::string b = os.str();
  const unsigned char want[] = {'I', 'A', 'E', 'I', 'L', 'M', '0', '1', 1, 0, 0, 0, 1, 0, 'a', 0, 1, 2, 0, 0, 0,
                                0,   0,   0x80, 0x3f, 0,  0,  0,  0xc0};
  REQUIRE(b.size() == sizeof(want));
  for (std::size_t i = 0; i < sizeof(want); ++i) {
    CAPTURE(i);
    CHECK(static_cast<unsigned char>(b[i]) == want[i]);
  }
  const auto dir = fixtures::scratch("ckpt");
  ckpt::save(dir / "x.ckpt", ts);
  CHECK(ckpt::load(dir / "x.ckpt") == ts);
}

TEST_CASE("corrupt checkpoints are rejected") {
  std::ostringstream os;
  ckpt::write_tensors(os, {{"a", {3}, {1.0f, 2.0f, 3.0f}}});
  const std::string good = os.str();
  std::string bad = good;
  bad[7] = '2';
  std::istringstream is_bad(bad);
  CHECK_THROWS_AS(ckpt::read_tensors(is_bad), IoError);
  std::istringstream is_short(good.substr(0, good.size() - 2));
  CHECK_THROWS_AS(ckpt::read_tensors(is_short), IoError);
  CHECK_THROWS_AS(ckpt::load(fixtures::scratch("ckpt_missing") / "nope.ckpt"), IoError);
}

TEST_CASE("model checkpoints restore weights and refuse mismatched configs") {
  const auto cfg = fixtures::small_config();
  ModelFile mf{Denoiser<float>::init(cfg.backbone, 3), cfg, "abc", 7};
  const auto dir = fixtures::scratch("model");
  save_model(dir / "m.ckpt", mf);
  const auto back = load_model(dir / "m.ckpt");
  CHECK(flatten(back.model) == flatten(mf.model));
  CHECK(back.step == 7);
  CHECK(back.dataset_hash == "abc");
  auto other = cfg;
  other.backbone.model_width = 8;
  auto wrong = Denoiser<float>::init(other.backbone, 3);
  CHECK_THROWS(wrong.from_tensors(mf.model.to_tensors()));
}

TEST_CASE("dataset generation is deterministic and files are consistent") {
  const auto cfg = fixtures::small_config().data;
  const auto a = data::generate(cfg), b = data::generate(cfg);
  CHECK(a.hash == b.hash);
  CHECK(a.train.size() == 24);
  CHECK(a.val.size() == 4);
  CHECK(a.test.size() == 4);
  const auto d1 = fixtures::scratch("ds1"), d2 = fixtures::scratch("ds2");
  data::save(a, d1);
  data::save(b, d2);
  for (const char* f : {"train.rec", "val.rec", "test.rec", "manifest.json"}) {
    CAPTURE(f);
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  }
  CHECK(data::count_records(d1 / "train.rec") == 24);
  const auto back = data::load(d1);
  CHECK(back.hash == a.hash);
  REQUIRE(back.test.size() == a.test.size());
  for (std::size_t i = 0; i < a.test.size(); ++i) {
    CHECK(back.test[i].x0 == a.test[i].x0);
    CHECK(back.test[i].pitch.f0_hz == a.test[i].pitch.f0_hz);
    CHECK(back.test[i].style_id == a.test[i].style_id);
  }
  // Samples across splits are distinct draws.
  CHECK(a.train[0].x0 != a.val[0].x0);
  std::filesystem::resize_file(d1 / "val.rec", std::filesystem::file_size(d1 / "val.rec") - 10);
  CHECK_THROWS(data::load(d1));
}

TEST_CASE("learning rate warms up linearly then holds") {
  TrainConfig c;
  c.lr = 1e-4;
  c.warmup_steps = 1000;
  CHECK(train::lr_at(c, 0) == doctest::Approx(1e-7));
  CHECK(train::lr_at(c, 499) == doctest::Approx(5e-5));
  CHECK(train::lr_at(c, 999) == doctest::Approx(1e-4));
  CHECK(train::lr_at(c, 3000) == doctest::Approx(1e-4));
  c.warmup_steps = 0;
  CHECK(train::lr_at(c, 0) == 1e-4);
}

TEST_CASE("AdamW matches a scalar reference and skips frozen tensors") {
  TrainConfig c;
  c.beta1 = 0.9;
  c.beta2 = 0.95;
  c.adam_eps = 1e-8;
  c.weight_decay = 0.1;
  Matrix<float> w(1, 2), frozen(1, 1), gw(1, 2), gf(1, 1);
  w << 1.0f, -0.5f;
  frozen << 2.0f;
  std::vector<nn::ParamRef<float>> ps{{"w", {}, nn::ParamGroup::injector, &w}, {"f", {}, nn::ParamGroup::backbone, &frozen}};
  std::vector<nn::ParamRef<float>> gs{{"w", {}, nn::ParamGroup::injector, &gw}, {"f", {}, nn::ParamGroup::backbone, &gf}};
  train::AdamW opt(c, {true, false});
  double p = 1.0, m = 0.0, v = 0.0;
  const double grads[] = {0.3, -0.2, 0.7, 0.1};
  for (int t = 1; t <= 4; ++t) {
    const double g = grads[t - 1], lr = 0.01;
    gw << static_cast<float>(g), 0.0f;
    gf << 1.0f;
    opt.step(ps, gs, lr);
    m = 0.9 * m + 0.1 * g;
    v = 0.95 * v + 0.05 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.95, t));
    p = p * (1 - lr * 0.1) - lr * mh / (std::sqrt(vh) + 1e-8);
    CHECK(w(0, 0) == doctest::Approx(p).epsilon(1e-6));
  }
  CHECK(frozen(0, 0) == 2.0f);
  // Zero gradient: only decay moves the weight.
  CHECK(w(0, 1) == doctest::Approx(-0.5 * std::pow(1 - 0.01 * 0.1, 4)).epsilon(1e-6));
  CHECK(train::grad_norm(gs, {true, true}) == doctest::Approx(std::sqrt(0.01 + 1.0)).epsilon(1e-6));
  CHECK(train::grad_norm(gs, {true, false}) == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("zero-initialized IA-EiLM starts from the unconditional loss") {
  auto c = fixtures::small_config();
  const auto ds = data::generate(c.data);
  auto u = c;
  u.backbone.injector = backbone::Injector::none;
  const double l_ia = train::initial_batch_loss(c, ds, Denoiser<float>::init(c.backbone, c.seed));
  const double l_none = train::initial_batch_loss(u, ds, Denoiser<float>::init(u.backbone, u.seed));
  CHECK(std::abs(l_ia - l_none) <= 1e-6);
}

TEST_CASE("deterministic training reproduces the loss series and weights") {
  auto c = fixtures::small_config();
  c.deterministic = true;
  const auto ds = data::generate(c.data);
  const auto a = train::train(c, ds), b = train::train(c, ds);
  REQUIRE(a.history.size() == static_cast<std::size_t>(c.max_steps));
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].loss == b.history[i].loss);
  CHECK(flatten(a.model) == flatten(b.model));
  CHECK(a.backbone_checksum_after != a.backbone_checksum_before);
}

TEST_CASE("checkpoints are written on cadence and pruned") {
  auto c = fixtures::small_config();
  c.checkpoint_every = 1;
  c.keep_checkpoints = 2;
  const auto ds = data::generate(c.data);
  const auto dir = fixtures::scratch("ckpt_prune");
  const auto r = train::train(c, ds, {dir, nullptr, 100});
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "checkpoints")) n += e.path().extension() == ".ckpt";
  CHECK(n == 2);
  CHECK(std::filesystem::exists(dir / "checkpoints" / "step_000006.ckpt"));
  CHECK(std::filesystem::exists(dir / "loss.csv"));
  CHECK(std::filesystem::exists(r.final_checkpoint));
}

TEST_CASE("a frozen backbone stays bit-identical and only injector weights train") {
  auto c = fixtures::small_config();
  c.freeze_backbone = true;
  const auto ds = data::generate(c.data);
  const auto r = train::train(c, ds);
  CHECK(r.backbone_checksum_before == r.backbone_checksum_after);
  CHECK(r.trainable_params == r.model.parameter_count(nn::ParamGroup::injector));
  CHECK(r.trainable_params < r.total_params);
  const auto init = Denoiser<float>::init(c.backbone, c.seed);
  CHECK(flatten(r.model, nn::ParamGroup::backbone) == flatten(init, nn::ParamGroup::backbone));
  CHECK(flatten(r.model, nn::ParamGroup::injector) != flatten(init, nn::ParamGroup::injector));
  c.backbone.injector = backbone::Injector::none;
  CHECK_THROWS_AS(train::train(c, ds), ConfigError);
}

TEST_CASE("a non-finite batch aborts with a diagnostic dump") {
  auto c = fixtures::small_config();
  c.batch_size = 24;  // every training sample is in the first batch
  auto ds = data::generate(c.data);
  ds.train[3].x0(0, 0) = std::numeric_limits<float>::quiet_NaN();
  const auto dir = fixtures::scratch("nan");
  try {
    train::train(c, ds, {dir, nullptr, 100});
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("batch seed") != std::string::npos);
  }
  REQUIRE(std::filesystem::exists(dir / "nan_dump.json"));
  const auto j = json::parse(slurp(dir / "nan_dump.json"));
  CHECK(j.at("step") == 1);
  CHECK(j.at("batch_seed").get<std::uint64_t>() == train::batch_seed(c, 0, 0));
}

TEST_CASE("evaluation is deterministic and reports the documented keys") {
  auto c = fixtures::small_config();
  const auto root = fixtures::scratch("eval");
  exp::cmd_gen_data(c.data, root / "data");
  exp::cmd_train(c, root / "data", root / "run");
  const auto ckpt = root / "run" / "model.ckpt";
  const auto r1 = exp::cmd_eval(ckpt, root / "data", root / "e1");
  const auto r2 = exp::cmd_eval(ckpt, root / "data", root / "e2");
  CHECK(slurp(root / "e1" / "report.json") == slurp(root / "e2" / "report.json"));
  CHECK(slurp(root / "e1" / "per_sample.csv") == slurp(root / "e2" / "per_sample.csv"));
  const auto j = json::parse(slurp(root / "e1" / "report.json"));
  for (const char* k : {"rpa", "rca", "oa", "n_ref_voiced", "n_frames", "config_hash", "seed"}) CHECK(j.contains(k));
  CHECK(r1.per_sample.size() == 4);

  auto other = c.data;
  other.synth.seed += 1;
  exp::cmd_gen_data(other, root / "other");
  CHECK_THROWS_AS(exp::cmd_eval(ckpt, root / "other", root / "e3"), ConfigError);
}

TEST_CASE("the oracle generator reproduces the conditioning melody") {
  const auto c = fixtures::small_config();
  const auto ds = data::generate(c.data);
  const auto r = eval::evaluate_model(eval::oracle_generator(c.data.synth), ds.test, c.data.synth, 1);
  CHECK(*r.mean.rpa >= 0.999);
}

TEST_CASE("report JSON writes null for undefined metrics") {
  metrics::MetricsReport r{std::nullopt, std::nullopt, 1.0, 0, 5};
  const auto j = json::parse(eval::report_json(r, "h", 3));
  CHECK(j.at("rpa").is_null());
  CHECK(j.at("oa") == 1.0);
  CHECK(j.at("seed") == 3);
}

}  // TEST_SUITE
