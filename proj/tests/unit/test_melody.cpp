#include "iaeilm/melody.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace iaeilm;
using melody::PitchSequence;

TEST_SUITE("melody") {

TEST_CASE("validate_pitch rejects out-of-range voiced frames and names the frame") {
  PitchSequence p{{220.0, 0.0, 1000.0}};
  try {
    melody::validate_pitch(p);
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("frame 2") != std::string::npos);
  }
  CHECK_THROWS_AS(melody::validate_pitch(PitchSequence{{-5.0}}), DomainError);
  CHECK_THROWS_AS(melody::validate_pitch(PitchSequence{{NAN}}), DomainError);
  CHECK_THROWS_AS(melody::validate_pitch(PitchSequence{{-5.0}}, melody::OutOfRangePolicy::clamp), DomainError);
}

TEST_CASE("clamp policy pulls voiced values into range and keeps unvoiced frames") {
  const auto p = melody::validate_pitch(PitchSequence{{30.0, 0.0, 2000.0, 440.0}}, melody::OutOfRangePolicy::clamp);
  CHECK(p.f0_hz == std::vector<double>{50.0, 0.0, 900.0, 440.0});
}

TEST_CASE("normalized log pitch spans [0, 1] over the voiced range") {
  CHECK(melody::normalized_log_pitch(50.0) == doctest::Approx(0.0));
  CHECK(melody::normalized_log_pitch(900.0) == doctest::Approx(1.0));
  // Geometric midpoint sqrt(50 * 900) = 212.13 Hz sits at 0.5.
  CHECK(melody::normalized_log_pitch(std::sqrt(50.0 * 900.0)) == doctest::Approx(0.5));
}

TEST_CASE("pitch features: log-pitch column and voicing flag") {
  const auto f = melody::extract_pitch_features(PitchSequence{{0.0, 50.0, 900.0}});
  REQUIRE(f.values.rows() == 3);
  REQUIRE(f.values.cols() == 2);
  CHECK(f.values(0, 0) == 0.0);
  CHECK(f.values(0, 1) == 0.0);
  CHECK(f.values(1, 0) == doctest::Approx(0.0));
  CHECK(f.values(1, 1) == 1.0);
  CHECK(f.values(2, 0) == doctest::Approx(1.0));
}

TEST_CASE("encoder matches a direct convolution loop") {
  std::mt19937_64 rng(3);
  for (auto act : {melody::Activation::tanh, melody::Activation::sine}) {
    melody::EncoderConfig cfg;
    cfg.hidden_channels = {7, 5};
    cfg.kernel = 5;
    cfg.activation = act;
    cfg.first_layer_scale = 3.0;
    const auto w = melody::init_encoder<double>(cfg, 6, rng);
    PitchSequence p;
    std::uniform_real_distribution<double> hz(50.0, 900.0);
    for (int i = 0; i < 11; ++i) p.f0_hz.push_back(i % 4 == 3 ? 0.0 : hz(rng));
    const auto feat = melody::extract_pitch_features(p);
    const auto got = melody::melody_encode(feat, w);
    const auto want = oracle::from_grid(oracle::melody_encoder(oracle::to_grid(feat.values), w));
    REQUIRE(got.rows() == 11);
    REQUIRE(got.cols() == 6);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("encoder rejects even kernels and wrong channel counts") {
  std::mt19937_64 rng(1);
  melody::EncoderConfig cfg;
  cfg.kernel = 4;
  CHECK_THROWS_AS(melody::init_encoder<float>(cfg, 8, rng), ConfigError);
  cfg.kernel = 3;
  const auto w = melody::init_encoder<double>(cfg, 8, rng);
  melody::PitchFeature bad{Matrix<double>::Zero(4, 3)};
  CHECK_THROWS_AS(melody::melody_encode(bad, w), ShapeError);
}

TEST_CASE("interpolate aligns endpoints and is the identity at equal length") {
  Matrix<double> m0(3, 2);
  m0 << 0, 10, 1, 20, 4, 40;
  const auto same = melody::interpolate(m0, 3);
  CHECK(same == m0);
  const auto up = melody::interpolate(m0, 5);  // source positions 0, .5, 1, 1.5, 2
  CHECK(up.row(0) == m0.row(0));
  CHECK(up.row(4) == m0.row(2));
  CHECK(up(1, 0) == doctest::Approx(0.5));
  CHECK(up(3, 1) == doctest::Approx(30.0));
  CHECK_THROWS_AS(melody::interpolate(m0, 0), ShapeError);
}

TEST_CASE("interpolate_backward is the adjoint of interpolate") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 1);
  for (auto [src, dst] : {std::pair<Index, Index>{5, 9}, {9, 5}, {7, 7}, {1, 4}, {4, 1}}) {
    Matrix<double> a(src, 3), b(dst, 3);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
    for (Index i = 0; i < b.size(); ++i) b.data()[i] = n(rng);
    const double lhs = (melody::interpolate(a, dst).array() * b.array()).sum();
    const double rhs = (a.array() * melody::interpolate_backward(b, src).array()).sum();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("pitch CSV round-trips exactly") {
  PitchSequence p{{0.0, 440.0, 123.456789012345, 0.0, 899.999}};
  std::stringstream ss;
  melody::write_pitch_csv(ss, p);
  CHECK(ss.str().rfind("frame,f0_hz\n", 0) == 0);
  CHECK(melody::read_pitch_csv(ss) == p);
}

TEST_CASE("malformed pitch CSV is rejected") {
  std::stringstream no_header("0,440\n");
  CHECK_THROWS(melody::read_pitch_csv(no_header));
  std::stringstream bad_value("frame,f0_hz\n0,abc\n");
  CHECK_THROWS(melody::read_pitch_csv(bad_value));
  std::stringstream gap("frame,f0_hz\n0,440\n2,440\n");
  CHECK_THROWS(melody::read_pitch_csv(gap));
}

}  // TEST_SUITE
