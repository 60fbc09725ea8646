#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "csnn/io.hpp"
#include "csnn/model.hpp"
#include "csnn/rng.hpp"

using namespace csnn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("csnn_model_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

CsnnModel random_csnn_model(std::size_t d, std::size_t k, std::size_t c, double alpha,
                            Rng& rng) {
  CsnnModel m;
  m.normalizer.mu = rng.normal_vec(d, 0.0, 1.0);
  m.normalizer.sigma.assign(d, 0.0);
  for (auto& s : m.normalizer.sigma) s = rng.uniform(0.5, 1.5);
  CsnLayer layer;
  layer.W = Matrix(k, d);
  for (std::size_t i = 0; i < layer.W.size(); ++i) layer.W.data()[i] = rng.normal(0.0, 1.0);
  layer.b = rng.normal_vec(k, 0.0, 0.2);
  layer.r = rng.normal_vec(k, 0.5, 0.2);
  layer.alpha = alpha;
  m.hidden = layer;
  m.head = Matrix(c, k);
  for (std::size_t i = 0; i < m.head.size(); ++i) m.head.data()[i] = rng.normal(0.0, 1.0);
  m.num_classes = c;
  return m;
}

}  // namespace

TEST_CASE("fit_normalizer on a two-point set") {
  const Normalizer n = fit_normalizer({{0.0, 0.0}, {2.0, 2.0}});
  CHECK(n.mu == Vector{1.0, 1.0});
  CHECK(n.sigma == Vector{1.0, 1.0});
}

TEST_CASE("fit_normalizer floors constant columns") {
  const Normalizer n = fit_normalizer({{1.0, 5.0}, {2.0, 5.0}, {3.0, 5.0}});
  CHECK(n.sigma[1] == kSigmaFloor);
  const Vector v = normalize(n, {2.0, 5.0});
  CHECK(std::isfinite(v[0]));
  CHECK(std::isfinite(v[1]));
  CHECK(v[1] == 0.0);
}

TEST_CASE("fit_normalizer rejects empty and ragged data") {
  CHECK_THROWS_AS(fit_normalizer({}), DimensionError);
  CHECK_THROWS_AS(fit_normalizer({{1.0, 2.0}, {1.0}}), DimensionError);
}

TEST_CASE("normalized standard-normal data has unit mean squared norm") {
  Rng rng(404);
  const std::size_t d = 64;
  std::vector<Vector> data(10000);
  for (auto& u : data) u = rng.normal_vec(d, 0.0, 1.0);
  const Normalizer n = fit_normalizer(data);
  double mean_sq = 0.0;
  for (const auto& u : data) mean_sq += squared_norm(normalize(n, u));
  mean_sq /= static_cast<double>(data.size());
  CHECK(mean_sq > 0.9);
  CHECK(mean_sq < 1.1);
}

TEST_CASE("normalize hand-checked values") {
  Normalizer n;
  n.mu = {1.0, 2.0};
  n.sigma = {1.0, 1.0};
  CHECK(normalize(n, {1.0, 2.0}) == Vector{0.0, 0.0});

  Normalizer one;
  one.mu = {0.0};
  one.sigma = {1.0};
  CHECK(normalize(one, {3.0}) == Vector{3.0});

  Normalizer four;
  four.mu = {0.0, 0.0, 0.0, 0.0};
  four.sigma = {1.0, 1.0, 1.0, 1.0};
  CHECK(normalize(four, {2.0, 0.0, 0.0, 0.0}) == Vector{1.0, 0.0, 0.0, 0.0});

  CHECK_THROWS_AS(normalize(four, {1.0}), DimensionError);
}

TEST_CASE("raw_outputs composition matches the hand-assembled chain") {
  Rng rng(405);
  for (int trial = 0; trial < 25; ++trial) {
    const CsnnModel m = random_csnn_model(3, 6, 2, rng.uniform(0.0, 1.0), rng);
    const Vector x = rng.normal_vec(3, 0.0, 2.0);
    const Vector expected =
        matvec(m.head, layer_forward(normalize(m.normalizer, x), std::get<CsnLayer>(m.hidden)));
    const Vector got = raw_outputs(m, x);
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(std::abs(got[i] - expected[i]) <= 1e-12 * std::max(1.0, std::abs(expected[i])));
    }
  }
}

TEST_CASE("raw_outputs is exactly zero outside every support") {
  Rng rng(406);
  CsnnModel m = random_csnn_model(2, 5, 2, 1.0, rng);
  // a point whose normalized image is far from every center
  Vector far{1e4, -1e4};
  const Vector z = raw_outputs(m, far);
  CHECK(z == Vector{0.0, 0.0});
  const Confidence c = confidence(m, far);
  CHECK(c.probs == Vector{0.5, 0.5});
  CHECK(c.predicted == 0);
}

TEST_CASE("single neuron single class passthrough") {
  CsnnModel m;
  m.normalizer.mu = {0.0};
  m.normalizer.sigma = {1.0};
  CsnLayer layer;
  layer.W = Matrix(1, 1);
  layer.W(0, 0) = 0.35;  // at alpha 0: relu(2 * 0.35 * x)
  layer.b = {0.0};
  layer.r = {1.0};
  layer.alpha = 0.0;
  m.hidden = layer;
  m.head = Matrix(1, 1);
  m.head(0, 0) = 1.0;
  m.num_classes = 1;
  const Vector z = raw_outputs(m, {1.0});
  CHECK(z[0] == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("softmax basics") {
  const Vector p = softmax({std::log(3.0), 0.0});
  CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-12));

  Rng rng(407);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector z = rng.normal_vec(1 + rng.below(6), 0.0, 3.0);
    const Vector p1 = softmax(z);
    double sum = 0.0;
    for (double v : p1) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);

    // shift invariance
    Vector shifted = z;
    const double c = rng.uniform(-5.0, 5.0);
    for (auto& v : shifted) v += c;
    const Vector p2 = softmax(shifted);
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(std::abs(p1[i] - p2[i]) <= 1e-12);
  }
}

TEST_CASE("confidence tie-break picks the lowest class index") {
  Rng rng(408);
  CsnnModel m = random_csnn_model(2, 4, 3, 1.0, rng);
  const Confidence c = confidence(m, {1e5, 1e5});  // all-zero raw outputs
  CHECK(c.predicted == 0);
  for (double p : c.probs) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("standard and rbf layer forwards") {
  StandardLayer s;
  s.W = Matrix(2, 2);
  s.W(0, 0) = 1.0;
  s.W(1, 1) = -1.0;
  s.b = {0.5, 0.0};
  const Vector out = standard_forward({1.0, 1.0}, s);
  CHECK(out[0] == 2.5);  // relu(2*1 + 0.5)
  CHECK(out[1] == 0.0);  // relu(-2)

  RbfLayer rbf;
  rbf.W = Matrix(1, 2);
  rbf.W(0, 0) = 1.0;
  rbf.log_beta = {0.0};
  CHECK(rbf_forward({1.0, 0.0}, rbf)[0] == 1.0);
  CHECK(rbf_forward({2.0, 0.0}, rbf)[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("model json round-trip is bit exact") {
  TempDir tmp;
  Rng rng(409);
  const CsnnModel m = random_csnn_model(3, 8, 2, 0.73, rng);
  const std::string path = tmp.file("model.json");
  save_model(m, path);
  const CsnnModel loaded = load_model(path);

  const auto& l0 = std::get<CsnLayer>(m.hidden);
  const auto& l1 = std::get<CsnLayer>(loaded.hidden);
  CHECK(l0.W == l1.W);
  CHECK(l0.b == l1.b);
  CHECK(l0.r == l1.r);
  CHECK(l0.alpha == l1.alpha);
  CHECK(m.head == loaded.head);
  CHECK(m.normalizer.mu == loaded.normalizer.mu);
  CHECK(m.normalizer.sigma == loaded.normalizer.sigma);

  for (int trial = 0; trial < 100; ++trial) {
    const Vector x = rng.normal_vec(3, 0.0, 2.0);
    CHECK(raw_outputs(m, x) == raw_outputs(loaded, x));
  }
}

TEST_CASE("standard and rbf models round-trip") {
  TempDir tmp;
  Rng rng(410);
  CsnnModel m;
  m.normalizer.mu = {0.0, 0.0};
  m.normalizer.sigma = {1.0, 1.0};
  StandardLayer s;
  s.W = Matrix(3, 2);
  for (std::size_t i = 0; i < s.W.size(); ++i) s.W.data()[i] = rng.normal(0.0, 1.0);
  s.b = rng.normal_vec(3, 0.0, 1.0);
  m.hidden = s;
  m.head = Matrix(2, 3);
  for (std::size_t i = 0; i < m.head.size(); ++i) m.head.data()[i] = rng.normal(0.0, 1.0);
  m.num_classes = 2;
  save_model(m, tmp.file("standard.json"));
  const CsnnModel ls = load_model(tmp.file("standard.json"));
  CHECK(std::get<StandardLayer>(ls.hidden).W == s.W);

  RbfLayer rbf;
  rbf.W = s.W;
  rbf.log_beta = rng.normal_vec(3, 0.0, 0.5);
  m.hidden = rbf;
  save_model(m, tmp.file("rbf.json"));
  const CsnnModel lr = load_model(tmp.file("rbf.json"));
  CHECK(std::get<RbfLayer>(lr.hidden).log_beta == rbf.log_beta);
}

TEST_CASE("backbone models round-trip") {
  TempDir tmp;
  Rng rng(411);
  CsnnModel m = random_csnn_model(4, 6, 2, 1.0, rng);
  MlpBackbone bb;
  bb.W = Matrix(4, 7);
  for (std::size_t i = 0; i < bb.W.size(); ++i) bb.W.data()[i] = rng.normal(0.0, 1.0);
  bb.b = rng.normal_vec(4, 0.0, 0.1);
  m.backbone = bb;
  save_model(m, tmp.file("bb.json"));
  const CsnnModel loaded = load_model(tmp.file("bb.json"));
  REQUIRE(loaded.backbone.has_value());
  CHECK(loaded.backbone->W == bb.W);
  CHECK(loaded.backbone->b == bb.b);
  const Vector x = rng.normal_vec(7, 0.0, 1.0);
  CHECK(raw_outputs(m, x) == raw_outputs(loaded, x));
}

TEST_CASE("model load errors are structured") {
  TempDir tmp;
  Rng rng(412);
  const CsnnModel m = random_csnn_model(2, 3, 2, 0.5, rng);
  const std::string path = tmp.file("model.json");
  save_model(m, path);

  SUBCASE("truncated file") {
    const std::string full = read_file(path);
    atomic_write_file(tmp.file("trunc.json"), full.substr(0, full.size() / 2));
    CHECK_THROWS_AS(load_model(tmp.file("trunc.json")), ParseError);
  }
  SUBCASE("version mismatch") {
    std::string full = read_file(path);
    const auto pos = full.find("\"version\": 1");
    REQUIRE(pos != std::string::npos);
    full.replace(pos, 12, "\"version\": 9");
    atomic_write_file(tmp.file("ver.json"), full);
    try {
      load_model(tmp.file("ver.json"));
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("unsupported version") != std::string::npos);
    }
  }
  SUBCASE("missing field is named") {
    std::string full = read_file(path);
    const auto pos = full.find("\"r\":");
    REQUIRE(pos != std::string::npos);
    full.replace(pos, 4, "\"q\":");
    atomic_write_file(tmp.file("field.json"), full);
    try {
      load_model(tmp.file("field.json"));
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("params.r") != std::string::npos);
    }
  }
  SUBCASE("nonexistent file") { CHECK_THROWS_AS(load_model(tmp.file("nope.json")), ParseError); }
}

TEST_CASE("base64 round trip") {
  Rng rng(413);
  for (std::size_t n : {0ul, 1ul, 2ul, 3ul, 4ul, 31ul, 257ul}) {
    std::vector<std::uint8_t> bytes(n);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.below(256));
    const std::string text = base64_encode(bytes.data(), bytes.size());
    CHECK(base64_decode(text) == bytes);
  }
  CHECK_THROWS_AS(base64_decode("a"), ParseError);
  CHECK_THROWS_AS(base64_decode("a!=="), ParseError);
}
