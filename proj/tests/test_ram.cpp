#include <doctest.h>

#include "starflow/ram.hpp"
#include "starflow/toy.hpp"
#include "support.hpp"

using namespace starflow;
using sftest::vec2;

namespace {

// Exhaustive active-set oracle for the Euclidean simplex projection.
Vec simplex_oracle(const Vec& v) {
  const int k = static_cast<int>(v.size());
  Vec best;
  double best_dist = INFINITY;
  for (int mask = 1; mask < (1 << k); ++mask) {
    int size = 0;
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      if (mask & (1 << i)) {
        ++size;
        sum += v[i];
      }
    }
    const double shift = (sum - 1.0) / size;
    Vec w = Vec::Zero(k);
    bool feasible = true;
    for (int i = 0; i < k; ++i) {
      if (mask & (1 << i)) {
        w[i] = v[i] - shift;
        feasible = feasible && w[i] >= 0.0;
      }
    }
    if (feasible && (w - v).norm() < best_dist) {
      best_dist = (w - v).norm();
      best = w;
    }
  }
  return best;
}

struct Toy {
  std::shared_ptr<StarModel> model = toy_star_model();
  DiffeoPtr phi = model->composite();
  ArchetypeSet z{*phi, toy_archetypes(*model)};
};

}  // namespace

TEST_CASE("simplex projection") {
  Vec on(3);
  on << 0.2, 0.3, 0.5;
  CHECK((project_simplex(on) - on).norm() < 1e-15);
  CHECK((project_simplex(vec2(1.5, -0.5)) - vec2(1, 0)).norm() < 1e-15);
  CHECK((project_simplex(vec2(0.6, 0.6)) - vec2(0.5, 0.5)).norm() < 1e-15);

  std::mt19937_64 rng(1);
  for (int k = 1; k <= 6; ++k) {
    for (int i = 0; i < 100; ++i) {
      const Vec v = sftest::randn(rng, k, 1.5);
      const Vec w = project_simplex(v);
      CHECK(on_simplex(w));
      CHECK((w - simplex_oracle(v)).norm() < 1e-12);
      CHECK((project_simplex(w) - w).norm() < 1e-14);
    }
  }
  CHECK_THROWS_AS(project_simplex(vec2(NAN, 0)), Error);

  Mat m(2, 3);
  m << 2, 0.6, -1, -1, 0.6, 3;
  project_simplex_columns(m);
  for (int j = 0; j < 3; ++j) CHECK(on_simplex(m.col(j)));

  Mat g(2, 2);
  g << 2, 1, 1, 2;
  CHECK(lambda_max_power(g) == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("relaxed mapping") {
  const auto id = std::make_shared<IdentityDiffeo>(2);
  const ArchetypeSet axes(*id, Mat::Identity(2, 2));
  const RelaxedResult r = relaxed_ram(*id, axes, vec2(1, 1));
  CHECK((r.weights - vec2(0.5, 0.5)).norm() < 1e-12);

  const Toy toy;
  for (int j = 0; j < toy.z.count(); ++j) {
    const RelaxedResult a = relaxed_ram(*toy.phi, toy.z, toy.z.points().col(j), 1e-10, 20000);
    CHECK(std::abs(a.weights[j] - 1.0) < 1e-6);
    for (std::size_t k = 1; k < a.trace.size(); ++k) CHECK(a.trace[k] <= a.trace[k - 1] + 1e-12);
  }
  CHECK(toy.z.relaxed_step() == doctest::Approx(1.0 / toy.z.lambda_max()));
}

TEST_CASE("refined mapping") {
  const Toy toy;
  std::mt19937_64 rng(2);
  std::exponential_distribution<double> ex(1.0);

  SUBCASE("manifold members are fixed points") {
    for (int i = 0; i < 40; ++i) {
      Vec w(toy.z.count());
      for (int j = 0; j < w.size(); ++j) w[j] = ex(rng);
      w /= w.sum();
      const Vec x = archetype_combination(*toy.phi, toy.z, w);
      const RamResult r = ram_full(toy.phi, toy.z, x);
      CHECK((r.projected - x).norm() <= 1e-6);
      CHECK(on_simplex(r.weights, 1e-10));
      CHECK((archetype_combination(*toy.phi, toy.z, r.weights) - r.projected).norm() <= 1e-10);
      CHECK(r.reconstruction_error <= r.relaxed_error + 1e-12);
    }
  }

  SUBCASE("identity map: refine and relaxed agree") {
    const auto id = std::make_shared<IdentityDiffeo>(2);
    Mat tri(2, 3);
    tri << 0, 2, 0, 0, 0, 2;
    const ArchetypeSet z(*id, tri);
    for (int i = 0; i < 20; ++i) {
      const Vec x = sftest::randn(rng, 2, 2.0);
      const RelaxedResult rel = relaxed_ram(*id, z, x, 1e-13, 100000);
      const RamResult ref = ram_refine(*id, z, x, Vec::Constant(3, 1.0 / 3.0));
      CHECK((rel.weights - ref.weights).norm() < 1e-6);
      CHECK(ram_objective(*id, z, x, rel.weights) ==
            doctest::Approx(0.5 * (x - tri * rel.weights).squaredNorm()).epsilon(1e-14));
    }
  }

  SUBCASE("refine never worsens its starting point") {
    for (int i = 0; i < 30; ++i) {
      const Vec x = sftest::randn(rng, 2, 2.0);
      const RelaxedResult rel = relaxed_ram(*toy.phi, toy.z, x);
      const RamResult ref = ram_refine(*toy.phi, toy.z, x, rel.weights);
      CHECK(ram_objective(*toy.phi, toy.z, x, ref.weights) <= ram_objective(*toy.phi, toy.z, x, rel.weights) + 1e-15);
      for (std::size_t k = 1; k < ref.trace.size(); ++k) CHECK(ref.trace[k] <= ref.trace[k - 1]);
    }
  }
}

TEST_CASE("iso correction") {
  const auto id = std::make_shared<IdentityDiffeo>(2);
  Mat tri(2, 3);
  tri << 0, 2, 0, 0, 0, 2;
  const ArchetypeSet z(*id, tri);
  Vec w(3);
  w << 0.2, 0.5, 0.3;
  const IsoWeights same = iso_correct(id, z, tri * w, w);
  CHECK((same.weights - w).norm() < 1e-12);

  const Toy toy;
  const Vec e1 = Vec::Unit(4, 1);
  const IsoWeights at = iso_correct(toy.phi, toy.z, toy.z.points().col(1), e1);
  CHECK((at.weights - e1).norm() < 1e-15);
  CHECK_FALSE(at.degenerate);

  SUBCASE("iso-logarithms balance") {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 20; ++i) {
      const RamResult r = ram_full(toy.phi, toy.z, sftest::randn(rng, 2, 1.5));
      Vec sum = Vec::Zero(2);
      double longest = 0.0;
      for (int j = 0; j < toy.z.count(); ++j) {
        const Vec zj = toy.z.points().col(j);
        const Vec lg = pullback_log(*toy.phi, r.projected, zj);
        const double len = arc_length(pullback_geodesic(toy.phi, r.projected, zj), kDefaultArcSamples).total();
        const Vec iso = lg.norm() > 0 ? Vec(len / lg.norm() * lg) : Vec(Vec::Zero(2));
        sum += r.iso_weights[j] * iso;
        longest = std::max(longest, iso.norm());
      }
      CHECK(sum.norm() <= 1e-3 * longest);
      CHECK(on_simplex(r.iso_weights, 1e-10));
    }
  }
}

TEST_CASE("class aggregation") {
  Vec w(3);
  w << 0.2, 0.5, 0.3;
  const ClassMass ident = classify_aggregate(w, {0, 1, 2});
  CHECK(ident.masses == std::vector<double>{0.2, 0.5, 0.3});
  CHECK(ident.argmax == 1);
  CHECK(classify_aggregate(w, {0, 0, 0}).masses[0] == doctest::Approx(1.0));

  const Vec uniform = Vec::Constant(10, 0.1);
  const ClassMass split = classify_aggregate(uniform, {0, 0, 0, 1, 1, 1, 1, 1, 1, 1});
  CHECK(split.masses[0] == doctest::Approx(0.3));
  CHECK(split.masses[1] == doctest::Approx(0.7));
  CHECK(classify_aggregate(vec2(0.5, 0.5), {0, 1}).argmax == 0);
  CHECK_THROWS_AS(classify_aggregate(w, {0, 1}), Error);
}

TEST_CASE("batch mapping") {
  const Toy toy;
  const Mat pts = sample_star(*toy.model, 24, 8);
  const auto serial = ram_batch(toy.phi, toy.z, pts, {}, 1);
  const auto parallel = ram_batch(toy.phi, toy.z, pts, {}, 3);
  REQUIRE(serial.size() == 24);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].weights == parallel[i].weights);
    const RamResult single = ram_full(toy.phi, toy.z, pts.row(static_cast<Eigen::Index>(i)).transpose());
    CHECK(single.weights == serial[i].weights);
  }
  CHECK(embedded_rank(toy.z) == 2);
  CHECK_THROWS_AS(ram_batch(toy.phi, toy.z, Mat::Zero(3, 3)), Error);
}
