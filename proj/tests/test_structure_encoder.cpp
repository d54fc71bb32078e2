#include "gradcheck.hpp"
#include "test_support.hpp"

#include "protfuse/structure_encoder.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace protfuse;

namespace {

ProteinStructure scattered(std::size_t length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> coord(0.0, 6.0);
  std::vector<Vec3> ca;
  for (std::size_t i = 0; i < length; ++i) ca.emplace_back(coord(rng), coord(rng), coord(rng));
  return testing::structure_from_ca(testing::random_sequence(length, rng), ca);
}

StructureEncoderConfig small_config(StructureEncoderVariant variant) {
  StructureEncoderConfig cfg;
  cfg.d_struct = 8;
  cfg.num_layers = 2;
  cfg.edge_width = 6;
  cfg.variant = variant;
  return cfg;
}

}  // namespace

TEST_CASE("single-residue graph gives one finite row") {
  for (auto variant : {StructureEncoderVariant::mpnn_style, StructureEncoderVariant::relational_style}) {
    StructureEncoderConfig cfg;
    cfg.variant = variant;
    const auto g = build_residue_graph(testing::structure_from_ca("A", {Vec3(1, 2, 3)}), 16, cfg.edge_width);
    const auto params = init_structure_params<double>(cfg, 1);
    const auto z = encode_structure(g, cfg, params);
    CHECK(z.length() == 1);
    CHECK(z.width() == cfg.d_struct);
    CHECK(z.values.allFinite());
  }
}

TEST_CASE("encoding is a pure function of graph and parameters") {
  StructureEncoderConfig cfg;
  const auto g = build_residue_graph(testing::random_structure(15, 2), 8, cfg.edge_width);
  const auto params = init_structure_params<float>(cfg, 4);
  const auto a = encode_structure(g, cfg, params);
  const auto b = encode_structure(g, cfg, params);
  CHECK((a.values.array() == b.values.array()).all());
  CHECK(a.length() == 15);
}

TEST_CASE("residue permutation permutes output rows") {
  for (auto variant : {StructureEncoderVariant::mpnn_style, StructureEncoderVariant::relational_style}) {
    CAPTURE(to_string(variant));
    StructureEncoderConfig cfg;
    cfg.variant = variant;
    const auto s = scattered(18, 8);
    std::vector<std::size_t> perm(s.length());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(99);
    std::shuffle(perm.begin(), perm.end(), rng);
    ProteinStructure p = s;
    for (std::size_t i = 0; i < perm.size(); ++i) p.residues[i] = s.residues[perm[i]];

    const auto params = init_structure_params<double>(cfg, 3);
    const auto za = encode_structure(build_residue_graph(s, 6, cfg.edge_width), cfg, params);
    const auto zb = encode_structure(build_residue_graph(p, 6, cfg.edge_width), cfg, params);
    double worst = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      worst = std::max(worst, (zb.values.row(static_cast<Eigen::Index>(i)) -
                               za.values.row(static_cast<Eigen::Index>(perm[i])))
                                  .cwiseAbs()
                                  .maxCoeff());
    }
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("global translation leaves the output unchanged") {
  StructureEncoderConfig cfg;
  auto s = scattered(16, 12);
  const auto params = init_structure_params<double>(cfg, 5);
  const auto a = encode_structure(build_residue_graph(s, 8, cfg.edge_width), cfg, params);
  for (auto& r : s.residues) {
    for (Vec3* v : {&r.n, &r.ca, &r.c, &r.o}) *v += Vec3(-31.0, 4.5, 17.25);
  }
  const auto b = encode_structure(build_residue_graph(s, 8, cfg.edge_width), cfg, params);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("padding slots do not change the result") {
  StructureEncoderConfig cfg;
  const auto s = scattered(5, 6);
  const auto params = init_structure_params<double>(cfg, 2);
  const auto exact = encode_structure(build_residue_graph(s, 5, cfg.edge_width), cfg, params);
  const auto padded = encode_structure(build_residue_graph(s, 9, cfg.edge_width), cfg, params);
  CHECK((exact.values - padded.values).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("initialisation is seeded, bounded by fan-in and has zero biases") {
  for (auto variant : {StructureEncoderVariant::mpnn_style, StructureEncoderVariant::relational_style}) {
    StructureEncoderConfig cfg;
    cfg.variant = variant;
    const auto a = init_structure_params<float>(cfg, 10);
    const auto b = init_structure_params<float>(cfg, 10);
    const auto c = init_structure_params<float>(cfg, 11);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    for (const auto& e : a.entries()) {
      if (e.name.ends_with(".weight")) {
        const double bound = std::sqrt(6.0 / static_cast<double>(e.value.rows()));
        CHECK(e.value.cwiseAbs().maxCoeff() <= bound);
      } else if (e.name.ends_with(".bias")) {
        CHECK(e.value.isZero(0.0));
      }
    }
  }
}

TEST_CASE("relational buckets") {
  CHECK(relation_of(0.0) == 0);
  CHECK(relation_of(5.99) == 0);
  CHECK(relation_of(6.0) == 1);
  CHECK(relation_of(11.99) == 1);
  CHECK(relation_of(12.0) == 2);
  CHECK(relation_of(40.0) == 2);
}

TEST_CASE("mismatched parameters are rejected") {
  StructureEncoderConfig cfg;
  auto params = init_structure_params<double>(cfg, 1);
  StructureEncoderConfig wider = cfg;
  wider.d_struct = cfg.d_struct * 2;
  CHECK_THROWS_AS(check_structure_params(wider, params), ShapeError);
  const auto g = build_residue_graph(testing::random_structure(6, 1), 4, cfg.edge_width);
  CHECK_THROWS_AS(encode_structure(g, wider, params), ShapeError);
  // Graph built with a different edge width.
  const auto g8 = build_residue_graph(testing::random_structure(6, 1), 4, cfg.edge_width + 2);
  CHECK_THROWS_AS(encode_structure(g8, cfg, params), ShapeError);

  StructureEncoderConfig bad;
  bad.num_layers = 0;
  CHECK_THROWS(bad.validate());
  CHECK_THROWS(parse_structure_variant("gearnet"));
  CHECK(parse_structure_variant("relational_style") == StructureEncoderVariant::relational_style);
}

TEST_CASE("analytic gradients match central differences") {
  for (auto variant : {StructureEncoderVariant::mpnn_style, StructureEncoderVariant::relational_style}) {
    CAPTURE(to_string(variant));
    const auto cfg = small_config(variant);
    const auto g = build_residue_graph(scattered(6, 14), 4, cfg.edge_width);
    auto params = init_structure_params<double>(cfg, 21);
    testing::jitter(params, 22);
    const Matrix<double> weights = testing::random_matrix<double>(6, cfg.d_struct, 5);

    Tape<double> tape;
    BoundParams<double> bound(tape, params, true);
    const Var<double> loss = testing::weighted_sum(encode_structure(tape, g, cfg, bound), weights);
    tape.backward(loss);
    ParamSet<double> analytic = params.zeros_like();
    bound.accumulate_into(analytic);

    auto f = [&] { return (encode_structure(g, cfg, params).values.array() * weights.array()).sum(); };
    CHECK(loss.value()(0, 0) == doctest::Approx(f()));
    const auto result = testing::check_gradients(params, analytic, f, 12);
    CAPTURE(result.worst_name);
    CHECK(result.checked > 0);
    CHECK(result.worst_relative_error <= 1e-3);
  }
}
