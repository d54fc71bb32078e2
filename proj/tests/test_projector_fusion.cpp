#include "gradcheck.hpp"

#include "protfuse/model.hpp"
#include "protfuse/projector.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace protfuse;
using testing::random_matrix;

namespace {

ProjectorConfig small() { return ProjectorConfig{6, 10, 7, 2}; }

}  // namespace

TEST_CASE("zero features with zero biases project to zero") {
  for (int depth : {1, 2, 3}) {
    ProjectorConfig cfg = small();
    cfg.depth = depth;
    const auto params = init_projector_params<double>(cfg, 1, "seq");
    ResidueFeatures<double> z{Matrix<double>::Zero(5, cfg.d_in)};
    const Matrix<double> h = project_seq(z, cfg, params);
    CHECK(h.rows() == 5);
    CHECK(h.cols() == cfg.d_model);
    CHECK(h.isZero(0.0));
  }
}

TEST_CASE("projection shape and width check") {
  const ProjectorConfig cfg = small();
  const auto params = init_projector_params<double>(cfg, 1, "struct");
  ResidueFeatures<double> z{random_matrix<double>(9, cfg.d_in, 2)};
  const Matrix<double> h = project_struct(z, cfg, params);
  CHECK(h.rows() == 9);
  CHECK(h.cols() == cfg.d_model);
  ResidueFeatures<double> wrong{random_matrix<double>(9, cfg.d_in + 1, 2)};
  CHECK_THROWS_AS(project_struct(wrong, cfg, params), ShapeError);
  CHECK_THROWS_AS(project_seq(wrong, cfg, params), ShapeError);
}

TEST_CASE("projection is row-independent and position-wise") {
  const ProjectorConfig cfg = small();
  auto params = init_projector_params<double>(cfg, 3, "seq");
  testing::jitter(params, 4);
  const Matrix<double> z = random_matrix<double>(8, cfg.d_in, 5);
  const Matrix<double> all = project_seq(ResidueFeatures<double>{z}, cfg, params);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const Matrix<double> one = project_seq(ResidueFeatures<double>{z.row(r)}, cfg, params);
    CHECK((one.row(0) - all.row(r)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  std::vector<Eigen::Index> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[1], perm[5]);
  Matrix<double> zp(8, cfg.d_in);
  for (Eigen::Index r = 0; r < 8; ++r) zp.row(r) = z.row(perm[static_cast<std::size_t>(r)]);
  const Matrix<double> hp = project_seq(ResidueFeatures<double>{zp}, cfg, params);
  for (Eigen::Index r = 0; r < 8; ++r) {
    CHECK((hp.row(r) - all.row(perm[static_cast<std::size_t>(r)])).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("the two projectors have their own parameters") {
  ModelConfig cfg;
  const auto params = init_model_params<float>(cfg, 7);
  const auto& seq = params[Partition::proj_seq];
  const auto& st = params[Partition::proj_struct];
  REQUIRE(seq.size() == st.size());
  bool differs = false;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto& a = seq.entries()[i].value;
    const auto& b = st.entries()[i].value;
    if (a.rows() != b.rows() || a.cols() != b.cols() || (a.array() != b.array()).any()) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("add fusion is the element-wise sum") {
  const Matrix<double> hs = random_matrix<double>(7, 12, 10);
  const Matrix<double> ht = random_matrix<double>(7, 12, 11);
  const auto fused = fuse<double>(hs, ht, FusionMode::add);
  Matrix<double> oracle(7, 12);
  for (Eigen::Index r = 0; r < 7; ++r) {
    for (Eigen::Index c = 0; c < 12; ++c) oracle(r, c) = hs(r, c) + ht(r, c);
  }
  CHECK((fused.values.array() == oracle.array()).all());
  CHECK(fused.length() == 7);
  CHECK(fused.has_sequence);
  CHECK(fused.has_structure);
  // Commutative, exactly.
  const auto swapped = fuse<double>(ht, hs, FusionMode::add);
  CHECK((swapped.values.array() == fused.values.array()).all());
  // Zero structure is the identity.
  const auto ident = fuse<double>(hs, Matrix<double>(Matrix<double>::Zero(7, 12)), FusionMode::add);
  CHECK((ident.values.array() == hs.array()).all());
}

TEST_CASE("concatenation doubles the token count, structure rows first") {
  for (Eigen::Index L : {1, 4, 13}) {
    const Matrix<double> hs = random_matrix<double>(L, 6, 20 + static_cast<std::uint64_t>(L));
    const Matrix<double> ht = random_matrix<double>(L, 6, 40 + static_cast<std::uint64_t>(L));
    const auto add = fuse<double>(hs, ht, FusionMode::add);
    const auto cat = fuse<double>(hs, ht, FusionMode::concat_tokens);
    CHECK(add.length() == L);
    CHECK(cat.length() == 2 * L);
    CHECK((cat.values.topRows(L).array() == ht.array()).all());
    CHECK((cat.values.bottomRows(L).array() == hs.array()).all());
  }
  ModelConfig cfg;
  CHECK(cfg.protein_tokens(9) == 9);
  cfg.fusion = FusionMode::concat_tokens;
  CHECK(cfg.protein_tokens(9) == 18);
}

TEST_CASE("single-modality modes pass one input through") {
  const Matrix<double> hs = random_matrix<double>(5, 6, 1);
  const Matrix<double> ht = random_matrix<double>(5, 6, 2);
  const auto so = fuse<double>(hs, std::nullopt, FusionMode::seq_only);
  CHECK((so.values.array() == hs.array()).all());
  CHECK(so.has_sequence);
  CHECK_FALSE(so.has_structure);
  const auto to = fuse<double>(std::nullopt, ht, FusionMode::struct_only);
  CHECK((to.values.array() == ht.array()).all());
  CHECK_FALSE(to.has_sequence);
  CHECK(to.has_structure);
}

TEST_CASE("fusion errors") {
  const Matrix<double> a = random_matrix<double>(5, 6, 1);
  const Matrix<double> b = random_matrix<double>(4, 6, 2);
  CHECK_THROWS_AS(fuse<double>(a, b, FusionMode::add), ShapeError);
  CHECK_THROWS_AS(fuse<double>(a, b, FusionMode::concat_tokens), ShapeError);
  CHECK_THROWS_AS(fuse<double>(a, std::nullopt, FusionMode::add), std::invalid_argument);
  CHECK_THROWS_AS(fuse<double>(std::nullopt, a, FusionMode::seq_only), std::invalid_argument);
  CHECK_THROWS_AS(fuse<double>(a, std::nullopt, FusionMode::struct_only), std::invalid_argument);
  CHECK_THROWS_AS(parse_fusion_mode("average"), ConfigError);
  for (auto m : {FusionMode::add, FusionMode::concat_tokens, FusionMode::seq_only, FusionMode::struct_only}) {
    CHECK(parse_fusion_mode(to_string(m)) == m);
  }
}

TEST_CASE("analytic gradients match central differences") {
  for (int depth : {1, 2, 3}) {
    CAPTURE(depth);
    ProjectorConfig cfg = small();
    cfg.depth = depth;
    auto params = init_projector_params<double>(cfg, 50, "seq");
    testing::jitter(params, 51);
    const Matrix<double> z = random_matrix<double>(4, cfg.d_in, 52);
    const Matrix<double> w = random_matrix<double>(4, cfg.d_model, 53);

    Tape<double> tape;
    BoundParams<double> bound(tape, params, true);
    const Var<double> input = tape.variable(z);
    const Var<double> loss = testing::weighted_sum(project(input, cfg, bound), w);
    tape.backward(loss);
    ParamSet<double> analytic = params.zeros_like();
    bound.accumulate_into(analytic);
    auto f = [&] { return (project_seq(ResidueFeatures<double>{z}, cfg, params).array() * w.array()).sum(); };
    const auto result = testing::check_gradients(params, analytic, f);
    CAPTURE(result.worst_name);
    CHECK(result.worst_relative_error <= 1e-3);

    // Input gradient too: it is what carries the signal back to the encoders.
    ParamSet<double> zin;
    zin.add("z", z);
    ParamSet<double> zgrad;
    zgrad.add("z", input.grad());
    auto fz = [&] {
      return (project_seq(ResidueFeatures<double>{zin.at("z")}, cfg, params).array() * w.array()).sum();
    };
    const auto rz = testing::check_gradients(zin, zgrad, fz, 24);
    CHECK(rz.worst_relative_error <= 1e-3);
  }
}
