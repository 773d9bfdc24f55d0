#include <doctest.h>

#include <cmath>

#include "mvmol/model.hpp"
#include "test_fixtures.hpp"

using namespace mvmol;
using mvmol_test::TinyWorld;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape == b.shape);
  double worst = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, std::fabs(double(a.data[i]) - double(b.data[i])));
  return worst;
}

Molecule permuted(const Molecule& m, const std::vector<int>& perm) {
  Molecule p;
  p.id = m.id + ":perm";
  p.atoms.resize(m.atoms.size());
  p.coords.resize(m.coords.size());
  for (size_t i = 0; i < m.atoms.size(); ++i) {
    p.atoms[static_cast<size_t>(perm[i])] = m.atoms[i];
    p.coords[static_cast<size_t>(perm[i])] = m.coords[i];
  }
  for (const auto& b : m.bonds)
    p.bonds.push_back({perm[static_cast<size_t>(b[0])], perm[static_cast<size_t>(b[1])]});
  return p;
}

Molecule rotated(const Molecule& m, double yaw, double pitch) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  Molecule r = m;
  r.id = m.id + ":rot";
  for (auto& c : r.coords) {
    const double x = c[0], y = c[1], z = c[2];
    const double x1 = cy * x - sy * y, y1 = sy * x + cy * y;  // about z
    c = {cp * x1 + sp * z, y1, -sp * x1 + cp * z};            // about y
  }
  return r;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("distance kernel is 1 on the diagonal") {
  TinyWorld w;
  DistanceMatrix dm = distances(w.mol(0));
  TensorT<float> k = distance_kernel<float>(dm, 1.0);
  for (int i = 0; i < dm.n; ++i) CHECK(k.at(i, i) == doctest::Approx(1.0));
  // monotone in distance
  if (dm.n >= 2) CHECK(k.at(0, 1) < 1.0f);
}

TEST_CASE("fixed output shapes independent of molecule size and text length") {
  TinyWorld w(8);
  auto model = w.make_model<float>();
  Molecule small;
  small.id = "small4";
  small.atoms = {0, 1, 2, 3};
  small.bonds = {{0, 1}, {1, 2}, {2, 3}};
  Rng rng(5);
  for (int i = 0; i < 4; ++i) small.coords.push_back({rng.normal(), rng.normal(), rng.normal()});
  Molecule big;
  big.id = "big15";
  for (int i = 0; i < 15; ++i) {
    big.atoms.push_back(i % w.cfg.atom_alphabet);
    big.coords.push_back({rng.normal(), rng.normal(), rng.normal()});
    if (i > 0) big.bonds.push_back({i - 1, i});
  }

  Tape tape;
  Ctx<float> c(tape);
  auto zs_small = model.encoder.forward_struct(c, small);
  auto zs_big = model.encoder.forward_struct(c, big);
  CHECK(zs_small.query_states.val().shape == std::vector<int>{w.cfg.n_queries, w.cfg.d_model});
  CHECK(zs_big.query_states.val().shape == std::vector<int>{w.cfg.n_queries, w.cfg.d_model});

  TokenSequence t = w.enc(w.view_text(0, ViewKind::Chemical));
  auto zt = model.encoder.forward_text(c, t);
  CHECK(zt.text_states.val().shape == std::vector<int>{t.length(), w.cfg.d_model});

  auto fused_short = model.encoder.forward_fused(c, small, w.enc("chemical"));
  auto fused_long = model.encoder.forward_fused(c, small, t);
  CHECK(fused_short.query_states.val().shape == std::vector<int>{w.cfg.n_queries, w.cfg.d_model});
  CHECK(fused_long.query_states.val().shape == std::vector<int>{w.cfg.n_queries, w.cfg.d_model});
}

TEST_CASE("encode_structure is permutation equivariant, z^(s) invariant") {
  TinyWorld w;
  auto model = w.make_model<float>();
  const Molecule& m = w.mol(1);
  std::vector<int> perm(static_cast<size_t>(m.atom_count()));
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  Rng(9).shuffle(perm);
  Molecule pm = permuted(m, perm);

  Tape tape;
  Ctx<float> c(tape);
  Tensor za = model.encoder.encode_structure(c, m).val();
  Tensor zap = model.encoder.encode_structure(c, pm).val();
  double worst = 0.0;
  for (int i = 0; i < m.atom_count(); ++i)
    for (int j = 0; j < w.cfg.d_model; ++j)
      worst = std::max(worst, std::fabs(double(za.at(i, j)) -
                                        double(zap.at(perm[static_cast<size_t>(i)], j))));
  CHECK(worst <= 1e-5);

  Tensor zs = model.encoder.forward_struct(c, m).query_states.val();
  Tensor zsp = model.encoder.forward_struct(c, pm).query_states.val();
  CHECK(max_abs_diff(zs, zsp) <= 1e-5);
}

TEST_CASE("z^(s) is invariant under rigid rotation") {
  TinyWorld w;
  auto model = w.make_model<float>();
  const Molecule& m = w.mol(2);
  Molecule rm = rotated(m, 0.83, -1.21);
  Tape tape;
  Ctx<float> c(tape);
  Tensor zs = model.encoder.forward_struct(c, m).query_states.val();
  Tensor zsr = model.encoder.forward_struct(c, rm).query_states.val();
  CHECK(max_abs_diff(zs, zsr) <= 1e-5);
}

TEST_CASE("padding keys are masked out of text attention") {
  TinyWorld w;
  auto model = w.make_model<float>();
  TokenSequence t = w.enc(w.view_text(0, ViewKind::Physical));
  TokenSequence padded = t;
  padded.ids.push_back(kPad);
  padded.ids.push_back(kPad);

  Tape tape;
  Ctx<float> c(tape);
  Tensor a = model.encoder.forward_text(c, t).text_states.val();
  Tensor b = model.encoder.forward_text(c, padded).text_states.val();
  for (int i = 0; i < t.length(); ++i)
    for (int j = 0; j < w.cfg.d_model; ++j)
      CHECK(std::fabs(double(a.at(i, j)) - double(b.at(i, j))) <= 1e-6);
}

TEST_CASE("different texts produce different [CLS] states") {
  TinyWorld w;
  auto model = w.make_model<float>();
  Tape tape;
  Ctx<float> c(tape);
  Tensor a = model.encoder.forward_text(c, w.enc(w.view_text(0, ViewKind::Chemical))).text_states.val();
  Tensor b = model.encoder.forward_text(c, w.enc(w.view_text(1, ViewKind::Chemical))).text_states.val();
  double diff = 0.0;
  for (int j = 0; j < w.cfg.d_model; ++j)
    diff = std::max(diff, std::fabs(double(a.at(0, j)) - double(b.at(0, j))));
  CHECK(diff > 1e-4);
}

TEST_CASE("fused output depends on the prompt") {
  TinyWorld w;
  auto model = w.make_model<float>();
  Tape tape;
  Ctx<float> c(tape);
  Tensor za = model.encoder.forward_fused(c, w.mol(0), w.enc("chemical view")).query_states.val();
  Tensor zb = model.encoder.forward_fused(c, w.mol(0), w.enc("physical view")).query_states.val();
  CHECK(max_abs_diff(za, zb) > 1e-3);
}

TEST_CASE("struct-only output ignores all text state") {
  TinyWorld w;
  auto model = w.make_model<float>();
  Tensor before;
  {
    Tape tape;
    Ctx<float> c(tape);
    before = model.encoder.forward_struct(c, w.mol(3)).query_states.val();
  }
  {
    Tape tape;
    Ctx<float> c(tape);
    (void)model.encoder.forward_text(c, w.enc("pharma : halflife odd"));
    (void)model.encoder.forward_text(c, w.enc("ontology chemical ring family 2"));
  }
  Tape tape;
  Ctx<float> c(tape);
  Tensor after = model.encoder.forward_struct(c, w.mol(3)).query_states.val();
  CHECK(before.data == after.data);  // bit identical
}

TEST_CASE("masking all text keys reduces the fused query path to struct-only") {
  TinyWorld w;
  auto model = w.make_model<float>();
  Tape tape;
  Ctx<float> c(tape);
  Tensor zs = model.encoder.forward_struct(c, w.mol(1)).query_states.val();
  Tensor masked = model.encoder
                      .forward_fused(c, w.mol(1), w.enc(w.view_text(1, ViewKind::Chemical)),
                                     /*mask_text_keys=*/true)
                      .query_states.val();
  CHECK(max_abs_diff(zs, masked) <= 1e-6);
}

TEST_CASE("gradients reach query embeddings, structure encoder and text embeddings") {
  TinyWorld w;
  auto model = w.make_model<float>();
  model.zero_grads();
  Tape tape;
  Ctx<float> c(tape);
  auto fused = model.encoder.forward_fused(c, w.mol(0), w.enc(w.view_text(0, ViewKind::Chemical)));
  Var loss = add(sum_all(fused.query_states), sum_all(fused.text_states));
  tape.backward(loss);
  auto norm = [](const Tensor& t) {
    double s = 0;
    for (float g : t.grad) s += double(g) * double(g);
    return std::sqrt(s);
  };
  CHECK(norm(model.encoder.query_embed) > 0.0);
  CHECK(norm(model.encoder.atom_embed) > 0.0);
  CHECK(norm(model.encoder.token_embed) > 0.0);
  CHECK(norm(model.encoder.pos_embed) > 0.0);
}

TEST_CASE("capacity and contract errors") {
  TinyWorld w;
  auto model = w.make_model<float>();
  Tape tape;
  Ctx<float> c(tape);

  Molecule too_big;
  too_big.id = "huge";
  Rng rng(1);
  for (int i = 0; i < w.cfg.max_atoms + 1; ++i) {
    too_big.atoms.push_back(0);
    too_big.coords.push_back({rng.normal(), rng.normal(), rng.normal()});
    if (i > 0) too_big.bonds.push_back({i - 1, i});
  }
  CHECK_THROWS_AS(model.encoder.forward_struct(c, too_big), Error);

  TokenSequence no_cls;
  no_cls.ids = {kNumSpecial};
  CHECK_THROWS_AS(model.encoder.forward_text(c, no_cls), Error);

  TokenSequence overlong;
  overlong.ids.push_back(kCls);
  for (int i = 0; i < w.cfg.max_text_len; ++i) overlong.ids.push_back(kNumSpecial);
  CHECK_THROWS_AS(model.encoder.forward_text(c, overlong), Error);
}

}  // TEST_SUITE
