#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <vector>

#include "doctest.h"
#include "support/support.hpp"
#include "vpoc/errors.hpp"
#include "vpoc/nets.hpp"
#include "vpoc/rng.hpp"

using namespace vpoc;
using doctest::Approx;

namespace {

nets::Tensor<double> random_tensor(std::vector<int> shape, rng::Stream& rs,
                                   double lo = -1.0, double hi = 1.0) {
  nets::Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rs.uniform(lo, hi);
  return t;
}

// Checks d(objective)/d(x) for every element of `x` against central
// differences of `objective`.
void check_grad_block(const std::function<double()>& objective,
                      std::vector<double>& x, const std::vector<double>& grad,
                      double h, double tol, const char* label) {
  REQUIRE(x.size() == grad.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fd = testsup::central_diff(objective, x[i], h);
    INFO(label << " element " << i);
    CHECK(testsup::rel_err(fd, grad[i]) < tol);
  }
}

}  // namespace

TEST_SUITE("nets") {

TEST_CASE("spec construction produces the documented shapes") {
  nets::TrunkSpec conv;
  conv.conv = true;
  conv.in_c = 3;
  conv.in_h = 64;
  conv.in_w = 64;
  const auto spec = nets::make_net_spec(conv, {200, 200}, 3, 2,
                                        nets::Activation::Tanh, 0.15);
  REQUIRE(spec.layers.size() == 8);  // 5 conv + 2 hidden + output
  int h = 64;
  for (int i = 0; i < 5; ++i) {
    CHECK(spec.layers[i].kind == nets::LayerKind::Conv);
    CHECK(spec.layers[i].in_h == h);
    h = (h + 1) / 2;
    CHECK(spec.layers[i].out_h == h);
    CHECK(spec.layers[i].out_c == 8);
  }
  CHECK(h == 2);
  CHECK(spec.layers[5].kind == nets::LayerKind::Dense);
  CHECK(spec.layers[5].concat_aux);
  CHECK(spec.layers[5].in_dim == 8 * 2 * 2 + 3);
  CHECK(spec.layers[7].out_dim == 2);
  CHECK(spec.layers[7].final_init);
  CHECK(spec.layers[7].out_scale == 0.15);

  nets::TrunkSpec flat;
  flat.feat_dim = 15;
  const auto fspec = nets::make_net_spec(flat, {200, 200}, 5, 1,
                                         nets::Activation::Linear, 1.0);
  REQUIRE(fspec.layers.size() == 3);
  CHECK(fspec.layers[0].in_dim == 20);
  CHECK(fspec.layers[0].concat_aux);
  CHECK(fspec.layers[2].out_dim == 1);

  // Odd sizes round up at every halving.
  nets::TrunkSpec odd = conv;
  odd.in_h = 7;
  odd.in_w = 7;
  odd.conv_layers = 2;
  const auto ospec = nets::make_net_spec(odd, {}, 0, 1,
                                         nets::Activation::Linear, 1.0);
  CHECK(ospec.layers[0].out_h == 4);
  CHECK(ospec.layers[1].out_h == 2);
}

TEST_CASE("initialization honors the fan-in and output ranges") {
  nets::TrunkSpec flat;
  flat.feat_dim = 40;
  const auto spec = nets::make_net_spec(flat, {30}, 0, 2,
                                        nets::Activation::Tanh, 1.0);
  rng::Stream rs(21);
  const auto net = nets::build_network<double>(spec, rs);
  REQUIRE(net.params.size() == 4);  // 2 layers x (weight, bias)
  const double bound0 = 1.0 / std::sqrt(40.0);
  for (double w : net.params[0].data) {
    CHECK(w >= -bound0);
    CHECK(w <= bound0);
  }
  bool any_large = false;
  for (double w : net.params[0].data) any_large |= std::abs(w) > 3e-3;
  CHECK(any_large);
  for (double w : net.params[2].data) {
    CHECK(w >= -3e-3);
    CHECK(w <= 3e-3);
  }
}

TEST_CASE("dense gradients match finite differences") {
  nets::TrunkSpec flat;
  flat.feat_dim = 6;
  const auto spec = nets::make_net_spec(flat, {7}, 2, 3,
                                        nets::Activation::Tanh, 0.15);
  rng::Stream rs(31);
  auto net = nets::build_network<double>(spec, rs);
  auto trunk_in = random_tensor({6}, rs);
  auto aux_in = random_tensor({2}, rs);

  // Objective: half the squared norm of the output.
  const auto objective = [&]() {
    const auto y = nets::forward(net, trunk_in, aux_in);
    double s = 0.0;
    for (double v : y.data) s += v * v;
    return 0.5 * s;
  };

  nets::ForwardCache<double> cache;
  const auto y = nets::forward(net, trunk_in, aux_in, &cache);
  auto grads = nets::Gradients<double>::zeros_like(net);
  nets::backward(net, cache, y, grads);

  const double h = 1e-5, tol = 1e-6;
  for (std::size_t p = 0; p < net.params.size(); ++p)
    check_grad_block(objective, net.params[p].data, grads.params[p].data, h,
                     tol, "dense param");
  check_grad_block(objective, trunk_in.data, grads.trunk_in.data, h, tol,
                   "dense trunk input");
  check_grad_block(objective, aux_in.data, grads.aux_in.data, h, tol,
                   "dense aux input");
}

TEST_CASE("conv gradients match finite differences") {
  nets::TrunkSpec conv;
  conv.conv = true;
  conv.in_c = 2;
  conv.in_h = 6;
  conv.in_w = 6;
  conv.conv_channels = 3;
  conv.conv_layers = 2;
  const auto spec = nets::make_net_spec(conv, {4}, 2, 2,
                                        nets::Activation::Tanh, 1.0);
  rng::Stream rs(37);
  auto net = nets::build_network<double>(spec, rs);
  auto trunk_in = random_tensor({2, 6, 6}, rs);
  auto aux_in = random_tensor({2}, rs);

  const auto objective = [&]() {
    const auto y = nets::forward(net, trunk_in, aux_in);
    double s = 0.0;
    for (double v : y.data) s += v * v;
    return 0.5 * s;
  };

  nets::ForwardCache<double> cache;
  const auto y = nets::forward(net, trunk_in, aux_in, &cache);
  auto grads = nets::Gradients<double>::zeros_like(net);
  nets::backward(net, cache, y, grads);

  const double h = 1e-5, tol = 1e-6;
  for (std::size_t p = 0; p < net.params.size(); ++p)
    check_grad_block(objective, net.params[p].data, grads.params[p].data, h,
                     tol, "conv param");
  check_grad_block(objective, trunk_in.data, grads.trunk_in.data, h, tol,
                   "conv trunk input");
}

TEST_CASE("backward accumulates rather than overwrites") {
  nets::TrunkSpec flat;
  flat.feat_dim = 3;
  const auto spec =
      nets::make_net_spec(flat, {}, 0, 1, nets::Activation::Linear, 1.0);
  rng::Stream rs(5);
  auto net = nets::build_network<double>(spec, rs);
  auto x = random_tensor({3}, rs);

  nets::ForwardCache<double> cache;
  nets::forward(net, x, {}, &cache);
  nets::Tensor<double> ones({1});
  ones.data[0] = 1.0;

  auto once = nets::Gradients<double>::zeros_like(net);
  nets::backward(net, cache, ones, once);
  auto twice = nets::Gradients<double>::zeros_like(net);
  nets::backward(net, cache, ones, twice);
  nets::backward(net, cache, ones, twice);
  for (std::size_t p = 0; p < once.params.size(); ++p)
    for (std::size_t i = 0; i < once.params[p].data.size(); ++i)
      CHECK(twice.params[p].data[i] ==
            Approx(2.0 * once.params[p].data[i]).epsilon(1e-12));
}

TEST_CASE("weight decay touches weights only") {
  nets::TrunkSpec flat;
  flat.feat_dim = 4;
  const auto spec = nets::make_net_spec(flat, {5}, 0, 2,
                                        nets::Activation::Tanh, 1.0);
  rng::Stream rs(13);
  auto net = nets::build_network<double>(spec, rs);
  auto grads = nets::Gradients<double>::zeros_like(net);
  nets::add_weight_decay(grads, net, 0.01);
  // Tensor order is weight, bias per layer.
  for (std::size_t p = 0; p < grads.params.size(); ++p) {
    for (std::size_t i = 0; i < grads.params[p].data.size(); ++i) {
      if (p % 2 == 0)
        CHECK(grads.params[p].data[i] ==
              Approx(0.01 * net.params[p].data[i]).epsilon(1e-12));
      else
        CHECK(grads.params[p].data[i] == 0.0);
    }
  }
}

TEST_CASE("adam matches the scalar recurrence") {
  nets::TrunkSpec flat;
  flat.feat_dim = 2;
  const auto spec = nets::make_net_spec(flat, {3}, 0, 1,
                                        nets::Activation::Tanh, 1.0);
  rng::Stream rs(41);
  auto net = nets::build_network<double>(spec, rs);
  auto st = nets::AdamState<double>::init_like(net, 1e-3);

  std::vector<testsup::ScalarAdam> oracle;
  std::vector<double> w;
  for (const auto& p : net.params)
    for (double v : p.data) {
      w.push_back(v);
      oracle.push_back({st.lr, st.beta1, st.beta2, st.eps});
    }

  rng::Stream grs(42);
  for (int iter = 0; iter < 200; ++iter) {
    auto grads = nets::Gradients<double>::zeros_like(net);
    for (auto& g : grads.params)
      for (auto& v : g.data) v = grs.uniform(-1.0, 1.0);
    std::size_t flat_i = 0;
    std::vector<double> gflat;
    for (const auto& g : grads.params)
      for (double v : g.data) gflat.push_back(v);
    nets::adam_step(st, net.params, grads.params);
    for (const auto& p : net.params)
      for (double v : p.data) {
        w[flat_i] = oracle[flat_i].step(w[flat_i], gflat[flat_i]);
        CHECK(std::abs(v - w[flat_i]) < 1e-10);
        ++flat_i;
      }
  }
  CHECK(st.step == 200);
}

TEST_CASE("adam rejects non-finite gradients without corrupting state") {
  nets::TrunkSpec flat;
  flat.feat_dim = 2;
  const auto spec =
      nets::make_net_spec(flat, {}, 0, 1, nets::Activation::Linear, 1.0);
  rng::Stream rs(43);
  auto net = nets::build_network<double>(spec, rs);
  auto st = nets::AdamState<double>::init_like(net, 1e-3);
  const auto before = net.params;

  auto grads = nets::Gradients<double>::zeros_like(net);
  grads.params[0].data[0] = std::nan("");
  CHECK_THROWS_AS(nets::adam_step(st, net.params, grads.params),
                  NumericsError);
  CHECK(st.step == 0);
  for (std::size_t p = 0; p < net.params.size(); ++p)
    CHECK(net.params[p].data == before[p].data);
}

TEST_CASE("polyak blending matches the closed form") {
  nets::TrunkSpec flat;
  flat.feat_dim = 3;
  const auto spec = nets::make_net_spec(flat, {4}, 0, 2,
                                        nets::Activation::Tanh, 1.0);
  rng::Stream rs1(51), rs2(52);
  const auto source = nets::build_network<float>(spec, rs1);

  for (double tau : {0.0, 1e-3, 1.0}) {
    auto target = nets::build_network<float>(spec, rs2);
    const auto before = target.params;
    nets::polyak_update(target, source, tau);
    for (std::size_t p = 0; p < target.params.size(); ++p)
      for (std::size_t i = 0; i < target.params[p].data.size(); ++i) {
        const float t1 = static_cast<float>(1.0 - tau);
        const float t2 = static_cast<float>(tau);
        const float expect =
            t1 * before[p].data[i] + t2 * source.params[p].data[i];
        CHECK(target.params[p].data[i] == expect);
      }
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  testsup::TempDir tmp("ckpt");
  nets::Checkpoint ck;
  ck.metadata = R"({"kind":"test","note":"r"})";
  rng::Stream rs(61);
  nets::Tensor<float> t1({3, 4});
  for (auto& v : t1.data) v = static_cast<float>(rs.uniform(-10, 10));
  nets::Tensor<float> t2({2, 2, 5});
  for (auto& v : t2.data) v = static_cast<float>(rs.normal());
  t2.data[0] = 0.0f;
  t2.data[1] = -0.0f;
  ck.tensors = {t1, t2};

  const auto path = tmp.path() / "net.ckpt";
  nets::save_checkpoint(path, ck);
  const auto back = nets::load_checkpoint(path);
  CHECK(back.metadata == ck.metadata);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[0].shape == t1.shape);
  CHECK(back.tensors[1].shape == t2.shape);
  for (std::size_t i = 0; i < t1.data.size(); ++i)
    CHECK(std::memcmp(&back.tensors[0].data[i], &t1.data[i], 4) == 0);
  for (std::size_t i = 0; i < t2.data.size(); ++i)
    CHECK(std::memcmp(&back.tensors[1].data[i], &t2.data[i], 4) == 0);
}

TEST_CASE("corrupted checkpoints are rejected with offsets") {
  testsup::TempDir tmp("ckpt-bad");
  nets::Checkpoint ck;
  ck.metadata = "{}";
  nets::Tensor<float> t({2});
  t.data = {1.0f, 2.0f};
  ck.tensors = {t};
  const auto path = tmp.path() / "net.ckpt";
  nets::save_checkpoint(path, ck);

  auto bytes = testsup::read_file(path);

  // Bad magic.
  {
    auto bad = bytes;
    bad[0] = 'X';
    const auto p2 = tmp.path() / "bad_magic.ckpt";
    std::ofstream(p2, std::ios::binary) << bad;
    CHECK_THROWS_AS(nets::load_checkpoint(p2), FormatError);
  }
  // Truncated payload.
  {
    const auto p2 = tmp.path() / "trunc.ckpt";
    std::ofstream(p2, std::ios::binary)
        << bytes.substr(0, bytes.size() - 3);
    CHECK_THROWS_AS(nets::load_checkpoint(p2), FormatError);
  }
  // Trailing garbage.
  {
    const auto p2 = tmp.path() / "trail.ckpt";
    std::ofstream(p2, std::ios::binary) << bytes << "zz";
    try {
      nets::load_checkpoint(p2);
      FAIL("trailing bytes accepted");
    } catch (const FormatError& e) {
      CHECK(e.offset == bytes.size());
    }
  }
}

TEST_CASE("signatures separate architectures") {
  nets::TrunkSpec flat;
  flat.feat_dim = 15;
  const auto a = nets::make_net_spec(flat, {200, 200}, 3, 2,
                                     nets::Activation::Tanh, 0.15);
  const auto b = nets::make_net_spec(flat, {200, 201}, 3, 2,
                                     nets::Activation::Tanh, 0.15);
  const auto c = nets::make_net_spec(flat, {200, 200}, 4, 2,
                                     nets::Activation::Tanh, 0.15);
  CHECK(a.signature() == nets::make_net_spec(flat, {200, 200}, 3, 2,
                                             nets::Activation::Tanh, 0.15)
                             .signature());
  CHECK(a.signature() != b.signature());
  CHECK(a.signature() != c.signature());
}

}  // TEST_SUITE
