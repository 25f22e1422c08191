#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "wildfire/errors.hpp"

using namespace wildfire;
using namespace wildfire::testing;
namespace nn = wildfire::nn;

TEST_SUITE("nn") {
  TEST_CASE("conv2d matches a direct sum") {
    nn::Tensor<double> x({1, 1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
    nn::Tensor<double> w({1, 1, 3, 3}, std::vector<double>{0, 0, 0, 0, 1, 0, 0, 0, 1});
    nn::Tensor<double> b({1}, std::vector<double>{0.5});
    const auto y = nn::conv2d(nn::constant(x), nn::constant(w), nn::constant(b), 1, 1);
    REQUIRE(y->value.shape() == std::vector<int>{1, 1, 3, 3});
    // out(i,j) = x(i,j) + x(i+1,j+1) + 0.5
    CHECK(y->value[0] == 1 + 5 + 0.5);
    CHECK(y->value[4] == 5 + 9 + 0.5);
    CHECK(y->value[8] == 9 + 0.5);
    const auto s = nn::conv2d(nn::constant(x), nn::constant(w), nn::Var<double>{}, 2, 1);
    CHECK(s->value.shape() == std::vector<int>{1, 1, 2, 2});
  }

  TEST_CASE("op gradients") {
    Rng rng(1);
    Probe probe(2);
    SUBCASE("conv2d") {
      auto x = nn::parameter(random_tensor({2, 3, 6, 6}, rng));
      auto w = nn::parameter(random_tensor({4, 3, 3, 3}, rng));
      auto b = nn::parameter(random_tensor({4}, rng));
      for (int stride : {1, 2}) {
        const auto r = gradcheck({x, w, b}, [&] { return probe(nn::conv2d(x, w, b, stride, 1)); }, 12);
        CHECK(r.max_rel_error < 1e-6);
      }
    }
    SUBCASE("relu, add, concat and upsample") {
      auto a = nn::parameter(random_tensor({2, 2, 4, 4}, rng));
      auto c = nn::parameter(random_tensor({2, 3, 4, 4}, rng));
      auto loss = [&] {
        auto cat = nn::concat_channels(a, c);
        auto up = nn::upsample_nearest(nn::relu(cat), 2);
        return probe(nn::add(up, nn::upsample_nearest(cat, 2)));
      };
      CHECK(gradcheck({a, c}, loss, 16).max_rel_error < 1e-6);
    }
    SUBCASE("window attention") {
      auto q = nn::parameter(random_tensor({2, 4, 4, 4}, rng));
      auto k = nn::parameter(random_tensor({2, 4, 4, 4}, rng));
      auto v = nn::parameter(random_tensor({2, 4, 4, 4}, rng));
      CHECK(gradcheck({q, k, v}, [&] { return probe(nn::window_attention(q, k, v, 2)); }, 16).max_rel_error < 1e-6);
    }
    SUBCASE("LTAE pieces") {
      auto k1 = nn::parameter(random_tensor({2, 4, 2, 2}, rng));
      auto k2 = nn::parameter(random_tensor({2, 4, 2, 2}, rng));
      auto queries = nn::parameter(random_tensor({2, 2}, rng));
      auto f1 = nn::parameter(random_tensor({2, 6, 4, 4}, rng));
      auto f2 = nn::parameter(random_tensor({2, 6, 4, 4}, rng));
      auto loss = [&] {
        auto mask = nn::temporal_softmax<double>({nn::head_scores(k1, queries), nn::head_scores(k2, queries)});
        return probe(nn::temporal_pool<double>({f1, f2}, mask));
      };
      CHECK(gradcheck({k1, k2, queries, f1, f2}, loss, 12).max_rel_error < 1e-6);
    }
    SUBCASE("pooling and offsets") {
      auto x = nn::parameter(random_tensor({2, 3, 4, 4}, rng));
      const auto off = random_tensor({2, 3}, rng);
      CHECK(gradcheck({x}, [&] { return probe(nn::global_avg_pool(nn::add_channel_offsets(x, off))); }, 16)
                .max_rel_error < 1e-6);
    }
  }

  TEST_CASE("temporal softmax normalizes across time") {
    Rng rng(3);
    std::vector<nn::Var<double>> scores;
    for (int t = 0; t < 4; ++t) scores.push_back(nn::constant(random_tensor({2, 3, 2, 2}, rng, 5.0)));
    const auto m = nn::temporal_softmax(scores);
    REQUIRE(m->value.shape() == std::vector<int>{4, 2, 3, 2, 2});
    const std::size_t block = 2 * 3 * 2 * 2;
    for (std::size_t i = 0; i < block; ++i) {
      double sum = 0;
      for (int t = 0; t < 4; ++t) sum += m->value[t * block + i];
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }

  TEST_CASE("no-grad guard skips recording") {
    auto p = nn::parameter(nn::Tensor<double>({1, 1, 2, 2}, 1.0));
    {
      nn::NoGradGuard g;
      CHECK_FALSE(nn::relu(p)->requires_grad);
    }
    CHECK(nn::relu(p)->requires_grad);
  }

  TEST_CASE("shape errors") {
    auto a = nn::constant(nn::Tensor<double>({1, 2, 4, 4}));
    auto b = nn::constant(nn::Tensor<double>({1, 2, 2, 2}));
    CHECK_THROWS_AS(nn::add(a, b), ShapeError);
    CHECK_THROWS_AS(nn::window_attention(a, a, a, 3), ShapeError);
    CHECK_THROWS_AS(nn::Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  }
}
