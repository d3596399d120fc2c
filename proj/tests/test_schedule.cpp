#include "dg/schedule.hpp"
#include "dg/rng.hpp"
#include "doctest.h"

using namespace dg;

TEST_CASE("build_schedule: two-step example") {
    auto s = build_schedule(2, 0.1, 0.2);
    CHECK(s.betas == std::vector<double>{0.1, 0.2});
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(s.alpha_bar(2) == doctest::Approx(0.72).epsilon(1e-12));
}

TEST_CASE("build_schedule: single step") {
    auto s = build_schedule(1, 0.1, 0.1);
    CHECK(s.T == 1);
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("build_schedule: alpha_bar equals an independent running product") {
    auto s = build_schedule(10, 1e-4, 0.02);
    double prod = 1.0;
    for (int t = 1; t <= 10; ++t) {
        prod *= 1.0 - s.beta(t);
        CHECK(s.alpha_bar(t) == prod);  // same fold order -> exact
        if (t > 1) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    }
}

TEST_CASE("build_schedule: rejects bad bounds") {
    CHECK_THROWS_AS(build_schedule(0, 0.1, 0.2), ConfigError);
    CHECK_THROWS_AS(build_schedule(5, 0.0, 0.2), ConfigError);
    CHECK_THROWS_AS(build_schedule(5, 0.3, 0.2), ConfigError);
    CHECK_THROWS_AS(build_schedule(5, 0.5, 1.0), ConfigError);
}

TEST_CASE("add_noise: closed-form examples") {
    auto s = build_schedule(2, 0.1, 0.2);  // alpha_bar(2) = 0.72

    Tensor<double> z({1, 1, 1}, {1.0});
    Tensor<double> eps({1, 1, 1}, {1.0});
    auto zt = add_noise(z, 2, eps, s);
    CHECK(zt.v[0] == doctest::Approx(1.3777).epsilon(1e-4));

    Tensor<double> zero({1, 1, 1}, {0.0});
    CHECK(add_noise(z, 2, zero, s).v[0] ==
          doctest::Approx(std::sqrt(0.72)).epsilon(1e-12));
    CHECK(add_noise(zero, 2, eps, s).v[0] ==
          doctest::Approx(std::sqrt(0.28)).epsilon(1e-12));
}

TEST_CASE("add_noise: out-of-range timestep and shape mismatch") {
    auto s = build_schedule(4, 0.1, 0.2);
    Tensor<float> z({2, 2, 2});
    Tensor<float> eps({2, 2, 2});
    CHECK_THROWS_AS(add_noise(z, 0, eps, s), ShapeError);
    CHECK_THROWS_AS(add_noise(z, 5, eps, s), ShapeError);
    CHECK_THROWS_AS(add_noise(z, 1, Tensor<float>({1, 2, 2}), s), ShapeError);
}

TEST_CASE("add_noise linearity holds to floating-point accuracy") {
    auto s = build_schedule(50, 1e-4, 0.02);
    Rng rng(5);
    Tensor<float> z({4, 4, 4}), eps({4, 4, 4}), zero({4, 4, 4});
    for (auto& x : z.v) x = static_cast<float>(rng.normal());
    for (auto& x : eps.v) x = static_cast<float>(rng.normal());
    for (int t : {1, 17, 50}) {
        auto with = add_noise(z, t, eps, s);
        auto without = add_noise(z, t, zero, s);
        const float b = static_cast<float>(std::sqrt(1.0 - s.alpha_bar(t)));
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double want = static_cast<double>(b) * eps.v[i];
            CHECK(with.v[i] - without.v[i] == doctest::Approx(want).epsilon(1e-6));
        }
    }
}
