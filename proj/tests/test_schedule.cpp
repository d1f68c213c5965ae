#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crfkgc/schedule.hpp"

using namespace crfkgc;

TEST_CASE("alpha_bar follows the closed-form linear-beta integral") {
    DiffusionSchedule s;
    // integral of beta over [0,1] = (beta_min + beta_max)/2 = 10.05/...
    CHECK(s.alpha_bar(1.0) == Catch::Approx(std::exp(-5.025)).epsilon(1e-12));
    CHECK(s.alpha_bar(1.0) == Catch::Approx(6.5716e-3).epsilon(1e-4));
    // t -> 0 limit: no signal decay
    CHECK(s.alpha_bar(1e-9) == Catch::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("vp identity: alpha_bar^2 plus marginal variance is exactly 1") {
    DiffusionSchedule s;
    for (double t : s.t_grid()) {
        const double a = s.alpha_bar(t);
        const double v = s.marginal_std(t) * s.marginal_std(t);
        CHECK(a * a + v == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("alpha_bar strictly decreases along the grid") {
    DiffusionSchedule s;
    auto ts = s.t_grid();
    REQUIRE(ts.size() == s.steps + 1);
    CHECK(ts.front() == Catch::Approx(s.t_min));
    CHECK(ts.back() == Catch::Approx(1.0));
    for (std::size_t i = 1; i < ts.size(); ++i) {
        CHECK(ts[i] > ts[i - 1]);
        CHECK(s.alpha_bar(ts[i]) < s.alpha_bar(ts[i - 1]));
    }
}

TEST_CASE("beta interpolates linearly") {
    DiffusionSchedule s;
    CHECK(s.beta(0.0) == Catch::Approx(0.1));
    CHECK(s.beta(1.0) == Catch::Approx(20.0));
    CHECK(s.beta(0.5) == Catch::Approx(10.05));
}

TEST_CASE("schedule validation rejects bad parameters") {
    CHECK_THROWS_AS(DiffusionSchedule(DiffusionKind::Sde, 2.0, 1.0, 10), Error);
    CHECK_THROWS_AS(DiffusionSchedule(DiffusionKind::Sde, 0.1, 20.0, 0), Error);
    CHECK_THROWS_AS(DiffusionSchedule(DiffusionKind::Sde, -0.1, 20.0, 10), Error);
}

TEST_CASE("kind parsing round-trips and rejects unknowns") {
    for (auto k : {DiffusionKind::Sde, DiffusionKind::Ddpm, DiffusionKind::Ddim})
        CHECK(parse_diffusion_kind(to_string(k)) == k);
    CHECK_THROWS_WITH(parse_diffusion_kind("euler"), Catch::Matchers::ContainsSubstring("euler"));
}
