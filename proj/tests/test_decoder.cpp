#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crfkgc/decoder.hpp"
#include "crfkgc/gradcheck.hpp"

using namespace crfkgc;

namespace {

struct Fixture {
    DecoderConfig cfg;
    ParamRegistry<double> reg;
    DecoderParams<double> p;

    explicit Fixture(std::size_t d = 3, std::size_t cond = 2, std::uint64_t seed = 19) {
        cfg.d = d;
        cfg.cond = cond;
        RngStream rng(seed);
        register_decoder(reg, cfg, rng);
        p = bind_decoder(reg, cfg);
    }
};

} // namespace

TEST_CASE("a zeroed FC leaves the stable relation untouched") {
    Fixture fx;
    for (auto& v : fx.p.fc_W->value.data) v = 0.0;
    for (auto& v : fx.p.fc_b->value.data) v = 0.0;
    Tape<double> tape;
    Var r_s = tape.leaf(Tensor<double>::vec({1, -2, 3}));
    Var z = tape.leaf(Tensor<double>::vec({5, 5, 5}));
    Var r = conjugate_relation(tape, fx.p, r_s, z);
    CHECK(tape.value(r).data == std::vector<double>{1, -2, 3});
}

TEST_CASE("an identity FC adds the sampled offset") {
    Fixture fx;
    for (auto& v : fx.p.fc_W->value.data) v = 0.0;
    for (std::size_t i = 0; i < 3; ++i) fx.p.fc_W->value(i, i) = 1.0;
    for (auto& v : fx.p.fc_b->value.data) v = 0.0;
    Tape<double> tape;
    Var r_s = tape.leaf(Tensor<double>::vec({1, -2, 3}));
    Var z = tape.leaf(Tensor<double>::vec({0.5, 0.25, -0.75}));
    Var r = conjugate_relation(tape, fx.p, r_s, z);
    CHECK(tape.value(r).data == std::vector<double>{1.5, -1.75, 2.25});
}

TEST_CASE("conjugate relation matches a reference matrix computation") {
    Fixture fx(3, 2, 23);
    Tape<double> tape;
    std::vector<double> rs = {0.2, -0.4, 0.6}, zv = {1.1, -0.3, 0.7};
    Var r = conjugate_relation(tape, fx.p, tape.leaf(Tensor<double>::vec(rs)),
                               tape.leaf(Tensor<double>::vec(zv)));
    for (std::size_t i = 0; i < 3; ++i) {
        double want = rs[i] + fx.p.fc_b->value.data[i];
        for (std::size_t j = 0; j < 3; ++j) want += fx.p.fc_W->value(i, j) * zv[j];
        CHECK(tape.value(r).data[i] == Catch::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("a zeroed threshold MLP yields radius zero") {
    Fixture fx;
    for (auto& v : fx.p.thresh_W1->value.data) v = 0.0;
    for (auto& v : fx.p.thresh_W2->value.data) v = 0.0;
    Tape<double> tape;
    Var d_z = dynamic_threshold(tape, fx.p, tape.leaf(Tensor<double>::vec({3, -3})));
    CHECK(tape.scalar_value(d_z) == 0.0);
}

TEST_CASE("threshold matches a hand-rolled two-layer MLP") {
    Fixture fx(3, 2, 29);
    Tape<double> tape;
    std::vector<double> cv = {0.8, -1.4};
    Var d_z = dynamic_threshold(tape, fx.p, tape.leaf(Tensor<double>::vec(cv)));

    const std::size_t m = fx.cfg.thresh_hidden_dim();
    std::vector<double> h(m);
    for (std::size_t i = 0; i < m; ++i) {
        double v = fx.p.thresh_b1->value.data[i];
        for (std::size_t j = 0; j < cv.size(); ++j) v += fx.p.thresh_W1->value(i, j) * cv[j];
        h[i] = std::tanh(v);
    }
    double want = fx.p.thresh_b2->value.data[0];
    for (std::size_t j = 0; j < m; ++j) want += fx.p.thresh_W2->value(0, j) * h[j];
    CHECK(tape.scalar_value(d_z) == Catch::Approx(want).epsilon(1e-12));
}

TEST_CASE("score is zero exactly on the manifold") {
    Tape<double> tape;
    // translation closes exactly and the radius is zero
    Var h = tape.leaf(Tensor<double>::vec({1, 2}));
    Var r = tape.leaf(Tensor<double>::vec({3, -1}));
    Var t = tape.leaf(Tensor<double>::vec({4, 1}));
    Var zero = tape.scalar(0.0);
    CHECK(tape.scalar_value(score_triple(tape, h, r, t, zero)) == 0.0);

    // miss by sqrt(4) but with matching radius: still on the shell
    Var t2 = tape.leaf(Tensor<double>::vec({2, 1}));
    Var two = tape.scalar(2.0);
    CHECK(tape.scalar_value(score_triple(tape, h, r, t2, two)) == 0.0);
}

TEST_CASE("score penalizes deviation on either side of the shell") {
    Tape<double> tape;
    Var h = tape.leaf(Tensor<double>::vec({0, 0}));
    Var r = tape.leaf(Tensor<double>::vec({2, 0}));
    Var t = tape.leaf(Tensor<double>::vec({0, 0}));
    // ||h + r - t||^2 = 4
    CHECK(tape.scalar_value(score_triple(tape, h, r, t, tape.scalar(0.0))) == -4.0);
    // radius^2 = 8 -> |4 - 8| = 4 from the inside
    CHECK(tape.scalar_value(
              score_triple(tape, h, r, t, tape.scalar(std::sqrt(8.0)))) ==
          Catch::Approx(-4.0).epsilon(1e-12));
}

TEST_CASE("plain translational fallback scores with the unsquared distance") {
    Tape<double> tape;
    Var h = tape.leaf(Tensor<double>::vec({0, 0}));
    Var r = tape.leaf(Tensor<double>::vec({3, 4}));
    Var t = tape.leaf(Tensor<double>::vec({0, 0}));
    CHECK(tape.scalar_value(score_triple(tape, h, r, t, tape.scalar(7.0), false)) == -5.0);
}

TEST_CASE("raw scores never exceed zero", "[property]") {
    RngStream rng(808);
    for (int it = 0; it < 1000; ++it) {
        Tape<double> tape;
        Var h = tape.sample_gaussian({4}, rng);
        Var r = tape.sample_gaussian({4}, rng);
        Var t = tape.sample_gaussian({4}, rng);
        Var d_z = tape.leaf(Tensor<double>::scalar(2.0 * rng.uniform() - 1.0));
        REQUIRE(tape.scalar_value(score_triple(tape, h, r, t, d_z)) <= 0.0);
        REQUIRE(tape.scalar_value(score_triple(tape, h, r, t, d_z, false)) <= 0.0);
    }
}

TEST_CASE("hinge loss on worked examples") {
    Tape<double> tape;
    auto loss1 = [&](double p, double n, double margin) {
        return tape.scalar_value(
            margin_loss(tape, {tape.scalar(p)}, {{tape.scalar(n)}}, margin));
    };
    CHECK(loss1(-1.0, -3.0, 1.0) == 0.0);          // margin satisfied
    CHECK(loss1(-1.0, -1.0, 1.0) == 1.0);          // tied scores pay the full margin
    CHECK(loss1(-1.0, -0.8, 1.0) == Catch::Approx(1.2)); // violated by 0.2
    CHECK(loss1(-1.0, -2.0, 0.5) == 0.0);
    CHECK(loss1(-1.0, -1.2, 0.5) == Catch::Approx(0.3));
}

TEST_CASE("hinge sums over all positive/negative pairings") {
    Tape<double> tape;
    std::vector<Var> pos = {tape.scalar(-1.0), tape.scalar(-2.0)};
    std::vector<std::vector<Var>> neg = {
        {tape.scalar(-1.0), tape.scalar(-3.0)}, // 1.0 + 0.0
        {tape.scalar(-1.5)},                    // 1.5
    };
    CHECK(tape.scalar_value(margin_loss(tape, pos, neg, 1.0)) == Catch::Approx(2.5));
}

TEST_CASE("hinge is invariant to a common score shift") {
    Tape<double> tape;
    auto v = [&](double shift) {
        std::vector<Var> pos = {tape.scalar(-1.0 + shift)};
        std::vector<std::vector<Var>> neg = {{tape.scalar(-0.7 + shift)}};
        return tape.scalar_value(margin_loss(tape, pos, neg, 1.0));
    };
    CHECK(v(0.0) == Catch::Approx(v(5.0)));
    CHECK(v(0.0) == Catch::Approx(v(-11.25)));
}

TEST_CASE("hinge rejects mismatched or empty inputs") {
    Tape<double> tape;
    CHECK_THROWS_AS(margin_loss<double>(tape, {}, {}, 1.0), ShapeError);
    std::vector<Var> pos = {tape.scalar(0.0)};
    CHECK_THROWS_AS(margin_loss(tape, pos, {{}, {}}, 1.0), ShapeError);
    CHECK_THROWS_AS(margin_loss(tape, pos, {{}}, 1.0), ShapeError);
}

TEST_CASE("total loss adds the two objectives") {
    Tape<double> tape;
    CHECK(tape.scalar_value(total_loss(tape, tape.scalar(1.25), tape.scalar(0.5))) == 1.75);
}

TEST_CASE("decoder path passes a gradient check away from the kinks") {
    Fixture fx(3, 2, 61);
    RngStream rng(62);
    auto& r_s = fx.reg.create("in.r_s", {3}, Init::Gaussian, rng, 0.5);
    auto& z = fx.reg.create("in.z", {3}, Init::Gaussian, rng, 0.5);
    auto& c = fx.reg.create("in.c", {2}, Init::Gaussian, rng, 0.5);
    auto& hpos = fx.reg.create("in.hpos", {3}, Init::Gaussian, rng, 1.0);
    auto& tpos = fx.reg.create("in.tpos", {3}, Init::Gaussian, rng, 1.0);
    auto& tneg = fx.reg.create("in.tneg", {3}, Init::Gaussian, rng, 1.0);
    // near-tied scores keep the hinge active (slack near the margin) without
    // parking either |.| kink at zero
    tneg.value.data = tpos.value.data;
    tneg.value.data[0] += 0.37;

    auto eval = [&](bool with_grad) {
        if (with_grad) fx.reg.zero_grads();
        Tape<double> tape;
        Var r = conjugate_relation(tape, fx.p, tape.param(r_s), tape.param(z));
        Var d_z = dynamic_threshold(tape, fx.p, tape.param(c));
        Var sp = score_triple(tape, tape.param(hpos), r, tape.param(tpos), d_z);
        Var sn = score_triple(tape, tape.param(hpos), r, tape.param(tneg), d_z);
        Var loss = margin_loss(tape, {sp}, {{sn}}, 1.0);
        if (with_grad) tape.backward(loss);
        return tape.scalar_value(loss);
    };

    // keep the fixed point away from the |.| and hinge kinks so finite
    // differences stay two-sided
    const double base = eval(false);
    REQUIRE(base > 1e-2);

    std::vector<std::pair<std::string, Param<double>*>> inputs;
    for (auto& [name, p] : fx.reg.items()) inputs.emplace_back(name, &p);
    auto report = grad_check(eval, inputs, 1e-6, 1e-4);
    CAPTURE(report.max_rel_err);
    CHECK(report.pass);
}
