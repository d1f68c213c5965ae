#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "crfkgc/encoder.hpp"
#include "crfkgc/gradcheck.hpp"

using namespace crfkgc;

namespace {

struct Fixture {
    ParamRegistry<double> reg;
    EncoderParams<double> p;
    std::size_t d;

    explicit Fixture(std::size_t dim = 4, std::uint64_t seed = 3) : d(dim) {
        RngStream rng(seed);
        register_encoder(reg, d, rng);
        p = bind_encoder(reg);
    }
};

} // namespace

TEST_CASE("neighbor message reduces to bias under zero weights") {
    Fixture fx;
    for (auto& v : fx.p.W_r->value.data) v = 0.0;
    fx.p.b_r->value.data = {1.0, 2.0, 3.0, 4.0};
    Tape<double> tape;
    Var e = tape.leaf(Tensor<double>::vec({5, 6, 7, 8}));
    Var r = tape.leaf(Tensor<double>::vec({1, 1, 1, 1}));
    Var m = neighbor_message(tape, fx.p, e, r);
    CHECK(tape.value(m).data == std::vector<double>{1.0, 2.0, 3.0, 4.0});
}

TEST_CASE("neighbor message with identity left block returns the entity embedding") {
    Fixture fx;
    for (auto& v : fx.p.W_r->value.data) v = 0.0;
    for (std::size_t i = 0; i < fx.d; ++i) fx.p.W_r->value(i, i) = 1.0; // W_r = [I | 0]
    std::fill(fx.p.b_r->value.data.begin(), fx.p.b_r->value.data.end(), 0.0);
    Tape<double> tape;
    Var e = tape.leaf(Tensor<double>::vec({5, 6, 7, 8}));
    Var r = tape.leaf(Tensor<double>::vec({-1, -2, -3, -4}));
    Var m = neighbor_message(tape, fx.p, e, r);
    CHECK(tape.value(m).data == std::vector<double>{5, 6, 7, 8});
}

TEST_CASE("neighbor message matches a reference matrix computation") {
    Fixture fx(3, 17);
    RngStream rng(99);
    Tape<double> tape;
    Tensor<double> ev = gaussian_tensor<double>({3}, rng);
    Tensor<double> rv = gaussian_tensor<double>({3}, rng);
    Var m = neighbor_message(tape, fx.p, tape.leaf(ev), tape.leaf(rv));
    for (std::size_t i = 0; i < 3; ++i) {
        double want = fx.p.b_r->value.data[i];
        for (std::size_t j = 0; j < 3; ++j) {
            want += fx.p.W_r->value(i, j) * ev.data[j];
            want += fx.p.W_r->value(i, j + 3) * rv.data[j];
        }
        CHECK(tape.value(m).data[i] == Catch::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("attention over a single message is the message itself") {
    Fixture fx;
    Tape<double> tape;
    Var h = tape.leaf(Tensor<double>::vec({1, 0, 0, 0}));
    Var m = tape.leaf(Tensor<double>::vec({2, 4, 6, 8}));
    auto att = attend_aggregate(tape, fx.p, h, {m});
    CHECK(tape.value(att.alphas).data == std::vector<double>{1.0});
    CHECK(tape.value(att.h_agg).data == std::vector<double>{2, 4, 6, 8});
}

TEST_CASE("equal logits split attention evenly") {
    Fixture fx;
    Tape<double> tape;
    Var h = tape.leaf(Tensor<double>::vec({1, 0, 0, 0}));
    Var m = tape.leaf(Tensor<double>::vec({2, 4, 6, 8}));
    auto att = attend_aggregate(tape, fx.p, h, {m, m});
    CHECK(tape.value(att.alphas).data[0] == Catch::Approx(0.5));
    CHECK(tape.value(att.alphas).data[1] == Catch::Approx(0.5));
    CHECK(tape.value(att.h_agg).data[2] == Catch::Approx(6.0));
}

TEST_CASE("empty neighborhood aggregates to zero") {
    Fixture fx;
    Tape<double> tape;
    Var h = tape.leaf(Tensor<double>::vec({1, 2, 3, 4}));
    auto att = attend_aggregate(tape, fx.p, h, {});
    CHECK_FALSE(att.alphas.valid());
    CHECK(tape.value(att.h_agg).data == std::vector<double>(4, 0.0));
}

TEST_CASE("attention weights form a simplex and ignore permutation", "[property]") {
    Fixture fx(4, 21);
    RngStream rng(2025);
    for (int it = 0; it < 1000; ++it) {
        const std::size_t n = 1 + rng.index(6);
        Tape<double> tape;
        Var h = tape.sample_gaussian({4}, rng);
        std::vector<Var> ms;
        for (std::size_t i = 0; i < n; ++i) ms.push_back(tape.sample_gaussian({4}, rng));
        auto att = attend_aggregate(tape, fx.p, h, ms);
        double sum = 0;
        for (double a : tape.value(att.alphas).data) {
            REQUIRE(a >= 0.0);
            sum += a;
        }
        REQUIRE(std::abs(sum - 1.0) <= 1e-6);

        // permute the list: h_agg must be unchanged
        std::vector<Var> perm = ms;
        std::mt19937 shuffler(static_cast<unsigned>(it));
        std::shuffle(perm.begin(), perm.end(), shuffler);
        auto att2 = attend_aggregate(tape, fx.p, h, perm);
        for (std::size_t j = 0; j < 4; ++j)
            REQUIRE(tape.value(att2.h_agg).data[j] ==
                    Catch::Approx(tape.value(att.h_agg).data[j]).margin(1e-6));
    }
}

TEST_CASE("neutral gate averages the two inputs") {
    Fixture fx;
    for (auto& v : fx.p.W_g->value.data) v = 0.0;
    std::fill(fx.p.b_g->value.data.begin(), fx.p.b_g->value.data.end(), 0.0);
    Tape<double> tape;
    Var h = tape.leaf(Tensor<double>::vec({2, 2, 2, 2}));
    Var agg = tape.leaf(Tensor<double>::vec({4, 0, 4, 0}));
    Var out = gated_fuse(tape, fx.p, h, agg);
    CHECK(tape.value(out).data == std::vector<double>{3, 1, 3, 1});
}

TEST_CASE("saturated gates select one side") {
    Fixture fx;
    for (auto& v : fx.p.W_g->value.data) v = 0.0;
    Tape<double> tape;
    Var h = tape.leaf(Tensor<double>::vec({2, 2, 2, 2}));
    Var agg = tape.leaf(Tensor<double>::vec({4, 0, 4, 0}));

    std::fill(fx.p.b_g->value.data.begin(), fx.p.b_g->value.data.end(), 20.0);
    Var toward_agg = gated_fuse(tape, fx.p, h, agg);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(tape.value(toward_agg).data[j] ==
              Catch::Approx(tape.value(agg).data[j]).margin(1e-8));

    std::fill(fx.p.b_g->value.data.begin(), fx.p.b_g->value.data.end(), -20.0);
    Var zero_agg = tape.leaf(Tensor<double>({4}));
    Var toward_h = gated_fuse(tape, fx.p, h, zero_agg);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(tape.value(toward_h).data[j] == Catch::Approx(2.0).margin(1e-8));
}

TEST_CASE("gate stays strictly inside (0,1) and fusion is a convex combination",
          "[property]") {
    Fixture fx(4, 5);
    RngStream rng(404);
    for (int it = 0; it < 1000; ++it) {
        Tape<double> tape;
        Tensor<double> hv = gaussian_tensor<double>({4}, rng, 2.0);
        Tensor<double> av = gaussian_tensor<double>({4}, rng, 2.0);
        Var h = tape.leaf(hv);
        Var agg = tape.leaf(av);
        Var g = tape.sigmoid(tape.add(tape.matvec(tape.param(*fx.p.W_g), agg),
                                      tape.param(*fx.p.b_g)));
        for (double gv : tape.value(g).data) {
            REQUIRE(gv > 0.0);
            REQUIRE(gv < 1.0);
        }
        Var out = gated_fuse(tape, fx.p, h, agg);
        for (std::size_t j = 0; j < 4; ++j) {
            const double lo = std::min(hv.data[j], av.data[j]);
            const double hi = std::max(hv.data[j], av.data[j]);
            REQUIRE(tape.value(out).data[j] >= lo - 1e-12);
            REQUIRE(tape.value(out).data[j] <= hi + 1e-12);
        }
    }
}

namespace {

// Minimal two-triple star graph around entity 0.
KnowledgeGraph tiny_graph() {
    KnowledgeGraph g;
    g.entities = {"a", "b", "c"};
    g.relations = {"r0", "r1"};
    g.triples = {{0, 0, 1}, {0, 1, 2}};
    g.neighbor_index = {{{0, 1}, {1, 2}}, {}, {}};
    return g;
}

} // namespace

TEST_CASE("encode_entity composes message, attention and gate") {
    Fixture fx;
    RngStream rng(55);
    auto& ent = fx.reg.create("embed.entity", {3, 4}, Init::Gaussian, rng, 0.1);
    auto& rel = fx.reg.create("embed.relation", {2, 4}, Init::Gaussian, rng, 0.1);
    auto g = tiny_graph();

    Tape<double> tape;
    Var out = encode_entity(tape, fx.p, g, ent, rel, 0);

    // reference composition, step by step
    Tape<double> ref;
    Var h = ref.param_row(ent, 0);
    std::vector<Var> ms = {
        neighbor_message(ref, fx.p, ref.param_row(ent, 1), ref.param_row(rel, 0)),
        neighbor_message(ref, fx.p, ref.param_row(ent, 2), ref.param_row(rel, 1))};
    auto att = attend_aggregate(ref, fx.p, h, ms);
    Var want = gated_fuse(ref, fx.p, h, att.h_agg);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(tape.value(out).data[j] == Catch::Approx(ref.value(want).data[j]).epsilon(1e-12));

    // entity with no neighbors: gate interpolates toward the raw embedding
    Tape<double> lone;
    Var out1 = encode_entity(lone, fx.p, g, ent, rel, 1);
    Tape<double> lref;
    Var h1 = lref.param_row(ent, 1);
    Var want1 = gated_fuse(lref, fx.p, h1, lref.zeros({4}));
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(lone.value(out1).data[j] == Catch::Approx(lref.value(want1).data[j]));

    // leakage guard: excluding r0 removes that neighbor
    EncodeOptions opts;
    opts.exclude_relation = 0;
    Tape<double> excl;
    Var out_excl = encode_entity(excl, fx.p, g, ent, rel, 0, opts);
    Tape<double> eref;
    Var he = eref.param_row(ent, 0);
    std::vector<Var> ms_e = {
        neighbor_message(eref, fx.p, eref.param_row(ent, 2), eref.param_row(rel, 1))};
    auto att_e = attend_aggregate(eref, fx.p, he, ms_e);
    Var want_e = gated_fuse(eref, fx.p, he, att_e.h_agg);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(excl.value(out_excl).data[j] == Catch::Approx(eref.value(want_e).data[j]));
}

TEST_CASE("bypassing the gate leaves W_g and b_g out of the gradient") {
    Fixture fx;
    RngStream rng(56);
    auto& ent = fx.reg.create("embed.entity", {3, 4}, Init::Gaussian, rng, 0.1);
    auto& rel = fx.reg.create("embed.relation", {2, 4}, Init::Gaussian, rng, 0.1);
    auto g = tiny_graph();
    fx.reg.zero_grads();

    EncodeOptions opts;
    opts.bypass_gate = true;
    Tape<double> tape;
    Var out = encode_entity(tape, fx.p, g, ent, rel, 0, opts);
    tape.backward(tape.sq_norm(out));
    for (double v : fx.p.W_g->value.grad) CHECK(v == 0.0);
    for (double v : fx.p.b_g->value.grad) CHECK(v == 0.0);
    // but the message path is live
    double wr = 0;
    for (double v : fx.p.W_r->value.grad) wr += std::abs(v);
    CHECK(wr > 0.0);
}

TEST_CASE("full encoder module passes a gradient check at 1e-4") {
    Fixture fx(8, 71);
    RngStream rng(72);
    auto& ent = fx.reg.create("embed.entity", {4, 8}, Init::Gaussian, rng, 0.1);
    auto& rel = fx.reg.create("embed.relation", {2, 8}, Init::Gaussian, rng, 0.1);
    KnowledgeGraph g;
    g.entities = {"a", "b", "c", "d"};
    g.relations = {"r0", "r1"};
    g.triples = {{0, 0, 1}, {0, 1, 2}, {0, 0, 3}};
    g.neighbor_index = {{{0, 1}, {1, 2}, {0, 3}}, {}, {}, {}};

    auto eval = [&](bool with_grad) {
        if (with_grad) fx.reg.zero_grads();
        Tape<double> tape;
        Var out = encode_entity(tape, fx.p, g, ent, rel, 0);
        Var loss = tape.sq_norm(out);
        if (with_grad) tape.backward(loss);
        return tape.scalar_value(loss);
    };
    std::vector<std::pair<std::string, Param<double>*>> inputs;
    for (auto& [name, p] : fx.reg.items()) inputs.emplace_back(name, &p);
    auto report = grad_check(eval, inputs, 1e-6, 1e-4);
    CAPTURE(report.max_rel_err);
    CHECK(report.pass);
}

TEST_CASE("stacked layers change the representation but stay deterministic") {
    Fixture fx;
    RngStream rng(57);
    auto& ent = fx.reg.create("embed.entity", {3, 4}, Init::Gaussian, rng, 0.1);
    auto& rel = fx.reg.create("embed.relation", {2, 4}, Init::Gaussian, rng, 0.1);
    auto g = tiny_graph();

    EncodeOptions two;
    two.layers = 2;
    Tape<double> t1, t2, t3;
    auto v1 = t1.value(encode_entity(t1, fx.p, g, ent, rel, 0, two)).data;
    auto v2 = t2.value(encode_entity(t2, fx.p, g, ent, rel, 0, two)).data;
    auto v3 = t3.value(encode_entity(t3, fx.p, g, ent, rel, 0)).data;
    CHECK(v1 == v2);
    CHECK(v1 != v3);
}
