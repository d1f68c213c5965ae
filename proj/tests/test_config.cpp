#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <string>

#include "crfkgc/config.hpp"

using namespace crfkgc;

TEST_CASE("defaults cover the whole schema") {
    const Config cfg = Config::defaults();
    CHECK(cfg.get_int("model.dim") == 100);
    CHECK(cfg.get_int("train.k") == 5);
    CHECK(cfg.get_double("train.lr") == Catch::Approx(0.001));
    CHECK(cfg.get_string("diffusion.kind") == "sde");
    CHECK(cfg.get_bool("ablate.gate") == false);
    CHECK_FALSE(cfg.is_set("model.dim"));
    CHECK_NOTHROW(cfg.validate());
    for (const auto& [key, meta] : config_schema()) CHECK_NOTHROW(cfg.get_string(key));
}

TEST_CASE("parsing handles comments, blanks, CRLF and whitespace") {
    const Config cfg = Config::parse_string("# full line comment\n"
                                            "\n"
                                            "model.dim = 32   # trailing comment\r\n"
                                            "  train.lr=0.01\n");
    CHECK(cfg.get_int("model.dim") == 32);
    CHECK(cfg.get_double("train.lr") == Catch::Approx(0.01));
    CHECK(cfg.is_set("model.dim"));
    CHECK_FALSE(cfg.is_set("train.k"));
}

TEST_CASE("parse errors carry the origin and line number") {
    CHECK_THROWS_WITH(Config::parse_string("model.dim 32\n", "f.cfg"),
                      Catch::Matchers::ContainsSubstring("f.cfg:1") &&
                          Catch::Matchers::ContainsSubstring("expected 'key = value'"));
    CHECK_THROWS_WITH(Config::parse_string("\nnot.a.key = 1\n", "f.cfg"),
                      Catch::Matchers::ContainsSubstring("f.cfg:2") &&
                          Catch::Matchers::ContainsSubstring("unknown key 'not.a.key'"));
    CHECK_THROWS_WITH(Config::parse_string("train.k = 3\ntrain.k = 4\n"),
                      Catch::Matchers::ContainsSubstring("duplicate key 'train.k'"));
}

TEST_CASE("typed getters reject malformed values") {
    Config cfg;
    cfg.set("model.dim", "32x");
    CHECK_THROWS_AS(cfg.get_int("model.dim"), IngestError);
    cfg.set("train.lr", "fast");
    CHECK_THROWS_AS(cfg.get_double("train.lr"), IngestError);
    cfg.set("ablate.gate", "yes");
    CHECK_THROWS_AS(cfg.get_bool("ablate.gate"), IngestError);
    cfg.set("ablate.sr", "true");
    CHECK(cfg.get_bool("ablate.sr"));
    CHECK_THROWS_AS(cfg.set("nope", "1"), Error);
}

TEST_CASE("validate catches out-of-range settings") {
    auto bad = [](const std::string& key, const std::string& value) {
        Config cfg;
        cfg.set(key, value);
        CHECK_THROWS_AS(cfg.validate(), IngestError);
    };
    bad("model.dim", "0");
    bad("train.k", "-1");
    bad("train.lr", "0");
    bad("dec.margin", "0");
    bad("train.beta1", "1.0");
    bad("diffusion.kind", "euler");
    bad("diffusion.beta_min", "0");
    bad("sweep.episodes", "-5");
    {
        Config cfg;
        cfg.set("diffusion.beta_min", "2.0");
        cfg.set("diffusion.beta_max", "1.0");
        CHECK_THROWS_AS(cfg.validate(), IngestError);
    }
}

TEST_CASE("render round-trips through the parser") {
    Config cfg;
    cfg.set("model.dim", "16");
    cfg.set("diffusion.kind", "ddim");
    const std::string text = cfg.render();
    const Config back = Config::parse_string(text);
    for (const auto& [key, meta] : config_schema())
        CHECK(back.get_string(key) == cfg.get_string(key));
}

TEST_CASE("overrides expose only the keys that were set") {
    Config cfg = Config::parse_string("train.seed = 7\nmodel.dim = 8\n");
    const auto& o = cfg.overrides();
    REQUIRE(o.size() == 2);
    CHECK(o.at("train.seed") == "7");
    CHECK(o.at("model.dim") == "8");
}

TEST_CASE("parse_file reads from disk and reports missing files") {
    const std::string path = "cfg_test_tmp.cfg";
    {
        std::ofstream f(path);
        f << "train.episodes_max = 12\n";
    }
    const Config cfg = Config::parse_file(path);
    CHECK(cfg.get_int("train.episodes_max") == 12);
    std::remove(path.c_str());
    CHECK_THROWS_WITH(Config::parse_file("definitely_missing.cfg"),
                      Catch::Matchers::ContainsSubstring("cannot open config file"));
}
