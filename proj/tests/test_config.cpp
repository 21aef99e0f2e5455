#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "ocda/config.hpp"
#include "ocda/errors.hpp"

using namespace ocda;

TEST_CASE("empty config text yields all defaults and validates") {
    const RunConfig config = parse_config_text("");
    CHECK(config == RunConfig{});
    CHECK(config.alpha == 1.0);
    CHECK(config.beta == 1.0);
    CHECK(config.poly_exponent == 0.9);
    CHECK(config.lr0 == 2.5e-4);
    CHECK(config.momentum == 0.9);
    CHECK(config.weight_decay == 5e-4);
    CHECK(config.batch_size == 2);
}

TEST_CASE("comments, blank lines and whitespace are tolerated") {
    const std::string text =
        "# a comment\n"
        "\n"
        "[train]\n"
        "  alpha   =  0.5  \n"
        "; another comment style\n"
        "[run]\n"
        "seed = 7\n";
    const RunConfig config = parse_config_text(text);
    CHECK(config.alpha == 0.5);
    CHECK(config.seed == 7);
}

TEST_CASE("lambda outside [0,1] raises a ValidationError naming field and bound") {
    try {
        parse_config_text("[train]\nlambda = 1.5\n");
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("lambda") != std::string::npos);
        CHECK(msg.find("[0,1]") != std::string::npos);
    }
}

TEST_CASE("unknown keys and sections are rejected with line numbers") {
    try {
        parse_config_text("[train]\nalpha = 1\nwarp_speed = 9\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("warp_speed") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config_text("[warp]\nfactor = 9\n"), ParseError);
    CHECK_THROWS_AS(parse_config_text("alpha = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_config_text("[train]\nalpha\n"), ParseError);
    CHECK_THROWS_AS(parse_config_text("[train]\nalpha = zebra\n"), ParseError);
}

TEST_CASE("write-then-parse round trips structurally") {
    RunConfig config;
    config.seed = 1234567;
    config.alpha = 0.25;
    config.beta = 2.0;
    config.lambda = 0.5;
    config.lr0 = 1e-3;
    config.max_iter = 77;
    config.k_true = 4;
    config.fusion = FusionMode::Negentropy;
    config.stage_mix = false;
    config.source_dir = "elsewhere/source";
    config.out_dir = "runs/a";
    config.parallel_teachers = true;

    const RunConfig parsed = parse_config_text(serialize_config(config));
    CHECK(parsed == config);
}

TEST_CASE("range validations cover the declared bounds") {
    CHECK_THROWS_AS(parse_config_text("[train]\nalpha = -0.1\n"), ValidationError);
    CHECK_THROWS_AS(parse_config_text("[train]\nbeta = -1\n"), ValidationError);
    CHECK_THROWS_AS(parse_config_text("[separate]\nbins = 1\n"), ValidationError);
    CHECK_THROWS_AS(parse_config_text("[synth]\nclasses = 1\n"), ValidationError);
    CHECK_THROWS_AS(parse_config_text("[synth]\nk_true = 9\n"), ValidationError);
    CHECK_THROWS_AS(parse_config_text("[train]\nmax_iter = 0\n"), ValidationError);
    CHECK_THROWS_AS(parse_config_text("[update]\nsteps = 0\n"), ValidationError);
    CHECK_THROWS_AS(parse_config_text("[separate]\nk_min = 5\nk_max = 3\n"),
                    ValidationError);
}

TEST_CASE("fusion mode parses both values and rejects others") {
    CHECK(parse_config_text("[fusion]\nmode = verbatim\n").fusion == FusionMode::Verbatim);
    CHECK(parse_config_text("[fusion]\nmode = negentropy\n").fusion ==
          FusionMode::Negentropy);
    CHECK_THROWS_AS(parse_config_text("[fusion]\nmode = maximal\n"), ParseError);
}

TEST_CASE("effective data dirs default under the output dir") {
    RunConfig config;
    config.out_dir = "runs/x";
    CHECK(config.effective_source_dir() == "runs/x/data/source");
    CHECK(config.effective_target_dir() == "runs/x/data/target");
    CHECK(config.effective_open_dir() == "runs/x/data/open");
    config.source_dir = "custom";
    CHECK(config.effective_source_dir() == "custom");
}

TEST_CASE("to_train_config copies the hyperparameters") {
    RunConfig config;
    config.alpha = 0.5;
    config.lambda = 0.98;
    config.num_classes = 6;
    config.update_steps = 3;
    const TrainConfig t = config.to_train_config();
    CHECK(t.alpha == 0.5);
    CHECK(t.lambda == 0.98);
    CHECK(t.arch.num_classes == 6);
    CHECK(t.update_steps == 3);
}
