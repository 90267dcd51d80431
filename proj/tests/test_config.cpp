#include <doctest.h>

#include "snnlab/config.hpp"

using namespace snnlab;

TEST_CASE("a full config binds every section") {
    const auto raw = RawConfig::parse_string(R"(
# demo experiment
[experiment]
master_seed = 77
mc_samples = 5000

[distribution]
d = 7
teacher_width = 4
teacher_seed = 3
input_law = truncated_gaussian
noise_std = 0.25
c_x = 2.0
c_y = 1.5

[model]
m = 512
activation = sigmoid
sign_pattern = random
init_policy = gaussian
init_scale = 0.1

[training]
algorithm = sgd
eta = 0.05
horizon = 40
n = 96
strict_mode = false
checkpoint_stride = 10

[stability]
replicates = 8

[sweep]
mode = rate
n_grid = 32, 64, 128

[budget]
max_total_steps = 1e6

[output]
dir = /tmp/somewhere
)");
    const auto cfg = bind_experiment_config(raw);
    CHECK(cfg.master_seed == 77);
    CHECK(cfg.mc_samples == 5000);
    CHECK(cfg.d == 7);
    CHECK(cfg.input_law == InputLaw::truncated_gaussian);
    CHECK(cfg.noise_std == 0.25);
    CHECK(cfg.c_x == 2.0);
    CHECK(cfg.m == 512);
    CHECK(cfg.activation == ActivationKind::sigmoid);
    CHECK(cfg.sign_pattern == SignPattern::random);
    CHECK(cfg.init_policy == InitPolicy::gaussian);
    CHECK(cfg.algorithm == Algorithm::sgd);
    CHECK(cfg.eta == 0.05);
    CHECK(cfg.horizon == 40);
    CHECK(cfg.n == 96);
    CHECK_FALSE(cfg.strict_mode);
    CHECK(cfg.checkpoint_stride == 10);
    CHECK(cfg.replicates == 8);
    CHECK(cfg.sweep_mode == SweepMode::rate);
    CHECK(cfg.n_grid == std::vector<std::size_t>{32, 64, 128});
    CHECK(cfg.max_total_steps == 1e6);
    CHECK(cfg.out_dir == "/tmp/somewhere");
}

TEST_CASE("unknown sections and keys are rejected by name") {
    CHECK_THROWS_WITH_AS(
        bind_experiment_config(RawConfig::parse_string("[distribution]\nd = 3\n[misc]\nx = 1\n")),
        "unknown section [misc]", ConfigError);
    CHECK_THROWS_WITH_AS(
        bind_experiment_config(RawConfig::parse_string("[distribution]\nd = 3\nwidth = 4\n")),
        "unknown key distribution.width", ConfigError);
}

TEST_CASE("a missing distribution section names the missing field") {
    CHECK_THROWS_WITH_AS(bind_experiment_config(RawConfig::parse_string("[model]\nm = 4\n")),
                         "missing required field distribution.d", ConfigError);
}

TEST_CASE("malformed lines report their line number") {
    CHECK_THROWS_WITH_AS(RawConfig::parse_string("[distribution]\nno equals sign\n"),
                         "line 2: expected key = value", ConfigError);
    CHECK_THROWS_WITH_AS(RawConfig::parse_string("d = 3\n"),
                         "line 1: key outside any section", ConfigError);
    CHECK_THROWS_WITH_AS(RawConfig::parse_string("[oops\nd = 3\n"),
                         "line 1: malformed section header", ConfigError);
}

TEST_CASE("typed fields reject malformed values") {
    CHECK_THROWS_AS(
        bind_experiment_config(RawConfig::parse_string("[distribution]\nd = 3\nnoise_std = abc\n")),
        ConfigError);
    CHECK_THROWS_AS(bind_experiment_config(
                        RawConfig::parse_string("[distribution]\nd = 3\n[training]\neta = -1\n")),
                    ConfigError);
    CHECK_THROWS_AS(bind_experiment_config(RawConfig::parse_string(
                        "[distribution]\nd = 3\n[training]\nstrict_mode = maybe\n")),
                    ConfigError);
    CHECK_THROWS_AS(bind_experiment_config(RawConfig::parse_string(
                        "[distribution]\nd = 3\n[model]\nactivation = relu\n")),
                    std::invalid_argument);
    CHECK_THROWS_AS(bind_experiment_config(
                        RawConfig::parse_string("[distribution]\nd = 3\n[sweep]\nn_grid = ,\n")),
                    ConfigError);
}

TEST_CASE("defaults fill unspecified fields") {
    const auto cfg = bind_experiment_config(RawConfig::parse_string("[distribution]\nd = 3\n"));
    CHECK(cfg.d == 3);
    CHECK(cfg.activation == ActivationKind::tanh);
    CHECK(cfg.algorithm == Algorithm::gd);
    CHECK(cfg.strict_mode);
    CHECK(cfg.master_seed == 1);
    CHECK(cfg.input_law == InputLaw::sphere);
}

TEST_CASE("comments and blank lines are ignored and values are trimmed") {
    const auto raw = RawConfig::parse_string(
        "\n# leading comment\n[distribution]\n   d =   9   \n\n# tail\n");
    CHECK(bind_experiment_config(raw).d == 9);
    CHECK(raw.get("distribution", "d") == "9");
}

TEST_CASE("derived seeds depend on the master seed") {
    auto a = bind_experiment_config(RawConfig::parse_string("[distribution]\nd = 3\n"));
    auto b = a;
    b.master_seed = 2;
    CHECK(make_train_config(a).seed != make_train_config(b).seed);
    const auto sa = make_student(a), sb = make_student(b);
    CHECK(sa.input_dim() == sb.input_dim());
}
