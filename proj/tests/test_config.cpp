#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "shenet/config.hpp"

namespace {

std::string temp_json(const std::string& name, const std::string& body) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << body;
    return path.string();
}

}  // namespace

TEST_CASE("default configuration is valid and carries documented values") {
    shenet::Config c;
    REQUIRE_NOTHROW(shenet::validate(c));
    REQUIRE(c.data.t_pas == 8);
    REQUIRE(c.data.t_fut == 12);
    REQUIRE(c.data.source == "synthetic");
    REQUIRE(c.bank.k == 32);
    REQUIRE(c.bank.theta_auto);
    REQUIRE(c.bank.theta_fraction == 0.75);
    REQUIRE(c.bank.beta == 32);
    REQUIRE(c.model.d_model == 32);
    REQUIRE(c.model.n_heads == 4);
    REQUIRE(c.train.loss == "mse");
    REQUIRE(c.eval.predictor == "model");
    REQUIRE(c.eval.top_k == 1);
}

TEST_CASE("load_config applies file values and rejects unknown keys by name") {
    const std::string path = temp_json(
        "cfg_ok.json",
        R"({"data": {"t_pas": 6, "noise_sigma": 0.1}, "train": {"epochs": 3}})");
    const shenet::Config c = shenet::load_config(path);
    REQUIRE(c.data.t_pas == 6);
    REQUIRE(c.data.noise_sigma == 0.1);
    REQUIRE(c.train.epochs == 3);
    REQUIRE(c.data.t_fut == 12);  // untouched keys keep their defaults

    const std::string bad_key =
        temp_json("cfg_bad_key.json", R"({"data": {"t_past": 6}})");
    REQUIRE_THROWS_MATCHES(shenet::load_config(bad_key), shenet::ConfigError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("data.t_past")));

    const std::string bad_section =
        temp_json("cfg_bad_section.json", R"({"dataa": {"t_pas": 6}})");
    REQUIRE_THROWS_MATCHES(shenet::load_config(bad_section), shenet::ConfigError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("dataa")));

    REQUIRE_THROWS_AS(shenet::load_config("/nonexistent/cfg.json"),
                      shenet::ConfigError);
    const std::string not_json = temp_json("cfg_not_json.json", "{nope");
    REQUIRE_THROWS_AS(shenet::load_config(not_json), shenet::ConfigError);
    const std::string not_object = temp_json("cfg_not_object.json", "[1,2]");
    REQUIRE_THROWS_AS(shenet::load_config(not_object), shenet::ConfigError);
}

TEST_CASE("typed keys reject values of the wrong JSON type") {
    const std::string bad_int =
        temp_json("cfg_bad_int.json", R"({"data": {"t_pas": "six"}})");
    REQUIRE_THROWS_MATCHES(shenet::load_config(bad_int), shenet::ConfigError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("data.t_pas")));

    const std::string bad_bool =
        temp_json("cfg_bad_bool.json", R"({"model": {"positional_encoding": 1}})");
    REQUIRE_THROWS_AS(shenet::load_config(bad_bool), shenet::ConfigError);

    const std::string bad_real =
        temp_json("cfg_bad_real.json", R"({"train": {"lr": true}})");
    REQUIRE_THROWS_AS(shenet::load_config(bad_real), shenet::ConfigError);

    const std::string bad_string =
        temp_json("cfg_bad_string.json", R"({"eval": {"predictor": 3}})");
    REQUIRE_THROWS_AS(shenet::load_config(bad_string), shenet::ConfigError);
}

TEST_CASE("theta accepts a number or the string auto") {
    shenet::Config c;
    shenet::apply_config_json(c, nlohmann::json::parse(R"({"bank": {"theta": 0.4}})"));
    REQUIRE_FALSE(c.bank.theta_auto);
    REQUIRE(c.bank.theta == 0.4);

    shenet::apply_config_json(c, nlohmann::json::parse(R"({"bank": {"theta": "auto"}})"));
    REQUIRE(c.bank.theta_auto);

    REQUIRE_THROWS_AS(
        shenet::apply_config_json(c, nlohmann::json::parse(R"({"bank": {"theta": "big"}})")),
        shenet::ConfigError);
}

TEST_CASE("beta accepts a positive integer or the string inf") {
    shenet::Config c;
    shenet::apply_config_json(c, nlohmann::json::parse(R"({"bank": {"beta": 8}})"));
    REQUIRE(c.bank.beta == 8);

    shenet::apply_config_json(c, nlohmann::json::parse(R"({"bank": {"beta": "inf"}})"));
    REQUIRE(c.bank.beta == std::numeric_limits<std::int64_t>::max());

    REQUIRE_THROWS_AS(
        shenet::apply_config_json(c, nlohmann::json::parse(R"({"bank": {"beta": "lots"}})")),
        shenet::ConfigError);
    REQUIRE_THROWS_AS(
        shenet::apply_config_json(c, nlohmann::json::parse(R"({"bank": {"beta": 1.5}})")),
        shenet::ConfigError);
}

TEST_CASE("overrides parse JSON scalars and fall back to strings") {
    shenet::Config c;
    shenet::apply_override(c, "data.t_pas=4");
    REQUIRE(c.data.t_pas == 4);
    shenet::apply_override(c, "train.lr=0.05");
    REQUIRE(c.train.lr == 0.05);
    shenet::apply_override(c, "model.positional_encoding=false");
    REQUIRE_FALSE(c.model.positional_encoding);
    shenet::apply_override(c, "eval.predictor=raw_retrieval");  // bare string
    REQUIRE(c.eval.predictor == "raw_retrieval");
    shenet::apply_override(c, R"(eval.cs_control="lsq")");  // quoted string
    REQUIRE(c.eval.cs_control == "lsq");
    shenet::apply_override(c, "bank.theta=auto");
    REQUIRE(c.bank.theta_auto);
    shenet::apply_override(c, "bank.beta=inf");
    REQUIRE(c.bank.beta == std::numeric_limits<std::int64_t>::max());
    shenet::apply_override(c, "data.path=runs/input.txt");  // value containing a dot
    REQUIRE(c.data.path == "runs/input.txt");

    REQUIRE_THROWS_MATCHES(shenet::apply_override(c, "bank.theta_frac=0.5"),
                           shenet::ConfigError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("bank.theta_frac")));
    REQUIRE_THROWS_AS(shenet::apply_override(c, "no_equals_here"),
                      shenet::ConfigError);
    REQUIRE_THROWS_AS(shenet::apply_override(c, "nodot=3"), shenet::ConfigError);
    REQUIRE_THROWS_AS(shenet::apply_override(c, "data.t_pas=not_an_int"),
                      shenet::ConfigError);
}

TEST_CASE("validate rejects out-of-range values with the key name") {
    auto expect_reject = [](const std::string& override_text,
                            const std::string& named_key) {
        shenet::Config c;
        shenet::apply_override(c, override_text);
        REQUIRE_THROWS_MATCHES(shenet::validate(c), shenet::ConfigError,
                               Catch::Matchers::MessageMatches(
                                   Catch::Matchers::ContainsSubstring(named_key)));
    };
    expect_reject("data.t_pas=1", "data.t_pas");
    expect_reject("data.t_fut=0", "data.t_fut");
    expect_reject("data.stride=0", "data.stride");
    expect_reject("data.train_fraction=1.5", "data.train_fraction");
    expect_reject("data.noise_sigma=-0.1", "data.noise_sigma");
    expect_reject("data.source=csv", "data.source");
    expect_reject("bank.k=0", "bank.k");
    expect_reject("bank.beta=0", "bank.beta");
    expect_reject("train.lr=0", "train.lr");
    expect_reject("train.epochs=-1", "train.epochs");
    expect_reject("train.loss=l1", "train.loss");
    expect_reject("model.d_model=30", "model.d_model");  // not a multiple of 4 heads
    expect_reject("model.dropout=1", "model.dropout");
    expect_reject("eval.top_k=0", "eval.top_k");
    expect_reject("eval.predictor=oracle", "eval.predictor");
    expect_reject("eval.cs_control=bogus", "cs_control");

    shenet::Config file_mode;
    shenet::apply_override(file_mode, "data.source=file");
    REQUIRE_THROWS_MATCHES(shenet::validate(file_mode), shenet::ConfigError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("data.path")));
    shenet::apply_override(file_mode, "data.path=tracks.txt");
    REQUIRE_NOTHROW(shenet::validate(file_mode));

    shenet::Config fixed_theta;
    shenet::apply_override(fixed_theta, "bank.theta=-2");
    REQUIRE_THROWS_AS(shenet::validate(fixed_theta), shenet::ConfigError);
}

TEST_CASE("config_help documents every schema key") {
    const std::string help = shenet::config_help();
    for (const auto& f : shenet::detail::config_schema()) {
        const std::string name = shenet::detail::field_name(f);
        CAPTURE(name);
        REQUIRE(help.find(name) != std::string::npos);
    }
    REQUIRE(help.find("default") != std::string::npos);
}

TEST_CASE("config_to_json round-trips through apply_config_json") {
    shenet::Config c;
    shenet::apply_override(c, "data.t_pas=6");
    shenet::apply_override(c, "data.source=file");
    shenet::apply_override(c, "data.path=in.txt");
    shenet::apply_override(c, "bank.theta=0.31");
    shenet::apply_override(c, "bank.beta=inf");
    shenet::apply_override(c, "model.gpl=max");
    shenet::apply_override(c, "train.loss=cs");
    shenet::apply_override(c, "eval.cs_control=literal:0.25");

    const nlohmann::json dumped = shenet::config_to_json(c);
    shenet::Config back;
    shenet::apply_config_json(back, dumped);
    REQUIRE(shenet::config_to_json(back) == dumped);
    REQUIRE(back.data.t_pas == 6);
    REQUIRE(back.bank.theta == 0.31);
    REQUIRE(back.bank.beta == std::numeric_limits<std::int64_t>::max());
    REQUIRE(back.eval.cs_control == "literal:0.25");

    // Defaults round-trip too, including theta "auto".
    const shenet::Config fresh;
    const nlohmann::json fresh_json = shenet::config_to_json(fresh);
    REQUIRE(fresh_json["bank"]["theta"] == "auto");
    shenet::Config fresh_back;
    shenet::apply_config_json(fresh_back, fresh_json);
    REQUIRE(shenet::config_to_json(fresh_back) == fresh_json);
}

TEST_CASE("control rule strings map onto rule kinds") {
    using shenet::ControlRule;
    REQUIRE(shenet::parse_control_rule("mid").kind ==
            ControlRule::Kind::kMidTrajectoryPoint);
    REQUIRE(shenet::parse_control_rule("lsq").kind ==
            ControlRule::Kind::kLeastSquaresFit);
    const ControlRule lit = shenet::parse_control_rule("literal:0.25");
    REQUIRE(lit.kind == ControlRule::Kind::kChordPoint);
    REQUIRE(lit.t0 == 0.25);
    const ControlRule chord = shenet::parse_control_rule("chord:0.5");
    REQUIRE(chord.kind == ControlRule::Kind::kChordPoint);
    REQUIRE(chord.t0 == 0.5);

    REQUIRE_THROWS_AS(shenet::parse_control_rule("literal:nope"), shenet::ConfigError);
    REQUIRE_THROWS_AS(shenet::parse_control_rule("literal:1.5"), shenet::ConfigError);
    REQUIRE_THROWS_AS(shenet::parse_control_rule("spline"), shenet::ConfigError);
}

TEST_CASE("effective recluster count follows beta") {
    shenet::Config::Bank bank;
    bank.k_recluster = 5;
    REQUIRE(shenet::effective_k_recluster(bank) == 5);

    bank.k_recluster = 0;
    bank.beta = std::numeric_limits<std::int64_t>::max();
    REQUIRE(shenet::effective_k_recluster(bank) == 1);

    bank.beta = 32;
    REQUIRE(shenet::effective_k_recluster(bank) == 8);
    bank.beta = 2;
    REQUIRE(shenet::effective_k_recluster(bank) == 1);
    bank.beta = 10;
    REQUIRE(shenet::effective_k_recluster(bank) == 3);  // llround(2.5) rounds up
}
