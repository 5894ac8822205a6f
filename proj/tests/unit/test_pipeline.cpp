#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "t2ue/pipeline.hpp"

using namespace t2ue;
namespace fs = std::filesystem;

TEST_CASE("run config rejects unknown keys and bad values") {
    CHECK_THROWS_AS((void)RunConfig::from_json({{"no_such_section", 1}}), std::invalid_argument);
    CHECK_THROWS_AS((void)RunConfig::from_json({{"dataset", {{"bogus_field", 2}}}}), std::invalid_argument);
    CHECK_THROWS_AS((void)RunConfig::from_json({{"surrogate", {{"train", {{"lr", -1.0}}}}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)RunConfig::from_json({{"victim", {{"supervised", {{"optimizer", "lbfgs"}}}}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)RunConfig::from_json({{"profile", "enormous"}}), std::invalid_argument);
}

TEST_CASE("run config: section seeds derive from the global seed") {
    RunConfig a = RunConfig::from_json({{"seed", 5}});
    RunConfig b = RunConfig::from_json({{"seed", 5}});
    RunConfig c = RunConfig::from_json({{"seed", 6}});
    CHECK(a.surrogate_train.seed == b.surrogate_train.seed);
    CHECK(a.generator_train.seed == b.generator_train.seed);
    CHECK(a.dataset.seed == b.dataset.seed);
    CHECK(a.surrogate_train.seed != c.surrogate_train.seed);
    CHECK(a.surrogate_train.seed != a.generator_train.seed);

    // an explicit section seed wins over derivation
    RunConfig d = RunConfig::from_json({{"seed", 5}, {"surrogate", {{"train", {{"seed", 123}}}}}});
    CHECK(d.surrogate_train.seed == 123);
    CHECK(d.generator_train.seed == a.generator_train.seed);
}

TEST_CASE("run config: json round trip preserves resolved values") {
    RunConfig a = RunConfig::from_json(
        {{"seed", 9}, {"generator", {{"train", {{"epochs", 7}}}, {"model", {{"block_channels", {16, 8, 4}}}}}}});
    RunConfig b = RunConfig::from_json(a.to_json());
    CHECK(b.generator_train.epochs == 7);
    CHECK(b.generator_model.block_channels == std::vector<int>{16, 8, 4});
    CHECK(b.seed == 9);
    CHECK(a.to_json().dump() == b.to_json().dump());
}

TEST_CASE("run config: smoke profile shrinks every stage") {
    RunConfig c;
    c.apply_profile("smoke");
    CHECK(c.dataset.samples_per_class_train < 20);
    CHECK(c.surrogate_train.epochs <= 3);
    CHECK(c.victim_supervised.epochs <= 3);
    c.validate();
}

TEST_CASE("config file loading resolves output_root and env override") {
    fs::path dir = fs::temp_directory_path() / "t2ue_cfg";
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "cfg.json");
        os << R"({"seed": 3, "output_root": "rel_out"})";
    }
    RunConfig c = RunConfig::load_file((dir / "cfg.json").string());
    CHECK(fs::path(c.output_root).is_absolute());
    CHECK(c.output_root.find("rel_out") != std::string::npos);

    setenv("T2UE_OUT", "/tmp/t2ue_env_out", 1);
    RunConfig e = RunConfig::load_file((dir / "cfg.json").string());
    CHECK(e.output_root == "/tmp/t2ue_env_out");
    unsetenv("T2UE_OUT");

    CHECK_THROWS_AS((void)RunConfig::load_file("/nonexistent/cfg.json"), std::invalid_argument);
}

TEST_CASE("victim matrix names are unique and cover the standard sources") {
    auto v = pipeline::standard_victims();
    std::set<std::string> names;
    int contrastive = 0, em = 0;
    for (const auto& s : v) {
        CHECK(names.insert(s.name).second);
        if (s.paradigm == "contrastive") ++contrastive;
        if (s.source == "em") ++em;
    }
    CHECK(contrastive == 3);
    CHECK(em == 1);
    CHECK(v.size() >= 16);
}
