#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>

#include "t2ue/data/png_io.hpp"
#include "t2ue/eval/metrics.hpp"
#include "t2ue/eval/report.hpp"
#include "t2ue/models/classifier.hpp"
#include "t2ue/pipeline.hpp"
#include "t2ue/protect/protect.hpp"

using namespace t2ue;
namespace fs = std::filesystem;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out;
};

RunConfig resolve_config(const GlobalOpts& g) {
    RunConfig cfg;
    if (!g.config_path.empty()) {
        cfg = RunConfig::load_file(g.config_path);
    } else if (const char* env = std::getenv("T2UE_OUT")) {
        cfg.output_root = env;
    }
    if (g.seed) {
        cfg.seed = *g.seed;  // the global seed override re-derives every section seed
        cfg.derive_seeds();
        cfg.dataset.seed = hash_str(cfg.seed, "dataset");
    }
    if (g.out) cfg.output_root = *g.out;
    cfg.validate();
    return cfg;
}

void print_retrieval(const RetrievalPair& r) {
    auto line = [](const char* name, const RetrievalResult& res) {
        std::printf("%s:", name);
        for (const auto& [k, v] : res.hit_at) std::printf("  Hit@%d %.2f", k, v);
        std::printf("  MedR %.1f\n", res.medr);
    };
    line("I2T", r.i2t);
    line("T2I", r.t2i);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"text-conditioned unlearnable-example pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON run configuration");
    uint64_t seed_val = 0;
    auto* seed_opt = app.add_option("--seed", seed_val, "override the global seed (re-derives section seeds)");
    std::string out_val;
    auto* out_opt = app.add_option("--out", out_val, "override the output root");

    // dataset gen
    auto* ds = app.add_subcommand("dataset", "corpus commands");
    auto* ds_gen = ds->add_subcommand("gen", "generate the captioned-shapes corpus");
    std::string split = "both";
    ds_gen->add_option("--split", split, "train | test | both")->check(CLI::IsMember({"train", "test", "both"}));

    // surrogate train
    auto* sur = app.add_subcommand("surrogate", "surrogate commands");
    sur->add_subcommand("train", "train and freeze the surrogate encoder pair");

    // generator train
    auto* gen = app.add_subcommand("generator", "noise generator commands");
    gen->add_subcommand("train", "train the noise generator against the frozen surrogate");

    // protect
    auto* prot = app.add_subcommand("protect", "export a protected dataset");
    std::string prot_mode = "class_wise", prot_split = "train";
    std::string prot_gen_path, prot_sur_path, prot_in, prot_out;
    uint64_t prot_plan_seed = 0;
    bool prot_plan_seed_set = false;
    prot->add_option("--mode", prot_mode, "class_wise | sample_wise")
        ->check(CLI::IsMember({"class_wise", "sample_wise"}));
    prot->add_option("--split", prot_split, "dataset split to protect");
    prot->add_option("--generator", prot_gen_path, "generator checkpoint (default: run layout)");
    prot->add_option("--surrogate", prot_sur_path, "surrogate checkpoint (default: run layout)");
    prot->add_option("--in", prot_in, "input manifest (default: run layout)");
    prot->add_option("--out-dir", prot_out, "output directory (default: run layout)");
    prot->add_option("--plan-seed", prot_plan_seed, "protection plan seed")
        ->each([&](const std::string&) { prot_plan_seed_set = true; });

    // victim train
    auto* vic = app.add_subcommand("victim", "victim commands");
    auto* vic_train = vic->add_subcommand("train", "train a victim model on a data source");
    std::string v_name, v_paradigm = "supervised", v_arch = "conv4", v_defense = "none", v_source = "clean";
    double v_ratio = 1.0;
    vic_train->add_option("--name", v_name, "run name (default derived)");
    vic_train->add_option("--paradigm", v_paradigm, "supervised | contrastive")
        ->check(CLI::IsMember({"supervised", "contrastive"}));
    vic_train->add_option("--arch", v_arch, "conv4 | conv6_wide | conv4_residual");
    vic_train->add_option("--defense", v_defense, "none | cutout | mixup | augproxy");
    vic_train->add_option("--poison-ratio", v_ratio, "fraction of protected samples in [0,1]");
    vic_train->add_option("--source", v_source, "clean | t2ue_class_wise | t2ue_sample_wise | em | random");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluation commands");
    auto* ev_ret = ev->add_subcommand("retrieval", "cross-modal retrieval metrics for a dual encoder");
    std::string ev_ckpt, ev_data;
    ev_ret->add_option("--checkpoint", ev_ckpt, "dual-encoder checkpoint")->required();
    ev_ret->add_option("--data", ev_data, "manifest.json of the evaluation split")->required();
    auto* ev_cls = ev->add_subcommand("classify", "top-1 accuracy for a classifier checkpoint");
    std::string ec_ckpt, ec_data;
    ev_cls->add_option("--checkpoint", ec_ckpt, "classifier checkpoint")->required();
    ev_cls->add_option("--data", ec_data, "manifest.json of the evaluation split")->required();

    // bench
    auto* bench = app.add_subcommand("bench", "benchmarks");
    bench->add_subcommand("time", "median noise-generation time for t2ue / em / random");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "sweeps");
    sweep->add_subcommand("checkpoints", "victim accuracy vs generator checkpoint epoch");

    // report
    app.add_subcommand("report", "collect stage results into report.json, tables.csv and plots");

    // reproduce-all
    auto* repro = app.add_subcommand("reproduce-all", "run the full pipeline end to end");
    int jobs = 1;
    std::string profile;
    repro->add_option("--jobs", jobs, "parallel victim workers (default 1)");
    repro->add_option("--profile", profile, "full | smoke");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);       // prints help or the usage message
        return rc == 0 ? 0 : 1;    // any parse failure is a validation error
    }

    try {
        if (seed_opt->count()) g.seed = seed_val;
        if (out_opt->count()) g.out = out_val;
        RunConfig cfg = resolve_config(g);

        if (ds_gen->parsed()) {
            fs::create_directories(cfg.output_root);
            pipeline::freeze_config(cfg, cfg.output_root);
            if (split == "both") {
                pipeline::dataset_stage(cfg);
            } else {
                generate_dataset(cfg.dataset, split, pipeline::paths(cfg).dataset_dir(split));
            }
            std::printf("dataset written under %s\n", pipeline::paths(cfg).dataset_dir("").c_str());
            return 0;
        }
        if (sur->parsed()) {
            pipeline::freeze_config(cfg, cfg.output_root);
            auto r = pipeline::surrogate_stage(cfg);
            std::printf("surrogate test I2T Hit@1 %.2f (checkpoint %s)\n", r.at("test_i2t_hit1").get<double>(),
                        pipeline::paths(cfg).surrogate_ckpt().c_str());
            return 0;
        }
        if (gen->parsed()) {
            pipeline::freeze_config(cfg, cfg.output_root);
            auto r = pipeline::generator_stage(cfg);
            std::printf("generator alignment loss %.4f -> %.4f\n", r.at("epoch0_loss").get<double>(),
                        r.at("final_loss").get<double>());
            return 0;
        }
        if (prot->parsed()) {
            pipeline::Paths p = pipeline::paths(cfg);
            if (prot_plan_seed_set) cfg.plan_seed = prot_plan_seed;
            ProtectMode mode = protect_mode_from_string(prot_mode);
            if (prot_gen_path.empty() && prot_sur_path.empty() && prot_in.empty() && prot_out.empty()) {
                auto r = pipeline::protect_stage(cfg, mode, prot_split);
                std::printf("protected %d samples, plan %s\n", r.at("entries").get<int>(),
                            r.at("plan_hash").get<std::string>().c_str());
                return 0;
            }
            std::string gen_path = prot_gen_path.empty() ? p.generator_dir() + "/gen_final.t2ue" : prot_gen_path;
            std::string sur_path = prot_sur_path.empty() ? p.surrogate_ckpt() : prot_sur_path;
            std::string in_path = prot_in.empty() ? p.dataset_manifest(prot_split) : prot_in;
            std::string out_dir = prot_out.empty() ? p.protected_dir(prot_mode) : prot_out;
            Dataset data = Dataset::from_manifest(in_path);
            DualEncoder<float> s = DualEncoder<float>::load(sur_path);
            Generator<float> gmodel = Generator<float>::load(gen_path);
            ProtectionPlan plan = make_plan(mode, data.spec, data.split, cfg.plan_seed, gmodel.cfg.latent_dim,
                                            gmodel.cfg.epsilon_num, cfg.fixed_template);
            ExportOptions opts;
            opts.generator_hash = hash_hex(file_hash(gen_path));
            export_protected(data, gmodel, s, plan, out_dir, opts);
            plan.save(out_dir + "/plan.json");
            std::printf("protected dataset + plan.json written to %s\n", out_dir.c_str());
            return 0;
        }
        if (vic_train->parsed()) {
            pipeline::VictimSpec spec;
            spec.paradigm = v_paradigm;
            spec.arch = arch_from_string(v_arch);
            spec.defense = defense_from_string(v_defense);
            spec.poison_ratio = v_ratio;
            spec.source = v_source;
            spec.name = !v_name.empty() ? v_name
                                        : v_paradigm.substr(0, 3) + "_" + v_source + "_" + v_arch +
                                              (v_defense != "none" ? "_" + v_defense : "");
            if (spec.poison_ratio < 0.0 || spec.poison_ratio > 1.0)
                throw std::invalid_argument("poison-ratio must be in [0,1]");
            auto r = pipeline::victim_stage(cfg, spec);
            if (spec.paradigm == "supervised")
                std::printf("victim %s final top-1 %.2f\n", spec.name.c_str(), r.at("final_top1").get<double>());
            else
                std::printf("victim %s final I2T Hit@1 %.2f\n", spec.name.c_str(),
                            r.at("final_i2t_hit1").get<double>());
            return 0;
        }
        if (ev_ret->parsed()) {
            DualEncoder<float> m = DualEncoder<float>::load(ev_ckpt);
            Dataset data = Dataset::from_manifest(ev_data);
            print_retrieval(retrieval_eval(m, data, cfg.k_list));
            return 0;
        }
        if (ev_cls->parsed()) {
            Classifier<float> m = Classifier<float>::load(ec_ckpt);
            Dataset data = Dataset::from_manifest(ec_data);
            std::printf("top-1 accuracy: %.2f\n", round2(classify_eval(m, data)));
            return 0;
        }
        if (bench->parsed()) {
            auto r = pipeline::bench_stage(cfg);
            std::printf("bench: order_ok=%s t2ue>=3x_em=%s (details in %s)\n",
                        r.at("order_ok").get<bool>() ? "yes" : "no",
                        r.at("t2ue_at_least_3x_faster_than_em").get<bool>() ? "yes" : "no",
                        (pipeline::paths(cfg).bench_dir() + "/timings.csv").c_str());
            return 0;
        }
        if (sweep->parsed()) {
            auto r = pipeline::sweep_stage(cfg);
            std::printf("sweep: first %.2f final %.2f (drop %.2f)\n", r.at("first_accuracy").get<double>(),
                        r.at("final_accuracy").get<double>(), r.at("drop").get<double>());
            return 0;
        }
        if (app.get_subcommand("report")->parsed()) {
            pipeline::report_stage(cfg);
            std::printf("report.json, tables.csv and plots written under %s\n", cfg.output_root.c_str());
            return 0;
        }
        if (repro->parsed()) {
            if (!profile.empty()) cfg.apply_profile(profile);
            auto rep = pipeline::reproduce_all(cfg, jobs);
            int pass = 0, total = 0;
            for (const auto& [name, c] : rep.at("criteria").items()) {
                bool ok = c.at("pass").get<bool>();
                std::printf("%-28s %s\n", name.c_str(), ok ? "PASS" : "FAIL");
                pass += ok;
                ++total;
            }
            std::printf("reproduce-all: %d/%d criteria sections pass; report at %s/report.json\n", pass, total,
                        cfg.output_root.c_str());
            return 0;
        }
        throw std::invalid_argument("no subcommand matched");
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::out_of_range& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return 2;
    }
}
