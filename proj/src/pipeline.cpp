#include "t2ue/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include "t2ue/eval/metrics.hpp"
#include "t2ue/eval/report.hpp"
#include "t2ue/models/classifier.hpp"
#include "t2ue/models/dual_encoder.hpp"
#include "t2ue/nn/checkpoint.hpp"
#include "t2ue/protect/protect.hpp"
#include "t2ue/victim/augment.hpp"
#include "t2ue/victim/em_baseline.hpp"

namespace fs = std::filesystem;

namespace t2ue {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
}

double elapsed_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_result(const std::string& dir, const nlohmann::json& j) {
    fs::create_directories(dir);
    std::ofstream os(fs::path(dir) / "result.json", std::ios::trunc | std::ios::binary);
    if (!os) throw std::runtime_error("pipeline: cannot write result.json in " + dir);
    os << dump_canonical(j);
}

nlohmann::json read_result(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "result.json");
    if (!is) throw std::runtime_error("pipeline: missing result.json in " + dir + " (stage not run yet?)");
    return nlohmann::json::parse(is);
}

void append_timing(const std::string& root, const std::string& stage, double seconds) {
    fs::create_directories(root);
    std::ofstream os(fs::path(root) / "timings.csv", std::ios::app);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%.3f\n", stage.c_str(), seconds);
    os << buf;
}

std::vector<CurvePoint> to_curve(const std::vector<EpochRecord>& log) {
    std::vector<CurvePoint> c;
    for (const auto& r : log) c.push_back({r.epoch, r.train_loss, r.test_metric});
    return c;
}

nlohmann::json curve_json(const std::vector<EpochRecord>& log) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : log) a.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"test_metric", r.test_metric}});
    return a;
}

Dataset subset_per_class(const Dataset& d, int per_class) {
    Dataset out;
    out.spec = d.spec;
    out.split = d.split;
    std::vector<int> taken(static_cast<size_t>(d.spec.num_classes()), 0);
    for (const auto& s : d.samples)
        if (taken[static_cast<size_t>(s.class_id)] < per_class) {
            out.samples.push_back(s);
            ++taken[static_cast<size_t>(s.class_id)];
        }
    return out;
}

}  // namespace

RunConfig::RunConfig() {
    surrogate_train.epochs = 30;
    surrogate_train.lr = 1e-3;
    surrogate_train.optimizer = OptKind::adam;

    generator_train.epochs = 200;
    generator_train.lr = 1e-4;
    generator_train.optimizer = OptKind::adam;
    generator_train.weight_decay = 1e-4;
    generator_train.checkpoint_every = 15;

    victim_supervised.epochs = 60;
    victim_supervised.optimizer = OptKind::sgd;
    victim_supervised.lr = 0.1;
    victim_supervised.weight_decay = 5e-4;

    victim_contrastive.epochs = 30;
    victim_contrastive.lr = 1e-3;
    victim_contrastive.optimizer = OptKind::adam;

    derive_seeds();
}

void RunConfig::derive_seeds() {
    dataset.seed = hash_str(seed, "dataset");
    surrogate_train.seed = hash_str(seed, "surrogate");
    generator_train.seed = hash_str(seed, "generator");
    plan_seed = hash_str(seed, "plan");
    victim_supervised.seed = hash_str(seed, "victim.supervised");
    victim_contrastive.seed = hash_str(seed, "victim.contrastive");
}

void RunConfig::apply_profile(const std::string& name) {
    profile = name;
    if (name == "full") return;
    if (name != "smoke") throw std::invalid_argument("config: unknown profile '" + name + "'");
    dataset.samples_per_class_train = 8;
    dataset.samples_per_class_test = 4;
    surrogate_train.epochs = 2;
    surrogate_train.batch_size = 32;
    generator_train.epochs = 2;
    generator_train.batch_size = 32;
    generator_train.checkpoint_every = 1;
    victim_supervised.epochs = 2;
    victim_supervised.batch_size = 32;
    victim_contrastive.epochs = 2;
    victim_contrastive.batch_size = 32;
    quick_epochs = 1;
    quick_per_class = 4;
    bench_per_class = 2;
    bench_reps = 3;
}

void RunConfig::validate() const {
    dataset.validate();
    surrogate_train.validate();
    generator_model.validate();
    generator_train.validate();
    victim_supervised.validate();
    victim_contrastive.validate();
    if (generator_model.output_size() != dataset.image_size)
        throw std::invalid_argument("config: generator output size does not match dataset image_size");
    if (fixed_template < 0 || fixed_template >= static_cast<int>(dataset.caption_templates.size()))
        throw std::invalid_argument("config: fixed_template out of range");
    if (bench_reps < 3) throw std::invalid_argument("config: bench_reps must be >= 3");
    for (int k : k_list)
        if (k < 1) throw std::invalid_argument("config: k_list entries must be >= 1");
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json gm = {{"latent_dim", generator_model.latent_dim},
                         {"cond_dim", generator_model.cond_dim},
                         {"base_channels", generator_model.base_channels},
                         {"base_size", generator_model.base_size},
                         {"block_channels", generator_model.block_channels},
                         {"epsilon_num", generator_model.epsilon_num},
                         {"leaky_slope", generator_model.leaky_slope},
                         {"head_init", generator_model.head_init}};
    return {{"seed", seed},
            {"output_root", output_root},
            {"profile", profile},
            {"dataset", dataset.to_json()},
            {"surrogate", {{"train", surrogate_train.to_json()}}},
            {"generator", {{"model", gm}, {"train", generator_train.to_json()}}},
            {"protection", {{"plan_seed", plan_seed}, {"fixed_template", fixed_template}}},
            {"victim",
             {{"supervised", victim_supervised.to_json()},
              {"contrastive", victim_contrastive.to_json()},
              {"cutout_size", cutout_size},
              {"mixup_alpha", mixup_alpha},
              {"quick_epochs", quick_epochs},
              {"quick_per_class", quick_per_class}}},
            {"eval", {{"k_list", k_list}, {"bench_per_class", bench_per_class}, {"bench_reps", bench_reps}}}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    check_keys(j, {"seed", "output_root", "profile", "dataset", "surrogate", "generator", "protection", "victim",
                   "eval"},
               "top level");
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.derive_seeds();
    c.output_root = j.value("output_root", c.output_root);
    if (j.contains("profile")) c.apply_profile(j.at("profile").get<std::string>());
    if (j.contains("dataset")) {
        check_keys(j.at("dataset"),
                   {"image_size", "shapes", "colors", "samples_per_class_train", "samples_per_class_test",
                    "caption_templates", "seed"},
                   "dataset");
        DatasetSpec base = c.dataset;
        c.dataset = DatasetSpec::from_json(j.at("dataset"));
        if (!j.at("dataset").contains("seed")) c.dataset.seed = base.seed;
    }
    if (j.contains("surrogate")) {
        check_keys(j.at("surrogate"), {"train"}, "surrogate");
        if (j.at("surrogate").contains("train")) {
            auto& t = j.at("surrogate").at("train");
            check_keys(t, {"epochs", "batch_size", "optimizer", "lr", "weight_decay", "schedule", "seed",
                           "checkpoint_every"},
                       "surrogate.train");
            uint64_t derived = c.surrogate_train.seed;
            c.surrogate_train = TrainConfig::from_json(t);
            if (!t.contains("seed")) c.surrogate_train.seed = derived;
        }
    }
    if (j.contains("generator")) {
        check_keys(j.at("generator"), {"model", "train"}, "generator");
        if (j.at("generator").contains("model")) {
            auto& m = j.at("generator").at("model");
            check_keys(m, {"latent_dim", "cond_dim", "base_channels", "base_size", "block_channels", "epsilon_num",
                           "leaky_slope", "head_init"},
                       "generator.model");
            GeneratorConfig g = c.generator_model;
            g.latent_dim = m.value("latent_dim", g.latent_dim);
            g.cond_dim = m.value("cond_dim", g.cond_dim);
            g.base_channels = m.value("base_channels", g.base_channels);
            g.base_size = m.value("base_size", g.base_size);
            if (m.contains("block_channels")) g.block_channels = m.at("block_channels").get<std::vector<int>>();
            g.epsilon_num = m.value("epsilon_num", g.epsilon_num);
            g.leaky_slope = m.value("leaky_slope", g.leaky_slope);
            g.head_init = m.value("head_init", g.head_init);
            c.generator_model = g;
        }
        if (j.at("generator").contains("train")) {
            auto& t = j.at("generator").at("train");
            check_keys(t, {"epochs", "batch_size", "optimizer", "lr", "weight_decay", "schedule", "seed",
                           "checkpoint_every"},
                       "generator.train");
            uint64_t derived = c.generator_train.seed;
            TrainConfig base = c.generator_train;
            c.generator_train = TrainConfig::from_json(t);
            if (!t.contains("seed")) c.generator_train.seed = derived;
            if (!t.contains("lr")) c.generator_train.lr = base.lr;
            if (!t.contains("weight_decay")) c.generator_train.weight_decay = base.weight_decay;
            if (!t.contains("checkpoint_every")) c.generator_train.checkpoint_every = base.checkpoint_every;
        }
    }
    if (j.contains("protection")) {
        check_keys(j.at("protection"), {"plan_seed", "fixed_template"}, "protection");
        c.plan_seed = j.at("protection").value("plan_seed", c.plan_seed);
        c.fixed_template = j.at("protection").value("fixed_template", c.fixed_template);
    }
    if (j.contains("victim")) {
        check_keys(j.at("victim"),
                   {"supervised", "contrastive", "cutout_size", "mixup_alpha", "quick_epochs", "quick_per_class"},
                   "victim");
        auto& v = j.at("victim");
        static const std::set<std::string> tkeys = {"epochs", "batch_size", "optimizer", "lr", "weight_decay",
                                                    "schedule", "seed", "checkpoint_every"};
        if (v.contains("supervised")) {
            check_keys(v.at("supervised"), tkeys, "victim.supervised");
            uint64_t derived = c.victim_supervised.seed;
            TrainConfig base = c.victim_supervised;
            c.victim_supervised = TrainConfig::from_json(v.at("supervised"));
            if (!v.at("supervised").contains("seed")) c.victim_supervised.seed = derived;
            if (!v.at("supervised").contains("optimizer")) c.victim_supervised.optimizer = base.optimizer;
            if (!v.at("supervised").contains("lr")) c.victim_supervised.lr = base.lr;
            if (!v.at("supervised").contains("weight_decay")) c.victim_supervised.weight_decay = base.weight_decay;
            if (!v.at("supervised").contains("epochs")) c.victim_supervised.epochs = base.epochs;
        }
        if (v.contains("contrastive")) {
            check_keys(v.at("contrastive"), tkeys, "victim.contrastive");
            uint64_t derived = c.victim_contrastive.seed;
            c.victim_contrastive = TrainConfig::from_json(v.at("contrastive"));
            if (!v.at("contrastive").contains("seed")) c.victim_contrastive.seed = derived;
        }
        c.cutout_size = v.value("cutout_size", c.cutout_size);
        c.mixup_alpha = v.value("mixup_alpha", c.mixup_alpha);
        c.quick_epochs = v.value("quick_epochs", c.quick_epochs);
        c.quick_per_class = v.value("quick_per_class", c.quick_per_class);
    }
    if (j.contains("eval")) {
        check_keys(j.at("eval"), {"k_list", "bench_per_class", "bench_reps"}, "eval");
        if (j.at("eval").contains("k_list")) c.k_list = j.at("eval").at("k_list").get<std::vector<int>>();
        c.bench_per_class = j.at("eval").value("bench_per_class", c.bench_per_class);
        c.bench_reps = j.at("eval").value("bench_reps", c.bench_reps);
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("config: cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const std::exception& e) {
        throw std::invalid_argument("config: parse error in " + path + ": " + e.what());
    }
    RunConfig c = from_json(j);
    // paths are relative to the config file location
    fs::path base = fs::path(path).parent_path();
    if (!c.output_root.empty() && !fs::path(c.output_root).is_absolute())
        c.output_root = (base / c.output_root).lexically_normal().string();
    if (const char* env = std::getenv("T2UE_OUT")) c.output_root = env;
    return c;
}

namespace pipeline {

Paths paths(const RunConfig& cfg) { return Paths{cfg.output_root}; }

void freeze_config(const RunConfig& cfg, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream os(fs::path(dir) / "resolved_config.json", std::ios::trunc | std::ios::binary);
    os << dump_canonical(cfg.to_json());
}

nlohmann::json dataset_stage(const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = paths(cfg);
    DatasetManifest train = generate_dataset(cfg.dataset, "train", p.dataset_dir("train"));
    DatasetManifest test = generate_dataset(cfg.dataset, "test", p.dataset_dir("test"));
    nlohmann::json res = {{"stage", "dataset"},
                          {"classes", cfg.dataset.num_classes()},
                          {"train_entries", train.entries.size()},
                          {"test_entries", test.entries.size()}};
    write_result(p.root + "/dataset", res);
    append_timing(p.root, "dataset", elapsed_since(t0));
    return res;
}

nlohmann::json surrogate_stage(const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = paths(cfg);
    Dataset train = Dataset::from_manifest(p.dataset_manifest("train"));
    Dataset test = Dataset::from_manifest(p.dataset_manifest("test"));

    DualEncoder<float> model;
    Rng rng(hash_str(cfg.surrogate_train.seed, "init"));
    model.init(rng, {}, Vocab::build(cfg.dataset.caption_templates, cfg.dataset.colors, cfg.dataset.shapes));

    auto log = train_contrastive(model, train, cfg.surrogate_train);
    model.set_frozen(true);
    fs::create_directories(p.surrogate_dir());
    model.save(p.surrogate_ckpt());
    write_curve_csv(p.surrogate_dir() + "/log.csv", to_curve(log));

    RetrievalPair test_r = retrieval_eval(model, test, cfg.k_list);
    RetrievalPair train_r = retrieval_eval(model, train, cfg.k_list);
    nlohmann::json res = {{"stage", "surrogate"},
                          {"epochs", cfg.surrogate_train.epochs},
                          {"first_epoch_loss", log.front().train_loss},
                          {"final_loss", log.back().train_loss},
                          {"train_i2t_hit1", train_r.i2t.hit_at.at(1)},
                          {"test_i2t_hit1", test_r.i2t.hit_at.at(1)},
                          {"test_i2t_medr", test_r.i2t.medr},
                          {"test_t2i_hit1", test_r.t2i.hit_at.at(1)},
                          {"checkpoint_hash", hash_hex(file_hash(p.surrogate_ckpt()))}};
    write_result(p.surrogate_dir(), res);
    append_timing(p.root, "surrogate", elapsed_since(t0));
    return res;
}

nlohmann::json generator_stage(const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = paths(cfg);
    Dataset train = Dataset::from_manifest(p.dataset_manifest("train"));
    DualEncoder<float> surrogate = DualEncoder<float>::load(p.surrogate_ckpt());
    std::string sur_hash_before = hash_hex(file_hash(p.surrogate_ckpt()));

    Generator<float> gen;
    Rng rng(hash_str(cfg.generator_train.seed, "init"));
    gen.init(rng, cfg.generator_model);

    double clean_loss = clean_alignment_loss(train, surrogate, cfg.generator_train.batch_size,
                                             hash_str(cfg.seed, "cleanref"));
    auto log = train_generator(train, surrogate, gen, cfg.generator_train, p.generator_dir());
    gen.save(p.generator_dir() + "/gen_final.t2ue");

    // per-epoch log with wall time and checkpoint path
    {
        std::ofstream os(p.generator_dir() + "/log.csv", std::ios::trunc);
        os << "epoch,alignment_loss,seconds,checkpoint\n";
        char buf[256];
        for (const auto& r : log) {
            std::snprintf(buf, sizeof(buf), "%d,%.6g,%.3f,%s\n", r.epoch, r.train_loss, r.seconds,
                          r.checkpoint.c_str());
            os << buf;
        }
    }

    double first = log.front().train_loss;  // untrained reference
    // smoothed final loss, window 5 over trained epochs
    double smoothed = 0.0;
    {
        int n = 0;
        for (int i = static_cast<int>(log.size()) - 1; i >= 1 && n < 5; --i, ++n) smoothed += log[static_cast<size_t>(i)].train_loss;
        smoothed /= std::max(1, n);
    }
    std::string sur_hash_after = hash_hex(file_hash(p.surrogate_ckpt()));
    nlohmann::json res = {{"stage", "generator"},
                          {"epochs", cfg.generator_train.epochs},
                          {"clean_alignment_loss", clean_loss},
                          {"epoch0_within_20pct_of_clean", std::fabs(first - clean_loss) <= 0.2 * clean_loss},
                          {"epoch0_loss", first},
                          {"final_loss", log.back().train_loss},
                          {"smoothed_final_loss", smoothed},
                          {"descent_ratio", smoothed / first},
                          {"surrogate_hash_unchanged", sur_hash_before == sur_hash_after},
                          {"checkpoint_hash", hash_hex(file_hash(p.generator_dir() + "/gen_final.t2ue"))}};
    write_result(p.generator_dir(), res);
    append_timing(p.root, "generator", elapsed_since(t0));
    return res;
}

nlohmann::json protect_stage(const RunConfig& cfg, ProtectMode mode, const std::string& split) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = paths(cfg);
    Dataset data = Dataset::from_manifest(p.dataset_manifest(split));
    DualEncoder<float> surrogate = DualEncoder<float>::load(p.surrogate_ckpt());
    Generator<float> gen = Generator<float>::load(p.generator_dir() + "/gen_final.t2ue");

    ProtectionPlan plan = make_plan(mode, cfg.dataset, split, cfg.plan_seed, gen.cfg.latent_dim,
                                    gen.cfg.epsilon_num, cfg.fixed_template);
    std::string dir = p.protected_dir(protect_mode_name(mode));
    ExportOptions opts;
    opts.generator_hash = hash_hex(file_hash(p.generator_dir() + "/gen_final.t2ue"));
    DatasetManifest m = export_protected(data, gen, surrogate, plan, dir, opts);
    plan.save(dir + "/plan.json");

    // bound audit over the exported pixels
    Dataset prot = Dataset::from_manifest(dir + "/manifest.json");
    double max_abs = 0.0;
    for (int i = 0; i < prot.size(); ++i) {
        const auto& a = prot.samples[static_cast<size_t>(i)].image.data;
        const auto& b = data.samples[static_cast<size_t>(i)].image.data;
        max_abs = std::max(max_abs, static_cast<double>((a - b).abs().maxCoeff()));
    }
    const double bound = static_cast<double>(gen.cfg.epsilon_num) / 255.0 + 1.0 / 510.0;
    nlohmann::json res = {{"stage", "protect"},
                          {"mode", protect_mode_name(mode)},
                          {"split", split},
                          {"entries", m.entries.size()},
                          {"plan_hash", plan.hash_hex_str()},
                          {"max_abs_delta", max_abs},
                          {"bound_ok", max_abs <= bound + 1e-9}};
    write_result(dir, res);
    append_timing(p.root, "protect_" + protect_mode_name(mode), elapsed_since(t0));
    return res;
}

nlohmann::json em_stage(const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = paths(cfg);
    Dataset train = Dataset::from_manifest(p.dataset_manifest("train"));
    EmConfig ec;
    ec.class_wise = true;
    ec.epsilon = static_cast<double>(cfg.generator_model.epsilon_num) / 255.0;
    ec.seed = hash_str(cfg.seed, "em");
    EmResult em = em_baseline_noise(train, ec);
    Dataset prot = apply_em_noise(train, em);
    std::string dir = p.baseline_dir("em");
    export_dataset(prot, dir, {{"protected", true}, {"method", "em"}, {"zero_contact", false}});
    nlohmann::json res = {{"stage", "em"},
                          {"zero_contact", false},
                          {"rounds", ec.outer_rounds},
                          {"first_round_loss", em.round_loss.front()},
                          {"final_round_loss", em.round_loss.back()},
                          {"round_loss", em.round_loss}};
    write_result(dir, res);
    append_timing(p.root, "em", elapsed_since(t0));
    return res;
}

nlohmann::json random_stage(const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = paths(cfg);
    Dataset train = Dataset::from_manifest(p.dataset_manifest("train"));
    Rng rng(hash_str(cfg.seed, "random_noise"));
    const double eps = static_cast<double>(cfg.generator_model.epsilon_num) / 255.0;
    Dataset prot = train;
    for (auto& s : prot.samples) s.image = apply_noise(s.image, random_noise(s.image.shape, eps, rng));
    std::string dir = p.baseline_dir("random");
    export_dataset(prot, dir, {{"protected", true}, {"method", "random"}, {"zero_contact", true}});
    nlohmann::json res = {{"stage", "random"}, {"entries", prot.size()}};
    write_result(dir, res);
    append_timing(p.root, "random", elapsed_since(t0));
    return res;
}

std::vector<VictimSpec> standard_victims() {
    std::vector<VictimSpec> v;
    auto sup = [&](std::string name, std::string source, Arch arch, Defense def, double ratio) {
        VictimSpec s;
        s.name = std::move(name);
        s.paradigm = "supervised";
        s.source = std::move(source);
        s.arch = arch;
        s.defense = def;
        s.poison_ratio = ratio;
        v.push_back(s);
    };
    sup("sup_clean", "clean", Arch::conv4, Defense::none, 0.0);
    sup("sup_t2ue_cw", "t2ue_class_wise", Arch::conv4, Defense::none, 1.0);
    sup("sup_t2ue_cw_conv6_wide", "t2ue_class_wise", Arch::conv6_wide, Defense::none, 1.0);
    sup("sup_t2ue_cw_conv4_residual", "t2ue_class_wise", Arch::conv4_residual, Defense::none, 1.0);
    sup("sup_t2ue_cw_r20", "t2ue_class_wise", Arch::conv4, Defense::none, 0.2);
    sup("sup_t2ue_cw_r40", "t2ue_class_wise", Arch::conv4, Defense::none, 0.4);
    sup("sup_t2ue_cw_r60", "t2ue_class_wise", Arch::conv4, Defense::none, 0.6);
    sup("sup_t2ue_cw_r80", "t2ue_class_wise", Arch::conv4, Defense::none, 0.8);
    sup("sup_t2ue_cw_cutout", "t2ue_class_wise", Arch::conv4, Defense::cutout, 1.0);
    sup("sup_t2ue_cw_mixup", "t2ue_class_wise", Arch::conv4, Defense::mixup, 1.0);
    sup("sup_t2ue_sw", "t2ue_sample_wise", Arch::conv4, Defense::none, 1.0);
    sup("sup_em", "em", Arch::conv4, Defense::none, 1.0);
    sup("sup_random", "random", Arch::conv4, Defense::none, 1.0);

    VictimSpec c1;
    c1.name = "con_clean";
    c1.paradigm = "contrastive";
    c1.source = "clean";
    c1.poison_ratio = 0.0;
    v.push_back(c1);
    VictimSpec c2 = c1;
    c2.name = "con_t2ue_sw";
    c2.source = "t2ue_sample_wise";
    c2.poison_ratio = 1.0;
    v.push_back(c2);
    VictimSpec c3 = c1;
    c3.name = "con_random";
    c3.source = "random";
    c3.poison_ratio = 1.0;
    v.push_back(c3);
    return v;
}

namespace {

std::string source_manifest(const Paths& p, const std::string& source) {
    if (source == "clean") return p.dataset_manifest("train");
    if (source == "t2ue_class_wise") return p.protected_dir("class_wise") + "/manifest.json";
    if (source == "t2ue_sample_wise") return p.protected_dir("sample_wise") + "/manifest.json";
    if (source == "em") return p.baseline_dir("em") + "/manifest.json";
    if (source == "random") return p.baseline_dir("random") + "/manifest.json";
    throw std::invalid_argument("victim: unknown source '" + source + "'");
}

}  // namespace

nlohmann::json victim_stage(const RunConfig& cfg, const VictimSpec& spec) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = paths(cfg);
    if (spec.poison_ratio < 0.0 || spec.poison_ratio > 1.0)
        throw std::invalid_argument("poison-ratio must be in [0,1]");
    Dataset clean = Dataset::from_manifest(p.dataset_manifest("train"));
    Dataset test = Dataset::from_manifest(p.dataset_manifest("test"));

    Dataset train;
    if (spec.poison_ratio == 0.0 || spec.source == "clean") {
        train = clean;
    } else {
        Dataset prot = Dataset::from_manifest(source_manifest(p, spec.source));
        train = spec.poison_ratio == 1.0 ? prot
                                         : mix_poison(clean, prot, spec.poison_ratio, hash_str(cfg.seed, "mix"));
    }

    std::string dir = p.victim_dir(spec.name);
    fs::create_directories(dir);
    bool zero_contact = spec.source != "em";

    nlohmann::json res = {{"stage", "victim"},
                          {"name", spec.name},
                          {"paradigm", spec.paradigm},
                          {"source", spec.source},
                          {"poison_ratio", spec.poison_ratio},
                          {"zero_contact", zero_contact}};

    if (spec.paradigm == "supervised") {
        Classifier<float> model;
        Rng rng(hash_str(cfg.victim_supervised.seed, spec.name));
        model.init(rng, spec.arch, cfg.dataset.num_classes(), true);
        SupervisedConfig sc;
        sc.base = cfg.victim_supervised;
        sc.base.seed = hash_str(cfg.victim_supervised.seed, spec.name + ".train");
        sc.defense = spec.defense;
        sc.cutout_size = cfg.cutout_size;
        sc.mixup_alpha = cfg.mixup_alpha;
        auto curve = train_supervised(model, train, test, sc);
        model.save(dir + "/victim.t2ue");
        write_curve_csv(dir + "/curve.csv", to_curve(curve));
        res["arch"] = arch_name(spec.arch);
        res["defense"] = defense_name(spec.defense);
        res["final_top1"] = round2(curve.back().test_metric);
        res["final_train_loss"] = curve.back().train_loss;
        if (curve.size() >= 10) res["top1_epoch10"] = round2(curve[9].test_metric);
        res["curve"] = curve_json(curve);
    } else if (spec.paradigm == "contrastive") {
        DualEncoder<float> model;
        Rng rng(hash_str(cfg.victim_contrastive.seed, spec.name));
        DualEncoderConfig dc;
        dc.image_bn = true;  // the attacker's tower differs from the surrogate
        model.init(rng, dc, Vocab::build(cfg.dataset.caption_templates, cfg.dataset.colors, cfg.dataset.shapes));
        TrainConfig tc = cfg.victim_contrastive;
        tc.seed = hash_str(cfg.victim_contrastive.seed, spec.name + ".train");
        auto curve = train_contrastive(model, train, tc, [&](int) {
            RetrievalPair r = retrieval_eval(model, test, {1});
            return r.i2t.hit_at.at(1);
        });
        model.save(dir + "/victim.t2ue");
        write_curve_csv(dir + "/curve.csv", to_curve(curve));
        RetrievalPair r = retrieval_eval(model, test, cfg.k_list);
        res["final_i2t_hit1"] = round2(r.i2t.hit_at.at(1));
        res["final_i2t_medr"] = r.i2t.medr;
        res["final_t2i_hit1"] = round2(r.t2i.hit_at.at(1));
        res["final_t2i_medr"] = r.t2i.medr;
        nlohmann::json hits_i2t = nlohmann::json::object(), hits_t2i = nlohmann::json::object();
        for (int k : cfg.k_list) {
            hits_i2t[std::to_string(k)] = round2(r.i2t.hit_at.at(k));
            hits_t2i[std::to_string(k)] = round2(r.t2i.hit_at.at(k));
        }
        res["i2t_hit_at"] = hits_i2t;
        res["t2i_hit_at"] = hits_t2i;
        res["final_train_loss"] = curve.back().train_loss;
        res["curve"] = curve_json(curve);
    } else {
        throw std::invalid_argument("victim: unknown paradigm '" + spec.paradigm + "'");
    }
    write_result(dir, res);
    append_timing(p.root, "victim_" + spec.name, elapsed_since(t0));
    return res;
}

nlohmann::json sweep_stage(const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = paths(cfg);
    std::vector<std::string> ckpts;
    for (const auto& e : fs::directory_iterator(p.generator_dir())) {
        std::string name = e.path().filename().string();
        if (name.rfind("gen_epoch_", 0) == 0 && e.path().extension() == ".t2ue") ckpts.push_back(e.path().string());
    }
    std::sort(ckpts.begin(), ckpts.end());
    if (ckpts.size() < 2) throw std::invalid_argument("sweep: need at least 2 generator checkpoints");

    Dataset train = Dataset::from_manifest(p.dataset_manifest("train"));
    Dataset test = Dataset::from_manifest(p.dataset_manifest("test"));
    Dataset quick_train = subset_per_class(train, cfg.quick_per_class);
    DualEncoder<float> surrogate = DualEncoder<float>::load(p.surrogate_ckpt());

    nlohmann::json points = nlohmann::json::array();
    std::vector<double> xs, ys;
    for (const auto& ck : ckpts) {
        int epoch = -1;
        try {
            Generator<float> gen = Generator<float>::load(ck);
            std::string base = fs::path(ck).stem().string();
            epoch = std::stoi(base.substr(base.rfind('_') + 1));
            ProtectionPlan plan = make_plan(ProtectMode::class_wise, cfg.dataset, "train", cfg.plan_seed,
                                            gen.cfg.latent_dim, gen.cfg.epsilon_num, cfg.fixed_template);
            Dataset prot = protect_in_memory(quick_train, gen, surrogate, plan);
            Classifier<float> victim;
            Rng rng(hash_str(cfg.seed, "sweep" + std::to_string(epoch)));
            victim.init(rng, Arch::conv4, cfg.dataset.num_classes(), true);
            SupervisedConfig sc;
            sc.base = cfg.victim_supervised;
            sc.base.epochs = cfg.quick_epochs;
            sc.base.batch_size = std::min(cfg.victim_supervised.batch_size, std::max(2, quick_train.size() / 4));
            sc.base.seed = hash_str(cfg.seed, "sweepv" + std::to_string(epoch));
            auto curve = train_supervised(victim, prot, test, sc, false);
            double acc = curve.back().test_metric;
            points.push_back({{"epoch", epoch}, {"accuracy", round2(acc)}});
            xs.push_back(epoch);
            ys.push_back(acc);
            std::cerr << "[sweep] generator epoch " << epoch << " -> quick victim top1 " << acc << "\n";
        } catch (const std::exception& e) {
            std::cerr << "[sweep] skipping unreadable checkpoint " << ck << ": " << e.what() << "\n";
        }
    }
    if (points.size() < 2) throw std::runtime_error("sweep: fewer than 2 readable checkpoints");

    fs::create_directories(p.sweep_dir());
    {
        std::ofstream os(p.sweep_dir() + "/sweep.csv", std::ios::trunc);
        os << "generator_epoch,victim_top1\n";
        char buf[64];
        for (size_t i = 0; i < xs.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%d,%.6g\n", static_cast<int>(xs[i]), ys[i]);
            os << buf;
        }
    }
    write_svg_lines(p.sweep_dir() + "/sweep.svg", "Victim accuracy vs generator checkpoint", "generator epoch",
                    "top-1 accuracy (%)", {{"quick victim", xs, ys}});

    nlohmann::json res = {{"stage", "sweep"},
                          {"points", points},
                          {"first_accuracy", round2(ys.front())},
                          {"final_accuracy", round2(ys.back())},
                          {"drop", round2(ys.front() - ys.back())}};
    write_result(p.sweep_dir(), res);
    append_timing(p.root, "sweep", elapsed_since(t0));
    return res;
}

nlohmann::json bench_stage(const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    Paths p = paths(cfg);
    Dataset train = Dataset::from_manifest(p.dataset_manifest("train"));
    Dataset subset = subset_per_class(train, cfg.bench_per_class);
    DualEncoder<float> surrogate = DualEncoder<float>::load(p.surrogate_ckpt());
    Generator<float> gen = Generator<float>::load(p.generator_dir() + "/gen_final.t2ue");

    auto timed_median = [&](const std::function<void()>& fn) {
        std::vector<double> reps;
        for (int r = 0; r < cfg.bench_reps; ++r) {
            auto s = std::chrono::steady_clock::now();
            fn();
            reps.push_back(elapsed_since(s));
        }
        return median_of(reps);
    };

    double t_t2ue = timed_median([&] {
        ProtectionPlan plan = make_plan(ProtectMode::sample_wise, cfg.dataset, "train", cfg.plan_seed,
                                        gen.cfg.latent_dim, gen.cfg.epsilon_num, cfg.fixed_template);
        NoiseSynthesizer synth(gen, surrogate);
        std::vector<const PlanEntry*> entries;
        for (const auto& s : subset.samples) entries.push_back(plan.find(s.id, s.class_id));
        for (size_t start = 0; start < entries.size(); start += 64) {
            std::vector<const PlanEntry*> chunk(entries.begin() + static_cast<long>(start),
                                                entries.begin() + static_cast<long>(std::min(entries.size(), start + 64)));
            (void)synth.batch_noise(chunk);
        }
    });

    EmConfig ec;
    ec.class_wise = false;
    ec.epsilon = static_cast<double>(cfg.generator_model.epsilon_num) / 255.0;
    ec.batch_size = std::min(64, std::max(2, subset.size()));
    ec.seed = hash_str(cfg.seed, "bench_em");
    double t_em = timed_median([&] { (void)em_baseline_noise(subset, ec, false); });

    double t_random = timed_median([&] {
        Rng rng(hash_str(cfg.seed, "bench_rand"));
        const double eps = static_cast<double>(cfg.generator_model.epsilon_num) / 255.0;
        for (const auto& s : subset.samples) (void)random_noise(s.image.shape, eps, rng);
    });

    fs::create_directories(p.bench_dir());
    {
        std::ofstream os(p.bench_dir() + "/timings.csv", std::ios::trunc);
        char buf[128];
        os << "method,median_seconds,reps,samples\n";
        std::snprintf(buf, sizeof(buf), "t2ue,%.6f,%d,%d\n", t_t2ue, cfg.bench_reps, subset.size());
        os << buf;
        std::snprintf(buf, sizeof(buf), "em,%.6f,%d,%d\n", t_em, cfg.bench_reps, subset.size());
        os << buf;
        std::snprintf(buf, sizeof(buf), "random,%.6f,%d,%d\n", t_random, cfg.bench_reps, subset.size());
        os << buf;
    }
    // numeric timings stay out of report.json; only the stable facts go there
    nlohmann::json res = {{"stage", "bench"},
                          {"samples", subset.size()},
                          {"order_ok", t_random < t_t2ue && t_t2ue < t_em},
                          {"t2ue_at_least_3x_faster_than_em", t_em >= 3.0 * t_t2ue}};
    write_result(p.bench_dir(), res);
    {
        nlohmann::json detail = res;
        detail["median_seconds"] = {{"t2ue", t_t2ue}, {"em", t_em}, {"random", t_random}};
        std::ofstream os(p.bench_dir() + "/bench_detail.json", std::ios::trunc);
        os << detail.dump(2) << "\n";
    }
    append_timing(p.root, "bench", elapsed_since(t0));
    return res;
}

nlohmann::json report_stage(const RunConfig& cfg) {
    Paths p = paths(cfg);
    nlohmann::json rep;
    rep["seed"] = cfg.seed;
    rep["profile"] = cfg.profile;
    rep["config"] = cfg.to_json();
    rep["dataset"] = read_result(p.root + "/dataset");
    rep["surrogate"] = read_result(p.surrogate_dir());
    rep["generator"] = read_result(p.generator_dir());
    rep["protection"] = {{"class_wise", read_result(p.protected_dir("class_wise"))},
                         {"sample_wise", read_result(p.protected_dir("sample_wise"))}};
    rep["baselines"] = {{"em", read_result(p.baseline_dir("em"))}, {"random", read_result(p.baseline_dir("random"))}};
    nlohmann::json victims = nlohmann::json::object();
    std::vector<nlohmann::json> table_rows;
    for (const auto& spec : standard_victims()) {
        nlohmann::json v = read_result(p.victim_dir(spec.name));
        nlohmann::json row = v;
        row.erase("curve");
        table_rows.push_back(row);
        victims[spec.name] = std::move(v);
    }
    rep["victims"] = victims;
    rep["sweep"] = read_result(p.sweep_dir());
    rep["bench"] = read_result(p.bench_dir());

    // headline criteria summary (directional checks over the toy corpus)
    const double chance = 100.0 / cfg.dataset.num_classes();
    auto sup = [&](const std::string& n) { return victims.at(n).at("final_top1").get<double>(); };
    auto con_hit1 = [&](const std::string& n) { return victims.at(n).at("final_i2t_hit1").get<double>(); };
    nlohmann::json crit;
    {
        double clean = con_hit1("con_clean"), prot = con_hit1("con_t2ue_sw"), rnd = con_hit1("con_random");
        crit["contrastive_protection"] = {{"clean_i2t_hit1", clean},
                                          {"t2ue_i2t_hit1", prot},
                                          {"random_i2t_hit1", rnd},
                                          {"pass", clean >= 80.0 && prot <= 0.5 * clean && std::fabs(rnd - clean) <= 10.0}};
    }
    {
        double clean = sup("sup_clean"), cw = sup("sup_t2ue_cw"), em = sup("sup_em");
        crit["supervised_transfer"] = {{"clean_top1", clean},
                                       {"t2ue_class_wise_top1", cw},
                                       {"em_top1", em},
                                       {"em_zero_contact", victims.at("sup_em").at("zero_contact").get<bool>()},
                                       {"pass", clean >= 90.0 && cw <= chance + 10.0 && em <= chance + 10.0}};
    }
    {
        double a = sup("sup_t2ue_cw"), b = sup("sup_t2ue_cw_conv6_wide"), c = sup("sup_t2ue_cw_conv4_residual");
        crit["architecture_transfer"] = {{"conv4", a},
                                         {"conv6_wide", b},
                                         {"conv4_residual", c},
                                         {"pass", a <= chance + 10.0 && b <= chance + 10.0 && c <= chance + 10.0}};
    }
    {
        std::vector<double> accs = {sup("sup_clean"),        sup("sup_t2ue_cw_r20"), sup("sup_t2ue_cw_r40"),
                                    sup("sup_t2ue_cw_r60"),  sup("sup_t2ue_cw_r80"), sup("sup_t2ue_cw")};
        bool mono = true;
        for (size_t i = 1; i < accs.size(); ++i)
            if (accs[i] > accs[i - 1] + 3.0) mono = false;
        crit["poison_ratio_monotonicity"] = {{"accuracies", accs},
                                             {"pass", mono && accs.back() <= chance + 10.0}};
    }
    {
        double co = sup("sup_t2ue_cw_cutout"), mu = sup("sup_t2ue_cw_mixup");
        crit["defense_robustness"] = {{"cutout_top1", co},
                                      {"mixup_top1", mu},
                                      {"pass", co <= chance + 15.0 && mu <= chance + 15.0}};
    }
    {
        double first = rep["sweep"]["first_accuracy"].get<double>();
        double last = rep["sweep"]["final_accuracy"].get<double>();
        crit["checkpoint_sweep"] = {{"first", first}, {"final", last}, {"pass", first - last >= 20.0}};
    }
    crit["timing"] = {{"order_ok", rep["bench"]["order_ok"].get<bool>()},
                      {"t2ue_at_least_3x_faster_than_em", rep["bench"]["t2ue_at_least_3x_faster_than_em"].get<bool>()},
                      {"pass", rep["bench"]["order_ok"].get<bool>() &&
                                   rep["bench"]["t2ue_at_least_3x_faster_than_em"].get<bool>()}};
    rep["criteria"] = crit;

    write_report_json(p.root + "/report.json", rep);
    write_tables_csv(p.root + "/tables.csv", table_rows);

    // learning-curve plots for the main supervised comparison
    auto curve_xy = [&](const std::string& name, const std::string& field) {
        SvgSeries s;
        s.name = name;
        for (const auto& pt : victims.at(name).at("curve")) {
            s.x.push_back(pt.at("epoch").get<double>());
            s.y.push_back(pt.at(field).get<double>());
        }
        return s;
    };
    fs::create_directories(p.root + "/plots");
    write_svg_lines(p.root + "/plots/supervised_accuracy.svg", "Clean-test accuracy during victim training",
                    "epoch", "top-1 (%)",
                    {curve_xy("sup_clean", "test_metric"), curve_xy("sup_t2ue_cw", "test_metric"),
                     curve_xy("sup_t2ue_sw", "test_metric"), curve_xy("sup_em", "test_metric"),
                     curve_xy("sup_random", "test_metric")});
    write_svg_lines(p.root + "/plots/supervised_loss.svg", "Training loss during victim training", "epoch",
                    "cross-entropy",
                    {curve_xy("sup_clean", "train_loss"), curve_xy("sup_t2ue_cw", "train_loss"),
                     curve_xy("sup_t2ue_sw", "train_loss"), curve_xy("sup_em", "train_loss"),
                     curve_xy("sup_random", "train_loss")});
    write_svg_lines(p.root + "/plots/contrastive_hit1.svg", "Clean-test I2T Hit@1 during victim training", "epoch",
                    "Hit@1 (%)",
                    {curve_xy("con_clean", "test_metric"), curve_xy("con_t2ue_sw", "test_metric"),
                     curve_xy("con_random", "test_metric")});
    return rep;
}

nlohmann::json reproduce_all(const RunConfig& cfg, int jobs) {
    Paths p = paths(cfg);
    fs::create_directories(p.root);
    freeze_config(cfg, p.root);
    {  // fresh timing log per invocation
        std::ofstream os(fs::path(p.root) / "timings.csv", std::ios::trunc);
        os << "stage,seconds\n";
    }
    dataset_stage(cfg);
    surrogate_stage(cfg);
    generator_stage(cfg);
    protect_stage(cfg, ProtectMode::class_wise);
    protect_stage(cfg, ProtectMode::sample_wise);
    em_stage(cfg);
    random_stage(cfg);

    std::vector<VictimSpec> specs = standard_victims();
    if (jobs <= 1) {
        for (const auto& s : specs) victim_stage(cfg, s);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (int w = 0; w < jobs; ++w)
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < specs.size(); i = next.fetch_add(1))
                    victim_stage(cfg, specs[i]);
            });
        for (auto& t : pool) t.join();
    }

    sweep_stage(cfg);
    bench_stage(cfg);
    return report_stage(cfg);
}

}  // namespace pipeline

}  // namespace t2ue
