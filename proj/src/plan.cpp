#include "t2ue/protect/plan.hpp"

#include <fstream>
#include <stdexcept>

#include "t2ue/core/rng.hpp"
#include "t2ue/nn/checkpoint.hpp"  // hash_hex

namespace t2ue {

ProtectMode protect_mode_from_string(const std::string& s) {
    if (s == "class_wise") return ProtectMode::class_wise;
    if (s == "sample_wise") return ProtectMode::sample_wise;
    throw std::invalid_argument("unknown protection mode: " + s);
}

std::string protect_mode_name(ProtectMode m) {
    return m == ProtectMode::class_wise ? "class_wise" : "sample_wise";
}

const PlanEntry* ProtectionPlan::find(const std::string& sample_id, int class_id) const {
    std::string key = mode == ProtectMode::class_wise ? "class:" + std::to_string(class_id) : sample_id;
    auto it = index.find(key);
    return it == index.end() ? nullptr : &entries[static_cast<size_t>(it->second)];
}

nlohmann::json ProtectionPlan::to_json() const {
    nlohmann::json ents = nlohmann::json::array();
    for (const auto& e : entries)
        ents.push_back({{"key", e.key},
                        {"class_id", e.class_id},
                        {"template_id", e.template_id},
                        {"caption", e.caption},
                        {"z", e.z}});
    return {{"mode", protect_mode_name(mode)}, {"plan_seed", plan_seed},   {"epsilon_num", epsilon_num},
            {"latent_dim", latent_dim},        {"fixed_template", fixed_template},
            {"split", split},                  {"entries", ents}};
}

ProtectionPlan ProtectionPlan::from_json(const nlohmann::json& j) {
    ProtectionPlan p;
    p.mode = protect_mode_from_string(j.at("mode").get<std::string>());
    p.plan_seed = j.at("plan_seed").get<uint64_t>();
    p.epsilon_num = j.at("epsilon_num").get<int>();
    p.latent_dim = j.at("latent_dim").get<int>();
    p.fixed_template = j.at("fixed_template").get<int>();
    p.split = j.at("split").get<std::string>();
    for (const auto& e : j.at("entries")) {
        PlanEntry pe;
        pe.key = e.at("key").get<std::string>();
        pe.class_id = e.at("class_id").get<int>();
        pe.template_id = e.at("template_id").get<int>();
        pe.caption = e.at("caption").get<std::string>();
        pe.z = e.at("z").get<std::vector<float>>();
        p.index[pe.key] = static_cast<int>(p.entries.size());
        p.entries.push_back(std::move(pe));
    }
    return p;
}

void ProtectionPlan::save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("plan: cannot write " + path);
    os << to_json().dump(2) << "\n";
}

ProtectionPlan ProtectionPlan::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("plan: cannot open " + path);
    return from_json(nlohmann::json::parse(is));
}

std::string ProtectionPlan::hash_hex_str() const {
    std::string s = to_json().dump();
    return hash_hex(fnv1a(s.data(), s.size()));
}

namespace {

std::vector<float> draw_latent(uint64_t key, int dim) {
    Rng rng(key);
    std::vector<float> z(static_cast<size_t>(dim));
    for (auto& v : z) v = static_cast<float>(rng.normal());
    return z;
}

}  // namespace

ProtectionPlan make_plan(ProtectMode mode, const DatasetSpec& spec, const std::string& split, uint64_t plan_seed,
                         int latent_dim, int epsilon_num, int fixed_template) {
    spec.validate();
    if (fixed_template < 0 || fixed_template >= static_cast<int>(spec.caption_templates.size()))
        throw std::invalid_argument("make_plan: fixed_template out of range");
    ProtectionPlan p;
    p.mode = mode;
    p.plan_seed = plan_seed;
    p.epsilon_num = epsilon_num;
    p.latent_dim = latent_dim;
    p.fixed_template = fixed_template;
    p.split = split;

    if (mode == ProtectMode::class_wise) {
        for (int cls = 0; cls < spec.num_classes(); ++cls) {
            PlanEntry e;
            e.key = "class:" + std::to_string(cls);
            e.class_id = cls;
            e.template_id = fixed_template;
            e.caption = caption_for(cls, fixed_template, spec);
            e.z = draw_latent(hash_u64(hash_str(plan_seed, "classz"), static_cast<uint64_t>(cls)), latent_dim);
            p.index[e.key] = static_cast<int>(p.entries.size());
            p.entries.push_back(std::move(e));
        }
    } else {
        const int per_class = spec.samples_per_class(split);
        for (int cls = 0; cls < spec.num_classes(); ++cls) {
            for (int i = 0; i < per_class; ++i) {
                PlanEntry e;
                e.key = dataset_sample_id(split, cls, i);
                e.class_id = cls;
                uint64_t k = hash_str(plan_seed, e.key);
                e.template_id = static_cast<int>(k % spec.caption_templates.size());
                e.caption = caption_for(cls, e.template_id, spec);
                e.z = draw_latent(hash_u64(k, 0x5a), latent_dim);
                p.index[e.key] = static_cast<int>(p.entries.size());
                p.entries.push_back(std::move(e));
            }
        }
    }
    return p;
}

}  // namespace t2ue
