#include "t2ue/protect/protect.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <unordered_map>

#include "t2ue/data/png_io.hpp"

namespace fs = std::filesystem;

namespace t2ue {

Tensor<float> apply_noise(const Tensor<float>& image, const Tensor<float>& delta) {
    if (!same_shape(image.shape, delta.shape))
        throw std::invalid_argument("apply_noise: shape mismatch " + image.shape_str() + " vs " + delta.shape_str());
    Tensor<float> out(image.shape, (image.data + delta.data).max(0.0f).min(1.0f));
    return out;
}

Tensor<float> quantize_noise(const Tensor<float>& delta, int epsilon_num) {
    const float eps = static_cast<float>(epsilon_num) / 255.0f;
    Tensor<float> out(delta.shape);
    for (int64_t i = 0; i < delta.size(); ++i) {
        float v = delta[i];
        if (std::fabs(v) > eps)
            throw std::invalid_argument("quantize_noise: value exceeds the epsilon bound");
        float k = std::round(v * 255.0f);  // ties away from zero
        out[i] = k / 255.0f;
    }
    return out;
}

Tensor<float> NoiseSynthesizer::batch_noise(const std::vector<const PlanEntry*>& entries) {
    if (entries.empty()) throw std::invalid_argument("batch_noise: empty entry list");
    const int n = static_cast<int>(entries.size());
    const int dz = gen_->cfg.latent_dim;
    std::vector<std::string> captions;
    Tensor<float> z({n, dz});
    captions.reserve(entries.size());
    for (int i = 0; i < n; ++i) {
        const PlanEntry* e = entries[static_cast<size_t>(i)];
        if (static_cast<int>(e->z.size()) != dz)
            throw std::invalid_argument("batch_noise: latent dim mismatch for key " + e->key);
        captions.push_back(e->caption);
        for (int j = 0; j < dz; ++j) z.data[static_cast<int64_t>(i) * dz + j] = e->z[static_cast<size_t>(j)];
    }
    Graph<float> g;
    Binder<float> bind_txt(g, false), bind_gen(g, false);
    Var<float> cond = text_side_->encode_text_raw(bind_txt, captions);
    Var<float> delta = gen_->forward(bind_gen, cond, g.leaf(std::move(z)), false);
    return delta.value();
}

std::vector<Tensor<float>> NoiseSynthesizer::noise_for_plan(const ProtectionPlan& plan, int batch_size) {
    std::vector<Tensor<float>> out;
    out.reserve(plan.entries.size());
    const int total = static_cast<int>(plan.entries.size());
    const int h = gen_->cfg.output_size();
    const int64_t per = static_cast<int64_t>(3) * h * h;
    for (int start = 0; start < total; start += batch_size) {
        int n = std::min(batch_size, total - start);
        std::vector<const PlanEntry*> chunk;
        for (int i = 0; i < n; ++i) chunk.push_back(&plan.entries[static_cast<size_t>(start + i)]);
        Tensor<float> batch = batch_noise(chunk);
        for (int i = 0; i < n; ++i) {
            Tensor<float> one({3, h, h});
            for (int64_t j = 0; j < per; ++j) one.data[j] = batch.data[static_cast<int64_t>(i) * per + j];
            out.push_back(std::move(one));
        }
    }
    return out;
}

namespace {

/// Quantized noise per plan entry key.
std::unordered_map<std::string, Tensor<float>> noise_table(const Dataset& data, Generator<float>& gen,
                                                           DualEncoder<float>& surrogate,
                                                           const ProtectionPlan& plan) {
    // check coverage first so the error can list every missing id
    std::string missing;
    int missing_n = 0;
    for (const auto& s : data.samples)
        if (!plan.find(s.id, s.class_id)) {
            if (missing_n < 8) missing += (missing_n ? ", " : "") + s.id;
            ++missing_n;
        }
    if (missing_n > 0)
        throw std::invalid_argument("export_protected: plan does not cover " + std::to_string(missing_n) +
                                    " samples (" + missing + (missing_n > 8 ? ", ..." : "") + ")");

    NoiseSynthesizer synth(gen, surrogate);
    std::vector<Tensor<float>> raw = synth.noise_for_plan(plan);
    std::unordered_map<std::string, Tensor<float>> table;
    for (size_t i = 0; i < plan.entries.size(); ++i)
        table.emplace(plan.entries[i].key, quantize_noise(raw[i], plan.epsilon_num));
    return table;
}

}  // namespace

Dataset protect_in_memory(const Dataset& data, Generator<float>& gen, DualEncoder<float>& surrogate,
                          const ProtectionPlan& plan) {
    auto table = noise_table(data, gen, surrogate, plan);
    Dataset out = data;
    for (auto& s : out.samples) {
        const PlanEntry* e = plan.find(s.id, s.class_id);
        s.image = apply_noise(s.image, table.at(e->key));
    }
    return out;
}

DatasetManifest export_protected(const Dataset& data, Generator<float>& gen, DualEncoder<float>& surrogate,
                                 const ProtectionPlan& plan, const std::string& out_dir, const ExportOptions& opts) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("export_protected: cannot create " + out_dir);
    auto table = noise_table(data, gen, surrogate, plan);

    DatasetManifest m;
    m.spec = data.spec;
    m.split = data.split;
    m.dir = out_dir;
    for (const auto& s : data.samples) {
        const PlanEntry* e = plan.find(s.id, s.class_id);
        Tensor<float> prot = apply_noise(s.image, table.at(e->key));
        ManifestEntry me;
        me.id = s.id;
        me.file = s.id + ".png";
        me.caption = s.caption;  // captions remain unchanged
        me.class_id = s.class_id;
        me.template_id = s.template_id;
        write_png_rgb8((fs::path(out_dir) / me.file).string(), float_to_image(prot));
        m.entries.push_back(std::move(me));
    }
    m.extra["protected"] = true;
    m.extra["mode"] = protect_mode_name(plan.mode);
    m.extra["plan_hash"] = plan.hash_hex_str();
    m.extra["generator_checkpoint_hash"] = opts.generator_hash;
    m.extra["epsilon"] = static_cast<double>(plan.epsilon_num) / 255.0;
    m.extra["epsilon_num"] = plan.epsilon_num;
    save_manifest(m, out_dir);

    if (opts.write_noise_maps) {
        fs::path nd = fs::path(out_dir) / "noise_maps";
        fs::create_directories(nd, ec);
        const float eps = static_cast<float>(plan.epsilon_num) / 255.0f;
        int written = 0;
        for (const auto& e : plan.entries) {
            if (written >= opts.max_noise_maps) break;
            const Tensor<float>& d = table.at(e.key);
            Tensor<float> vis(d.shape, (d.data / (2.0f * eps)) + 0.5f);  // normalized for viewing
            std::string fname = e.key;
            for (auto& c : fname)
                if (c == ':') c = '_';
            write_png_rgb8((nd / (fname + ".png")).string(), float_to_image(vis));
            ++written;
        }
    }
    return m;
}

}  // namespace t2ue
