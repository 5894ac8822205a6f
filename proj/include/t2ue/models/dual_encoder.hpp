#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2ue/models/backbone.hpp"
#include "t2ue/models/text_encoder.hpp"
#include "t2ue/nn/checkpoint.hpp"

namespace t2ue {

struct DualEncoderConfig {
    Arch image_arch = Arch::conv4;
    bool image_bn = false;
    int embed_dim = 64;
    int text_embed = 32;
    int text_hidden = 64;
    int image_size = 32;
};

/// Two-tower contrastive model: conv image encoder and token-MLP text
/// encoder projecting into a shared 64-d space, with a learnable logit scale.
/// Serves both as the frozen surrogate and as the contrastive victim.
template <typename S>
class DualEncoder {
public:
    DualEncoderConfig cfg;
    Backbone<S> image_tower;
    Linear<S> image_proj;
    TextEncoder<S> text;
    Param<S> logit_scale;  // temperature = exp(-logit_scale)

    static constexpr double kLogitScaleInit = 2.6592600369327783;  // ln(1/0.07)
    static constexpr double kLogitScaleMax = 4.605170185988091;    // temperature floor 0.01

    void init(Rng& rng, const DualEncoderConfig& c, Vocab vocab) {
        cfg = c;
        image_tower.init("image", rng, c.image_arch, c.image_bn);
        image_proj.init("image.proj", rng, image_tower.feature_dim(), c.embed_dim);
        text.init(rng, std::move(vocab), c.text_embed, c.text_hidden, c.embed_dim);
        logit_scale.name = "logit_scale";
        logit_scale.value = Tensor<S>::full({1}, static_cast<S>(kLogitScaleInit));
    }

    bool frozen() const { return frozen_; }
    void set_frozen(bool f) { frozen_ = f; }

    /// L2-normalized image embeddings. images: (N, 3, H, W) in [0, 1].
    Var<S> encode_image(Binder<S>& bind, Var<S> images, bool training) {
        const auto& sh = images.value().shape;
        if (sh.size() != 4 || sh[1] != 3 || sh[2] != cfg.image_size || sh[3] != cfg.image_size)
            throw std::invalid_argument("encode_image: expected (N,3," + std::to_string(cfg.image_size) + "," +
                                        std::to_string(cfg.image_size) + "), got " + images.value().shape_str());
        Var<S> f = image_tower.features(bind, images, training);
        return l2_normalize_rows(image_proj(bind, f));
    }

    /// Raw (pre-normalization) pooled text embeddings; normalize separately
    /// for the loss side.
    Var<S> encode_text_raw(Binder<S>& bind, const std::vector<std::string>& captions) {
        return text.forward_raw(bind, captions);
    }

    Var<S> temperature(Binder<S>& bind) { return exp_op(scale(bind(logit_scale), S(-1))); }

    S temperature_value() const { return static_cast<S>(std::exp(-static_cast<double>(logit_scale.value[0]))); }

    /// Keep the temperature at or above its floor.
    void clamp_logit_scale() {
        if (static_cast<double>(logit_scale.value[0]) > kLogitScaleMax)
            logit_scale.value[0] = static_cast<S>(kLogitScaleMax);
    }

    template <typename F>
    void visit(F&& f) {
        image_tower.visit(f);
        image_proj.visit(f);
        text.visit(f);
        f(logit_scale);
    }

    std::vector<Param<S>*> params() {
        std::vector<Param<S>*> out;
        visit([&](Param<S>& p) { out.push_back(&p); });
        return out;
    }

    /// Trainable parameters plus running-stat buffers, in checkpoint order.
    std::vector<Param<S>*> all_tensors() {
        std::vector<Param<S>*> out = params();
        image_tower.visit_buffers([&](Param<S>& p) { out.push_back(&p); });
        return out;
    }

    nlohmann::json config_json() const {
        return {
            {"role", "dual_encoder"},
            {"frozen", frozen_},
            {"image_arch", arch_name(cfg.image_arch)},
            {"image_bn", cfg.image_bn},
            {"image_size", cfg.image_size},
            {"embed_dim", cfg.embed_dim},
            {"text_embed", cfg.text_embed},
            {"text_hidden", cfg.text_hidden},
            {"vocab", text.vocab.words()},
        };
    }

    void save(const std::string& path) { save_checkpoint(path, config_json(), all_tensors()); }

    static DualEncoder load(const std::string& path) {
        LoadedCheckpoint ck = load_checkpoint(path);
        const auto& h = ck.header;
        std::string role = h.value("role", "");
        if (role != "dual_encoder" && role != "surrogate")
            throw std::runtime_error("checkpoint is not a dual encoder: " + path);
        DualEncoderConfig c;
        c.image_arch = arch_from_string(h.at("image_arch").get<std::string>());
        c.image_bn = h.at("image_bn").get<bool>();
        c.image_size = h.at("image_size").get<int>();
        c.embed_dim = h.at("embed_dim").get<int>();
        c.text_embed = h.at("text_embed").get<int>();
        c.text_hidden = h.at("text_hidden").get<int>();
        Vocab v = Vocab::from_saved(h.at("vocab").get<std::vector<std::string>>());
        DualEncoder m;
        Rng rng(0);
        m.init(rng, c, std::move(v));
        restore_params(ck, m.all_tensors());
        m.set_frozen(h.value("frozen", false));
        return m;
    }

private:
    bool frozen_ = false;
};

}  // namespace t2ue
