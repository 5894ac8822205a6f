#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2ue/nn/checkpoint.hpp"
#include "t2ue/nn/layers.hpp"

namespace t2ue {

struct GeneratorConfig {
    int latent_dim = 64;
    int cond_dim = 64;
    int base_channels = 128;  // channels of the 4x4 seed map
    int base_size = 4;
    std::vector<int> block_channels = {32, 16, 8};  // one entry per upsampling block
    int epsilon_num = 8;                            // bound = epsilon_num / 255
    double leaky_slope = 0.2;
    double head_init = 0.05;  // stddev of the output head weights

    int output_size() const { return base_size << block_channels.size(); }
    double epsilon() const { return static_cast<double>(epsilon_num) / 255.0; }

    void validate() const {
        if (latent_dim < 1 || cond_dim < 1) throw std::invalid_argument("generator: dims must be positive");
        if (epsilon_num < 1) throw std::invalid_argument("generator: epsilon must be a positive multiple of 1/255");
        if (block_channels.empty()) throw std::invalid_argument("generator: need at least one block");
    }
};

/// Upsampling residual block; both convolutions are conditioned through
/// normalization, the skip path is a plain 1x1 projection (identity when the
/// channel counts match).
template <typename S>
struct SsacnBlock {
    CondBatchNorm<S> bn1, bn2;
    Conv2dLayer<S> conv1, conv2;
    Conv2dLayer<S> skip;
    bool has_skip = false;
    int cin = 0, cout = 0;
    S slope = S(0.2);

    void init(const std::string& name, Rng& rng, int in_ch, int out_ch, int d_cond, S leaky) {
        cin = in_ch;
        cout = out_ch;
        slope = leaky;
        bn1.init(name + ".bn1", rng, d_cond, in_ch);
        bn2.init(name + ".bn2", rng, d_cond, out_ch);
        ConvSpec c1{in_ch, out_ch, 3, 1, 1};
        conv1.init(name + ".conv1", rng, c1);
        ConvSpec c2{out_ch, out_ch, 3, 1, 1};
        conv2.init(name + ".conv2", rng, c2);
        has_skip = in_ch != out_ch;
        if (has_skip) {
            ConvSpec cs{in_ch, out_ch, 1, 1, 0};
            skip.init(name + ".skip", rng, cs);
        }
    }

    Var<S> operator()(Binder<S>& bind, Var<S> x, Var<S> cond, bool training) {
        Var<S> u = upsample2x(x);
        Var<S> a = conv1(bind, leaky_relu(bn1(bind, u, cond, training), slope));
        a = conv2(bind, leaky_relu(bn2(bind, a, cond, training), slope));
        Var<S> s = has_skip ? skip(bind, u) : u;
        return add(a, s);
    }

    template <typename F>
    void visit(F&& f) {
        bn1.visit(f);
        bn2.visit(f);
        conv1.visit(f);
        conv2.visit(f);
        if (has_skip) skip.visit(f);
    }

    template <typename F>
    void visit_buffers(F&& f) {
        bn1.visit_buffers(f);
        bn2.visit_buffers(f);
    }
};

/// Noise generator: latent seed map refined by conditioned upsampling blocks,
/// squashed to the epsilon box by a scaled tanh, so the bound holds by
/// construction.
template <typename S>
class Generator {
public:
    GeneratorConfig cfg;
    Linear<S> proj;
    std::vector<SsacnBlock<S>> blocks;
    Conv2dLayer<S> head;

    void init(Rng& rng, const GeneratorConfig& c) {
        c.validate();
        cfg = c;
        proj.init("gen.proj", rng, c.latent_dim, c.base_size * c.base_size * c.base_channels);
        blocks.clear();
        int cin = c.base_channels;
        for (size_t i = 0; i < c.block_channels.size(); ++i) {
            SsacnBlock<S> b;
            b.init("gen.block" + std::to_string(i), rng, cin, c.block_channels[i], c.cond_dim,
                   static_cast<S>(c.leaky_slope));
            cin = c.block_channels[i];
            blocks.push_back(std::move(b));
        }
        ConvSpec hs{cin, 3, 3, 1, 1};
        head.init("gen.head", rng, hs, c.head_init);
    }

    /// Bounded noise batch (N, 3, H, W) from conditioning vectors and latents.
    Var<S> forward(Binder<S>& bind, Var<S> cond, Var<S> z, bool training) {
        const auto& sz = z.value().shape;
        const auto& sc = cond.value().shape;
        if (sz.size() != 2 || sz[1] != cfg.latent_dim) throw std::invalid_argument("generator: bad latent shape");
        if (sc.size() != 2 || sc[1] != cfg.cond_dim)
            throw std::invalid_argument("generator: conditioning dimension mismatch, got " + cond.value().shape_str());
        if (sc[0] != sz[0]) throw std::invalid_argument("generator: batch mismatch between cond and z");
        int n = sz[0];
        Var<S> x = reshape(proj(bind, z), {n, cfg.base_channels, cfg.base_size, cfg.base_size});
        for (auto& b : blocks) x = b(bind, x, cond, training);
        x = head(bind, x);
        return scale(tanh_act(x), static_cast<S>(cfg.epsilon()));
    }

    template <typename F>
    void visit(F&& f) {
        proj.visit(f);
        for (auto& b : blocks) b.visit(f);
        head.visit(f);
    }

    std::vector<Param<S>*> params() {
        std::vector<Param<S>*> out;
        visit([&](Param<S>& p) { out.push_back(&p); });
        return out;
    }

    std::vector<Param<S>*> all_tensors() {
        std::vector<Param<S>*> out = params();
        for (auto& b : blocks) b.visit_buffers([&](Param<S>& p) { out.push_back(&p); });
        return out;
    }

    nlohmann::json config_json() const {
        return {
            {"role", "generator"},   {"latent_dim", cfg.latent_dim},
            {"cond_dim", cfg.cond_dim}, {"base_channels", cfg.base_channels},
            {"base_size", cfg.base_size}, {"block_channels", cfg.block_channels},
            {"epsilon_num", cfg.epsilon_num}, {"leaky_slope", cfg.leaky_slope},
            {"head_init", cfg.head_init},
        };
    }

    void save(const std::string& path) { save_checkpoint(path, config_json(), all_tensors()); }

    static Generator load(const std::string& path) {
        LoadedCheckpoint ck = load_checkpoint(path);
        const auto& h = ck.header;
        if (h.value("role", "") != "generator") throw std::runtime_error("checkpoint is not a generator: " + path);
        GeneratorConfig c;
        c.latent_dim = h.at("latent_dim").get<int>();
        c.cond_dim = h.at("cond_dim").get<int>();
        c.base_channels = h.at("base_channels").get<int>();
        c.base_size = h.at("base_size").get<int>();
        c.block_channels = h.at("block_channels").get<std::vector<int>>();
        c.epsilon_num = h.at("epsilon_num").get<int>();
        c.leaky_slope = h.at("leaky_slope").get<double>();
        c.head_init = h.value("head_init", c.head_init);
        Generator m;
        Rng rng(0);
        m.init(rng, c);
        restore_params(ck, m.all_tensors());
        return m;
    }
};

/// Inference-mode noise for a batch of conditioning vectors and latents.
template <typename S>
Tensor<S> generate_noise(Generator<S>& gen, const Tensor<S>& cond, const Tensor<S>& z) {
    Graph<S> g;
    Binder<S> bind(g, false);
    Var<S> out = gen.forward(bind, g.leaf(cond), g.leaf(z), false);
    return out.value();
}

}  // namespace t2ue
