#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "t2ue/nn/layers.hpp"

namespace t2ue {

enum class Arch { conv4, conv6_wide, conv4_residual };

inline std::string arch_name(Arch a) {
    switch (a) {
        case Arch::conv4: return "conv4";
        case Arch::conv6_wide: return "conv6_wide";
        case Arch::conv4_residual: return "conv4_residual";
    }
    throw std::invalid_argument("arch_name: bad arch");
}

inline Arch arch_from_string(const std::string& s) {
    if (s == "conv4") return Arch::conv4;
    if (s == "conv6_wide") return Arch::conv6_wide;
    if (s == "conv4_residual") return Arch::conv4_residual;
    throw std::invalid_argument("unknown architecture: " + s);
}

/// Small convolutional feature extractors over 32x32 RGB, ending in global
/// average pooling. conv4 is four stride-2 conv blocks; conv6_wide trades
/// depth for width; conv4_residual uses projection-skip residual stages.
template <typename S>
class Backbone {
public:
    void init(const std::string& name, Rng& rng, Arch arch, bool use_bn) {
        arch_ = arch;
        use_bn_ = use_bn;
        convs_.clear();
        bns_.clear();
        switch (arch) {
            case Arch::conv4: {
                build_plain(name, rng, {32, 64, 128, 128}, {2, 2, 2, 2});
                break;
            }
            case Arch::conv6_wide: {
                build_plain(name, rng, {40, 40, 80, 80, 120, 120}, {2, 1, 2, 1, 2, 1});
                break;
            }
            case Arch::conv4_residual: {
                // stem + three downsampling residual stages
                add_conv(name + ".stem", rng, 3, 16, 3, 1, 1);
                add_res_stage(name + ".res1", rng, 16, 32);
                add_res_stage(name + ".res2", rng, 32, 64);
                add_res_stage(name + ".res3", rng, 64, 64);
                feature_dim_ = 64;
                break;
            }
        }
    }

    int feature_dim() const { return feature_dim_; }
    Arch arch() const { return arch_; }
    bool uses_bn() const { return use_bn_; }

    Var<S> features(Binder<S>& bind, Var<S> x, bool training) {
        switch (arch_) {
            case Arch::conv4:
            case Arch::conv6_wide: {
                Var<S> h = x;
                for (size_t i = 0; i < convs_.size(); ++i) {
                    h = convs_[i](bind, h);
                    if (use_bn_) h = bns_[i](bind, h, training);
                    h = relu(h);
                }
                return global_avg_pool(h);
            }
            case Arch::conv4_residual: {
                Var<S> h = convs_[0](bind, x);
                if (use_bn_) h = bns_[0](bind, h, training);
                h = relu(h);
                size_t ci = 1, bi = 1;
                for (int stage = 0; stage < 3; ++stage) {
                    Var<S> a = convs_[ci](bind, h);
                    if (use_bn_) a = bns_[bi](bind, a, training);
                    a = relu(a);
                    a = convs_[ci + 1](bind, a);
                    if (use_bn_) a = bns_[bi + 1](bind, a, training);
                    Var<S> skip = convs_[ci + 2](bind, h);
                    h = relu(add(a, skip));
                    ci += 3;
                    bi += 2;
                }
                return global_avg_pool(h);
            }
        }
        throw std::logic_error("backbone: bad arch");
    }

    template <typename F>
    void visit(F&& f) {
        for (auto& c : convs_) c.visit(f);
        if (use_bn_)
            for (auto& b : bns_) b.visit(f);
    }

    template <typename F>
    void visit_buffers(F&& f) {
        if (use_bn_)
            for (auto& b : bns_) b.visit_buffers(f);
    }

private:
    void add_conv(const std::string& name, Rng& rng, int cin, int cout, int k, int stride, int pad) {
        ConvSpec cs;
        cs.in_ch = cin;
        cs.out_ch = cout;
        cs.kernel = k;
        cs.stride = stride;
        cs.pad = pad;
        Conv2dLayer<S> layer;
        layer.init(name, rng, cs);
        convs_.push_back(std::move(layer));
        if (use_bn_) {
            BatchNorm<S> bn;
            bn.init(name + ".bn", cout);
            bns_.push_back(std::move(bn));
        }
    }

    void build_plain(const std::string& name, Rng& rng, const std::vector<int>& widths,
                     const std::vector<int>& strides) {
        int cin = 3;
        for (size_t i = 0; i < widths.size(); ++i) {
            add_conv(name + ".conv" + std::to_string(i), rng, cin, widths[i], 3, strides[i], 1);
            cin = widths[i];
        }
        feature_dim_ = widths.back();
    }

    void add_res_stage(const std::string& name, Rng& rng, int cin, int cout) {
        add_conv(name + ".conv1", rng, cin, cout, 3, 2, 1);
        add_conv(name + ".conv2", rng, cout, cout, 3, 1, 1);
        // 1x1 stride-2 projection skip, no norm of its own
        ConvSpec cs;
        cs.in_ch = cin;
        cs.out_ch = cout;
        cs.kernel = 1;
        cs.stride = 2;
        cs.pad = 0;
        Conv2dLayer<S> skip;
        skip.init(name + ".skip", rng, cs);
        convs_.push_back(std::move(skip));
    }

    Arch arch_ = Arch::conv4;
    bool use_bn_ = false;
    int feature_dim_ = 0;
    std::vector<Conv2dLayer<S>> convs_;
    std::vector<BatchNorm<S>> bns_;
};

}  // namespace t2ue
