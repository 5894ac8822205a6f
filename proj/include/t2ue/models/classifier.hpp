#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "t2ue/models/backbone.hpp"
#include "t2ue/nn/checkpoint.hpp"

namespace t2ue {

/// Supervised victim: conv backbone plus a linear class head.
template <typename S>
class Classifier {
public:
    Backbone<S> tower;
    Linear<S> head;
    int num_classes = 0;

    void init(Rng& rng, Arch arch, int classes, bool use_bn = true) {
        num_classes = classes;
        tower.init("clf", rng, arch, use_bn);
        head.init("clf.head", rng, tower.feature_dim(), classes);
    }

    Var<S> logits(Binder<S>& bind, Var<S> images, bool training) {
        return head(bind, tower.features(bind, images, training));
    }

    template <typename F>
    void visit(F&& f) {
        tower.visit(f);
        head.visit(f);
    }

    std::vector<Param<S>*> params() {
        std::vector<Param<S>*> out;
        visit([&](Param<S>& p) { out.push_back(&p); });
        return out;
    }

    std::vector<Param<S>*> all_tensors() {
        std::vector<Param<S>*> out = params();
        tower.visit_buffers([&](Param<S>& p) { out.push_back(&p); });
        return out;
    }

    void save(const std::string& path) {
        nlohmann::json h = {{"role", "classifier"},
                            {"arch", arch_name(tower.arch())},
                            {"bn", tower.uses_bn()},
                            {"num_classes", num_classes}};
        save_checkpoint(path, h, all_tensors());
    }

    static Classifier load(const std::string& path) {
        LoadedCheckpoint ck = load_checkpoint(path);
        if (ck.header.value("role", "") != "classifier")
            throw std::runtime_error("checkpoint is not a classifier: " + path);
        Classifier m;
        Rng rng(0);
        m.init(rng, arch_from_string(ck.header.at("arch").get<std::string>()),
               ck.header.at("num_classes").get<int>(), ck.header.at("bn").get<bool>());
        restore_params(ck, m.all_tensors());
        return m;
    }
};

}  // namespace t2ue
