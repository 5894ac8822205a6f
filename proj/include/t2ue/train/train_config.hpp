#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "t2ue/nn/optimizer.hpp"

namespace t2ue {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    OptKind optimizer = OptKind::adam;
    double lr = 1e-3;
    double weight_decay = 0.0;
    LrSchedule schedule = LrSchedule::cosine;
    uint64_t seed = 1;
    int checkpoint_every = 10;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
        if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be >= 2");
        if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be positive");
        if (checkpoint_every < 1) throw std::invalid_argument("train config: checkpoint_every must be >= 1");
    }

    nlohmann::json to_json() const {
        return {
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"optimizer", optimizer == OptKind::adam ? "adam" : "sgd"},
            {"lr", lr},
            {"weight_decay", weight_decay},
            {"schedule", schedule == LrSchedule::cosine ? "cosine" : "constant"},
            {"seed", seed},
            {"checkpoint_every", checkpoint_every},
        };
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        if (j.contains("optimizer")) {
            std::string o = j.at("optimizer").get<std::string>();
            if (o == "adam") c.optimizer = OptKind::adam;
            else if (o == "sgd") c.optimizer = OptKind::sgd;
            else throw std::invalid_argument("train config: unknown optimizer '" + o + "'");
        }
        c.lr = j.value("lr", c.lr);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        if (j.contains("schedule")) {
            std::string s = j.at("schedule").get<std::string>();
            if (s == "cosine") c.schedule = LrSchedule::cosine;
            else if (s == "constant") c.schedule = LrSchedule::constant;
            else throw std::invalid_argument("train config: unknown schedule '" + s + "'");
        }
        c.seed = j.value("seed", c.seed);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        return c;
    }

    OptimConfig<float> optim() const {
        OptimConfig<float> oc;
        oc.kind = optimizer;
        oc.lr = static_cast<float>(lr);
        oc.weight_decay = static_cast<float>(weight_decay);
        oc.schedule = schedule;
        return oc;
    }
};

}  // namespace t2ue
