#pragma once

#include <string>

#include <json.hpp>

#include "hmloss/trainer.hpp"

namespace hmloss {

inline const char* to_string(HardMiningMode m) {
    return m == HardMiningMode::per_sample ? "per-sample" : "batch-mean";
}

inline HardMiningMode hm_mode_from_string(const std::string& s) {
    if (s == "per-sample") return HardMiningMode::per_sample;
    if (s == "batch-mean") return HardMiningMode::batch_mean;
    throw std::invalid_argument("unknown hm_mode '" + s + "' (expected per-sample or batch-mean)");
}

/// Flat JSON mirror of the training configuration. Keys are the snake_case
/// field names; the CLI exposes each as a kebab-case flag.
inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    return nlohmann::json{
        {"loss", to_string(cfg.loss.kind)},
        {"alpha", cfg.loss.hard_mining.alpha},
        {"beta", cfg.loss.hard_mining.beta},
        {"sigmoid_slope", cfg.loss.hard_mining.sigmoid.slope},
        {"sigmoid_center", cfg.loss.hard_mining.sigmoid.center},
        {"hm_mode", to_string(cfg.loss.hard_mining.mode)},
        {"angular_margin", cfg.loss.angular.margin},
        {"arc_scale", cfg.loss.arc.scale},
        {"arc_margin", cfg.loss.arc.margin},
        {"batch_size", cfg.batch_size},
        {"initial_lr", cfg.initial_lr},
        {"lr_decay_epochs", cfg.lr_decay_epochs},
        {"lr_decay_factor", cfg.lr_decay_factor},
        {"epochs", cfg.epochs},
        {"momentum", cfg.momentum},
        {"weight_decay", cfg.weight_decay},
        {"seed", cfg.seed},
        {"hidden_dims", cfg.hidden_dims},
        {"embedding_dim", cfg.embedding_dim},
    };
}

/// Overlays the keys present in `j` onto `cfg`. Unknown keys are rejected so
/// config-file typos fail loudly instead of silently using defaults.
inline void apply_config_json(TrainConfig& cfg, const nlohmann::json& j) {
    if (!j.is_object())
        throw std::invalid_argument("config: top-level JSON value must be an object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "loss")
                cfg.loss.kind = loss_kind_from_string(value.get<std::string>());
            else if (key == "alpha")
                cfg.loss.hard_mining.alpha = value.get<double>();
            else if (key == "beta")
                cfg.loss.hard_mining.beta = value.get<double>();
            else if (key == "sigmoid_slope")
                cfg.loss.hard_mining.sigmoid.slope = value.get<double>();
            else if (key == "sigmoid_center")
                cfg.loss.hard_mining.sigmoid.center = value.get<double>();
            else if (key == "hm_mode")
                cfg.loss.hard_mining.mode = hm_mode_from_string(value.get<std::string>());
            else if (key == "angular_margin")
                cfg.loss.angular.margin = value.get<int>();
            else if (key == "arc_scale")
                cfg.loss.arc.scale = value.get<double>();
            else if (key == "arc_margin")
                cfg.loss.arc.margin = value.get<double>();
            else if (key == "batch_size")
                cfg.batch_size = value.get<int>();
            else if (key == "initial_lr")
                cfg.initial_lr = value.get<double>();
            else if (key == "lr_decay_epochs")
                cfg.lr_decay_epochs = value.get<std::vector<int>>();
            else if (key == "lr_decay_factor")
                cfg.lr_decay_factor = value.get<double>();
            else if (key == "epochs")
                cfg.epochs = value.get<int>();
            else if (key == "momentum")
                cfg.momentum = value.get<double>();
            else if (key == "weight_decay")
                cfg.weight_decay = value.get<double>();
            else if (key == "seed")
                cfg.seed = value.get<std::uint64_t>();
            else if (key == "hidden_dims")
                cfg.hidden_dims = value.get<std::vector<std::size_t>>();
            else if (key == "embedding_dim")
                cfg.embedding_dim = value.get<std::size_t>();
            else
                throw std::invalid_argument("config: unknown key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument("config: bad value for '" + key + "': " + e.what());
        }
    }
}

} // namespace hmloss
