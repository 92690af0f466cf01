#include "cas/config_io.hpp"

#include <set>

namespace cas {

using json = nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw ValidationError(std::string(what) + ": expected a JSON object");
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ValidationError(std::string(what) + ": unknown field '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(json& j, const NetworkConfig& c) {
  j = {{"in_channels", c.in_channels},     {"num_classes", c.num_classes},     {"depth", c.depth},
       {"base_channels", c.base_channels}, {"embedding_dim", c.embedding_dim}, {"use_skips", c.use_skips},
       {"head", to_string(c.head)}};
}

void from_json(const json& j, NetworkConfig& c) {
  reject_unknown(j, {"in_channels", "num_classes", "depth", "base_channels", "embedding_dim", "use_skips", "head"},
                 "network");
  read(j, "in_channels", c.in_channels);
  read(j, "num_classes", c.num_classes);
  read(j, "depth", c.depth);
  read(j, "base_channels", c.base_channels);
  read(j, "embedding_dim", c.embedding_dim);
  read(j, "use_skips", c.use_skips);
  if (j.contains("head")) c.head = head_from_string(j.at("head").get<std::string>());
}

void to_json(json& j, const PretrainConfig& c) {
  j = {{"phase1_epochs", c.phase1_epochs},
       {"phase2_epochs", c.phase2_epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"momentum", c.momentum},
       {"lambda", c.lambda},
       {"clusters", c.clusters},
       {"target_update_interval", c.target_update_interval},
       {"stop_delta", c.stop_delta},
       {"seed", c.seed},
       {"kmeans_restarts", c.kmeans_restarts}};
}

void from_json(const json& j, PretrainConfig& c) {
  reject_unknown(j,
                 {"phase1_epochs", "phase2_epochs", "batch_size", "learning_rate", "momentum", "lambda", "clusters",
                  "target_update_interval", "stop_delta", "seed", "kmeans_restarts"},
                 "pretrain");
  read(j, "phase1_epochs", c.phase1_epochs);
  read(j, "phase2_epochs", c.phase2_epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "momentum", c.momentum);
  read(j, "lambda", c.lambda);
  read(j, "clusters", c.clusters);
  read(j, "target_update_interval", c.target_update_interval);
  read(j, "stop_delta", c.stop_delta);
  read(j, "seed", c.seed);
  read(j, "kmeans_restarts", c.kmeans_restarts);
}

void to_json(json& j, const FinetuneConfig& c) {
  j = {{"epochs", c.epochs},     {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
       {"momentum", c.momentum}, {"seed", c.seed},             {"init_mode", to_string(c.init_mode)}};
}

void from_json(const json& j, FinetuneConfig& c) {
  reject_unknown(j, {"epochs", "batch_size", "learning_rate", "momentum", "seed", "init_mode"}, "finetune");
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "momentum", c.momentum);
  read(j, "seed", c.seed);
  if (j.contains("init_mode")) c.init_mode = init_mode_from_string(j.at("init_mode").get<std::string>());
}

void to_json(json& j, const SyntheticConfig& c) {
  j = {{"n_labeled", c.n_labeled}, {"n_unlabeled", c.n_unlabeled},         {"height", c.height},
       {"width", c.width},         {"bands", c.bands},                     {"classes", c.classes},
       {"modes_per_class", c.modes_per_class}, {"noise_std", c.noise_std}, {"seed", c.seed}};
}

void from_json(const json& j, SyntheticConfig& c) {
  reject_unknown(j,
                 {"n_labeled", "n_unlabeled", "height", "width", "bands", "classes", "modes_per_class", "noise_std",
                  "seed"},
                 "synthetic");
  read(j, "n_labeled", c.n_labeled);
  read(j, "n_unlabeled", c.n_unlabeled);
  read(j, "height", c.height);
  read(j, "width", c.width);
  read(j, "bands", c.bands);
  read(j, "classes", c.classes);
  read(j, "modes_per_class", c.modes_per_class);
  read(j, "noise_std", c.noise_std);
  read(j, "seed", c.seed);
}

}  // namespace cas
