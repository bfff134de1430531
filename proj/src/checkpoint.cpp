#include "ids/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ids {

namespace {

nlohmann::json config_json(const ModelConfig& c) {
    nlohmann::json j;
    j["feature_count"] = c.feature_count;
    j["num_classes"] = c.num_classes;
    j["kernel_size"] = c.kernel_size;
    j["pairs"] = c.pairs;
    j["bridge_width"] = c.bridge_width;
    j["dropout_rate"] = c.dropout_rate;
    j["seed"] = c.seed;
    return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.feature_count = j.at("feature_count").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.kernel_size = j.at("kernel_size").get<std::size_t>();
    c.pairs = j.at("pairs").get<std::size_t>();
    c.bridge_width = j.at("bridge_width").get<std::size_t>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace

void Checkpoint::save(Network& network, const FeatureSchema& schema, const std::string& path) {
    nlohmann::json j;
    j["format"] = "ids-checkpoint";
    j["version"] = 1;
    j["config"] = config_json(network.config());
    j["seed"] = network.config().seed;
    j["schema"] = nlohmann::json::parse(schema.to_json());
    j["schema_fingerprint"] = schema.fingerprint();

    nlohmann::json params = nlohmann::json::array();
    for (Param* p : network.params()) {
        nlohmann::json jp;
        jp["name"] = p->name;
        jp["shape"] = p->value.shape;
        jp["data"] = p->value.data;
        params.push_back(std::move(jp));
    }
    j["params"] = std::move(params);

    nlohmann::json stats = nlohmann::json::array();
    for (auto& [name, s] : network.bn_stats()) {
        nlohmann::json js;
        js["name"] = name;
        js["mean"] = s->mean.data;
        js["var"] = s->var.data;
        stats.push_back(std::move(js));
    }
    j["bn_stats"] = std::move(stats);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << j.dump(2) << "\n";
}

Network Checkpoint::load(const std::string& path, FeatureSchema* schema_out) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json j = nlohmann::json::parse(ss.str());
    if (j.value("format", "") != "ids-checkpoint")
        throw std::runtime_error("not a checkpoint file: " + path);

    Network network(config_from_json(j.at("config")));

    FeatureSchema schema = FeatureSchema::from_json(j.at("schema").dump());
    const std::string recorded = j.at("schema_fingerprint").get<std::string>();
    if (schema.fingerprint() != recorded)
        throw std::runtime_error("checkpoint schema fingerprint mismatch (corrupt file?)");
    if (schema_out) *schema_out = schema;

    auto params = network.params();
    const auto& jp = j.at("params");
    if (jp.size() != params.size())
        throw std::runtime_error("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = jp[i];
        if (entry.at("name").get<std::string>() != params[i]->name)
            throw std::runtime_error("checkpoint parameter order mismatch at " + params[i]->name);
        auto data = entry.at("data").get<std::vector<double>>();
        if (data.size() != params[i]->value.size())
            throw std::runtime_error("checkpoint parameter size mismatch at " + params[i]->name);
        params[i]->value.data = std::move(data);
    }

    auto stats = network.bn_stats();
    const auto& js = j.at("bn_stats");
    if (js.size() != stats.size()) throw std::runtime_error("checkpoint BN stats count mismatch");
    for (std::size_t i = 0; i < stats.size(); ++i) {
        stats[i].second->mean.data = js[i].at("mean").get<std::vector<double>>();
        stats[i].second->var.data = js[i].at("var").get<std::vector<double>>();
    }
    return network;
}

}  // namespace ids
