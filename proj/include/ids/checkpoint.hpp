#pragma once

#include <string>

#include "ids/network.hpp"
#include "ids/pipeline.hpp"

namespace ids {

/// Versioned JSON container binding a trained network to the exact feature
/// schema it was trained with. Serialization is deterministic, so identical
/// seed + data produce byte-identical files.
struct Checkpoint {
    ModelConfig config;
    std::uint64_t seed = 0;
    FeatureSchema schema;

    static void save(Network& network, const FeatureSchema& schema, const std::string& path);
    /// Rebuilds the network and restores all parameters and BN stats.
    static Network load(const std::string& path, FeatureSchema* schema_out = nullptr);
};

}  // namespace ids
