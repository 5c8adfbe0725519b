#pragma once

#include <filesystem>

#include <json.hpp>

#include "reluopt/nn.hpp"
#include "reluopt/train.hpp"

namespace reluopt::nn {

inline constexpr int kNetworkFormatVersion = 1;

/// Versioned document: layer_sizes, kind, k, row-major weights, biases and
/// normalisation ranges. Doubles are written with round-trip precision.
nlohmann::json to_json(const ReluNetwork& net);
ReluNetwork network_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const TrainReport& report);

void save_network(const ReluNetwork& net, const std::filesystem::path& path);
ReluNetwork load_network(const std::filesystem::path& path);

}  // namespace reluopt::nn
