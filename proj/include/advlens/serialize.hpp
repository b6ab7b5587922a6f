#pragma once

#include <filesystem>

#include <json.hpp>

#include "advlens/network.hpp"
#include "advlens/tensor.hpp"

namespace advlens {

/// Tensor file: "ADVTNSR1", u32 rank, u64 dims[rank], f64 data (little endian).
void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

nlohmann::json network_spec_to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);

/// Network file: "ADVNET01", u64 header length, JSON header (input shape,
/// layer specs, format version), then raw f64 weight and bias values for each
/// parameterised layer in order. Parameters round-trip bit-exactly.
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

}  // namespace advlens
