#pragma once

// Single-file container for networks and datasets (.fma):
//
//   u64 little-endian   manifest byte length
//   UTF-8 JSON          manifest {"entries": {...}, "metadata": {...}}
//   raw bytes           payload, little-endian tensors
//
// Each entry is {"dtype": "f32"|"f64"|"i64", "shape": [...],
// "byte_offset": n, "byte_length": n}, offsets relative to the payload
// start. metadata carries "format_version", "kind" and, for networks, the
// input shape and layer list.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "featmerge/inference.hpp"
#include "featmerge/network.hpp"
#include "json.hpp"

namespace featmerge {

inline constexpr const char* kArchiveVersion = "1";

struct ArchiveEntry {
    std::string dtype;
    Shape shape;
    std::uint64_t byte_offset = 0;
    std::uint64_t byte_length = 0;
};

struct ArchiveManifest {
    std::map<std::string, ArchiveEntry> entries;
    nlohmann::json metadata;
};

/// Checks the manifest against a payload of `payload_size` bytes: version
/// present and supported, dtypes known, lengths matching shapes, entries in
/// bounds and non-overlapping.
void validate_manifest(const ArchiveManifest& manifest, std::uint64_t payload_size);

std::vector<std::uint8_t> encode_network(const Network& net);
Network decode_network(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_dataset(const LabeledDataset& data);
LabeledDataset decode_dataset(const std::vector<std::uint8_t>& bytes);

void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);
void save_dataset(const LabeledDataset& data, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

ArchiveManifest read_manifest(const std::vector<std::uint8_t>& bytes);

nlohmann::json layer_to_json(const LayerSpec& layer);
LayerSpec layer_from_json(const nlohmann::json& j);

}  // namespace featmerge
