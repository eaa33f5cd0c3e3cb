#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maxrr/pipeline.hpp"

namespace maxrr {

// Versioned binary model container: magic, manifest JSON, architecture,
// extractor weights, per-class SVM state, Platt parameters. All scalars are
// little-endian; weights are f64 blobs. Round-trips bit-exactly.
std::vector<uint8_t> serialize_model(const SplitModel& model);
SplitModel deserialize_model(const std::vector<uint8_t>& bytes);

void save_model(const SplitModel& model, const std::string& path);
SplitModel load_model(const std::string& path);

}  // namespace maxrr
