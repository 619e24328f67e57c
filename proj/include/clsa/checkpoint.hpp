#pragma once

#include "clsa/model.hpp"
#include "clsa/windows.hpp"

#include <filesystem>

namespace clsa::checkpoint {

// File layout: "CLSACKPT" magic, little-endian uint64 header length, JSON
// header {config, tensors: [{name, rows, cols}]}, then every tensor's values
// as column-major little-endian doubles in header order.
void save(const std::filesystem::path& path, model::ClsaModel& net);
model::ClsaModel load(const std::filesystem::path& path);

// Throws ConsistencyError when the model cannot consume `dataset`.
void check_compatible(const model::ModelConfig& config, const windows::PreparedDataset& dataset);

}  // namespace clsa::checkpoint
