#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "occap/optim.hpp"
#include "occap/param_store.hpp"

namespace occap::ckpt {

// Checkpoint layout: manifest.json naming each tensor's OCF1 payload file,
// plus optimizer moments and free-form metadata.
void save(const std::filesystem::path& dir, const num::ParamStore& params, const num::AdamState* adam,
          const nlohmann::json& meta);

// Loads values into an already-declared ParamStore (names and shapes must
// match). Returns the stored metadata.
nlohmann::json load(const std::filesystem::path& dir, num::ParamStore& params, num::AdamState* adam);

bool exists(const std::filesystem::path& dir);

// Rounds every value through f32. Applied at epoch boundaries so a resumed
// run (whose state passed through OCF1's f32 payloads) is bit-identical to
// an uninterrupted one.
void quantize_f32(num::ParamStore& params);
void quantize_f32(num::AdamState& adam);

} // namespace occap::ckpt
