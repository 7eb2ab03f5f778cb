#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mgcn/dataset.hpp"
#include "mgcn/synth.hpp"
#include "mgcn/train.hpp"

namespace mgcn {

// Dataset on disk: `dir/manifest.json` plus one header-free CSV per subject
// and modality (Q rows x T columns) under `dir/series/<modality>/`, and
// `dir/fn_labels.txt` (one network label per ROI) when the dataset has them.
// Returns the manifest path.
std::filesystem::path save_dataset(const Dataset& data, const std::filesystem::path& dir);
// Paths inside the manifest are relative to its directory.
Dataset load_dataset(const std::filesystem::path& manifest);

// key = value lines; '#' starts a comment. Training keys are prefixed
// "train.", generator keys "synth.". Unknown keys and bad values throw
// ValidationError naming the line. Either target may be null, in which case
// its keys are still checked but ignored.
void apply_config(const std::string& text, TrainConfig* train, SynthConfig* synth,
                  const std::string& where = "config");
void load_config(const std::filesystem::path& path, TrainConfig* train, SynthConfig* synth);
// Every field, in a form apply_config reads back to an equal config.
std::string config_to_text(const TrainConfig& train, const SynthConfig& synth);

// What a checkpoint was trained on, so it can be applied to the same data.
struct CheckpointInfo {
    std::string model = "mgcn";           // model label, e.g. "gcn:emoid"
    std::vector<std::string> modalities;  // dataset modalities the model consumes, in order
    std::uint64_t seed = 0;               // master seed of the run
};

// Binary checkpoint: "MGCNCKPT", u32 version, u64 header length, a JSON
// header (spec, label mean, training summary, run info, tensor names and
// shapes), then every parameter tensor as little-endian f64 in header order.
void save_checkpoint(const std::filesystem::path& path, const TrainResult& model, const CheckpointInfo& info = {});
TrainResult load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

} // namespace mgcn
