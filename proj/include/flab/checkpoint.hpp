#pragma once

#include <string>

#include "flab/model.hpp"

namespace flab {

// Self-describing checkpoint container, magic "FLAB1": a JSON header with
// both model configs, the compression config, the vocabulary, the training
// step and a tensor directory, followed by all tensors as row-major
// little-endian float32. The header stores an FNV-1a checksum of the
// payload; load verifies it.
struct LoadedCheckpoint {
    Model model;
    long step = 0;
};

void save_checkpoint(const std::string& path, const Model& model, long step);
LoadedCheckpoint load_checkpoint(const std::string& path);

// "ckpt_{step:08d}"
std::string checkpoint_filename(long step);

} // namespace flab
