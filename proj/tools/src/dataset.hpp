#pragma once

#include "gsgtrack/pipeline.hpp"

#include <filesystem>
#include <string>

namespace gsg::tools {

// On-disk sequence layout read by `run` and written by `synth --write-input`:
//   sequence.json      {"camera": {fx, fy, cx, cy, width, height},
//                       "first_extent": [w, h], "frames": n}
//   frames/NNNNNN.png  colour frames
//   masks/NNNNNN.png   object masks
//   pairs/             GSGR pointmaps of stored edges (optional)
//   scene.json         synthetic scene spec (optional, enables oracle mode)
//   ground_truth.json  {"diameter", "poses": [[12 floats]], "model_points"}
void write_sequence(const std::filesystem::path& dir, const SequenceInput& input);
SequenceInput read_sequence(const std::filesystem::path& dir);

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& gt);
GroundTruth read_ground_truth(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace gsg::tools
