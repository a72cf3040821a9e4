#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "copush/motion_synth.hpp"
#include "copush/skeleton.hpp"

namespace copush {

void make_directories(const std::string& path);

bool file_exists(const std::string& path);

// FNV-1a over the file bytes; used to fingerprint dataset manifests.
std::uint64_t fnv1a_file(const std::string& path);

// One JSON object per frame:
// {"t": .., "joints": [[x,y,z] x 17], "box_x": .., "box_v": .., "f_h": [x,y,z], "label": -1|0|1}
void write_sequence_jsonl(const std::string& path, const LabeledSequence& seq);

struct LoadedSequence {
  std::vector<SkeletonFrame> frames;
  std::vector<double> box_positions;
  std::vector<double> box_velocities;
  std::vector<IntentionClass> labels;
};

LoadedSequence load_sequence_jsonl(const std::string& path);

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::string& path);

}  // namespace copush
