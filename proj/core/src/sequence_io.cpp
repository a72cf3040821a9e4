#include "copush/sequence_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "copush/error.hpp"

namespace copush {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void make_directories(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

bool file_exists(const std::string& path) { return fs::exists(path); }

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

namespace {

// shortest round-trip decimal; normalizes -0.0 so integers re-parse bit-exactly
void append_double(std::string& out, double v) {
  v += 0.0;
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double get_finite(const nlohmann::json& j, const char* key) {
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v)) throw IoError(std::string("non-finite value for field ") + key);
  return v;
}

}  // namespace

void write_sequence_jsonl(const std::string& path, const LabeledSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  std::string line;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto& f = seq.frames[i];
    line.clear();
    line += "{\"t\":";
    append_double(line, f.timestamp);
    line += ",\"joints\":[";
    for (int j = 0; j < f.joint_positions.rows(); ++j) {
      if (j) line += ',';
      line += '[';
      append_double(line, f.joint_positions(j, 0));
      line += ',';
      append_double(line, f.joint_positions(j, 1));
      line += ',';
      append_double(line, f.joint_positions(j, 2));
      line += ']';
    }
    line += "],\"box_x\":";
    append_double(line, seq.box_positions[i]);
    line += ",\"box_v\":";
    append_double(line, seq.box_velocities[i]);
    line += ",\"f_h\":[0,0,0],\"label\":";
    line += std::to_string(static_cast<int>(seq.labels[i]));
    line += "}\n";
    out << line;
  }
  if (!out) throw IoError("write failed for " + path);
}

LoadedSequence load_sequence_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  LoadedSequence seq;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    SkeletonFrame frame;
    frame.timestamp = get_finite(j, "t");
    const auto& joints = j.at("joints");
    if (joints.size() != 17) {
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 17 joints");
    }
    frame.joint_positions.resize(17, 3);
    for (int k = 0; k < 17; ++k) {
      for (int c = 0; c < 3; ++c) {
        const double v = joints[k][c].get<double>();
        if (!std::isfinite(v)) {
          throw IoError(path + ":" + std::to_string(lineno) + ": non-finite joint position");
        }
        frame.joint_positions(k, c) = v;
      }
    }
    seq.box_positions.push_back(get_finite(j, "box_x"));
    seq.box_velocities.push_back(get_finite(j, "box_v"));
    const int label = j.at("label").get<int>();
    seq.labels.push_back(class_from_int(label));
    seq.frames.push_back(std::move(frame));
  }
  for (std::size_t i = 1; i < seq.frames.size(); ++i) {
    const double gap = seq.frames[i].timestamp - seq.frames[i - 1].timestamp;
    if (gap <= 0.0 || std::abs(gap - kFrameDt) > kFrameSpacingTol) {
      throw IoError(path + ": frame spacing " + std::to_string(gap) +
                    " s off the nominal 100 Hz rate");
    }
  }
  return seq;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  ordered_json j;
  j["recordings"] = ordered_json::array();
  for (const auto& r : manifest.recordings) {
    ordered_json e;
    e["path"] = r.path;
    e["seed"] = r.seed;
    e["n_frames"] = r.n_frames;
    e["mix"] = {{"idle", r.mix[0]}, {"pull", r.mix[1]}, {"push", r.mix[2]}};
    e["n_actions"] = r.n_actions;
    j["recordings"].push_back(e);
  }
  j["split"] = manifest.split;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad JSON: " + e.what());
  }
  DatasetManifest m;
  m.split = j.at("split").get<std::string>();
  for (const auto& e : j.at("recordings")) {
    RecordingEntry r;
    r.path = e.at("path").get<std::string>();
    r.seed = e.at("seed").get<std::uint64_t>();
    r.n_frames = e.at("n_frames").get<std::size_t>();
    r.mix = {e.at("mix").at("idle").get<double>(), e.at("mix").at("pull").get<double>(),
             e.at("mix").at("push").get<double>()};
    r.n_actions = e.at("n_actions").get<int>();
    m.recordings.push_back(std::move(r));
  }
  return m;
}

}  // namespace copush
