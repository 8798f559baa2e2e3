// JSON persistence for checkpoints, demonstrations, reports and traces.
#pragma once

#include "coordflow/weight_training.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace coordflow {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::filesystem::path path)
      : std::runtime_error(what + ": " + path.string()), path_(std::move(path)) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json vec_json(const Vec& v);
Vec vec_from(const json& j);

json to_json(const MlpSpec& s);
MlpSpec mlp_spec_from(const json& j);
json to_json(const Mlp& p);
Mlp mlp_from(const json& j);
json to_json(const Normalizer& n);
Normalizer normalizer_from(const json& j);
json to_json(const PolicyCheckpoint& c);
PolicyCheckpoint checkpoint_from(const json& j);
json to_json(const WeightNet& w);
WeightNet weight_net_from(const json& j);

json to_json(const Conditioning& c);
Conditioning conditioning_from(const json& j);
json to_json(const ArmAction& a);
ArmAction arm_action_from(const json& j);
json to_json(const BimanualAction& a);
BimanualAction bimanual_from(const json& j);
json to_json(const ArmDemonstration& d);
ArmDemonstration arm_demo_from(const json& j);
json to_json(const Demonstration& d);
Demonstration demo_from(const json& j);

json to_json(const EnergyBreakdown& e);
EnergyBreakdown breakdown_from(const json& j);
json to_json(const EpisodeResult& r, bool with_steps);
json to_json(const SuiteReport& r, bool with_steps);
SuiteReport suite_report_from(const json& j);

json to_json(const TaskSpec& t);
TaskSpec task_spec_from(const json& j);

/// Writes `j` followed by a newline; creates parent directories.
void write_json(const std::filesystem::path& path, const json& j, int indent = 1);
json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// FNV-1a 64-bit, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& data);

/// Envelope shared by every artifact: {"schema_version", "kind", "config_hash", "data"}.
json envelope(const std::string& kind, const std::string& config_hash, json data);
/// Checks version and kind; returns the payload.
const json& open_envelope(const json& j, const std::string& kind);

}  // namespace coordflow
