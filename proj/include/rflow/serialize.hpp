#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "rflow/bounds.hpp"
#include "rflow/distributions.hpp"
#include "rflow/linalg.hpp"
#include "rflow/network.hpp"
#include "rflow/oracles.hpp"
#include "rflow/training.hpp"

namespace rflow {

using Json = nlohmann::json;

/// Bad or missing configuration; `field` is the dotted path of the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what);
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Unreadable or corrupt checkpoint.
class FormatError : public Error {
public:
    using Error::Error;
};

std::string version_string();

/// FNV-1a 64 of the compact dump, as 16 hex digits.
std::string config_hash(const Json& j);

/// Pretty-printed with sorted keys and a trailing newline.
std::string dump_json(const Json& j);

/// Parses text, turning syntax errors into ConfigError with line information.
Json parse_json(const std::string& text, const std::string& source);
Json read_json_file(const std::string& path);

// Field access with dotted-path diagnostics.
const Json& require_field(const Json& j, const std::string& key, const std::string& path);
double get_number(const Json& j, const std::string& key, const std::string& path, double fallback);
std::size_t get_count(const Json& j, const std::string& key, const std::string& path, std::size_t fallback);

/// {"kind": "gaussian", "mean": [...], "std": s, "subgaussian_sigma": s}
/// {"kind": "gaussian_mixture", "components": [{"weight", "mean", "std"}...], "subgaussian_sigma"}
/// {"kind": "empirical", "points": [[...]...], "subgaussian_sigma"}
/// subgaussian_sigma is optional for the first two kinds.
Json to_json(const DistributionSpec& spec);
DistributionSpec distribution_from_json(const Json& j, const std::string& path);

Json to_json(const NetArchitecture& arch);
NetArchitecture architecture_from_json(const Json& j, const std::string& path, const NetArchitecture& fallback);

std::string to_string(StepSchedule s);
Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j, const std::string& path, const TrainConfig& fallback);

Json to_json(const BoundInputs& in);
BoundInputs bound_inputs_from_json(const Json& j, const std::string& path, const BoundInputs& fallback);
Json to_json(const BoundReport& rep);

Json to_json(const LowerBoundInstance& inst);

struct Checkpoint {
    VelocityNet net{NetArchitecture{}};
    std::uint64_t seed = 0;
    std::size_t step = 0;
    std::string config_hash;
};

inline constexpr const char* kCheckpointFormat = "rflow-checkpoint";

/// One line of compact JSON header {arch, P, seed, step, format, version,
/// config_hash}, a newline, then P little-endian IEEE-754 doubles.
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rflow
