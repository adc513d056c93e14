#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "vdsm/mlp.hpp"
#include "vdsm/tape.hpp"

namespace vdsm {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointExt = ".v1";

// On-disk model state: a single JSON text file holding a format version,
// the MlpSpecs, and named flat row-major arrays for every ParamTensor.
// Loading rejects unknown versions.
struct Checkpoint {
    int format_version = kCheckpointVersion;
    nlohmann::json metadata;                 // config snapshot and model facts
    std::map<std::string, MlpSpec> specs;    // by net name
    std::map<std::string, Matrix> arrays;    // by tensor name

    void put_array(const std::string& name, const Matrix& m) { arrays[name] = m; }
    const Matrix& get_array(const std::string& name) const;
    bool has_array(const std::string& name) const { return arrays.count(name) > 0; }

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    nlohmann::json to_json() const;
    static Checkpoint from_json(const nlohmann::json& j);
};

nlohmann::json mlp_spec_to_json(const MlpSpec& spec);
MlpSpec mlp_spec_from_json(const nlohmann::json& j);

}  // namespace vdsm
