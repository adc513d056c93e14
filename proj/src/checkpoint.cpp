#include "vdsm/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace vdsm {

using nlohmann::json;

json mlp_spec_to_json(const MlpSpec& spec) {
    json j;
    j["input_dim"] = spec.input_dim;
    j["hidden_dims"] = spec.hidden_dims;
    j["output_dim"] = spec.output_dim;
    j["activation"] = activation_name(spec.activation);
    return j;
}

MlpSpec mlp_spec_from_json(const json& j) {
    MlpSpec spec;
    spec.input_dim = j.at("input_dim").get<Eigen::Index>();
    spec.hidden_dims = j.at("hidden_dims").get<std::vector<Eigen::Index>>();
    spec.output_dim = j.at("output_dim").get<Eigen::Index>();
    spec.activation = activation_from_name(j.at("activation").get<std::string>());
    validate_spec(spec);
    return spec;
}

const Matrix& Checkpoint::get_array(const std::string& name) const {
    auto it = arrays.find(name);
    if (it == arrays.end())
        throw std::invalid_argument("checkpoint: missing array '" + name + "'");
    return it->second;
}

json Checkpoint::to_json() const {
    json j;
    j["format_version"] = format_version;
    j["metadata"] = metadata;
    json specs_j = json::object();
    for (const auto& [name, spec] : specs) specs_j[name] = mlp_spec_to_json(spec);
    j["mlp_specs"] = specs_j;
    json arrays_j = json::object();
    for (const auto& [name, m] : arrays) {
        json a;
        a["rows"] = m.rows();
        a["cols"] = m.cols();
        std::vector<double> data;
        data.reserve(static_cast<std::size_t>(m.size()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
        a["data"] = data;  // row-major
        arrays_j[name] = a;
    }
    j["arrays"] = arrays_j;
    return j;
}

Checkpoint Checkpoint::from_json(const json& j) {
    Checkpoint ck;
    ck.format_version = j.at("format_version").get<int>();
    if (ck.format_version != kCheckpointVersion)
        throw std::invalid_argument("checkpoint: unsupported format version " +
                                    std::to_string(ck.format_version));
    ck.metadata = j.value("metadata", json::object());
    for (auto& [name, spec_j] : j.at("mlp_specs").items())
        ck.specs[name] = mlp_spec_from_json(spec_j);
    for (auto& [name, a] : j.at("arrays").items()) {
        const auto rows = a.at("rows").get<Eigen::Index>();
        const auto cols = a.at("cols").get<Eigen::Index>();
        const auto data = a.at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != rows * cols)
            throw std::invalid_argument("checkpoint: array '" + name + "' size mismatch");
        Matrix m(rows, cols);
        std::size_t k = 0;
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++];
        ck.arrays[name] = std::move(m);
    }
    return ck;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    out << to_json().dump(1) << "\n";
    if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    json j;
    in >> j;
    return from_json(j);
}

}  // namespace vdsm
