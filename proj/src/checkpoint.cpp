#include "occap/checkpoint.hpp"

#include <fstream>

#include "occap/errors.hpp"
#include "occap/features.hpp"

namespace occap::ckpt {

using nlohmann::json;

namespace {

std::string payload_name(const std::string& param_name) {
    std::string out = param_name;
    for (char& c : out) {
        if (c == '/' || c == '\\') c = '_';
    }
    return out + ".ocf";
}

void round_f32(std::vector<double>& v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

} // namespace

void save(const std::filesystem::path& dir, const num::ParamStore& params, const num::AdamState* adam,
          const json& meta) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["meta"] = meta;
    manifest["params"] = json::object();
    for (const auto& [name, tensor] : params) {
        const std::string file = payload_name(name);
        manifest["params"][name] = file;
        corpus::write_ocf(dir / file, tensor);
    }
    if (adam) {
        manifest["adam"] = {{"step_count", adam->step_count()}, {"m", json::object()}, {"v", json::object()}};
        for (const auto& [name, m] : adam->first_moments()) {
            const std::string file = "adam_m_" + payload_name(name);
            manifest["adam"]["m"][name] = file;
            corpus::write_ocf(dir / file, num::Tensor({static_cast<int>(m.size())}, m));
        }
        for (const auto& [name, v] : adam->second_moments()) {
            const std::string file = "adam_v_" + payload_name(name);
            manifest["adam"]["v"][name] = file;
            corpus::write_ocf(dir / file, num::Tensor({static_cast<int>(v.size())}, v));
        }
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw DataError("cannot write checkpoint manifest in '" + dir.string() + "'");
    out << manifest.dump(2) << "\n";
}

json load(const std::filesystem::path& dir, num::ParamStore& params, num::AdamState* adam) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw DataError("cannot open checkpoint manifest in '" + dir.string() + "'");
    json manifest;
    try {
        in >> manifest;
    } catch (const json::parse_error& e) {
        throw DataError(std::string("checkpoint manifest parse error: ") + e.what());
    }
    for (const auto& [name, file] : manifest.at("params").items()) {
        if (!params.contains(name)) {
            throw DataError("checkpoint holds unknown parameter '" + name + "'");
        }
        num::Tensor loaded = corpus::read_ocf(dir / file.get<std::string>(), params.at(name).shape());
        params.at(name).data() = loaded.data();
    }
    for (const auto& [name, tensor] : params) {
        if (!manifest.at("params").contains(name)) {
            throw DataError("checkpoint is missing parameter '" + name + "'");
        }
    }
    if (adam && manifest.contains("adam")) {
        adam->set_step_count(manifest["adam"].at("step_count").get<std::int64_t>());
        for (const auto& [name, file] : manifest["adam"].at("m").items()) {
            adam->first_moments()[name] = corpus::read_ocf(dir / file.get<std::string>()).data();
        }
        for (const auto& [name, file] : manifest["adam"].at("v").items()) {
            adam->second_moments()[name] = corpus::read_ocf(dir / file.get<std::string>()).data();
        }
    }
    return manifest.at("meta");
}

bool exists(const std::filesystem::path& dir) { return std::filesystem::exists(dir / "manifest.json"); }

void quantize_f32(num::ParamStore& params) {
    for (auto& [name, tensor] : params) round_f32(tensor.data());
}

void quantize_f32(num::AdamState& adam) {
    for (auto& [name, m] : adam.first_moments()) round_f32(m);
    for (auto& [name, v] : adam.second_moments()) round_f32(v);
}

} // namespace occap::ckpt
