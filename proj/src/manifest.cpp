#include "occap/manifest.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "occap/errors.hpp"

namespace occap::corpus {

using nlohmann::json;

namespace {

constexpr int kMaxCaptionsPerImage = 5;

std::string get_string(const json& j, const char* key, const char* ctx) {
    if (!j.contains(key) || !j[key].is_string()) {
        throw DataError(std::string("manifest ") + ctx + ": missing or non-string field '" + key + "'");
    }
    return j[key].get<std::string>();
}

} // namespace

const ImageEntry* CorpusManifest::find_image(const std::string& image_id) const {
    for (const auto& im : images) {
        if (im.image_id == image_id) return &im;
    }
    return nullptr;
}

std::vector<std::string> CorpusManifest::captions_of(const std::string& image_id) const {
    std::vector<std::string> out;
    for (const auto& a : annotations) {
        if (a.image_id == image_id) out.push_back(a.caption);
    }
    return out;
}

std::vector<const ImageEntry*> CorpusManifest::split_images(const std::string& split) const {
    std::vector<const ImageEntry*> out;
    for (const auto& im : images) {
        if (im.split == split) out.push_back(&im);
    }
    return out;
}

CorpusManifest parse_manifest(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("manifest parse error: ") + e.what());
    }
    if (!j.is_object() || !j.contains("images") || !j["images"].is_array()) {
        throw DataError("manifest: top-level 'images' array is required");
    }

    CorpusManifest m;
    std::set<std::string> known_ids;
    for (const auto& im : j["images"]) {
        ImageEntry e;
        e.image_id = get_string(im, "image_id", "image");
        e.fc_ref = get_string(im, "fc", "image");
        e.spatial_ref = get_string(im, "spatial", "image");
        e.split = get_string(im, "split", "image");
        if (e.split != "train" && e.split != "val" && e.split != "test") {
            throw DataError("manifest: image '" + e.image_id + "' has unknown split '" + e.split + "'");
        }
        if (!known_ids.insert(e.image_id).second) {
            throw DataError("manifest: duplicate image_id '" + e.image_id + "'");
        }
        m.images.push_back(std::move(e));
    }

    std::vector<std::string> unknown;
    std::map<std::string, int> caption_count;
    if (j.contains("annotations")) {
        if (!j["annotations"].is_array()) throw DataError("manifest: 'annotations' must be an array");
        for (const auto& an : j["annotations"]) {
            Annotation a;
            a.image_id = get_string(an, "image_id", "annotation");
            a.caption = get_string(an, "caption", "annotation");
            if (!known_ids.count(a.image_id)) {
                unknown.push_back(a.image_id);
                continue;
            }
            // keep the first 5 captions per image, in file order
            if (++caption_count[a.image_id] > kMaxCaptionsPerImage) continue;
            m.annotations.push_back(std::move(a));
        }
    }
    if (!unknown.empty()) {
        std::ostringstream os;
        os << "manifest: annotations reference unknown image ids:";
        for (const auto& id : unknown) os << " '" << id << "'";
        throw DataError(os.str());
    }
    return m;
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    CorpusManifest m = parse_manifest(buf.str());
    m.base_dir = path.parent_path();
    return m;
}

void save_manifest(const CorpusManifest& m, const std::filesystem::path& path) {
    json j;
    j["images"] = json::array();
    for (const auto& im : m.images) {
        j["images"].push_back({{"image_id", im.image_id},
                               {"fc", im.fc_ref},
                               {"spatial", im.spatial_ref},
                               {"split", im.split}});
    }
    j["annotations"] = json::array();
    for (const auto& a : m.annotations) {
        j["annotations"].push_back({{"image_id", a.image_id}, {"caption", a.caption}});
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest file '" + path.string() + "'");
    out << j.dump(2) << "\n";
}

} // namespace occap::corpus
