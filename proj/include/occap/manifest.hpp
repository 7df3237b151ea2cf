#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace occap::corpus {

struct ImageEntry {
    std::string image_id;
    std::string fc_ref;
    std::string spatial_ref;
    std::string split; // train | val | test

    bool operator==(const ImageEntry&) const = default;
};

struct Annotation {
    std::string image_id;
    std::string caption;

    bool operator==(const Annotation&) const = default;
};

// Dataset description binding image features, captions and splits.
// At most 5 captions are kept per image (first by file order).
struct CorpusManifest {
    std::vector<ImageEntry> images;
    std::vector<Annotation> annotations;
    std::filesystem::path base_dir; // directory the manifest was loaded from

    const ImageEntry* find_image(const std::string& image_id) const;
    std::vector<std::string> captions_of(const std::string& image_id) const;
    std::vector<const ImageEntry*> split_images(const std::string& split) const;

    bool operator==(const CorpusManifest& o) const {
        return images == o.images && annotations == o.annotations;
    }
};

CorpusManifest parse_manifest(const std::string& json_text);
CorpusManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const CorpusManifest& m, const std::filesystem::path& path);

} // namespace occap::corpus
