#include "occap/synth.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "occap/errors.hpp"
#include "occap/rng.hpp"

namespace occap::corpus {

using nlohmann::json;

namespace {

std::string make_word(Rng& rng) {
    static const char* consonants = "bdfgklmnprstvz";
    static const char* vowels = "aeiou";
    const int syllables = 2 + rng.uniform_int(2);
    std::string w;
    for (int s = 0; s < syllables; ++s) {
        w.push_back(consonants[rng.uniform_int(14)]);
        w.push_back(vowels[rng.uniform_int(5)]);
    }
    return w;
}

std::vector<double> unit_direction(Rng& rng, int dim) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    double norm = 0.0;
    for (auto& x : v) {
        x = rng.gaussian();
        norm += x * x;
    }
    norm = std::sqrt(std::max(norm, 1e-12));
    for (auto& x : v) x /= norm;
    return v;
}

std::string image_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%04d", i);
    return buf;
}

} // namespace

SynthResult synth_corpus(const SynthSpec& spec) {
    if (spec.n_images < 1 || spec.n_topics < 1 || spec.vocab_size < 1 || spec.grid_n < 1 || spec.d_fc < 1 ||
        spec.d_loc < 1) {
        throw ContractError("synth_corpus: all sizes must be >= 1");
    }
    if (spec.vocab_size < spec.n_topics) {
        throw ContractError("synth_corpus: vocab_size must be >= n_topics for disjoint pools");
    }

    Rng rng(spec.seed);
    SynthResult out;

    // Disjoint per-topic word pools.
    std::set<std::string> used;
    const int pool_size = spec.vocab_size / spec.n_topics;
    out.topic_pools.resize(static_cast<std::size_t>(spec.n_topics));
    for (auto& pool : out.topic_pools) {
        while (static_cast<int>(pool.size()) < pool_size) {
            std::string w = make_word(rng);
            if (used.insert(w).second) pool.push_back(w);
        }
    }

    // Per-topic feature directions.
    std::vector<std::vector<double>> fc_dirs, loc_dirs;
    for (int k = 0; k < spec.n_topics; ++k) {
        fc_dirs.push_back(unit_direction(rng, spec.d_fc));
        loc_dirs.push_back(unit_direction(rng, spec.d_loc));
    }

    static const int kTemplateLengths[3] = {4, 5, 6};

    for (int i = 0; i < spec.n_images; ++i) {
        const std::string id = image_name(i);

        std::vector<int> topics{rng.uniform_int(spec.n_topics)};
        if (spec.n_topics > 1 && rng.uniform() < 0.5) {
            int second = rng.uniform_int(spec.n_topics - 1);
            if (second >= topics[0]) ++second;
            topics.push_back(second);
        }
        out.image_topics[id] = topics;

        ImageEntry entry;
        entry.image_id = id;
        entry.fc_ref = "features/" + id + "_fc.ocf";
        entry.spatial_ref = "features/" + id + "_sp.ocf";
        if (i < static_cast<int>(spec.n_images * spec.train_frac)) {
            entry.split = "train";
        } else if (i < static_cast<int>(spec.n_images * (spec.train_frac + spec.val_frac))) {
            entry.split = "val";
        } else {
            entry.split = "test";
        }
        out.manifest.images.push_back(entry);

        const int n_caps = spec.captions_min + rng.uniform_int(spec.captions_max - spec.captions_min + 1);
        for (int c = 0; c < n_caps; ++c) {
            const int len = kTemplateLengths[rng.uniform_int(3)];
            std::string caption;
            for (int w = 0; w < len; ++w) {
                const int topic = topics[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(topics.size())))];
                const auto& pool = out.topic_pools[static_cast<std::size_t>(topic)];
                if (!caption.empty()) caption.push_back(' ');
                caption += pool[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(pool.size())))];
            }
            out.manifest.annotations.push_back({id, caption});
        }

        ImageFeatures feats;
        const double fc_noise = spec.fc_noise < 0.0 ? spec.noise : spec.fc_noise;
        feats.fc = num::Tensor({spec.d_fc});
        for (int t : topics) {
            for (int d = 0; d < spec.d_fc; ++d) feats.fc[d] += fc_dirs[static_cast<std::size_t>(t)][static_cast<std::size_t>(d)];
        }
        for (int d = 0; d < spec.d_fc; ++d) feats.fc[d] += fc_noise * rng.gaussian();

        feats.spatial = num::Tensor({spec.grid_n, spec.d_loc});
        for (int g = 0; g < spec.grid_n; ++g) {
            const int t = topics[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(topics.size())))];
            for (int d = 0; d < spec.d_loc; ++d) {
                feats.spatial.at(g, d) = loc_dirs[static_cast<std::size_t>(t)][static_cast<std::size_t>(d)] +
                                         spec.noise * rng.gaussian();
            }
        }
        out.features[id] = std::move(feats);
    }
    return out;
}

void write_synth_corpus(const SynthResult& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "features");
    save_manifest(corpus.manifest, dir / "manifest.json");
    for (const auto& im : corpus.manifest.images) {
        const auto& feats = corpus.features.at(im.image_id);
        write_ocf(dir / im.fc_ref, feats.fc);
        write_ocf(dir / im.spatial_ref, feats.spatial);
    }
    json gt;
    gt["image_topics"] = json::object();
    for (const auto& [id, topics] : corpus.image_topics) gt["image_topics"][id] = topics;
    gt["topic_pools"] = corpus.topic_pools;
    std::ofstream out(dir / "topics_gt.json");
    if (!out) throw DataError("cannot write '" + (dir / "topics_gt.json").string() + "'");
    out << gt.dump(2) << "\n";
}

} // namespace occap::corpus
