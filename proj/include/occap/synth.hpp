#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "occap/features.hpp"
#include "occap/manifest.hpp"

namespace occap::corpus {

struct SynthSpec {
    int n_images = 50;
    int n_topics = 3;
    int vocab_size = 30;
    int grid_n = 4;
    int d_fc = 16;
    int d_loc = 16;
    std::uint64_t seed = 1;
    // knobs beyond the required surface
    int captions_min = 1;
    int captions_max = 3;
    double noise = 0.05;
    double fc_noise = -1.0; // override for the global features; <0 means `noise`
    double train_frac = 0.8;
    double val_frac = 0.1;
};

// Generative model: each image draws 1-2 latent topics; captions are bags
// of topic-pool words in fixed-length templates; fc features are noisy
// sums of per-topic directions; spatial cells carry per-cell topic
// directions. Fully deterministic under the seed.
struct SynthResult {
    CorpusManifest manifest;
    std::map<std::string, ImageFeatures> features;
    std::map<std::string, std::vector<int>> image_topics; // ground truth
    std::vector<std::vector<std::string>> topic_pools;    // disjoint vocabularies
};

SynthResult synth_corpus(const SynthSpec& spec);

// manifest.json + features/*.ocf + topics_gt.json under dir.
void write_synth_corpus(const SynthResult& corpus, const std::filesystem::path& dir);

} // namespace occap::corpus
