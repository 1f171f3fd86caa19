// SPDX-License-Identifier: Apache-2.0
//
// Dataset ingestion, modality splitting, per-class subsampling, stratified
// train/validation splits and the synthetic multimodal generator.
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "xcnn/engine.hpp"
#include "xcnn/tensor.hpp"

namespace xcnn {

struct LabeledDataset {
    Tensor<float> images;  // (n, h, w, c)
    std::shared_ptr<const std::vector<int>> labels;
    int class_count = 0;

    int size() const { return images.shape.empty() ? 0 : images.shape[0]; }
    int height() const { return images.shape[1]; }
    int width() const { return images.shape[2]; }
    int channels() const { return images.shape[3]; }
};

struct ModalitySpec {
    std::string name;
    std::vector<int> channel_indices;
};

// Named channel views of one dataset, in modality order.
using ModalViews = std::vector<std::pair<std::string, LabeledDataset>>;

// Standard binary records: 1 label byte + h*w*c channel-planar pixel bytes.
// `path` may be a single file or a directory of *.bin batches (sorted).
LabeledDataset load_cifar10(const std::filesystem::path& path);

// Full-range BT.601 luma; chroma differences scaled to [-0.5, 0.5] and
// recentred with +0.5 so every channel stays inside [0, 1].
LabeledDataset rgb_to_yuv(const LabeledDataset& d);

std::vector<ModalitySpec> yuv_modalities();

ModalViews split_modalities(const LabeledDataset& d, const std::vector<ModalitySpec>& specs);

// Keeps ceil(p/100 * count) examples of every class, chosen by seeded shuffle;
// original sample order is preserved.
LabeledDataset subsample_per_class(const LabeledDataset& d, double p, uint64_t seed);

struct SplitDataset {
    LabeledDataset train;
    LabeledDataset val;
};
// Stratified by class; both sides non-empty per class.
SplitDataset train_val_split(const LabeledDataset& d, double fraction, uint64_t seed);

// Applies the same row split to each aligned view.
struct SplitViews {
    ModalViews train;
    ModalViews val;
};
SplitViews train_val_split(const ModalViews& views, double fraction, uint64_t seed);

struct SynthConfig {
    int n = 2000;
    int classes = 10;
    int height = 8;
    int width = 8;
    std::vector<double> signal_strengths{1.0, 0.3, 0.0};  // one channel per modality
    double noise_sigma = 1.0;
};

struct SynthDataset {
    LabeledDataset data;
    std::vector<ModalitySpec> specs;
};

// Each modality channel carries a class-dependent low-frequency pattern at its
// signal strength plus Gaussian noise; strength 0 is pure noise, so the Bayes
// accuracy of a single-modality classifier is monotone in strength.
SynthDataset synth_multimodal(const SynthConfig& cfg, uint64_t seed);

// Engine-facing conversion: one input tensor per view, shared labels.
Batchset<float> to_batchset(const ModalViews& views);
Batchset<float> to_batchset(const LabeledDataset& d);

}  // namespace xcnn
