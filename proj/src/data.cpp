// SPDX-License-Identifier: Apache-2.0

#include "xcnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace xcnn {

namespace {

constexpr int kCifarDim = 32;
constexpr int kCifarChannels = 3;
constexpr int kCifarClasses = 10;
constexpr size_t kRecordBytes = 1 + kCifarDim * kCifarDim * kCifarChannels;

void append_records(const std::filesystem::path& file, std::vector<unsigned char>& raw) {
    std::ifstream in(file, std::ios::binary | std::ios::ate);
    if (!in) throw data_error("cannot open dataset file \"" + file.string() + "\"");
    const std::streamsize size = in.tellg();
    if (size % static_cast<std::streamsize>(kRecordBytes) != 0)
        throw data_error("\"" + file.string() + "\": size " + std::to_string(size) +
                         " is not a multiple of the " + std::to_string(kRecordBytes) +
                         "-byte record");
    in.seekg(0);
    const size_t offset = raw.size();
    raw.resize(offset + static_cast<size_t>(size));
    if (!in.read(reinterpret_cast<char*>(raw.data() + offset), size))
        throw data_error("read failed for \"" + file.string() + "\"");
}

LabeledDataset from_index_subset(const LabeledDataset& d, const std::vector<int>& idx) {
    LabeledDataset out;
    out.images = gather_rows(d.images, idx);
    auto labels = std::make_shared<std::vector<int>>();
    labels->reserve(idx.size());
    for (int i : idx) labels->push_back((*d.labels)[i]);
    out.labels = std::move(labels);
    out.class_count = d.class_count;
    return out;
}

std::vector<std::vector<int>> indices_by_class(const LabeledDataset& d) {
    std::vector<std::vector<int>> by_class(d.class_count);
    for (int i = 0; i < d.size(); ++i) by_class[(*d.labels)[i]].push_back(i);
    return by_class;
}

}  // namespace

LabeledDataset load_cifar10(const std::filesystem::path& path) {
    std::vector<unsigned char> raw;
    if (std::filesystem::is_directory(path)) {
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(path))
            if (entry.path().extension() == ".bin") files.push_back(entry.path());
        if (files.empty())
            throw data_error("no .bin dataset files in \"" + path.string() + "\"");
        std::sort(files.begin(), files.end());
        for (const auto& f : files) append_records(f, raw);
    } else {
        append_records(path, raw);
    }

    const int n = static_cast<int>(raw.size() / kRecordBytes);
    LabeledDataset out;
    out.class_count = kCifarClasses;
    out.images = Tensor<float>({n, kCifarDim, kCifarDim, kCifarChannels});
    auto labels = std::make_shared<std::vector<int>>(n);
    for (int i = 0; i < n; ++i) {
        const unsigned char* rec = raw.data() + static_cast<size_t>(i) * kRecordBytes;
        const int label = rec[0];
        if (label >= kCifarClasses)
            throw data_error("record " + std::to_string(i) + ": label " +
                             std::to_string(label) + " out of range");
        (*labels)[i] = label;
        // channel-planar -> NHWC, scaled to [0, 1]
        for (int c = 0; c < kCifarChannels; ++c)
            for (int h = 0; h < kCifarDim; ++h)
                for (int w = 0; w < kCifarDim; ++w)
                    out.images.at4(i, h, w, c) =
                        rec[1 + (c * kCifarDim + h) * kCifarDim + w] / 255.0f;
    }
    out.labels = std::move(labels);
    return out;
}

LabeledDataset rgb_to_yuv(const LabeledDataset& d) {
    if (d.channels() != 3)
        throw data_error("rgb_to_yuv: expected 3 channels, got " +
                         std::to_string(d.channels()));
    LabeledDataset out;
    out.images = Tensor<float>(d.images.shape);
    out.labels = d.labels;
    out.class_count = d.class_count;
    for (int i = 0; i < d.size(); ++i)
        for (int h = 0; h < d.height(); ++h)
            for (int w = 0; w < d.width(); ++w) {
                const float r = d.images.at4(i, h, w, 0);
                const float g = d.images.at4(i, h, w, 1);
                const float b = d.images.at4(i, h, w, 2);
                const float y = 0.299f * r + 0.587f * g + 0.114f * b;
                // clamp: rounding can land a hair outside [0, 1] at the extremes
                out.images.at4(i, h, w, 0) = std::clamp(y, 0.0f, 1.0f);
                out.images.at4(i, h, w, 1) = std::clamp((b - y) / 1.772f + 0.5f, 0.0f, 1.0f);
                out.images.at4(i, h, w, 2) = std::clamp((r - y) / 1.402f + 0.5f, 0.0f, 1.0f);
            }
    return out;
}

std::vector<ModalitySpec> yuv_modalities() {
    return {{"Y", {0}}, {"U", {1}}, {"V", {2}}};
}

ModalViews split_modalities(const LabeledDataset& d, const std::vector<ModalitySpec>& specs) {
    if (specs.empty()) throw config_error("split_modalities: no modality specs");
    std::set<int> used;
    for (const ModalitySpec& s : specs) {
        if (s.channel_indices.empty())
            throw config_error("modality \"" + s.name + "\": empty channel list");
        for (int c : s.channel_indices) {
            if (c < 0 || c >= d.channels())
                throw config_error("modality \"" + s.name + "\": channel " +
                                   std::to_string(c) + " out of range");
            if (!used.insert(c).second)
                throw config_error("modality \"" + s.name + "\": channel " +
                                   std::to_string(c) + " already claimed");
        }
    }
    ModalViews views;
    for (const ModalitySpec& s : specs) {
        LabeledDataset v;
        v.images = Tensor<float>(
            {d.size(), d.height(), d.width(), static_cast<int>(s.channel_indices.size())});
        v.labels = d.labels;
        v.class_count = d.class_count;
        for (int i = 0; i < d.size(); ++i)
            for (int h = 0; h < d.height(); ++h)
                for (int w = 0; w < d.width(); ++w)
                    for (size_t k = 0; k < s.channel_indices.size(); ++k)
                        v.images.at4(i, h, w, static_cast<int>(k)) =
                            d.images.at4(i, h, w, s.channel_indices[k]);
        views.emplace_back(s.name, std::move(v));
    }
    return views;
}

LabeledDataset subsample_per_class(const LabeledDataset& d, double p, uint64_t seed) {
    if (p <= 0.0 || p > 100.0)
        throw config_error("subsample_per_class: p must be in (0, 100]");
    std::vector<int> keep;
    auto by_class = indices_by_class(d);
    for (size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        const int want = static_cast<int>(
            std::ceil(p / 100.0 * static_cast<double>(idx.size())));
        Rng rng(mix_seed(seed, "subsample", c));
        rng.shuffle(idx);
        idx.resize(std::min<size_t>(idx.size(), want));
        keep.insert(keep.end(), idx.begin(), idx.end());
    }
    std::sort(keep.begin(), keep.end());  // order-stable
    return from_index_subset(d, keep);
}

SplitDataset train_val_split(const LabeledDataset& d, double fraction, uint64_t seed) {
    if (fraction <= 0.0 || fraction >= 1.0)
        throw config_error("train_val_split: fraction must be in (0, 1)");
    std::vector<int> train_idx, val_idx;
    auto by_class = indices_by_class(d);
    for (size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        if (idx.size() < 2)
            throw data_error("train_val_split: class " + std::to_string(c) + " has " +
                             std::to_string(idx.size()) + " example(s), need >= 2");
        Rng rng(mix_seed(seed, "split", c));
        rng.shuffle(idx);
        int n_train = round_half_away(fraction * static_cast<double>(idx.size()));
        n_train = std::clamp<int>(n_train, 1, static_cast<int>(idx.size()) - 1);
        train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + n_train);
        val_idx.insert(val_idx.end(), idx.begin() + n_train, idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    return {from_index_subset(d, train_idx), from_index_subset(d, val_idx)};
}

SplitViews train_val_split(const ModalViews& views, double fraction, uint64_t seed) {
    if (views.empty()) throw config_error("train_val_split: no views");
    // One index split shared across all aligned views.
    const LabeledDataset& ref = views.front().second;
    std::vector<int> train_idx, val_idx;
    {
        auto by_class = indices_by_class(ref);
        for (size_t c = 0; c < by_class.size(); ++c) {
            auto& idx = by_class[c];
            if (idx.size() < 2)
                throw data_error("train_val_split: class " + std::to_string(c) + " has " +
                                 std::to_string(idx.size()) + " example(s), need >= 2");
            Rng rng(mix_seed(seed, "split", c));
            rng.shuffle(idx);
            int n_train = round_half_away(fraction * static_cast<double>(idx.size()));
            n_train = std::clamp<int>(n_train, 1, static_cast<int>(idx.size()) - 1);
            train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + n_train);
            val_idx.insert(val_idx.end(), idx.begin() + n_train, idx.end());
        }
        std::sort(train_idx.begin(), train_idx.end());
        std::sort(val_idx.begin(), val_idx.end());
    }
    SplitViews out;
    for (const auto& [name, view] : views) {
        if (view.size() != ref.size() || *view.labels != *ref.labels)
            throw data_error("train_val_split: views are not aligned");
        out.train.emplace_back(name, from_index_subset(view, train_idx));
        out.val.emplace_back(name, from_index_subset(view, val_idx));
    }
    return out;
}

SynthDataset synth_multimodal(const SynthConfig& cfg, uint64_t seed) {
    if (cfg.n < 1 || cfg.classes < 2) throw config_error("synth: need n >= 1, classes >= 2");
    for (double s : cfg.signal_strengths)
        if (s < 0.0 || s > 1.0) throw config_error("synth: strengths must be in [0, 1]");
    const int modalities = static_cast<int>(cfg.signal_strengths.size());
    if (modalities < 1) throw config_error("synth: need at least one modality");

    // Class patterns: +-1 at half resolution, nearest-upsampled, unit RMS.
    const int ph = std::max(1, cfg.height / 2), pw = std::max(1, cfg.width / 2);
    std::vector<std::vector<float>> patterns(
        static_cast<size_t>(cfg.classes) * modalities,
        std::vector<float>(static_cast<size_t>(cfg.height) * cfg.width));
    for (int k = 0; k < cfg.classes; ++k)
        for (int m = 0; m < modalities; ++m) {
            Rng rng(mix_seed(seed, "pattern", static_cast<uint64_t>(k) * 1000 + m));
            std::vector<float> coarse(static_cast<size_t>(ph) * pw);
            for (float& v : coarse) v = rng.uniform() < 0.5 ? -1.0f : 1.0f;
            auto& pat = patterns[static_cast<size_t>(k) * modalities + m];
            for (int h = 0; h < cfg.height; ++h)
                for (int w = 0; w < cfg.width; ++w)
                    pat[static_cast<size_t>(h) * cfg.width + w] =
                        coarse[static_cast<size_t>(std::min(h / 2, ph - 1)) * pw +
                               std::min(w / 2, pw - 1)];
        }

    SynthDataset out;
    out.data.class_count = cfg.classes;
    out.data.images = Tensor<float>({cfg.n, cfg.height, cfg.width, modalities});
    auto labels = std::make_shared<std::vector<int>>(cfg.n);
    Rng label_rng(mix_seed(seed, "labels"));
    Rng noise_rng(mix_seed(seed, "noise"));
    for (int i = 0; i < cfg.n; ++i) {
        const int k = static_cast<int>(label_rng.below(cfg.classes));
        (*labels)[i] = k;
        for (int h = 0; h < cfg.height; ++h)
            for (int w = 0; w < cfg.width; ++w)
                for (int m = 0; m < modalities; ++m) {
                    const float signal =
                        static_cast<float>(cfg.signal_strengths[m]) *
                        patterns[static_cast<size_t>(k) * modalities + m]
                                [static_cast<size_t>(h) * cfg.width + w];
                    out.data.images.at4(i, h, w, m) =
                        signal + static_cast<float>(cfg.noise_sigma * noise_rng.normal());
                }
    }
    out.data.labels = std::move(labels);
    for (int m = 0; m < modalities; ++m)
        out.specs.push_back({"m" + std::to_string(m), {m}});
    return out;
}

Batchset<float> to_batchset(const ModalViews& views) {
    Batchset<float> b;
    for (const auto& [name, view] : views) b.inputs.push_back(view.images);
    b.labels = *views.front().second.labels;
    return b;
}

Batchset<float> to_batchset(const LabeledDataset& d) {
    Batchset<float> b;
    b.inputs.push_back(d.images);
    b.labels = *d.labels;
    return b;
}

}  // namespace xcnn
