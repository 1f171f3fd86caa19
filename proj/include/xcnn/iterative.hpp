// SPDX-License-Identifier: Apache-2.0
//
// Combined learning: successive X-CNN generations with parameter inheritance,
// per-pair finite-difference gradients on connection weights, a Nesterov-Adam
// ascent step with weight decay, and generation averaging.
#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "xcnn/data.hpp"
#include "xcnn/engine.hpp"
#include "xcnn/params_io.hpp"
#include "xcnn/transform.hpp"

namespace xcnn {

using PairKey = std::pair<std::string, std::string>;
using PairMap = std::map<PairKey, double>;

struct IterConfig {
    int generations = 15;
    int epochs_per_gen = 4;
    int pretrain_epochs = 4;
    int averaging_window = 2;
    uint64_t seed = 0;
    double lr_w = 0.05;    // connection-weight ascent rate
    double decay = 0.01;   // per-generation weight decay
    double delta = 0.1;    // probe perturbation of one ordered pair
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    TrainConfig gen_train;  // epochs/seed fields are managed per generation
};

void validate(const IterConfig& cfg);

struct GenerationRecord {
    int index = 0;
    WeightMatrix weights;
    double val_accuracy = 0.0;
    PairMap pair_accuracies;           // variant accuracy per perturbed pair
    std::set<PairKey> clamped;         // pairs skipped at the w = 1 boundary
    std::set<PairKey> diverged;        // variants that failed to train
    std::string params_ref;            // container file within the run directory
};

struct WeightOptState {
    PairMap m, v;
    int64_t t = 0;
};

// Trains the connection-free X-CNN to lock parameter positions; epochs == 0
// returns the seeded initialization unchanged.
Snapshot pretrain_lock(const XBlueprint& x, const Batchset<float>& train_data, int epochs,
                       const TrainConfig& tc, uint64_t model_seed);

// Fresh position-stable init for x_new with tensors copied from prev wherever
// node id and shapes match.
Snapshot inherit_params(const Snapshot& prev, const XBlueprint& x_new, uint64_t model_seed);

struct PairGradients {
    PairMap gradients;
    PairMap pair_accuracies;
    std::set<PairKey> clamped;
    std::set<PairKey> diverged;
};

// Forward finite differences: one variant model per ordered pair with
// w[i,j] += delta (clamped), inherited from the base generation, trained for
// epochs_per_gen and evaluated on the fixed validation split.
struct GenerationContext;  // internal rebuild hooks
PairGradients measure_pair_gradients(const GenerationContext& ctx,
                                     const GenerationRecord& base, const Snapshot& base_params,
                                     int generation);

// Nesterov-momentum Adam ascent on each ordered pair, then multiplicative
// decay, then clamping to [0, 1].
WeightMatrix weight_update(WeightOptState& st, const PairMap& grads, const WeightMatrix& w,
                           const IterConfig& cfg);

// Element-wise mean over the window for matching nodes; the first snapshot is
// the base and its entries are carried through where others do not match.
Snapshot average_snapshots(const std::vector<const Snapshot*>& window);

struct IterateResult {
    std::vector<GenerationRecord> trajectory;
    int best_index = 0;
    XBlueprint best_topology;
    Snapshot best_params;
    bool resumed = false;
};

// Runs the full loop, persisting one trajectory record and one parameter
// container per generation under run_dir. With resume == true, a partial run
// directory is continued from its last complete generation and the combined
// trajectory is identical to an uninterrupted run.
IterateResult iterate(const Blueprint& b, const ModalViews& modal_data,
                      const TransformConfig& tcfg, const IterConfig& icfg,
                      const std::filesystem::path& run_dir, bool resume = false);

}  // namespace xcnn
