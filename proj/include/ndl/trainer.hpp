#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ndl/metrics.hpp"
#include "ndl/model.hpp"

namespace ndl {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    double val_fraction = 0.2;
    int checkpoint_every = 0;           // 0 disables checkpointing
    std::string checkpoint_dir;
    int threads = 1;                    // 0 = hardware concurrency
};

// The six classification metrics of a scored dataset. Undefined entries
// (zero denominators, single-class AUC) carry value 0/NaN with the flag off.
struct EvalMetrics {
    metrics::ConfusionCounts counts;
    double sensitivity = 0.0, precision = 0.0, specificity = 0.0, f1 = 0.0;
    double prauc = 0.0, auc = 0.0;
    bool sensitivity_defined = false, precision_defined = false, specificity_defined = false;
    bool prauc_defined = false, auc_defined = false;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    EvalMetrics val;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;                 // 0 = initial parameters won
    double best_val_loss = 0.0;
    std::vector<int> train_indices;
    std::vector<int> val_indices;
};

struct FitResult {
    NdlParams params;                   // best-validation-loss parameters
    TrainHistory history;
};

// Minimize the NLL over the architecture in `init` with Adam, tracking
// per-epoch train/validation losses and validation metrics. Fully
// reproducible for a fixed (seed, config, dataset order, thread count is
// irrelevant by construction). start_epoch offsets history numbering when
// resuming from a checkpoint.
FitResult fit(const std::vector<LabeledSample>& dataset, const TrainConfig& config, const NdlParams& init,
              int start_epoch = 0);
FitResult fit(const std::vector<LabeledSample>& dataset, const TrainConfig& config, std::uint64_t init_seed,
              const Hyper& hyper);

// Score the dataset and compute all six metrics at the probability
// threshold (probability >= threshold counts positive).
EvalMetrics evaluate(const NdlParams& params, const std::vector<LabeledSample>& dataset, double threshold = 0.5);
EvalMetrics metrics_from_scores(const std::vector<metrics::ScoredLabel>& scored, double threshold);

// Batch prediction (deterministic order).
std::vector<double> predict_all(const NdlParams& params, const std::vector<LabeledSample>& dataset,
                                int threads = 1);

// History CSV: header `epoch,train_loss,val_loss,sens,prec,f1,prauc,auc`.
void write_history_csv(const TrainHistory& h, const std::string& path);

}  // namespace ndl
