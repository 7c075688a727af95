#pragma once

#include "ivl/config.hpp"
#include "ivl/runners.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace ivl {

struct Corpus {
    SceneMap scenes;
    std::vector<BenchRecord> records;

    const Scene& scene_of(const BenchRecord& r) const { return scenes.at(r.scene_id); }
};

Corpus load_corpus(const std::filesystem::path& dir);

// One training step's worth of records, all for a single task.
struct BatchInteraction {
    Bbox box;
    std::size_t segment = 0;  // index into the scene's segments
};

struct Batch {
    std::string task;
    std::vector<std::size_t> records;
    std::vector<BatchInteraction> interactions;  // interactive segmentation only
};

// Task drawn from the mix, records drawn without replacement when possible;
// everything is a pure function of (config, step).
Batch make_batch(const Corpus& corpus, const TrainConfig& cfg, long step);

struct AdamState {
    std::map<std::string, RowMatrix> m, v;
    long t = 0;
};

struct StepReport {
    long step = 0;
    std::string task;
    double lr = 0;
    double total = 0;
    std::vector<std::pair<std::string, double>> terms;

    std::string to_json_line() const;
};

StepReport train_step(const Batch& batch, const Corpus& corpus, const TrainConfig& cfg,
                      long step, ParamStore& params, AdamState& opt);

// Full loop; writes one JSON line per step when a log stream is given.
std::vector<StepReport> train(const Corpus& corpus, const TrainConfig& cfg, ParamStore& params,
                              AdamState& opt, std::ostream* metrics_log = nullptr);

// --- evaluation ---

struct MetricsReport {
    double intg_ciou = 0, intg_miou = 0;
    double intl_ir1 = 0, intl_ir5 = 0, intl_ir10 = 0;
    double text_ir1 = 0, text_tr1 = 0;
    double pq = 0;

    std::string to_json() const;
    std::string to_table() const;
};

MetricsReport evaluate(const Corpus& corpus, const InterfaceConfig& cfg,
                       const ParamStore& params);

// per-entity binarized masks (logit > 0) for one record
std::vector<BoolMat> predict_grounding_masks(const Corpus& corpus, const BenchRecord& record,
                                             const InterfaceConfig& cfg,
                                             const ParamStore& params);

// --- checkpointing ---

void save_checkpoint(const std::filesystem::path& file, const ParamStore& params,
                     const AdamState& opt, const TrainConfig& cfg, long step);

struct Checkpoint {
    ParamStore params;
    AdamState opt;
    long step = 0;
};

// Refuses a config-hash mismatch unless force is set; force still validates
// tensor shapes against the current config and names the offender.
Checkpoint load_checkpoint(const std::filesystem::path& file, const TrainConfig& cfg,
                           bool force = false);

// The training config embedded at save time.
TrainConfig checkpoint_config(const std::filesystem::path& file);

}  // namespace ivl
