#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flab/model.hpp"

namespace flab {

// One training item: token sequence x plus the split index k. x[0:k] is the
// compressed/reconstructed prefix, x[k:n] the continuation.
struct CompressionSample {
    TokenSeq x;
    int split_k = 0;

    int length() const { return static_cast<int>(x.size()); }
};

struct LossBreakdown {
    double loss_re = 0.0; // reconstruction term, nats
    double loss_nt = 0.0; // continuation term, nats
    double total = 0.0;   // loss_re + loss_nt exactly
};

struct LrSchedule {
    int warmup_steps = 100;
    double peak = 1e-3;
    double final_lr = 0.0; // cosine decays to this
};

struct TrainConfig {
    int steps = 1000;
    int batch_size = 8;
    LrSchedule lr;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;
    int checkpoint_interval = 500;
    int probe_interval = 250;
    int probe_set_size = 32;
    uint64_t seed = 0;
    bool freeze_decoder = false;

    void validate() const;
};

struct DynamicsRecord {
    long step = 0;
    double loss_re = 0.0, loss_nt = 0.0, loss_total = 0.0; // probe-set means
    double erank = 0.0;
    double entropy = 0.0;
    std::optional<double> qa_overwrite;
    std::optional<double> qa_drift;
};

struct AdamState {
    std::vector<MatF> m, v;
    long t = 0;

    static AdamState init(const ParameterSet<float>& ps);
};

// Step-scoped failure; non_finite marks a NonFiniteGradient abort.
class TrainStepError : public Error {
  public:
    TrainStepError(long step, const std::string& msg, bool non_finite)
        : Error("step " + std::to_string(step) + ": " + msg),
          step_(step),
          non_finite_(non_finite) {}
    long step() const { return step_; }
    bool non_finite() const { return non_finite_; }

  private:
    long step_;
    bool non_finite_;
};

void validate_sample(const CompressionSample& s, const Model& m);

// Sum of per-token negative log-probabilities over the prefix (loss_re) and
// continuation (loss_nt), with Z compressed from the prefix only.
template <class T>
LossBreakdown total_loss(const CompressionSample& s, const CompressorDecoder<T>& m);

// Same forward, additionally accumulating d(total)/d(params) into g.
template <class T>
LossBreakdown total_loss_with_grads(const CompressionSample& s, const CompressorDecoder<T>& m,
                                    GradSet<T>& g);

double lr_at(const TrainConfig& cfg, long step); // step is 1-based

// One optimizer step on the mean batch loss; returns the pre-update loss.
// Per-sample gradients are reduced in sample order, so the OpenMP path and
// the serial reference produce bitwise-identical updates.
LossBreakdown train_step(const std::vector<CompressionSample>& batch, Model& model,
                         AdamState& adam, const TrainConfig& cfg, long step);
LossBreakdown train_step_serial(const std::vector<CompressionSample>& batch, Model& model,
                                AdamState& adam, const TrainConfig& cfg, long step);

struct RunHooks {
    std::function<double(const Model&)> qa_overwrite; // optional probe hooks
    std::function<double(const Model&)> qa_drift;
    std::function<void(long, const LossBreakdown&)> on_step;
};

struct TrainingResult {
    std::vector<DynamicsRecord> records;
    std::vector<LossBreakdown> step_losses; // one per step
    std::vector<std::pair<long, std::string>> checkpoints;
    std::vector<int> probe_indices; // corpus indices used as the probe set
};

// Fixed-seed training over the corpus: checkpoints every
// checkpoint_interval steps (final step always), a DynamicsRecord every
// probe_interval steps against a probe set frozen at run start. When
// out_dir is non-empty, writes ckpt_{step:08d} files plus metrics.csv and
// train_loss.csv.
TrainingResult run_training(Model& model, const std::vector<CompressionSample>& corpus,
                            const TrainConfig& cfg, const std::string& out_dir,
                            const RunHooks& hooks = {});

// Probe measurements against a fixed probe set (exposed for reuse by the
// dynamics probes over checkpoint series).
LossBreakdown mean_probe_loss(const Model& m, const std::vector<CompressionSample>& probe);
double probe_effective_rank(const Model& m, const std::vector<CompressionSample>& probe);
double probe_mean_entropy(const Model& m, const std::vector<CompressionSample>& probe);

// metrics.csv column layout: step,loss_re,loss_nt,loss_total,erank,entropy,
// qa_overwrite,qa_drift — missing probes become empty fields.
std::string metrics_csv_header();
std::string metrics_csv_row(const DynamicsRecord& r);
std::vector<DynamicsRecord> read_metrics_csv(const std::string& path);

} // namespace flab
