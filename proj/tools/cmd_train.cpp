#include <CLI11.hpp>
#include <iostream>
#include <cmath>
#include <omp.h>

#include "cli_util.hpp"
#include "flab/metrics.hpp"
#include "flab/responder.hpp"
#include "flab/tasks.hpp"
#include "flab/training.hpp"

namespace flab::cli {

namespace {

struct TrainOpts {
    std::string corpus, vocab, out;
    std::string comp_size = "tiny", dec_size = "tiny";
    int rate = 0;         // L/M; 0 = use memory_slots directly
    int memory_slots = 0; // 0 = derive from rate
    int seq_len = 85;
    int prefix_len = 0; // 0 = ceil(0.75 * seq_len)
    int max_positions = 0; // 0 = auto
    bool freeze_decoder = false;
    bool no_projector = false;
    int steps = 2000;
    int batch_size = 8;
    double lr = 3e-3;
    int warmup = 100;
    double clip = 1.0;
    int checkpoint_interval = 500;
    int probe_interval = 250;
    int probe_set = 32;
    std::string probe_overwrite, probe_drift;
    int max_answer_len = 8;
    uint64_t seed = 7;
    int threads = 0;
};

std::vector<CompressionSample> load_corpus(const std::string& path, const Vocabulary& vocab,
                                           int seq_len, int prefix_len) {
    const auto lines = read_lines(path);
    std::vector<CompressionSample> samples;
    long lineno = 0;
    int skipped = 0;
    for (const auto& line : lines) {
        ++lineno;
        const auto words = metrics::split_words(line);
        if (static_cast<int>(words.size()) < seq_len) {
            ++skipped;
            continue;
        }
        CompressionSample s;
        s.x.reserve(static_cast<size_t>(seq_len));
        try {
            for (int i = 0; i < seq_len; ++i) s.x.push_back(vocab.id_of(words[size_t(i)]));
        } catch (const InvalidToken& e) {
            throw SchemaError(std::string("corpus: ") + e.what(), lineno);
        }
        s.split_k = prefix_len;
        samples.push_back(std::move(s));
    }
    if (samples.empty())
        throw ConfigError("corpus: no line reaches seq_len = " + std::to_string(seq_len) +
                          " tokens (" + std::to_string(skipped) + " skipped)");
    return samples;
}

void run(const TrainOpts& o) {
    if (o.steps < 1) throw ConfigError("--steps must be >= 1");
    const int prefix_len =
        o.prefix_len > 0 ? o.prefix_len
                         : static_cast<int>(std::ceil(0.75 * static_cast<double>(o.seq_len)));
    if (prefix_len < 2 || o.seq_len < prefix_len)
        throw ConfigError("need 2 <= prefix-len <= seq-len");
    if (o.threads > 0) omp_set_num_threads(o.threads);

    int M = o.memory_slots;
    if (M == 0) {
        if (o.rate < 1) throw ConfigError("give --rate or --memory-slots");
        if (prefix_len % o.rate != 0)
            throw ConfigError("--rate " + std::to_string(o.rate) + " does not divide prefix-len " +
                              std::to_string(prefix_len));
        M = prefix_len / o.rate;
    }
    if (M > prefix_len / 2) throw ConfigError("memory slots M must satisfy M <= prefix-len/2");

    require_out_dir(o.out);
    Vocabulary vocab = Vocabulary::load(o.vocab);
    auto samples = load_corpus(o.corpus, vocab, o.seq_len, prefix_len);

    ModelConfig comp = size_preset(o.comp_size, Role::compressor);
    ModelConfig dec = size_preset(o.dec_size, Role::decoder);
    comp.vocab_size = vocab.size();
    dec.vocab_size = vocab.size();
    // Headroom beyond the training shapes so evaluation can compress longer
    // contexts and append QA prompts.
    const int auto_pos = std::max(prefix_len + M, M + 1 + o.seq_len) + 128;
    comp.max_positions = o.max_positions > 0 ? o.max_positions : auto_pos;
    dec.max_positions = comp.max_positions;

    CompressionConfig ccfg;
    ccfg.memory_slots = M;
    ccfg.train_prefix_len = prefix_len;
    ccfg.use_projector = !o.no_projector || comp.d_model != dec.d_model;

    TrainConfig tc;
    tc.steps = o.steps;
    tc.batch_size = o.batch_size;
    tc.lr.peak = o.lr;
    tc.lr.warmup_steps = o.warmup;
    tc.clip_norm = o.clip;
    tc.checkpoint_interval = o.checkpoint_interval;
    tc.probe_interval = o.probe_interval;
    tc.probe_set_size = o.probe_set;
    tc.seed = o.seed;
    tc.freeze_decoder = o.freeze_decoder;

    RunManifest man;
    man.command = "train";
    man.version = kToolkitVersion;
    man.seed = o.seed;
    man.config = {{"corpus", o.corpus},
                  {"vocab", o.vocab},
                  {"out", o.out},
                  {"compressor_size", o.comp_size},
                  {"decoder_size", o.dec_size},
                  {"rate", o.rate},
                  {"memory_slots", M},
                  {"seq_len", o.seq_len},
                  {"prefix_len", prefix_len},
                  {"max_positions", comp.max_positions},
                  {"freeze_decoder", o.freeze_decoder},
                  {"no_projector", o.no_projector},
                  {"steps", o.steps},
                  {"batch_size", o.batch_size},
                  {"lr", o.lr},
                  {"warmup", o.warmup},
                  {"clip", o.clip},
                  {"checkpoint_interval", o.checkpoint_interval},
                  {"probe_interval", o.probe_interval},
                  {"probe_set", o.probe_set},
                  {"probe_overwrite", o.probe_overwrite},
                  {"probe_drift", o.probe_drift},
                  {"max_answer_len", o.max_answer_len},
                  {"seed", o.seed},
                  {"threads", o.threads}};
    man.inputs = {o.corpus, o.vocab};
    man.started_at = iso8601_utc_now();
    const std::string man_path = o.out + "/manifest.json";
    man.write(man_path);

    try {
        Model model = Model::init(comp, dec, ccfg, vocab, o.seed);
        std::cout << "training: " << samples.size() << " samples, M = " << M
                  << " (rate " << static_cast<double>(prefix_len) / M << "x), "
                  << model.params.scalar_count() << " parameters\n";

        RunHooks hooks;
        std::vector<OverwriteItem> ow_items;
        std::vector<DriftItem> dr_items;
        if (!o.probe_overwrite.empty()) {
            ow_items = read_overwrite_jsonl(o.probe_overwrite);
            hooks.qa_overwrite = [&ow_items](const Model& m) {
                ModelResponder r(m);
                return eval_overwrite(r, ow_items).accuracy;
            };
        }
        if (!o.probe_drift.empty()) {
            dr_items = read_drift_jsonl(o.probe_drift);
            hooks.qa_drift = [&dr_items, &o](const Model& m) {
                ModelResponder r(m);
                return eval_drift(r, dr_items, o.max_answer_len).accuracy;
            };
        }
        long last_print = 0;
        hooks.on_step = [&](long step, const LossBreakdown& lb) {
            if (step - last_print >= 200 || step == 1 || step == o.steps) {
                last_print = step;
                std::cout << "step " << step << "  loss " << lb.total << " (re " << lb.loss_re
                          << " nt " << lb.loss_nt << ")\n"
                          << std::flush;
            }
        };

        auto result = run_training(model, samples, tc, o.out, hooks);

        man.outputs = {o.out + "/metrics.csv", o.out + "/train_loss.csv"};
        for (auto& [step, path] : result.checkpoints) man.outputs.push_back(path);
        man.status = "complete";
        man.finished_at = iso8601_utc_now();
        man.write(man_path);
        std::cout << "done: " << result.checkpoints.size() << " checkpoints, "
                  << result.records.size() << " dynamics records\n";
    } catch (const TrainStepError& e) {
        man.status = "failed";
        man.error = e.what();
        man.failed_step = e.step();
        man.finished_at = iso8601_utc_now();
        man.write(man_path);
        throw;
    } catch (...) {
        man.status = "failed";
        man.finished_at = iso8601_utc_now();
        man.write(man_path);
        throw;
    }
}

} // namespace

void register_train(CLI::App& app, int argc, char** argv) {
    auto o = std::make_shared<TrainOpts>();
    const nlohmann::json defs = manifest_defaults(argc, argv);
    o->seed = default_seed();
    apply_default(defs, "corpus", o->corpus);
    apply_default(defs, "vocab", o->vocab);
    apply_default(defs, "out", o->out);
    apply_default(defs, "compressor_size", o->comp_size);
    apply_default(defs, "decoder_size", o->dec_size);
    apply_default(defs, "rate", o->rate);
    apply_default(defs, "memory_slots", o->memory_slots);
    apply_default(defs, "seq_len", o->seq_len);
    apply_default(defs, "prefix_len", o->prefix_len);
    apply_default(defs, "max_positions", o->max_positions);
    apply_default(defs, "freeze_decoder", o->freeze_decoder);
    apply_default(defs, "no_projector", o->no_projector);
    apply_default(defs, "steps", o->steps);
    apply_default(defs, "batch_size", o->batch_size);
    apply_default(defs, "lr", o->lr);
    apply_default(defs, "warmup", o->warmup);
    apply_default(defs, "clip", o->clip);
    apply_default(defs, "checkpoint_interval", o->checkpoint_interval);
    apply_default(defs, "probe_interval", o->probe_interval);
    apply_default(defs, "probe_set", o->probe_set);
    apply_default(defs, "probe_overwrite", o->probe_overwrite);
    apply_default(defs, "probe_drift", o->probe_drift);
    apply_default(defs, "max_answer_len", o->max_answer_len);
    apply_default(defs, "seed", o->seed);
    apply_default(defs, "threads", o->threads);

    auto* sub = app.add_subcommand("train", "Train a compressor-decoder pair");
    auto manifest_path = std::make_shared<std::string>();
    sub->add_option("--from-manifest", *manifest_path, "Reuse a previous run's configuration")
        ->each([manifest_path](const std::string&) {});
    sub->add_option("--corpus", o->corpus, "Compression corpus (one paragraph per line)")
        ->required(!defs.contains("corpus"));
    sub->add_option("--vocab", o->vocab, "Vocabulary file")->required(!defs.contains("vocab"));
    sub->add_option("--out", o->out, "Run output directory")->required(!defs.contains("out"));
    sub->add_option("--compressor-size", o->comp_size, "micro|tiny|small");
    sub->add_option("--decoder-size", o->dec_size, "micro|tiny|small");
    sub->add_option("--rate", o->rate, "Compression rate L/M (e.g. 4, 16, 64)");
    sub->add_option("--memory-slots", o->memory_slots, "Memory slots M (overrides --rate)");
    sub->add_option("--seq-len", o->seq_len, "Tokens per training sample");
    sub->add_option("--prefix-len", o->prefix_len, "Reconstruction prefix length k");
    sub->add_option("--max-positions", o->max_positions, "Context size (0 = auto)");
    sub->add_flag("--freeze-decoder", o->freeze_decoder, "Train the compressor only");
    sub->add_flag("--no-projector", o->no_projector,
                  "Drop the projector when compressor/decoder dims match");
    sub->add_option("--steps", o->steps, "Optimizer steps");
    sub->add_option("--batch-size", o->batch_size, "Samples per step");
    sub->add_option("--lr", o->lr, "Peak learning rate");
    sub->add_option("--warmup", o->warmup, "Warmup steps");
    sub->add_option("--clip", o->clip, "Gradient clip norm (0 disables)");
    sub->add_option("--checkpoint-interval", o->checkpoint_interval, "Steps between checkpoints");
    sub->add_option("--probe-interval", o->probe_interval, "Steps between dynamics probes");
    sub->add_option("--probe-set", o->probe_set, "Probe set size (held out from training)");
    sub->add_option("--probe-overwrite", o->probe_overwrite,
                    "Overwrite JSONL evaluated at every probe");
    sub->add_option("--probe-drift", o->probe_drift, "Drift JSONL evaluated at every probe");
    sub->add_option("--max-answer-len", o->max_answer_len, "Answer length for drift probes");
    sub->add_option("--seed", o->seed, "Training seed");
    sub->add_option("--threads", o->threads, "OpenMP threads (0 = runtime default)");
    sub->callback([o]() { run(*o); });
}

} // namespace flab::cli
