#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <memory>

#include "cli_util.hpp"
#include "flab/checkpoint.hpp"
#include "flab/metrics.hpp"
#include "flab/responder.hpp"
#include "flab/tasks.hpp"

namespace flab::cli {

namespace {

struct EvalOpts {
    std::string checkpoint;
    std::string data;   // jsonl (overwrite/drift) or corpus (recon)
    std::string out;    // report json path
    std::string oracle = "model"; // model|verbatim|prior|abstain
    std::string world;  // required by the prior oracle
    int max_answer_len = 8;
    int limit = 0;
};

struct Session {
    std::unique_ptr<Model> model;
    std::unique_ptr<Responder> responder;
    RunManifest man;
    std::string man_path;
};

Session open_session(const EvalOpts& o, const std::string& mode) {
    Session s;
    if (o.oracle == "model") {
        if (o.checkpoint.empty()) throw ConfigError("--checkpoint required with the model oracle");
        s.model = std::make_unique<Model>(load_checkpoint(o.checkpoint).model);
        s.responder = std::make_unique<ModelResponder>(*s.model);
    } else if (o.oracle == "verbatim") {
        s.responder = std::make_unique<VerbatimResponder>();
    } else if (o.oracle == "prior") {
        if (o.world.empty()) throw ConfigError("--world required with the prior oracle");
        s.responder = std::make_unique<PriorOnlyResponder>(FactWorld::load(o.world));
    } else if (o.oracle == "abstain") {
        s.responder = std::make_unique<AbstainResponder>();
    } else {
        throw ConfigError("unknown oracle \"" + o.oracle + "\"");
    }

    s.man.command = "eval " + mode;
    s.man.version = kToolkitVersion;
    s.man.config = {{"checkpoint", o.checkpoint}, {"data", o.data},
                    {"out", o.out},               {"oracle", o.oracle},
                    {"world", o.world},           {"max_answer_len", o.max_answer_len},
                    {"limit", o.limit}};
    s.man.inputs = {o.data};
    if (!o.checkpoint.empty()) s.man.inputs.push_back(o.checkpoint);
    s.man.started_at = iso8601_utc_now();
    if (!o.out.empty()) {
        s.man_path = o.out + ".manifest.json";
        s.man.write(s.man_path);
    }
    return s;
}

void finish(Session& s, const std::string& report_json, const std::string& out) {
    if (!out.empty()) {
        std::ofstream os(out);
        if (!os) throw IoError("cannot write report: " + out);
        os << report_json << "\n";
        s.man.outputs = {out};
    }
    if (!s.man_path.empty()) {
        s.man.status = "complete";
        s.man.finished_at = iso8601_utc_now();
        s.man.write(s.man_path);
    }
}

void run_overwrite(const EvalOpts& o) {
    auto items = read_overwrite_jsonl(o.data);
    if (o.limit > 0 && static_cast<int>(items.size()) > o.limit) items.resize(size_t(o.limit));
    Session s = open_session(o, "overwrite");
    auto rep = eval_overwrite(*s.responder, items, o.data);
    finish(s, rep.to_json(), o.out);
    std::cout << "overwrite accuracy: " << rep.accuracy << " (n=" << rep.n_items << ")\n";
}

void run_drift(const EvalOpts& o) {
    auto items = read_drift_jsonl(o.data);
    if (o.limit > 0 && static_cast<int>(items.size()) > o.limit) items.resize(size_t(o.limit));
    Session s = open_session(o, "drift");
    auto rep = eval_drift(*s.responder, items, o.max_answer_len, o.data);
    finish(s, rep.to_json(), o.out);
    std::cout << "drift accuracy: " << rep.accuracy << " (n=" << rep.n_items << ")\n";
    for (const auto& [dim, acc] : rep.per_dimension)
        std::cout << "  " << dim << ": " << acc << " (n=" << rep.per_dimension_counts.at(dim)
                  << ")\n";
}

void run_recon(const EvalOpts& o) {
    const auto lines = read_lines(o.data);
    Session s = open_session(o, "recon");

    // Reconstruction targets are the trained prefix length; shorter lines are
    // skipped (they cannot satisfy M <= L/2 for the checkpoint's M).
    int target_len = 0;
    if (s.model) target_len = s.model->ccfg.train_prefix_len;
    std::vector<std::string> contexts;
    for (const auto& line : lines) {
        auto words = metrics::split_words(line);
        if (target_len > 0) {
            if (static_cast<int>(words.size()) < target_len) continue;
            words.resize(size_t(target_len));
        }
        std::string ctx;
        for (size_t i = 0; i < words.size(); ++i) {
            if (i) ctx.push_back(' ');
            ctx += words[i];
        }
        contexts.push_back(std::move(ctx));
        if (o.limit > 0 && static_cast<int>(contexts.size()) >= o.limit) break;
    }
    if (contexts.empty()) throw ConfigError("recon: no usable context lines in " + o.data);

    auto rep = eval_reconstruction(*s.responder, contexts);
    finish(s, rep.to_json(), o.out);
    std::cout << "reconstruction mean BLEU: " << rep.mean_bleu
              << ", exact match: " << rep.exact_match << " (n=" << rep.n_items << ")\n";
}

void add_common(CLI::App* sub, std::shared_ptr<EvalOpts> o, bool answer_len) {
    sub->add_option("--checkpoint", o->checkpoint, "FLAB1 checkpoint");
    sub->add_option("--data", o->data, "Input dataset")->required();
    sub->add_option("--out", o->out, "Report JSON path");
    sub->add_option("--oracle", o->oracle, "model|verbatim|prior|abstain");
    sub->add_option("--world", o->world, "world.json (prior oracle)");
    sub->add_option("--limit", o->limit, "Evaluate at most N items");
    if (answer_len)
        sub->add_option("--max-answer-len", o->max_answer_len, "Greedy answer budget in tokens");
}

} // namespace

void register_eval(CLI::App& app) {
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or scripted oracle");
    eval->require_subcommand(1);

    auto ow = std::make_shared<EvalOpts>();
    auto* ow_sub = eval->add_subcommand("overwrite", "Knowledge-overwriting QA accuracy");
    add_common(ow_sub, ow, false);
    ow_sub->callback([ow]() { run_overwrite(*ow); });

    auto dr = std::make_shared<EvalOpts>();
    auto* dr_sub = eval->add_subcommand("drift", "Semantic-drift QA accuracy");
    add_common(dr_sub, dr, true);
    dr_sub->callback([dr]() { run_drift(*dr); });

    auto rc = std::make_shared<EvalOpts>();
    auto* rc_sub = eval->add_subcommand("recon", "Reconstruction BLEU");
    add_common(rc_sub, rc, false);
    rc_sub->callback([rc]() { run_recon(*rc); });
}

} // namespace flab::cli
