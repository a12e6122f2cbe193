#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "cli_util.hpp"
#include "flab/factworld.hpp"
#include "flab/tasks.hpp"
#include "flab/vocab.hpp"

namespace flab::cli {

namespace {

struct GenDataOpts {
    std::string out;
    uint64_t seed = 7;
    bool seed_given = false;
    WorldGenConfig world;
    CounterfactualConfig cf;
    DriftGenConfig drift;
};

void run(const GenDataOpts& o) {
    require_out_dir(o.out);

    RunManifest man;
    man.command = "gen-data";
    man.version = kToolkitVersion;
    man.seed = o.seed;
    man.config = {{"seed", o.seed},
                  {"entities", o.world.n_entities},
                  {"attributes", o.world.n_attributes},
                  {"relations", o.world.n_relations},
                  {"repetitions", o.world.repetitions},
                  {"paragraphs", o.world.n_paragraphs},
                  {"min_paragraph_tokens", o.world.min_paragraph_tokens},
                  {"cf_fraction", o.cf.fraction},
                  {"cf_priors", o.cf.priors},
                  {"cf_fillers", o.cf.filler_facts},
                  {"cf_min_tokens", o.cf.min_context_tokens},
                  {"drift_per_dimension", o.drift.per_dimension_count},
                  {"drift_unanswerable_frac", o.drift.unanswerable_fraction},
                  {"out", o.out}};
    man.started_at = iso8601_utc_now();
    const std::string man_path = o.out + "/manifest.json";
    man.write(man_path);

    try {
        WorldGenConfig wc = o.world;
        wc.seed = o.seed;
        auto gen = build_fact_world(wc);

        gen.world.save(o.out + "/world.json");
        Vocabulary vocab = Vocabulary::from_words(world_vocabulary_words(gen.world));
        vocab.save(o.out + "/vocab.txt");

        auto write_lines = [](const std::string& path, const std::vector<std::string>& lines) {
            std::ofstream os(path);
            if (!os) throw IoError("cannot write: " + path);
            for (const auto& l : lines) os << l << "\n";
        };
        write_lines(o.out + "/pretrain.txt", gen.corpus.pretrain_lines);
        write_lines(o.out + "/corpus.txt", gen.corpus.paragraphs);

        auto ow = make_counterfactual_items(gen.world, o.cf);
        write_overwrite_jsonl(o.out + "/overwrite.jsonl", ow);
        auto dr = make_drift_items(gen.world, gen.corpus.paragraphs, o.drift);
        write_drift_jsonl(o.out + "/drift.jsonl", dr);

        man.outputs = {o.out + "/world.json",     o.out + "/vocab.txt",
                       o.out + "/pretrain.txt",   o.out + "/corpus.txt",
                       o.out + "/overwrite.jsonl", o.out + "/drift.jsonl"};
        man.status = "complete";
        man.finished_at = iso8601_utc_now();
        man.write(man_path);

        std::cout << "world: " << gen.world.entities.size() << " entities, "
                  << gen.world.attribute_names.size() << " attributes, "
                  << gen.world.relations.size() << " relations\n"
                  << "pretrain lines: " << gen.corpus.pretrain_lines.size()
                  << ", paragraphs: " << gen.corpus.paragraphs.size() << "\n"
                  << "overwrite items: " << ow.size() << ", drift items: " << dr.size() << "\n";
    } catch (...) {
        man.status = "failed";
        man.finished_at = iso8601_utc_now();
        man.write(man_path);
        throw;
    }
}

} // namespace

void register_gen_data(CLI::App& app, int argc, char** argv) {
    auto opts = std::make_shared<GenDataOpts>();
    const nlohmann::json defs = manifest_defaults(argc, argv);
    opts->seed = default_seed();
    apply_default(defs, "seed", opts->seed);
    apply_default(defs, "entities", opts->world.n_entities);
    apply_default(defs, "attributes", opts->world.n_attributes);
    apply_default(defs, "relations", opts->world.n_relations);
    apply_default(defs, "repetitions", opts->world.repetitions);
    apply_default(defs, "paragraphs", opts->world.n_paragraphs);
    apply_default(defs, "min_paragraph_tokens", opts->world.min_paragraph_tokens);
    apply_default(defs, "cf_fraction", opts->cf.fraction);
    apply_default(defs, "cf_priors", opts->cf.priors);
    apply_default(defs, "cf_fillers", opts->cf.filler_facts);
    apply_default(defs, "cf_min_tokens", opts->cf.min_context_tokens);
    apply_default(defs, "drift_per_dimension", opts->drift.per_dimension_count);
    apply_default(defs, "drift_unanswerable_frac", opts->drift.unanswerable_fraction);
    apply_default(defs, "out", opts->out);

    auto* sub = app.add_subcommand("gen-data",
                                   "Generate a fact world, corpora and QA datasets");
    auto manifest_path = std::make_shared<std::string>();
    sub->add_option("--from-manifest", *manifest_path, "Reuse a previous run's configuration")
        ->each([manifest_path](const std::string&) {});
    sub->add_option("--out", opts->out, "Output directory")->required(!defs.contains("out"));
    sub->add_option("--seed", opts->seed, "World seed");
    sub->add_option("--entities", opts->world.n_entities, "Number of entities");
    sub->add_option("--attributes", opts->world.n_attributes, "Number of attributes");
    sub->add_option("--relations", opts->world.n_relations, "Number of relation triples");
    sub->add_option("--repetitions", opts->world.repetitions,
                    "Times each fact is stated in the pretraining corpus");
    sub->add_option("--paragraphs", opts->world.n_paragraphs, "Compression paragraphs");
    sub->add_option("--min-paragraph-tokens", opts->world.min_paragraph_tokens,
                    "Minimum paragraph length in tokens");
    sub->add_option("--cf-fraction", opts->cf.fraction, "Fraction of facts to counterfactualize");
    sub->add_option("--cf-priors", opts->cf.priors, "Prior answers per overwrite item");
    sub->add_option("--cf-fillers", opts->cf.filler_facts, "Filler facts per overwrite context");
    sub->add_option("--cf-min-tokens", opts->cf.min_context_tokens,
                    "Minimum overwrite context length");
    sub->add_option("--drift-per-dimension", opts->drift.per_dimension_count,
                    "Answerable drift items per dimension");
    sub->add_option("--drift-unanswerable-frac", opts->drift.unanswerable_fraction,
                    "Unanswerable share per dimension");
    sub->callback([opts]() { run(*opts); });
}

} // namespace flab::cli
