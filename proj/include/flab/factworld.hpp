#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace flab {

// A small closed world of entities with single-valued attributes and
// asymmetric relation triples. Everything downstream (corpora, QA items,
// vocabulary) is generated deterministically from it.
struct FactWorld {
    struct Relation {
        std::string agent, verb, patient;
    };

    uint64_t seed = 0;
    std::vector<std::string> entities;
    std::vector<std::string> attribute_names; // subset of the built-in schema
    // attribute -> entity -> value
    std::map<std::string, std::map<std::string, std::string>> attributes;
    std::vector<Relation> relations;

    const std::string& value_of(const std::string& entity, const std::string& attr) const;
    std::string to_json() const;
    static FactWorld from_json(const std::string& text);
    void save(const std::string& path) const;
    static FactWorld load(const std::string& path);
};

// Built-in schema: attribute names with disjoint value pools (a value word
// identifies its attribute), relation verbs, and scope modifiers.
const std::vector<std::pair<std::string, std::vector<std::string>>>& attribute_schema();
const std::vector<std::string>& relation_verbs();
const std::vector<std::string>& scope_modifiers();

struct WorldGenConfig {
    uint64_t seed = 7;
    int n_entities = 24;
    int n_attributes = 3;
    int n_relations = 16;
    int repetitions = 3;       // each true fact appears exactly this often in pretraining
    int n_paragraphs = 96;
    int min_paragraph_tokens = 96;
};

struct CorpusBundle {
    std::vector<std::string> pretrain_lines; // one sentence per line
    std::vector<std::string> paragraphs;     // held-out multi-sentence contexts
};

struct GeneratedWorld {
    FactWorld world;
    CorpusBundle corpus;
};

GeneratedWorld build_fact_world(const WorldGenConfig& cfg);

// Every surface word the generated corpora and question templates can emit.
std::vector<std::string> world_vocabulary_words(const FactWorld& world);

// --- paragraph grammar ------------------------------------------------------

struct ParsedSentence {
    enum class Kind { attribute, relation, because, coreference, modifier } kind;
    std::string entity, value, value2; // attribute-ish fields
    std::string modifier;
    std::string agent, verb, patient;  // relation-ish fields
};

struct ParsedParagraph {
    std::vector<ParsedSentence> sentences;
};

// Inverts the paragraph templates; throws TemplateMismatch on foreign text.
ParsedParagraph parse_paragraph(const FactWorld& world, const std::string& paragraph);

// Sentence renderers (shared by the generator and tests).
std::string render_attribute(const std::string& e, const std::string& v);
std::string render_relation(const std::string& a, const std::string& verb, const std::string& p);
std::string render_because(const std::string& e, const std::string& v, const std::string& a,
                           const std::string& verb, const std::string& p);
std::string render_coreference(const std::string& e, const std::string& v1, const std::string& v2);
std::string render_modifier(const std::string& e, const std::string& mod, const std::string& v);

} // namespace flab
