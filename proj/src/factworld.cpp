#include "flab/factworld.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "flab/errors.hpp"
#include "flab/metrics.hpp"
#include "flab/rng.hpp"

namespace flab {

using nlohmann::json;

namespace {

const std::vector<std::string> kEntityPool = {
    "strawberry", "bee",     "falcon",  "otter",   "maple",   "lantern", "violin", "comet",
    "glacier",    "badger",  "orchid",  "beacon",  "marble",  "sparrow", "walrus", "juniper",
    "anchor",     "bison",   "coral",   "drum",    "ember",   "fern",    "gazelle", "harbor",
    "alice",      "bob",     "carol",   "david",   "erin",    "frank",   "grace",  "henry",
    "iris",       "jack",    "karen",   "leo",     "mona",    "nina",    "oscar",  "peter",
    "quinn",      "rosa",    "sam",     "tara",    "ibis",    "jackal",  "kettle", "lemur"};

const std::vector<std::pair<std::string, std::vector<std::string>>> kAttributeSchema = {
    {"color", {"red", "blue", "green", "white", "yellow", "purple", "orange", "black"}},
    {"origin", {"france", "japan", "brazil", "egypt", "norway", "canada", "peru", "kenya"}},
    {"size", {"tiny", "small", "large", "huge", "compact", "towering"}},
    {"diet", {"seeds", "fish", "berries", "leaves", "insects", "roots"}},
    {"mood", {"calm", "fierce", "gentle", "restless", "cheerful", "solemn"}},
};

const std::vector<std::string> kVerbs = {"hit",    "chased", "praised", "followed", "helped",
                                         "warned", "taught", "visited", "greeted",  "carried"};

const std::vector<std::string> kModifiers = {"very", "slightly", "rarely", "often", "barely",
                                             "truly"};

// Surface words the templates themselves contribute.
const std::vector<std::string> kTemplateWords = {
    "the", "is",  "every", "folks", "say",  "we",     "saw",   "because", "and", "it",
    "also", "what", "which", "who",  "why",  "how",    "did",   "do",      "to",  "else",
    "this", "text", "mostly", "about", "entity", ".", ","};

} // namespace

const std::vector<std::pair<std::string, std::vector<std::string>>>& attribute_schema() {
    return kAttributeSchema;
}
const std::vector<std::string>& relation_verbs() { return kVerbs; }
const std::vector<std::string>& scope_modifiers() { return kModifiers; }

const std::string& FactWorld::value_of(const std::string& entity, const std::string& attr) const {
    auto a = attributes.find(attr);
    if (a == attributes.end()) throw ConfigError("fact world: unknown attribute " + attr);
    auto e = a->second.find(entity);
    if (e == a->second.end()) throw ConfigError("fact world: unknown entity " + entity);
    return e->second;
}

std::string FactWorld::to_json() const {
    json j;
    j["seed"] = seed;
    j["entities"] = entities;
    j["attribute_names"] = attribute_names;
    j["attributes"] = attributes;
    json rels = json::array();
    for (const auto& r : relations)
        rels.push_back(json{{"agent", r.agent}, {"verb", r.verb}, {"patient", r.patient}});
    j["relations"] = rels;
    return j.dump(2);
}

FactWorld FactWorld::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("fact world: invalid JSON: ") + e.what());
    }
    FactWorld w;
    try {
        w.seed = j.at("seed").get<uint64_t>();
        w.entities = j.at("entities").get<std::vector<std::string>>();
        w.attribute_names = j.at("attribute_names").get<std::vector<std::string>>();
        w.attributes =
            j.at("attributes").get<std::map<std::string, std::map<std::string, std::string>>>();
        for (const auto& r : j.at("relations"))
            w.relations.push_back({r.at("agent").get<std::string>(),
                                   r.at("verb").get<std::string>(),
                                   r.at("patient").get<std::string>()});
    } catch (const json::exception& e) {
        throw SchemaError(std::string("fact world: missing field: ") + e.what());
    }
    return w;
}

void FactWorld::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write fact world: " + path);
    os << to_json() << "\n";
}

FactWorld FactWorld::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open fact world: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_json(ss.str());
}

std::string render_attribute(const std::string& e, const std::string& v) {
    return "the " + e + " is " + v;
}
std::string render_relation(const std::string& a, const std::string& verb, const std::string& p) {
    return a + " " + verb + " " + p;
}
std::string render_because(const std::string& e, const std::string& v, const std::string& a,
                           const std::string& verb, const std::string& p) {
    return "because the " + e + " is " + v + " , " + a + " " + verb + " " + p;
}
std::string render_coreference(const std::string& e, const std::string& v1,
                               const std::string& v2) {
    return "the " + e + " is " + v1 + " and it is also " + v2;
}
std::string render_modifier(const std::string& e, const std::string& mod, const std::string& v) {
    return "the " + e + " is " + mod + " " + v;
}

GeneratedWorld build_fact_world(const WorldGenConfig& cfg) {
    if (cfg.n_entities < 1 || cfg.n_attributes < 1 || cfg.repetitions < 1 ||
        cfg.n_paragraphs < 1)
        throw ConfigError("world gen: sizes must be >= 1");
    if (cfg.n_attributes > static_cast<int>(kAttributeSchema.size()))
        throw ConfigError("world gen: at most " + std::to_string(kAttributeSchema.size()) +
                          " attributes are available");

    GeneratedWorld out;
    FactWorld& w = out.world;
    w.seed = cfg.seed;
    Rng rng(cfg.seed);

    for (int i = 0; i < cfg.n_entities; ++i)
        w.entities.push_back(i < static_cast<int>(kEntityPool.size())
                                 ? kEntityPool[static_cast<size_t>(i)]
                                 : "thing" + std::to_string(i));

    Rng attr_rng = rng.fork(1);
    for (int a = 0; a < cfg.n_attributes; ++a) {
        const auto& [name, pool] = kAttributeSchema[static_cast<size_t>(a)];
        w.attribute_names.push_back(name);
        for (const auto& e : w.entities)
            w.attributes[name][e] =
                pool[static_cast<size_t>(attr_rng.randint(0, static_cast<int64_t>(pool.size()) - 1))];
    }

    Rng rel_rng = rng.fork(2);
    std::set<std::pair<std::string, std::string>> used_vp;
    int attempts = 0;
    while (static_cast<int>(w.relations.size()) < cfg.n_relations && attempts < cfg.n_relations * 50) {
        ++attempts;
        const auto& a = w.entities[static_cast<size_t>(
            rel_rng.randint(0, static_cast<int64_t>(w.entities.size()) - 1))];
        const auto& p = w.entities[static_cast<size_t>(
            rel_rng.randint(0, static_cast<int64_t>(w.entities.size()) - 1))];
        if (a == p) continue; // relations are asymmetric
        const auto& v =
            kVerbs[static_cast<size_t>(rel_rng.randint(0, static_cast<int64_t>(kVerbs.size()) - 1))];
        if (!used_vp.insert({v, p}).second) continue; // keep (verb, patient) unambiguous
        w.relations.push_back({a, v, p});
    }

    // Pretraining corpus: each true fact appears exactly `repetitions` times
    // across varied templates.
    auto& lines = out.corpus.pretrain_lines;
    for (const auto& attr : w.attribute_names) {
        for (const auto& e : w.entities) {
            const std::string& v = w.attributes[attr][e];
            for (int r = 0; r < cfg.repetitions; ++r) {
                switch (r % 3) {
                    case 0: lines.push_back(render_attribute(e, v)); break;
                    case 1: lines.push_back("every " + e + " is " + v); break;
                    default: lines.push_back("folks say the " + e + " is " + v); break;
                }
            }
        }
    }
    for (const auto& r : w.relations) {
        for (int i = 0; i < cfg.repetitions; ++i) {
            if (i % 2 == 0)
                lines.push_back(render_relation(r.agent, r.verb, r.patient));
            else
                lines.push_back("we saw " + r.agent + " " + r.verb + " " + r.patient);
        }
    }
    Rng line_rng = rng.fork(3);
    line_rng.shuffle(lines.begin(), lines.end());

    // Compression corpus: paragraphs mixing plain facts with the linked,
    // coreferent and modified sentence forms.
    Rng par_rng = rng.fork(4);
    auto rand_entity = [&]() -> const std::string& {
        return w.entities[static_cast<size_t>(
            par_rng.randint(0, static_cast<int64_t>(w.entities.size()) - 1))];
    };
    auto rand_attr = [&]() -> const std::string& {
        return w.attribute_names[static_cast<size_t>(
            par_rng.randint(0, static_cast<int64_t>(w.attribute_names.size()) - 1))];
    };
    for (int p = 0; p < cfg.n_paragraphs; ++p) {
        std::vector<std::string> sentences;
        std::set<std::string> seen;
        auto add = [&](const std::string& s) {
            if (seen.insert(s).second) sentences.push_back(s);
        };
        int words = 0;
        auto count_words = [&]() {
            words = 0;
            for (const auto& s : sentences) words += static_cast<int>(metrics::split_words(s).size());
            words += std::max(0, static_cast<int>(sentences.size()) - 1); // " . " separators
        };
        int guard = 0;
        while (words < cfg.min_paragraph_tokens && guard++ < 200) {
            const long pick = par_rng.randint(0, 5);
            if (pick <= 1) {
                const auto& e = rand_entity();
                add(render_attribute(e, w.attributes[rand_attr()][e]));
            } else if (pick == 2 && !w.relations.empty()) {
                const auto& r = w.relations[static_cast<size_t>(
                    par_rng.randint(0, static_cast<int64_t>(w.relations.size()) - 1))];
                add(render_relation(r.agent, r.verb, r.patient));
            } else if (pick == 3 && !w.relations.empty()) {
                const auto& r = w.relations[static_cast<size_t>(
                    par_rng.randint(0, static_cast<int64_t>(w.relations.size()) - 1))];
                const auto& e = rand_entity();
                const auto& attr = rand_attr();
                add(render_because(e, w.attributes[attr][e], r.agent, r.verb, r.patient));
            } else if (pick == 4 && w.attribute_names.size() >= 2) {
                const auto& e = rand_entity();
                size_t a1 = static_cast<size_t>(
                    par_rng.randint(0, static_cast<int64_t>(w.attribute_names.size()) - 1));
                size_t a2 = (a1 + 1) % w.attribute_names.size();
                add(render_coreference(e, w.attributes[w.attribute_names[a1]][e],
                                       w.attributes[w.attribute_names[a2]][e]));
            } else {
                const auto& e = rand_entity();
                const auto& attr = rand_attr();
                const auto& mod = kModifiers[static_cast<size_t>(
                    par_rng.randint(0, static_cast<int64_t>(kModifiers.size()) - 1))];
                add(render_modifier(e, mod, w.attributes[attr][e]));
            }
            count_words();
        }
        std::string paragraph;
        for (size_t i = 0; i < sentences.size(); ++i) {
            if (i) paragraph += " . ";
            paragraph += sentences[i];
        }
        out.corpus.paragraphs.push_back(std::move(paragraph));
    }
    return out;
}

std::vector<std::string> world_vocabulary_words(const FactWorld& world) {
    std::vector<std::string> words = kTemplateWords;
    for (const auto& e : world.entities) words.push_back(e);
    for (const auto& [name, pool] : kAttributeSchema) {
        words.push_back(name);
        for (const auto& v : pool) words.push_back(v);
    }
    for (const auto& v : kVerbs) words.push_back(v);
    for (const auto& m : kModifiers) words.push_back(m);
    return words;
}

namespace {

// The attribute a value word belongs to; value pools are disjoint.
const std::string* attr_of_value(const std::string& v) {
    for (const auto& [name, pool] : kAttributeSchema)
        for (const auto& pv : pool)
            if (pv == v) return &name;
    return nullptr;
}

bool is_entity(const FactWorld& w, const std::string& s) {
    return std::find(w.entities.begin(), w.entities.end(), s) != w.entities.end();
}

bool is_verb(const std::string& s) {
    return std::find(kVerbs.begin(), kVerbs.end(), s) != kVerbs.end();
}

bool is_modifier(const std::string& s) {
    return std::find(kModifiers.begin(), kModifiers.end(), s) != kModifiers.end();
}

} // namespace

ParsedParagraph parse_paragraph(const FactWorld& world, const std::string& paragraph) {
    ParsedParagraph out;
    std::vector<std::vector<std::string>> sentences(1);
    for (const auto& tok : metrics::split_words(paragraph)) {
        if (tok == ".")
            sentences.emplace_back();
        else
            sentences.back().push_back(tok);
    }
    for (const auto& t : sentences) {
        if (t.empty()) continue;
        ParsedSentence s;
        auto fail = [&]() -> TemplateMismatch {
            std::string joined;
            for (const auto& w : t) joined += w + " ";
            return TemplateMismatch("unrecognized sentence: \"" + joined + "\"");
        };
        if (t[0] == "because") {
            // because the E is V , A VERB P
            if (t.size() != 9 || t[1] != "the" || t[3] != "is" || t[5] != ",") throw fail();
            s.kind = ParsedSentence::Kind::because;
            s.entity = t[2];
            s.value = t[4];
            s.agent = t[6];
            s.verb = t[7];
            s.patient = t[8];
            if (!is_entity(world, s.entity) || !attr_of_value(s.value) ||
                !is_entity(world, s.agent) || !is_verb(s.verb) || !is_entity(world, s.patient))
                throw fail();
        } else if (t[0] == "the") {
            if (t.size() == 4 && t[2] == "is") {
                s.kind = ParsedSentence::Kind::attribute;
                s.entity = t[1];
                s.value = t[3];
                if (!is_entity(world, s.entity) || !attr_of_value(s.value)) throw fail();
            } else if (t.size() == 5 && t[2] == "is") {
                s.kind = ParsedSentence::Kind::modifier;
                s.entity = t[1];
                s.modifier = t[3];
                s.value = t[4];
                if (!is_entity(world, s.entity) || !is_modifier(s.modifier) ||
                    !attr_of_value(s.value))
                    throw fail();
            } else if (t.size() == 9 && t[2] == "is" && t[4] == "and" && t[5] == "it" &&
                       t[6] == "is" && t[7] == "also") {
                s.kind = ParsedSentence::Kind::coreference;
                s.entity = t[1];
                s.value = t[3];
                s.value2 = t[8];
                if (!is_entity(world, s.entity) || !attr_of_value(s.value) ||
                    !attr_of_value(s.value2))
                    throw fail();
            } else {
                throw fail();
            }
        } else if (t.size() == 3) {
            s.kind = ParsedSentence::Kind::relation;
            s.agent = t[0];
            s.verb = t[1];
            s.patient = t[2];
            if (!is_entity(world, s.agent) || !is_verb(s.verb) || !is_entity(world, s.patient))
                throw fail();
        } else {
            throw fail();
        }
        out.sentences.push_back(std::move(s));
    }
    return out;
}

} // namespace flab
