#include "flab/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "flab/errors.hpp"
#include "flab/metrics.hpp"
#include "flab/rng.hpp"
#include "flab/vocab.hpp"

namespace flab {

using nlohmann::json;

const std::vector<std::string> kDriftDimensions = {
    "main_topic",   "entity_list", "predicate_exactness", "relation_anchor",
    "coreference",  "role_binding", "modifier_scope"};

void validate_item(const OverwriteItem& it, long line) {
    if (it.context.empty() || it.question.empty() || it.counterfactual_answer.empty())
        throw SchemaError("overwrite item: empty field", line);
    if (it.prior_answers.empty())
        throw SchemaError("overwrite item: needs at least one prior answer", line);
    if (it.context.find(it.counterfactual_answer) == std::string::npos)
        throw SchemaError("overwrite item: counterfactual answer \"" + it.counterfactual_answer +
                              "\" does not appear verbatim in the context",
                          line);
    for (const auto& p : it.prior_answers)
        if (p == it.counterfactual_answer)
            throw SchemaError("overwrite item: counterfactual answer duplicated in priors", line);
}

void validate_item(const DriftItem& it, long line) {
    if (it.context.empty() || it.question.empty() || it.gold.empty())
        throw SchemaError("drift item: empty field", line);
    if (std::find(kDriftDimensions.begin(), kDriftDimensions.end(), it.dimension) ==
        kDriftDimensions.end())
        throw SchemaError("drift item: unknown dimension \"" + it.dimension + "\"", line);
    if (it.gold != kUnanswerableSentinel &&
        !metrics::substring_match(it.context, it.gold))
        throw SchemaError("drift item: gold \"" + it.gold +
                              "\" is not a normalized substring of the context",
                          line);
}

void write_overwrite_jsonl(const std::string& path, const std::vector<OverwriteItem>& items) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write: " + path);
    for (const auto& it : items) {
        json j{{"context", it.context},
               {"question", it.question},
               {"counterfactual_answer", it.counterfactual_answer},
               {"prior_answers", it.prior_answers}};
        os << j.dump() << "\n";
    }
}

void write_drift_jsonl(const std::string& path, const std::vector<DriftItem>& items) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write: " + path);
    for (const auto& it : items) {
        json j{{"context", it.context},
               {"question", it.question},
               {"dimension", it.dimension},
               {"gold", it.gold}};
        os << j.dump() << "\n";
    }
}

namespace {

json parse_line(const std::string& line, long lineno) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("invalid JSON: ") + e.what(), lineno);
    }
}

} // namespace

std::vector<OverwriteItem> read_overwrite_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    std::vector<OverwriteItem> out;
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const json j = parse_line(line, lineno);
        OverwriteItem it;
        try {
            it.context = j.at("context").get<std::string>();
            it.question = j.at("question").get<std::string>();
            it.counterfactual_answer = j.at("counterfactual_answer").get<std::string>();
            it.prior_answers = j.at("prior_answers").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw SchemaError(std::string("overwrite record: ") + e.what(), lineno);
        }
        validate_item(it, lineno);
        out.push_back(std::move(it));
    }
    return out;
}

std::vector<DriftItem> read_drift_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    std::vector<DriftItem> out;
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const json j = parse_line(line, lineno);
        DriftItem it;
        try {
            it.context = j.at("context").get<std::string>();
            it.question = j.at("question").get<std::string>();
            it.dimension = j.at("dimension").get<std::string>();
            it.gold = j.at("gold").get<std::string>();
        } catch (const json::exception& e) {
            throw SchemaError(std::string("drift record: ") + e.what(), lineno);
        }
        validate_item(it, lineno);
        out.push_back(std::move(it));
    }
    return out;
}

// --- counterfactual construction ---------------------------------------------

std::vector<OverwriteItem> make_counterfactual_items(const FactWorld& world,
                                                     const CounterfactualConfig& cfg) {
    if (cfg.fraction < 0 || cfg.fraction > 1)
        throw ConfigError("counterfactual: fraction must be in [0, 1]");
    if (cfg.priors < 1) throw ConfigError("counterfactual: priors must be >= 1");

    std::vector<std::pair<std::string, std::string>> facts; // (entity, attribute)
    for (const auto& attr : world.attribute_names)
        for (const auto& e : world.entities) facts.emplace_back(e, attr);

    Rng rng(world.seed ^ 0xc0ffee123ULL);
    rng.shuffle(facts.begin(), facts.end());
    const size_t take =
        static_cast<size_t>(std::ceil(cfg.fraction * static_cast<double>(facts.size())));
    facts.resize(take);

    std::map<std::string, std::vector<std::string>> pools;
    for (const auto& [name, pool] : attribute_schema()) pools[name] = pool;

    std::vector<OverwriteItem> out;
    for (const auto& [entity, attr] : facts) {
        const std::string& truth = world.value_of(entity, attr);
        const auto& pool = pools.at(attr);
        if (pool.size() < 2)
            throw InsufficientValueSpace("attribute " + attr + " has fewer than 2 values");

        std::string swapped = truth;
        while (swapped == truth)
            swapped = pool[static_cast<size_t>(
                rng.randint(0, static_cast<int64_t>(pool.size()) - 1))];

        OverwriteItem it;
        it.question = "what " + attr + " is the " + entity;
        it.counterfactual_answer = swapped;
        it.prior_answers.push_back(truth);
        for (const auto& v : pool) {
            if (static_cast<int>(it.prior_answers.size()) >= cfg.priors) break;
            if (v != truth && v != swapped) it.prior_answers.push_back(v);
        }

        // Counterfactual sentence plus true fillers about other entities.
        // Fillers avoid every candidate value so no answer string leaks into
        // the context through an unrelated fact.
        std::vector<std::string> sentences = {render_attribute(entity, swapped)};
        int guard = 0;
        auto tokens_so_far = [&]() {
            int n = 0;
            for (const auto& s : sentences) n += static_cast<int>(metrics::split_words(s).size());
            return n + std::max(0, static_cast<int>(sentences.size()) - 1);
        };
        while ((static_cast<int>(sentences.size()) - 1 < cfg.filler_facts ||
                tokens_so_far() < cfg.min_context_tokens) &&
               guard++ < 200) {
            const auto& fe = world.entities[static_cast<size_t>(
                rng.randint(0, static_cast<int64_t>(world.entities.size()) - 1))];
            if (fe == entity) continue;
            const auto& fa = world.attribute_names[static_cast<size_t>(
                rng.randint(0, static_cast<int64_t>(world.attribute_names.size()) - 1))];
            const std::string& fv = world.value_of(fe, fa);
            if (fv == swapped ||
                std::find(it.prior_answers.begin(), it.prior_answers.end(), fv) !=
                    it.prior_answers.end())
                continue;
            const std::string s = render_attribute(fe, fv);
            if (std::find(sentences.begin(), sentences.end(), s) == sentences.end())
                sentences.push_back(s);
        }
        rng.shuffle(sentences.begin(), sentences.end());
        for (size_t i = 0; i < sentences.size(); ++i) {
            if (i) it.context += " . ";
            it.context += sentences[i];
        }
        validate_item(it);
        out.push_back(std::move(it));
    }
    return out;
}

// --- drift construction --------------------------------------------------------

namespace {

struct ParagraphFacts {
    std::string text;
    ParsedParagraph parsed;
    std::map<std::string, int> entity_mentions;
    std::set<std::pair<std::string, std::string>> stated_attr; // (entity, attr of value)
    std::set<std::string> stated_values;
};

const std::string& attr_name_of(const std::string& value) {
    for (const auto& [name, pool] : attribute_schema())
        for (const auto& v : pool)
            if (v == value) return name;
    throw ConfigError("unknown attribute value: " + value);
}

ParagraphFacts digest(const FactWorld& world, const std::string& paragraph) {
    ParagraphFacts pf;
    pf.text = paragraph;
    pf.parsed = parse_paragraph(world, paragraph);
    auto mention = [&](const std::string& e) { pf.entity_mentions[e] += 1; };
    for (const auto& s : pf.parsed.sentences) {
        using K = ParsedSentence::Kind;
        switch (s.kind) {
            case K::attribute:
            case K::modifier:
                mention(s.entity);
                pf.stated_attr.insert({s.entity, attr_name_of(s.value)});
                pf.stated_values.insert(s.value);
                break;
            case K::coreference:
                mention(s.entity);
                pf.stated_attr.insert({s.entity, attr_name_of(s.value)});
                pf.stated_attr.insert({s.entity, attr_name_of(s.value2)});
                pf.stated_values.insert(s.value);
                pf.stated_values.insert(s.value2);
                break;
            case K::relation:
                mention(s.agent);
                mention(s.patient);
                break;
            case K::because:
                mention(s.entity);
                mention(s.agent);
                mention(s.patient);
                pf.stated_attr.insert({s.entity, attr_name_of(s.value)});
                pf.stated_values.insert(s.value);
                break;
        }
    }
    return pf;
}

} // namespace

std::vector<DriftItem> make_drift_items(const FactWorld& world,
                                        const std::vector<std::string>& paragraphs,
                                        const DriftGenConfig& cfg) {
    if (cfg.per_dimension_count < 0 || cfg.unanswerable_fraction < 0 ||
        cfg.unanswerable_fraction >= 1)
        throw ConfigError("drift gen: bad counts");

    std::vector<ParagraphFacts> pars;
    pars.reserve(paragraphs.size());
    for (const auto& p : paragraphs) pars.push_back(digest(world, p));
    if (pars.empty()) throw ConfigError("drift gen: no paragraphs");

    Rng rng(world.seed ^ 0xd21f7ULL);
    const int unanswerable_per_dim = static_cast<int>(std::lround(
        cfg.per_dimension_count * cfg.unanswerable_fraction / (1.0 - cfg.unanswerable_fraction)));

    std::vector<DriftItem> out;
    auto emit = [&](const std::string& dim, const ParagraphFacts& pf, const std::string& q,
                    const std::string& gold) {
        DriftItem it;
        it.context = pf.text;
        it.question = q;
        it.dimension = dim;
        it.gold = gold;
        validate_item(it);
        out.push_back(std::move(it));
    };

    for (const auto& dim : kDriftDimensions) {
        int answerable = 0, unanswerable = 0;
        size_t cursor = rng.randint(0, static_cast<int64_t>(pars.size()) - 1);
        for (size_t scanned = 0;
             scanned < pars.size() * 8 &&
             (answerable < cfg.per_dimension_count || unanswerable < unanswerable_per_dim);
             ++scanned) {
            const ParagraphFacts& pf = pars[cursor % pars.size()];
            ++cursor;
            const auto& ss = pf.parsed.sentences;
            using K = ParsedSentence::Kind;

            if (dim == "main_topic") {
                if (answerable < cfg.per_dimension_count && !pf.entity_mentions.empty()) {
                    auto best = pf.entity_mentions.begin();
                    for (auto it2 = pf.entity_mentions.begin(); it2 != pf.entity_mentions.end();
                         ++it2)
                        if (it2->second > best->second) best = it2;
                    bool unique = true;
                    for (auto& [e, n] : pf.entity_mentions)
                        if (e != best->first && n == best->second) unique = false;
                    if (unique) {
                        emit(dim, pf, "what is this text mostly about", best->first);
                        ++answerable;
                        continue;
                    }
                }
                if (unanswerable < unanswerable_per_dim) {
                    // Probe an attribute of the topical entity never stated here.
                    for (auto& [e, n] : pf.entity_mentions) {
                        std::string missing;
                        for (const auto& a : world.attribute_names)
                            if (!pf.stated_attr.count({e, a})) {
                                missing = a;
                                break;
                            }
                        if (!missing.empty()) {
                            emit(dim, pf, "what " + missing + " is the " + e,
                                 kUnanswerableSentinel);
                            ++unanswerable;
                            break;
                        }
                    }
                }
            } else if (dim == "entity_list") {
                bool done = false;
                if (answerable < cfg.per_dimension_count) {
                    // A value stated for exactly one entity in this paragraph.
                    for (const auto& s : ss) {
                        if (s.kind != K::attribute) continue;
                        int holders = 0;
                        for (const auto& s2 : ss)
                            if ((s2.kind == K::attribute || s2.kind == K::modifier) &&
                                s2.value == s.value)
                                ++holders;
                        if (holders == 1) {
                            emit(dim, pf, "which entity is " + s.value, s.entity);
                            ++answerable;
                            done = true;
                            break;
                        }
                    }
                }
                if (!done && unanswerable < unanswerable_per_dim) {
                    for (const auto& [name, pool] : attribute_schema()) {
                        for (const auto& v : pool)
                            if (!pf.stated_values.count(v)) {
                                emit(dim, pf, "which entity is " + v, kUnanswerableSentinel);
                                ++unanswerable;
                                goto entity_list_done;
                            }
                    }
                entity_list_done:;
                }
            } else if (dim == "predicate_exactness") {
                bool done = false;
                if (answerable < cfg.per_dimension_count) {
                    for (const auto& s : ss)
                        if (s.kind == K::relation) {
                            emit(dim, pf, "what did " + s.agent + " do to " + s.patient, s.verb);
                            ++answerable;
                            done = true;
                            break;
                        }
                }
                if (!done && unanswerable < unanswerable_per_dim && pf.entity_mentions.size() >= 2) {
                    // Two mentioned entities with no stated relation between them.
                    std::vector<std::string> ents;
                    for (auto& [e, n] : pf.entity_mentions) ents.push_back(e);
                    for (size_t a = 0; a < ents.size() && !done; ++a)
                        for (size_t b = 0; b < ents.size() && !done; ++b) {
                            if (a == b) continue;
                            bool related = false;
                            for (const auto& s : ss)
                                if ((s.kind == K::relation || s.kind == K::because) &&
                                    s.agent == ents[a] && s.patient == ents[b])
                                    related = true;
                            if (!related) {
                                emit(dim, pf, "what did " + ents[a] + " do to " + ents[b],
                                     kUnanswerableSentinel);
                                ++unanswerable;
                                done = true;
                            }
                        }
                }
            } else if (dim == "relation_anchor") {
                bool done = false;
                if (answerable < cfg.per_dimension_count) {
                    for (const auto& s : ss)
                        if (s.kind == K::because) {
                            emit(dim, pf,
                                 "why did " + s.agent + " " + s.verb + " " + s.patient,
                                 "the " + s.entity + " is " + s.value);
                            ++answerable;
                            done = true;
                            break;
                        }
                }
                if (!done && unanswerable < unanswerable_per_dim) {
                    for (const auto& s : ss)
                        if (s.kind == K::relation) {
                            emit(dim, pf,
                                 "why did " + s.agent + " " + s.verb + " " + s.patient,
                                 kUnanswerableSentinel);
                            ++unanswerable;
                            break;
                        }
                }
            } else if (dim == "coreference") {
                bool done = false;
                if (answerable < cfg.per_dimension_count) {
                    for (const auto& s : ss)
                        if (s.kind == K::coreference) {
                            emit(dim, pf, "what else is the " + s.entity, s.value2);
                            ++answerable;
                            done = true;
                            break;
                        }
                }
                if (!done && unanswerable < unanswerable_per_dim) {
                    for (const auto& s : ss)
                        if (s.kind == K::attribute) {
                            bool sole = true;
                            for (const auto& s2 : ss)
                                if (&s2 != &s && s2.kind != K::relation &&
                                    s2.entity == s.entity)
                                    sole = false;
                            if (sole) {
                                emit(dim, pf, "what else is the " + s.entity,
                                     kUnanswerableSentinel);
                                ++unanswerable;
                                break;
                            }
                        }
                }
            } else if (dim == "role_binding") {
                bool done = false;
                if (answerable < cfg.per_dimension_count) {
                    for (const auto& s : ss) {
                        if (s.kind != K::relation) continue;
                        int same = 0;
                        for (const auto& s2 : ss)
                            if ((s2.kind == K::relation || s2.kind == K::because) &&
                                s2.verb == s.verb && s2.patient == s.patient)
                                ++same;
                        if (same == 1) {
                            emit(dim, pf, "who " + s.verb + " " + s.patient, s.agent);
                            ++answerable;
                            done = true;
                            break;
                        }
                    }
                }
                if (!done && unanswerable < unanswerable_per_dim) {
                    // A verb/patient pairing absent from the paragraph.
                    for (const auto& v : relation_verbs()) {
                        for (auto& [e, n] : pf.entity_mentions) {
                            bool present = false;
                            for (const auto& s : ss)
                                if ((s.kind == K::relation || s.kind == K::because) &&
                                    s.verb == v && s.patient == e)
                                    present = true;
                            if (!present) {
                                emit(dim, pf, "who " + v + " " + e, kUnanswerableSentinel);
                                ++unanswerable;
                                goto role_done;
                            }
                        }
                    }
                role_done:;
                }
            } else if (dim == "modifier_scope") {
                bool done = false;
                if (answerable < cfg.per_dimension_count) {
                    for (const auto& s : ss)
                        if (s.kind == K::modifier) {
                            emit(dim, pf, "how " + s.value + " is the " + s.entity,
                                 s.modifier + " " + s.value);
                            ++answerable;
                            done = true;
                            break;
                        }
                }
                if (!done && unanswerable < unanswerable_per_dim) {
                    for (const auto& s : ss)
                        if (s.kind == K::attribute) {
                            bool modified = false;
                            for (const auto& s2 : ss)
                                if (s2.kind == K::modifier && s2.entity == s.entity &&
                                    s2.value == s.value)
                                    modified = true;
                            if (!modified) {
                                emit(dim, pf, "how " + s.value + " is the " + s.entity,
                                     kUnanswerableSentinel);
                                ++unanswerable;
                                break;
                            }
                        }
                }
            }
        }
    }
    return out;
}

// --- evaluation ----------------------------------------------------------------

std::string EvalReport::to_json() const {
    json j;
    j["dataset"] = dataset;
    j["n_items"] = n_items;
    j["accuracy"] = accuracy;
    if (!per_dimension.empty()) {
        j["per_dimension"] = per_dimension;
        j["per_dimension_counts"] = per_dimension_counts;
    }
    json arr = json::array();
    for (const auto& r : items) {
        json e{{"index", r.index}, {"correct", r.correct}};
        if (!r.question.empty()) e["question"] = r.question;
        if (!r.chosen.empty()) e["chosen"] = r.chosen;
        if (!r.generated.empty()) e["generated"] = r.generated;
        if (!r.scores.empty()) e["scores"] = r.scores;
        if (!r.error.empty()) e["error"] = r.error;
        arr.push_back(std::move(e));
    }
    j["items"] = std::move(arr);
    return j.dump(2);
}

EvalReport eval_overwrite(Responder& model, const std::vector<OverwriteItem>& items,
                          const std::string& dataset_name) {
    EvalReport rep;
    rep.dataset = dataset_name;
    rep.n_items = static_cast<int>(items.size());
    int correct = 0;
    for (size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        ItemRecord rec;
        rec.index = static_cast<int>(i);
        rec.question = it.question;
        try {
            model.set_context(it.context);
            const double cf = model.score(it.question, it.counterfactual_answer);
            rec.scores.push_back(cf);
            double best_prior = -std::numeric_limits<double>::infinity();
            for (const auto& p : it.prior_answers) {
                const double s = model.score(it.question, p);
                rec.scores.push_back(s);
                best_prior = std::max(best_prior, s);
            }
            rec.correct = cf > best_prior; // ties resolve to the prior answer
            rec.chosen = rec.correct ? it.counterfactual_answer
                                     : it.prior_answers[0];
        } catch (const Error& e) {
            rec.error = e.what();
            rec.correct = false;
        }
        correct += rec.correct ? 1 : 0;
        rep.items.push_back(std::move(rec));
    }
    rep.accuracy = items.empty() ? 0.0 : static_cast<double>(correct) / items.size();
    return rep;
}

EvalReport eval_drift(Responder& model, const std::vector<DriftItem>& items, int max_answer_len,
                      const std::string& dataset_name) {
    EvalReport rep;
    rep.dataset = dataset_name;
    rep.n_items = static_cast<int>(items.size());
    std::map<std::string, int> dim_correct;
    for (size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        ItemRecord rec;
        rec.index = static_cast<int>(i);
        rec.question = it.question;
        try {
            model.set_context(it.context);
            rec.generated = model.answer(it.question, max_answer_len);
            if (it.gold == kUnanswerableSentinel) {
                const auto words = metrics::split_words(rec.generated);
                rec.correct = !words.empty() && words[0] == Vocabulary::kAbstainSymbol;
            } else {
                rec.correct = metrics::substring_match(rec.generated, it.gold);
            }
        } catch (const Error& e) {
            rec.error = e.what();
            rec.correct = false;
        }
        rep.per_dimension_counts[it.dimension] += 1;
        dim_correct[it.dimension] += rec.correct ? 1 : 0;
        rep.items.push_back(std::move(rec));
    }
    int correct = 0;
    for (auto& [dim, cnt] : rep.per_dimension_counts) {
        rep.per_dimension[dim] = cnt > 0 ? static_cast<double>(dim_correct[dim]) / cnt : 0.0;
        correct += dim_correct[dim];
    }
    rep.accuracy = items.empty() ? 0.0 : static_cast<double>(correct) / items.size();
    return rep;
}

std::string ReconReport::to_json() const {
    json j;
    j["n_items"] = n_items;
    j["mean_bleu"] = mean_bleu;
    j["exact_match"] = exact_match;
    j["bleu_scores"] = bleu_scores;
    return j.dump(2);
}

ReconReport eval_reconstruction(Responder& model, const std::vector<std::string>& contexts) {
    ReconReport rep;
    rep.n_items = static_cast<int>(contexts.size());
    int exact = 0;
    for (const auto& ctx : contexts) {
        const auto ref = metrics::split_words(ctx);
        model.set_context(ctx);
        const auto hyp = metrics::split_words(model.reconstruct(static_cast<int>(ref.size())));
        const double b = metrics::bleu_words(hyp, ref).score;
        rep.bleu_scores.push_back(b);
        if (hyp == ref) ++exact;
    }
    rep.mean_bleu = metrics::corpus_bleu(rep.bleu_scores);
    rep.exact_match = contexts.empty() ? 0.0 : static_cast<double>(exact) / contexts.size();
    return rep;
}

} // namespace flab
