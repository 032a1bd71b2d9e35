#include "cardio/conversation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "cardio/alert.hpp"
#include "cardio/store.hpp"

namespace cardio::conv {

using nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        while (!cur.empty() && cur.back() == '\'') cur.pop_back();
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (c == '\'' && !cur.empty()) {
            cur.push_back('\'');
        } else {
            flush();
        }
    }
    flush();
    return out;
}

namespace {

// Function words carry no topical signal; indexing them lets a short snippet
// win on "at" or "the" alone.
const std::set<std::string, std::less<>> kStopWords = {
    "a", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "could",
    "did", "do", "does", "for", "from", "had", "has", "have", "i", "if", "in", "into",
    "is", "it", "its", "me", "my", "no", "not", "of", "on", "or", "our", "so",
    "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "to", "was",
    "we", "were", "what", "when", "which", "while", "who", "will", "with", "would", "you", "your",
};

} // namespace

std::vector<std::string> index_terms(std::string_view text) {
    auto toks = tokenize(text);
    std::erase_if(toks, [](const std::string& t) { return kStopWords.contains(t); });
    return toks;
}

// ---------------------------------------------------------------------------

Corpus::Corpus(std::vector<KnowledgeSnippet> snippets) : snippets_(std::move(snippets)) {
    std::set<std::string> ids;
    for (const auto& s : snippets_) {
        if (s.text.empty()) throw ValidationError(fmt::format("snippet '{}' has empty text", s.snippet_id), {"text"});
        if (!ids.insert(s.snippet_id).second)
            throw ValidationError(fmt::format("duplicate snippet_id '{}'", s.snippet_id), {"snippet_id"});
    }
    std::vector<std::map<std::string, double>> tf(snippets_.size());
    std::map<std::string, std::size_t> df;
    for (std::size_t i = 0; i < snippets_.size(); ++i) {
        for (auto& tok : index_terms(snippets_[i].text)) tf[i][tok] += 1.0;
        for (const auto& [term, n] : tf[i]) ++df[term];
    }
    const double n_docs = static_cast<double>(snippets_.size());
    for (const auto& [term, d] : df) idf_[term] = std::log((1.0 + n_docs) / (1.0 + static_cast<double>(d))) + 1.0;
    vectors_.resize(snippets_.size());
    for (std::size_t i = 0; i < snippets_.size(); ++i) {
        double norm = 0.0;
        for (const auto& [term, f] : tf[i]) {
            const double w = f * idf_[term];
            vectors_[i][term] = w;
            norm += w * w;
        }
        norm = std::sqrt(norm);
        for (auto& [term, w] : vectors_[i]) w /= norm;
    }
}

double Corpus::idf(const std::string& term) const {
    auto it = idf_.find(term);
    return it == idf_.end() ? 0.0 : it->second;
}

Corpus load_corpus(const std::filesystem::path& ndjson) {
    std::ifstream in(ndjson);
    if (!in) throw ConfigError(fmt::format("cannot read knowledge corpus {}", ndjson.string()));
    std::vector<KnowledgeSnippet> snippets;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        snippets.push_back({j.at("snippet_id").get<std::string>(), j.value("source", std::string{}),
                            j.at("text").get<std::string>(), j.value("tags", std::vector<std::string>{})});
    }
    return Corpus(std::move(snippets));
}

std::vector<ScoredSnippet> retrieve(std::string_view query, const Corpus& corpus, std::size_t k) {
    if (k == 0) throw ContractError("retrieve requires k >= 1");
    std::map<std::string, double> q;
    for (auto& tok : index_terms(query))
        if (corpus.idf(tok) > 0.0) q[tok] += 1.0;
    if (q.empty()) return {};
    double qnorm = 0.0;
    for (auto& [term, w] : q) {
        w *= corpus.idf(term);
        qnorm += w * w;
    }
    qnorm = std::sqrt(qnorm);

    std::vector<ScoredSnippet> scored;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& dv = corpus.vector(i);
        double dot = 0.0;
        for (const auto& [term, w] : q)
            if (auto it = dv.find(term); it != dv.end()) dot += w * it->second;
        if (dot > 0.0) scored.push_back({&corpus.snippets()[i], dot / qnorm});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredSnippet& a, const ScoredSnippet& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.snippet->snippet_id < b.snippet->snippet_id;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

// ---------------------------------------------------------------------------

std::set<std::string> SymptomLexicon::tokens() const {
    std::set<std::string> out;
    for (const auto& [phrase, tok] : phrases) out.insert(tok);
    return out;
}

std::string SymptomLexicon::label(const std::string& token) const {
    if (auto it = labels.find(token); it != labels.end()) return it->second;
    std::string s = token;
    std::replace(s.begin(), s.end(), '_', ' ');
    return s;
}

void SymptomLexicon::validate() const {
    const auto toks = tokens();
    for (const auto& r : red_flags)
        if (!toks.contains(r)) throw ConfigError(fmt::format("red flag '{}' is not a lexicon symptom", r));
}

SymptomLexicon parse_lexicon(const json& j) {
    SymptomLexicon lex;
    lex.version = j.at("version").get<std::string>();
    for (const auto& [token, entry] : j.at("symptoms").items()) {
        lex.labels[token] = entry.value("label", token);
        for (const auto& phrase : entry.at("phrases")) {
            const auto toks = tokenize(phrase.get<std::string>());
            if (toks.empty()) continue;
            std::string key;
            for (const auto& t : toks) key += (key.empty() ? "" : " ") + t;
            lex.phrases[key] = token;
        }
    }
    for (const auto& r : j.at("red_flags")) lex.red_flags.insert(r.get<std::string>());
    for (const auto& w : j.value("negation_words", std::vector<std::string>{"no", "not", "denies", "without"}))
        lex.negation_words.insert(w);
    for (const auto& w : j.value("severity_words", std::vector<std::string>{})) lex.severity_words.insert(w);
    for (const auto& w : j.value("scope_breakers", std::vector<std::string>{})) lex.scope_breakers.insert(w);
    lex.validate();
    return lex;
}

SymptomLexicon load_lexicon(const std::filesystem::path& json_file) {
    std::ifstream in(json_file);
    if (!in) throw ConfigError(fmt::format("cannot read lexicon {}", json_file.string()));
    try {
        return parse_lexicon(json::parse(in));
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("invalid lexicon {}: {}", json_file.string(), e.what()));
    }
}

std::vector<ExtractedSymptom> extract_symptoms(std::string_view text, const SymptomLexicon& lexicon) {
    const auto toks = tokenize(text);
    std::size_t max_len = 1;
    for (const auto& [phrase, tok] : lexicon.phrases)
        max_len = std::max<std::size_t>(max_len, std::count(phrase.begin(), phrase.end(), ' ') + 1);

    std::vector<ExtractedSymptom> out;
    std::size_t prev_end = 0;
    bool prev_negated = false;
    bool have_prev = false;
    for (std::size_t i = 0; i < toks.size();) {
        std::string match;
        std::size_t match_len = 0;
        std::string key;
        for (std::size_t len = 1; len <= max_len && i + len <= toks.size(); ++len) {
            key += (len == 1 ? "" : " ") + toks[i + len - 1];
            if (auto it = lexicon.phrases.find(key); it != lexicon.phrases.end()) {
                match = it->second;
                match_len = len;
            }
        }
        if (match_len == 0) {
            ++i;
            continue;
        }

        ExtractedSymptom sym{match, false, {}};
        const std::size_t lo = i >= 3 ? i - 3 : 0;
        for (std::size_t p = i; p > lo; --p) {
            const auto& w = toks[p - 1];
            if (lexicon.scope_breakers.contains(w)) break;
            if (lexicon.negation_words.contains(w)) sym.negated = true;
            if (lexicon.severity_words.contains(w)) sym.severity_words.insert(sym.severity_words.begin(), w);
        }
        // "no chest pain or palpitations": the negation carries through the list.
        if (!sym.negated && have_prev && prev_negated && i - prev_end <= 1) {
            const bool joined = i == prev_end || toks[prev_end] == "or" || toks[prev_end] == "nor";
            sym.negated = joined;
        }

        auto existing = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.symptom == sym.symptom; });
        if (existing == out.end()) {
            out.push_back(sym);
        } else if (existing->negated && !sym.negated) {
            *existing = sym;
        }
        have_prev = true;
        prev_negated = sym.negated;
        i += match_len;
        prev_end = i;
    }
    return out;
}

TurnTag classify_turn(const std::vector<ExtractedSymptom>& extracted, const SymptomLexicon& lexicon) {
    TurnTag tag = TurnTag::normal;
    for (const auto& s : extracted) {
        if (s.negated) continue;
        if (lexicon.red_flags.contains(s.symptom)) return TurnTag::red_flag;
        tag = TurnTag::abnormal;
    }
    return tag;
}

// ---------------------------------------------------------------------------

std::vector<std::string> recall_symptoms(const std::vector<Turn>& memory, const std::string& current_session) {
    // The most recent prior session is the one owning the latest turn.
    const Turn* latest = nullptr;
    for (const auto& t : memory)
        if (t.session_id != current_session && (!latest || t.t >= latest->t)) latest = &t;
    if (!latest) return {};
    std::vector<const Turn*> turns;
    for (const auto& t : memory)
        if (t.session_id == latest->session_id && t.speaker == Speaker::patient) turns.push_back(&t);
    std::stable_sort(turns.begin(), turns.end(), [](const Turn* a, const Turn* b) { return a->t < b->t; });
    std::vector<std::string> out;
    for (const Turn* t : turns)
        for (const auto& s : t->extracted)
            if (!s.negated && std::find(out.begin(), out.end(), s.symptom) == out.end()) out.push_back(s.symptom);
    return out;
}

namespace {

std::string join_list(const std::vector<std::string>& items, std::string_view last_sep) {
    if (items.empty()) return {};
    if (items.size() == 1) return items.front();
    std::string out;
    for (std::size_t i = 0; i + 1 < items.size(); ++i) out += (i ? ", " : "") + items[i];
    return fmt::format("{} {} {}", out, last_sep, items.back());
}

std::vector<std::string> labels_of(const json& j) { return j.get<std::vector<std::string>>(); }

} // namespace

std::string ScriptedProvider::generate(const TextRequest& req) {
    const auto& c = req.context;
    if (req.kind == "greeting") {
        const auto name = c.value("name", std::string{});
        return name.empty() ? "Hello. This is your daily heart health check-in."
                            : fmt::format("Hello {}. This is your daily heart health check-in.", name);
    }
    if (req.kind == "recall") {
        const auto syms = labels_of(c.at("symptoms"));
        if (syms.size() == 1)
            return fmt::format("Last time you mentioned {0}. Have the {0} changed in frequency or severity "
                               "since your last report?",
                               syms.front());
        return fmt::format("Last time you mentioned {}. Have any of these changed in frequency or severity "
                           "since your last report?",
                           join_list(syms, "and"));
    }
    if (req.kind == "open_question") {
        return c.value("after_recall", false) ? "Have you noticed any other symptoms today?"
                                              : "How are you feeling today? Have you noticed any new symptoms?";
    }
    if (req.kind == "follow_up") {
        auto text = fmt::format("You mentioned {}. When did it start, and how would you rate it from 1 to 10?",
                                c.at("symptom").get<std::string>());
        if (c.contains("guidance"))
            text += fmt::format(" For reference, {} notes: {}", c["guidance"].value("source", std::string("your care team")),
                                c["guidance"].at("text").get<std::string>());
        return text;
    }
    if (req.kind == "screening")
        return fmt::format("Have you had any {}?", join_list(labels_of(c.at("symptoms")), "or"));
    if (req.kind == "escalation")
        return fmt::format("You reported {}. This needs prompt attention: please contact your care team right away. "
                           "I have flagged your report for them.",
                           join_list(labels_of(c.at("symptoms")), "and"));
    if (req.kind == "closing") return "Thank you. Your care team will review today's check-in.";
    throw ContractError(fmt::format("unknown dialogue prompt kind '{}'", req.kind));
}

DialogueEngine::DialogueEngine(SymptomLexicon lexicon, Corpus corpus, std::shared_ptr<TextProvider> provider)
    : lexicon_(std::move(lexicon)), corpus_(std::move(corpus)), provider_(std::move(provider)) {
    lexicon_.validate();
    if (!provider_) provider_ = std::make_shared<ScriptedProvider>();
}

std::string DialogueEngine::render(const TextRequest& req) const {
    try {
        return provider_->generate(req);
    } catch (const std::exception&) {
        ScriptedProvider fallback;
        return fallback.generate(req);
    }
}

Session DialogueEngine::open_session(std::string patient_id, std::string session_id, std::string patient_name) const {
    Session s;
    s.patient_id = std::move(patient_id);
    s.session_id = std::move(session_id);
    s.patient_name = std::move(patient_name);
    return s;
}

std::string DialogueEngine::next_prompt(Session& s, const std::vector<Turn>& memory) const {
    if (!s.turns.empty() && s.turns.back().speaker == Speaker::patient && s.turns.back().tag == TurnTag::red_flag) {
        std::vector<std::string> flags;
        for (const auto& e : s.turns.back().extracted)
            if (!e.negated && lexicon_.red_flags.contains(e.symptom)) flags.push_back(lexicon_.label(e.symptom));
        s.escalated = true;
        return render({"escalation", {{"symptoms", flags}}});
    }

    const auto recalled = recall_symptoms(memory, s.session_id);
    for (;;) {
        switch (s.stage) {
        case Stage::greeting:
            s.stage = Stage::recall;
            return render({"greeting", {{"name", s.patient_name}}});
        case Stage::recall: {
            s.stage = Stage::open_question;
            if (recalled.empty()) continue;
            std::vector<std::string> labels;
            for (const auto& r : recalled) labels.push_back(lexicon_.label(r));
            return render({"recall", {{"symptoms", labels}}});
        }
        case Stage::open_question:
            s.stage = Stage::follow_up;
            return render({"open_question", {{"after_recall", !recalled.empty()}}});
        case Stage::follow_up: {
            std::optional<std::string> pending;
            for (const auto& t : s.turns) {
                if (t.speaker != Speaker::patient) continue;
                for (const auto& e : t.extracted)
                    if (!e.negated && !s.followed_up.contains(e.symptom)) {
                        pending = e.symptom;
                        break;
                    }
                if (pending) break;
            }
            if (!pending) {
                s.stage = Stage::screening;
                continue;
            }
            s.followed_up.insert(*pending);
            json ctx{{"symptom", lexicon_.label(*pending)}};
            if (const auto hits = retrieve(lexicon_.label(*pending), corpus_, 1); !hits.empty())
                ctx["guidance"] = {{"snippet_id", hits.front().snippet->snippet_id},
                                   {"source", hits.front().snippet->source},
                                   {"text", hits.front().snippet->text}};
            return render({"follow_up", ctx});
        }
        case Stage::screening: {
            s.stage = Stage::closing;
            std::set<std::string> mentioned;
            for (const auto& t : s.turns)
                for (const auto& e : t.extracted) mentioned.insert(e.symptom);
            std::vector<std::string> ask;
            for (const auto& r : lexicon_.red_flags)
                if (!mentioned.contains(r)) ask.push_back(lexicon_.label(r));
            if (ask.empty()) continue;
            return render({"screening", {{"symptoms", ask}}});
        }
        case Stage::closing:
            s.stage = Stage::done;
            return render({"closing", json::object()});
        case Stage::done:
            return render({"closing", json::object()});
        }
    }
}

Turn DialogueEngine::assistant_turn(Session& s, const std::vector<Turn>& memory, EpochMs t) const {
    Turn turn;
    turn.turn_id = fmt::format("{}-{:03d}", s.session_id, s.turns.size() + 1);
    turn.session_id = s.session_id;
    turn.patient_id = s.patient_id;
    turn.speaker = Speaker::assistant;
    turn.t = t;
    turn.text = next_prompt(s, memory);
    turn.tag = TurnTag::normal;
    s.turns.push_back(turn);
    return turn;
}

TurnResult DialogueEngine::patient_turn(Session& s, const std::vector<Turn>& memory, std::string text, EpochMs t) const {
    TurnResult result;
    auto& turn = result.patient_turn;
    turn.turn_id = fmt::format("{}-{:03d}", s.session_id, s.turns.size() + 1);
    turn.session_id = s.session_id;
    turn.patient_id = s.patient_id;
    turn.speaker = Speaker::patient;
    turn.t = t;
    turn.text = std::move(text);
    turn.extracted = extract_symptoms(turn.text, lexicon_);
    turn.tag = classify_turn(turn.extracted, lexicon_);
    s.turns.push_back(turn);

    if (turn.tag == TurnTag::red_flag) {
        const auto it = std::find_if(turn.extracted.begin(), turn.extracted.end(), [&](const ExtractedSymptom& e) {
            return !e.negated && lexicon_.red_flags.contains(e.symptom);
        });
        result.alert = alert::symptom_alert(s.patient_id, it->symptom, t);
    }
    result.assistant_turn = assistant_turn(s, memory, t + 1);
    return result;
}

Turn record_turn(store::Store& store, const Turn& turn) { return store.append_turn(turn.patient_id, turn); }

} // namespace cardio::conv
