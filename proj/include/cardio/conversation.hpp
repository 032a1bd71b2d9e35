#pragma once

// Daily check-in dialogue: guideline retrieval, symptom extraction and
// classification, and a deterministic scripted assistant that recalls the
// previous session and escalates red flags.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cardio/provider.hpp"
#include "cardio/records.hpp"

namespace cardio::store {
class Store;
}

namespace cardio::conv {

/// Lowercased word tokens; apostrophes inside a word are kept ("don't").
std::vector<std::string> tokenize(std::string_view text);
/// tokenize() minus common function words; the terms the corpus index sees.
std::vector<std::string> index_terms(std::string_view text);

// ---------------------------------------------------------------------------
// Knowledge retrieval

struct KnowledgeSnippet {
    std::string snippet_id;
    std::string source;
    std::string text;
    std::vector<std::string> tags;
};

/// Immutable corpus with a precomputed term-frequency / inverse-document-
/// frequency index. idf(term) = ln((1 + N) / (1 + df)) + 1.
class Corpus {
public:
    explicit Corpus(std::vector<KnowledgeSnippet> snippets);

    const std::vector<KnowledgeSnippet>& snippets() const { return snippets_; }
    std::size_t size() const { return snippets_.size(); }
    double idf(const std::string& term) const;
    /// L2-normalized tf-idf vector of a snippet.
    const std::map<std::string, double>& vector(std::size_t i) const { return vectors_[i]; }

private:
    std::vector<KnowledgeSnippet> snippets_;
    std::map<std::string, double> idf_;
    std::vector<std::map<std::string, double>> vectors_;
};

Corpus load_corpus(const std::filesystem::path& ndjson);

struct ScoredSnippet {
    const KnowledgeSnippet* snippet = nullptr;
    double score = 0.0;
};

/// Top-k snippets by tf-idf cosine, ties by ascending snippet_id. Snippets
/// sharing no term with the query are not returned; an empty query returns
/// nothing.
std::vector<ScoredSnippet> retrieve(std::string_view query, const Corpus& corpus, std::size_t k);

// ---------------------------------------------------------------------------
// Symptoms

struct SymptomLexicon {
    std::string version;
    /// surface phrase (normalized to tokens joined by ' ') -> canonical token
    std::map<std::string, std::string> phrases;
    std::map<std::string, std::string> labels; ///< token -> display label
    std::set<std::string> red_flags;
    std::set<std::string> negation_words;
    std::set<std::string> severity_words;
    std::set<std::string> scope_breakers;

    std::set<std::string> tokens() const;
    std::string label(const std::string& token) const;
    /// Throws ConfigError if a red flag is not a lexicon token.
    void validate() const;
};

SymptomLexicon load_lexicon(const std::filesystem::path& json_file);
SymptomLexicon parse_lexicon(const nlohmann::json& j);

/// Longest-match phrase lookup; a symptom is negated when a negation word
/// occurs within the three tokens before the phrase (a scope breaker such as
/// "but" ends the look-back, and a negated list joined by "or"/"nor" carries
/// the negation forward). One entry per symptom; a non-negated mention wins.
std::vector<ExtractedSymptom> extract_symptoms(std::string_view text, const SymptomLexicon& lexicon);

/// red_flag if any non-negated red-flag symptom, abnormal if any non-negated
/// symptom, normal otherwise.
TurnTag classify_turn(const std::vector<ExtractedSymptom>& extracted, const SymptomLexicon& lexicon);

// ---------------------------------------------------------------------------
// Dialogue

enum class Stage { greeting, recall, open_question, follow_up, screening, closing, done };

struct Session {
    std::string session_id;
    std::string patient_id;
    std::string patient_name;
    std::vector<Turn> turns;
    Stage stage = Stage::greeting;
    std::set<std::string> followed_up;
    bool escalated = false;
};

/// Non-negated symptoms of the most recent prior session, in first-mention
/// order. `memory` holds earlier turns of the patient in any order.
std::vector<std::string> recall_symptoms(const std::vector<Turn>& memory, const std::string& current_session);

/// The scripted default provider: pure function of the request.
class ScriptedProvider : public TextProvider {
public:
    std::string name() const override { return "scripted"; }
    std::string generate(const TextRequest& request) override;
};

struct TurnResult {
    Turn patient_turn;
    Turn assistant_turn;
    std::optional<Alert> alert; ///< critical alert for a red-flag turn
};

class DialogueEngine {
public:
    DialogueEngine(SymptomLexicon lexicon, Corpus corpus, std::shared_ptr<TextProvider> provider = nullptr);

    const SymptomLexicon& lexicon() const { return lexicon_; }
    const Corpus& corpus() const { return corpus_; }

    Session open_session(std::string patient_id, std::string session_id, std::string patient_name = {}) const;

    /// Advances the script and returns the assistant's next utterance. The
    /// most recent patient turn, if red_flag, yields the escalation text.
    std::string next_prompt(Session& session, const std::vector<Turn>& memory) const;

    /// Emits the next assistant turn at time t and appends it to the session.
    Turn assistant_turn(Session& session, const std::vector<Turn>& memory, EpochMs t) const;

    /// Records a patient utterance: extraction, classification, the alert for a
    /// red flag, and the assistant's reply at t + 1 ms.
    TurnResult patient_turn(Session& session, const std::vector<Turn>& memory, std::string text, EpochMs t) const;

private:
    std::string render(const TextRequest& req) const;

    SymptomLexicon lexicon_;
    Corpus corpus_;
    std::shared_ptr<TextProvider> provider_;
};

/// Persists a turn through the store; unknown patients raise NotFoundError.
Turn record_turn(store::Store& store, const Turn& turn);

} // namespace cardio::conv
