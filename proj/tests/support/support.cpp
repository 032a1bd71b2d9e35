#include "support.hpp"

#include <array>
#include <fstream>
#include <mutex>

#include <fmt/format.h>

#include "cardio/conversation.hpp"
#include "cardio/explain.hpp"
#include "cardio/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cardio::testkit {

TempDir::TempDir(const std::string& tag) {
    std::random_device rd;
    const auto base = fs::temp_directory_path() / "cardio-tests";
    fs::create_directories(base);
    for (;;) {
        auto candidate = base / fmt::format("{}-{:016x}", tag, (static_cast<std::uint64_t>(rd()) << 32) | rd());
        if (fs::create_directory(candidate)) {
            path_ = candidate;
            break;
        }
    }
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

fs::path fixtures_dir() { return fs::path(CARDIO_TEST_FIXTURES); }
fs::path share_dir() { return fs::path(CARDIO_SHARE_DIR); }

const json& frozen() {
    static const json j = [] {
        std::ifstream in(fixtures_dir() / "frozen.json");
        if (!in) throw Error("frozen.json missing; run tests/oracles/freeze.py");
        return json::parse(in);
    }();
    return j;
}

std::vector<VitalSample> constant_series(const std::string& pid, Metric m, EpochMs t0, std::size_t n, double value) {
    std::vector<VitalSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({pid, m, t0 + static_cast<EpochMs>(i) * kSampleIntervalMs, value});
    return out;
}

PatientRecord card(const std::string& pid, const std::string& name) {
    PatientRecord r;
    r.patient_id = pid;
    r.name = name;
    r.age = 60;
    r.sex = "male";
    r.cancer_type = "Lymphoma";
    r.cancer_stage = "III";
    r.treatment_type = "Chemotherapy";
    r.treatment_start = "2024-03-01";
    return r;
}

namespace {

void ingest_hourly(store::Store& st, const std::vector<VitalSample>& series, const alert::AlertPolicy& policy) {
    constexpr std::size_t per_hour = kHourMs / kSampleIntervalMs;
    for (std::size_t i = 0; i < series.size(); i += per_hour) {
        const auto n = std::min(per_hour, series.size() - i);
        ingest_and_detect(st, std::span<const VitalSample>(series.data() + i, n), policy);
    }
}

struct Utterance {
    EpochMs t;
    std::string text;
};

void run_session(const conv::DialogueEngine& engine, store::Store& st, const std::string& pid,
                 const std::string& name, EpochMs start, const std::vector<Utterance>& said) {
    const auto memory = st.all_turns(pid);
    auto session = engine.open_session(pid, fmt::format("{}-{}", pid, start), name);
    conv::record_turn(st, engine.assistant_turn(session, memory, start));
    for (const auto& u : said) {
        auto r = engine.patient_turn(session, memory, u.text, u.t);
        conv::record_turn(st, r.patient_turn);
        conv::record_turn(st, r.assistant_turn);
        if (r.alert) st.store_alert(*r.alert);
    }
}

// Additive game over four display groups; f(reference) = 0.30 and the group
// contributions are 0.20 / 0.10 / 0.06 / 0.04 at full scale.
using Game = std::array<double, 4>;

std::vector<explain::FeatureGroup<Game>> game_groups() {
    const std::array<std::pair<const char*, const char*>, 4> names = {{{"chest_discomfort", "Chest Discomfort"},
                                                                        {"heart_rate", "Heart Rate"},
                                                                        {"respiration", "Respiration"},
                                                                        {"other", "Other"}}};
    std::vector<explain::FeatureGroup<Game>> groups;
    for (std::size_t i = 0; i < names.size(); ++i)
        groups.push_back({names[i].first, names[i].second, [i](Game& x, const Game& ref) { x[i] = ref[i]; }});
    return groups;
}

Assessment emily_assessment(int day, int days) {
    const double frac = static_cast<double>(day + 1) / days;
    const Game x = {0.20 * frac, 0.10 * frac, 0.06 * frac, 0.04 * frac};
    const Game ref = {0.0, 0.0, 0.0, 0.0};
    auto value = [](const Game& g) { return 0.30 + g[0] + g[1] + g[2] + g[3]; };
    auto attributions = explain::shapley_exact(value, x, ref, game_groups());
    const double score = 0.30 + 0.40 * frac;
    const auto report = explain::render_explanation(score, 90.0, attributions, {});

    Assessment a;
    a.patient_id = kEmily;
    a.t = parse_utc_date("2024-04-02") + day * kDayMs + 9 * kHourMs;
    a.assessment_id = fmt::format("{}-{}", kEmily, utc_date(a.t));
    a.horizon_days = 90.0;
    a.score = score;
    a.risk_score = std::log(-std::log1p(-score));
    a.tier = report.tier;
    a.attributions = explain::to_records(report.attributions);
    a.narrative = report.narrative;
    return a;
}

} // namespace

Golden build_golden(const fs::path& root, bool with_model) {
    Golden g;
    g.data_dir = root / "data";
    store::Store st(g.data_dir);
    const alert::AlertPolicy policy;

    PatientRecord emily;
    emily.patient_id = kEmily;
    emily.name = "Emily Johnson";
    emily.age = 52;
    emily.sex = "female";
    emily.cancer_type = "Breast Cancer";
    emily.cancer_stage = "IIA";
    emily.treatment_type = "Chemotherapy";
    emily.treatment_start = "2024-04-01";
    emily.screened_risk_factors = {"dx_003", "dx_011"};
    st.upsert_patient(emily);
    st.upsert_patient(card(kEmpty, "Empty Patient"));
    st.upsert_patient(card(kAnomaly, "Anomaly Patient"));

    // Emily: 2024-04-30 and 2024-05-01.
    const EpochMs day0 = parse_utc_date("2024-04-30");
    constexpr std::size_t per_day = kDayMs / kSampleIntervalMs;
    auto hr = constant_series(kEmily, Metric::heart_rate, day0, 2 * per_day, 80.0);
    for (std::size_t i = 1; i < hr.size(); i += 2) hr[i].value = 81.0;
    ingest_hourly(st, hr, policy);
    ingest_hourly(st, constant_series(kEmily, Metric::spo2, day0, 2 * per_day, 97.0), policy);
    ingest_hourly(st, constant_series(kEmily, Metric::respiration, day0, 2 * per_day, 16.0), policy);

    const conv::DialogueEngine engine(conv::load_lexicon(share_dir() / "data/lexicon.json"),
                                      conv::load_corpus(share_dir() / "data/knowledge.ndjson"));
    const EpochMs late = day0 + 23 * kHourMs + 58 * kMinuteMs;
    run_session(engine, st, kEmily, "Emily", late,
                {{late + kMinuteMs, "My heart was racing this evening, I had palpitations"},
                 {late + 2 * kMinuteMs + 30 * kSecondMs, "No chest pain though"}});
    const EpochMs morning = day0 + kDayMs + 9 * kHourMs;
    run_session(engine, st, kEmily, "Emily", morning,
                {{morning + kMinuteMs, "I feel some chest discomfort"},
                 {morning + 2 * kMinuteMs, "I'm also feeling sleepy today"}});

    constexpr int days = 30;
    for (int d = 0; d < days; ++d) st.store_assessment(emily_assessment(d, days));
    g.emily_assessments = days;
    st.add_note(kEmily, "Discussed palpitations; echocardiogram booked for next week.", "Dr. Rivera",
                morning + 3 * kHourMs);

    // Anomaly patient: a normal day arms the baseline, then a +40 bpm hour.
    sim::PatientProfile prof;
    prof.patient_id = kAnomaly;
    prof.name = "Anomaly Patient";
    prof.age = 60;
    prof.sex = sim::Sex::male;
    prof.resting_hr = 72.0;
    const EpochMs a0 = parse_utc_date("2024-05-01");
    auto vitals = sim::sample_vitals(prof, {a0, a0 + 2 * kDayMs}, 17);
    vitals = sim::inject_anomaly(std::move(vitals), {Metric::heart_rate, kAnomalyOnset, 3600.0, 40.0,
                                                     sim::AnomalyShape::step});
    for (Metric m : kAllMetrics) {
        std::vector<VitalSample> stream;
        for (const auto& s : vitals)
            if (s.metric == m) stream.push_back(s);
        ingest_hourly(st, stream, policy);
    }

    if (with_model) {
        g.model_path = root / "model.json";
        risk::save_model(tiny_model(), g.model_path);
    }
    return g;
}

const sim::Cohort& tiny_cohort() {
    static const sim::Cohort c = [] {
        sim::CohortSpec spec;
        spec.n_patients = 120;
        spec.seed = 5;
        return sim::generate_cohort(spec);
    }();
    return c;
}

const risk::TrainedModel& tiny_model() {
    static std::once_flag once;
    static risk::TrainedModel model;
    std::call_once(once, [] {
        risk::ModelConfig cfg;
        cfg.embed_dim = 8;
        cfg.heads = 2;
        cfg.ffn_hidden = 16;
        cfg.static_proj_dim = 4;
        cfg.max_visits = 16;
        risk::TrainConfig tc;
        tc.epochs = 3;
        tc.seed = 3;
        model = risk::train(tiny_cohort(), cfg, tc).model;
    });
    return model;
}

} // namespace cardio::testkit
