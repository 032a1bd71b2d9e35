#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <thread>

#include "cardio/store.hpp"
#include "support.hpp"

using namespace cardio;
using namespace cardio::store;
namespace fs = std::filesystem;
using cardio::testkit::TempDir;

namespace {

PatientRecord emily_card() {
    PatientRecord r;
    r.patient_id = "P-EMILY";
    r.name = "Emily Johnson";
    r.age = 52;
    r.sex = "female";
    r.cancer_type = "Breast Cancer";
    r.cancer_stage = "IIA";
    r.treatment_type = "Chemotherapy";
    r.treatment_start = "2024-04-01";
    return r;
}

std::uintmax_t tree_bytes(const fs::path& root) {
    std::uintmax_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) n += e.file_size();
    return n;
}

const EpochMs kDay = parse_utc_date("2024-05-01");

/// Random series over 1..3 days: random gaps (cadence multiples), random
/// values inside the metric's bounds.
std::vector<VitalSample> random_series(std::mt19937_64& rng, const std::string& pid, Metric m) {
    std::uniform_int_distribution<int> days(1, 3), gap(1, 40);
    std::uniform_real_distribution<double> val(physical_bounds(m).lo, physical_bounds(m).hi);
    const EpochMs end = kDay + days(rng) * kDayMs;
    std::vector<VitalSample> out;
    for (EpochMs t = kDay + gap(rng) * kSampleIntervalMs; t < end; t += gap(rng) * kSampleIntervalMs)
        out.push_back({pid, m, t, val(rng)});
    return out;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

} // namespace

TEST(Patients, UpsertThenGetReturnsEqualRecord) {
    TempDir d;
    Store st(d.path());
    EXPECT_EQ(st.upsert_patient(emily_card()), emily_card());
    EXPECT_EQ(st.get_patient("P-EMILY"), emily_card());
}

TEST(Patients, SecondUpsertReplacesFieldsAndKeepsData) {
    TempDir d;
    Store st(d.path());
    st.upsert_patient(emily_card());
    const auto s = testkit::constant_series("P-EMILY", Metric::heart_rate, kDay, 10, 80.0);
    st.ingest_vitals(s);
    auto changed = emily_card();
    changed.cancer_stage = "IIIA";
    st.upsert_patient(changed);
    ASSERT_EQ(st.list_patients().size(), 1u);
    EXPECT_EQ(st.get_patient("P-EMILY").cancer_stage, "IIIA");
    EXPECT_EQ(st.query_series({"P-EMILY", Metric::heart_rate, kDay, kDay + kDayMs}).samples.size(), 10u);
}

TEST(Patients, InvalidRecordListsFields) {
    TempDir d;
    Store st(d.path());
    auto bad = emily_card();
    bad.patient_id = "";
    bad.sex = "unknown";
    try {
        st.upsert_patient(bad);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.fields(), (std::vector<std::string>{"patient_id", "sex"}));
    }
    auto future = emily_card();
    future.treatment_start = "2999-01-01";
    EXPECT_THROW(st.upsert_patient(future), ValidationError);
    EXPECT_THROW(st.get_patient("nobody"), NotFoundError);
}

TEST(Ingest, FreshThenDuplicateDayIsIdempotent) {
    TempDir d;
    Store st(d.path());
    st.upsert_patient(emily_card());
    const auto day = testkit::constant_series("P-EMILY", Metric::heart_rate, kDay, 8640, 80.0);
    const auto first = st.ingest_vitals(day);
    EXPECT_EQ(first.accepted, 8640u);
    EXPECT_EQ(first.stored.size(), 8640u);
    const auto bytes = tree_bytes(d.path());
    const auto before = st.query_series({"P-EMILY", Metric::heart_rate, kDay, kDay + kDayMs});

    auto again = day;
    for (auto& s : again) s.value = 99.0; // a retry never overwrites
    const auto second = st.ingest_vitals(again);
    EXPECT_EQ(second.accepted, 0u);
    EXPECT_EQ(second.duplicates, 8640u);
    EXPECT_TRUE(second.stored.empty());
    EXPECT_EQ(tree_bytes(d.path()), bytes);
    EXPECT_EQ(st.query_series({"P-EMILY", Metric::heart_rate, kDay, kDay + kDayMs}).samples, before.samples);
}

TEST(Ingest, RejectsOutOfBoundsAndUnknownPatient) {
    TempDir d;
    Store st(d.path());
    st.upsert_patient(emily_card());
    std::vector<VitalSample> batch = {{"P-EMILY", Metric::spo2, kDay, 97.0},
                                      {"P-EMILY", Metric::spo2, kDay + 10000, 150.0},
                                      {"ghost", Metric::spo2, kDay, 97.0}};
    const auto r = st.ingest_vitals(batch);
    EXPECT_EQ(r.accepted, 1u);
    EXPECT_EQ(r.rejected, 2u);
    EXPECT_EQ(r.accepted + r.duplicates + r.rejected, batch.size());
    ASSERT_EQ(r.rejections.size(), 2u);
    EXPECT_EQ(r.rejections[0].index, 1u);
    EXPECT_NE(r.rejections[0].reason.find("bounds"), std::string::npos);
    EXPECT_NE(r.rejections[1].reason.find("ghost"), std::string::npos);
}

TEST(Ingest, DuplicateWithinOneBatchCountsOnce) {
    TempDir d;
    Store st(d.path());
    st.upsert_patient(emily_card());
    std::vector<VitalSample> batch = {{"P-EMILY", Metric::heart_rate, kDay, 80.0},
                                      {"P-EMILY", Metric::heart_rate, kDay, 81.0}};
    const auto r = st.ingest_vitals(batch);
    EXPECT_EQ(r.accepted, 1u);
    EXPECT_EQ(r.duplicates, 1u);
    EXPECT_DOUBLE_EQ(st.query_series({"P-EMILY", Metric::heart_rate, kDay, kDay + 1}).samples.at(0).value, 80.0);
}

TEST(Query, ConstantDayBuckets) {
    TempDir d;
    Store st(d.path());
    st.upsert_patient(emily_card());
    st.ingest_vitals(testkit::constant_series("P-EMILY", Metric::heart_rate, kDay, 8640, 80.0));
    const auto day = st.query_series({"P-EMILY", Metric::heart_rate, kDay, kDay + kDayMs, Resolution::day});
    ASSERT_EQ(day.buckets.size(), 1u);
    EXPECT_EQ(day.buckets[0].count, 8640u);
    EXPECT_DOUBLE_EQ(day.buckets[0].mean, 80.0);
    EXPECT_EQ(day.buckets[0].bucket_start, kDay);

    const auto hour = st.query_series({"P-EMILY", Metric::heart_rate, kDay, kDay + kDayMs, Resolution::hour});
    ASSERT_EQ(hour.buckets.size(), 24u);
    std::size_t total = 0;
    for (std::size_t i = 0; i < 24; ++i) {
        EXPECT_EQ(hour.buckets[i].bucket_start, kDay + static_cast<EpochMs>(i) * kHourMs);
        total += hour.buckets[i].count;
    }
    EXPECT_EQ(total, 8640u);
}

TEST(Query, EmptyBucketsOmittedAndErrors) {
    TempDir d;
    Store st(d.path());
    st.upsert_patient(emily_card());
    st.ingest_vitals(testkit::constant_series("P-EMILY", Metric::heart_rate, kDay, 10, 80.0));
    st.ingest_vitals(testkit::constant_series("P-EMILY", Metric::heart_rate, kDay + 5 * kHourMs, 10, 90.0));
    EXPECT_EQ(st.query_series({"P-EMILY", Metric::heart_rate, kDay, kDay + kDayMs, Resolution::hour}).buckets.size(),
              2u);
    EXPECT_THROW(st.query_series({"P-EMILY", Metric::heart_rate, kDay, kDay}), ValidationError);
    EXPECT_THROW(st.query_series({"ghost", Metric::heart_rate, kDay, kDay + 1}), NotFoundError);
    EXPECT_TRUE(st.query_series({"P-EMILY", Metric::spo2, kDay, kDay + kDayMs}).samples.empty());
}

TEST(Query, AggregationConsistencyOverRandomSeries) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 12; ++trial) {
        TempDir d;
        Store st(d.path());
        st.upsert_patient(emily_card());
        const Metric m = kAllMetrics[static_cast<std::size_t>(trial) % kAllMetrics.size()];
        const auto series = random_series(rng, "P-EMILY", m);
        st.ingest_vitals(series);
        const EpochMs from = kDay - kDayMs, to = kDay + 5 * kDayMs;

        const auto raw = st.query_series({"P-EMILY", m, from, to}).samples;
        ASSERT_EQ(raw.size(), series.size());
        for (std::size_t i = 1; i < raw.size(); ++i) ASSERT_LT(raw[i - 1].t, raw[i].t);

        std::vector<std::vector<AggregateBucket>> levels;
        for (auto r : {Resolution::minute, Resolution::hour, Resolution::day}) {
            levels.push_back(st.query_series({"P-EMILY", m, from, to, r}).buckets);
            for (const auto& b : levels.back()) {
                ASSERT_GE(b.count, 1u);
                ASSERT_LE(b.min, b.mean + 1e-9);
                ASSERT_LE(b.mean, b.max + 1e-9);
                ASSERT_EQ(floor_to(b.bucket_start, resolution_ms(r)), b.bucket_start);
            }
        }
        // Direct oracle for the daily means.
        std::map<EpochMs, std::pair<double, std::size_t>> direct;
        for (const auto& s : series) {
            auto& [sum, n] = direct[floor_to(s.t, kDayMs)];
            sum += s.value;
            ++n;
        }
        ASSERT_EQ(levels[2].size(), direct.size());
        for (const auto& b : levels[2]) {
            EXPECT_EQ(b.count, direct[b.bucket_start].second);
            EXPECT_LE(rel(b.mean, direct[b.bucket_start].first / direct[b.bucket_start].second), 1e-9);
        }
        // Every coarse bucket equals the count-weighted combination of the finer one.
        for (std::size_t lv = 0; lv + 1 < levels.size(); ++lv) {
            const EpochMs unit = lv == 0 ? kHourMs : kDayMs;
            std::map<EpochMs, std::pair<double, std::size_t>> agg;
            for (const auto& b : levels[lv]) {
                auto& [sum, n] = agg[floor_to(b.bucket_start, unit)];
                sum += b.mean * static_cast<double>(b.count);
                n += b.count;
            }
            ASSERT_EQ(agg.size(), levels[lv + 1].size());
            for (const auto& b : levels[lv + 1]) {
                EXPECT_EQ(b.count, agg[b.bucket_start].second);
                EXPECT_LE(rel(b.mean, agg[b.bucket_start].first / static_cast<double>(b.count)), 1e-9);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Keyed records

TEST(Turns, ReturnedInTimeOrderAndFilteredByDate) {
    TempDir d;
    Store st(d.path());
    st.upsert_patient(emily_card());
    auto mk = [](EpochMs t, const std::string& text) {
        Turn x;
        x.session_id = "s1";
        x.patient_id = "P-EMILY";
        x.speaker = Speaker::patient;
        x.t = t;
        x.text = text;
        return x;
    };
    const EpochMs midnight = kDay;
    st.append_turn("P-EMILY", mk(midnight + 2 * kHourMs, "third"));
    st.append_turn("P-EMILY", mk(midnight - kMinuteMs, "before midnight"));
    st.append_turn("P-EMILY", mk(midnight, "at midnight"));
    st.append_turn("P-EMILY", mk(midnight + kHourMs, "second"));

    const auto log = st.get_log("P-EMILY", "2024-05-01");
    ASSERT_EQ(log.size(), 3u);
    EXPECT_EQ(log[0].text, "at midnight");
    EXPECT_EQ(log[1].text, "second");
    EXPECT_EQ(log[2].text, "third");
    const auto prev = st.get_log("P-EMILY", "2024-04-30");
    ASSERT_EQ(prev.size(), 1u);
    EXPECT_EQ(prev[0].text, "before midnight");
    EXPECT_TRUE(st.get_log("P-EMILY", "2024-05-09").empty());
    EXPECT_THROW(st.get_log("ghost", "2024-05-01"), NotFoundError);
    EXPECT_FALSE(log[0].turn_id.empty());
}

TEST(Assessments, RoundTripAndAscendingListing) {
    TempDir d;
    Store st(d.path());
    st.upsert_patient(emily_card());
    std::vector<Assessment> written;
    for (int i = 29; i >= 0; --i) { // written newest first
        Assessment a;
        a.patient_id = "P-EMILY";
        a.assessment_id = "A" + std::to_string(i);
        a.t = kDay + i * kDayMs;
        a.score = 0.01 * i + 1.0 / 3.0;
        a.risk_score = -0.1 * i;
        a.tier = Tier::monitor;
        a.attributions = {{"heart_rate", "Heart Rate", 0.1, 0.5}, {"respiration", "Respiration", -0.1, 0.5}};
        a.narrative = "n";
        written.push_back(st.store_assessment(a));
    }
    EXPECT_EQ(st.fetch_assessment("P-EMILY", "A7"), written[22]);
    const auto all = st.list_assessments("P-EMILY");
    ASSERT_EQ(all.size(), 30u);
    for (std::size_t i = 1; i < all.size(); ++i) EXPECT_LT(all[i - 1].t, all[i].t);
    EXPECT_EQ(st.list_assessments("P-EMILY", kDay, kDay + 3 * kDayMs).size(), 3u);
    EXPECT_THROW(st.fetch_assessment("P-EMILY", "nope"), NotFoundError);
}

TEST(Alerts, RangeFilterAndIds) {
    TempDir d;
    Store st(d.path());
    st.upsert_patient(emily_card());
    EXPECT_TRUE(st.list_alerts("P-EMILY").empty());
    for (int i = 0; i < 3; ++i) {
        Alert a;
        a.patient_id = "P-EMILY";
        a.source = "heart_rate";
        a.t_raised = kDay + i * kDayMs + kHourMs;
        a.z_peak = 4.0;
        a.message = "m";
        EXPECT_FALSE(st.store_alert(a).alert_id.empty());
    }
    EXPECT_EQ(st.list_alerts("P-EMILY", kDay + kDayMs, kDay + 2 * kDayMs).size(), 1u);
    const auto all = st.list_alerts("P-EMILY");
    EXPECT_EQ(st.fetch_alert("P-EMILY", all[1].alert_id), all[1]);
    EXPECT_THROW(st.fetch_alert("P-EMILY", "x"), NotFoundError);
    EXPECT_THROW(st.list_alerts("ghost"), NotFoundError);
}

TEST(Notes, EmptyTextRejected) {
    TempDir d;
    Store st(d.path());
    st.upsert_patient(emily_card());
    EXPECT_THROW(st.add_note("P-EMILY", "", "dr", kDay), ValidationError);
    const auto n = st.add_note("P-EMILY", "check echo", "dr", kDay);
    EXPECT_EQ(st.list_notes("P-EMILY"), std::vector<Note>{n});
}

TEST(Summaries, StoreFetchAndMissing) {
    TempDir d;
    Store st(d.path());
    st.upsert_patient(emily_card());
    EXPECT_FALSE(st.find_summary("P-EMILY", "2024-05-01").has_value());
    EXPECT_THROW(st.fetch_summary("P-EMILY", "2024-05-01"), NotFoundError);
    const nlohmann::json s = {{"date", "2024-05-01"}, {"x", 1.25}};
    st.store_summary("P-EMILY", "2024-05-01", s);
    EXPECT_EQ(st.fetch_summary("P-EMILY", "2024-05-01"), s);
}

TEST(Restart, EveryEntitySurvivesReload) {
    TempDir d;
    std::mt19937_64 rng(5);
    std::vector<VitalSample> series;
    std::vector<Alert> alerts;
    std::vector<Turn> turns;
    Assessment assessment;
    Note note;
    {
        Store st(d.path());
        st.upsert_patient(emily_card());
        series = random_series(rng, "P-EMILY", Metric::respiration);
        st.ingest_vitals(series);
        Turn t;
        t.session_id = "s";
        t.patient_id = "P-EMILY";
        t.t = kDay + 5;
        t.text = "I feel some chest discomfort";
        t.extracted = {{"chest_discomfort", false, {"some"}}};
        t.tag = TurnTag::red_flag;
        turns.push_back(st.append_turn("P-EMILY", t));
        Alert a;
        a.patient_id = "P-EMILY";
        a.source = "symptom:chest_discomfort";
        a.severity = Severity::critical;
        a.t_raised = kDay + 6;
        a.z_peak = std::numeric_limits<double>::infinity();
        alerts.push_back(st.store_alert(a));
        assessment.patient_id = "P-EMILY";
        assessment.t = kDay;
        assessment.score = 0.7;
        assessment = st.store_assessment(assessment);
        note = st.add_note("P-EMILY", "note", "dr", kDay);
        st.save_detector("P-EMILY", Metric::heart_rate, {{"k", 1}});
    }
    Store st(d.path());
    EXPECT_EQ(st.get_patient("P-EMILY"), emily_card());
    EXPECT_EQ(st.query_series({"P-EMILY", Metric::respiration, kDay - kDayMs, kDay + 5 * kDayMs}).samples, series);
    EXPECT_EQ(st.get_log("P-EMILY", "2024-05-01"), turns);
    EXPECT_EQ(st.list_alerts("P-EMILY"), alerts);
    EXPECT_EQ(st.fetch_assessment("P-EMILY", assessment.assessment_id), assessment);
    EXPECT_EQ(st.list_notes("P-EMILY"), std::vector<Note>{note});
    EXPECT_EQ(st.load_detector("P-EMILY", Metric::heart_rate), nlohmann::json({{"k", 1}}));
    // still idempotent after reload
    EXPECT_EQ(st.ingest_vitals(series).duplicates, series.size());
    EXPECT_TRUE(fs::exists(d.path() / "P-EMILY" / "manifest.json"));
}

TEST(Concurrency, ParallelStreamsAndReaders) {
    TempDir d;
    Store st(d.path());
    for (int p = 0; p < 4; ++p) st.upsert_patient(testkit::card("P" + std::to_string(p)));
    std::vector<std::thread> threads;
    std::atomic<int> failures{0};
    for (int p = 0; p < 4; ++p)
        for (Metric m : kAllMetrics)
            threads.emplace_back([&, p, m] {
                const auto pid = "P" + std::to_string(p);
                const double v = physical_bounds(m).lo + 1.0;
                for (int chunk = 0; chunk < 12; ++chunk) {
                    auto s = testkit::constant_series(pid, m, kDay + chunk * kHourMs, 360, v);
                    if (st.ingest_vitals(s).accepted != 360) ++failures;
                }
            });
    for (int r = 0; r < 4; ++r)
        threads.emplace_back([&] {
            for (int i = 0; i < 50; ++i) {
                auto res = st.query_series({"P0", Metric::heart_rate, kDay, kDay + kDayMs, Resolution::hour});
                for (const auto& b : res.buckets)
                    if (b.count == 0 || b.count > 360) ++failures;
            }
        });
    for (auto& t : threads) t.join();
    EXPECT_EQ(failures.load(), 0);
    for (int p = 0; p < 4; ++p)
        EXPECT_EQ(st.query_series({"P" + std::to_string(p), Metric::spo2, kDay, kDay + kDayMs, Resolution::day})
                      .buckets.at(0)
                      .count,
                  12u * 360u);
}
