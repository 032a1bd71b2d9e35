#include "cardio/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <fmt/format.h>

namespace cardio::sim {

using nlohmann::json;

namespace {

std::vector<std::string> numbered(std::string_view prefix, int n) {
    std::vector<std::string> out;
    out.reserve(n);
    for (int i = 1; i <= n; ++i) out.push_back(fmt::format("{}_{:03d}", prefix, i));
    return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double round_to(double v, double unit) { return std::round(v / unit) * unit; }

const std::array<const char*, 16> kFirstNames = {
    "Emily", "James", "Maria", "Wei",   "Aisha", "Daniel", "Sofia", "Kenji",
    "Laura", "Omar",  "Grace", "Lucas", "Priya", "Mateo",  "Hannah", "Noah"};
const std::array<const char*, 12> kLastNames = {
    "Johnson", "Smith", "Garcia", "Chen", "Khan", "Miller",
    "Rossi",   "Tanaka", "Brown", "Ali",  "Nguyen", "Silva"};
const std::array<const char*, 5> kCancerTypes = {
    "Breast Cancer", "Lymphoma", "Leukemia", "Lung Cancer", "Colorectal Cancer"};
const std::array<const char*, 6> kStages = {"I", "IIA", "IIB", "IIIA", "IIIB", "IV"};

template <class Rng, class Container>
const auto& pick(Rng& rng, const Container& c) {
    std::uniform_int_distribution<std::size_t> d(0, c.size() - 1);
    return c[d(rng)];
}

} // namespace

std::string_view to_string(Sex s) {
    switch (s) {
    case Sex::female: return "female";
    case Sex::male: return "male";
    case Sex::other: return "other";
    }
    return "other";
}

Sex parse_sex(std::string_view s) {
    if (s == "female") return Sex::female;
    if (s == "male") return Sex::male;
    if (s == "other") return Sex::other;
    throw ValidationError(fmt::format("unknown sex '{}'", s), {"sex"});
}

double PatientProfile::resting(Metric m) const {
    switch (m) {
    case Metric::heart_rate: return resting_hr;
    case Metric::respiration: return resting_resp;
    case Metric::spo2: return resting_spo2;
    case Metric::skin_temp: return resting_skin_temp;
    }
    return 0.0;
}

void validate(const PatientProfile& p) {
    std::vector<std::string> bad;
    if (p.patient_id.empty()) bad.emplace_back("patient_id");
    if (p.age < 18) bad.emplace_back("age");
    for (Metric m : kAllMetrics)
        if (!resting_bounds(m).contains(p.resting(m))) bad.emplace_back(fmt::format("resting_{}", to_string(m)));
    if (!(p.latent_risk >= 0.0 && p.latent_risk <= 1.0)) bad.emplace_back("latent_risk");
    if (!bad.empty())
        throw ValidationError(fmt::format("invalid patient profile: {}", fmt::join(bad, ", ")), bad);
}

const PatientRecordSet& Cohort::find(std::string_view patient_id) const {
    for (const auto& p : patients)
        if (p.profile.patient_id == patient_id) return p;
    throw NotFoundError(fmt::format("patient '{}' not in cohort", patient_id));
}

const std::vector<std::string>& code_tokens() {
    static const auto v = numbered("dx", 60);
    return v;
}
const std::vector<std::string>& procedure_tokens() {
    static const auto v = numbered("px", 20);
    return v;
}
const std::vector<std::string>& medication_tokens() {
    static const auto v = numbered("rx", 20);
    return v;
}
const std::vector<std::string>& risky_code_tokens() {
    static const std::vector<std::string> v = {"dx_003", "dx_011", "dx_019", "dx_027", "dx_042"};
    return v;
}

int risky_code_count(const std::vector<VisitRecord>& visits) {
    const auto& risky = risky_code_tokens();
    std::set<std::string> seen;
    for (const auto& v : visits)
        for (const auto& c : v.codes)
            if (std::find(risky.begin(), risky.end(), c) != risky.end()) seen.insert(c);
    return static_cast<int>(seen.size());
}

const std::vector<std::pair<std::string, double>>& treatment_catalog() {
    static const std::vector<std::pair<std::string, double>> v = {
        {"Chemotherapy", 0.5},
        {"Anthracycline Chemotherapy", 1.3},
        {"HER2-Targeted Therapy", 1.1},
        {"Radiation Therapy", 0.4},
        {"Immunotherapy", 0.6},
    };
    return v;
}

int stage_ordinal(std::string_view stage) {
    if (stage.starts_with("IV")) return 4;
    if (stage.starts_with("III")) return 3;
    if (stage.starts_with("II")) return 2;
    if (stage.starts_with("I")) return 1;
    return 0;
}

double planted_log_hazard(double latent_risk, int risky_codes, double signal_strength) {
    return signal_strength * (10.0 * (latent_risk - 0.5) + 2.5 * (risky_codes - 1));
}

double parse_signal_strength(std::string_view s) {
    if (s == "none") return 0.0;
    if (s == "low") return 0.35;
    if (s == "medium") return 0.65;
    if (s == "high") return 1.0;
    double v = 0.0;
    try {
        std::size_t used = 0;
        v = std::stod(std::string(s), &used);
        if (used != s.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ConfigError(fmt::format("invalid signal strength '{}'", s));
    }
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("signal strength must be non-negative");
    return v;
}

Cohort generate_cohort(const CohortSpec& spec) {
    if (spec.n_patients < 1) throw ConfigError("n_patients must be >= 1");
    if (spec.days < 1) throw ConfigError("days must be >= 1");
    if (!(spec.followup_days > 0.0)) throw ConfigError("followup_days must be positive");
    if (!(spec.signal_strength >= 0.0)) throw ConfigError("signal_strength must be non-negative");

    std::mt19937_64 rng(mix_seed(spec.seed));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const auto& codes = code_tokens();
    const auto& risky = risky_code_tokens();
    std::vector<std::string> plain_codes;
    for (const auto& c : codes)
        if (std::find(risky.begin(), risky.end(), c) == risky.end()) plain_codes.push_back(c);
    const auto& procs = procedure_tokens();
    const auto& meds = medication_tokens();
    const auto& treatments = treatment_catalog();
    const double sig = spec.signal_strength;

    Cohort cohort;
    cohort.spec = spec;
    cohort.patients.reserve(spec.n_patients);
    for (int i = 0; i < spec.n_patients; ++i) {
        PatientRecordSet rec;
        auto& p = rec.profile;
        p.patient_id = fmt::format("P{:05d}", i + 1);
        p.name = fmt::format("{} {}", pick(rng, kFirstNames), pick(rng, kLastNames));
        p.age = static_cast<int>(std::clamp(std::round(56.0 + 11.0 * gauss(rng)), 18.0, 90.0));
        const double u_sex = unif(rng);
        p.sex = u_sex < 0.6 ? Sex::female : (u_sex < 0.98 ? Sex::male : Sex::other);
        p.cancer_type = pick(rng, kCancerTypes);
        p.cancer_stage = pick(rng, kStages);
        const auto& [treatment, tox] = pick(rng, treatments);
        p.treatment_type = treatment;
        p.resting_hr = round_to(std::clamp(72.0 + 8.0 * gauss(rng), 50.0, 100.0), 0.1);
        p.resting_spo2 = round_to(std::clamp(97.0 + 1.0 * gauss(rng), 93.0, 99.5), 0.1);
        p.resting_resp = round_to(std::clamp(15.0 + 2.0 * gauss(rng), 10.0, 22.0), 0.1);
        p.resting_skin_temp = round_to(std::clamp(33.5 + 0.7 * gauss(rng), 31.0, 36.0), 0.1);
        const double age_z = (p.age - 56.0) / 11.0;
        const double stage = stage_ordinal(p.cancer_stage);
        p.latent_risk = sigmoid(-1.2 + 0.9 * age_z + 0.7 * (stage - 2.3) + tox + 0.3 * gauss(rng));

        // Visit history: a baseline visit at day 0, further visits within 4 weeks.
        std::poisson_distribution<int> extra_visits(5.0);
        const int n_visits = 1 + std::min(extra_visits(rng), 30);
        std::vector<double> times{0.0};
        for (int v = 1; v < n_visits; ++v) times.push_back(round_to(28.0 * unif(rng), 0.001));
        std::sort(times.begin(), times.end());
        for (std::size_t v = 1; v < times.size(); ++v)
            if (times[v] <= times[v - 1]) times[v] = times[v - 1] + 0.001;

        std::uniform_int_distribution<int> n_codes(1, 3), n_procs(0, 2), n_meds(1, 2);
        for (double t : times) {
            VisitRecord visit;
            visit.visit_time = t;
            for (int k = n_codes(rng); k > 0; --k) visit.codes.push_back(pick(rng, plain_codes));
            for (int k = n_procs(rng); k > 0; --k) visit.procedures.push_back(pick(rng, procs));
            for (int k = n_meds(rng); k > 0; --k) visit.medications.push_back(pick(rng, meds));
            rec.visits.push_back(std::move(visit));
        }
        for (const auto& code : risky) {
            if (unif(rng) >= 0.2) continue;
            std::uniform_int_distribution<std::size_t> which(0, rec.visits.size() - 1);
            const int repeats = unif(rng) < 0.5 ? 1 : 2;
            for (int r = 0; r < repeats; ++r) rec.visits[which(rng)].codes.push_back(code);
        }

        // Exponential event time after the last visit; administrative censoring.
        const int rc = risky_code_count(rec.visits);
        const double rate = kBaseEventRatePerDay * std::exp(planted_log_hazard(p.latent_risk, rc, sig));
        std::exponential_distribution<double> wait(rate);
        const double last = rec.visits.back().visit_time;
        double t_event = std::max(round_to(last + wait(rng), 0.01), last + 0.01);
        if (t_event > spec.followup_days) {
            rec.outcome = {spec.followup_days, false};
        } else {
            rec.outcome = {t_event, true};
        }

        auto& m = rec.monitoring;
        const double lr = p.latent_risk;
        m.chest_discomfort = unif(rng) < sigmoid(-2.5 + 3.5 * sig * lr);
        m.palpitations = unif(rng) < sigmoid(-2.0 + 2.5 * sig * lr);
        m.shortness_of_breath = unif(rng) < sigmoid(-3.0 + 3.0 * sig * lr);
        m.hr_dev = round_to(2.5 * sig * lr + 0.8 * gauss(rng), 0.001);
        m.resp_dev = round_to(1.5 * sig * lr + 0.8 * gauss(rng), 0.001);
        m.spo2_dev = round_to(-1.5 * sig * lr + 0.8 * gauss(rng), 0.001);

        cohort.patients.push_back(std::move(rec));
    }
    return cohort;
}

// ---------------------------------------------------------------------------

double noise_amplitude(Metric m) {
    switch (m) {
    case Metric::heart_rate: return 4.0;
    case Metric::respiration: return 1.5;
    case Metric::spo2: return 0.8;
    case Metric::skin_temp: return 0.3;
    }
    return 0.0;
}

std::vector<VitalSample> sample_vitals(const PatientProfile& profile, TimeWindow window,
                                       std::uint64_t seed, double noise_scale) {
    std::vector<VitalSample> out;
    if (window.empty()) return out;
    const EpochMs first = window.start;
    const auto ticks = static_cast<std::size_t>((window.end - first + kSampleIntervalMs - 1) / kSampleIntervalMs);
    out.reserve(ticks * kAllMetrics.size());

    constexpr double phi = 0.95;
    for (Metric m : kAllMetrics) {
        std::mt19937_64 rng(derive_seed(seed, fmt::format("{}/{}", profile.patient_id, to_string(m))));
        std::normal_distribution<double> gauss(0.0, 1.0);
        const double amp = noise_amplitude(m) * noise_scale;
        const double sd = amp / 2.0;
        const double innovation = sd * std::sqrt(1.0 - phi * phi);
        const Bounds phys = physical_bounds(m);
        const double rest = profile.resting(m);
        double dev = std::clamp(sd * gauss(rng), -amp, amp);
        for (std::size_t k = 0; k < ticks; ++k) {
            const double v = amp > 0.0 ? std::clamp(round_to(rest + dev, 0.01), phys.lo, phys.hi) : rest;
            out.push_back({profile.patient_id, m, first + static_cast<EpochMs>(k) * kSampleIntervalMs, v});
            dev = std::clamp(phi * dev + innovation * gauss(rng), -amp, amp);
        }
    }
    return out;
}

std::vector<VitalSample> inject_anomaly(std::vector<VitalSample> series, const AnomalySpec& spec) {
    if (!(spec.duration_s > 0.0)) throw ContractError("anomaly duration must be positive");
    const auto dur_ms = static_cast<EpochMs>(std::llround(spec.duration_s * 1000.0));
    const EpochMs end = spec.start + dur_ms;
    const Bounds phys = physical_bounds(spec.metric);
    for (auto& s : series) {
        if (s.metric != spec.metric || s.t < spec.start || s.t > end) continue;
        double offset = spec.delta;
        if (spec.shape == AnomalyShape::ramp)
            offset = spec.delta * static_cast<double>(s.t - spec.start) / static_cast<double>(dur_ms);
        s.value = std::clamp(s.value + offset, phys.lo, phys.hi);
    }
    return series;
}

EmissionReport emit_stream(const Cohort& cohort, VitalSink& sink, const EmitOptions& opts) {
    if (!(opts.batch_seconds > 0.0)) throw ConfigError("batch_seconds must be positive");
    if (opts.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
    const auto batch_ms = static_cast<EpochMs>(std::llround(opts.batch_seconds * 1000.0));

    EmissionReport report;
    std::optional<EpochMs> last_t;
    for (const auto& rec : cohort.patients) {
        const auto samples = sample_vitals(rec.profile, opts.window, opts.seed, opts.noise_scale);
        auto begin = samples.begin();
        for (Metric m : kAllMetrics) {
            auto stream_end = std::find_if(begin, samples.end(), [m](const VitalSample& s) { return s.metric != m; });
            for (EpochMs lo = opts.window.start; lo < opts.window.end; lo += batch_ms) {
                IngestBatch batch{rec.profile.patient_id, "sim-" + rec.profile.patient_id, m, {}};
                auto chunk_end = std::find_if(begin, stream_end, [&](const VitalSample& s) { return s.t >= lo + batch_ms; });
                batch.samples.assign(begin, chunk_end);
                begin = chunk_end;
                if (batch.samples.empty()) continue;

                std::string last_error;
                bool delivered = false;
                for (int attempt = 0; attempt < opts.max_attempts && !delivered; ++attempt) {
                    try {
                        sink.deliver(batch);
                        delivered = true;
                    } catch (const std::exception& e) {
                        last_error = e.what();
                    }
                }
                if (!delivered) {
                    throw PartialDeliveryError(
                        fmt::format("delivery of {} {} batch starting {} failed after {} attempts ({}); "
                                    "last delivered timestamp: {}",
                                    rec.profile.patient_id, to_string(m), lo, opts.max_attempts, last_error,
                                    last_t ? std::to_string(*last_t) : std::string("none")),
                        report, last_t);
                }
                ++report.batches;
                report.samples += batch.samples.size();
                last_t = batch.samples.back().t;
            }
            begin = stream_end;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------

void to_json(json& j, const PatientProfile& p) {
    j = json{{"patient_id", p.patient_id},
             {"name", p.name},
             {"age", p.age},
             {"sex", to_string(p.sex)},
             {"cancer_type", p.cancer_type},
             {"cancer_stage", p.cancer_stage},
             {"treatment_type", p.treatment_type},
             {"resting_hr", p.resting_hr},
             {"resting_spo2", p.resting_spo2},
             {"resting_resp", p.resting_resp},
             {"resting_skin_temp", p.resting_skin_temp},
             {"latent_risk", p.latent_risk}};
}

void from_json(const json& j, PatientProfile& p) {
    j.at("patient_id").get_to(p.patient_id);
    j.at("name").get_to(p.name);
    j.at("age").get_to(p.age);
    p.sex = parse_sex(j.at("sex").get<std::string>());
    j.at("cancer_type").get_to(p.cancer_type);
    j.at("cancer_stage").get_to(p.cancer_stage);
    j.at("treatment_type").get_to(p.treatment_type);
    j.at("resting_hr").get_to(p.resting_hr);
    j.at("resting_spo2").get_to(p.resting_spo2);
    j.at("resting_resp").get_to(p.resting_resp);
    j.at("resting_skin_temp").get_to(p.resting_skin_temp);
    p.latent_risk = j.value("latent_risk", 0.0);
}

void to_json(json& j, const CohortSpec& s) {
    j = json{{"n_patients", s.n_patients},   {"days", s.days},
             {"seed", s.seed},               {"signal_strength", s.signal_strength},
             {"followup_days", s.followup_days}, {"start_ms", s.start_ms}};
}

void from_json(const json& j, CohortSpec& s) {
    j.at("n_patients").get_to(s.n_patients);
    j.at("days").get_to(s.days);
    j.at("seed").get_to(s.seed);
    j.at("signal_strength").get_to(s.signal_strength);
    j.at("followup_days").get_to(s.followup_days);
    j.at("start_ms").get_to(s.start_ms);
}

void to_json(json& j, const MonitoringSnapshot& m) {
    j = json{{"chest_discomfort", m.chest_discomfort},
             {"palpitations", m.palpitations},
             {"shortness_of_breath", m.shortness_of_breath},
             {"hr_dev", m.hr_dev},
             {"resp_dev", m.resp_dev},
             {"spo2_dev", m.spo2_dev}};
}

void from_json(const json& j, MonitoringSnapshot& m) {
    j.at("chest_discomfort").get_to(m.chest_discomfort);
    j.at("palpitations").get_to(m.palpitations);
    j.at("shortness_of_breath").get_to(m.shortness_of_breath);
    j.at("hr_dev").get_to(m.hr_dev);
    j.at("resp_dev").get_to(m.resp_dev);
    j.at("spo2_dev").get_to(m.spo2_dev);
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write {}", p.string()));
    return out;
}

std::vector<json> read_ndjson(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw NotFoundError(fmt::format("cannot read {}", p.string()));
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(json::parse(line));
    return out;
}

} // namespace

void save_cohort(const Cohort& cohort, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto profiles = open_out(dir / "profiles.ndjson");
    auto visits = open_out(dir / "visits.ndjson");
    auto outcomes = open_out(dir / "outcomes.ndjson");
    auto monitoring = open_out(dir / "monitoring.ndjson");
    for (const auto& rec : cohort.patients) {
        const auto& id = rec.profile.patient_id;
        profiles << json(rec.profile).dump() << '\n';
        for (const auto& v : rec.visits) {
            visits << json{{"patient_id", id},
                           {"visit_time", v.visit_time},
                           {"codes", v.codes},
                           {"procedures", v.procedures},
                           {"medications", v.medications}}
                          .dump()
                   << '\n';
        }
        outcomes << json{{"patient_id", id}, {"event_time", rec.outcome.event_time}, {"observed", rec.outcome.observed}}
                        .dump()
                 << '\n';
        json m = rec.monitoring;
        m["patient_id"] = id;
        monitoring << m.dump() << '\n';
    }
    open_out(dir / "cohort.json") << json(cohort.spec).dump(2) << '\n';
}

Cohort load_cohort(const std::filesystem::path& dir) {
    Cohort cohort;
    {
        std::ifstream in(dir / "cohort.json");
        if (!in) throw NotFoundError(fmt::format("no cohort at {}", dir.string()));
        cohort.spec = json::parse(in).get<CohortSpec>();
    }
    std::map<std::string, std::size_t> index;
    for (const auto& j : read_ndjson(dir / "profiles.ndjson")) {
        PatientRecordSet rec;
        rec.profile = j.get<PatientProfile>();
        index[rec.profile.patient_id] = cohort.patients.size();
        cohort.patients.push_back(std::move(rec));
    }
    auto owner = [&](const json& j) -> PatientRecordSet& {
        const auto id = j.at("patient_id").get<std::string>();
        auto it = index.find(id);
        if (it == index.end()) throw ValidationError(fmt::format("record for unknown patient '{}'", id), {"patient_id"});
        return cohort.patients[it->second];
    };
    for (const auto& j : read_ndjson(dir / "visits.ndjson")) {
        VisitRecord v;
        j.at("visit_time").get_to(v.visit_time);
        j.at("codes").get_to(v.codes);
        j.at("procedures").get_to(v.procedures);
        j.at("medications").get_to(v.medications);
        owner(j).visits.push_back(std::move(v));
    }
    for (const auto& j : read_ndjson(dir / "outcomes.ndjson"))
        owner(j).outcome = {j.at("event_time").get<double>(), j.at("observed").get<bool>()};
    if (std::filesystem::exists(dir / "monitoring.ndjson"))
        for (const auto& j : read_ndjson(dir / "monitoring.ndjson")) owner(j).monitoring = j.get<MonitoringSnapshot>();
    return cohort;
}

} // namespace cardio::sim
