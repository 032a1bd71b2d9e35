#include "cardio/store.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include <fmt/format.h>

namespace cardio::store {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_atomic(const fs::path& file, const std::string& content) {
    fs::create_directories(file.parent_path());
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(fmt::format("cannot write {}", tmp.string()));
        out << content;
    }
    fs::rename(tmp, file);
}

void append_line(const fs::path& file, const std::string& line) {
    fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary | std::ios::app);
    if (!out) throw Error(fmt::format("cannot append to {}", file.string()));
    out << line << '\n';
}

bool valid_id(const std::string& id) {
    if (id.empty() || id.size() > 64) return false;
    return std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isalnum(c) || c == '-' || c == '_'; });
}

EpochMs now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

} // namespace

std::string_view to_string(Resolution r) {
    switch (r) {
    case Resolution::raw: return "raw";
    case Resolution::minute: return "minute";
    case Resolution::hour: return "hour";
    case Resolution::day: return "day";
    }
    return "raw";
}

std::optional<Resolution> parse_resolution(std::string_view s) {
    for (Resolution r : {Resolution::raw, Resolution::minute, Resolution::hour, Resolution::day})
        if (to_string(r) == s) return r;
    return std::nullopt;
}

EpochMs resolution_ms(Resolution r) {
    switch (r) {
    case Resolution::raw: return 0;
    case Resolution::minute: return kMinuteMs;
    case Resolution::hour: return kHourMs;
    case Resolution::day: return kDayMs;
    }
    return 0;
}

void validate(const PatientRecord& r) {
    std::vector<std::string> bad;
    if (!valid_id(r.patient_id)) bad.emplace_back("patient_id");
    if (r.name.empty()) bad.emplace_back("name");
    if (r.age < 0 || r.age > 130) bad.emplace_back("age");
    if (r.sex != "female" && r.sex != "male" && r.sex != "other") bad.emplace_back("sex");
    try {
        if (parse_utc_date(r.treatment_start) > now_ms()) bad.emplace_back("treatment_start");
    } catch (const ValidationError&) {
        bad.emplace_back("treatment_start");
    }
    if (!bad.empty())
        throw ValidationError(fmt::format("invalid patient record: {}", fmt::join(bad, ", ")), bad);
}

PatientRecord to_record(const sim::PatientProfile& p, std::string treatment_start) {
    return {p.patient_id,    p.name,           p.age,
            std::string(sim::to_string(p.sex)), p.cancer_type, p.cancer_stage,
            p.treatment_type, std::move(treatment_start), {}};
}

// ---------------------------------------------------------------------------

Store::Store(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_);
    for (const auto& entry : fs::directory_iterator(root_)) {
        if (!entry.is_directory()) continue;
        const auto card = entry.path() / "patient.json";
        if (!fs::exists(card)) continue;
        std::ifstream in(card);
        auto rec = json::parse(in).get<PatientRecord>();
        if (const auto mf = entry.path() / "manifest.json"; fs::exists(mf)) {
            std::ifstream min(mf);
            auto& parts = manifest_[rec.patient_id];
            for (const auto& [key, info] : json::parse(min).at("partitions").items())
                parts[key] = {info.at("count").get<std::size_t>(), info.at("min_t").get<EpochMs>(),
                              info.at("max_t").get<EpochMs>()};
        }
        patients_[rec.patient_id] = std::move(rec);
    }
}

PatientRecord Store::upsert_patient(const PatientRecord& record) {
    validate(record);
    std::unique_lock lock(patients_mu_);
    write_atomic(root_ / record.patient_id / "patient.json", json(record).dump(2) + "\n");
    patients_[record.patient_id] = record;
    return record;
}

PatientRecord Store::get_patient(const std::string& patient_id) const {
    std::shared_lock lock(patients_mu_);
    auto it = patients_.find(patient_id);
    if (it == patients_.end()) throw NotFoundError(fmt::format("unknown patient '{}'", patient_id));
    return it->second;
}

bool Store::has_patient(const std::string& patient_id) const {
    std::shared_lock lock(patients_mu_);
    return patients_.contains(patient_id);
}

std::vector<PatientRecord> Store::list_patients() const {
    std::shared_lock lock(patients_mu_);
    std::vector<PatientRecord> out;
    for (const auto& [id, rec] : patients_) out.push_back(rec);
    return out;
}

void Store::require_patient(const std::string& pid) const {
    if (!has_patient(pid)) throw NotFoundError(fmt::format("unknown patient '{}'", pid));
}

// ---------------------------------------------------------------------------
// Vitals

fs::path Store::partition_path(const std::string& pid, Metric m, const std::string& date) const {
    return root_ / pid / std::string(to_string(m)) / (date + ".ndjson");
}

std::shared_ptr<Store::Partition> Store::partition(const std::string& pid, Metric m, const std::string& date) const {
    const auto key = fmt::format("{}/{}/{}", pid, to_string(m), date);
    std::lock_guard lock(partitions_mu_);
    // A partition nobody else holds can be dropped; its file is the source of truth.
    if (partitions_.size() >= kCachedPartitions)
        std::erase_if(partitions_, [](const auto& kv) { return kv.second.use_count() == 1; });
    auto& slot = partitions_[key];
    if (!slot) slot = std::make_shared<Partition>();
    return slot;
}

void Store::load_partition(Partition& part, const fs::path& file) const {
    if (part.loaded) return;
    std::ifstream in(file, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        part.samples.emplace(j.at("t").get<EpochMs>(), j.at("v").get<double>());
    }
    part.loaded = true;
}

void Store::write_manifest(const std::string& pid) const {
    json parts = json::object();
    for (const auto& [key, info] : manifest_.at(pid))
        parts[key] = {{"count", info.count}, {"min_t", info.min_t}, {"max_t", info.max_t}};
    write_atomic(root_ / pid / "manifest.json", json{{"version", 1}, {"partitions", parts}}.dump(1) + "\n");
}

IngestReceipt Store::ingest_vitals(std::span<const VitalSample> batch) {
    IngestReceipt receipt;
    std::vector<char> stored_flag(batch.size(), 0);

    // Validate, then group by partition preserving batch order.
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& s = batch[i];
        std::string reason;
        if (!has_patient(s.patient_id))
            reason = fmt::format("unknown patient_id '{}'", s.patient_id);
        else if (!std::isfinite(s.value) || !physical_bounds(s.metric).contains(s.value))
            reason = fmt::format("{} value {} outside bounds [{}, {}]", to_string(s.metric), s.value,
                                 physical_bounds(s.metric).lo, physical_bounds(s.metric).hi);
        if (!reason.empty()) {
            ++receipt.rejected;
            receipt.rejections.push_back({i, std::move(reason)});
            continue;
        }
        groups[fmt::format("{}/{}/{}", s.patient_id, to_string(s.metric), utc_date(s.t))].push_back(i);
    }

    std::set<std::string> touched;
    for (const auto& [key, indices] : groups) {
        const auto& first = batch[indices.front()];
        const auto date = utc_date(first.t);
        auto part = partition(first.patient_id, first.metric, date);
        const auto file = partition_path(first.patient_id, first.metric, date);

        std::unique_lock lock(part->mu);
        load_partition(*part, file);
        std::string lines;
        std::size_t fresh = 0;
        EpochMs lo = INT64_MAX, hi = INT64_MIN;
        for (std::size_t i : indices) {
            const auto& s = batch[i];
            if (!part->samples.emplace(s.t, s.value).second) {
                ++receipt.duplicates;
                continue;
            }
            fmt::format_to(std::back_inserter(lines), "{{\"t\":{},\"v\":{}}}\n", s.t, s.value);
            stored_flag[i] = 1;
            ++fresh;
            lo = std::min(lo, s.t);
            hi = std::max(hi, s.t);
        }
        if (fresh == 0) continue;
        fs::create_directories(file.parent_path());
        {
            std::ofstream out(file, std::ios::binary | std::ios::app);
            if (!out) throw Error(fmt::format("cannot append to {}", file.string()));
            out << lines;
        }
        receipt.accepted += fresh;

        std::lock_guard mlock(manifest_mu_);
        auto [it, inserted] = manifest_[first.patient_id].try_emplace(key, PartitionInfo{0, lo, hi});
        it->second.count += fresh;
        it->second.min_t = std::min(it->second.min_t, lo);
        it->second.max_t = std::max(it->second.max_t, hi);
        touched.insert(first.patient_id);
    }
    if (!touched.empty()) {
        std::lock_guard mlock(manifest_mu_);
        for (const auto& pid : touched) write_manifest(pid);
    }
    for (std::size_t i = 0; i < batch.size(); ++i)
        if (stored_flag[i]) receipt.stored.push_back(batch[i]);
    return receipt;
}

SeriesResult Store::query_series(const SeriesQuery& q) const {
    if (q.from >= q.to) throw ValidationError("query requires from < to", {"from", "to"});
    require_patient(q.patient_id);

    SeriesResult result;
    result.resolution = q.resolution;
    const EpochMs width = resolution_ms(q.resolution);
    std::map<EpochMs, AggregateBucket> buckets;
    std::map<EpochMs, double> sums;

    for (EpochMs day = floor_to(q.from, kDayMs); day < q.to; day += kDayMs) {
        const auto date = utc_date(day);
        const auto file = partition_path(q.patient_id, q.metric, date);
        auto part = partition(q.patient_id, q.metric, date);
        {
            std::unique_lock lock(part->mu);
            load_partition(*part, file);
        }
        std::shared_lock lock(part->mu);
        for (auto it = part->samples.lower_bound(q.from); it != part->samples.end() && it->first < q.to; ++it) {
            const auto [t, v] = *it;
            if (width == 0) {
                result.samples.push_back({q.patient_id, q.metric, t, v});
                continue;
            }
            const EpochMs start = floor_to(t, width);
            auto [b, fresh] = buckets.try_emplace(start, AggregateBucket{start, 0.0, v, v, 0});
            b->second.min = std::min(b->second.min, v);
            b->second.max = std::max(b->second.max, v);
            ++b->second.count;
            sums[start] += v;
        }
    }
    for (auto& [start, b] : buckets) {
        b.mean = sums[start] / static_cast<double>(b.count);
        // Rounding can push the mean a hair outside [min, max] for constant buckets.
        b.mean = std::clamp(b.mean, b.min, b.max);
        result.buckets.push_back(b);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Keyed records

template <class T>
std::vector<T> Store::read_records(const fs::path& file) const {
    std::vector<T> out;
    std::ifstream in(file, std::ios::binary);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(json::parse(line).get<T>());
    return out;
}

template <class T>
void Store::append_record(const fs::path& file, const T& rec) {
    append_line(file, json(rec).dump());
}

std::size_t Store::count_lines(const fs::path& file) const {
    std::ifstream in(file, std::ios::binary);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

Turn Store::append_turn(const std::string& patient_id, Turn turn) {
    require_patient(patient_id);
    turn.patient_id = patient_id;
    const auto date = utc_date(turn.t);
    const auto file = root_ / patient_id / "conversations" / (date + ".ndjson");
    std::unique_lock lock(records_mu_);
    if (turn.turn_id.empty())
        turn.turn_id = fmt::format("{}-{}-{:04d}", patient_id, date, count_lines(file) + 1);
    append_record(file, turn);
    return turn;
}

std::vector<Turn> Store::get_log(const std::string& patient_id, const std::string& date) const {
    require_patient(patient_id);
    parse_utc_date(date);
    std::shared_lock lock(records_mu_);
    auto turns = read_records<Turn>(root_ / patient_id / "conversations" / (date + ".ndjson"));
    std::stable_sort(turns.begin(), turns.end(), [](const Turn& a, const Turn& b) { return a.t < b.t; });
    return turns;
}

std::vector<Turn> Store::all_turns(const std::string& patient_id) const {
    require_patient(patient_id);
    std::shared_lock lock(records_mu_);
    std::vector<Turn> out;
    const auto dir = root_ / patient_id / "conversations";
    if (!fs::exists(dir)) return out;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".ndjson") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        auto part = read_records<Turn>(f);
        out.insert(out.end(), part.begin(), part.end());
    }
    std::stable_sort(out.begin(), out.end(), [](const Turn& a, const Turn& b) { return a.t < b.t; });
    return out;
}

namespace {

template <class T, class Key>
std::vector<T> in_range(std::vector<T> items, EpochMs from, EpochMs to, Key key) {
    std::erase_if(items, [&](const T& x) { return key(x) < from || key(x) >= to; });
    std::stable_sort(items.begin(), items.end(), [&](const T& a, const T& b) { return key(a) < key(b); });
    return items;
}

} // namespace

Assessment Store::store_assessment(Assessment a) {
    require_patient(a.patient_id);
    const auto file = root_ / a.patient_id / "assessments.ndjson";
    std::unique_lock lock(records_mu_);
    if (a.assessment_id.empty()) a.assessment_id = fmt::format("{}-A{:05d}", a.patient_id, count_lines(file) + 1);
    append_record(file, a);
    return a;
}

Assessment Store::fetch_assessment(const std::string& patient_id, const std::string& assessment_id) const {
    for (auto& a : list_assessments(patient_id))
        if (a.assessment_id == assessment_id) return a;
    throw NotFoundError(fmt::format("unknown assessment '{}'", assessment_id));
}

std::vector<Assessment> Store::list_assessments(const std::string& patient_id, EpochMs from, EpochMs to) const {
    require_patient(patient_id);
    std::shared_lock lock(records_mu_);
    return in_range(read_records<Assessment>(root_ / patient_id / "assessments.ndjson"), from, to,
                    [](const Assessment& a) { return a.t; });
}

Alert Store::store_alert(Alert a) {
    require_patient(a.patient_id);
    const auto file = root_ / a.patient_id / "alerts.ndjson";
    std::unique_lock lock(records_mu_);
    if (a.alert_id.empty()) a.alert_id = fmt::format("{}-AL{:05d}", a.patient_id, count_lines(file) + 1);
    append_record(file, a);
    return a;
}

Alert Store::fetch_alert(const std::string& patient_id, const std::string& alert_id) const {
    for (auto& a : list_alerts(patient_id))
        if (a.alert_id == alert_id) return a;
    throw NotFoundError(fmt::format("unknown alert '{}'", alert_id));
}

std::vector<Alert> Store::list_alerts(const std::string& patient_id, EpochMs from, EpochMs to) const {
    require_patient(patient_id);
    std::shared_lock lock(records_mu_);
    return in_range(read_records<Alert>(root_ / patient_id / "alerts.ndjson"), from, to,
                    [](const Alert& a) { return a.t_raised; });
}

void Store::store_summary(const std::string& patient_id, const std::string& date, const json& summary) {
    require_patient(patient_id);
    parse_utc_date(date);
    std::unique_lock lock(records_mu_);
    write_atomic(root_ / patient_id / "summaries" / (date + ".json"), summary.dump(2) + "\n");
}

std::optional<json> Store::find_summary(const std::string& patient_id, const std::string& date) const {
    require_patient(patient_id);
    parse_utc_date(date);
    std::shared_lock lock(records_mu_);
    const auto file = root_ / patient_id / "summaries" / (date + ".json");
    if (!fs::exists(file)) return std::nullopt;
    std::ifstream in(file);
    return json::parse(in);
}

json Store::fetch_summary(const std::string& patient_id, const std::string& date) const {
    auto s = find_summary(patient_id, date);
    if (!s) throw NotFoundError(fmt::format("no summary for {} on {}", patient_id, date));
    return *s;
}

Note Store::add_note(const std::string& patient_id, const std::string& text, const std::string& author, EpochMs t) {
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); }))
        throw ValidationError("note text must be non-empty", {"text"});
    require_patient(patient_id);
    const auto file = root_ / patient_id / "notes.ndjson";
    std::unique_lock lock(records_mu_);
    Note n{fmt::format("{}-N{:05d}", patient_id, count_lines(file) + 1), patient_id, author, t, text};
    append_record(file, n);
    return n;
}

std::vector<Note> Store::list_notes(const std::string& patient_id) const {
    require_patient(patient_id);
    std::shared_lock lock(records_mu_);
    return in_range(read_records<Note>(root_ / patient_id / "notes.ndjson"), INT64_MIN, INT64_MAX,
                    [](const Note& n) { return n.t; });
}

void Store::save_detector(const std::string& patient_id, Metric m, const json& state) {
    require_patient(patient_id);
    std::unique_lock lock(records_mu_);
    write_atomic(root_ / patient_id / "detectors" / (std::string(to_string(m)) + ".json"), state.dump() + "\n");
}

std::optional<json> Store::load_detector(const std::string& patient_id, Metric m) const {
    std::shared_lock lock(records_mu_);
    const auto file = root_ / patient_id / "detectors" / (std::string(to_string(m)) + ".json");
    if (!fs::exists(file)) return std::nullopt;
    std::ifstream in(file);
    return json::parse(in);
}

// ---------------------------------------------------------------------------

void StoreSink::deliver(const IngestBatch& batch) {
    const auto receipt = store_.ingest_vitals(batch.samples);
    if (receipt.rejected > 0)
        throw Error(fmt::format("{} samples rejected: {}", receipt.rejected, receipt.rejections.front().reason));
    accepted_ += receipt.accepted;
}

void to_json(json& j, const AggregateBucket& b) {
    j = json{{"bucket_start", b.bucket_start}, {"mean", b.mean}, {"min", b.min}, {"max", b.max}, {"count", b.count}};
}

void to_json(json& j, const IngestReceipt& r) {
    json rej = json::array();
    for (const auto& x : r.rejections) rej.push_back({{"index", x.index}, {"reason", x.reason}});
    j = json{{"accepted", r.accepted}, {"duplicates", r.duplicates}, {"rejected", r.rejected}, {"rejections", rej}};
}

} // namespace cardio::store
