#include "cardio/pipeline.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace cardio {

IngestOutcome ingest_and_detect(store::Store& store, std::span<const VitalSample> batch,
                                const alert::AlertPolicy& policy) {
    IngestOutcome out;
    if (batch.empty()) return out;
    const auto& pid = batch.front().patient_id;
    const Metric metric = batch.front().metric;
    for (const auto& s : batch)
        if (s.patient_id != pid || s.metric != metric)
            throw ContractError("an ingestion batch must hold a single (patient, metric) stream");

    out.receipt = store.ingest_vitals(batch);
    auto fresh = out.receipt.stored;
    if (fresh.empty()) return out;
    std::stable_sort(fresh.begin(), fresh.end(), [](const auto& a, const auto& b) { return a.t < b.t; });

    auto detector = [&] {
        if (auto state = store.load_detector(pid, metric)) return alert::StreamDetector::from_json(*state, policy);
        return alert::StreamDetector(pid, metric, policy);
    }();
    for (const auto& s : fresh)
        if (auto a = detector.observe(s)) out.alerts.push_back(store.store_alert(*a));
    store.save_detector(pid, metric, detector.to_json());
    return out;
}

void DetectingSink::deliver(const IngestBatch& batch) {
    const auto out = ingest_and_detect(store_, batch.samples, policy_);
    if (out.receipt.rejected > 0)
        throw Error(fmt::format("{} samples rejected: {}", out.receipt.rejected, out.receipt.rejections.front().reason));
    accepted_ += out.receipt.accepted;
    alerts_ += out.alerts.size();
}

} // namespace cardio
