#pragma once

// Ingestion with baseline detection: stores a batch, then feeds the newly
// stored samples (time order) through the persisted per-stream detector and
// stores any alerts. Callers must hold the one-writer-per-stream rule.

#include <span>
#include <vector>

#include "cardio/alert.hpp"
#include "cardio/cohort.hpp"
#include "cardio/store.hpp"

namespace cardio {

struct IngestOutcome {
    store::IngestReceipt receipt;
    std::vector<Alert> alerts; ///< as stored, with ids
};

/// The batch must belong to a single (patient, metric) stream.
IngestOutcome ingest_and_detect(store::Store& store, std::span<const VitalSample> batch,
                                const alert::AlertPolicy& policy);

/// Sink for emit_stream that ingests with detection.
class DetectingSink : public sim::VitalSink {
public:
    DetectingSink(store::Store& store, alert::AlertPolicy policy) : store_(store), policy_(policy) {}
    void deliver(const IngestBatch& batch) override;
    std::size_t accepted() const { return accepted_; }
    std::size_t alerts() const { return alerts_; }

private:
    store::Store& store_;
    alert::AlertPolicy policy_;
    std::size_t accepted_ = 0;
    std::size_t alerts_ = 0;
};

} // namespace cardio
