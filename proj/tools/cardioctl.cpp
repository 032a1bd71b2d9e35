// cardioctl: simulate, train, eval, explain, serve, report.
//
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "cardio/api.hpp"
#include "cardio/cohort.hpp"
#include "cardio/explain.hpp"
#include "cardio/pipeline.hpp"
#include "cardio/risk/assess.hpp"
#include "cardio/risk/train.hpp"
#include "cardio/store.hpp"
#include "cardio/summary.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cardio;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct SimulateArgs {
    int patients = 100;
    int days = 1;
    std::uint64_t seed = 0;
    std::string out;
    std::string signal = "high";
    int vitals_patients = -1;
    double batch_seconds = 600.0;
    std::string policy_file;
};

int run_simulate(const SimulateArgs& a) {
    sim::CohortSpec spec;
    spec.n_patients = a.patients;
    spec.days = a.days;
    spec.seed = a.seed;
    spec.signal_strength = sim::parse_signal_strength(a.signal);
    const auto cohort = sim::generate_cohort(spec);
    const fs::path out = a.out;
    sim::save_cohort(cohort, out);

    const alert::AlertPolicy policy = a.policy_file.empty() ? alert::AlertPolicy{} : alert::load_policy(a.policy_file);
    store::Store st(out / "data");
    const std::string start_date = utc_date(spec.start_ms);
    for (const auto& rec : cohort.patients) st.upsert_patient(store::to_record(rec.profile, start_date));

    sim::Cohort streamed;
    streamed.spec = cohort.spec;
    const std::size_t k = a.vitals_patients < 0 ? cohort.patients.size()
                                                : std::min<std::size_t>(cohort.patients.size(), a.vitals_patients);
    streamed.patients.assign(cohort.patients.begin(), cohort.patients.begin() + static_cast<std::ptrdiff_t>(k));

    sim::EmitOptions opts;
    opts.window = {spec.start_ms, spec.start_ms + spec.days * kDayMs};
    opts.batch_seconds = a.batch_seconds;
    opts.seed = derive_seed(spec.seed, "vitals");
    DetectingSink sink(st, policy);
    const auto report = sim::emit_stream(streamed, sink, opts);

    std::size_t events = 0;
    for (const auto& p : cohort.patients) events += p.outcome.observed ? 1 : 0;
    fmt::print("cohort: {} patients, {} observed events, written to {}\n", cohort.patients.size(), events, out.string());
    fmt::print("vitals: {} patients, {} days, {} samples in {} batches, {} alerts\n", k, spec.days, report.samples,
               report.batches, sink.alerts());
    return 0;
}

struct TrainArgs {
    std::string cohort;
    std::string out;
    risk::TrainConfig tc;
    risk::ModelConfig mc;
};

int run_train(const TrainArgs& a) {
    const auto cohort = sim::load_cohort(a.cohort);
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = risk::train(cohort, a.mc, a.tc);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    risk::save_model(result.model, a.out);
    const fs::path history = fs::path(a.out).string() + ".loss.json";
    std::ofstream(history) << risk::to_json(result.history).dump(2) << '\n';

    const auto& h = result.history;
    fmt::print("trained {} epochs in {:.1f} s; loss {:.4f} -> {:.4f} (best validation at epoch {})\n",
               a.tc.epochs, secs, h.front().train_loss, result.model.meta.final_loss, result.model.meta.best_epoch);
    std::vector<std::string> screened;
    for (const auto& f : result.model.meta.screened) screened.push_back(f.token);
    fmt::print("screened risk factors: {}\n", screened.empty() ? "none" : fmt::format("{}", fmt::join(screened, ", ")));
    fmt::print("model: {}\nloss history: {}\n", a.out, history.string());
    return 0;
}

struct EvalArgs {
    std::string model;
    std::string cohort;
    double horizon = 90.0;
    std::string split = "validation";
    std::string format = "text";
};

int run_eval(const EvalArgs& a) {
    const auto model = risk::load_model(a.model);
    const auto cohort = sim::load_cohort(a.cohort);
    const auto patients = a.split == "all" ? cohort.patients : risk::validation_patients(model, cohort);
    if (patients.empty()) throw Error("no patients to evaluate; the cohort does not match the model's validation split");
    const auto m = risk::evaluate_model(model, patients, a.horizon);
    if (a.format == "json") {
        fmt::print("{}\n", json{{"auc", m.auc},
                                {"concordance_index", m.concordance_index},
                                {"patients", m.patients},
                                {"events_within_horizon", m.events_within_horizon},
                                {"horizon_days", m.horizon_days},
                                {"split", a.split}}
                               .dump());
    } else {
        fmt::print("split: {} ({} patients, {} events within {:g} days)\n", a.split, m.patients,
                   m.events_within_horizon, m.horizon_days);
        fmt::print("AUC: {:.4f}\nconcordance index: {:.4f}\n", m.auc, m.concordance_index);
    }
    return 0;
}

struct ExplainArgs {
    std::string model;
    std::string cohort;
    std::string patient;
    std::string date;
    std::string config;
    std::string data;
    std::string format = "text";
};

int run_explain(const ExplainArgs& a) {
    const auto model = risk::load_model(a.model);
    const auto cohort = sim::load_cohort(a.cohort);
    const auto& rec = cohort.find(a.patient);
    risk::AssessOptions opts;
    if (!a.config.empty()) opts.explain = explain::load_explain_config(a.config);
    opts.t = parse_utc_date(a.date);
    opts.assessment_id = fmt::format("{}-{}", a.patient, a.date);
    auto assessment = risk::assess(model, risk::make_input(rec), opts);
    if (!a.data.empty()) {
        store::Store st(a.data);
        assessment = st.store_assessment(assessment);
    }
    if (a.format == "json") {
        fmt::print("{}\n", json(assessment).dump(2));
        return 0;
    }
    fmt::print("patient: {}\ndate: {}\nscore: {} within {:g} days (s = {:.4f})\ntier: {}\n", a.patient, a.date,
               explain::format_percent(assessment.score), assessment.horizon_days, assessment.risk_score,
               to_string(assessment.tier));
    fmt::print("attributions:\n");
    for (const auto& at : assessment.attributions)
        fmt::print("  {:<20} phi {:+.4f}  share {}\n", at.label, at.phi, explain::format_percent(at.share));
    fmt::print("{}\n", assessment.narrative);
    return 0;
}

struct ServeArgs {
    std::string config;
    int port = -1;
};

int run_serve(const ServeArgs& a) {
    auto cfg = api::load_config(a.config);
    if (a.port >= 0) cfg.port = a.port;
    api::Service service(cfg);
    api::Server server(service);
    const int port = server.start();
    fmt::print("listening on http://{}:{}/api/v1 (risk model {}, conversation {})\n", cfg.host, port,
               service.model_available() ? "loaded" : "unavailable",
               service.conversation_available() ? "loaded" : "unavailable");
    std::fflush(stdout);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
}

struct ReportArgs {
    std::string data;
    std::string patient;
    std::string date;
    std::string policy_file;
    std::string format = "text";
    bool save = false;
};

int run_report(const ReportArgs& a) {
    if (!fs::is_directory(a.data)) throw NotFoundError(fmt::format("data directory '{}' not found", a.data));
    store::Store st(a.data);
    const alert::AlertPolicy policy = a.policy_file.empty() ? alert::AlertPolicy{} : alert::load_policy(a.policy_file);
    auto s = summary::build_daily_summary(st, a.patient, a.date, summary::baselines_from_store(st, a.patient, policy),
                                          policy);
    const auto text = summary::render_summary(s, nullptr);
    if (a.save) st.store_summary(a.patient, s.date, summary::to_json(s));
    if (a.format == "json") fmt::print("{}\n", summary::to_json(s).dump(2));
    else fmt::print("{}", text);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cardiotoxicity remote-monitoring toolkit"};
    app.require_subcommand(1, 1);

    SimulateArgs sa;
    auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic cohort and stream its vitals into a store");
    sim_cmd->add_option("--patients", sa.patients, "Number of patients")->capture_default_str()->check(CLI::PositiveNumber);
    sim_cmd->add_option("--days", sa.days, "Days of wearable vitals")->capture_default_str()->check(CLI::PositiveNumber);
    sim_cmd->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
    sim_cmd->add_option("--out", sa.out, "Output directory (cohort files; vitals under data/)")->required();
    sim_cmd->add_option("--signal", sa.signal, "Planted signal: none, low, medium, high, or a number")->capture_default_str();
    sim_cmd->add_option("--vitals-patients", sa.vitals_patients,
                        "Stream vitals for only the first N patients (default: all)");
    sim_cmd->add_option("--batch-seconds", sa.batch_seconds, "Ingestion batch length")->capture_default_str();
    sim_cmd->add_option("--policy", sa.policy_file, "Alert policy JSON (default: built-in policy)");

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train the risk model on a cohort");
    train_cmd->add_option("--cohort", ta.cohort, "Cohort directory")->required();
    train_cmd->add_option("--out", ta.out, "Model file to write (loss history goes to <out>.loss.json)")->required();
    train_cmd->add_option("--epochs", ta.tc.epochs, "Epochs")->capture_default_str();
    train_cmd->add_option("--lr", ta.tc.lr, "Learning rate")->capture_default_str();
    train_cmd->add_option("--seed", ta.tc.seed, "Seed for split, initialization, and batch order")->capture_default_str();
    train_cmd->add_option("--batch-size", ta.tc.batch_size, "Mini-batch size")->capture_default_str();
    train_cmd->add_option("--momentum", ta.tc.momentum, "Momentum (0 = plain SGD)")->capture_default_str();
    train_cmd->add_option("--clip", ta.tc.clip_norm, "Gradient-norm clip (0 = off)")->capture_default_str();
    train_cmd->add_option("--horizon", ta.tc.screening.horizon_days, "Screening label horizon in days")->capture_default_str();
    train_cmd->add_option("--top-k", ta.tc.screening.top_k, "Screened risk factors to keep")->capture_default_str();
    train_cmd->add_option("--embed-dim", ta.mc.embed_dim, "Embedding dimension")->capture_default_str();
    train_cmd->add_option("--heads", ta.mc.heads, "Attention heads")->capture_default_str();
    train_cmd->add_option("--layers", ta.mc.layers, "Transformer layers")->capture_default_str();

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "Report AUC and concordance index");
    eval_cmd->add_option("--model", ea.model, "Model file")->required();
    eval_cmd->add_option("--cohort", ea.cohort, "Cohort directory")->required();
    eval_cmd->add_option("--horizon", ea.horizon, "Horizon in days for the AUC label")->capture_default_str();
    eval_cmd->add_option("--split", ea.split, "validation (held-out split recorded in the model) or all")
        ->capture_default_str()
        ->check(CLI::IsMember({"validation", "all"}));
    eval_cmd->add_option("--format", ea.format, "text or json")->capture_default_str()->check(CLI::IsMember({"text", "json"}));

    ExplainArgs xa;
    auto* explain_cmd = app.add_subcommand("explain", "Score a patient and print the explanation report");
    explain_cmd->add_option("--model", xa.model, "Model file")->required();
    explain_cmd->add_option("--cohort", xa.cohort, "Cohort directory holding the patient")->required();
    explain_cmd->add_option("--patient", xa.patient, "Patient id")->required();
    explain_cmd->add_option("--date", xa.date, "Assessment date YYYY-MM-DD")->required();
    explain_cmd->add_option("--config", xa.config, "explain_config.json (default: built-in thresholds)");
    explain_cmd->add_option("--data", xa.data, "Store directory to persist the assessment in");
    explain_cmd->add_option("--format", xa.format, "text or json")->capture_default_str()->check(CLI::IsMember({"text", "json"}));

    ServeArgs va;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API until interrupted");
    serve_cmd->add_option("--config", va.config, "Service config JSON")->required();
    serve_cmd->add_option("--port", va.port, "Override the configured port");

    ReportArgs ra;
    auto* report_cmd = app.add_subcommand("report", "Print the daily summary for a patient");
    report_cmd->add_option("--data", ra.data, "Store directory")->required();
    report_cmd->add_option("--patient", ra.patient, "Patient id")->required();
    report_cmd->add_option("--date", ra.date, "Date YYYY-MM-DD")->required();
    report_cmd->add_option("--policy", ra.policy_file, "Alert policy JSON (default: built-in policy)");
    report_cmd->add_flag("--save", ra.save, "Store the built summary");
    report_cmd->add_option("--format", ra.format, "text or json")->capture_default_str()->check(CLI::IsMember({"text", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*sim_cmd) return run_simulate(sa);
        if (*train_cmd) return run_train(ta);
        if (*eval_cmd) return run_eval(ea);
        if (*explain_cmd) return run_explain(xa);
        if (*serve_cmd) return run_serve(va);
        if (*report_cmd) return run_report(ra);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
