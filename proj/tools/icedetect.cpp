// Command-line front end.
//
// Exit codes: 0 success, 2 I/O failure, 3 input format failure,
// 4 no icebergs to train on, 5 model file or schema problem, 6 bad configuration.

#include <icedetect/icedetect.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

enum Exit : int { kOk = 0, kIo = 2, kFormat = 3, kNoIcebergs = 4, kModel = 5, kConfig = 6 };

struct Failure {
    int code;
    std::string message;
};

struct Options {
    std::string input;
    std::string detections;
    std::string out;
    std::string model;
    std::string format = "csv";
    std::string export_format;
    std::string window;
    std::string aggregation = "longest";
    std::string vote = "any-correct";
    double dt = 0.3;
    int min_tranches = 3;
    int min_eval_chain = 3;
    std::size_t modes = 3;
    bool use_stdin = false;
    bool use_stdout = false;
    bool exclude_censored = false;

    // simulate
    ice::ScenarioConfig sim;
    std::size_t target_events = 0;
    bool no_header = false;
};

std::uint64_t fnv1a_file(const std::string& path, std::uintmax_t& bytes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Failure{kIo, "cannot read " + path};
    std::uint64_t h = 0xcbf29ce484222325ULL;
    std::vector<char> buf(1 << 16);
    bytes = 0;
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto n = static_cast<std::size_t>(in.gcount());
        bytes += n;
        for (std::size_t i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

nlohmann::json digest(const std::string& path) {
    std::uintmax_t bytes = 0;
    const auto h = fnv1a_file(path, bytes);
    return {{"path", path}, {"bytes", bytes}, {"fnv1a64", hex64(h)}};
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream o(p, std::ios::binary);
    if (!o) throw Failure{kIo, "cannot write " + p.string()};
    return o;
}

fs::path out_dir(const Options& o) {
    std::error_code ec;
    fs::create_directories(o.out, ec);
    if (ec) throw Failure{kIo, "cannot create " + o.out + ": " + ec.message()};
    return fs::path(o.out);
}

void write_run_json(const Options& o, const std::string& command, const std::vector<std::string>& args,
                    const std::vector<std::string>& inputs, nlohmann::json extra = {}) {
    if (o.out.empty()) return;
    nlohmann::json j;
    j["command"] = command;
    j["argv"] = args;
    j["config"] = {{"dt", o.dt},
                   {"min_tranches", o.min_tranches},
                   {"min_eval_chain", o.min_eval_chain},
                   {"modes", o.modes},
                   {"aggregation", o.aggregation},
                   {"vote", o.vote},
                   {"window", o.window},
                   {"include_censored", !o.exclude_censored},
                   {"format", o.format}};
    if (!extra.is_null()) j["config"].update(extra);
    auto in = nlohmann::json::array();
    for (const auto& p : inputs) in.push_back(p == "-" ? nlohmann::json{{"path", "stdin"}} : digest(p));
    j["inputs"] = std::move(in);
    auto f = open_out(out_dir(o) / "run.json");
    f << j.dump(1) << '\n';
}

ice::DetectorConfig detector_config(const Options& o) {
    ice::DetectorConfig c;
    c.dt_seconds = o.dt;
    c.min_tranches = o.min_tranches;
    c.min_eval_chain = o.min_eval_chain;
    try {
        c.validate();
    } catch (const std::exception& e) {
        throw Failure{kConfig, e.what()};
    }
    return c;
}

ice::Aggregation aggregation(const Options& o) {
    auto a = ice::parse_aggregation(o.aggregation);
    if (!a) throw Failure{kConfig, "unknown aggregation '" + o.aggregation + "'"};
    return *a;
}

/// [from, to) on time of day, "HH:MM:SS-HH:MM:SS"; empty means everything.
struct Window {
    std::int64_t from = 0, to = ice::Timestamp::kDayMs;
    bool contains(ice::Timestamp t) const {
        const std::int64_t tod = ((t.ms % ice::Timestamp::kDayMs) + ice::Timestamp::kDayMs) % ice::Timestamp::kDayMs;
        return tod >= from && tod < to;
    }
};

Window parse_window(const std::string& s) {
    if (s.empty()) return {};
    const auto dash = s.find('-');
    std::optional<std::int64_t> a, b;
    if (dash != std::string::npos) {
        a = ice::parse_time_of_day(s.substr(0, dash));
        b = ice::parse_time_of_day(s.substr(dash + 1));
    }
    if (!a || !b || *a >= *b) throw Failure{kConfig, "bad window '" + s + "', expected HH:MM:SS-HH:MM:SS"};
    return {*a, *b};
}

void check_format(const Options& o) {
    if (o.format != "csv") throw Failure{kConfig, "unsupported format '" + o.format + "'"};
}

/// Opens the log named by --input, or standard input.
std::unique_ptr<ice::EventStream> open_log(const Options& o) {
    if (o.use_stdin) return std::make_unique<ice::EventStream>(std::cin, "stdin");
    if (o.input.empty()) throw Failure{kConfig, "no input: give --input or --stdin"};
    if (!fs::exists(o.input)) throw Failure{kIo, "no such file: " + o.input};
    return std::make_unique<ice::EventStream>(ice::open_stream(o.input));
}

void report_ingest(const ice::EventStream& s) {
    if (s.rejected())
        std::cerr << s.description() << ": " << s.rejected() << " rejected line(s)";
    if (s.ordering_violations())
        std::cerr << (s.rejected() ? ", " : std::string(s.description()) + ": ") << s.ordering_violations()
                  << " time regression(s)";
    if (s.rejected() || s.ordering_violations()) std::cerr << '\n';
    std::size_t shown = 0;
    for (const auto& d : s.diagnostics()) {
        if (shown++ == 5) break;
        std::cerr << "  line " << d.line << ": " << d.message << '\n';
    }
}

ice::Detection run_detection(const Options& o, const ice::DetectionSink& sink = {}, bool keep = true) {
    auto stream = open_log(o);
    const auto cfg = detector_config(o);
    const Window w = parse_window(o.window);
    auto next = [&]() -> std::optional<ice::OrderEvent> {
        while (auto ev = stream->next())
            if (w.contains(ev->time)) return ev;
        return std::nullopt;
    };
    auto d = ice::detect_events(next, cfg, sink, keep);
    report_ingest(*stream);
    return d;
}

ice::SurvivalModel load_model_file(const Options& o) {
    if (o.model.empty()) throw Failure{kConfig, "--model is required"};
    std::ifstream in(o.model);
    if (!in) throw Failure{kIo, "cannot read model " + o.model};
    try {
        return ice::load_model(in);
    } catch (const ice::ModelError& e) {
        throw Failure{kModel, o.model + ": " + e.what()};
    }
}

// ---------------------------------------------------------------------------

int cmd_detect(const Options& o, const std::vector<std::string>& args) {
    check_format(o);
    ice::DetectionSink sink;
    if (o.use_stdout) {
        sink.native = [](const ice::NativeIceberg& n) { std::cout << ice::to_json(n).dump() << '\n'; };
        sink.tree = [](const ice::TrancheTree& t) { std::cout << ice::to_json(t).dump() << '\n'; };
    }
    const bool keep = !o.out.empty();
    auto d = run_detection(o, sink, keep);
    const auto summary = ice::summarize(d);
    if (keep) {
        const auto dir = out_dir(o);
        auto n = open_out(dir / "native.csv");
        ice::write_native_csv(d.natives, n);
        auto s = open_out(dir / "synthetic.csv");
        ice::write_synthetic_csv(d.trees, s);
        auto e = open_out(dir / "edges.csv");
        ice::write_edges_csv(d.trees, e);
        auto j = open_out(dir / "detections.jsonl");
        for (const auto& x : d.natives) j << ice::to_json(x).dump() << '\n';
        for (const auto& x : d.trees) j << ice::to_json(x).dump() << '\n';
        auto sm = open_out(dir / "summary.txt");
        ice::write_summary(summary, sm);
        write_run_json(o, "detect", args, {o.use_stdin ? "-" : o.input});
    }
    if (!o.use_stdout) ice::write_summary(summary, std::cout);
    else ice::write_summary(summary, std::cerr);
    return kOk;
}

int cmd_train(const Options& o, const std::vector<std::string>& args) {
    check_format(o);
    std::vector<ice::NativeIceberg> natives;
    std::vector<ice::TrancheTree> trees;
    std::string source;
    auto read_jsonl = [&](std::istream& in, const std::string& name) {
        try {
            ice::read_detections(in, natives, trees);
        } catch (const ice::DetectionFormatError& e) {
            throw Failure{kFormat, name + ": " + e.what()};
        }
    };
    if (!o.detections.empty()) {
        std::ifstream in(o.detections);
        if (!in) throw Failure{kIo, "cannot read " + o.detections};
        read_jsonl(in, o.detections);
        source = o.detections;
    } else if (o.use_stdin) {
        // Piped detections, or a raw log.
        const int c = std::cin.peek();
        if (c == '{') {
            read_jsonl(std::cin, "stdin");
        } else {
            auto d = run_detection(o);
            natives = std::move(d.natives);
            trees = std::move(d.trees);
        }
        source = "stdin";
    } else {
        auto d = run_detection(o);
        natives = std::move(d.natives);
        trees = std::move(d.trees);
        source = o.input;
    }
    if (natives.empty() && trees.empty()) throw Failure{kNoIcebergs, "no icebergs found; nothing to train"};

    ice::ModelConfig mc;
    mc.dt_seconds = o.dt;
    mc.min_tranches = o.min_tranches;
    mc.include_censored = !o.exclude_censored;
    mc.train_window = o.window;
    mc.source = source;
    std::size_t skipped = 0;
    const auto model = ice::train_model(natives, trees, mc, &skipped);
    if (skipped) std::cerr << skipped << " native iceberg(s) with an ambiguous peak left out\n";

    fs::path model_path = o.model;
    if (model_path.empty()) {
        if (o.out.empty()) throw Failure{kConfig, "give --model or --out"};
        model_path = out_dir(o) / "model.json";
    } else if (model_path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(model_path.parent_path(), ec);
    }
    {
        auto f = open_out(model_path);
        ice::save_model(model, f);
    }
    if (!o.export_format.empty()) {
        if (o.export_format != "csv") throw Failure{kConfig, "unsupported export '" + o.export_format + "'"};
        auto csv_path = model_path;
        csv_path.replace_extension(".csv");
        auto f = open_out(csv_path);
        ice::export_model_csv(model, f);
    }
    std::cout << "native peaks " << model.native.size() << ", synthetic peaks " << model.synthetic.size() << ", "
              << natives.size() << " native and " << trees.size() << " synthetic icebergs\n";
    std::vector<std::string> inputs;
    if (!o.detections.empty())
        inputs.push_back(o.detections);
    else
        inputs.push_back(o.use_stdin ? "-" : o.input);
    write_run_json(o, "train", args, inputs, {{"model", model_path.string()}});
    return kOk;
}

int cmd_predict(const Options& o, const std::vector<std::string>& args) {
    check_format(o);
    const auto model = load_model_file(o);
    const auto method = aggregation(o);
    auto d = run_detection(o);
    if (o.out.empty()) {
        ice::write_native_predictions_csv(d.natives, model.native, o.modes, std::cout);
        return kOk;
    }
    const auto dir = out_dir(o);
    auto n = open_out(dir / "predictions_native.csv");
    ice::write_native_predictions_csv(d.natives, model.native, o.modes, n);
    auto s = open_out(dir / "predictions_synthetic.csv");
    ice::write_synthetic_predictions_csv(d.trees, model.synthetic, method, s);
    write_run_json(o, "predict", args, {o.model, o.use_stdin ? "-" : o.input});
    return kOk;
}

int cmd_evaluate(const Options& o, const std::vector<std::string>& args) {
    check_format(o);
    const auto model = load_model_file(o);
    const auto cfg = detector_config(o);
    ice::NativeEvalConfig nc;
    nc.k = o.modes;
    if (o.vote == "any-correct")
        nc.vote = ice::ModeVote::AnyCorrect;
    else if (o.vote == "any-positive")
        nc.vote = ice::ModeVote::AnyPositive;
    else
        throw Failure{kConfig, "unknown vote '" + o.vote + "'"};
    auto d = run_detection(o);

    const auto native = ice::eval_native(d.natives, model.native, nc);
    std::vector<ice::PredictorResult> synthetic;
    for (auto m : {ice::Aggregation::All, ice::Aggregation::Unique, ice::Aggregation::Longest})
        synthetic.push_back(ice::eval_synthetic(d.trees, model.synthetic, m, cfg));
    std::vector<ice::PredictorResult> all(synthetic);
    all.insert(all.end(), native.begin(), native.end());

    std::ostringstream report;
    ice::write_text_report("Synthetic icebergs", synthetic, report);
    report << '\n';
    ice::write_text_report("Native icebergs", native, report);

    if (o.out.empty()) {
        std::cout << report.str();
        return kOk;
    }
    const auto dir = out_dir(o);
    auto m = open_out(dir / "metrics.csv");
    ice::write_metrics_csv(all, m);
    auto c = open_out(dir / "confusion.csv");
    ice::write_confusion_csv(all, c);
    auto r = open_out(dir / "report.txt");
    r << report.str();
    std::cout << report.str();
    write_run_json(o, "evaluate", args, {o.model, o.use_stdin ? "-" : o.input});
    return kOk;
}

int cmd_stats(const Options& o, const std::vector<std::string>& args) {
    check_format(o);
    auto d = run_detection(o);
    const auto tables = ice::tabulate(d);
    if (o.out.empty()) {
        ice::write_tables(tables, [&](const char* name) -> std::ostream& {
            std::cout << "# " << name << '\n';
            return std::cout;
        });
        return kOk;
    }
    const auto dir = out_dir(o);
    std::vector<std::unique_ptr<std::ofstream>> files;
    ice::write_tables(tables, [&](const char* name) -> std::ostream& {
        files.push_back(std::make_unique<std::ofstream>(open_out(dir / name)));
        return *files.back();
    });
    write_run_json(o, "stats", args, {o.use_stdin ? "-" : o.input});
    return kOk;
}

int cmd_simulate(const Options& o, const std::vector<std::string>& args) {
    try {
        o.sim.validate();
    } catch (const std::exception& e) {
        throw Failure{kConfig, e.what()};
    }
    if (o.out.empty() && !o.use_stdout) throw Failure{kConfig, "give --out or --stdout"};
    std::ostream* log = &std::cout;
    std::ofstream log_file, truth_file;
    if (!o.use_stdout) {
        const auto dir = out_dir(o);
        log_file = open_out(dir / "log.csv");
        log = &log_file;
    }
    if (!o.out.empty()) truth_file = open_out(out_dir(o) / "truth.csv");

    std::vector<ice::TruthRecord> truth;
    bool first = true;
    std::size_t written = 0;
    try {
        written = ice::generate_until(o.sim, o.target_events, [&](ice::Scenario&& sc, std::size_t chunk) {
            for (auto& t : sc.truth) {
                if (chunk) t.id += "." + std::to_string(chunk);
                truth.push_back(std::move(t));
            }
            ice::write_log(sc.events, *log, first && !o.no_header);
            first = false;
        });
    } catch (const ice::ConfigError& e) {
        throw Failure{kConfig, e.what()};
    }
    if (truth_file.is_open()) ice::write_truth(truth, truth_file);
    log->flush();
    if (!o.use_stdout)
        std::cout << written << " events, " << truth.size() << " embedded icebergs\n";
    write_run_json(o, "simulate", args, {},
                   {{"seed", o.sim.seed},
                    {"natives", o.sim.native_icebergs},
                    {"synthetics", o.sim.synthetic_icebergs},
                    {"decoys", o.sim.decoys},
                    {"cancel_prob", o.sim.cancel_prob},
                    {"aggression_prob", o.sim.aggression_prob},
                    {"simultaneous_delete_rate", o.sim.simultaneous_delete_rate},
                    {"dt_truth", o.sim.dt_truth},
                    {"delay_min_ms", o.sim.delay_min_ms},
                    {"delay_max_ms", o.sim.delay_max_ms},
                    {"events", o.target_events}});
    return kOk;
}

int run(const std::vector<std::string>& args);

/// Re-executes the command recorded in a run.json after checking that the
/// recorded inputs are unchanged.
int cmd_replay(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Failure{kIo, "cannot read " + path};
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw Failure{kFormat, path + ": " + e.what()};
    }
    for (const auto& i : j.value("inputs", nlohmann::json::array())) {
        if (!i.contains("fnv1a64")) continue;
        const auto p = i.at("path").get<std::string>();
        if (digest(p).at("fnv1a64") != i.at("fnv1a64"))
            throw Failure{kIo, p + " differs from the recorded input"};
    }
    return run(j.at("argv").get<std::vector<std::string>>());
}

void add_common(CLI::App* c, Options& o, bool detector) {
    c->add_option("-i,--input", o.input, "Order log (CSV)");
    c->add_flag("--stdin", o.use_stdin, "Read from standard input");
    c->add_option("-o,--out", o.out, "Output directory");
    c->add_option("--format", o.format, "Input format")->capture_default_str();
    if (!detector) return;
    c->add_option("--dt", o.dt, "Refill window in seconds")->capture_default_str();
    c->add_option("--min-tranches", o.min_tranches, "Minimum chain length to report")->capture_default_str();
    c->add_option("--min-eval-chain", o.min_eval_chain, "Minimum chain length to evaluate")->capture_default_str();
    c->add_option("--window", o.window, "Time-of-day window HH:MM:SS-HH:MM:SS");
}

int run(const std::vector<std::string>& args) {
    Options o;
    CLI::App app{"Iceberg order detection and total-volume prediction"};
    app.require_subcommand(1);

    auto* detect = app.add_subcommand("detect", "Detect native and synthetic icebergs");
    add_common(detect, o, true);
    detect->add_flag("--stdout", o.use_stdout, "Stream detections as JSON lines");

    auto* train = app.add_subcommand("train", "Fit total-volume distributions");
    add_common(train, o, true);
    train->add_option("--detections", o.detections, "JSON-lines detections instead of a log");
    train->add_option("--model", o.model, "Model file to write");
    train->add_option("--export", o.export_format, "Also export the model table (csv)");
    train->add_flag("--exclude-censored", o.exclude_censored, "Fit on complete icebergs only");

    auto* predict = app.add_subcommand("predict", "Predict totals along detected icebergs");
    add_common(predict, o, true);
    predict->add_option("--model", o.model, "Model file")->required();
    predict->add_option("--modes", o.modes, "Number of modes")->capture_default_str();
    predict->add_option("--aggregation", o.aggregation, "all|unique|longest")->capture_default_str();

    auto* evaluate = app.add_subcommand("evaluate", "Score predictions on a test log");
    add_common(evaluate, o, true);
    evaluate->add_option("--model", o.model, "Model file")->required();
    evaluate->add_option("--modes", o.modes, "Number of modes")->capture_default_str();
    evaluate->add_option("--vote", o.vote, "Mode-k rule: any-correct|any-positive")->capture_default_str();

    auto* stats = app.add_subcommand("stats", "Distribution tables for a log");
    add_common(stats, o, true);

    auto* sim = app.add_subcommand("simulate", "Generate a log with embedded icebergs");
    sim->add_option("-o,--out", o.out, "Output directory");
    sim->add_flag("--stdout", o.use_stdout, "Write the log to standard output");
    sim->add_flag("--no-header", o.no_header, "Omit the log header line");
    sim->add_option("--seed", o.sim.seed)->capture_default_str();
    sim->add_option("--natives", o.sim.native_icebergs)->capture_default_str();
    sim->add_option("--synthetics", o.sim.synthetic_icebergs)->capture_default_str();
    sim->add_option("--decoys", o.sim.decoys)->capture_default_str();
    sim->add_option("--peak-min", o.sim.peak_min)->capture_default_str();
    sim->add_option("--peak-max", o.sim.peak_max)->capture_default_str();
    sim->add_option("--tranches-min", o.sim.tranches_min)->capture_default_str();
    sim->add_option("--tranches-max", o.sim.tranches_max)->capture_default_str();
    sim->add_option("--cancel-prob", o.sim.cancel_prob)->capture_default_str();
    sim->add_option("--aggression-prob", o.sim.aggression_prob)->capture_default_str();
    sim->add_option("--partial-last-prob", o.sim.partial_last_prob)->capture_default_str();
    sim->add_option("--simultaneous-delete-rate", o.sim.simultaneous_delete_rate)->capture_default_str();
    sim->add_option("--dt-truth", o.sim.dt_truth)->capture_default_str();
    sim->add_option("--delay-min-ms", o.sim.delay_min_ms)->capture_default_str();
    sim->add_option("--delay-max-ms", o.sim.delay_max_ms)->capture_default_str();
    sim->add_option("--horizon-ms", o.sim.horizon_ms)->capture_default_str();
    sim->add_option("--events", o.target_events, "Repeat scenarios until this many events");

    std::string replay_path;
    auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a run.json");
    replay->add_option("run_json", replay_path)->required();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (*detect) return cmd_detect(o, args);
        if (*train) return cmd_train(o, args);
        if (*predict) return cmd_predict(o, args);
        if (*evaluate) return cmd_evaluate(o, args);
        if (*stats) return cmd_stats(o, args);
        if (*sim) return cmd_simulate(o, args);
        if (*replay) return cmd_replay(replay_path);
    } catch (const Failure& f) {
        std::cerr << "error: " << f.message << '\n';
        return f.code;
    } catch (const ice::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const ice::FormatMismatch& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFormat;
    } catch (const ice::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    std::ios::sync_with_stdio(false);
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args);
}
