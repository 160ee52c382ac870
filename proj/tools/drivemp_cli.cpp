// drivemp command-line front end.
//
//   drivemp synth     --out DIR [--traces N] [--minutes M] [--scene KIND]... [--no-noise]
//   drivemp segment   --input PATH [--bundle DIR] [--out FILE]
//   drivemp train     --input PATH --out DIR [model options]
//   drivemp predict   --bundle DIR (--query FILE | --trace FILE --t0 N) [--out FILE]
//   drivemp evaluate  --bundle DIR --input PATH [--out FILE]
//   drivemp sweep     --input PATH [--n1 1,3,27] [--n2 -1,0,1,2,3] [--n4 3,6,9] [--out FILE]
//   drivemp plotdata  --bundle DIR --trace FILE [--out FILE]
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or input error. Options may also come from
// a TOML file given with --config; command-line flags take precedence.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drivemp/drivemp.hpp"

namespace {

using namespace drivemp;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct InputOptions {
    std::string input;
    std::string exclusions;
    int smooth = 5;
};

struct ModelOptions {
    std::uint64_t seed = 1;
    double threshold_deg = 0.05;
    int min_len = 5;
    int n1 = 27;
    int n2 = 1;
    int n3 = 50;
    int n4 = 3;
    double cov_floor = 1e-6;
    std::size_t min_samples = 0;
    std::size_t stride = 1;
    int k_max = 6;

    TrainConfig train_config() const {
        TrainConfig c;
        c.mode = mode_from_value(n1);
        c.window.past = n2;
        c.window.future = n3;
        c.components = n4;
        c.min_samples = min_samples;
        c.stride = stride;
        c.segmentation = {threshold_deg, min_len};
        if (k_max < 1) throw InputError("--k-max must be >= 1");
        c.path_k_range.clear();
        for (int k = 1; k <= k_max; ++k) c.path_k_range.push_back(k);
        c.fit.seed = seed;
        c.fit.cov_floor = cov_floor;
        c.validate();
        return c;
    }
};

void add_input_options(CLI::App* sub, InputOptions& in, bool required = true) {
    auto* opt = sub->add_option("--input,-i", in.input, "trace CSV file or directory of trace CSVs");
    if (required) opt->required();
    sub->add_option("--exclusions", in.exclusions, "exclusion CSV (trace_id,start_s,end_s)");
    sub->add_option("--smooth", in.smooth, "moving-average window in samples (odd, 1 disables)")->capture_default_str();
}

void add_segmentation_options(CLI::App* sub, ModelOptions& m) {
    sub->add_option("--threshold-deg", m.threshold_deg, "segmentation threshold on |dtheta| (deg)")->capture_default_str();
    sub->add_option("--min-len", m.min_len, "shortest segment in samples")->capture_default_str();
    sub->add_option("--k-max", m.k_max, "largest path cluster count tried by BIC")->capture_default_str();
    sub->add_option("--seed", m.seed, "seed for fitting")->capture_default_str();
}

void add_model_options(CLI::App* sub, ModelOptions& m, bool scalar_grid) {
    add_segmentation_options(sub, m);
    if (scalar_grid) {
        sub->add_option("--n1", m.n1, "path-type grouping: 1, 3 or 27")->capture_default_str();
        sub->add_option("--n2", m.n2, "past steps (-1 drops the current steering)")->capture_default_str();
        sub->add_option("--n4", m.n4, "mixture components per motion primitive")->capture_default_str();
    }
    sub->add_option("--n3", m.n3, "prediction horizon in steps")->capture_default_str();
    sub->add_option("--cov-floor", m.cov_floor, "covariance floor relative to mean data variance")->capture_default_str();
    sub->add_option("--min-samples", m.min_samples, "windows needed to fit a group (0: 20 * dimension)")
        ->capture_default_str();
    sub->add_option("--stride", m.stride, "use every stride-th training window")->capture_default_str();
}

std::vector<DrivingTrace> load_input(const InputOptions& in, const MpWindowConfig& w) {
    const auto traces = load_traces(in.input);
    const ExclusionList ex = in.exclusions.empty() ? ExclusionList{} : load_exclusions(in.exclusions);
    PreprocessConfig pre;
    pre.smoothing_window = in.smooth;
    pre.min_length = static_cast<std::size_t>(w.span());
    auto out = preprocess(traces, ex, pre);
    if (out.empty()) throw InputError("no usable trace remains in '" + in.input + "'");
    return out;
}

DrivingTrace load_single(const std::string& path, int smooth) {
    PreprocessConfig pre;
    pre.smoothing_window = smooth;
    pre.min_length = 2;
    auto out = preprocess({load_csv(path)}, {}, pre);
    return std::move(out.front());
}

void emit(const std::string& path, const std::string& contents) {
    if (path.empty() || path == "-")
        std::cout << contents;
    else
        csv::write_file(path, contents);
}

std::optional<SceneKind> scene_from_string(const std::string& s) {
    for (auto k : {SceneKind::LowSpeedSharp, SceneKind::MediumSpeedGeneral, SceneKind::HighSpeedCorrection,
                   SceneKind::HighSpeedStraight})
        if (s == to_string(k)) return k;
    return std::nullopt;
}

nlohmann::json input_echo(const InputOptions& in) {
    return {{"input", in.input}, {"exclusions", in.exclusions}, {"smooth", in.smooth}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Driving motion primitives: learn steering behaviour from traces and predict it."};
    app.set_config("--config", "", "TOML file with option values (flags override it)");
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic driving corpus");
    std::string synth_out;
    std::uint64_t synth_seed = 1;
    ScenarioConfig scenario;
    std::vector<std::string> scenes;
    bool no_noise = false;
    synth->add_option("--out,-o", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
    synth->add_option("--traces", scenario.traces, "number of traces")->capture_default_str()->check(CLI::PositiveNumber);
    synth->add_option("--minutes", scenario.trace_minutes, "minutes per trace")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    synth->add_option("--scene", scenes,
                      "write a named scene instead of the corpus: low-speed-sharp, medium-speed-general, "
                      "high-speed-correction, high-speed-straight");
    synth->add_flag("--no-noise", no_noise, "noise-free driver and sensors");

    // segment
    auto* segment = app.add_subcommand("segment", "write the path segment report");
    InputOptions seg_in;
    ModelOptions seg_model;
    std::string seg_bundle, seg_out;
    add_input_options(segment, seg_in);
    add_segmentation_options(segment, seg_model);
    segment->add_option("--bundle", seg_bundle, "label with this bundle's path model instead of fitting one");
    segment->add_option("--out,-o", seg_out, "report CSV (default stdout)");

    // train
    auto* train = app.add_subcommand("train", "train a model bundle");
    InputOptions train_in;
    ModelOptions train_model;
    std::string train_out;
    add_input_options(train, train_in);
    add_model_options(train, train_model, true);
    train->add_option("--out,-o", train_out, "bundle directory")->required();

    // predict
    auto* predict = app.add_subcommand("predict", "predict the steering sequence for one query");
    std::string pred_bundle, pred_query, pred_trace, pred_out, pred_write_query;
    std::size_t pred_t0 = 0;
    int pred_smooth = 5;
    predict->add_option("--bundle,-b", pred_bundle, "bundle directory")->required();
    auto* q_opt = predict->add_option("--query,-q", pred_query, "query CSV (rel_step,dtheta_deg,v_kmh,delta_deg)");
    auto* t_opt = predict->add_option("--trace", pred_trace, "build the query from this trace CSV");
    predict->add_option("--t0", pred_t0, "current sample index within --trace")->needs(t_opt);
    predict->add_option("--smooth", pred_smooth, "moving-average window applied to --trace")->capture_default_str();
    predict->add_option("--write-query", pred_write_query, "also write the query built from --trace")->needs(t_opt);
    predict->add_option("--out,-o", pred_out, "result CSV (default stdout)");
    q_opt->excludes(t_opt);

    // evaluate
    auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a bundle on test traces");
    InputOptions eval_in;
    std::string eval_bundle, eval_out;
    std::size_t eval_stride = 1;
    add_input_options(evaluate_cmd, eval_in);
    evaluate_cmd->add_option("--bundle,-b", eval_bundle, "bundle directory")->required();
    evaluate_cmd->add_option("--eval-stride", eval_stride, "evaluate every n-th window")->capture_default_str();
    evaluate_cmd->add_option("--out,-o", eval_out, "report CSV (default stdout)");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate the n1 x n2 x n4 grid");
    InputOptions sweep_in;
    ModelOptions sweep_model;
    SweepConfig sweep_cfg;
    std::string sweep_out;
    add_input_options(sweep_cmd, sweep_in);
    add_model_options(sweep_cmd, sweep_model, false);
    sweep_cmd->add_option("--n1", sweep_cfg.n1, "grouping modes")->delimiter(',')->capture_default_str();
    sweep_cmd->add_option("--n2", sweep_cfg.n2, "past steps")->delimiter(',')->capture_default_str();
    sweep_cmd->add_option("--n4", sweep_cfg.n4, "mixture components")->delimiter(',')->capture_default_str();
    sweep_cmd->add_option("--test-fraction", sweep_cfg.test_fraction, "share of traces held out")->capture_default_str();
    sweep_cmd->add_option("--eval-stride", sweep_cfg.eval.stride, "evaluate every n-th window")->capture_default_str();
    sweep_cmd->add_flag("--timing", sweep_cfg.timing, "fill the train_s and eval_s columns");
    sweep_cmd->add_option("--out,-o", sweep_out, "report CSV (default stdout)");

    // plotdata
    auto* plot = app.add_subcommand("plotdata", "stitched predictions along one trace");
    std::string plot_bundle, plot_trace, plot_out;
    std::size_t plot_stride = 0;
    int plot_smooth = 5;
    plot->add_option("--bundle,-b", plot_bundle, "bundle directory")->required();
    plot->add_option("--trace", plot_trace, "trace CSV")->required();
    plot->add_option("--smooth", plot_smooth, "moving-average window applied to the trace")->capture_default_str();
    plot->add_option("--plot-stride", plot_stride, "samples between horizon starts (0: one horizon)");
    plot->add_option("--out,-o", plot_out, "plot CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*synth) {
            namespace fs = std::filesystem;
            scenario.noise = !no_noise;
            fs::create_directories(synth_out);
            std::vector<DrivingTrace> traces;
            if (scenes.empty()) {
                traces = synth_corpus(scenario, synth_seed);
            } else {
                for (std::size_t i = 0; i < scenes.size(); ++i) {
                    const auto kind = scene_from_string(scenes[i]);
                    if (!kind) throw InputError("unknown scene '" + scenes[i] + "'");
                    traces.push_back(synth_scene(*kind, scenario, detail::mix_seed(synth_seed, i)));
                }
            }
            for (const auto& t : traces) save_csv(t, (fs::path(synth_out) / (t.id + ".csv")).string());
            std::cerr << "wrote " << traces.size() << " traces to " << synth_out << "\n";
        } else if (*segment) {
            std::vector<LabeledTrace> labeled;
            int clusters = 1;
            if (!seg_bundle.empty()) {
                const auto bundle = load_bundle(seg_bundle);
                const auto traces = load_input(seg_in, {0, 1, kSampleStep});
                for (const auto& t : traces) {
                    labeled.push_back(segment_and_describe(t, bundle.segmentation));
                    label_trace(labeled.back(), bundle.path_model);
                }
                clusters = bundle.clusters();
            } else {
                const auto cfg = seg_model.train_config();
                auto traces = load_input(seg_in, {0, 1, kSampleStep});
                std::size_t total = 0;
                for (const auto& t : traces) total += segment_trace(t, cfg.segmentation).size();
                if (total < 2) {
                    // Nothing to cluster: every segment is its own single type.
                    for (const auto& t : traces) {
                        labeled.push_back(segment_and_describe(t, cfg.segmentation));
                        labeled.back().labels.assign(labeled.back().segments.size(), 1);
                        labeled.back().triples = build_triples(labeled.back().labels);
                    }
                } else {
                    auto pc = prepare_corpus(std::move(traces), cfg);
                    labeled = std::move(pc.labeled);
                    clusters = pc.clusters();
                }
            }
            emit(seg_out, segment_report_csv(labeled, clusters));
        } else if (*train) {
            const auto cfg = train_model.train_config();
            auto traces = load_input(train_in, cfg.window);
            const auto bundle = train_bundle(std::move(traces), cfg);
            save_bundle(bundle, train_out, {{"command", "train"}, {"ingest", input_echo(train_in)}});
            std::cerr << "trained " << bundle.all_models().size() << " models (" << bundle.clusters()
                      << " path clusters) into " << train_out << "\n";
        } else if (*predict) {
            const auto bundle = load_bundle(pred_bundle);
            PredictionQuery query;
            if (!pred_query.empty()) {
                query = load_query_csv(pred_query, bundle.window());
            } else if (!pred_trace.empty()) {
                const auto trace = load_single(pred_trace, pred_smooth);
                const TraceView tv(trace);
                query = query_from_trace(tv, pred_t0, bundle.window(),
                                         static_cast<std::size_t>(bundle.config.resolver_history));
                if (!pred_write_query.empty()) csv::write_file(pred_write_query, query_csv(query));
            } else {
                throw InputError("predict needs --query or --trace");
            }
            emit(pred_out, result_csv(predict_steering(bundle, query)));
        } else if (*evaluate_cmd) {
            const auto bundle = load_bundle(eval_bundle);
            const auto traces = load_input(eval_in, bundle.window());
            emit(eval_out, report_csv({evaluate(bundle, traces, {eval_stride})}));
        } else if (*sweep_cmd) {
            sweep_cfg.base = sweep_model.train_config();
            sweep_cfg.n3 = sweep_model.n3;
            sweep_cfg.seed = sweep_model.seed;
            MpWindowConfig widest{0, sweep_model.n3, kSampleStep};
            for (int p : sweep_cfg.n2) widest.past = std::max(widest.past, p);
            auto traces = load_input(sweep_in, widest);
            emit(sweep_out, report_csv(sweep(std::move(traces), sweep_cfg)));
        } else if (*plot) {
            const auto bundle = load_bundle(plot_bundle);
            const auto trace = load_single(plot_trace, plot_smooth);
            emit(plot_out, plot_csv(plot_data(bundle, trace, plot_stride)));
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
