// Command-line surface: simulate / train / eval / detect / rank / report.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "ndl/detector.hpp"
#include "ndl/errors.hpp"
#include "ndl/metrics.hpp"
#include "ndl/model.hpp"
#include "ndl/recording.hpp"
#include "ndl/rng.hpp"
#include "ndl/serialize.hpp"
#include "ndl/simgen.hpp"
#include "ndl/trainer.hpp"

namespace fs = std::filesystem;
using namespace ndl;

namespace {

// Seed precedence: explicit flag > NDL_SEED env > config file > 0.
// CLI11 applies config before env, so the env leg is resolved by hand.
struct SeedOption {
    std::uint64_t value = 0;
    bool on_cli = false;

    void add(CLI::App* cmd, int argc, char** argv) {
        cmd->add_option("--seed", value, "Random seed (env NDL_SEED when flag absent)");
        for (int i = 1; i < argc; ++i) {
            const std::string a = argv[i];
            if (a == "--seed" || a.rfind("--seed=", 0) == 0) on_cli = true;
        }
    }

    std::uint64_t resolve() const {
        if (on_cli) return value;
        if (const char* env = std::getenv("NDL_SEED")) {
            try {
                return std::stoull(env);
            } catch (const std::exception&) {
                throw ParameterError("NDL_SEED must be an unsigned integer");
            }
        }
        return value;  // config-file value or default
    }
};

std::vector<int> parse_width_list(const std::string& s) {
    std::vector<int> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stoi(tok));
    }
    if (out.empty()) throw ParameterError("width list must name at least one block");
    return out;
}

void require_exists(const std::string& path, const char* what) {
    if (!fs::exists(path)) {
        throw ParameterError(std::string(what) + " not found: '" + path + "'");
    }
}

void require_parent(const std::string& path, const char* what) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty() && !fs::exists(parent)) {
        throw ParameterError(std::string(what) + " directory does not exist: '" + parent.string() + "'");
    }
}

std::string metric_cell(double value, bool defined) {
    if (!defined) return "na";
    std::ostringstream os;
    os.precision(10);
    os << value;
    return os.str();
}

struct MaybeMae {
    bool present = false;
    double mae_alpha = 0.0;
    double mae_g = 0.0;
};

// MAE pair against the stored ground truth: alpha compared directly, the
// regression function compared at the model's own aggregation points.
MaybeMae compute_mae(const sim::SimDataset& ds, const NdlParams& params) {
    MaybeMae out;
    if (!ds.truth) return out;
    ModelEngine engine(params.hyper);
    engine.set_params(params);
    std::vector<Eigen::MatrixXd> alpha_true, alpha_est;
    std::vector<double> g_true, g_est;
    for (const auto& s : ds.samples) {
        const auto f = engine.forward(s.X, s.Z);
        alpha_true.push_back(s.alpha_star);
        alpha_est.push_back(f.alpha);
        const double lin = ds.truth->beta1.dot(f.S * ds.truth->beta2) + ds.truth->beta0;
        g_true.push_back(sigmoid(lin));
        g_est.push_back(f.prob);
    }
    out.present = true;
    out.mae_alpha = metrics::mae_alpha(alpha_true, alpha_est);
    out.mae_g = metrics::mae_g(g_true, g_est);
    return out;
}

void print_metrics_table(std::ostream& os, const EvalMetrics& m, const MaybeMae& mae) {
    os << "  sens      " << metric_cell(m.sensitivity, m.sensitivity_defined) << "\n";
    os << "  prec      " << metric_cell(m.precision, m.precision_defined) << "\n";
    os << "  spec      " << metric_cell(m.specificity, m.specificity_defined) << "\n";
    os << "  f1        " << metric_cell(m.f1, true) << "\n";
    os << "  prauc     " << metric_cell(m.prauc, m.prauc_defined) << "\n";
    os << "  auc       " << metric_cell(m.auc, m.auc_defined) << "\n";
    os << "  mae_alpha " << (mae.present ? metric_cell(mae.mae_alpha, true) : "na") << "\n";
    os << "  mae_g     " << (mae.present ? metric_cell(mae.mae_g, true) : "na") << "\n";
}

int cmd_simulate(const sim::SimConfig& cfg_in, std::uint64_t seed, const std::string& out) {
    sim::SimConfig cfg = cfg_in;
    cfg.seed = seed;
    sim::validate_sim_config(cfg);
    if (!cfg.base_source.empty()) require_exists(cfg.base_source, "base recording");
    require_parent(out, "output");

    Rng truth_rng(Rng::derive(cfg.seed, 0x7271));
    const auto truth = sim::build_truth(cfg, truth_rng);
    const auto ds = sim::sample_dataset(cfg, truth);
    sim::save_dataset(ds, out);

    std::int64_t positives = 0;
    for (const auto& s : ds.samples) positives += s.y;
    const double balance = 100.0 * static_cast<double>(positives) / static_cast<double>(ds.samples.size());
    std::cout << "simulate: n=" << ds.samples.size() << " d=" << cfg.d << " T=" << cfg.T << " p=" << cfg.p
              << " seed=" << cfg.seed << " positives=" << positives << " (" << balance << "%)\n"
              << "simulate: wrote " << out << " and " << out << ".truth\n";
    return 0;
}

int cmd_train(const std::string& data_path, const std::string& out, std::string history_path, TrainConfig tc,
              std::uint64_t seed, const Hyper& hyper_in, const std::string& resume) {
    require_exists(data_path, "dataset");
    require_parent(out, "model output");
    if (!resume.empty()) require_exists(resume, "resume checkpoint");
    tc.seed = seed;
    if (history_path.empty()) history_path = out + ".history.csv";

    const auto ds = sim::load_dataset(data_path);
    const auto labeled = sim::to_labeled(ds);

    NdlParams init;
    int start_epoch = 0;
    if (!resume.empty()) {
        init = load_model(resume);
        start_epoch = init.epochs_completed;
    } else {
        Hyper h = hyper_in;
        h.T = ds.T;
        h.p = ds.p;
        init = init_params(h, Rng::derive(tc.seed, 0x1417));
    }
    if (init.hyper.T != ds.T || init.hyper.p != ds.p) {
        throw DimensionError("train: model T/p does not match the dataset");
    }

    std::ostringstream digest;
    digest << "seed=" << tc.seed << ";epochs=" << tc.epochs << ";batch=" << tc.batch_size
           << ";lr=" << tc.learning_rate << ";val=" << tc.val_fraction;

    auto result = fit(labeled, tc, init, start_epoch);
    result.params.config_digest = digest.str();
    save_model(result.params, out);
    write_history_csv(result.history, history_path);

    const auto& last = result.history.epochs.back();
    std::cout << "train: epochs " << (start_epoch + 1) << ".." << last.epoch
              << " best_epoch=" << result.history.best_epoch << " best_val_loss=" << result.history.best_val_loss
              << "\n"
              << "train: final val_loss=" << last.val_loss
              << " auc=" << metric_cell(last.val.auc, last.val.auc_defined) << "\n"
              << "train: wrote " << out << ", " << out << ".bin, " << history_path << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path, double threshold,
             const std::string& out, const std::string& scores_out) {
    require_exists(model_path, "model");
    require_exists(data_path, "dataset");
    if (!out.empty()) require_parent(out, "report output");
    if (!scores_out.empty()) require_parent(scores_out, "scores output");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ParameterError("eval: threshold must be inside (0, 1)");

    const auto params = load_model(model_path);
    const auto ds = sim::load_dataset(data_path);
    if (params.hyper.T != ds.T || params.hyper.p != ds.p) {
        throw DimensionError("eval: model T/p does not match the dataset");
    }
    const auto labeled = sim::to_labeled(ds);
    const auto probs = predict_all(params, labeled);
    std::vector<metrics::ScoredLabel> scored;
    for (std::size_t i = 0; i < labeled.size(); ++i) scored.emplace_back(probs[i], labeled[i].y);
    const auto m = metrics_from_scores(scored, threshold);
    const auto mae = compute_mae(ds, params);

    std::cout << "eval: n=" << labeled.size() << " threshold=" << threshold << "\n";
    print_metrics_table(std::cout, m, mae);

    if (!out.empty()) {
        std::ofstream os(out, std::ios::trunc);
        if (!os) throw IoError("eval: cannot open '" + out + "'");
        os << "n,sens,prec,spec,f1,prauc,auc,mae_alpha,mae_g\n";
        os << labeled.size() << ',' << metric_cell(m.sensitivity, m.sensitivity_defined) << ','
           << metric_cell(m.precision, m.precision_defined) << ','
           << metric_cell(m.specificity, m.specificity_defined) << ',' << metric_cell(m.f1, true) << ','
           << metric_cell(m.prauc, m.prauc_defined) << ',' << metric_cell(m.auc, m.auc_defined) << ','
           << (mae.present ? metric_cell(mae.mae_alpha, true) : "na") << ','
           << (mae.present ? metric_cell(mae.mae_g, true) : "na") << '\n';
        std::cout << "eval: wrote " << out << "\n";
    }
    if (!scores_out.empty()) {
        std::ofstream os(scores_out, std::ios::trunc);
        if (!os) throw IoError("eval: cannot open '" + scores_out + "'");
        os.precision(17);
        os << "score,label\n";
        for (const auto& [s, y] : scored) os << s << ',' << y << '\n';
        std::cout << "eval: wrote " << scores_out << "\n";
    }
    return 0;
}

int cmd_detect(const std::string& recording_path, const std::string& model_path, double threshold, int stride,
               double eps, int min_pts, bool no_standardize, const std::string& out) {
    require_exists(recording_path, "recording");
    require_exists(model_path, "model");
    require_parent(out, "annotation output");

    const auto params = load_model(model_path);
    const auto recording = read_recording(recording_path);
    if (eps < 0.0) eps = static_cast<double>(params.hyper.T + params.hyper.p) / 2.0;

    const auto annotations =
        detect::annotate_recording(recording, params, threshold, stride, eps, min_pts, !no_standardize);

    std::ofstream os(out, std::ios::trunc);
    if (!os) throw IoError("detect: cannot open '" + out + "'");
    std::ostringstream note;
    note << "recording=" << fs::path(recording_path).filename().string()
         << " model=" << fs::path(model_path).filename().string() << " threshold=" << threshold
         << " stride=" << stride << " eps=" << eps;
    detect::write_annotations_jsonl(os, annotations, note.str());
    std::cout << "detect: " << annotations.size() << " annotation(s) -> " << out << "\n";
    return 0;
}

int cmd_rank(const std::string& model_path, const std::string& data_path, int top, const std::string& out) {
    require_exists(model_path, "model");
    require_exists(data_path, "dataset");
    require_parent(out, "rank output");

    const auto params = load_model(model_path);
    const auto ds = sim::load_dataset(data_path);
    if (params.hyper.T != ds.T || params.hyper.p != ds.p) {
        throw DimensionError("rank: model T/p does not match the dataset");
    }
    if (top < 1 || top > ds.d) throw ParameterError("rank: --top must be in [1, d]");

    ModelEngine engine(params.hyper);
    engine.set_params(params);

    const std::string segments_path = out + ".segments.csv";
    const std::string frequency_path = out + ".frequency.csv";
    std::ofstream seg(segments_path, std::ios::trunc);
    if (!seg) throw IoError("rank: cannot open '" + segments_path + "'");
    seg << "segment,rank,channel,importance\n";
    seg.precision(10);
    std::vector<std::int64_t> selected(static_cast<std::size_t>(ds.d), 0);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        const Eigen::VectorXd imp = channel_importance(compute_alpha(engine.omega(s.X)));
        const auto top_list = top_channels(imp, top);
        for (std::size_t r = 0; r < top_list.size(); ++r) {
            seg << i << ',' << (r + 1) << ',' << top_list[r].first << ',' << top_list[r].second << '\n';
            selected[static_cast<std::size_t>(top_list[r].first)]++;
        }
    }
    std::ofstream freq(frequency_path, std::ios::trunc);
    if (!freq) throw IoError("rank: cannot open '" + frequency_path + "'");
    freq << "channel,selected,frequency,random_baseline\n";
    freq.precision(10);
    const double baseline = static_cast<double>(top) / static_cast<double>(ds.d);
    for (int l = 0; l < ds.d; ++l) {
        freq << l << ',' << selected[static_cast<std::size_t>(l)] << ','
             << static_cast<double>(selected[static_cast<std::size_t>(l)]) / static_cast<double>(ds.samples.size())
             << ',' << baseline << '\n';
    }
    std::cout << "rank: top-" << top << " over " << ds.samples.size() << " segments -> " << segments_path << ", "
              << frequency_path << "\n";
    return 0;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("report: cannot open '" + path + "'");
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (first) {
            t.header = cells;
            first = false;
        } else {
            t.rows.push_back(cells);
        }
    }
    return t;
}

int find_column(const CsvTable& t, const std::string& name) {
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (t.header[i] == name) return static_cast<int>(i);
    }
    return -1;
}

int cmd_report(const std::string& history, const std::string& scores, const std::string& metrics_path,
               const std::string& out_dir) {
    if (history.empty() && scores.empty() && metrics_path.empty()) {
        throw ParameterError("report: give at least one of --history, --scores, --metrics");
    }
    fs::create_directories(out_dir);

    if (!history.empty()) {
        require_exists(history, "history csv");
        const auto t = read_csv(history);
        const int ep = find_column(t, "epoch");
        const int tr = find_column(t, "train_loss");
        const int vl = find_column(t, "val_loss");
        if (ep < 0 || tr < 0 || vl < 0) throw FormatError("report: history csv lacks expected columns");
        std::ofstream os(fs::path(out_dir) / "loss_curves.csv", std::ios::trunc);
        os << "epoch,train_loss,val_loss\n";
        for (const auto& row : t.rows) {
            os << row[static_cast<std::size_t>(ep)] << ',' << row[static_cast<std::size_t>(tr)] << ','
               << row[static_cast<std::size_t>(vl)] << '\n';
        }
        std::cout << "report: wrote " << (fs::path(out_dir) / "loss_curves.csv").string() << "\n";
    }

    if (!scores.empty()) {
        require_exists(scores, "scores csv");
        const auto t = read_csv(scores);
        const int sc = find_column(t, "score");
        const int lb = find_column(t, "label");
        if (sc < 0 || lb < 0) throw FormatError("report: scores csv lacks score/label columns");
        std::vector<metrics::ScoredLabel> scored;
        for (const auto& row : t.rows) {
            scored.emplace_back(std::stod(row[static_cast<std::size_t>(sc)]),
                                std::stoi(row[static_cast<std::size_t>(lb)]));
        }
        {
            const auto pts = metrics::roc_curve(scored);
            std::ofstream os(fs::path(out_dir) / "roc_points.csv", std::ios::trunc);
            os.precision(10);
            os << "fpr,tpr\n";
            for (const auto& [x, y] : pts) os << x << ',' << y << '\n';
        }
        {
            const auto pts = metrics::pr_curve(scored);
            std::ofstream os(fs::path(out_dir) / "pr_points.csv", std::ios::trunc);
            os.precision(10);
            os << "recall,precision\n";
            for (const auto& [x, y] : pts) os << x << ',' << y << '\n';
        }
        std::cout << "report: wrote roc_points.csv and pr_points.csv under " << out_dir << "\n";
    }

    if (!metrics_path.empty()) {
        require_exists(metrics_path, "metrics csv");
        const auto t = read_csv(metrics_path);
        const int nc = find_column(t, "n");
        const int ma = find_column(t, "mae_alpha");
        const int mg = find_column(t, "mae_g");
        if (nc < 0 || ma < 0 || mg < 0) throw FormatError("report: metrics csv lacks n/mae columns");
        std::map<std::int64_t, std::pair<std::vector<double>, std::vector<double>>> by_n;
        for (const auto& row : t.rows) {
            const auto& a = row[static_cast<std::size_t>(ma)];
            const auto& g = row[static_cast<std::size_t>(mg)];
            if (a == "na" || g == "na") continue;
            const auto n = std::stoll(row[static_cast<std::size_t>(nc)]);
            by_n[n].first.push_back(std::stod(a));
            by_n[n].second.push_back(std::stod(g));
        }
        std::ofstream os(fs::path(out_dir) / "mae_vs_n.csv", std::ios::trunc);
        os.precision(10);
        os << "n,repeats,mae_alpha_mean,mae_g_mean\n";
        for (const auto& [n, lists] : by_n) {
            double sa = 0.0, sg = 0.0;
            for (double v : lists.first) sa += v;
            for (double v : lists.second) sg += v;
            const double k = static_cast<double>(lists.first.size());
            os << n << ',' << lists.first.size() << ',' << sa / k << ',' << sg / k << '\n';
        }
        std::cout << "report: wrote " << (fs::path(out_dir) / "mae_vs_n.csv").string() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nested channel-attention spike detection toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key-value config file ([subcommand] sections)");
    app.allow_config_extras(false);

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Generate a labeled synthetic dataset with ground truth");
    sim::SimConfig sim_cfg;
    std::string sim_out;
    SeedOption sim_seed;
    sim_cmd->add_option("--n", sim_cfg.n, "Number of samples")->required();
    sim_cmd->add_option("--d", sim_cfg.d, "Channels")->capture_default_str();
    sim_cmd->add_option("--T", sim_cfg.T, "Segment length")->capture_default_str();
    sim_cmd->add_option("--p", sim_cfg.p, "Context length (even)")->capture_default_str();
    sim_cmd->add_option("--base", sim_cfg.base_source, "NDLR recording to draw base windows from");
    sim_cmd->add_option("--out", sim_out, "Output dataset path")->required();
    sim_seed.add(sim_cmd, argc, argv);

    // train
    auto* train_cmd = app.add_subcommand("train", "Fit the model on a dataset");
    std::string train_data, train_out, train_history, train_resume;
    std::string train_omega_widths = "16,32,64", train_g_widths = "16,32,64";
    TrainConfig train_cfg;
    int train_kernel = 3;
    SeedOption train_seed;
    train_cmd->add_option("--data", train_data, "Dataset path")->required();
    train_cmd->add_option("--out", train_out, "Model output path")->required();
    train_cmd->add_option("--history", train_history, "History CSV path (default <out>.history.csv)");
    train_cmd->add_option("--epochs", train_cfg.epochs, "Training epochs")->capture_default_str();
    train_cmd->add_option("--batch-size", train_cfg.batch_size, "Minibatch size")->capture_default_str();
    train_cmd->add_option("--lr", train_cfg.learning_rate, "Learning rate")->capture_default_str();
    train_cmd->add_option("--val-fraction", train_cfg.val_fraction, "Validation split fraction")->capture_default_str();
    train_cmd->add_option("--checkpoint-every", train_cfg.checkpoint_every, "Checkpoint period in epochs")->capture_default_str();
    train_cmd->add_option("--checkpoint-dir", train_cfg.checkpoint_dir, "Checkpoint directory");
    train_cmd->add_option("--threads", train_cfg.threads, "Worker threads (0 = hardware)")->capture_default_str();
    train_cmd->add_option("--resume", train_resume, "Checkpoint to resume from");
    train_cmd->add_option("--kernel", train_kernel, "Conv kernel size")->capture_default_str();
    train_cmd->add_option("--omega-widths", train_omega_widths, "Omega-net conv widths")->capture_default_str();
    train_cmd->add_option("--g-widths", train_g_widths, "G-net conv widths")->capture_default_str();
    train_seed.add(train_cmd, argc, argv);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score a dataset and report metrics");
    std::string eval_model, eval_data, eval_out, eval_scores;
    double eval_threshold = 0.5;
    eval_cmd->add_option("--model", eval_model, "Model path")->required();
    eval_cmd->add_option("--data", eval_data, "Dataset path")->required();
    eval_cmd->add_option("--threshold", eval_threshold, "Positive-class probability threshold")->capture_default_str();
    eval_cmd->add_option("--out", eval_out, "Metrics report CSV");
    eval_cmd->add_option("--scores-out", eval_scores, "Per-sample score CSV");

    // detect
    auto* det_cmd = app.add_subcommand("detect", "Annotate a continuous recording");
    std::string det_recording, det_model, det_out;
    double det_threshold = 0.5, det_eps = -1.0;
    int det_stride = 1, det_min_pts = 1;
    bool det_no_standardize = false;
    det_cmd->add_option("--recording", det_recording, "NDLR recording path")->required();
    det_cmd->add_option("--model", det_model, "Model path")->required();
    det_cmd->add_option("--threshold", det_threshold, "Candidate probability cutoff")->capture_default_str();
    det_cmd->add_option("--stride", det_stride, "Scan stride in samples")->capture_default_str();
    det_cmd->add_option("--eps", det_eps, "Dedup cluster radius in samples (default (T+p)/2)");
    det_cmd->add_option("--min-pts", det_min_pts, "DBSCAN min_pts")->capture_default_str();
    det_cmd->add_flag("--no-standardize", det_no_standardize, "Skip per-window standardization");
    det_cmd->add_option("--out", det_out, "Annotation JSONL path")->required();

    // rank
    auto* rank_cmd = app.add_subcommand("rank", "Per-segment top channels and selection frequencies");
    std::string rank_model, rank_data, rank_out;
    int rank_top = 1;
    rank_cmd->add_option("--model", rank_model, "Model path")->required();
    rank_cmd->add_option("--data", rank_data, "Dataset path")->required();
    rank_cmd->add_option("--top", rank_top, "Channels per segment")->capture_default_str();
    rank_cmd->add_option("--out", rank_out, "Output path stem")->required();

    // report
    auto* rep_cmd = app.add_subcommand("report", "Plot-ready data files from training artifacts");
    std::string rep_history, rep_scores, rep_metrics, rep_out = "report";
    rep_cmd->add_option("--history", rep_history, "History CSV from train");
    rep_cmd->add_option("--scores", rep_scores, "Score CSV from eval --scores-out");
    rep_cmd->add_option("--metrics", rep_metrics, "Metrics CSV rows from eval --out");
    rep_cmd->add_option("--out", rep_out, "Output directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(sim_cmd)) {
            return cmd_simulate(sim_cfg, sim_seed.resolve(), sim_out);
        }
        if (app.got_subcommand(train_cmd)) {
            Hyper h;
            h.kernel = train_kernel;
            h.omega_widths = parse_width_list(train_omega_widths);
            h.g_widths = parse_width_list(train_g_widths);
            return cmd_train(train_data, train_out, train_history, train_cfg, train_seed.resolve(), h,
                             train_resume);
        }
        if (app.got_subcommand(eval_cmd)) {
            return cmd_eval(eval_model, eval_data, eval_threshold, eval_out, eval_scores);
        }
        if (app.got_subcommand(det_cmd)) {
            return cmd_detect(det_recording, det_model, det_threshold, det_stride, det_eps, det_min_pts,
                              det_no_standardize, det_out);
        }
        if (app.got_subcommand(rank_cmd)) {
            return cmd_rank(rank_model, rank_data, rank_top, rank_out);
        }
        if (app.got_subcommand(rep_cmd)) {
            return cmd_report(rep_history, rep_scores, rep_metrics, rep_out);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
