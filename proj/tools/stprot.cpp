// stprot: command-line front end for the stprotein library.
//
// Subcommands: preprocess | train | predict | cluster | evaluate | synth |
// plot | sweep. Every command writes its outputs plus a run_manifest.json
// into --out. Config precedence is flags > config file (TOML) > defaults;
// STPROT_SEED serves as a seed fallback when --seed is not given.
// Exit codes: 0 success, 2 config/usage error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <stprotein/stprotein.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

using namespace stprotein;

namespace {

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

NamedMatrix named(Matrix values, std::vector<std::string> row_ids,
                  std::vector<std::string> col_names) {
    return NamedMatrix{std::move(row_ids), std::move(col_names), std::move(values)};
}

/// Column names for matrices that live in PCA space.
std::vector<std::string> component_names(Eigen::Index n) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) out.push_back("pc" + std::to_string(j + 1));
    return out;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    nlohmann::json config, std::vector<std::string> inputs,
                    std::vector<std::string> outputs, std::uint64_t seed, const Timer& timer) {
    RunManifest m;
    m.command = command;
    m.config = std::move(config);
    m.inputs = std::move(inputs);
    m.outputs = std::move(outputs);
    m.seed = seed;
    m.wall_seconds = timer.seconds();
    write_run_manifest(out_dir, m);
}

nlohmann::json pipeline_json(const PreprocessState& st) {
    std::vector<std::vector<double>> components(static_cast<std::size_t>(st.pca_components.rows()));
    for (Eigen::Index i = 0; i < st.pca_components.rows(); ++i) {
        components[static_cast<std::size_t>(i)].assign(
            st.pca_components.row(i).data(), st.pca_components.row(i).data() + st.pca_components.cols());
    }
    return nlohmann::json{
        {"transform_kind", to_string(st.transform_kind)},
        {"selected_gene_names", st.selected_gene_names},
        {"scale_factor", st.scale_factor},
        {"per_spot_scale", std::vector<double>(st.per_spot_scale.data(),
                                               st.per_spot_scale.data() + st.per_spot_scale.size())},
        {"pca_mean", std::vector<double>(st.pca_mean.data(), st.pca_mean.data() + st.pca_mean.size())},
        {"pca_components", components}};
}

/// Reorder rows of `m` to follow `ids`; the two id sets must be equal.
NamedMatrix align_to(const NamedMatrix& m, const std::vector<std::string>& ids,
                     const std::string& what) {
    if (m.row_ids.size() != ids.size())
        throw LengthMismatch(what + " has " + std::to_string(m.row_ids.size()) +
                             " rows, expected " + std::to_string(ids.size()));
    std::unordered_map<std::string, Eigen::Index> index;
    index.reserve(m.row_ids.size());
    for (std::size_t i = 0; i < m.row_ids.size(); ++i)
        index.emplace(m.row_ids[i], static_cast<Eigen::Index>(i));
    NamedMatrix out;
    out.row_ids = ids;
    out.col_names = m.col_names;
    out.values.resize(m.values.rows(), m.values.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto it = index.find(ids[i]);
        if (it == index.end()) throw DimensionMismatch("row '" + ids[i] + "' missing from " + what);
        out.values.row(static_cast<Eigen::Index>(i)) = m.values.row(it->second);
    }
    return out;
}

/// Reorder a (spot_id, label) list to follow `order`; id sets must be equal.
std::vector<std::string> align_labels(const std::vector<std::string>& ids,
                                      const std::vector<std::string>& labels,
                                      const std::vector<std::string>& order,
                                      const std::string& what) {
    if (ids.size() != order.size())
        throw LengthMismatch(what + " has " + std::to_string(ids.size()) + " labels, expected " +
                             std::to_string(order.size()));
    std::unordered_map<std::string, std::size_t> index;
    index.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
    std::vector<std::string> out;
    out.reserve(order.size());
    for (const auto& id : order) {
        auto it = index.find(id);
        if (it == index.end()) throw DimensionMismatch("spot '" + id + "' missing from " + what);
        out.push_back(labels[it->second]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shared training arguments (train + sweep).

struct TrainArgs {
    std::string rna, coords, protein, out;
    std::size_t n_hvg = 4000;
    std::string loss = "mtl";
    std::string graph = "knn";
    bool untied = false;
    TrainConfig cfg;
};

void add_data_options(CLI::App* cmd, TrainArgs& a, bool coords_required = true) {
    cmd->add_option("--rna", a.rna, "RNA counts (CSV or MatrixMarket)")->required();
    auto* c = cmd->add_option("--coords", a.coords, "spot coordinates CSV (spot_id,x,y)");
    if (coords_required) c->required();
    cmd->add_option("--protein", a.protein, "protein counts (CSV or MatrixMarket)");
    cmd->add_option("--n-hvg", a.n_hvg, "highly variable genes kept before PCA")
        ->capture_default_str();
}

void add_train_options(CLI::App* cmd, TrainArgs& a) {
    cmd->add_option("--lr", a.cfg.lr, "learning rate")->capture_default_str();
    cmd->add_option("--weight-decay", a.cfg.weight_decay, "decoupled weight decay")
        ->capture_default_str();
    cmd->add_option("--epochs", a.cfg.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--beta1", a.cfg.beta1_loss, "RNA reconstruction loss weight")
        ->capture_default_str();
    cmd->add_option("--beta2", a.cfg.beta2_loss, "protein embedding loss weight")
        ->capture_default_str();
    cmd->add_option("--heads", a.cfg.heads, "attention heads per layer")->capture_default_str();
    cmd->add_option("--f-h1", a.cfg.f_h1, "first hidden width")->capture_default_str();
    cmd->add_option("--f-h2", a.cfg.f_h2, "second hidden width")->capture_default_str();
    cmd->add_option("--k", a.cfg.k_neighbors, "KNN neighbor count")->capture_default_str();
    cmd->add_option("--graph", a.graph, "feature graph construction")
        ->check(CLI::IsMember({"knn", "spatial", "spatial_radius"}))
        ->capture_default_str();
    cmd->add_option("--radius", a.cfg.radius, "spatial graph radius")->capture_default_str();
    cmd->add_flag("--untied", a.untied, "give the decoder its own GAT weights");
    cmd->add_option("--seed", a.cfg.seed, "RNG seed")->envname("STPROT_SEED")
        ->capture_default_str();
    cmd->add_option("--log-every", a.cfg.log_every, "epochs between progress lines")
        ->capture_default_str();
    cmd->add_option("--patience", a.cfg.patience,
                    "stop after this many epochs without improvement (0 = off)")
        ->capture_default_str();
    cmd->add_option("--loss", a.loss, "loss mode")
        ->check(CLI::IsMember({"mtl", "rna-only", "protein-only"}))
        ->capture_default_str();
}

/// Fold the string-typed flags into the numeric config.
TrainConfig resolve_config(const TrainArgs& a) {
    TrainConfig cfg = a.cfg;
    cfg.graph_kind = graph_kind_from_string(a.graph);
    cfg.tied = !a.untied;
    if (a.loss == "rna-only")
        cfg.beta2_loss = 0.0;
    else if (a.loss == "protein-only")
        cfg.beta1_loss = 0.0;
    return cfg;
}

nlohmann::json train_config_json(const TrainArgs& a, const TrainConfig& cfg) {
    nlohmann::json j = cfg;
    j["n_hvg"] = a.n_hvg;
    j["loss"] = a.loss;
    return j;
}

SpatialOmicsDataset load_training_data(const TrainArgs& a, const std::string& command) {
    if (a.protein.empty())
        throw ConfigError("ProteinMissing: " + command +
                          " needs --protein to build the training pair");
    return load_dataset(a.rna, a.coords, a.protein);
}

FeatureGraph build_graph(const TrainConfig& cfg, const Matrix& x, const Matrix& coords) {
    return cfg.graph_kind == GraphKind::knn ? build_knn_graph(x, cfg.k_neighbors)
                                            : build_spatial_graph(coords, cfg.radius);
}

// ---------------------------------------------------------------------------
// Commands.

void run_preprocess(const TrainArgs& a) {
    Timer timer;
    const SpatialOmicsDataset raw = load_training_data(a, "preprocess");
    const ProcessedDataset ds = preprocess_training_pair(raw, a.n_hvg);
    std::filesystem::create_directories(a.out);

    const std::string x_path = join_path(a.out, "x.csv");
    const std::string y_path = join_path(a.out, "y.csv");
    const std::string pipe_path = join_path(a.out, "pipelines.json");
    save_matrix_csv(x_path, named(ds.x, ds.spot_ids, component_names(ds.x.cols())));
    save_matrix_csv(y_path, named(*ds.y, ds.spot_ids, component_names(ds.y->cols())));
    const nlohmann::json pipes{{"rna_pipeline", pipeline_json(ds.rna_pipeline)},
                               {"protein_pipeline", pipeline_json(*ds.protein_pipeline)}};
    csv::write_file_atomic(pipe_path, pipes.dump(2) + "\n");

    write_manifest(a.out, "preprocess",
                   nlohmann::json{{"n_hvg", a.n_hvg}},
                   {a.rna, a.coords, a.protein}, {"x.csv", "y.csv", "pipelines.json"}, 0, timer);
    std::cout << "preprocess: x " << ds.x.rows() << "x" << ds.x.cols() << ", y " << ds.y->rows()
              << "x" << ds.y->cols() << " -> " << a.out << "\n";
}

void run_train(const TrainArgs& a, bool export_graph) {
    Timer timer;
    const TrainConfig cfg = resolve_config(a);
    validate(cfg);
    const SpatialOmicsDataset raw = load_training_data(a, "train");
    const ProcessedDataset ds = preprocess_training_pair(raw, a.n_hvg);
    const FeatureGraph g = build_graph(cfg, ds.x, raw.coords);
    std::filesystem::create_directories(a.out);

    const auto [params, log] = train(ds, g, cfg, [&](const TrainLogRow& row) {
        if (cfg.log_every > 0 && (row.epoch % cfg.log_every == 0 || row.epoch == cfg.epochs))
            std::cerr << "epoch " << row.epoch << " total " << row.total << " rna " << row.l_rna
                      << " protein " << row.l_protein << "\n";
    });

    const std::string ckpt_path = join_path(a.out, "checkpoint.stpk");
    const std::string log_path = join_path(a.out, "trainlog.csv");
    save_checkpoint(ckpt_path, params, cfg, ds.rna_pipeline, *ds.protein_pipeline);
    save_trainlog_csv(log_path, log);
    std::vector<std::string> outputs{"checkpoint.stpk", "trainlog.csv"};
    if (export_graph) {
        save_graph_csv(join_path(a.out, "graph.csv"), g);
        outputs.push_back("graph.csv");
    }

    write_manifest(a.out, "train", train_config_json(a, cfg), {a.rna, a.coords, a.protein},
                   outputs, cfg.seed, timer);
    std::cout << "train: " << log.size() << " epochs, final total loss " << log.back().total
              << " -> " << ckpt_path << "\n";
}

void run_predict(const std::string& checkpoint, const std::string& rna, const std::string& coords,
                 const std::string& out, bool pca_out) {
    Timer timer;
    const CheckpointData ckpt = load_checkpoint(checkpoint);
    const SpatialOmicsDataset ds_new = load_dataset(rna, coords);
    Matrix z;
    const Matrix clr = predict(ckpt.params, ckpt.rna_pipeline, ckpt.protein_pipeline, ds_new,
                               ckpt.config, &z);
    std::filesystem::create_directories(out);

    const std::string clr_path = join_path(out, "protein_clr.csv");
    save_matrix_csv(clr_path,
                    named(clr, ds_new.spot_ids, ckpt.protein_pipeline.selected_gene_names));
    std::vector<std::string> outputs{"protein_clr.csv"};
    if (pca_out) {
        save_matrix_csv(join_path(out, "protein_pca.csv"),
                        named(z, ds_new.spot_ids, component_names(z.cols())));
        outputs.push_back("protein_pca.csv");
    }

    write_manifest(out, "predict", nlohmann::json(ckpt.config), {checkpoint, rna, coords},
                   outputs, ckpt.config.seed, timer);
    std::cout << "predict: " << clr.rows() << " spots x " << clr.cols() << " proteins -> "
              << clr_path << "\n";
}

void run_cluster(const std::string& input, std::size_t k, const std::string& truth,
                 std::uint64_t seed, const std::string& out) {
    Timer timer;
    const NamedMatrix m = load_named_matrix(input);
    if (k == 0) {
        if (truth.empty())
            throw ConfigError("cluster: pass --k, or --truth to infer the cluster count");
        const auto [ids, labels] = load_labels_csv(truth);
        k = std::set<std::string>(labels.begin(), labels.end()).size();
    }
    const GmmModel model = fit_gmm(m.values, k, seed);
    const std::vector<int> labels = assign(model, m.values);
    std::filesystem::create_directories(out);

    const std::string labels_path = join_path(out, "labels.csv");
    save_labels_csv(labels_path, m.row_ids, labels);

    std::vector<std::string> inputs{input};
    if (!truth.empty()) inputs.push_back(truth);
    write_manifest(out, "cluster",
                   nlohmann::json{{"k", k}, {"seed", seed}},
                   inputs, {"labels.csv"}, seed, timer);
    std::cout << "cluster: " << m.values.rows() << " spots into " << k
              << " clusters, final log-likelihood " << model.log_likelihood_trace.back() << " -> "
              << labels_path << "\n";
}

void run_evaluate(const std::string& pred, const std::string& truth_matrix,
                  const std::string& pred_labels, const std::string& truth_labels, bool percent,
                  const std::string& out) {
    Timer timer;
    if (pred.empty() != truth_matrix.empty())
        throw ConfigError("evaluate: --pred and --truth-matrix go together");
    if (pred_labels.empty() != truth_labels.empty())
        throw ConfigError("evaluate: --pred-labels and --truth-labels go together");
    if (pred.empty() && pred_labels.empty())
        throw ConfigError("evaluate: nothing to evaluate; pass a matrix pair, a label pair, or both");

    std::optional<std::pair<Matrix, Matrix>> matrices;
    if (!pred.empty()) {
        const NamedMatrix yt = load_named_matrix(truth_matrix);
        const NamedMatrix yp = align_to(load_named_matrix(pred), yt.row_ids, pred);
        matrices.emplace(yt.values, yp.values);
    }
    std::optional<LabelPair> labels;
    if (!pred_labels.empty()) {
        const auto [tids, tlabs] = load_labels_csv(truth_labels);
        const auto [pids, plabs] = load_labels_csv(pred_labels);
        labels.emplace(tlabs, align_labels(pids, plabs, tids, pred_labels));
    }

    EvalReport r = evaluate(matrices, labels);
    if (percent) {
        const auto scale = [](std::optional<double>& v) { if (v) *v *= 100.0; };
        scale(r.nmi); scale(r.ami); scale(r.fmi); scale(r.ari);
        scale(r.v_measure); scale(r.f1); scale(r.jaccard);
    }

    nlohmann::json j;
    const std::vector<std::pair<std::string, const std::optional<double>*>> fields{
        {"rmse", &r.rmse}, {"nmi", &r.nmi},       {"ami", &r.ami},
        {"fmi", &r.fmi},   {"ari", &r.ari},       {"v_measure", &r.v_measure},
        {"f1", &r.f1},     {"jaccard", &r.jaccard}};
    std::string header, row;
    for (const auto& [name, value] : fields) {
        if (*value) j[name] = **value;
        if (!header.empty()) { header += ","; row += ","; }
        header += name;
        if (*value) row += csv::format_double(**value);
    }
    j["percent"] = percent;

    std::filesystem::create_directories(out);
    csv::write_file_atomic(join_path(out, "report.json"), j.dump(2) + "\n");
    csv::write_file_atomic(join_path(out, "report.csv"), header + "\n" + row + "\n");

    std::vector<std::string> inputs;
    for (const auto& p : {pred, truth_matrix, pred_labels, truth_labels})
        if (!p.empty()) inputs.push_back(p);
    write_manifest(out, "evaluate", nlohmann::json{{"percent", percent}}, inputs,
                   {"report.json", "report.csv"}, 0, timer);
    std::cout << j.dump(2) << "\n";
}

void run_synth(std::size_t n, std::size_t genes, std::size_t proteins, std::size_t domains,
               double noise, std::uint64_t seed, const std::string& out) {
    Timer timer;
    const SynthResult synth = synth_dataset(n, genes, proteins, domains, noise, seed);
    std::filesystem::create_directories(out);
    save_synth(out, synth);
    write_manifest(out, "synth",
                   nlohmann::json{{"n", n},
                                  {"genes", genes},
                                  {"proteins", proteins},
                                  {"domains", domains},
                                  {"noise", noise},
                                  {"seed", seed}},
                   {}, {"rna.csv", "coords.csv", "protein.csv", "labels.csv"}, seed, timer);
    std::cout << "synth: " << n << " spots, " << genes << " genes, " << proteins
              << " proteins, " << domains << " domains -> " << out << "\n";
}

void run_plot(const std::string& coords_path, const std::string& labels_path,
              const std::string& matrix_path, const std::string& column, std::string title,
              const std::string& out) {
    Timer timer;
    if (labels_path.empty() == matrix_path.empty())
        throw ConfigError("plot: pass exactly one of --labels or --matrix");

    const NamedMatrix coords = load_matrix_csv(coords_path);
    if (coords.col_names != std::vector<std::string>{"x", "y"})
        throw ParseError(coords_path + ": expected header spot_id,x,y");

    std::string svg;
    std::vector<std::string> inputs{coords_path};
    if (!labels_path.empty()) {
        const auto [ids, labs] = load_labels_csv(labels_path);
        if (title.empty()) title = "labels";
        svg = svg::scatter_categorical(coords.values,
                                       align_labels(ids, labs, coords.row_ids, labels_path), title);
        inputs.push_back(labels_path);
    } else {
        const NamedMatrix m = align_to(load_named_matrix(matrix_path), coords.row_ids, matrix_path);
        const auto it = std::find(m.col_names.begin(), m.col_names.end(), column);
        if (it == m.col_names.end())
            throw ConfigError("plot: column '" + column + "' not found in " + matrix_path);
        const Eigen::Index c = it - m.col_names.begin();
        if (title.empty()) title = column;
        svg = svg::scatter_continuous(coords.values, m.values.col(c), title);
        inputs.push_back(matrix_path);
    }

    std::filesystem::create_directories(out);
    csv::write_file_atomic(join_path(out, "plot.svg"), svg);
    write_manifest(out, "plot", nlohmann::json{{"column", column}, {"title", title}}, inputs,
                   {"plot.svg"}, 0, timer);
    std::cout << "plot: -> " << join_path(out, "plot.svg") << "\n";
}

/// One sweep cell: the config override plus the measured objective.
struct SweepCell {
    TrainConfig cfg;
    double rmse_value = 0.0;
};

/// Parse "lo..hi" (integers, inclusive); lo > hi yields an empty range.
std::vector<double> parse_range(const std::string& s, const std::string& what) {
    const auto dots = s.find("..");
    if (dots == std::string::npos)
        throw ConfigError("sweep: " + what + " must look like lo..hi, got '" + s + "'");
    long lo = 0, hi = 0;
    try {
        lo = std::stol(s.substr(0, dots));
        hi = std::stol(s.substr(dots + 2));
    } catch (const std::exception&) {
        throw ConfigError("sweep: " + what + " must look like lo..hi, got '" + s + "'");
    }
    std::vector<double> out;
    for (long v = lo; v <= hi; ++v) out.push_back(static_cast<double>(v));
    return out;
}

void run_sweep(const TrainArgs& a, const std::string& param, const std::vector<std::size_t>& values,
               const std::string& grid, std::size_t jobs) {
    Timer timer;
    const TrainConfig base = resolve_config(a);
    validate(base);

    std::vector<SweepCell> cells;
    if (param == "k") {
        if (values.empty()) throw ConfigError("sweep: --param k needs a non-empty --values list");
        for (std::size_t k : values) {
            SweepCell c{base, 0.0};
            c.cfg.k_neighbors = k;
            cells.push_back(std::move(c));
        }
    } else {
        if (grid.empty()) throw ConfigError("sweep: --param beta needs --grid lo..hi x lo..hi");
        const auto x = grid.find('x');
        if (x == std::string::npos)
            throw ConfigError("sweep: --grid must look like 1..5x1..5, got '" + grid + "'");
        const std::vector<double> b1 = parse_range(grid.substr(0, x), "--grid beta1 range");
        const std::vector<double> b2 = parse_range(grid.substr(x + 1), "--grid beta2 range");
        for (double v1 : b1)
            for (double v2 : b2) {
                SweepCell c{base, 0.0};
                c.cfg.beta1_loss = v1;
                c.cfg.beta2_loss = v2;
                cells.push_back(std::move(c));
            }
        if (cells.empty()) throw ConfigError("sweep: --grid '" + grid + "' is empty");
    }
    for (const auto& c : cells) validate(c.cfg);

    const SpatialOmicsDataset raw = load_training_data(a, "sweep");
    const ProcessedDataset ds = preprocess_training_pair(raw, a.n_hvg);

    // Cells are independent; workers pull the next index and write only their
    // own slot, so results land in grid order regardless of thread count.
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    const auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            try {
                SweepCell& c = cells[i];
                const FeatureGraph g = build_graph(c.cfg, ds.x, raw.coords);
                const auto [params, log] = train(ds, g, c.cfg);
                const EncodeTrace t = encode(params, ds.x, g);
                c.rmse_value = rmse(*ds.y, t.z);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, cells.size()));
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);

    std::string out_csv = param == "k" ? "k,rmse\n" : "beta1,beta2,rmse\n";
    for (const auto& c : cells) {
        if (param == "k")
            out_csv += std::to_string(c.cfg.k_neighbors) + "," + csv::format_double(c.rmse_value) + "\n";
        else
            out_csv += csv::format_double(c.cfg.beta1_loss) + "," +
                       csv::format_double(c.cfg.beta2_loss) + "," +
                       csv::format_double(c.rmse_value) + "\n";
    }
    std::filesystem::create_directories(a.out);
    const std::string sweep_path = join_path(a.out, "sweep.csv");
    csv::write_file_atomic(sweep_path, out_csv);

    nlohmann::json cfg_json = train_config_json(a, base);
    cfg_json["param"] = param;
    if (param == "k")
        cfg_json["values"] = values;
    else
        cfg_json["grid"] = grid;
    cfg_json["jobs"] = jobs;
    write_manifest(a.out, "sweep", cfg_json, {a.rna, a.coords, a.protein}, {"sweep.csv"},
                   base.seed, timer);
    std::cout << "sweep: " << cells.size() << " runs -> " << sweep_path << "\n";
}

/// Expand "--config <file>" on a subcommand into explicit option tokens before
/// parsing. Keys already present on the command line are skipped, so flags
/// outrank file values and file values outrank environment fallbacks and
/// built-in defaults.
std::vector<std::string> expand_config_file(CLI::App& app, int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty()) return args;
    CLI::App* sub = app.get_subcommand_no_throw(args[0]);
    if (sub == nullptr) return args;

    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return args;

    const auto given = [&](const std::string& name) {
        const std::string eq = name + "=";
        for (std::size_t i = 1; i < args.size(); ++i)
            if (args[i] == name || args[i].rfind(eq, 0) == 0) return true;
        return false;
    };

    std::vector<CLI::ConfigItem> items;
    try {
        items = sub->get_config_formatter()->from_file(path);
    } catch (const CLI::Error& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
    for (const auto& item : items) {
        if (!item.parents.empty())
            throw ConfigError("config: unsupported section in key '" + item.fullname() + "'");
        const std::string name = "--" + item.name;
        const CLI::Option* op = sub->get_option_no_throw(name);
        if (op == nullptr) throw ConfigError("config: unknown key '" + item.name + "'");
        if (given(name)) continue;
        if (op->get_expected_min() == 0) {
            if (item.inputs.empty() ||
                (item.inputs.size() == 1 && CLI::detail::to_flag_value(item.inputs.front()) >= 1))
                args.push_back(name);
        } else {
            args.push_back(name);
            for (const auto& v : item.inputs) args.push_back(v);
        }
    }
    return args;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string("stprot ") + kVersion +
                 ": spatial protein prediction from spatial RNA"};
    app.require_subcommand(1);

    // preprocess
    TrainArgs pre_args;
    CLI::App* c_pre = app.add_subcommand("preprocess", "fit the RNA and protein pipelines");
    add_data_options(c_pre, pre_args);
    c_pre->add_option("--out", pre_args.out, "output directory")->required();
    c_pre->set_config("--config", "", "TOML config file (flags override file values)");

    // train
    TrainArgs train_args;
    bool export_graph = false;
    CLI::App* c_train = app.add_subcommand("train", "train the autoencoder on a paired dataset");
    add_data_options(c_train, train_args);
    add_train_options(c_train, train_args);
    c_train->add_flag("--export-graph", export_graph, "also write the feature graph edge list");
    c_train->add_option("--out", train_args.out, "output directory")->required();
    c_train->set_config("--config", "", "TOML config file (flags override file values)");

    // predict
    std::string p_ckpt, p_rna, p_coords, p_out;
    bool p_pca_out = false;
    CLI::App* c_predict = app.add_subcommand("predict", "predict protein for an RNA-only dataset");
    c_predict->add_option("--checkpoint", p_ckpt, "trained .stpk checkpoint")->required();
    c_predict->add_option("--rna", p_rna, "RNA counts (CSV or MatrixMarket)")->required();
    c_predict->add_option("--coords", p_coords, "spot coordinates CSV (spot_id,x,y)")->required();
    c_predict->add_flag("--pca-out", p_pca_out, "also write the PCA-space embedding");
    c_predict->add_option("--out", p_out, "output directory")->required();
    c_predict->set_config("--config", "", "TOML config file (flags override file values)");

    // cluster
    std::string cl_input, cl_truth, cl_out;
    std::size_t cl_k = 0;
    std::uint64_t cl_seed = 0;
    CLI::App* c_cluster = app.add_subcommand("cluster", "GMM-cluster an embedding matrix");
    c_cluster->add_option("--input", cl_input, "matrix CSV to cluster (rows are spots)")->required();
    c_cluster->add_option("--k", cl_k, "number of clusters");
    c_cluster->add_option("--truth", cl_truth, "labels CSV whose distinct count sets k");
    c_cluster->add_option("--seed", cl_seed, "RNG seed")->envname("STPROT_SEED")
        ->capture_default_str();
    c_cluster->add_option("--out", cl_out, "output directory")->required();
    c_cluster->set_config("--config", "", "TOML config file (flags override file values)");

    // evaluate
    std::string e_pred, e_truth_matrix, e_pred_labels, e_truth_labels, e_out;
    bool e_percent = false;
    CLI::App* c_eval = app.add_subcommand("evaluate", "score predictions and/or clusterings");
    c_eval->add_option("--pred", e_pred, "predicted matrix CSV");
    c_eval->add_option("--truth-matrix", e_truth_matrix, "ground-truth matrix CSV");
    c_eval->add_option("--pred-labels", e_pred_labels, "predicted labels CSV");
    c_eval->add_option("--truth-labels", e_truth_labels, "ground-truth labels CSV");
    c_eval->add_flag("--percent", e_percent, "report clustering metrics as percentages");
    c_eval->add_option("--out", e_out, "output directory")->required();
    c_eval->set_config("--config", "", "TOML config file (flags override file values)");

    // synth
    std::size_t s_n = 500, s_genes = 1000, s_proteins = 10, s_domains = 3;
    double s_noise = 0.1;
    std::uint64_t s_seed = 0;
    std::string s_out;
    CLI::App* c_synth = app.add_subcommand("synth", "generate a synthetic paired dataset");
    c_synth->add_option("--n", s_n, "spots")->capture_default_str();
    c_synth->add_option("--genes", s_genes, "genes")->capture_default_str();
    c_synth->add_option("--proteins", s_proteins, "proteins")->capture_default_str();
    c_synth->add_option("--domains", s_domains, "spatial domains")->capture_default_str();
    c_synth->add_option("--noise", s_noise, "protein noise level")->capture_default_str();
    c_synth->add_option("--seed", s_seed, "RNG seed")->envname("STPROT_SEED")
        ->capture_default_str();
    c_synth->add_option("--out", s_out, "output directory")->required();
    c_synth->set_config("--config", "", "TOML config file (flags override file values)");

    // plot
    std::string pl_coords, pl_labels, pl_matrix, pl_column, pl_title, pl_out;
    CLI::App* c_plot = app.add_subcommand("plot", "emit an SVG scatter of the spots");
    c_plot->add_option("--coords", pl_coords, "spot coordinates CSV (spot_id,x,y)")->required();
    c_plot->add_option("--labels", pl_labels, "labels CSV for a categorical plot");
    c_plot->add_option("--matrix", pl_matrix, "matrix CSV for a continuous plot");
    c_plot->add_option("--column", pl_column, "column of --matrix to color by");
    c_plot->add_option("--title", pl_title, "plot title");
    c_plot->add_option("--out", pl_out, "output directory")->required();
    c_plot->set_config("--config", "", "TOML config file (flags override file values)");

    // sweep
    TrainArgs sweep_args;
    std::string sw_param, sw_grid;
    std::vector<std::size_t> sw_values;
    std::size_t sw_jobs = 1;
    CLI::App* c_sweep = app.add_subcommand("sweep", "train across a parameter grid");
    add_data_options(c_sweep, sweep_args);
    add_train_options(c_sweep, sweep_args);
    c_sweep->add_option("--param", sw_param, "swept parameter")
        ->check(CLI::IsMember({"k", "beta"}))
        ->required();
    c_sweep->add_option("--values", sw_values, "comma-separated k values")->delimiter(',');
    c_sweep->add_option("--grid", sw_grid, "beta grid, e.g. 1..5x1..5");
    c_sweep->add_option("--jobs", sw_jobs, "worker threads")->capture_default_str();
    c_sweep->add_option("--out", sweep_args.out, "output directory")->required();
    c_sweep->set_config("--config", "", "TOML config file (flags override file values)");

    std::vector<std::string> args;
    try {
        args = expand_config_file(app, argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    std::reverse(args.begin(), args.end());
    try {
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*c_pre) run_preprocess(pre_args);
        else if (*c_train) run_train(train_args, export_graph);
        else if (*c_predict) run_predict(p_ckpt, p_rna, p_coords, p_out, p_pca_out);
        else if (*c_cluster) run_cluster(cl_input, cl_k, cl_truth, cl_seed, cl_out);
        else if (*c_eval)
            run_evaluate(e_pred, e_truth_matrix, e_pred_labels, e_truth_labels, e_percent, e_out);
        else if (*c_synth) run_synth(s_n, s_genes, s_proteins, s_domains, s_noise, s_seed, s_out);
        else if (*c_plot) run_plot(pl_coords, pl_labels, pl_matrix, pl_column, pl_title, pl_out);
        else if (*c_sweep) run_sweep(sweep_args, sw_param, sw_values, sw_grid, sw_jobs);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
