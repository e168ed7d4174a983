#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ftsne/ftsne.hpp"
#include "ftsne/io.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_numeric = 3;

struct GenArgs {
    std::string kind;
    std::size_t m = 1000;
    std::uint64_t seed = 0;
    double noise = 0;
    double separation = 10;
    double stddev = 1;
    std::string out = "-";
};

int run_gen(const GenArgs& args) {
    ftsne::Dataset data;
    if (args.kind == "swiss_roll") {
        data = ftsne::swiss_roll(args.m, args.noise, args.seed);
    } else {
        data = ftsne::gaussian_blobs(args.m, args.separation, args.stddev, args.seed);
    }

    if (args.out == "-") {
        std::vector<std::string> header;
        for (std::size_t c = 0; c < data.dimension(); ++c) {
            header.push_back("f" + std::to_string(c));
        }
        header.push_back("label");
        ftsne::Matrix body(data.size(), data.dimension() + 1);
        for (std::size_t r = 0; r < data.size(); ++r) {
            for (std::size_t c = 0; c < data.dimension(); ++c) {
                body(r, c) = data.points(r, c);
            }
            body(r, data.dimension()) = (*data.labels)(r, 0);
        }
        ftsne::write_table(std::cout, header, body);
    } else {
        ftsne::write_dataset(args.out, data);
    }
    return exit_ok;
}

struct EmbedArgs {
    std::string config_path;
    std::string dump_config;
    std::string summary_path;
    std::string exaggeration;
    ftsne::RunConfig flags;
};

// Parses "F:E" into an exaggeration factor and epoch count.
void apply_exaggeration(const std::string& spec, ftsne::RunConfig& config) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) {
        throw ftsne::ParameterError("--exaggeration expects FACTOR:EPOCHS");
    }
    try {
        std::size_t used = 0;
        config.exaggeration = std::stod(spec.substr(0, colon), &used);
        if (used != colon) {
            throw std::invalid_argument("factor");
        }
        const std::string epochs = spec.substr(colon + 1);
        config.exaggeration_epochs = std::stoul(epochs, &used);
        if (used != epochs.size()) {
            throw std::invalid_argument("epochs");
        }
    } catch (const std::logic_error&) {
        throw ftsne::ParameterError("--exaggeration expects FACTOR:EPOCHS");
    }
}

int run_embed(const EmbedArgs& args, const CLI::App& cmd) {
    // Precedence: flags > config file > defaults.
    ftsne::RunConfig config;
    if (!args.config_path.empty()) {
        config = ftsne::read_run_config(args.config_path);
    }

    const nlohmann::json flag_values = ftsne::to_json(args.flags);
    nlohmann::json overrides = nlohmann::json::object();
    for (const auto* opt : cmd.get_options()) {
        if (opt->count() == 0) {
            continue;
        }
        std::string key = opt->get_single_name();
        std::replace(key.begin(), key.end(), '-', '_');
        if (flag_values.contains(key)) {
            overrides[key] = flag_values[key];
        }
    }
    config = ftsne::run_config_from_json(overrides, config);
    if (!args.exaggeration.empty()) {
        apply_exaggeration(args.exaggeration, config);
    }
    config.validate();

    if (!args.dump_config.empty()) {
        std::ofstream out(args.dump_config);
        out << ftsne::to_json(config).dump(2) << '\n';
    }
    if (config.input.empty()) {
        throw ftsne::ParameterError("no input dataset given (--input)");
    }

    const auto data = ftsne::read_dataset(config.input);
    const auto div = ftsne::parse_divergence(config.divergence);
    const auto cond = ftsne::conditional_affinities(data, config.perplexity);
    auto p = ftsne::symmetrize(cond);
    if (config.affinity_floor > 0) {
        p = ftsne::floor_affinities(p, config.affinity_floor);
    }

    ftsne::Matrix coords;
    double final_loss = 0;
    if (config.optimizer == "primal") {
        const auto result = ftsne::run_primal(div, p, config.schedule(), config.dim, config.primal_options());
        if (!config.output_trace.empty()) {
            ftsne::write_primal_trace(config.output_trace, result.trace);
        }
        if (result.clip_events > 0) {
            std::cerr << "gradient clipping events: " << result.clip_events << '\n';
        }
        coords = result.embedding.coords;
        final_loss = result.final_loss;
    } else {
        const auto result = ftsne::run_variational(div, p, data, config.minimax(), config.dim);
        if (!config.output_trace.empty()) {
            ftsne::write_variational_trace(config.output_trace, result.trace);
        }
        coords = result.embedding.coords;
        final_loss = result.final_loss;
    }

    if (!config.output_embedding.empty()) {
        ftsne::write_embedding(config.output_embedding, coords, data.labels);
    }
    if (!args.summary_path.empty()) {
        nlohmann::json summary{
            { "config", ftsne::to_json(config) },
            { "seed", config.seed },
            { "final_loss", final_loss },
        };
        std::ofstream out(args.summary_path);
        out << summary.dump(2) << '\n';
    }
    std::cout << "final_loss=" << ftsne::format_number(final_loss) << '\n';
    return exit_ok;
}

struct EvalArgs {
    std::string data_path;
    std::string embedding_path;
    std::vector<std::string> metrics{ "xy", "knn" };
    double perplexity = 30;
    std::string latent = "auto";
    std::string k_grid = "1..20";
    std::size_t eps_count = 50;
    std::string out_dir = ".";
    std::string dataset_name;
    std::string divergence_name;
    std::uint64_t seed = 0;
};

std::vector<std::size_t> parse_k_grid(const std::string& text) {
    std::vector<std::size_t> out;
    try {
        const auto dots = text.find("..");
        if (dots != std::string::npos) {
            const std::size_t lo = std::stoul(text.substr(0, dots));
            const std::size_t hi = std::stoul(text.substr(dots + 2));
            for (std::size_t k = lo; k <= hi; ++k) {
                out.push_back(k);
            }
        } else {
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ',')) {
                out.push_back(std::stoul(item));
            }
        }
    } catch (const std::logic_error&) {
        throw ftsne::ParameterError("malformed K grid '" + text + "'");
    }
    if (out.empty()) {
        throw ftsne::ParameterError("empty K grid");
    }
    return out;
}

bool all_integral(const ftsne::Matrix& labels) {
    return std::all_of(labels.values().begin(), labels.values().end(), [](double v) { return v == std::floor(v); });
}

int run_eval(const EvalArgs& args) {
    const auto data = ftsne::read_dataset(args.data_path);
    const auto [coords, emb_labels] = ftsne::read_embedding(args.embedding_path);
    if (coords.rows() != data.size()) {
        throw ftsne::ParameterError("dataset has " + std::to_string(data.size()) + " rows but embedding has " + std::to_string(coords.rows()));
    }

    const std::set<std::string> wanted(args.metrics.begin(), args.metrics.end());
    if (wanted.count("zy") && !data.labels) {
        throw ftsne::ParameterError("zy metrics need a 'label' column in the dataset");
    }

    std::filesystem::create_directories(args.out_dir);
    const std::filesystem::path dir(args.out_dir);
    nlohmann::json metrics = nlohmann::json::object();
    const auto q_cond = ftsne::student_t_conditional(coords);

    if (wanted.count("xy")) {
        const auto p_cond = ftsne::conditional_affinities(data, args.perplexity);
        const auto grid = ftsne::epsilon_grid(p_cond.rows, q_cond, args.eps_count);
        const auto curves = ftsne::pr_curve_xy(p_cond.rows, q_cond, grid);
        ftsne::write_curves((dir / "curve_xy.csv").string(), curves);
        metrics["xy"] = { { "max_fscore", curves.max_fscore } };
    }
    if (wanted.count("zy")) {
        ftsne::LatentKind kind = ftsne::LatentKind::continuous;
        if (args.latent == "discrete" || (args.latent == "auto" && all_integral(*data.labels))) {
            kind = ftsne::LatentKind::discrete;
        }
        const auto r_cond = ftsne::latent_affinity(*data.labels, kind);
        const auto grid = ftsne::epsilon_grid(r_cond.rows, q_cond, args.eps_count);
        const auto curves = ftsne::pr_curve_zy(r_cond, q_cond, grid);
        ftsne::write_curves((dir / "curve_zy.csv").string(), curves);
        metrics["zy"] = { { "max_fscore", curves.max_fscore }, { "latent", kind == ftsne::LatentKind::discrete ? "discrete" : "continuous" } };
    }
    if (wanted.count("knn")) {
        const auto ks = parse_k_grid(args.k_grid);
        const auto curves = ftsne::knn_kfn_curve(data.points, coords, ks);
        ftsne::write_curves((dir / "curve_knn.csv").string(), curves);
        metrics["knn"] = { { "max_fscore", curves.max_fscore } };
    }

    const std::string dataset_name = args.dataset_name.empty() ? std::filesystem::path(args.data_path).stem().string() : args.dataset_name;
    nlohmann::json summary{
        { "dataset", dataset_name },
        { "divergence", args.divergence_name },
        { "seed", args.seed },
        { "metrics", metrics },
    };
    std::ofstream((dir / "summary.json").string()) << summary.dump(2) << '\n';
    for (const auto& [name, value] : metrics.items()) {
        std::cout << name << "_max_fscore=" << ftsne::format_number(value["max_fscore"].get<double>()) << '\n';
    }
    return exit_ok;
}

struct HeatmapArgs {
    std::string divergence = "kl";
    double p_min = 1e-4, p_max = 1e-1, q_min = 1e-4, q_max = 1e-1;
    std::size_t resolution = 100;
    std::string out_loss = "heatmap_loss.csv";
    std::string out_grad = "heatmap_grad.csv";
};

int run_heatmap(const HeatmapArgs& args) {
    const auto div = ftsne::parse_divergence(args.divergence);
    const auto grids = ftsne::heatmap_grids(div, args.p_min, args.p_max, args.q_min, args.q_max, args.resolution);
    ftsne::write_heatmap(args.out_loss, grids.p_values, grids.q_values, grids.loss);
    ftsne::write_heatmap(args.out_grad, grids.p_values, grids.q_values, grids.gradient);
    return exit_ok;
}

}

int main(int argc, char** argv) {
    CLI::App app{ "f-divergence stochastic neighbor embedding" };
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads for numeric kernels (default: FTSNE_THREADS or hardware concurrency)")->check(CLI::PositiveNumber);

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic dataset CSV");
    gen_cmd->add_option("--kind", gen.kind, "swiss_roll or gaussian_blobs")->required()->check(CLI::IsMember({ "swiss_roll", "gaussian_blobs" }));
    gen_cmd->add_option("--m", gen.m, "Number of points");
    gen_cmd->add_option("--seed", gen.seed, "RNG seed");
    gen_cmd->add_option("--noise", gen.noise, "Swiss roll noise standard deviation");
    gen_cmd->add_option("--separation", gen.separation, "Blob triangle side length");
    gen_cmd->add_option("--std", gen.stddev, "Blob standard deviation");
    gen_cmd->add_option("-o,--out", gen.out, "Output CSV ('-' for stdout)");

    EmbedArgs embed;
    auto* embed_cmd = app.add_subcommand("embed", "Compute an embedding of a dataset CSV");
    auto& f = embed.flags;
    embed_cmd->add_option("--config", embed.config_path, "JSON run configuration (flags override it)");
    embed_cmd->add_option("--input", f.input, "Dataset CSV");
    embed_cmd->add_option("--divergence", f.divergence, "kl, rkl, js, ch, hl or interp:<alpha>");
    embed_cmd->add_option("--optimizer", f.optimizer, "primal or variational");
    embed_cmd->add_option("--perplexity", f.perplexity);
    embed_cmd->add_option("--dim", f.dim, "Embedding dimension (1-3)");
    embed_cmd->add_option("--lr0", f.lr0, "Initial learning rate");
    embed_cmd->add_option("--momentum0", f.momentum0, "Initial momentum");
    embed_cmd->add_option("--lr-decay", f.lr_decay, "Learning-rate decay constant");
    embed_cmd->add_option("--momentum-decay", f.momentum_decay, "Momentum decay constant");
    embed_cmd->add_option("--epochs", f.epochs, "Primal gradient-descent epochs");
    embed_cmd->add_option("--seed", f.seed);
    embed_cmd->add_option("--trace-every", f.trace_every, "Record the loss every N epochs");
    embed_cmd->add_option("--exaggeration", embed.exaggeration, "FACTOR:EPOCHS early exaggeration");
    embed_cmd->add_option("--affinity-floor", f.affinity_floor, "Lower bound on joint affinities");
    embed_cmd->add_option("--j-steps", f.j_steps, "Discriminator steps per round");
    embed_cmd->add_option("--k-steps", f.k_steps, "Embedding steps per round");
    embed_cmd->add_option("--disc-lr", f.disc_lr, "Discriminator learning rate");
    embed_cmd->add_option("--encoder-widths", f.encoder_widths, "Encoder hidden widths")->delimiter(',');
    embed_cmd->add_option("--head-widths", f.head_widths, "Head hidden widths")->delimiter(',');
    embed_cmd->add_option("--rounds", f.rounds, "Minimax rounds");
    embed_cmd->add_flag("--stop-on-plateau", f.stop_on_plateau, "Stop when the primal loss plateaus");
    embed_cmd->add_option("--output-embedding,--out-embedding", f.output_embedding, "Embedding CSV to write");
    embed_cmd->add_option("--output-trace,--out-trace", f.output_trace, "Trace CSV to write");
    embed_cmd->add_option("--dump-config", embed.dump_config, "Write the resolved configuration as JSON");
    embed_cmd->add_option("--summary", embed.summary_path, "Write a JSON run summary");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Retrieval curves of an embedding");
    eval_cmd->add_option("--data", eval.data_path, "Dataset CSV")->required();
    eval_cmd->add_option("--embedding", eval.embedding_path, "Embedding CSV")->required();
    eval_cmd->add_option("--metrics", eval.metrics, "Any of xy, zy, knn")->delimiter(',')->check(CLI::IsMember({ "xy", "zy", "knn" }));
    eval_cmd->add_option("--perplexity", eval.perplexity, "Perplexity of the data-space neighborhoods");
    eval_cmd->add_option("--latent", eval.latent, "auto, discrete or continuous")->check(CLI::IsMember({ "auto", "discrete", "continuous" }));
    eval_cmd->add_option("--k-grid", eval.k_grid, "K values, 'a..b' or comma list");
    eval_cmd->add_option("--eps-count", eval.eps_count, "Number of thresholds");
    eval_cmd->add_option("--out-dir", eval.out_dir, "Directory for curve CSVs and summary.json");
    eval_cmd->add_option("--dataset-name", eval.dataset_name);
    eval_cmd->add_option("--divergence-name", eval.divergence_name);
    eval_cmd->add_option("--seed", eval.seed, "Seed recorded in the summary");

    HeatmapArgs heat;
    auto* heat_cmd = app.add_subcommand("heatmap", "Pairwise loss and gradient grids of a divergence");
    heat_cmd->add_option("--divergence", heat.divergence);
    heat_cmd->add_option("--p-min", heat.p_min);
    heat_cmd->add_option("--p-max", heat.p_max);
    heat_cmd->add_option("--q-min", heat.q_min);
    heat_cmd->add_option("--q-max", heat.q_max);
    heat_cmd->add_option("--resolution", heat.resolution);
    heat_cmd->add_option("--out-loss", heat.out_loss);
    heat_cmd->add_option("--out-grad", heat.out_grad);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return exit_config;
    }

    try {
        if (threads > 0) {
            ftsne::set_num_threads(threads);
        }
        if (*gen_cmd) {
            return run_gen(gen);
        }
        if (*embed_cmd) {
            return run_embed(embed, *embed_cmd);
        }
        if (*eval_cmd) {
            return run_eval(eval);
        }
        if (*heat_cmd) {
            return run_heatmap(heat);
        }
    } catch (const ftsne::NumericAbort& e) {
        std::cerr << "numeric abort: " << e.what() << '\n';
        return exit_numeric;
    } catch (const ftsne::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return exit_numeric;
    } catch (const ftsne::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return exit_config;
}
