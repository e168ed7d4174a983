#ifndef FTSNE_IO_HPP
#define FTSNE_IO_HPP

#include <charconv>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "affinity.hpp"
#include "common.hpp"
#include "discriminator.hpp"
#include "divergence.hpp"
#include "metrics.hpp"
#include "primal.hpp"
#include "variational.hpp"

/**
 * @file io.hpp
 *
 * @brief CSV formats for datasets, embeddings, traces, curves and heatmaps, and the
 * JSON run configuration.
 */

namespace ftsne {

/**
 * @brief Malformed or unreadable file.
 */
class FormatError : public Error {
public:
    using Error::Error;
};

/**
 * Shortest decimal text that parses back to exactly `value`.
 */
inline std::string format_number(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell.push_back(c);
        }
    }
    out.push_back(cell);
    for (auto& s : out) {
        const auto first = s.find_first_not_of(" \t");
        const auto last = s.find_last_not_of(" \t");
        s = (first == std::string::npos ? std::string() : s.substr(first, last - first + 1));
    }
    return out;
}

inline double parse_number(const std::string& text, std::size_t line) {
    double value = 0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    if (!text.empty() && *begin == '+') {
        ++begin;
    }
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end) {
        throw FormatError("line " + std::to_string(line) + ": '" + text + "' is not a number");
    }
    return value;
}

}

/**
 * @brief A header row plus a numeric body.
 */
struct Table {
    std::vector<std::string> header;
    Matrix values;
};

inline Table parse_table(std::istream& in) {
    Table out;
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("empty CSV input");
    }
    out.header = detail::split_csv_line(line);

    std::vector<double> body;
    std::size_t rows = 0, lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != out.header.size()) {
            throw FormatError("line " + std::to_string(lineno) + ": expected " + std::to_string(out.header.size()) + " columns, found " + std::to_string(cells.size()));
        }
        for (const auto& c : cells) {
            body.push_back(detail::parse_number(c, lineno));
        }
        ++rows;
    }
    out.values = Matrix(rows, out.header.size());
    std::copy(body.begin(), body.end(), out.values.data());
    return out;
}

inline Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open '" + path + "'");
    }
    return parse_table(in);
}

inline void write_table(std::ostream& out, const std::vector<std::string>& header, const Matrix& values) {
    for (std::size_t c = 0; c < header.size(); ++c) {
        out << (c ? "," : "") << header[c];
    }
    out << '\n';
    for (std::size_t r = 0; r < values.rows(); ++r) {
        for (std::size_t c = 0; c < values.cols(); ++c) {
            out << (c ? "," : "") << format_number(values(r, c));
        }
        out << '\n';
    }
}

inline void write_file(const std::string& path, const std::vector<std::string>& header, const Matrix& values) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write '" + path + "'");
    }
    write_table(out, header, values);
    if (!out) {
        throw FormatError("failed while writing '" + path + "'");
    }
}

namespace detail {

// Splits a table into the leading `prefix0..prefix{n-1}` columns and an optional final `label`.
inline std::pair<Matrix, std::optional<Matrix>> split_prefixed(const Table& table, const std::string& prefix) {
    std::size_t n = 0;
    while (n < table.header.size() && table.header[n] == prefix + std::to_string(n)) {
        ++n;
    }
    const bool has_label = (n + 1 == table.header.size() && table.header[n] == "label");
    if (n == 0 || (n != table.header.size() && !has_label)) {
        throw FormatError("expected columns " + prefix + "0.." + prefix + "{n-1} optionally followed by 'label'");
    }

    const std::size_t rows = table.values.rows();
    Matrix features(rows, n);
    std::optional<Matrix> labels;
    if (has_label) {
        labels = Matrix(rows, 1);
    }
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            features(r, c) = table.values(r, c);
        }
        if (has_label) {
            (*labels)(r, 0) = table.values(r, n);
        }
    }
    return { std::move(features), std::move(labels) };
}

inline Matrix join_labels(const Matrix& features, const std::optional<Matrix>& labels, std::vector<std::string>& header, const std::string& prefix) {
    header.clear();
    for (std::size_t c = 0; c < features.cols(); ++c) {
        header.push_back(prefix + std::to_string(c));
    }
    if (!labels) {
        return features;
    }
    if (labels->cols() != 1 || labels->rows() != features.rows()) {
        throw FormatError("CSV output supports exactly one label per point");
    }
    header.push_back("label");
    Matrix out(features.rows(), features.cols() + 1);
    for (std::size_t r = 0; r < features.rows(); ++r) {
        for (std::size_t c = 0; c < features.cols(); ++c) {
            out(r, c) = features(r, c);
        }
        out(r, features.cols()) = (*labels)(r, 0);
    }
    return out;
}

}

/**
 * Dataset CSV: columns `f0..f{D-1}` with an optional final `label` column.
 */
inline Dataset read_dataset(const std::string& path) {
    auto [points, labels] = detail::split_prefixed(read_table(path), "f");
    return Dataset{ std::move(points), std::move(labels) };
}

inline void write_dataset(const std::string& path, const Dataset& data) {
    std::vector<std::string> header;
    const Matrix body = detail::join_labels(data.points, data.labels, header, "f");
    write_file(path, header, body);
}

/**
 * Embedding CSV: columns `y0..y{d-1}` with an optional final `label` column.
 */
inline std::pair<Matrix, std::optional<Matrix>> read_embedding(const std::string& path) {
    return detail::split_prefixed(read_table(path), "y");
}

inline void write_embedding(const std::string& path, const Matrix& coords, const std::optional<Matrix>& labels) {
    std::vector<std::string> header;
    const Matrix body = detail::join_labels(coords, labels, header, "y");
    write_file(path, header, body);
}

/**
 * Loss trace CSV: `epoch,loss`.
 */
inline void write_primal_trace(const std::string& path, const std::vector<TracePoint>& trace) {
    Matrix body(trace.size(), 2);
    for (std::size_t r = 0; r < trace.size(); ++r) {
        body(r, 0) = static_cast<double>(trace[r].step);
        body(r, 1) = trace[r].loss;
    }
    write_file(path, { "epoch", "loss" }, body);
}

/**
 * Minimax trace CSV: `round,variational_objective,primal_loss,clip_events`.
 */
inline void write_variational_trace(const std::string& path, const std::vector<VariationalTracePoint>& trace) {
    Matrix body(trace.size(), 4);
    for (std::size_t r = 0; r < trace.size(); ++r) {
        body(r, 0) = static_cast<double>(trace[r].round);
        body(r, 1) = trace[r].variational_objective;
        body(r, 2) = trace[r].primal_loss;
        body(r, 3) = static_cast<double>(trace[r].clip_events);
    }
    write_file(path, { "round", "variational_objective", "primal_loss", "clip_events" }, body);
}

/**
 * Curves CSV: `param,precision,recall,fscore`.
 */
inline void write_curves(const std::string& path, const RetrievalCurves& curves) {
    Matrix body(curves.params.size(), 4);
    for (std::size_t r = 0; r < curves.params.size(); ++r) {
        body(r, 0) = curves.params[r];
        body(r, 1) = curves.precision[r];
        body(r, 2) = curves.recall[r];
        body(r, 3) = curves.fscore[r];
    }
    write_file(path, { "param", "precision", "recall", "fscore" }, body);
}

/**
 * Heatmap CSV: `p,q,value`, p-major.
 */
inline void write_heatmap(const std::string& path, const std::vector<double>& p_values, const std::vector<double>& q_values, const Matrix& grid) {
    Matrix body(p_values.size() * q_values.size(), 3);
    std::size_t r = 0;
    for (std::size_t a = 0; a < p_values.size(); ++a) {
        for (std::size_t b = 0; b < q_values.size(); ++b, ++r) {
            body(r, 0) = p_values[a];
            body(r, 1) = q_values[b];
            body(r, 2) = grid(a, b);
        }
    }
    write_file(path, { "p", "q", "value" }, body);
}

/**
 * @brief Every knob of an embedding run.
 */
struct RunConfig {
    std::string divergence = "kl";
    std::string optimizer = "primal";
    double perplexity = 30;
    std::size_t dim = 2;

    double lr0 = 100;
    double momentum0 = 0.5;
    double lr_decay = 500;
    double momentum_decay = 500;
    std::size_t epochs = 1000;
    std::uint64_t seed = 0;
    std::size_t trace_every = 1;

    double exaggeration = 1;
    std::size_t exaggeration_epochs = 0;

    /** Lower bound applied to the joint affinities before optimization. */
    double affinity_floor = 1e-12;

    std::size_t j_steps = 10;
    std::size_t k_steps = 10;
    double disc_lr = 1e-3;
    std::vector<std::size_t> encoder_widths{ 10 };
    std::vector<std::size_t> head_widths{ 20 };
    std::size_t rounds = 100;
    bool stop_on_plateau = false;

    std::string input;
    std::string output_embedding;
    std::string output_trace;

    bool operator==(const RunConfig&) const = default;

    OptimizerSchedule schedule() const {
        return { lr0, momentum0, lr_decay, momentum_decay, epochs, seed };
    }

    MinimaxConfig minimax() const {
        MinimaxConfig out;
        out.j_steps = j_steps;
        out.k_steps = k_steps;
        out.disc_lr = disc_lr;
        out.emb_schedule = schedule();
        out.rounds = rounds;
        out.architecture = { encoder_widths, head_widths };
        out.stop_on_plateau = stop_on_plateau;
        return out;
    }

    PrimalOptions primal_options() const {
        PrimalOptions out;
        out.trace_every = trace_every;
        out.exaggeration = exaggeration;
        out.exaggeration_epochs = exaggeration_epochs;
        return out;
    }

    /**
     * @throws ParameterError on out-of-range values.
     * @throws UnsupportedConfigurationError for a variational run with an interpolated divergence.
     */
    void validate() const {
        const auto div = parse_divergence(divergence);
        if (optimizer != "primal" && optimizer != "variational") {
            throw ParameterError("optimizer must be 'primal' or 'variational'");
        }
        if (optimizer == "variational" && !div.has_conjugate()) {
            throw UnsupportedConfigurationError("the variational optimizer does not support " + divergence);
        }
        if (dim < 1 || dim > 3) {
            throw ParameterError("dim must be 1, 2 or 3");
        }
        if (trace_every == 0) {
            throw ParameterError("trace_every must be positive");
        }
        if (!(perplexity > 1)) {
            throw ParameterError("perplexity must exceed 1");
        }
        if (!(exaggeration > 0)) {
            throw ParameterError("exaggeration must be positive");
        }
        if (!(affinity_floor >= 0 && affinity_floor < 1e-3)) {
            throw ParameterError("affinity_floor must lie in [0, 1e-3)");
        }
        schedule().validate();
        minimax().validate();
    }
};

inline nlohmann::json to_json(const RunConfig& c) {
    return nlohmann::json{
        { "divergence", c.divergence },
        { "optimizer", c.optimizer },
        { "perplexity", c.perplexity },
        { "dim", c.dim },
        { "lr0", c.lr0 },
        { "momentum0", c.momentum0 },
        { "lr_decay", c.lr_decay },
        { "momentum_decay", c.momentum_decay },
        { "epochs", c.epochs },
        { "seed", c.seed },
        { "trace_every", c.trace_every },
        { "exaggeration", c.exaggeration },
        { "exaggeration_epochs", c.exaggeration_epochs },
        { "affinity_floor", c.affinity_floor },
        { "j_steps", c.j_steps },
        { "k_steps", c.k_steps },
        { "disc_lr", c.disc_lr },
        { "encoder_widths", c.encoder_widths },
        { "head_widths", c.head_widths },
        { "rounds", c.rounds },
        { "stop_on_plateau", c.stop_on_plateau },
        { "input", c.input },
        { "output_embedding", c.output_embedding },
        { "output_trace", c.output_trace },
    };
}

/**
 * Overlays the keys present in `j` onto `base`.
 * @throws ParameterError for unknown keys or mistyped values.
 */
inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {}) {
    if (!j.is_object()) {
        throw ParameterError("run configuration must be a JSON object");
    }
    const auto known = to_json(base);
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw ParameterError("unknown configuration key '" + key + "'");
        }
    }

    auto take = [&](const char* key, auto& field) {
        if (!j.contains(key)) {
            return;
        }
        try {
            j.at(key).get_to(field);
        } catch (const nlohmann::json::exception& e) {
            throw ParameterError(std::string("bad value for '") + key + "': " + e.what());
        }
    };

    RunConfig c = std::move(base);
    take("divergence", c.divergence);
    take("optimizer", c.optimizer);
    take("perplexity", c.perplexity);
    take("dim", c.dim);
    take("lr0", c.lr0);
    take("momentum0", c.momentum0);
    take("lr_decay", c.lr_decay);
    take("momentum_decay", c.momentum_decay);
    take("epochs", c.epochs);
    take("seed", c.seed);
    take("trace_every", c.trace_every);
    take("exaggeration", c.exaggeration);
    take("exaggeration_epochs", c.exaggeration_epochs);
    take("affinity_floor", c.affinity_floor);
    take("j_steps", c.j_steps);
    take("k_steps", c.k_steps);
    take("disc_lr", c.disc_lr);
    take("encoder_widths", c.encoder_widths);
    take("head_widths", c.head_widths);
    take("rounds", c.rounds);
    take("stop_on_plateau", c.stop_on_plateau);
    take("input", c.input);
    take("output_embedding", c.output_embedding);
    take("output_trace", c.output_trace);
    return c;
}

inline RunConfig read_run_config(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open '" + path + "'");
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParameterError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(j, std::move(base));
}

}

#endif
