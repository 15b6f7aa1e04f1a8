#include "cli.hpp"

#include "s2s/s2s.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace s2s::cli {
namespace {

namespace fs = std::filesystem;

// Flag combinations that parse but make no sense; reported with exit 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::uint64_t seed = 42;
    bool verbose = false;

    std::size_t pairs = 0;
    std::string out;

    std::string corpus;
    std::size_t hidden = 128;
    std::optional<std::size_t> embed;
    std::size_t epochs = 300;
    double lr = 1e-3;
    std::size_t batch = 32;
    double clip = 5.0;
    std::string glove;
    bool deterministic = false;
    std::size_t checkpoint_every = 50;
    std::size_t min_count = 1;

    std::string model;
    std::optional<double> temperature;
    std::size_t max_len = default_max_seq_len + 1;

    std::string checkpoint;
    std::vector<std::string> records;
};

fs::path resolve_checkpoint(const fs::path& path) {
    if (!fs::is_directory(path)) return path;
    std::ifstream marker(path / "latest");
    std::string name;
    if (!marker || !std::getline(marker, name) || name.empty())
        fail(ErrorKind::io, "no readable 'latest' marker in " + path.string());
    return path / name;
}

int run_corpus_gen(const Options& o, std::ostream& err) {
    if (o.pairs < 1) throw UsageError("--pairs must be >= 1");
    const auto corpus = generate_sarcasm_corpus(o.pairs, o.seed);
    save_corpus(corpus, o.out);
    if (o.verbose) err << "wrote " << corpus.pairs.size() << " pairs to " << o.out << '\n';
    return exit_ok;
}

int run_train(const Options& o, std::ostream& out, std::ostream& err) {
    if (o.hidden < 1) throw UsageError("--hidden must be >= 1");
    if (o.embed && *o.embed < 1) throw UsageError("--embed must be >= 1");
    if (!(o.lr >= 0.0)) throw UsageError("--lr must be >= 0");
    if (o.batch < 1) throw UsageError("--batch must be >= 1");
    if (!(o.clip > 0.0)) throw UsageError("--clip must be > 0");
    if (o.checkpoint_every < 1) throw UsageError("--checkpoint-every must be >= 1");

    const auto corpus = load_corpus(o.corpus);
    const auto vocab = build_vocab(corpus, o.min_count);

    std::optional<GloveLoad> glove;
    std::size_t embed_dim = o.embed.value_or(64);
    if (!o.glove.empty()) {
        if (!o.embed) embed_dim = sniff_glove_dim(o.glove);
        glove = load_glove(o.glove, vocab, embed_dim);
        if (o.verbose) err << "embedding coverage " << glove->coverage << '\n';
    }
    auto model = init_model(vocab, embed_dim, o.hidden, o.seed, glove ? &glove->table : nullptr);

    TrainConfig cfg;
    cfg.lr = o.lr;
    cfg.clip_norm = o.clip;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.seed = o.seed;
    cfg.deterministic = o.deterministic;
    cfg.checkpoint_every = o.checkpoint_every;

    if (o.verbose)
        err << "pairs " << corpus.pairs.size() << ", vocab " << vocab.size() << ", parameters "
            << model.parameter_count() << '\n';
    const auto report = train(corpus, vocab, model, cfg, fs::path(o.out),
                              [&](std::size_t epoch, double loss, const ModelParams&) {
                                  if (o.verbose) err << "epoch " << epoch << " loss " << loss << '\n';
                              });
    if (cfg.epochs == 0) {
        export_model(model, vocab, fs::path(o.out) / "epoch_0.bundle");
        const std::string marker = "epoch_0.bundle\n";
        write_file_atomic(fs::path(o.out) / "latest",
                          std::span(reinterpret_cast<const std::uint8_t*>(marker.data()), marker.size()));
    }

    out << std::fixed << std::setprecision(4);
    out << "epochs " << report.epoch_losses.size();
    if (!report.epoch_losses.empty()) out << "  final_loss " << report.epoch_losses.back();
    out << "  memorization " << report.memorization << "  seconds " << std::setprecision(1) << report.wall_seconds
        << '\n';
    if (!report.windows_non_increasing && o.verbose) err << "note: loss rose within a 20-epoch window\n";
    return exit_ok;
}

int run_chat(const Options& o, std::istream& in, std::ostream& out, std::ostream& err) {
    if (o.temperature && !(*o.temperature > 0.0)) throw UsageError("--temperature must be > 0");
    if (o.max_len < 1) throw UsageError("--max-len must be >= 1");
    const auto loaded = import_model(o.model);

    DecodeConfig cfg;
    cfg.mode = o.temperature ? DecodeConfig::Mode::sample : DecodeConfig::Mode::greedy;
    cfg.temperature = o.temperature.value_or(1.0);
    cfg.max_len = o.max_len;
    cfg.seed = o.seed;
    Rng rng(cfg.seed);

    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == "/quit") break;
        if (line.rfind("/temp", 0) == 0) {
            std::istringstream args(line.substr(5));
            double t = 0.0;
            if (!(args >> t) || !(t > 0.0)) {
                err << "usage: /temp F with F > 0\n";
                continue;
            }
            cfg.mode = DecodeConfig::Mode::sample;
            cfg.temperature = t;
            err << "temperature " << t << '\n';
            continue;
        }
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        out << reply(line, loaded.params, loaded.vocab, cfg, rng) << std::endl;
    }
    return exit_ok;
}

int run_export(const Options& o, std::ostream& err) {
    const auto source = resolve_checkpoint(o.checkpoint);
    const auto loaded = import_model(source);
    export_model(loaded.params, loaded.vocab, o.out);
    if (o.verbose) err << "exported " << source << " -> " << o.out << '\n';
    return exit_ok;
}

int run_eval_aggregate(const Options& o, std::ostream& out) {
    std::vector<fs::path> paths(o.records.begin(), o.records.end());
    const auto records = eval::parse_records(paths);
    const auto report = eval::build_report(records);
    const auto json = report.to_json();
    write_file_atomic(o.out, std::span(reinterpret_cast<const std::uint8_t*>(json.data()), json.size()));
    out << report.to_table();
    return exit_ok;
}

int run_perplexity(const Options& o, std::ostream& out) {
    const auto loaded = import_model(o.model);
    const auto corpus = load_corpus(o.corpus);
    out << std::setprecision(6) << perplexity(corpus, loaded.vocab, loaded.params) << '\n';
    return exit_ok;
}

} // namespace

int dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Word-level LSTM seq2seq chatbot: corpus generation, training, chat, export and evaluation", "s2s"};
    app.fallthrough();
    app.require_subcommand(1);
    app.add_option("--seed", o.seed, "random seed")->capture_default_str();
    app.add_flag("--verbose,-v", o.verbose, "log progress to stderr");

    auto* corpus = app.add_subcommand("corpus", "corpus utilities");
    corpus->require_subcommand(1);
    auto* gen = corpus->add_subcommand("gen", "generate a synthetic sarcasm-pattern corpus (JSONL)");
    gen->add_option("--pairs", o.pairs, "number of pairs")->required();
    gen->add_option("--out", o.out, "output JSONL path")->required();

    auto* train_cmd = app.add_subcommand("train", "train a model; checkpoints go to --out");
    train_cmd->add_option("--corpus", o.corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--out", o.out, "checkpoint directory")->required();
    train_cmd->add_option("--hidden", o.hidden, "LSTM hidden size")->capture_default_str();
    train_cmd->add_option("--embed", o.embed, "embedding size (default 64, or the GloVe dimension)");
    train_cmd->add_option("--epochs", o.epochs, "training epochs")->capture_default_str();
    train_cmd->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--batch", o.batch, "batch size")->capture_default_str();
    train_cmd->add_option("--clip", o.clip, "global gradient-norm clip")->capture_default_str();
    train_cmd->add_option("--glove", o.glove, "GloVe text file for embedding init")->check(CLI::ExistingFile);
    train_cmd->add_flag("--deterministic", o.deterministic, "single-threaded, bit-reproducible training");
    train_cmd->add_option("--checkpoint-every", o.checkpoint_every, "epochs between checkpoints")->capture_default_str();
    train_cmd->add_option("--min-count", o.min_count, "vocabulary frequency cutoff")->capture_default_str();

    auto* chat = app.add_subcommand("chat", "interactive chat; /temp F sets temperature, /quit exits");
    chat->add_option("--model", o.model, "model bundle")->required()->check(CLI::ExistingFile);
    chat->add_option("--temperature", o.temperature, "sampling temperature (> 0); greedy when omitted");
    chat->add_option("--max-len", o.max_len, "maximum decoding steps")->capture_default_str();

    auto* export_cmd = app.add_subcommand("export", "re-export a checkpoint as a standalone bundle");
    export_cmd->add_option("--checkpoint", o.checkpoint, "bundle file or checkpoint directory")
        ->required()
        ->check(CLI::ExistingPath);
    export_cmd->add_option("--out", o.out, "output bundle path")->required();

    auto* eval_cmd = app.add_subcommand("eval", "human-evaluation tools");
    eval_cmd->require_subcommand(1);
    auto* aggregate = eval_cmd->add_subcommand("aggregate", "aggregate rater records into a report");
    aggregate->add_option("--records", o.records, "record directory or files")->required()->check(CLI::ExistingPath);
    aggregate->add_option("--out", o.out, "report JSON path")->required();

    auto* ppl = app.add_subcommand("perplexity", "teacher-forced perplexity of a corpus");
    ppl->add_option("--model", o.model, "model bundle")->required()->check(CLI::ExistingFile);
    ppl->add_option("--corpus", o.corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return exit_usage;
    }

    try {
        if (*gen) return run_corpus_gen(o, err);
        if (*train_cmd) return run_train(o, out, err);
        if (*chat) return run_chat(o, in, out, err);
        if (*export_cmd) return run_export(o, err);
        if (*aggregate) return run_eval_aggregate(o, out);
        if (*ppl) return run_perplexity(o, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const Error& e) {
        err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_runtime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_runtime;
    }
    err << app.help();
    return exit_usage;
}

} // namespace s2s::cli
