#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "phenonet/corpus.hpp"
#include "phenonet/embeddings.hpp"

using namespace phenonet;
namespace fs = std::filesystem;

namespace {

std::string cli_binary() {
    if (const char* env = std::getenv("PHENONET_CLI")) return env;
    std::error_code ec;
    const auto self = fs::read_symlink("/proc/self/exe", ec);
    if (!ec) {
        const auto candidate = self.parent_path().parent_path() / "phenonet";
        if (fs::exists(candidate)) return candidate.string();
    }
    return {};
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

struct CliDir {
    fs::path path;
    explicit CliDir(const std::string& name) : path(fs::path("/tmp") / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~CliDir() { fs::remove_all(path); }

    CliResult run(const std::vector<std::string>& args) const {
        const auto bin = cli_binary();
        REQUIRE_MESSAGE(!bin.empty(), "phenonet binary not found (set PHENONET_CLI)");
        const auto out_file = path / ".stdout";
        const auto err_file = path / ".stderr";
        std::string cmd = "cd '" + path.string() + "' && '" + bin + "'";
        for (const auto& arg : args) cmd += " '" + arg + "'";
        cmd += " >'" + out_file.string() + "' 2>'" + err_file.string() + "'";
        const int status = std::system(cmd.c_str());
        CliResult result;
        result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        result.out = slurp(out_file);
        result.err = slurp(err_file);
        return result;
    }
};

const std::vector<std::string> kSynthArgs = {
    "synth", "--n", "40", "--labels", "3", "--vocab-size", "40", "--min-length", "6",
    "--max-length", "12", "--seed", "3", "--out", "corpus.csv"};

const std::vector<std::string> kTinyTrainArgs = {
    "--corpus", "corpus.csv", "--dim", "8", "--window", "2", "--negatives", "2",
    "--embedding-epochs", "2", "--min-count", "1", "--filters", "8", "--hidden-units", "8",
    "--branch-dense", "4", "--filter-width", "2", "--batch-size", "8", "--learning-rate",
    "0.05", "--max-epochs", "2", "--patience", "4", "--seed", "7"};

std::vector<std::string> with(std::vector<std::string> base,
                              const std::vector<std::string>& extra) {
    base.insert(base.end(), extra.begin(), extra.end());
    return base;
}

}  // namespace

TEST_CASE("cli basics: version and missing subcommand") {
    CliDir dir("phenonet_cli_basics");
    const auto version = dir.run({"--version"});
    CHECK(version.code == 0);
    CHECK(version.out.find("phenonet") != std::string::npos);
    CHECK(dir.run({}).code != 0);
    CHECK(dir.run({"bogus"}).code != 0);
}

TEST_CASE("cli synth writes a deterministic readable corpus") {
    CliDir dir("phenonet_cli_synth");
    const auto first = dir.run(kSynthArgs);
    CHECK(first.code == 0);
    CHECK(first.out.find("40 records, 3 labels") != std::string::npos);
    const auto bytes = slurp(dir.path / "corpus.csv");
    CHECK(!bytes.empty());

    auto again = kSynthArgs;
    again.back() = "corpus2.csv";
    CHECK(dir.run(again).code == 0);
    CHECK(slurp(dir.path / "corpus2.csv") == bytes);

    const auto corpus = read_corpus((dir.path / "corpus.csv").string(), CorpusFormat::delimited);
    CHECK(corpus.size() == 40);
    CHECK(corpus.num_labels() == 3);

    // jsonl by extension
    auto jsonl = kSynthArgs;
    jsonl.back() = "corpus.jsonl";
    CHECK(dir.run(jsonl).code == 0);
    const auto round = read_corpus((dir.path / "corpus.jsonl").string(), CorpusFormat::json_lines);
    CHECK(round.size() == 40);
}

TEST_CASE("cli train produces a run directory and prints metrics") {
    CliDir dir("phenonet_cli_train");
    REQUIRE(dir.run(kSynthArgs).code == 0);
    const auto result = dir.run(with({"train"}, with(kTinyTrainArgs, {"--out", "run1"})));
    CHECK(result.code == 0);
    CHECK(result.out.find("macro") != std::string::npos);
    CHECK(result.out.find("run directory: run1") != std::string::npos);
    for (const char* name : {"config.json", "vectors.txt", "report_r0.json", "report_r0.csv",
                             "history_r0.log", "checkpoint_r0.bin", "summary.json"}) {
        CHECK_MESSAGE(fs::exists(dir.path / "run1" / name), name);
    }
}

TEST_CASE("cli config file with flag and --set overrides") {
    CliDir dir("phenonet_cli_config");
    REQUIRE(dir.run(kSynthArgs).code == 0);
    {
        std::ofstream cfg(dir.path / "cfg.json");
        cfg << R"({
  "corpus": {"path": "corpus.csv"},
  "embeddings": {"dim": 8, "window": 2, "negatives": 2, "epochs": 2, "min_count": 1},
  "model": {"architecture": "cnn", "conv_filters": 8, "filter_width": 2},
  "train": {"batch_size": 8, "max_epochs": 1},
  "run": {"seed": 7, "out_dir": "run_cfg"}
})";
    }
    const auto result = dir.run({"train", "--config", "cfg.json", "--max-epochs", "2",
                                 "--set", "train.patience=9"});
    CHECK(result.code == 0);
    const auto echoed = nlohmann::ordered_json::parse(slurp(dir.path / "run_cfg" / "config.json"));
    CHECK(echoed.at("train").at("max_epochs").get<int>() == 2);   // flag beat file
    CHECK(echoed.at("train").at("patience").get<int>() == 9);     // --set applied
    CHECK(echoed.at("train").at("batch_size").get<int>() == 8);   // file value kept
    CHECK(echoed.at("model").at("architecture").get<std::string>() == "cnn");

    // invalid --set value is rejected with a config error
    const auto bad = dir.run({"train", "--config", "cfg.json", "--set", "train.batch_size=0"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("config error") != std::string::npos);
    CHECK(bad.err.find("batch_size") != std::string::npos);

    // malformed --set syntax
    const auto malformed = dir.run({"train", "--config", "cfg.json", "--set", "nodotnoequals"});
    CHECK(malformed.code == 1);
    CHECK(malformed.err.find("--set expects") != std::string::npos);
}

TEST_CASE("cli errors carry a stage and a nonzero exit") {
    CliDir dir("phenonet_cli_errors");
    const auto missing = dir.run({"train", "--corpus", "missing.csv"});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("phenonet:") != std::string::npos);
    CHECK(missing.err.find("missing.csv") != std::string::npos);

    const auto badarch = dir.run({"train", "--corpus", "x.csv", "--arch", "transformer"});
    CHECK(badarch.code == 1);
    CHECK(badarch.err.find("config") != std::string::npos);
    CHECK(badarch.err.find("transformer") != std::string::npos);

    REQUIRE(dir.run(kSynthArgs).code == 0);
    const auto badgrid =
        dir.run(with({"crossval", "--grid", "filter_width"}, kTinyTrainArgs));
    CHECK(badgrid.code == 1);
    CHECK(badgrid.err.find("--grid expects") != std::string::npos);
}

TEST_CASE("cli preprocess summarizes and writes cleaned text") {
    CliDir dir("phenonet_cli_preprocess");
    REQUIRE(dir.run(kSynthArgs).code == 0);
    const auto result = dir.run({"preprocess", "--corpus", "corpus.csv", "--out-corpus",
                                 "cleaned.csv"});
    CHECK(result.code == 0);
    CHECK(result.out.find("40 records, 3 labels") != std::string::npos);
    CHECK(result.out.find("cleaned tokens:") != std::string::npos);
    const auto cleaned = read_corpus((dir.path / "cleaned.csv").string(),
                                     CorpusFormat::delimited);
    CHECK(cleaned.size() == 40);
    for (const auto& rec : cleaned.records) {
        CHECK(rec.text.find_first_of(",.0123456789") == std::string::npos);
    }
}

TEST_CASE("cli train-embeddings writes a loadable vectors file") {
    CliDir dir("phenonet_cli_embeddings");
    REQUIRE(dir.run(kSynthArgs).code == 0);
    const auto result = dir.run({"train-embeddings", "--corpus", "corpus.csv", "--dim", "8",
                                 "--window", "2", "--negatives", "2", "--embedding-epochs", "2",
                                 "--min-count", "1", "--seed", "7", "--vectors-out", "vecs.txt"});
    CHECK(result.code == 0);
    const auto file = read_vectors((dir.path / "vecs.txt").string());
    CHECK(file.vectors.dim(1) == 8);
    CHECK(file.tokens.size() > 2);
}

TEST_CASE("cli evaluate scores a trained checkpoint") {
    CliDir dir("phenonet_cli_evaluate");
    REQUIRE(dir.run(kSynthArgs).code == 0);
    REQUIRE(dir.run(with({"train"}, with(kTinyTrainArgs, {"--out", "run1"}))).code == 0);
    const auto result = dir.run(with(
        {"evaluate", "--checkpoint", "run1/checkpoint_r0.bin", "--embeddings",
         "run1/vectors.txt", "--report-out", "eval.json"},
        {"--corpus", "corpus.csv"}));
    CHECK(result.code == 0);
    CHECK(result.out.find("examples: 40") != std::string::npos);
    CHECK(fs::exists(dir.path / "eval.json"));

    // evaluating with foreign vectors is refused
    REQUIRE(dir.run({"train-embeddings", "--corpus", "corpus.csv", "--dim", "8", "--window",
                     "2", "--negatives", "2", "--embedding-epochs", "1", "--min-count", "2",
                     "--seed", "99", "--vectors-out", "foreign.txt"})
                .code == 0);
    const auto refused = dir.run({"evaluate", "--checkpoint", "run1/checkpoint_r0.bin",
                                  "--embeddings", "foreign.txt", "--corpus", "corpus.csv"});
    CHECK(refused.code == 1);
    CHECK(refused.err.find("validation error") != std::string::npos);
}

TEST_CASE("cli ablate prints the variant table") {
    CliDir dir("phenonet_cli_ablate");
    REQUIRE(dir.run(kSynthArgs).code == 0);
    const auto result = dir.run(with({"ablate"}, with(kTinyTrainArgs, {"--out", "abl"})));
    CHECK(result.code == 0);
    CHECK(result.out.find("P1+P2+P3") != std::string::npos);
    const auto tsv = slurp(dir.path / "abl" / "ablation.tsv");
    CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 4);
}

TEST_CASE("cli crossval prints the grid table and best row") {
    CliDir dir("phenonet_cli_crossval");
    REQUIRE(dir.run(kSynthArgs).code == 0);
    const auto result = dir.run(with(
        {"crossval", "--grid", "filter_width=2,3", "--folds", "3"},
        with(kTinyTrainArgs, {"--out", "cv"})));
    CHECK(result.code == 0);
    CHECK(result.out.find("best: filter_width=") != std::string::npos);
    CHECK(fs::exists(dir.path / "cv" / "crossval.tsv"));
}

TEST_CASE("cli train runs every architecture on a small corpus") {
    CliDir dir("phenonet_cli_archs");
    auto synth50 = kSynthArgs;
    synth50[2] = "50";
    REQUIRE(dir.run(synth50).code == 0);
    for (const char* arch : {"cnn", "lstm", "gru", "bilstm", "bigru", "cnn_lstm", "s_conv_nm",
                             "is_conv_nm"}) {
        const auto result = dir.run(with(
            {"train", "--arch", arch}, with(kTinyTrainArgs, {"--out", std::string("run_") + arch})));
        CHECK_MESSAGE(result.code == 0, arch, ": ", result.err);
        CHECK(fs::exists(dir.path / (std::string("run_") + arch) / "report_r0.json"));
    }
}
