#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "cmaprank/cli.hpp"
#include "cmaprank/evalkit.hpp"

using namespace cmaprank;
namespace fs = std::filesystem;

namespace {

std::vector<scored_doc> ranked(const std::vector<std::string>& ids) {
    std::vector<scored_doc> out;
    double s = static_cast<double>(ids.size());
    for (const auto& d : ids) out.push_back({d, s--});
    return out;
}

concept_map map_of(const std::vector<std::string>& seq, int window = 2) { return build_concept_map("d", seq, window); }

}  // namespace

// --- metrics ----------------------------------------------------------------

TEST(Metrics, GradedExample) {
    const std::map<std::string, int> judged{{"a", 2}, {"b", 0}, {"c", 1}};
    const auto m = eval_query(ranked({"a", "b", "c"}), judged, {3});
    const double expected = (3.0 / 1.0 + 0.0 + 1.0 / 2.0) / (3.0 / 1.0 + 1.0 / std::log2(3.0));
    EXPECT_NEAR(m.at("ndcg@3"), expected, 1e-15);
    EXPECT_NEAR(m.at("p@3"), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(m.at("r@3"), 1.0, 1e-15);
}

TEST(Metrics, IdealIsBestPermutation) {
    const std::map<std::string, int> judged{{"a", 2}, {"b", 0}, {"c", 1}, {"d", 3}};
    std::vector<std::string> docs{"a", "b", "c", "d"};
    double best = 0.0;
    do {
        best = std::max(best, eval_query(ranked(docs), judged, {4}).at("ndcg@4"));
    } while (std::next_permutation(docs.begin(), docs.end()));
    EXPECT_NEAR(best, 1.0, 1e-15);
}

TEST(Metrics, PerfectAndEmpty) {
    qrels j;
    j.add("q", "p1", 1);
    j.add("q", "p2", 2);
    j.add("q", "n", 0);
    EXPECT_NEAR(eval_run({{"q", ranked({"p2", "p1", "n"})}}, j).at("ndcg@10"), 1.0, 1e-15);
    const auto none = eval_run({{"q", ranked({"n", "x"})}}, j);
    EXPECT_EQ(none.at("ndcg@10"), 0.0);
    EXPECT_EQ(none.at("p@10"), 0.0);
    EXPECT_EQ(none.at("r@10"), 0.0);
}

TEST(Metrics, UnjudgedQueryExcluded) {
    qrels j;
    j.add("q", "p", 1);
    const auto rep = eval_run({{"q", ranked({"p"})}, {"other", ranked({"p"})}}, j);
    EXPECT_EQ(rep.excluded, std::vector<std::string>{"other"});
    EXPECT_EQ(rep.per_query.size(), 1u);
    EXPECT_NEAR(rep.at("p@10"), 0.1, 1e-15);
}

TEST(Metrics, CsvHasAllRow) {
    qrels j;
    j.add("q", "p", 1);
    const auto csv = metrics_csv(eval_run({{"q", ranked({"p"})}}, j), "bm25");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "run,query,ndcg@10,p@10,r@10,ndcg@20,p@20,r@20");
    EXPECT_NE(csv.find("bm25,all,"), std::string::npos);
}

// --- pairs and similarity ---------------------------------------------------

TEST(Pairs, CountsAndSelfPairs) {
    qrels j;
    for (const char* p : {"a", "b", "c"}) j.add("q", p, 1);
    j.add("r", "a", 1);
    const run_ranking bm{{"r", ranked({"a", "b"})}};
    const auto ps = build_pairs(j, bm);
    EXPECT_EQ(ps.pos_pos.size(), 3u);
    EXPECT_TRUE(ps.pos_neg.empty());
    ASSERT_EQ(ps.pos_bm.size(), 1u);
    EXPECT_EQ(ps.pos_bm[0], (doc_pair{"r", "a", "b"}));
}

TEST(Pairs, CapIsSeededSubsample) {
    qrels j;
    for (int i = 0; i < 6; ++i) j.add("q", "p" + std::to_string(i), 1);
    pair_options opt;
    opt.cap = 4;
    const auto a = build_pairs(j, {}, opt), b = build_pairs(j, {}, opt);
    EXPECT_EQ(a.pos_pos.size(), 4u);
    EXPECT_EQ(a.pos_pos, b.pos_pos);
}

TEST(Similarity, IdenticalDisjointOverlap) {
    const auto m = map_of({"a", "b", "c"});
    const auto weight = [](const std::string& s, double tf) { return s == "a" ? 3.0 * tf : tf; };
    EXPECT_EQ(pair_similarity(m, m, weight), (similarity{1.0, 1.0, 1.0, 1.0}));
    EXPECT_EQ(pair_similarity(m, map_of({"x", "y"}), weight), (similarity{}));
    const auto s = pair_similarity(map_of({"a", "b"}), map_of({"b", "c"}));
    EXPECT_DOUBLE_EQ(s.ncr, 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(s.ncr_plus, 1.0 / 3.0);
    EXPECT_EQ(s.ecr, 0.0);
    EXPECT_EQ(pair_similarity(concept_map{}, concept_map{}), (similarity{}));
}

TEST(Similarity, Symmetric) {
    const auto a = map_of({"a", "b", "c", "d"}, 3), b = map_of({"c", "a", "e"}, 3);
    const auto w = [](const std::string& s, double tf) { return static_cast<double>(s[0]) * tf; };
    EXPECT_EQ(pair_similarity(a, b, w), pair_similarity(b, a, w));
}

// --- t-score and stability --------------------------------------------------

TEST(TScore, Examples) {
    EXPECT_NEAR(t_score({1, 2, 3}, {2, 3, 4}), -std::sqrt(1.5), 1e-12);
    EXPECT_NEAR(t_score({2, 3, 4}, {1, 2, 3}), std::sqrt(1.5), 1e-12);
    EXPECT_EQ(t_score({1, 5, 2}, {1, 5, 2}), 0.0);
    EXPECT_THROW(t_score({1, 1}, {2, 2}), error);
    EXPECT_THROW(t_score({1}, {2, 3}), error);
}

TEST(Stability, MeanAndSampleDeviation) {
    metric_report a, b;
    a.macro["ndcg@20"] = 0.4;
    b.macro["ndcg@20"] = 0.6;
    const auto s = stability_report({a, b}).at("ndcg@20");
    EXPECT_NEAR(s.mean, 0.5, 1e-15);
    EXPECT_NEAR(s.stddev, std::sqrt(0.02), 1e-15);
    EXPECT_EQ(stability_report({a, a, a}).at("ndcg@20").stddev, 0.0);
    EXPECT_THROW(stability_report({a}), error);
}

TEST(Stability, FiveReportsUseFourAsDivisor) {
    std::vector<metric_report> reps(5);
    for (int i = 0; i < 5; ++i) reps[static_cast<std::size_t>(i)].macro["m"] = i;
    EXPECT_NEAR(stability_report(reps).at("m").stddev, std::sqrt(10.0 / 4.0), 1e-15);
}

// --- CLI --------------------------------------------------------------------

namespace {

struct cli_result {
    int code;
    std::string out, err;
};

cli_result cli(std::vector<std::string> args) {
    args.insert(args.begin(), "cmaprank");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string fresh_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / "cmaprank_cli_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

const std::vector<std::string> small_model{"--in-dim", "8", "--hidden", "8", "--out-dim", "8", "--epochs", "2",
                                           "--triplets-per-query", "8"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

TEST(Cli, FullChain) {
    const auto w = fresh_dir("chain");
    const std::vector<std::string> wd{"--workdir", w};
    ASSERT_EQ(cli(with({"synth", "--docs", "60", "--num-queries", "4", "--vocab", "80"}, wd)).code, 0);
    for (const char* stage : {"build-graphs", "index", "retrieve"}) {
        const auto r = cli(with({stage}, wd));
        ASSERT_EQ(r.code, 0) << stage << ": " << r.err;
    }
    auto r = cli(with(with({"train"}, wd), small_model));
    ASSERT_EQ(r.code, 0) << r.err;
    r = cli(with({"rerank"}, wd));
    ASSERT_EQ(r.code, 0) << r.err;
    ASSERT_EQ(cli(with({"evaluate"}, wd)).code, 0);
    ASSERT_EQ(cli(with({"assess-utility", "--pair-cap", "50"}, wd)).code, 0);
    for (const char* f : {"corpus.jsonl", "graphs.jsonl", "index.json", "stage1.run", "model.ckpt.json",
                          "train_history.csv", "rerank.run", "metrics.csv", "utility.csv"})
        EXPECT_TRUE(fs::exists(fs::path(w) / f)) << f;
    const auto metrics = read_file((fs::path(w) / "metrics.csv").string());
    EXPECT_NE(metrics.find("bm25,all,"), std::string::npos);
    EXPECT_NE(metrics.find("rerank,all,"), std::string::npos);
}

TEST(Cli, RerankWithoutCheckpointNamesTrain) {
    const auto w = fresh_dir("no_ckpt");
    const std::vector<std::string> wd{"--workdir", w};
    ASSERT_EQ(cli(with({"synth", "--docs", "40", "--num-queries", "2", "--vocab", "60"}, wd)).code, 0);
    for (const char* stage : {"build-graphs", "index", "retrieve"}) ASSERT_EQ(cli(with({stage}, wd)).code, 0);
    const auto r = cli(with({"rerank"}, wd));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("model.ckpt.json"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("cmaprank train"), std::string::npos) << r.err;
}

TEST(Cli, MissingCorpusNamesSynth) {
    const auto r = cli({"build-graphs", "--workdir", fresh_dir("empty")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("corpus.jsonl"), std::string::npos) << r.err;
}

TEST(Cli, EvaluateTwiceIsByteIdentical) {
    const auto w = fresh_dir("idem");
    const std::vector<std::string> wd{"--workdir", w};
    ASSERT_EQ(cli(with({"synth", "--docs", "40", "--num-queries", "3", "--vocab", "60"}, wd)).code, 0);
    for (const char* stage : {"build-graphs", "index", "retrieve", "evaluate"}) ASSERT_EQ(cli(with({stage}, wd)).code, 0);
    const auto first = read_file((fs::path(w) / "metrics.csv").string());
    ASSERT_EQ(cli(with({"evaluate", "--force"}, wd)).code, 0);
    EXPECT_EQ(read_file((fs::path(w) / "metrics.csv").string()), first);
}

TEST(Cli, FlagsOverrideConfig) {
    const auto w = fresh_dir("override");
    pipeline_config c;
    c.paths.workdir = w;
    c.synth = {40, 3, 60, 3, 0.1, false};
    c.model.kind = model_kind::gin;
    c.model.in_dim = c.model.hidden = c.model.out_dim = 8;
    c.train.epochs = 1;
    c.train.patience = 0;
    c.train.triplets_per_query = 4;
    const auto cfg_path = (fs::path(w) / "config.json").string();
    write_file(cfg_path, to_json(c).dump(2));
    const std::vector<std::string> base{"--config", cfg_path};
    for (const char* stage : {"synth", "build-graphs", "index", "retrieve"}) ASSERT_EQ(cli(with({stage}, base)).code, 0);
    const auto r = cli(with({"train", "--model", "npool"}, base));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ckpt = parse_checkpoint(read_file((fs::path(w) / "model.ckpt.json").string()));
    EXPECT_EQ(ckpt.meta.at("model").at("kind"), "npool");
    EXPECT_EQ(ckpt.meta.at("model").at("in_dim"), 8);
    const auto history = read_file((fs::path(w) / "train_history.csv").string());
    EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 2);
}

TEST(Cli, UnknownConfigKeyRejected) {
    const auto w = fresh_dir("badcfg");
    const auto p = (fs::path(w) / "c.json").string();
    write_file(p, R"({"train": {"epochz": 3}})");
    const auto r = cli({"index", "--config", p});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("train.epochz"), std::string::npos) << r.err;
}

TEST(Cli, HelpListsDefaults) {
    for (const char* sub : {"synth", "build-graphs", "index", "retrieve", "train", "rerank", "evaluate", "assess-utility",
                            "stability"}) {
        const auto r = cli({sub, "--help"});
        EXPECT_EQ(r.code, 0) << sub;
        EXPECT_NE(r.out.find("--workdir"), std::string::npos) << sub;
        EXPECT_NE(r.out.find("--seed"), std::string::npos) << sub;
    }
    const auto train = cli({"train", "--help"}).out;
    for (const char* needle : {"--epochs", "--margin", "--lr", "--model", "--readout", "auto", "epool", "0.001"})
        EXPECT_NE(train.find(needle), std::string::npos) << needle;
}

TEST(Cli, BinaryRuns) {
    const std::string cmd = std::string(CMAPRANK_CLI_PATH) + " retrieve --help";
    FILE* p = popen(cmd.c_str(), "r");
    ASSERT_NE(p, nullptr);
    std::string text;
    char buf[512];
    while (std::fgets(buf, sizeof buf, p)) text += buf;
    EXPECT_EQ(pclose(p), 0);
    EXPECT_NE(text.find("--top-k"), std::string::npos);
    EXPECT_NE(text.find("100"), std::string::npos);
}
