// SPDX-License-Identifier: MIT
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const std::string cli = AWDRO_CLI_PATH;

struct RunResult {
    int code;
    std::string out;
};

RunResult run(const std::string& args) {
    fs::path tmp = fs::temp_directory_path() / "awdro_cli_out.txt";
    std::string cmd = cli + " " + args + " > " + tmp.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    std::ifstream in(tmp);
    std::stringstream ss;
    ss << in.rdbuf();
    int code = rc < 0 ? rc : WEXITSTATUS(rc);
    return {code, ss.str()};
}

fs::path workdir() {
    fs::path d = fs::temp_directory_path() / "awdro_cli_tests";
    fs::create_directories(d);
    return d;
}

nlohmann::json parse(const std::string& text) { return nlohmann::json::parse(text); }

}  // namespace

TEST_CASE("gen produces loadable trees and dist of a tree with itself is zero") {
    fs::path tree = workdir() / "tree.json";
    RunResult gen = run("gen --seed 5 --horizon 2 --branching 2 -o " + tree.string());
    REQUIRE(gen.code == 0);

    RunResult dist = run("dist " + tree.string() + " " + tree.string());
    REQUIRE(dist.code == 0);
    auto doc = parse(dist.out);
    CHECK(std::abs(doc["w_p"].get<double>()) < 1e-12);
    CHECK(std::abs(doc["aw_p"].get<double>()) < 1e-12);
    CHECK(std::abs(doc["aw_p_inf"].get<double>()) < 1e-12);
}

TEST_CASE("dist exits 2 on mismatched horizons and on malformed input") {
    fs::path a = workdir() / "a.json", b = workdir() / "b.json", bad = workdir() / "bad.json";
    REQUIRE(run("gen --seed 1 --horizon 2 -o " + a.string()).code == 0);
    REQUIRE(run("gen --seed 1 --horizon 3 -o " + b.string()).code == 0);
    CHECK(run("dist " + a.string() + " " + b.string()).code == 2);
    std::ofstream(bad) << "{\"horizon\": 2}";
    CHECK(run("dist " + a.string() + " " + bad.string()).code == 2);
}

TEST_CASE("dro at delta 0 reproduces the plain expectation") {
    fs::path tree = workdir() / "dro_tree.json";
    REQUIRE(run("gen --seed 9 --horizon 2 --branching 2 -o " + tree.string()).code == 0);
    RunResult res = run("dro " + tree.string() + " --delta 0 --builtin linear");
    REQUIRE(res.code == 0);
    auto doc = parse(res.out);

    // recompute the expectation from the emitted adversary tree (identity at
    // delta 0, so it carries the original path values)
    double expect = 0.0;
    std::ifstream in(tree);
    nlohmann::json raw;
    in >> raw;
    // walk: sum over leaves of path_prob * (y1 + y2)
    auto adversary = doc["adversary_tree"];
    std::map<int, std::pair<double, double>> nodes;  // id -> (value, prob)
    std::map<int, int> parent;
    for (const auto& n : adversary["nodes"]) {
        nodes[n["id"].get<int>()] = {n["value"].get<double>(), n["prob"].get<double>()};
        parent[n["id"].get<int>()] = n["parent"].is_null() ? -1 : n["parent"].get<int>();
    }
    for (const auto& n : adversary["nodes"]) {
        if (n["depth"].get<int>() != 2) continue;
        int id = n["id"].get<int>();
        int par = parent[id];
        double prob = nodes[id].second * nodes[par].second;
        expect += prob * (nodes[par].first + nodes[id].first);
    }
    CHECK(doc["value"].get<double>() == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("dro analytic one-period value is 1 and the adversary reloads") {
    fs::path tree = workdir() / "point.json";
    std::ofstream(tree) << R"({"horizon":1,"p":2,"nodes":[
        {"id":0,"depth":1,"value":0.0,"prob":1.0,"parent":null}]})";
    fs::path out = workdir() / "dro_out.json";
    RunResult res = run("dro " + tree.string() + " --delta 1 --builtin linear -o " + out.string());
    REQUIRE(res.code == 0);
    std::ifstream in(out);
    nlohmann::json doc;
    in >> doc;
    CHECK(doc["value"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));

    // the emitted adversary tree is itself a loadable input
    fs::path adv = workdir() / "adv.json";
    std::ofstream(adv) << doc["adversary_tree"].dump();
    CHECK(run("dist " + adv.string() + " " + adv.string()).code == 0);
}

TEST_CASE("dro --martingale refuses a non-martingale tree with exit 3") {
    fs::path tree = workdir() / "plain.json";
    REQUIRE(run("gen --seed 12 --horizon 2 -o " + tree.string()).code == 0);
    RunResult res = run("dro " + tree.string() + " --delta 0.1 --builtin linear --martingale");
    CHECK(res.code == 3);
}

TEST_CASE("controlled dro with gap certificate") {
    fs::path tree = workdir() / "mart.json";
    REQUIRE(run("gen --seed 3 --horizon 2 --branching 2 --martingale -o " + tree.string()).code ==
            0);
    RunResult res = run("dro " + tree.string() +
                        " --delta 0.1 --builtin quadratic_tracking --klo -2 --khi 2 "
                        "--grid-points 8 --control-points 33 --gap");
    REQUIRE(res.code == 0);
    auto doc = parse(res.out);
    CHECK(doc.contains("minimax_gap"));
    CHECK(doc["minimax_gap"].get<double>() >= -1e-12);
    CHECK(doc["minimax_gap"].get<double>() <= 1e-3);
    CHECK(!doc["policy"].empty());
}

TEST_CASE("sens on the analytic two-point tree emits slopes and CSV") {
    fs::path tree = workdir() / "two.json";
    std::ofstream(tree) << R"({"horizon":1,"p":2,"nodes":[
        {"id":0,"depth":1,"value":-1.0,"prob":0.5,"parent":null},
        {"id":1,"depth":1,"value":1.0,"prob":0.5,"parent":null}]})";
    fs::path csv = workdir() / "slopes.csv";
    RunResult res = run("sens " + tree.string() + " --builtin linear --csv " + csv.string());
    REQUIRE(res.code == 0);
    auto doc = parse(res.out);
    CHECK(doc["upsilon"].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(doc["slopes"].size() == 5);  // default schedule
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "delta,slope,floor");
    int rows = 0;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) ++rows;
    CHECK(rows == 5);

    RunResult mart = run("sens " + tree.string() + " --builtin linear --martingale");
    REQUIRE(mart.code == 0);
    CHECK(std::abs(parse(mart.out)["upsilon"].get<double>()) < 1e-10);
}

TEST_CASE("sens exits 4 when the policy needs an unasserted capability") {
    fs::path tree = workdir() / "ctrl.json";
    REQUIRE(run("gen --seed 4 --horizon 1 --branching 2 -o " + tree.string()).code == 0);
    // controlled expression without --strongly-convex: policy extraction refuses
    RunResult res = run("sens " + tree.string() + " --cost \"(y1-a1)^2\"");
    CHECK(res.code == 4);
}

TEST_CASE("verify passes, fails under fault injection, and is thread-stable") {
    RunResult ok = run("verify --count 12");
    CHECK(ok.code == 0);
    RunResult bad = run("verify --count 4 --inject-bug --dump-dir " +
                        (workdir() / "dumps").string());
    CHECK(bad.code == 1);

    RunResult t1 = run("verify --count 12 --threads 1");
    RunResult t4 = run("verify --count 12 --threads 4");
    CHECK(t1.code == 0);
    CHECK(t1.out == t4.out);
}

TEST_CASE("dist reproduces the worked heavy-tail numbers at p = 1") {
    double eps = 0.01;
    fs::path a = workdir() / "ht_point.json", b = workdir() / "ht_tree.json";
    std::ofstream(a) << R"({"horizon":2,"p":1,"nodes":[
        {"id":0,"depth":1,"value":0.0,"prob":1.0,"parent":null},
        {"id":1,"depth":2,"value":0.0,"prob":1.0,"parent":0}]})";
    nlohmann::json doc;
    doc["horizon"] = 2;
    doc["p"] = 1;
    doc["nodes"] = nlohmann::json::array(
        {{{"id", 0}, {"depth", 1}, {"value", eps * (eps - 1.0)}, {"prob", eps}, {"parent", nullptr}},
         {{"id", 1}, {"depth", 2}, {"value", -1.0 / std::sqrt(eps)}, {"prob", 1.0}, {"parent", 0}},
         {{"id", 2},
          {"depth", 1},
          {"value", eps * eps},
          {"prob", 1.0 - eps},
          {"parent", nullptr}},
         {{"id", 3},
          {"depth", 2},
          {"value", std::sqrt(eps) / (1.0 - eps)},
          {"prob", 1.0},
          {"parent", 2}}});
    std::ofstream(b) << doc.dump();
    RunResult res = run("dist " + a.string() + " " + b.string());
    REQUIRE(res.code == 0);
    auto out = parse(res.out);
    CHECK(out["aw_p"].get<double>() == doctest::Approx(0.200198).epsilon(1e-9));
    CHECK(out["aw_p_inf"].get<double>() == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("martingale call value via the CLI sits in the sandwich") {
    fs::path tree = workdir() / "binom.json";
    std::ofstream(tree) << R"({"horizon":2,"p":2,"nodes":[
        {"id":0,"depth":1,"value":-1.0,"prob":0.5,"parent":null},
        {"id":1,"depth":1,"value":1.0,"prob":0.5,"parent":null},
        {"id":2,"depth":2,"value":-2.0,"prob":0.5,"parent":0},
        {"id":3,"depth":2,"value":0.0,"prob":0.5,"parent":0},
        {"id":4,"depth":2,"value":0.0,"prob":0.5,"parent":1},
        {"id":5,"depth":2,"value":2.0,"prob":0.5,"parent":1}]})";
    auto value = [&](const std::string& args) {
        RunResult r = run("dro " + tree.string() + " " + args +
                          " --builtin call --strike 0.5 --grid-points 12");
        REQUIRE(r.code == 0);
        return parse(r.out)["value"].get<double>();
    };
    double v0 = value("--delta 0");
    double vm = value("--delta 0.4 --martingale");
    double vu = value("--delta 0.4");
    CHECK(vm >= v0 - 1e-10);
    CHECK(vm <= vu + 1e-10);
}

TEST_CASE("AWDRO_THREADS is honored when --threads is absent") {
    fs::path tree = workdir() / "env.json";
    REQUIRE(run("gen --seed 33 --horizon 2 -o " + tree.string()).code == 0);
    fs::path o1 = workdir() / "env1.json", o2 = workdir() / "env2.json";
    std::string base = cli + " dist " + tree.string() + " " + tree.string();
    REQUIRE(std::system(("AWDRO_THREADS=1 " + base + " -o " + o1.string()).c_str()) == 0);
    REQUIRE(std::system(("AWDRO_THREADS=4 " + base + " -o " + o2.string()).c_str()) == 0);
    std::ifstream f1(o1), f2(o2);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
}

TEST_CASE("sens handles p = 1 trees by omitting directions and floors") {
    fs::path tree = workdir() / "p1.json";
    std::ofstream(tree) << R"({"horizon":1,"p":1,"nodes":[
        {"id":0,"depth":1,"value":-1.0,"prob":0.5,"parent":null},
        {"id":1,"depth":1,"value":1.0,"prob":0.5,"parent":null}]})";
    RunResult res = run("sens " + tree.string() + " --builtin linear --deltas 0.2 0.1");
    REQUIRE(res.code == 0);
    auto doc = parse(res.out);
    CHECK_FALSE(doc.contains("directions"));
    CHECK(doc["slopes"].size() == 2);
}

TEST_CASE("dro output is byte-identical across thread counts") {
    fs::path tree = workdir() / "thr.json";
    REQUIRE(run("gen --seed 21 --horizon 2 --branching 2 -o " + tree.string()).code == 0);
    fs::path o1 = workdir() / "t1.json", o4 = workdir() / "t4.json";
    REQUIRE(run("dro " + tree.string() + " --delta 0.3 --builtin linear --grid-points 8 "
                "--threads 1 -o " + o1.string()).code == 0);
    REQUIRE(run("dro " + tree.string() + " --delta 0.3 --builtin linear --grid-points 8 "
                "--threads 4 -o " + o4.string()).code == 0);
    std::ifstream f1(o1), f4(o4);
    std::stringstream s1, s4;
    s1 << f1.rdbuf();
    s4 << f4.rdbuf();
    std::string a = s1.str(), b = s4.str();
    // the embedded config records the thread count; compare everything else
    auto j1 = nlohmann::json::parse(a), j4 = nlohmann::json::parse(b);
    j1["config"].erase("threads");
    j4["config"].erase("threads");
    CHECK(j1.dump() == j4.dump());
}
