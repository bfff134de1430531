#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

std::string bin() {
    const char* b = std::getenv("IDS_BIN");
    REQUIRE_MESSAGE(b != nullptr, "IDS_BIN must point at the ids binary");
    return b;
}

int run(const std::string& cmd) {
    int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Workspace {
    fs::path dir;

    Workspace() {
        dir = fs::temp_directory_path() / ("ids_cli_" + std::to_string(::getpid()) + "_" +
                                           std::to_string(counter()++));
        fs::create_directories(dir);
    }
    ~Workspace() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }

    std::string path(const std::string& name) const { return (dir / name).string(); }

    void write_toy_csvs() {
        std::ofstream train(dir / "train.csv");
        train << "proto,rate,size,label\n";
        for (int i = 0; i < 12; ++i)
            train << (i % 2 ? "tcp" : "udp") << "," << (0.5 + 0.01 * i) << "," << (10 + i)
                  << ",normal\n";
        for (int i = 0; i < 12; ++i)
            train << (i % 2 ? "tcp" : "icmp") << "," << (9.0 + 0.01 * i) << "," << (500 + i)
                  << ",dos\n";
        std::ofstream test(dir / "test.csv");
        test << "proto,rate,size,label\n";
        test << "tcp,0.55,12,normal\n";
        test << "udp,9.05,505,dos\n";
    }

    std::string write_config(std::size_t epochs, std::uint64_t seed,
                             const std::string& out_name = "out") {
        nlohmann::json j;
        j["version"] = 1;
        j["train_csv"] = path("train.csv");
        j["test_csv"] = path("test.csv");
        j["label_column"] = "label";
        j["normal_label"] = "normal";
        j["out_dir"] = path(out_name);
        j["model"] = {{"pairs", 2}, {"dropout_rate", 0.0}};
        j["train"] = {{"epochs", epochs}, {"batch_size", 8}, {"seed", seed}};
        std::string p = path("run.json");
        std::ofstream out(p);
        out << j.dump(2);
        return p;
    }

    void write_alerts() {
        auto emit = [&](const std::string& name, const std::string& layer,
                        std::initializer_list<std::pair<double, int>> rows) {
            std::ofstream out(dir / name);
            out << "layer,timestamp,class,record_id\n";
            int i = 0;
            for (auto [t, c] : rows)
                out << layer << "," << t << "," << c << "," << layer << i++ << "\n";
        };
        // five attack instances; three produce alerts in all layers in-window
        emit("edge.csv", "edge",
             {{0, 1}, {1000, 1}, {2000, 1}, {3000, 1}, {4000, 1}});
        emit("fog.csv", "fog", {{10, 1}, {1010, 1}, {2010, 1}});
        emit("cloud.csv", "cloud", {{20, 1}, {1020, 1}, {2020, 1}});
    }
};

}  // namespace

TEST_CASE("cli: train happy path writes a checkpoint and metadata") {
    Workspace ws;
    ws.write_toy_csvs();
    std::string cfg = ws.write_config(2, 7);
    int rc = run(bin() + " train --config " + cfg + " > " + ws.path("stdout.txt") + " 2>&1");
    CHECK(rc == 0);
    CHECK(fs::exists(ws.dir / "out" / "checkpoint.json"));
    CHECK(fs::exists(ws.dir / "out" / "schema.json"));
    CHECK(fs::exists(ws.dir / "out" / "loss_trace.json"));
    CHECK(fs::exists(ws.dir / "out" / "run_metadata.json"));

    nlohmann::json meta = nlohmann::json::parse(slurp(ws.dir / "out" / "run_metadata.json"));
    CHECK(meta["seed"] == 7);
    CHECK(meta["epochs"] == 2);
}

TEST_CASE("cli: epochs=0 still writes an initialization checkpoint") {
    Workspace ws;
    ws.write_toy_csvs();
    std::string cfg = ws.write_config(0, 1);
    int rc = run(bin() + " train --config " + cfg + " >/dev/null 2>&1");
    CHECK(rc == 0);
    CHECK(fs::exists(ws.dir / "out" / "checkpoint.json"));
}

TEST_CASE("cli: config and data errors use distinct exit codes") {
    Workspace ws;
    // unreadable config -> 1
    CHECK(run(bin() + " train --config " + ws.path("nope.json") + " >/dev/null 2>&1") == 1);
    // config OK but train CSV missing -> 2
    std::string cfg = ws.write_config(1, 1);
    CHECK(run(bin() + " train --config " + cfg + " >/dev/null 2>&1") == 2);
    // malformed JSON -> 1
    {
        std::ofstream bad(ws.dir / "bad.json");
        bad << "{not json";
    }
    CHECK(run(bin() + " train --config " + ws.path("bad.json") + " >/dev/null 2>&1") == 1);
}

TEST_CASE("cli: eval reports metrics and rejects schema mismatches") {
    Workspace ws;
    ws.write_toy_csvs();
    std::string cfg = ws.write_config(3, 5);
    REQUIRE(run(bin() + " train --config " + cfg + " >/dev/null 2>&1") == 0);

    std::string ckpt = ws.path("out") + "/checkpoint.json";
    int rc = run(bin() + " eval --checkpoint " + ckpt + " --test " + ws.path("test.csv") +
                 " --out " + ws.path("eval") + " >/dev/null 2>&1");
    CHECK(rc == 0);
    CHECK(fs::exists(ws.dir / "eval" / "metrics.json"));
    nlohmann::json m = nlohmann::json::parse(slurp(ws.dir / "eval" / "metrics.json"));
    CHECK(m.contains("tp"));
    CHECK(m.contains("dr"));

    // different column set -> schema mismatch -> 2
    {
        std::ofstream other(ws.dir / "other.csv");
        other << "a,b,label\n1,2,normal\n";
    }
    CHECK(run(bin() + " eval --checkpoint " + ckpt + " --test " + ws.path("other.csv") +
              " --out " + ws.path("eval2") + " >/dev/null 2>&1") == 2);
}

TEST_CASE("cli: correlate sweeps thresholds and computes TDR 0.6 on the synthetic scenario") {
    Workspace ws;
    ws.write_alerts();
    int rc = run(bin() + " correlate --edge " + ws.path("edge.csv") + " --fog " +
                 ws.path("fog.csv") + " --cloud " + ws.path("cloud.csv") +
                 " --thresholds 50 --out " + ws.path("corr") + " > " + ws.path("corr.txt") +
                 " 2>&1");
    CHECK(rc == 0);
    CHECK(fs::exists(ws.dir / "corr" / "tdr.json"));
    nlohmann::json rows = nlohmann::json::parse(slurp(ws.dir / "corr" / "tdr.json"));
    REQUIRE(rows.size() == 1);
    CHECK(rows[0]["overall"].get<double>() == doctest::Approx(0.6));

    // missing layer file -> 2
    CHECK(run(bin() + " correlate --edge " + ws.path("edge.csv") + " --fog " +
              ws.path("missing.csv") + " --cloud " + ws.path("cloud.csv") + " --out " +
              ws.path("corr3") + " >/dev/null 2>&1") == 2);
    // unsorted threshold list -> 2
    CHECK(run(bin() + " correlate --edge " + ws.path("edge.csv") + " --fog " + ws.path("fog.csv") +
              " --cloud " + ws.path("cloud.csv") + " --thresholds 50 10 --out " + ws.path("corr4") +
              " >/dev/null 2>&1") == 2);
}

TEST_CASE("cli: correlate on empty alert files exits 0 with undefined markers") {
    Workspace ws;
    for (const char* n : {"edge.csv", "fog.csv", "cloud.csv"}) {
        std::ofstream out(ws.dir / n);
        out << "layer,timestamp,class,record_id\n";
    }
    int rc = run(bin() + " correlate --edge " + ws.path("edge.csv") + " --fog " +
                 ws.path("fog.csv") + " --cloud " + ws.path("cloud.csv") + " --thresholds 10" +
                 " --out " + ws.path("corr") + " > " + ws.path("out.txt") + " 2>&1");
    CHECK(rc == 0);
    CHECK(slurp(ws.dir / "out.txt").find("—") != std::string::npos);
}

TEST_CASE("cli: gradcheck passes, is repeatable, and the corrupt hook is caught") {
    Workspace ws;
    CHECK(run(bin() + " gradcheck > " + ws.path("a.txt") + " 2>&1") == 0);
    CHECK(run(bin() + " gradcheck > " + ws.path("b.txt") + " 2>&1") == 0);
    CHECK(slurp(ws.dir / "a.txt") == slurp(ws.dir / "b.txt"));
    CHECK(run(bin() + " gradcheck --corrupt-backward >/dev/null 2>&1") == 4);
}

TEST_CASE("cli: flag overrides beat config values") {
    Workspace ws;
    ws.write_toy_csvs();
    std::string cfg = ws.write_config(1, 3);
    int rc = run(bin() + " train --config " + cfg + " --epochs 2 --seed 11 --out " +
                 ws.path("alt") + " >/dev/null 2>&1");
    CHECK(rc == 0);
    nlohmann::json meta = nlohmann::json::parse(slurp(ws.dir / "alt" / "run_metadata.json"));
    CHECK(meta["epochs"] == 2);
    CHECK(meta["seed"] == 11);
}
