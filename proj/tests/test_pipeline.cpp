#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "hemopinn/pipeline.hpp"

using namespace hemopinn;
using namespace hemopinn::cli;
namespace fs = std::filesystem;

namespace {

// small transient problem that runs the whole pipeline in seconds
const char* kTiny = R"(
[run]
mode = transient
seed = 3

[geometry]
rect = 0 0 3 1
rect = 2 1 3 2.5
rect = 2 -1.5 3 0
inlet = vertical 0 0 1
outlet = horizontal 2.5 2 3
outlet = horizontal -1.5 2 3
L = 1.0
U = 120.0

[solver]
h = 0.25
dt = 0.001
T = 0.66
save_every = 10

[waveform]
type = pulse
Q_sys = 20.0
Q_dia = 0.0
t_sys = 0.25
period = 0.66

[windkessel.1]
Rp = 713.0
Rd = 12023.0
C = 8.256e-5

[windkessel.2]
Rp = 98.0
Rd = 1650.0
C = 6.015e-4

[initial]
pi0_mmhg = 78.8

[measurement]
snr_db = 18.0
pixel_spacing = 0.1
cadence = 0.03

[network]
hidden_layers = 2
width = 10
pi_hidden_layers = 2
pi_width = 6

[training]
epochs_stage1 = 2
epochs_stage2 = 3
collocation = 96
wall_points = 32
batch = 96
realizations = 2
quad_nodes = 3
ode_extra_times = 3
t_close = 0.30
t_end = 0.66
weights = automatic
workers = 2
)";

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("hemopinn_test_" + std::to_string(rng::hash3(::getpid(), 0, 0) % 1000000));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) { return io::read_file(p); }

} // namespace

TEST_CASE("pipeline composes: simulate, measure, train, postprocess, report") {
    TempDir tmp;
    auto rc = RunConfig::from_text(kTiny);

    cmd_simulate(rc, tmp.path);
    REQUIRE(fs::exists(tmp.path / "snapshots" / "index.json"));
    REQUIRE(fs::exists(tmp.path / "snapshots" / "snap_0066.csv")); // 67 snapshots
    REQUIRE(!fs::exists(tmp.path / "snapshots" / "snap_0067.csv"));

    cmd_measure(rc, tmp.path);
    REQUIRE(fs::exists(tmp.path / "measurements" / "measurements.csv"));
    const auto meta = nlohmann::json::parse(slurp(tmp.path / "measurements" / "meta.json"));
    CHECK(meta.at("plan").at("times").size() == 22); // 22 frames over the cycle
    CHECK(meta.at("venc").get<double>() > 0.0);

    cmd_train(rc, tmp.path);
    REQUIRE(fs::exists(tmp.path / "training" / "estimates.json"));
    REQUIRE(fs::exists(tmp.path / "training" / "realization-0" / "history.csv"));
    REQUIRE(fs::exists(tmp.path / "training" / "realization-1" / "checkpoint.bin"));
    const auto est = nlohmann::json::parse(slurp(tmp.path / "training" / "estimates.json"));
    CHECK(est.at("realizations").size() == 2);
    CHECK(est.at("Rp").contains("std")); // two realizations -> std reported
    CHECK(est.contains("median_realization"));

    cmd_postprocess(rc, tmp.path);
    REQUIRE(fs::exists(tmp.path / "postprocess" / "curves.csv"));
    REQUIRE(fs::exists(tmp.path / "postprocess" / "index.json"));

    cmd_report(rc, tmp.path);
    REQUIRE(fs::exists(tmp.path / "report" / "parameters.csv"));
    REQUIRE(fs::exists(tmp.path / "report" / "params_evolution.svg"));
    REQUIRE(fs::exists(tmp.path / "report" / "outlet_curves.svg"));
    REQUIRE(fs::exists(tmp.path / "report" / "metrics.json"));
    const auto metrics = nlohmann::json::parse(slurp(tmp.path / "report" / "metrics.json"));
    CHECK(metrics.at("checksums_verified").get<bool>());
    CHECK(metrics.at("flow_rms_vs_reference").size() == 2);
}

TEST_CASE("stages are byte-identical on rerun with the same seed") {
    TempDir tmp;
    auto rc = RunConfig::from_text(kTiny);
    cmd_simulate(rc, tmp.path);
    cmd_measure(rc, tmp.path);

    const auto snap = slurp(tmp.path / "snapshots" / "snap_0010.csv");
    const auto meas = slurp(tmp.path / "measurements" / "measurements.csv");
    const auto manifest = slurp(tmp.path / "manifest.json");

    cmd_simulate(rc, tmp.path);
    cmd_measure(rc, tmp.path);
    CHECK(slurp(tmp.path / "snapshots" / "snap_0010.csv") == snap);
    CHECK(slurp(tmp.path / "measurements" / "measurements.csv") == meas);
    CHECK(slurp(tmp.path / "manifest.json") == manifest);

    // another seed changes the noise draws
    auto rc2 = rc;
    rc2.seed = 99;
    cmd_measure(rc2, tmp.path);
    CHECK(slurp(tmp.path / "measurements" / "measurements.csv") != meas);
}

TEST_CASE("missing prerequisites produce clean errors") {
    TempDir tmp;
    auto rc = RunConfig::from_text(kTiny);
    CHECK_THROWS_AS(cmd_measure(rc, tmp.path), MissingSnapshots);
    CHECK_THROWS_AS(cmd_postprocess(rc, tmp.path), MissingEstimates);
    CHECK_THROWS_AS(cmd_report(rc, tmp.path), MissingHistory);
}

TEST_CASE("report detects artifact tampering through checksums") {
    TempDir tmp;
    auto rc = RunConfig::from_text(kTiny);
    cmd_simulate(rc, tmp.path);
    cmd_measure(rc, tmp.path);
    cmd_train(rc, tmp.path);
    // corrupt one artifact
    io::write_file_atomic(tmp.path / "measurements" / "measurements.csv", "tampered\n");
    CHECK_THROWS_AS(cmd_report(rc, tmp.path), ChecksumMismatch);
}

TEST_CASE("snapshot CSV round-trips through the disk format") {
    TempDir tmp;
    auto rc = RunConfig::from_text(kTiny);
    cmd_simulate(rc, tmp.path);
    const auto mask = geom::build_mask(rc.spec, rc.h);
    auto [idx, fields] = io::read_snapshots(tmp.path / "snapshots", mask);
    REQUIRE(fields.size() == 67);
    // rewrite and compare bytes: %.17g round-trips doubles exactly
    const auto again = io::snapshot_csv(mask, fields[30]);
    CHECK(again == slurp(tmp.path / "snapshots" / "snap_0030.csv"));
    CHECK(idx.times[30] == Catch::Approx(0.30));
}
