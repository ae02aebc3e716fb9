#include <catch2/catch.hpp>

#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>

#include "atrt/io.hpp"
#include "atrt/phantom.hpp"
#include "atrt/rng.hpp"
#include "atrt/solve.hpp"

using namespace atrt;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("atrt_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

// returns the process exit code, with output silenced
int run_cli(const std::string& args) {
    const char* cli = std::getenv("ATRT_CLI");
    REQUIRE(cli != nullptr);
    const std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

bool cli_available() { return std::getenv("ATRT_CLI") != nullptr; }

}  // namespace

TEST_CASE("image CSV round-trip is lossless") {
    const std::string dir = temp_dir("imgcsv");
    const PixelGrid g(9, 2.0 / 9.0);
    Rng rng(77);
    Image img(g);
    for (auto& v : img.values) v = rng.uniform(-3.0, 3.0);
    img.values[0] = 1.0 / 3.0;
    img.values[1] = 1e-17;
    io::write_image_csv(dir + "/x.csv", img);
    const Image back = io::read_image_csv(dir + "/x.csv");
    REQUIRE(back.grid == img.grid);
    REQUIRE(back.values == img.values);
}

TEST_CASE("sinogram CSV round-trip is lossless and ordered") {
    const std::string dir = temp_dir("sinocsv");
    const PixelGrid g(12, 2.0 / 12.0);
    const ProjectionGeometry geom = make_geometry(5, 9, g, 31);
    Sinogram sino{geom, Vec(geom.ray_count())};
    Rng rng(3);
    for (auto& v : sino.d) v = rng.uniform(0.0, 2.0);
    io::write_sinogram_csv(dir + "/d.csv", sino);

    const std::string text = io::read_text(dir + "/d.csv");
    CHECK(text.rfind("s,omega,value\n", 0) == 0);

    const Sinogram back = io::read_sinogram_csv(dir + "/d.csv");
    REQUIRE(back.d == sino.d);
    REQUIRE(back.geometry.angles == geom.angles);
    REQUIRE(back.geometry.offsets == geom.offsets);
}

TEST_CASE("pgm files carry the 16-bit header and payload size") {
    const std::string dir = temp_dir("pgm");
    const PixelGrid g(7, 1.0);
    Rng rng(5);
    Image img(g);
    for (auto& v : img.values) v = rng.uniform(0.0, 1.0);
    io::write_image_pgm(dir + "/x.pgm", img);
    const std::string text = io::read_text(dir + "/x.pgm");
    CHECK(text.rfind("P5\n", 0) == 0);
    CHECK(text.find("65535") != std::string::npos);
    // header then exactly 2 bytes per pixel
    const size_t payload = text.size() - text.find("65535\n") - 6;
    CHECK(payload == static_cast<size_t>(g.pixel_count()) * 2);
}

TEST_CASE("history csv carries the pinned column header") {
    std::vector<ReconHistoryRow> rows{{0, 1.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6}};
    const std::string text = io::history_csv(rows);
    CHECK(text.rfind("k,objective,r,s,beta,mb_proportion,delta_a,delta_f\n", 0) == 0);
    CHECK(text.find("\n0,1,0.1") != std::string::npos);
}

TEST_CASE("config parsing handles sections, comments and bad lines") {
    const std::string text =
        "# comment\n"
        "[solver]\n"
        "alpha = 0.25\n"
        "t=2\n"
        "\n"
        "[phantom]\n"
        "name = nested_disks\n";
    const io::ConfigMap cfg = io::parse_config(text);
    CHECK(cfg.at("solver.alpha") == "0.25");
    CHECK(cfg.at("solver.t") == "2");
    CHECK(cfg.at("phantom.name") == "nested_disks");
    CHECK_THROWS_AS(io::parse_config("bad line without equals\n"), validation_error);
    CHECK_THROWS_AS(io::parse_config("= nokey\n"), validation_error);
}

TEST_CASE("scan and boundary CSV shapes") {
    CHECK(io::scan_csv({0.1, 0.2}, {1.0, 2.0}).rfind("offset,value\n", 0) == 0);
    const std::string b = io::boundaries_csv({{{1.0, 2.0}}, {{3.0, 4.0}}});
    CHECK(b.rfind("set_index,x,y\n", 0) == 0);
    CHECK(b.find("1,3,4") != std::string::npos);
}

TEST_CASE("cli phantom writes artifacts deterministically") {
    if (!cli_available()) return;
    const std::string d1 = temp_dir("cli_ph1");
    const std::string d2 = temp_dir("cli_ph2");
    REQUIRE(run_cli("phantom --phantom nested_disks --grid 32 --seed 5 --out " + d1) == 0);
    REQUIRE(run_cli("phantom --phantom nested_disks --grid 32 --seed 5 --out " + d2) == 0);
    for (const char* f : {"/a.csv", "/f.csv", "/a.pgm", "/f.pgm", "/manifest.txt"}) {
        CHECK(fs::exists(d1 + f));
        CHECK(io::read_text(d1 + f) == io::read_text(d2 + f));
    }
}

TEST_CASE("cli rejects unknown phantom names with exit 2") {
    if (!cli_available()) return;
    const std::string d = temp_dir("cli_bad");
    CHECK(run_cli("phantom --phantom walnut --grid 16 --out " + d) == 2);
}

TEST_CASE("cli forward validates grids and reproduces noise") {
    if (!cli_available()) return;
    const std::string d = temp_dir("cli_fw");
    REQUIRE(run_cli("phantom --phantom nested_disks --grid 24 --out " + d + "/p24") == 0);
    REQUIRE(run_cli("phantom --phantom nested_disks --grid 16 --out " + d + "/p16") == 0);

    // mismatched grids: validation error
    CHECK(run_cli("forward --a " + d + "/p24/a.csv --f " + d + "/p16/f.csv --out " + d + "/bad") == 3);

    // noiseless run matches the library forward exactly
    REQUIRE(run_cli("forward --a " + d + "/p24/a.csv --f " + d + "/p24/f.csv --projections 5 "
                    "--detectors 11 --seed 9 --out " + d + "/s0") == 0);
    const Sinogram got = io::read_sinogram_csv(d + "/s0/sinogram.csv");
    const Image a = io::read_image_csv(d + "/p24/a.csv");
    const Image f = io::read_image_csv(d + "/p24/f.csv");
    const Sinogram want = forward(a, f, make_geometry(5, 11, a.grid, 9));
    REQUIRE(got.d == want.d);

    // noisy runs are reproducible per seed
    REQUIRE(run_cli("forward --a " + d + "/p24/a.csv --f " + d + "/p24/f.csv --projections 5 "
                    "--detectors 11 --noise 0.05 --seed 9 --out " + d + "/s1") == 0);
    REQUIRE(run_cli("forward --a " + d + "/p24/a.csv --f " + d + "/p24/f.csv --projections 5 "
                    "--detectors 11 --noise 0.05 --seed 9 --out " + d + "/s2") == 0);
    CHECK(io::read_text(d + "/s1/sinogram.csv") == io::read_text(d + "/s2/sinogram.csv"));
    CHECK(io::read_text(d + "/s1/sinogram.csv") != io::read_text(d + "/s0/sinogram.csv"));
}

TEST_CASE("cli recon completes on a desk-scale run and reports consistently") {
    if (!cli_available()) return;
    const std::string d = temp_dir("cli_rc");
    REQUIRE(run_cli("phantom --phantom nested_disks --grid 16 --out " + d + "/p") == 0);
    REQUIRE(run_cli("forward --a " + d + "/p/a.csv --f " + d + "/p/f.csv --projections 8 "
                    "--detectors 23 --seed 4 --out " + d + "/s") == 0);
    REQUIRE(run_cli("recon --sinogram " + d + "/s/sinogram.csv --grid 16 --admissible 0,1 "
                    "--alpha 0.04 --t 10 --lambda 0.02 --eta 0.02 --max-outer 6 --max-inner 40 "
                    "--max-xstep 40 --truth " + d + "/p/a.csv --out " + d + "/r") == 0);
    for (const char* f : {"/a_recon.csv", "/f_recon.csv", "/a_recon.pgm", "/f_recon.pgm",
                          "/history.csv", "/summary.txt", "/manifest.txt"}) {
        REQUIRE(fs::exists(d + "/r" + f));
    }
    // summary proportion equals the library metric on the written image
    const Image a_rec = io::read_image_csv(d + "/r/a_recon.csv");
    const double want = multibang_proportion(a_rec, AdmissibleSet(Vec{0.0, 1.0}), 1e-9);
    const std::string summary = io::read_text(d + "/r/summary.txt");
    const size_t pos = summary.find("mb_proportion: ");
    REQUIRE(pos != std::string::npos);
    const double got = std::stod(summary.substr(pos + 15));
    CHECK(got == Approx(want).margin(1e-12));
    CHECK(summary.find("misclassification: ") != std::string::npos);
    const std::string history = io::read_text(d + "/r/history.csv");
    CHECK(history.rfind("k,objective,r,s,beta,mb_proportion,delta_a,delta_f\n", 0) == 0);
}

TEST_CASE("cli config file fills unset options and rejects unknown keys") {
    if (!cli_available()) return;
    const std::string d = temp_dir("cli_cfg");
    io::write_text(d + "/good.cfg", "[phantom]\nphantom = three_region\ngrid = 20\n");
    REQUIRE(run_cli("--config " + d + "/good.cfg phantom --out " + d + "/p") == 0);
    const Image a = io::read_image_csv(d + "/p/a.csv");
    CHECK(a.grid.m == 20);
    std::set<double> distinct(a.values.begin(), a.values.end());
    CHECK(distinct == std::set<double>{0.0, 0.5, 1.0});

    // command line overrides the config
    REQUIRE(run_cli("--config " + d + "/good.cfg phantom --grid 12 --out " + d + "/p2") == 0);
    CHECK(io::read_image_csv(d + "/p2/a.csv").grid.m == 12);

    io::write_text(d + "/bad.cfg", "[phantom]\nnonsense = 1\n");
    CHECK(run_cli("--config " + d + "/bad.cfg phantom --out " + d + "/p3") == 3);
    CHECK(run_cli("--config " + d + "/missing.cfg phantom --out " + d + "/p4") == 3);
}

TEST_CASE("cli singscan writes scan and report artifacts") {
    if (!cli_available()) return;
    const std::string d = temp_dir("cli_sg");
    REQUIRE(run_cli("singscan --lab square --mode flat --out " + d) == 0);
    CHECK(fs::exists(d + "/report.csv"));
    CHECK(fs::exists(d + "/report.txt"));
    const std::string report = io::read_text(d + "/report.csv");
    CHECK(report.rfind("metric,value\n", 0) == 0);
    CHECK(report.find("edge_ray_flat,true") != std::string::npos);
    CHECK(report.find("interior_ray_flat,false") != std::string::npos);
}

TEST_CASE("cli usage errors exit with 2") {
    if (!cli_available()) return;
    CHECK(run_cli("unknown-subcommand") == 2);
    CHECK(run_cli("") == 2);
}
