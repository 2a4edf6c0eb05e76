#include <doctest.h>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cyclebnn/checkpoint.hpp"
#include "cyclebnn/cli_commands.hpp"
#include "cyclebnn/trainer.hpp"

using namespace cyclebnn;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int count_lines(const std::string& text) {
    int n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

} // namespace

TEST_CASE("cmd_schedule emits one row per epoch") {
    std::ostringstream out, err;
    const std::string path = tmp_path("cbnn_sched.csv");
    CHECK(cmd_schedule(600, 8, 2, 6, "anchored", 0.001, path, out, err) == 0);
    const std::string csv = slurp(path);
    CHECK(count_lines(csv) == 601); // header + 600 rows
    CHECK(csv.rfind("epoch,bits,lr\n", 0) == 0);

    CHECK(cmd_schedule(1, 1, 2, 6, "anchored", 0.001, path, out, err) == 0);
    const std::string single = slurp(path);
    CHECK(count_lines(single) == 2);
    CHECK(single.find("0,2,") != std::string::npos); // N=1: single row at min bits

    std::ostringstream err2;
    CHECK(cmd_schedule(600, 8, 0, 6, "anchored", 0.001, path, out, err2) == 2);
    std::filesystem::remove(path);
}

TEST_CASE("cmd_qe with a fits file") {
    const std::string fits = tmp_path("cbnn_fits.csv");
    {
        std::ofstream out(fits);
        out << "A,mu,sigma\n";
        out << "1.0,0.0,1.0\n";
    }
    const std::string table = tmp_path("cbnn_qe.csv");
    QeOptions opt;
    opt.fits_file = fits;
    opt.out_path = table;
    opt.bits = {1};
    opt.lo = -1.0;
    opt.hi = 1.0;
    opt.steps = 20000;
    std::ostringstream out, err;
    CHECK(cmd_qe(opt, out, err) == 0);
    const std::string csv = slurp(table);
    CHECK(csv.find("bits,fit_a") != std::string::npos);
    CHECK(csv.find("1,0.000000") != std::string::npos); // QE at 1 bit is zero

    // empty fits file is a usage error
    {
        std::ofstream o(fits);
        o << "A,mu,sigma\n";
    }
    std::ostringstream out2, err2;
    CHECK(cmd_qe(opt, out2, err2) == 2);
    std::filesystem::remove(fits);
    std::filesystem::remove(table);
}

TEST_CASE("cmd_train validation failures exit 2") {
    const std::string cfg = tmp_path("cbnn_badcfg.txt");
    {
        std::ofstream out(cfg);
        out << "min_bits = 0\n";
    }
    std::ostringstream out, err;
    CHECK(cmd_train(cfg, out, err) == 2);
    CHECK(err.str().find("error:") != std::string::npos);

    std::ostringstream out2, err2;
    CHECK(cmd_train(tmp_path("definitely_missing.cfg"), out2, err2) == 2);
    std::filesystem::remove(cfg);
}

TEST_CASE("train / eval / pack end to end") {
    const std::string dir = tmp_path("cbnn_cli_run");
    std::filesystem::remove_all(dir);
    const std::string cfg_path = tmp_path("cbnn_cli_cfg.txt");
    {
        std::ofstream out(cfg_path);
        out << "epochs = 2\ncycles = 1\nsynth_n = 128\nsynth_test_n = 64\nseed = 1\n";
        out << "out_dir = " << dir << "\n";
    }
    std::ostringstream out, err;
    REQUIRE(cmd_train(cfg_path, out, err) == 0);
    const std::string checkpoint = dir + "/model.cbnn";
    REQUIRE(std::filesystem::exists(checkpoint));

    // eval reproduces the final metrics row on the documented test split (seed+1)
    const std::string metrics = slurp(dir + "/metrics.csv");
    const size_t last_comma_block = metrics.find_last_of('\n', metrics.size() - 2);
    std::ostringstream eval_out, eval_err;
    EvalOptions eopt;
    eopt.checkpoint = checkpoint;
    eopt.use_synth = true;
    eopt.synth_n = 64;
    eopt.synth_seed = 2; // train seed 1 -> held-out split seed 2
    REQUIRE(cmd_eval(eopt, eval_out, eval_err) == 0);
    std::istringstream rows(metrics.substr(last_comma_block + 1));
    std::string cell;
    for (int i = 0; i < 6; ++i) std::getline(rows, cell, ','); // test_acc column
    CHECK(eval_out.str().find("top1 " + cell) != std::string::npos);

    // pack is deterministic
    const std::string packed_a = tmp_path("cbnn_cli_a.cbnp");
    const std::string packed_b = tmp_path("cbnn_cli_b.cbnp");
    std::ostringstream pack_out, pack_err;
    REQUIRE(cmd_pack(checkpoint, packed_a, pack_out, pack_err) == 0);
    REQUIRE(cmd_pack(checkpoint, packed_b, pack_out, pack_err) == 0);
    CHECK(slurp(packed_a) == slurp(packed_b));

    // packed eval agrees with the float path and verifies the CBNP file
    std::ostringstream peval_out, peval_err;
    eopt.packed = true;
    eopt.packed_model = packed_a;
    REQUIRE(cmd_eval(eopt, peval_out, peval_err) == 0);
    CHECK(peval_out.str().find("packed-file-verified: true") != std::string::npos);
    CHECK(peval_out.str().find("paths-agree: true") != std::string::npos);

    // corrupted checkpoint magic -> exit 2
    {
        std::fstream f(checkpoint, std::ios::binary | std::ios::in | std::ios::out);
        f.write("ZZZZ", 4);
    }
    std::ostringstream bad_out, bad_err;
    CHECK(cmd_eval(eopt, bad_out, bad_err) == 2);
    CHECK(bad_err.str().find("bad-checkpoint-magic") != std::string::npos);

    std::filesystem::remove(packed_a);
    std::filesystem::remove(packed_b);
    std::filesystem::remove(cfg_path);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cmd_pack rejects zero-variance binary layers with exit 3") {
    const std::string dir = tmp_path("cbnn_cli_zv");
    std::filesystem::remove_all(dir);
    const std::string cfg_path = tmp_path("cbnn_cli_zv_cfg.txt");
    {
        std::ofstream out(cfg_path);
        out << "epochs = 1\ncycles = 1\nsynth_n = 64\nsynth_test_n = 16\nseed = 3\n";
        out << "out_dir = " << dir << "\n";
    }
    std::ostringstream out, err;
    REQUIRE(cmd_train(cfg_path, out, err) == 0);
    const std::string checkpoint = dir + "/model.cbnn";

    // flatten one binary layer's weights to a constant
    std::vector<NamedTensor> records = load_cbnn(checkpoint);
    for (NamedTensor& r : records)
        if (r.name == "l3.weight")
            for (int64_t i = 0; i < r.tensor.numel(); ++i) r.tensor[i] = 5.0f;
    save_cbnn(checkpoint, records);

    std::ostringstream pack_out, pack_err;
    CHECK(cmd_pack(checkpoint, tmp_path("cbnn_zv.cbnp"), pack_out, pack_err) == 3);
    CHECK(pack_err.str().find("zero-variance-weights") != std::string::npos);
    std::filesystem::remove(cfg_path);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cmd_qe --checkpoint fits binary layer histograms") {
    const std::string dir = tmp_path("cbnn_cli_qeck");
    std::filesystem::remove_all(dir);
    const std::string cfg_path = tmp_path("cbnn_cli_qeck_cfg.txt");
    {
        std::ofstream out(cfg_path);
        out << "epochs = 1\ncycles = 1\nsynth_n = 64\nsynth_test_n = 16\nseed = 4\n";
        out << "out_dir = " << dir << "\n";
    }
    std::ostringstream out, err;
    REQUIRE(cmd_train(cfg_path, out, err) == 0);

    QeOptions opt;
    opt.checkpoint = dir + "/model.cbnn";
    opt.out_path = tmp_path("cbnn_qeck.csv");
    opt.bits = {2, 8};
    opt.steps = 30000;
    std::ostringstream qe_out, qe_err;
    REQUIRE(cmd_qe(opt, qe_out, qe_err) == 0);
    const std::string csv = slurp(opt.out_path);
    CHECK(csv.find("l3.weight") != std::string::npos);
    CHECK(csv.find("l7.weight") != std::string::npos);
    CHECK(csv.find("degenerate") == std::string::npos);

    // a zero-variance layer is reported as degenerate, still exit 0
    std::vector<NamedTensor> records = load_cbnn(opt.checkpoint);
    for (NamedTensor& r : records)
        if (r.name == "l3.weight")
            for (int64_t i = 0; i < r.tensor.numel(); ++i) r.tensor[i] = 2.0f;
    save_cbnn(opt.checkpoint, records);
    std::ostringstream qe_out2, qe_err2;
    REQUIRE(cmd_qe(opt, qe_out2, qe_err2) == 0);
    const std::string csv2 = slurp(opt.out_path);
    CHECK(csv2.find("degenerate") != std::string::npos);
    CHECK(csv2.find("l7.weight") != std::string::npos);
    std::filesystem::remove(cfg_path);
    std::filesystem::remove(opt.out_path);
    std::filesystem::remove_all(dir);
}
