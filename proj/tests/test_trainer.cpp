#include <doctest.h>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cyclebnn/error.hpp"
#include "cyclebnn/trainer.hpp"

using namespace cyclebnn;

namespace {

std::string tmp_dir(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

TrainConfig tiny_config(const std::string& out_dir) {
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.cycles = 1;
    cfg.min_bits = 2;
    cfg.max_bits = 6;
    cfg.synth_n = 256;
    cfg.synth_test_n = 64;
    cfg.batch_size = 16;
    cfg.seed = 1;
    cfg.out_dir = out_dir;
    return cfg;
}

} // namespace

TEST_CASE("config file parsing") {
    const std::string path = tmp_dir("cbnn_cfg.txt");
    {
        std::ofstream out(path);
        out << "# comment line\n";
        out << "epochs = 4\n";
        out << "cycles = 2\n";
        out << "lr = 0.002\n";
        out << "dataset = synth\n";
        out << "synth_n = 100\n";
        out << "schedule_mode = literal\n";
        out << "binarize_first_last = false\n";
    }
    TrainConfig cfg = parse_train_config(path);
    CHECK(cfg.epochs == 4);
    CHECK(cfg.cycles == 2);
    CHECK(cfg.lr == 0.002);
    CHECK(cfg.schedule_mode == ScheduleMode::literal);

    {
        std::ofstream out(path);
        out << "epohcs = 4\n"; // typo must be rejected
    }
    CHECK_THROWS_WITH_AS(parse_train_config(path), "config:unknown-key:epohcs", Error);

    {
        std::ofstream out(path);
        out << "min_bits = 0\n";
    }
    CHECK_THROWS_WITH_AS(parse_train_config(path), "config:bad-schedule", Error);
    std::filesystem::remove(path);
}

TEST_CASE("tiny training run logs, learns, and checkpoints") {
    const std::string dir = tmp_dir("cbnn_train_a");
    std::filesystem::remove_all(dir);
    TrainConfig cfg = tiny_config(dir);
    std::ostringstream log;
    TrainResult result = run_training(cfg, log);
    REQUIRE(result.rows.size() == 3);
    CHECK(result.rows.back().loss < result.rows.front().loss);
    CHECK(result.rows.back().train_acc > 0.8);
    CHECK(std::filesystem::exists(result.metrics_path));
    CHECK(std::filesystem::exists(result.checkpoint_path));
    CHECK(std::filesystem::exists(dir + "/cost_report.txt"));

    // eval on the same held-out split reproduces the final metrics row
    LoadedModel model = load_model(result.checkpoint_path);
    const double acc = evaluate(model.net, synth_test_split(cfg));
    CHECK(acc == result.rows.back().test_acc);
    std::filesystem::remove_all(dir);
}

TEST_CASE("identical config and seed give byte-identical metrics.csv") {
    const std::string dir_a = tmp_dir("cbnn_det_a");
    const std::string dir_b = tmp_dir("cbnn_det_b");
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
    TrainConfig cfg_a = tiny_config(dir_a);
    TrainConfig cfg_b = tiny_config(dir_b);
    std::ostringstream log;
    run_training(cfg_a, log);
    run_training(cfg_b, log);
    const std::string bytes_a = slurp(dir_a + "/metrics.csv");
    const std::string bytes_b = slurp(dir_b + "/metrics.csv");
    REQUIRE(!bytes_a.empty());
    CHECK(bytes_a == bytes_b);
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

TEST_CASE("packed inference path agrees exactly with the float path") {
    const std::string dir = tmp_dir("cbnn_train_pk");
    std::filesystem::remove_all(dir);
    TrainConfig cfg = tiny_config(dir);
    std::ostringstream log;
    TrainResult result = run_training(cfg, log);
    LoadedModel model = load_model(result.checkpoint_path);
    PackedEval pe = evaluate_packed(model.net, synth_test_split(cfg));
    CHECK(pe.paths_agree);
    CHECK(pe.accuracy == result.rows.back().test_acc);
    std::filesystem::remove_all(dir);
}

TEST_CASE("idx dataset end-to-end training path") {
    // 6-class 12x12 synthetic digits-like set written through the IDX format
    const int64_t n = 240, h = 12, w = 12;
    Dataset ds;
    ds.images = Tensor(Shape{n, 1, h, w});
    ds.labels.resize(static_cast<size_t>(n));
    ds.class_count = 6;
    for (int64_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 6);
        ds.labels[static_cast<size_t>(i)] = label;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const bool bright = (x / 2) == label; // one bright column band per class
                ds.images[(i * h + y) * w + x] = bright ? 0.8f : -0.8f;
            }
    }
    const std::string img = tmp_dir("cbnn_idx_train_images");
    const std::string lab = tmp_dir("cbnn_idx_train_labels");
    save_idx(ds, img, lab);

    const std::string dir = tmp_dir("cbnn_idx_run");
    std::filesystem::remove_all(dir);
    TrainConfig cfg;
    cfg.dataset = "idx";
    cfg.train_images = img;
    cfg.train_labels = lab;
    cfg.test_images = img;
    cfg.test_labels = lab;
    cfg.train_subset = 120; // exercises the subset path
    cfg.epochs = 3;
    cfg.cycles = 1;
    cfg.batch_size = 16;
    cfg.seed = 7;
    cfg.out_dir = dir;
    std::ostringstream log;
    TrainResult result = run_training(cfg, log);
    REQUIRE(result.rows.size() == 3);
    CHECK(result.rows.back().train_acc > 0.9);
    CHECK(result.rows.back().loss < result.rows.front().loss);
    std::filesystem::remove(img);
    std::filesystem::remove(lab);
    std::filesystem::remove_all(dir);
}

TEST_CASE("binarize_first_last trains with binary stem and head") {
    const std::string dir = tmp_dir("cbnn_bfl_run");
    std::filesystem::remove_all(dir);
    TrainConfig cfg = tiny_config(dir);
    cfg.binarize_first_last = true;
    std::ostringstream log;
    TrainResult result = run_training(cfg, log);
    REQUIRE(result.rows.size() == 3);
    CHECK(result.rows.back().loss < result.rows.front().loss);

    // reload and check the flag plus packed-path agreement survive the head swap
    LoadedModel model = load_model(result.checkpoint_path);
    CHECK(model.binarize_first_last);
    PackedEval pe = evaluate_packed(model.net, synth_test_split(cfg));
    CHECK(pe.paths_agree);
    std::filesystem::remove_all(dir);
}

TEST_CASE("load_model rejects mismatched checkpoints") {
    const std::string dir = tmp_dir("cbnn_train_mm");
    std::filesystem::remove_all(dir);
    TrainConfig cfg = tiny_config(dir);
    std::ostringstream log;
    TrainResult result = run_training(cfg, log);

    // corrupt the magic
    std::fstream f(result.checkpoint_path,
                   std::ios::binary | std::ios::in | std::ios::out);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_WITH_AS(load_model(result.checkpoint_path), "bad-checkpoint-magic", Error);
    std::filesystem::remove_all(dir);
}
