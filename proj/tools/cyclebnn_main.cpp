#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cyclebnn/cli_commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"CycleBNN: cyclic-precision binary neural network trainer"};
    app.require_subcommand(1);

    // train
    std::string train_config;
    auto* train = app.add_subcommand("train", "run the cyclic-precision training loop");
    train->add_option("--config", train_config, "key=value config file")->required();

    // eval
    cyclebnn::EvalOptions eval_opt;
    bool eval_use_idx = false;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", eval_opt.checkpoint)->required();
    eval->add_flag("--packed", eval_opt.packed, "run the bit-packed path and verify it");
    eval->add_option("--packed-model", eval_opt.packed_model, "CBNP file to verify against");
    eval->add_option("--synth-n", eval_opt.synth_n);
    eval->add_option("--synth-seed", eval_opt.synth_seed);
    eval->add_option("--images", eval_opt.images);
    eval->add_option("--labels", eval_opt.labels);
    eval->add_option("--batch", eval_opt.batch);

    // schedule
    int64_t sch_epochs = 600, sch_cycles = 8;
    int sch_min = 2, sch_max = 6;
    std::string sch_mode = "anchored", sch_out = "-";
    double sch_lr = 0.001;
    auto* schedule = app.add_subcommand("schedule", "emit the (epoch,bits,lr) schedule as CSV");
    schedule->add_option("epochs", sch_epochs)->required();
    schedule->add_option("cycles", sch_cycles)->required();
    schedule->add_option("min_bits", sch_min)->required();
    schedule->add_option("max_bits", sch_max)->required();
    schedule->add_option("mode", sch_mode)->check(CLI::IsMember({"literal", "anchored"}));
    schedule->add_option("--lr", sch_lr, "initial lr for the lr column");
    schedule->add_option("--out", sch_out, "output path, - for stdout");

    // qe
    cyclebnn::QeOptions qe_opt;
    std::string qe_range, qe_bits;
    auto* qe = app.add_subcommand("qe", "quantization-error table (rows = bits, columns = fits)");
    qe->add_option("--fits", qe_opt.fits_file, "CSV of A,mu,sigma per row");
    qe->add_option("--checkpoint", qe_opt.checkpoint, "fit each binary layer's weight histogram");
    qe->add_option("--bits", qe_bits, "comma-separated bit widths (default 2..12)");
    qe->add_option("--alpha", qe_opt.alpha);
    qe->add_option("--range", qe_range, "integration interval lo,hi (default -15,15)");
    qe->add_option("--steps", qe_opt.steps);
    qe->add_option("--out", qe_opt.out_path, "output path, - for stdout");

    // pack
    std::string pack_checkpoint, pack_out;
    auto* pack = app.add_subcommand("pack", "write the bit-packed CBNP model file");
    pack->add_option("--checkpoint", pack_checkpoint)->required();
    pack->add_option("--out", pack_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 2;
    }

    if (train->parsed()) return cyclebnn::cmd_train(train_config, std::cout, std::cerr);

    if (eval->parsed()) {
        eval_use_idx = !eval_opt.images.empty() || !eval_opt.labels.empty();
        if (eval_use_idx && (eval_opt.images.empty() || eval_opt.labels.empty())) {
            std::cerr << "error: --images and --labels must be given together\n";
            return 2;
        }
        eval_opt.use_synth = !eval_use_idx;
        return cyclebnn::cmd_eval(eval_opt, std::cout, std::cerr);
    }

    if (schedule->parsed())
        return cyclebnn::cmd_schedule(sch_epochs, sch_cycles, sch_min, sch_max, sch_mode, sch_lr,
                                      sch_out, std::cout, std::cerr);

    if (qe->parsed()) {
        if (!qe_bits.empty()) {
            qe_opt.bits.clear();
            std::string cur;
            for (char c : qe_bits + ",") {
                if (c == ',') {
                    if (!cur.empty()) {
                        try {
                            qe_opt.bits.push_back(std::stoi(cur));
                        } catch (...) {
                            std::cerr << "error: bad --bits value '" << cur << "'\n";
                            return 2;
                        }
                    }
                    cur.clear();
                } else {
                    cur += c;
                }
            }
        }
        if (!qe_range.empty()) {
            const size_t comma = qe_range.find(',');
            if (comma == std::string::npos) {
                std::cerr << "error: --range wants lo,hi\n";
                return 2;
            }
            try {
                qe_opt.lo = std::stod(qe_range.substr(0, comma));
                qe_opt.hi = std::stod(qe_range.substr(comma + 1));
            } catch (...) {
                std::cerr << "error: bad --range value\n";
                return 2;
            }
        }
        return cyclebnn::cmd_qe(qe_opt, std::cout, std::cerr);
    }

    if (pack->parsed()) return cyclebnn::cmd_pack(pack_checkpoint, pack_out, std::cout, std::cerr);

    return 2;
}
