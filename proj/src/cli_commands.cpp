#include "cyclebnn/cli_commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cyclebnn/bitkernel.hpp"
#include "cyclebnn/checkpoint.hpp"
#include "cyclebnn/error.hpp"
#include "cyclebnn/quant.hpp"
#include "cyclebnn/schedule.hpp"
#include "cyclebnn/trainer.hpp"

namespace cyclebnn {

namespace {

// Runtime numerical failures exit 3; anything else (parsing, validation,
// malformed files) exits 2.
int exit_code_for(const Error& e) {
    const std::string token = e.what();
    if (token == "diverged" || token == "zero-variance-weights" ||
        token == "non-finite-gradient" || token == "integration-failure" ||
        token == "packed-mismatch")
        return 3;
    return 2;
}

template <typename Fn> int guarded(std::ostream& err, Fn&& body) {
    try {
        return body();
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

struct OutputFile {
    std::ofstream file;
    std::ostream* stream;

    OutputFile(const std::string& path, std::ostream& fallback) {
        if (path == "-" || path.empty()) {
            stream = &fallback;
        } else {
            file.open(path, std::ios::binary);
            CBNN_CHECK(file.good(), "cannot-open-file");
            stream = &file;
        }
    }
};

} // namespace

int cmd_train(const std::string& config_path, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        const TrainConfig cfg = parse_train_config(config_path);
        const TrainResult result = run_training(cfg, out);
        out << "metrics: " << result.metrics_path << "\n";
        out << "checkpoint: " << result.checkpoint_path << "\n";
        out << cost_report_text(result.cost);
        if (!result.rows.empty()) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "final train_acc %.6f test_acc %.6f\n",
                          result.rows.back().train_acc, result.rows.back().test_acc);
            out << buf;
        }
        return 0;
    });
}

int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        LoadedModel model = load_model(opt.checkpoint);
        Dataset ds = opt.use_synth ? synth_dataset(opt.synth_n, opt.synth_seed)
                                   : load_idx(opt.images, opt.labels);
        CBNN_CHECK(Shape({ds.images.shape()[1], ds.images.shape()[2], ds.images.shape()[3]}) ==
                       model.input_chw,
                   "checkpoint-arch-mismatch");
        char buf[160];
        if (opt.packed) {
            if (!opt.packed_model.empty()) {
                verify_packed_model(opt.packed_model, model);
                out << "packed-file-verified: true\n";
            }
            const PackedEval r = evaluate_packed(model.net, ds, opt.batch);
            out << "paths-agree: " << (r.paths_agree ? "true" : "false") << "\n";
            CBNN_CHECK(r.paths_agree, "packed-mismatch");
            std::snprintf(buf, sizeof(buf), "top1 %.6f\n", r.accuracy);
            out << buf;
            std::snprintf(buf, sizeof(buf),
                          "throughput float %.1f samples/s, packed %.1f samples/s\n",
                          r.float_samples_per_sec, r.packed_samples_per_sec);
            out << buf;
        } else {
            const double acc = evaluate(model.net, ds, opt.batch);
            std::snprintf(buf, sizeof(buf), "top1 %.6f\n", acc);
            out << buf;
        }
        return 0;
    });
}

int cmd_schedule(int64_t total_epochs, int64_t cycles, int min_bits, int max_bits,
                 const std::string& mode, double initial_lr, const std::string& out_path,
                 std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        const CycleConfig cfg(total_epochs, cycles, min_bits, max_bits,
                              schedule_mode_from_string(mode));
        const LrConfig lr_cfg(initial_lr, total_epochs, 0.0);
        OutputFile sink(out_path, out);
        *sink.stream << "epoch,bits,lr\n";
        char buf[96];
        for (int64_t e = 0; e < total_epochs; ++e) {
            std::snprintf(buf, sizeof(buf), "%lld,%d,%.9g\n", static_cast<long long>(e),
                          precision_at(e, cfg), lr_at(e, lr_cfg));
            *sink.stream << buf;
        }
        return 0;
    });
}

namespace {

struct NamedFit {
    std::string name;
    bool degenerate = false;
    double amplitude = 0.0, mean = 0.0, sigma = 0.0;
};

std::vector<NamedFit> fits_from_file(const std::string& path) {
    std::ifstream in(path);
    CBNN_CHECK(in.good(), "cannot-open-file");
    std::vector<NamedFit> fits;
    std::string line;
    int idx = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        std::string a, m, s;
        if (!std::getline(row, a, ',') || !std::getline(row, m, ',') || !std::getline(row, s, ','))
            continue;
        NamedFit fit;
        try {
            fit.amplitude = std::stod(a);
            fit.mean = std::stod(m);
            fit.sigma = std::stod(s);
        } catch (...) {
            continue; // header or malformed line
        }
        fit.name = "fit_" + std::string(1, static_cast<char>('a' + idx % 26)) +
                   (idx >= 26 ? std::to_string(idx / 26) : "");
        ++idx;
        fits.push_back(fit);
    }
    CBNN_CHECK(!fits.empty(), "qe:empty-fits");
    return fits;
}

std::vector<NamedFit> fits_from_checkpoint(const std::string& path) {
    LoadedModel model = load_model(path);
    std::vector<NamedFit> fits;
    for (auto& layer : model.net.layers) {
        const bool is_binary = layer->kind() == LayerSpec::Kind::binary_conv ||
                               layer->kind() == LayerSpec::Kind::binary_linear;
        if (!is_binary) continue;
        Parameter* p = layer->parameters().front();
        NamedFit fit;
        fit.name = p->name;
        // histogram the standardized weights: that is the distribution the
        // binarizer actually sees; a zero-variance layer cannot be fitted and
        // is reported as degenerate rather than failing the whole table
        try {
            Tensor w_std = standardize(p->real);
            const HistogramFit h = fit_gaussian_histogram(w_std.values());
            if (!h.ok) {
                fit.degenerate = true;
            } else {
                fit.amplitude = h.amplitude;
                fit.mean = h.mean;
                fit.sigma = h.sigma;
            }
        } catch (const Error&) {
            fit.degenerate = true;
        }
        fits.push_back(fit);
    }
    CBNN_CHECK(!fits.empty(), "qe:empty-fits");
    return fits;
}

} // namespace

HistogramFit fit_gaussian_histogram(const std::vector<float>& values, int bin_count) {
    HistogramFit result;
    if (values.size() < 8 || bin_count < 4) return result;
    float lo = values[0], hi = values[0];
    for (float v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi > lo)) return result;

    const double width = (static_cast<double>(hi) - lo) / bin_count;
    std::vector<double> counts(static_cast<size_t>(bin_count), 0.0);
    for (float v : values) {
        int b = static_cast<int>((v - lo) / width);
        b = std::clamp(b, 0, bin_count - 1);
        counts[static_cast<size_t>(b)] += 1.0;
    }

    // weighted least squares of log(density) against a quadratic in the bin
    // center; a Gaussian is exactly log-quadratic, so this is closed form
    double s0 = 0, sx = 0, sx2 = 0, sx3 = 0, sx4 = 0, sy = 0, sxy = 0, sx2y = 0;
    const double n = static_cast<double>(values.size());
    for (int b = 0; b < bin_count; ++b) {
        const double c = counts[static_cast<size_t>(b)];
        if (c <= 0.0) continue;
        const double x = lo + (b + 0.5) * width;
        const double y = std::log(c / (n * width)); // density estimate
        const double w = c;                         // Poisson-ish weighting
        s0 += w;
        sx += w * x;
        sx2 += w * x * x;
        sx3 += w * x * x * x;
        sx4 += w * x * x * x * x;
        sy += w * y;
        sxy += w * x * y;
        sx2y += w * x * x * y;
    }
    // solve [s0 sx sx2; sx sx2 sx3; sx2 sx3 sx4] [a0 a1 a2]' = [sy sxy sx2y]'
    double a[3][4] = {{s0, sx, sx2, sy}, {sx, sx2, sx3, sxy}, {sx2, sx3, sx4, sx2y}};
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (std::abs(a[pivot][col]) < 1e-12) return result;
        std::swap(a[col], a[pivot]);
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (int k = col; k < 4; ++k) a[r][k] -= f * a[col][k];
        }
    }
    const double a0 = a[0][3] / a[0][0];
    const double a1 = a[1][3] / a[1][1];
    const double a2 = a[2][3] / a[2][2];
    if (!(a2 < 0.0)) return result; // no downward curvature -> not Gaussian-like

    const double sigma_sq = -1.0 / (2.0 * a2);
    result.sigma = std::sqrt(sigma_sq);
    result.mean = a1 * sigma_sq;
    result.amplitude = std::exp(a0 + result.mean * result.mean / (2.0 * sigma_sq));
    result.ok = std::isfinite(result.amplitude) && std::isfinite(result.mean) &&
                std::isfinite(result.sigma) && result.amplitude > 0.0 && result.sigma > 0.0;
    return result;
}

int cmd_qe(const QeOptions& opt, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() {
        CBNN_CHECK(opt.fits_file.empty() != opt.checkpoint.empty(), "qe:need-fits-or-checkpoint");
        CBNN_CHECK(!opt.bits.empty(), "qe:empty-bits");
        const std::vector<NamedFit> fits = opt.fits_file.empty()
                                               ? fits_from_checkpoint(opt.checkpoint)
                                               : fits_from_file(opt.fits_file);
        QEConfig cfg;
        cfg.alpha = opt.alpha;
        cfg.lo = opt.lo;
        cfg.hi = opt.hi;
        cfg.steps = opt.steps;
        cfg.quant_lo = opt.quant_lo;
        cfg.quant_hi = opt.quant_hi;
        validate(cfg);

        OutputFile sink(opt.out_path, out);
        *sink.stream << "bits";
        for (const NamedFit& f : fits) *sink.stream << "," << f.name;
        *sink.stream << "\n";
        char buf[64];
        for (int bits : opt.bits) {
            *sink.stream << bits;
            for (const NamedFit& f : fits) {
                if (f.degenerate) {
                    *sink.stream << ",degenerate";
                    continue;
                }
                const double qe =
                    quantization_error(GaussianFit(f.amplitude, f.mean, f.sigma), bits, cfg);
                std::snprintf(buf, sizeof(buf), ",%.6f", qe);
                *sink.stream << buf;
            }
            *sink.stream << "\n";
        }
        return 0;
    });
}

namespace {

std::vector<PackedRecord> build_packed_records(LoadedModel& model) {
    std::vector<PackedRecord> records;
    auto push_float = [&records](const std::string& name, const Tensor& t) {
        PackedRecord r;
        r.name = name;
        r.kind = 0;
        r.shape = t.shape();
        r.floats = t;
        records.push_back(std::move(r));
    };
    push_float("meta.input_shape",
               Tensor(Shape{3}, {static_cast<float>(model.input_chw[0]),
                                 static_cast<float>(model.input_chw[1]),
                                 static_cast<float>(model.input_chw[2])}));
    push_float("meta.class_count", Tensor(Shape{1}, {static_cast<float>(model.class_count)}));
    push_float("meta.binarize_first_last",
               Tensor(Shape{1}, {model.binarize_first_last ? 1.0f : 0.0f}));

    for (auto& layer : model.net.layers) {
        if (auto* conv = dynamic_cast<BinaryConv2d*>(layer.get())) {
            auto [w_std, w_bin] = conv->binarized();
            (void)w_std;
            PackedRecord r;
            r.name = conv->weight.name;
            r.kind = 1;
            r.shape = w_bin.shape();
            r.bits = pack(w_bin);
            records.push_back(std::move(r));
        } else if (auto* lin = dynamic_cast<BinaryLinear*>(layer.get())) {
            auto [w_std, w_bin] = lin->binarized();
            (void)w_std;
            PackedRecord r;
            r.name = lin->weight.name;
            r.kind = 1;
            r.shape = w_bin.shape();
            r.bits = pack(w_bin);
            records.push_back(std::move(r));
        } else {
            for (Parameter* p : layer->parameters()) push_float(p->name, p->real);
        }
        for (auto& [name, tensor] : layer->buffers()) push_float(name, *tensor);
    }
    return records;
}

} // namespace

void verify_packed_model(const std::string& path, LoadedModel& model) {
    const std::vector<PackedRecord> stored = load_cbnp(path);
    const std::vector<PackedRecord> fresh = build_packed_records(model);
    CBNN_CHECK(stored.size() == fresh.size(), "packed-mismatch");
    for (size_t i = 0; i < stored.size(); ++i) {
        const PackedRecord& a = stored[i];
        const PackedRecord& b = fresh[i];
        CBNN_CHECK(a.name == b.name && a.kind == b.kind && a.shape == b.shape, "packed-mismatch");
        if (a.kind == 0) {
            CBNN_CHECK(a.floats.values() == b.floats.values(), "packed-mismatch");
        } else {
            CBNN_CHECK(a.bits.logical_len == b.bits.logical_len && a.bits.words == b.bits.words,
                       "packed-mismatch");
        }
    }
}

int cmd_pack(const std::string& checkpoint, const std::string& out_path, std::ostream& out,
             std::ostream& err) {
    return guarded(err, [&]() {
        LoadedModel model = load_model(checkpoint);
        save_cbnp(out_path, build_packed_records(model));
        out << "packed: " << out_path << "\n";
        return 0;
    });
}

} // namespace cyclebnn
