#include "cyclebnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "cyclebnn/bitkernel.hpp"
#include "cyclebnn/checkpoint.hpp"
#include "cyclebnn/error.hpp"
#include "cyclebnn/optim.hpp"

namespace cyclebnn {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int64_t to_i64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int64_t r = std::stoll(v, &pos);
        CBNN_CHECK(pos == v.size(), "config:bad-value:" + key);
        return r;
    } catch (const Error&) {
        throw;
    } catch (...) {
        throw Error("config:bad-value:" + key);
    }
}

double to_f64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        CBNN_CHECK(pos == v.size(), "config:bad-value:" + key);
        return r;
    } catch (const Error&) {
        throw;
    } catch (...) {
        throw Error("config:bad-value:" + key);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw Error("config:bad-value:" + key);
}

} // namespace

TrainConfig parse_train_config(const std::string& path) {
    std::ifstream in(path);
    CBNN_CHECK(in.good(), "config:cannot-open:" + path);
    TrainConfig cfg;
    std::string line;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        CBNN_CHECK(eq != std::string::npos, "config:bad-line:" + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        CBNN_CHECK(!key.empty() && !val.empty(), "config:bad-line:" + line);

        if (key == "arch") cfg.arch = val;
        else if (key == "epochs") cfg.epochs = to_i64(key, val);
        else if (key == "cycles") cfg.cycles = to_i64(key, val);
        else if (key == "min_bits") cfg.min_bits = static_cast<int>(to_i64(key, val));
        else if (key == "max_bits") cfg.max_bits = static_cast<int>(to_i64(key, val));
        else if (key == "schedule_mode") {
            try {
                cfg.schedule_mode = schedule_mode_from_string(val);
            } catch (const Error&) {
                throw Error("config:bad-value:schedule_mode");
            }
        } else if (key == "batch_size") cfg.batch_size = to_i64(key, val);
        else if (key == "lr") cfg.lr = to_f64(key, val);
        else if (key == "beta1") cfg.beta1 = to_f64(key, val);
        else if (key == "beta2") cfg.beta2 = to_f64(key, val);
        else if (key == "weight_decay") cfg.weight_decay = to_f64(key, val);
        else if (key == "eps") cfg.eps = to_f64(key, val);
        else if (key == "seed") cfg.seed = static_cast<uint64_t>(to_i64(key, val));
        else if (key == "dataset") cfg.dataset = val;
        else if (key == "synth_n") cfg.synth_n = to_i64(key, val);
        else if (key == "synth_test_n") cfg.synth_test_n = to_i64(key, val);
        else if (key == "train_images") cfg.train_images = val;
        else if (key == "train_labels") cfg.train_labels = val;
        else if (key == "test_images") cfg.test_images = val;
        else if (key == "test_labels") cfg.test_labels = val;
        else if (key == "train_subset") cfg.train_subset = to_i64(key, val);
        else if (key == "out_dir") cfg.out_dir = val;
        else if (key == "grad_bits") cfg.grad_bits = static_cast<int>(to_i64(key, val));
        else if (key == "binarize_first_last") cfg.binarize_first_last = to_bool(key, val);
        else throw Error("config:unknown-key:" + key);
    }
    validate(cfg);
    return cfg;
}

void validate(const TrainConfig& cfg) {
    CBNN_CHECK(cfg.arch == "convnet-small", "config:unknown-arch:" + cfg.arch);
    try {
        CycleConfig check(cfg.epochs, cfg.cycles, cfg.min_bits, cfg.max_bits, cfg.schedule_mode);
        (void)check;
    } catch (const Error&) {
        throw Error("config:bad-schedule");
    }
    CBNN_CHECK(cfg.batch_size >= 1, "config:bad-value:batch_size");
    CBNN_CHECK(cfg.lr > 0.0, "config:bad-value:lr");
    CBNN_CHECK(cfg.grad_bits >= 0 && cfg.grad_bits <= 8, "config:bad-value:grad_bits");
    CBNN_CHECK(cfg.dataset == "synth" || cfg.dataset == "idx", "config:bad-value:dataset");
    if (cfg.dataset == "synth") {
        CBNN_CHECK(cfg.synth_n >= 2 && cfg.synth_test_n >= 2, "config:bad-value:synth_n");
    } else {
        CBNN_CHECK(!cfg.train_images.empty() && !cfg.train_labels.empty() &&
                       !cfg.test_images.empty() && !cfg.test_labels.empty(),
                   "config:missing-idx-paths");
    }
    CBNN_CHECK(cfg.train_subset >= 0, "config:bad-value:train_subset");
    CBNN_CHECK(!cfg.out_dir.empty(), "config:bad-value:out_dir");
}

std::string metrics_csv_header() {
    return "epoch,bits,lr,loss,train_acc,test_acc,cum_training_macs\n";
}

std::string metrics_csv_row(const EpochRow& row) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%lld,%d,%.9g,%.9g,%.6f,%.6f,%.9g\n",
                  static_cast<long long>(row.epoch), row.bits, row.lr, row.loss, row.train_acc,
                  row.test_acc, row.cum_macs);
    return buf;
}

Dataset synth_test_split(const TrainConfig& cfg) {
    return synth_dataset(cfg.synth_test_n, cfg.seed + 1);
}

namespace {

int argmax_row(const Tensor& logits, int64_t row) {
    const int64_t k = logits.shape()[1];
    int best = 0;
    float best_v = logits[row * k];
    for (int64_t j = 1; j < k; ++j) {
        if (logits[row * k + j] > best_v) {
            best_v = logits[row * k + j];
            best = static_cast<int>(j);
        }
    }
    return best;
}

Batch slice(const Dataset& ds, int64_t from, int64_t count) {
    std::vector<int64_t> order(static_cast<size_t>(ds.size()));
    for (int64_t i = 0; i < ds.size(); ++i) order[static_cast<size_t>(i)] = i;
    return gather(ds, order, from, count);
}

} // namespace

double evaluate(Network& net, const Dataset& ds, int64_t batch_size) {
    const PrecisionContext ctx;
    int64_t correct = 0;
    for (int64_t from = 0; from < ds.size(); from += batch_size) {
        const int64_t count = std::min(batch_size, ds.size() - from);
        Batch batch = slice(ds, from, count);
        Tensor logits = net.forward(batch.images, ctx, false);
        for (int64_t i = 0; i < count; ++i)
            if (argmax_row(logits, i) == batch.labels[static_cast<size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

PackedEval evaluate_packed(Network& net, const Dataset& ds, int64_t batch_size) {
    using clock = std::chrono::steady_clock;
    const PrecisionContext ctx;
    PackedEval result;

    // float reference pass
    std::vector<float> float_logits;
    int64_t correct = 0;
    int64_t classes = 0;
    const auto t0 = clock::now();
    for (int64_t from = 0; from < ds.size(); from += batch_size) {
        const int64_t count = std::min(batch_size, ds.size() - from);
        Batch batch = slice(ds, from, count);
        Tensor logits = net.forward(batch.images, ctx, false);
        classes = logits.shape()[1];
        for (int64_t i = 0; i < count * classes; ++i) float_logits.push_back(logits[i]);
        for (int64_t i = 0; i < count; ++i)
            if (argmax_row(logits, i) == batch.labels[static_cast<size_t>(i)]) ++correct;
    }
    const auto t1 = clock::now();
    result.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());

    // pre-pack all binary conv weights once
    std::map<const Layer*, PackedConvWeights> packed_weights;
    for (auto& layer : net.layers) {
        if (auto* conv = dynamic_cast<BinaryConv2d*>(layer.get())) {
            auto [w_std, w_bin] = conv->binarized();
            (void)w_std;
            packed_weights[layer.get()] = pack_conv_weights(w_bin);
        }
    }

    // packed pass, sample by sample
    bool agree = true;
    const auto t2 = clock::now();
    for (int64_t s = 0; s < ds.size(); ++s) {
        Batch one = slice(ds, s, 1);
        Tensor act = one.images; // [1,c,h,w]
        for (auto& layer : net.layers) {
            if (auto* conv = dynamic_cast<BinaryConv2d*>(layer.get())) {
                const Shape chw{act.shape()[1], act.shape()[2], act.shape()[3]};
                Tensor a1(act.shape());
                for (int64_t i = 0; i < act.numel(); ++i) a1[i] = act[i] < 0.0f ? -1.0f : 1.0f;
                const PackedBits packed = pack(a1.reshaped(chw));
                Tensor out = packed_conv2d(packed, chw, packed_weights[layer.get()], conv->stride,
                                           conv->padding);
                act = out.reshaped(Shape{1, out.shape()[0], out.shape()[1], out.shape()[2]});
            } else {
                act = layer->forward(act, ctx, false);
            }
        }
        for (int64_t j = 0; j < classes; ++j) {
            if (act[j] != float_logits[static_cast<size_t>(s * classes + j)]) {
                agree = false;
                break;
            }
        }
        if (!agree) break;
    }
    const auto t3 = clock::now();

    const double float_sec = std::chrono::duration<double>(t1 - t0).count();
    const double packed_sec = std::chrono::duration<double>(t3 - t2).count();
    result.paths_agree = agree;
    result.float_samples_per_sec =
        float_sec > 0.0 ? static_cast<double>(ds.size()) / float_sec : 0.0;
    result.packed_samples_per_sec =
        packed_sec > 0.0 ? static_cast<double>(ds.size()) / packed_sec : 0.0;
    return result;
}

void save_model(const std::string& path, Network& net, const TrainConfig& cfg,
                const Shape& input_chw, int64_t class_count) {
    std::vector<NamedTensor> records;
    records.push_back({"meta.input_shape",
                       Tensor(Shape{3}, {static_cast<float>(input_chw[0]),
                                         static_cast<float>(input_chw[1]),
                                         static_cast<float>(input_chw[2])})});
    records.push_back({"meta.class_count", Tensor(Shape{1}, {static_cast<float>(class_count)})});
    records.push_back(
        {"meta.binarize_first_last", Tensor(Shape{1}, {cfg.binarize_first_last ? 1.0f : 0.0f})});
    for (Parameter* p : net.parameters()) records.push_back({p->name, p->real});
    for (auto& [name, tensor] : net.buffers()) records.push_back({name, *tensor});
    save_cbnn(path, records);
}

LoadedModel load_model(const std::string& path) {
    const std::vector<NamedTensor> records = load_cbnn(path);
    std::map<std::string, const Tensor*> by_name;
    for (const NamedTensor& r : records) by_name[r.name] = &r.tensor;

    auto fetch = [&](const std::string& name) -> const Tensor& {
        auto it = by_name.find(name);
        CBNN_CHECK(it != by_name.end(), "checkpoint-arch-mismatch");
        return *it->second;
    };

    const Tensor& shape_rec = fetch("meta.input_shape");
    CBNN_CHECK(shape_rec.numel() == 3, "checkpoint-arch-mismatch");
    LoadedModel model;
    model.input_chw = Shape{static_cast<int64_t>(shape_rec[0]), static_cast<int64_t>(shape_rec[1]),
                            static_cast<int64_t>(shape_rec[2])};
    model.class_count = static_cast<int64_t>(fetch("meta.class_count")[0]);
    model.binarize_first_last = fetch("meta.binarize_first_last")[0] != 0.0f;

    model.net = build_network(convnet_small_spec(model.binarize_first_last), model.input_chw,
                              model.class_count, 0);
    for (Parameter* p : model.net.parameters()) {
        const Tensor& stored = fetch(p->name);
        CBNN_CHECK(stored.shape() == p->real.shape(), "checkpoint-arch-mismatch");
        p->real = stored;
        p->zero_grad();
    }
    for (auto& [name, tensor] : model.net.buffers()) {
        const Tensor& stored = fetch(name);
        CBNN_CHECK(stored.shape() == tensor->shape(), "checkpoint-arch-mismatch");
        *tensor = stored;
    }
    return model;
}

TrainResult run_training(const TrainConfig& cfg, std::ostream& log) {
    validate(cfg);

    Dataset train, test;
    if (cfg.dataset == "synth") {
        train = synth_dataset(cfg.synth_n, cfg.seed);
        test = synth_test_split(cfg);
    } else {
        train = load_idx(cfg.train_images, cfg.train_labels);
        test = load_idx(cfg.test_images, cfg.test_labels);
        if (cfg.train_subset > 0 && cfg.train_subset < train.size())
            train = subset(train, cfg.train_subset);
    }

    const Shape input_chw{train.images.shape()[1], train.images.shape()[2],
                          train.images.shape()[3]};
    Network net = build_network(convnet_small_spec(cfg.binarize_first_last), input_chw,
                                train.class_count, cfg.seed);
    const std::vector<LayerCost> costs = model_costs(net, input_chw);

    const int64_t steps_per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
    const LrConfig lr_cfg(cfg.lr, cfg.epochs * steps_per_epoch, 0.0);
    const CycleConfig cycle_cfg(cfg.epochs, cfg.cycles, cfg.min_bits, cfg.max_bits,
                                cfg.schedule_mode);
    AdamW optimizer({cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay});
    const std::vector<Parameter*> params = net.parameters();

    std::filesystem::create_directories(cfg.out_dir);

    TrainResult result;
    std::vector<int> bits_per_epoch;
    double cum_macs = 0.0;
    int64_t global_step = 0;

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const int bits = precision_at(epoch, cycle_cfg);
        bits_per_epoch.push_back(bits);
        PrecisionContext ctx;
        ctx.backward_bits = std::max(1, std::min(bits, 8));
        ctx.grad_bits = cfg.grad_bits;

        double loss_sum = 0.0;
        int64_t correct = 0;
        double last_lr = cfg.lr;
        for (Batch& batch : batches(train, cfg.batch_size, cfg.seed, epoch)) {
            Tensor logits = net.forward(batch.images, ctx, true);
            XentResult xent = softmax_cross_entropy(logits, batch.labels);
            CBNN_CHECK(std::isfinite(xent.loss), "diverged");
            const int64_t b = logits.shape()[0];
            loss_sum += xent.loss * static_cast<double>(b);
            for (int64_t i = 0; i < b; ++i)
                if (argmax_row(logits, i) == batch.labels[static_cast<size_t>(i)]) ++correct;

            net.zero_grad();
            net.backward(xent.grad_logits, ctx);
            last_lr = lr_at(global_step, lr_cfg);
            optimizer.step(params, last_lr);
            ++global_step;
        }

        cum_macs += epoch_adjusted_macs(bits, costs, train.size(), cfg.grad_bits);

        EpochRow row;
        row.epoch = epoch;
        row.bits = bits;
        row.lr = last_lr;
        row.loss = loss_sum / static_cast<double>(train.size());
        row.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
        row.test_acc = evaluate(net, test);
        row.cum_macs = cum_macs;
        result.rows.push_back(row);

        log << "epoch " << epoch << " bits " << bits << " loss " << row.loss << " train_acc "
            << row.train_acc << " test_acc " << row.test_acc << "\n";
    }

    result.cost = run_report(bits_per_epoch, costs, train.size(), CostConvention::cyclebnn,
                             cfg.grad_bits);

    result.metrics_path = cfg.out_dir + "/metrics.csv";
    {
        std::ofstream csv(result.metrics_path, std::ios::binary);
        CBNN_CHECK(csv.good(), "cannot-open-file");
        csv << metrics_csv_header();
        for (const EpochRow& row : result.rows) csv << metrics_csv_row(row);
    }
    {
        std::ofstream txt(cfg.out_dir + "/cost_report.txt", std::ios::binary);
        txt << cost_report_text(result.cost);
        std::ofstream csv(cfg.out_dir + "/cost_report.csv", std::ios::binary);
        csv << cost_report_csv(result.cost);
    }
    result.checkpoint_path = cfg.out_dir + "/model.cbnn";
    save_model(result.checkpoint_path, net, cfg, input_chw, train.class_count);
    return result;
}

} // namespace cyclebnn
