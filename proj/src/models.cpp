#include "advgrid/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "advgrid/metrics.hpp"

namespace advgrid {

namespace {

// Layer plans. Pooling halves the spatial size (floor); dense input sizes
// are derived from the image size at build time.

struct ConvSpec {
    int in, out, k, pad;
};

Tensor init_tensor(std::vector<int> shape, std::mt19937_64& rng) {
    int fan_in = 1, fan_out = 1;
    if (shape.size() == 4) {
        fan_in = shape[1] * shape[2] * shape[3];
        fan_out = shape[0] * shape[2] * shape[3];
    } else if (shape.size() == 2) {
        fan_in = shape[0];
        fan_out = shape[1];
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    int n = 1;
    for (int d : shape) n *= d;
    std::vector<double> vals(n);
    for (auto& v : vals) v = dist(rng);
    return Tensor(std::move(shape), std::move(vals), true);
}

Tensor zero_bias(int n) {
    return Tensor({n}, std::vector<double>(n, 0.0), true);
}

int pooled(int s) { return s / 2; }

}  // namespace

Network Network::build(ArchId arch, int img_size, std::uint64_t seed) {
    if (img_size < 8) {
        throw std::runtime_error("build: unsupported image size " + std::to_string(img_size) +
                                 ", need >= 8");
    }
    Network net;
    net.arch_ = arch;
    net.img_size_ = img_size;
    std::mt19937_64 rng(derive_seed(seed, "init/" + to_string(arch)));

    const int s2 = pooled(img_size), s4 = pooled(s2);
    switch (arch) {
        case ArchId::Plain: {
            net.params_.push_back(init_tensor({8, 3, 5, 5}, rng));   // conv1
            net.params_.push_back(zero_bias(8));
            net.params_.push_back(init_tensor({16, 8, 5, 5}, rng));  // conv2
            net.params_.push_back(zero_bias(16));
            net.params_.push_back(init_tensor({16 * s4 * s4, 32}, rng));
            net.params_.push_back(zero_bias(32));
            net.params_.push_back(init_tensor({32, 2}, rng));
            net.params_.push_back(zero_bias(2));
            break;
        }
        case ArchId::Residual: {
            net.params_.push_back(init_tensor({8, 3, 3, 3}, rng));  // stem
            net.params_.push_back(zero_bias(8));
            for (int block = 0; block < 2; ++block) {
                net.params_.push_back(init_tensor({8, 8, 3, 3}, rng));
                net.params_.push_back(zero_bias(8));
                net.params_.push_back(init_tensor({8, 8, 3, 3}, rng));
                net.params_.push_back(zero_bias(8));
            }
            net.params_.push_back(init_tensor({8, 2}, rng));  // head after GAP
            net.params_.push_back(zero_bias(2));
            break;
        }
        case ArchId::Deep: {
            const ConvSpec convs[] = {{3, 8, 3, 1}, {8, 8, 3, 1}, {8, 16, 3, 1}, {16, 16, 3, 1}};
            for (const auto& c : convs) {
                net.params_.push_back(init_tensor({c.out, c.in, c.k, c.k}, rng));
                net.params_.push_back(zero_bias(c.out));
            }
            net.params_.push_back(init_tensor({16 * s4 * s4, 64}, rng));
            net.params_.push_back(zero_bias(64));
            net.params_.push_back(init_tensor({64, 2}, rng));
            net.params_.push_back(zero_bias(2));
            break;
        }
    }
    return net;
}

Tensor Network::forward(const Tensor& batch) const {
    const auto& shape = batch.shape();
    if (shape.size() != 4 || shape[1] != 3 || shape[2] != img_size_ || shape[3] != img_size_) {
        throw std::runtime_error("forward: expected [N,3," + std::to_string(img_size_) + "," +
                                 std::to_string(img_size_) + "] input");
    }
    // Center pixel values; keeps the input interface in [0,1] while the
    // convolutions see zero-mean data.
    Tensor centered = add(batch, Tensor::full(shape, -0.5));
    const auto& p = params_;
    switch (arch_) {
        case ArchId::Plain: {
            Tensor h = max_pool2x2(relu(conv2d(centered, p[0], p[1], 1, 2)));
            h = max_pool2x2(relu(conv2d(h, p[2], p[3], 1, 2)));
            h = relu(dense(flatten(h), p[4], p[5]));
            return dense(h, p[6], p[7]);
        }
        case ArchId::Residual: {
            Tensor h = relu(conv2d(centered, p[0], p[1], 1, 1));
            h = max_pool2x2(h);
            for (int block = 0; block < 2; ++block) {
                const int base = 2 + block * 4;
                Tensor r = relu(conv2d(h, p[base], p[base + 1], 1, 1));
                r = conv2d(r, p[base + 2], p[base + 3], 1, 1);
                h = relu(add(h, r));  // identity skip
            }
            h = max_pool2x2(h);
            return dense(global_avg_pool(h), p[10], p[11]);
        }
        case ArchId::Deep: {
            Tensor h = relu(conv2d(centered, p[0], p[1], 1, 1));
            h = max_pool2x2(relu(conv2d(h, p[2], p[3], 1, 1)));
            h = relu(conv2d(h, p[4], p[5], 1, 1));
            h = max_pool2x2(relu(conv2d(h, p[6], p[7], 1, 1)));
            h = relu(dense(flatten(h), p[8], p[9]));
            return dense(h, p[10], p[11]);
        }
    }
    throw std::logic_error("forward: bad arch enum");
}

void Network::set_parameters(std::vector<Tensor> params) {
    if (params.size() != params_.size()) {
        throw std::runtime_error("set_parameters: parameter count mismatch");
    }
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i].shape() != params_[i].shape()) {
            throw std::runtime_error("set_parameters: shape mismatch at parameter " +
                                     std::to_string(i));
        }
    }
    params_ = std::move(params);
}

int Network::parameter_count() const {
    int n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

Tensor stack_images(const std::vector<Tensor>& images, int from, int count) {
    if (count <= 0 || from < 0 || from + count > static_cast<int>(images.size())) {
        throw std::runtime_error("stack_images: bad range");
    }
    const auto& shape = images[from].shape();
    std::vector<double> data;
    data.reserve(static_cast<size_t>(count) * images[from].size());
    for (int i = from; i < from + count; ++i) {
        if (images[i].shape() != shape) {
            throw std::runtime_error("stack_images: inconsistent image shapes");
        }
        const auto& v = images[i].values();
        data.insert(data.end(), v.begin(), v.end());
    }
    std::vector<int> out_shape = {count};
    out_shape.insert(out_shape.end(), shape.begin(), shape.end());
    return Tensor(std::move(out_shape), std::move(data));
}

Prediction predict(const Network& net, const std::vector<Tensor>& images) {
    Prediction out;
    const int n = static_cast<int>(images.size());
    out.labels.reserve(n);
    out.probabilities.reserve(n);
    const int chunk = 64;
    for (int from = 0; from < n; from += chunk) {
        const int count = std::min(chunk, n - from);
        Tensor logits = net.forward(stack_images(images, from, count));
        auto probs = softmax_rows(logits);
        for (const auto& row : probs) {
            out.probabilities.push_back({row[0], row[1]});
            out.labels.push_back(row[1] > row[0] ? 1 : 0);  // tie -> class 0
        }
    }
    return out;
}

double evaluate_f1(const Network& net, const LabeledImageSet& set) {
    auto pred = predict(net, set.images);
    return f1(confusion_from(set.labels, pred.labels));
}

TrainedModel train_custom(Network net, const EpochDataProvider& provider,
                          const LabeledImageSet& val, const Hyper& hyper, std::uint64_t seed) {
    TrainedModel model;
    model.seed = seed;

    std::vector<std::vector<double>> velocity;
    for (const auto& p : net.parameters()) velocity.emplace_back(p.size(), 0.0);

    std::vector<Tensor> best_params = net.parameters();
    double best_f1 = -1.0;

    std::mt19937_64 shuffle_rng(derive_seed(seed, "train/shuffle"));

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        const LabeledImageSet& data = provider(epoch, net);
        if (data.size() == 0) throw std::runtime_error("train: empty epoch dataset");

        std::vector<int> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        int batches = 0;
        for (int from = 0; from < data.size(); from += hyper.batch_size) {
            const int count = std::min(hyper.batch_size, data.size() - from);
            std::vector<Tensor> batch_imgs;
            std::vector<int> batch_labels;
            batch_imgs.reserve(count);
            for (int i = 0; i < count; ++i) {
                batch_imgs.push_back(data.images[order[from + i]]);
                batch_labels.push_back(data.labels[order[from + i]]);
            }
            Tensor x = stack_images(batch_imgs, 0, count);

            double loss_value = 0.0;
            std::vector<Tensor> grads;
            try {
                Tensor loss = softmax_cross_entropy(net.forward(x), batch_labels);
                loss_value = loss.value();
                grads = grad(loss, net.parameters());
            } catch (const std::exception& e) {
                throw std::runtime_error("train: diverged at epoch " + std::to_string(epoch) +
                                         ": " + e.what());
            }
            loss_sum += loss_value;
            ++batches;

            std::vector<Tensor> updated;
            updated.reserve(net.parameters().size());
            for (size_t pi = 0; pi < net.parameters().size(); ++pi) {
                const auto& pv = net.parameters()[pi].values();
                const auto& gv = grads[pi].values();
                auto& vel = velocity[pi];
                std::vector<double> nv(pv.size());
                for (size_t k = 0; k < pv.size(); ++k) {
                    vel[k] = hyper.momentum * vel[k] + gv[k];
                    nv[k] = pv[k] - hyper.learning_rate * vel[k];
                }
                updated.emplace_back(net.parameters()[pi].shape(), std::move(nv), true);
            }
            net.set_parameters(std::move(updated));
        }

        const double vf1 = evaluate_f1(net, val);
        model.history.push_back({epoch, batches ? loss_sum / batches : 0.0, vf1});
        if (vf1 > best_f1) {
            best_f1 = vf1;
            best_params = net.parameters();
        }
    }

    net.set_parameters(std::move(best_params));
    model.net = std::move(net);
    return model;
}

TrainedModel train_nominal(Network net, const SplitBundle& bundle, const Hyper& hyper,
                           std::uint64_t seed) {
    auto provider = [&bundle](int, const Network&) -> const LabeledImageSet& {
        return bundle.train;
    };
    return train_custom(std::move(net), provider, bundle.val, hyper, seed);
}

// ---- checkpoints ------------------------------------------------------------

namespace {
constexpr std::uint32_t kCheckpointMagic = 0x41474b31;  // "AGK1"
}

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& bin_path,
                     const std::filesystem::path& meta_path) {
    std::ofstream out(bin_path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot write " + bin_path.string());
    auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    put_u32(kCheckpointMagic);
    put_u32(static_cast<std::uint32_t>(model.net.arch()));
    put_u32(static_cast<std::uint32_t>(model.net.img_size()));
    put_u32(static_cast<std::uint32_t>(model.net.parameters().size()));
    for (const auto& p : model.net.parameters()) {
        put_u32(static_cast<std::uint32_t>(p.shape().size()));
        for (int d : p.shape()) put_u32(static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(p.values().data()),
                  static_cast<std::streamsize>(p.values().size() * sizeof(double)));
    }

    nlohmann::json meta;
    meta["schema_version"] = 1;
    meta["task"] = to_string(model.key.dataset.task);
    meta["source"] = to_string(model.key.dataset.source);
    meta["balance"] = to_string(model.key.dataset.balance);
    meta["arch"] = to_string(model.key.arch);
    meta["strategy"] = to_string(model.key.strategy);
    meta["seed"] = model.seed;
    auto& hist = meta["history"] = nlohmann::json::array();
    for (const auto& h : model.history) {
        hist.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_f1", h.val_f1}});
    }
    std::ofstream mout(meta_path);
    if (!mout) throw std::runtime_error("save_checkpoint: cannot write " + meta_path.string());
    mout << meta.dump(2) << "\n";
}

TrainedModel load_checkpoint(const std::filesystem::path& bin_path,
                             const std::filesystem::path& meta_path) {
    std::ifstream in(bin_path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot read " + bin_path.string());
    auto get_u32 = [&]() {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        if (!in) throw std::runtime_error("load_checkpoint: truncated " + bin_path.string());
        return v;
    };
    if (get_u32() != kCheckpointMagic) {
        throw std::runtime_error("load_checkpoint: bad magic in " + bin_path.string());
    }
    const auto arch = static_cast<ArchId>(get_u32());
    const int img_size = static_cast<int>(get_u32());
    const auto n_params = get_u32();

    TrainedModel model;
    model.net = Network::build(arch, img_size, 0);
    std::vector<Tensor> params;
    for (std::uint32_t i = 0; i < n_params; ++i) {
        const auto rank = get_u32();
        std::vector<int> shape(rank);
        int n = 1;
        for (auto& d : shape) {
            d = static_cast<int>(get_u32());
            n *= d;
        }
        std::vector<double> vals(n);
        in.read(reinterpret_cast<char*>(vals.data()),
                static_cast<std::streamsize>(vals.size() * sizeof(double)));
        if (!in) throw std::runtime_error("load_checkpoint: truncated " + bin_path.string());
        params.emplace_back(std::move(shape), std::move(vals), true);
    }
    model.net.set_parameters(std::move(params));

    std::ifstream min(meta_path);
    if (!min) throw std::runtime_error("load_checkpoint: cannot read " + meta_path.string());
    nlohmann::json meta = nlohmann::json::parse(min);
    model.key.dataset.task = parse_task(meta.at("task").get<std::string>());
    model.key.dataset.source = parse_source(meta.at("source").get<std::string>());
    model.key.dataset.balance = parse_balance(meta.at("balance").get<std::string>());
    model.key.arch = parse_arch(meta.at("arch").get<std::string>());
    model.key.strategy = parse_strategy(meta.at("strategy").get<std::string>());
    model.seed = meta.value("seed", 0ull);
    for (const auto& h : meta.at("history")) {
        model.history.push_back({h.at("epoch").get<int>(), h.at("train_loss").get<double>(),
                                 h.at("val_f1").get<double>()});
    }
    return model;
}

}  // namespace advgrid
