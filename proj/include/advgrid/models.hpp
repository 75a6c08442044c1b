#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "advgrid/data.hpp"
#include "advgrid/keys.hpp"
#include "advgrid/tensor.hpp"

namespace advgrid {

struct Hyper {
    int epochs = 15;
    int batch_size = 32;
    double learning_rate = 0.05;
    double momentum = 0.9;
};

struct EpochStats {
    int epoch;
    double train_loss;
    double val_f1;
};

/// A small convolutional classifier with a fixed per-architecture layer plan.
/// Plain: two conv-relu-pool stages plus dense head, no skips. Residual: two
/// identity-skip blocks with global average pooling. Deep: four 3x3 convs in
/// two stages with a wider dense head.
class Network {
  public:
    static Network build(ArchId arch, int img_size, std::uint64_t seed);

    /// Logits [N,2] for a batch [N,3,S,S]; builds an autodiff graph.
    Tensor forward(const Tensor& batch) const;

    ArchId arch() const { return arch_; }
    int img_size() const { return img_size_; }
    const std::vector<Tensor>& parameters() const { return params_; }
    void set_parameters(std::vector<Tensor> params);
    int parameter_count() const;

  private:
    ArchId arch_ = ArchId::Plain;
    int img_size_ = 0;
    std::vector<Tensor> params_;
};

struct Prediction {
    std::vector<int> labels;
    std::vector<std::array<double, 2>> probabilities;
};

/// Softmax probabilities and argmax labels; ties resolve to class 0.
Prediction predict(const Network& net, const std::vector<Tensor>& images);

/// Stacks C x H x W images into one [N,C,H,W] batch tensor.
Tensor stack_images(const std::vector<Tensor>& images, int from, int count);

struct TrainedModel {
    ModelKey key;
    Network net;
    std::vector<EpochStats> history;
    std::uint64_t seed = 0;
};

/// Training data supplied per epoch; `current` is the live model so online
/// strategies can craft examples against the latest parameters.
using EpochDataProvider = std::function<const LabeledImageSet&(int epoch, const Network& current)>;

/// SGD with momentum over the provider's per-epoch dataset; keeps the
/// parameters of the epoch with the best validation F1. Zero epochs returns
/// the initialized network unchanged.
TrainedModel train_custom(Network net, const EpochDataProvider& provider,
                          const LabeledImageSet& val, const Hyper& hyper, std::uint64_t seed);

/// Nominal training on the unperturbed training split.
TrainedModel train_nominal(Network net, const SplitBundle& bundle, const Hyper& hyper,
                           std::uint64_t seed);

/// F1 (positive class 0) of the network on a labeled set.
double evaluate_f1(const Network& net, const LabeledImageSet& set);

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& bin_path,
                     const std::filesystem::path& meta_path);
TrainedModel load_checkpoint(const std::filesystem::path& bin_path,
                             const std::filesystem::path& meta_path);

}  // namespace advgrid
