#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcseg/dataset.hpp"
#include "pcseg/metrics.hpp"
#include "pcseg/predictor.hpp"
#include "pcseg/segment_loss.hpp"

namespace pcseg {

struct TrainConfig {
    int n_v = 32;
    std::string loss = "jm-exact";  // jm-exact | jm-paper | mse
    int epochs = 200;
    int batch = 32;
    std::string optimizer = "adam";  // adam | sgd
    double lr = 0.0;                 // initial learning rate; 0 = per-optimizer
                                     // default (adam 1e-3, sgd 1e-2)
    std::string lr_schedule = "cosine";  // cosine | constant

    double effective_lr() const {
        if (lr > 0.0) return lr;
        return optimizer == "sgd" ? 0.01 : 0.001;
    }
    std::uint64_t seed = 0;
    double split_fraction = 0.9;
    int eval_cadence = 10;       // epochs between val snapshots; 0 disables
    int checkpoint_cadence = 0;  // epochs between checkpoints; 0 = none
    bool augment = false;
    int quick_eval_resolution = 256;  // raster resolution for in-training JM
    int threads = 1;
    NetDescriptor descriptor;

    std::string to_json() const;
};

/// Desk-scale sizes get a scaled-down conv stack; 128 px and above use the
/// reference (16,32,64,128)/256 architecture.
NetDescriptor default_descriptor(int input_size, int n_v);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    bool has_val = false;
    double val_loss = 0.0;
    double val_jm_lumen = 0.0;
    double val_jm_media = 0.0;

    std::string to_json() const;
};

struct TrainResult {
    RegressorState model;
    std::vector<EpochRecord> log;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
};

/// Seeded split, optional train-set augmentation, then per epoch: shuffle,
/// batch (short final batch padded by wrapping), forward, selected loss,
/// backward through d(eps)/d(radii), optimizer step. Throws NonFiniteLoss
/// with diagnostics if the loss stops being finite.
TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const std::string& checkpoint_dir = "");

/// Combined lumen+media radial errors (r_i - a_i) in pixels.
struct ErrorHistogram {
    double bin_width = 0.5;
    std::vector<double> edges;  // counts.size() + 1 ascending edges
    std::vector<long> counts;
    double mean = 0.0;
    double stddev = 0.0;
    long total = 0;

    std::string to_csv() const;  // "# mean=..,std=.." comment, then bin rows
};

ErrorHistogram build_histogram(const std::vector<double>& errors, double bin_width = 0.5);

struct EvalResult {
    std::vector<MetricReport> per_image;
    double mean_jm_lumen = 0.0;
    double mean_jm_media = 0.0;
    double mean_hd_lumen = 0.0;
    double mean_hd_media = 0.0;
    double mean_hd_paper_literal_lumen = 0.0;
    double mean_hd_paper_literal_media = 0.0;
    ErrorHistogram histogram;

    std::string to_json() const;
    std::string to_csv() const;  // one row per image plus a mean row
};

/// Predicts chains per image and scores them against the ORIGINAL expert
/// point lists (not the resampled chains): rasterized JM plus both Hausdorff
/// variants over 0.5 px densified boundaries.
EvalResult evaluate(const RegressorState& model, const std::vector<LabeledSample>& samples,
                    int resolution, int threads = 1);

struct OverlayColors {
    // Defaults follow the usual display convention: blue/cyan ground truth,
    // magenta/white prediction.
    float gt_lumen[3] = {0.0f, 0.0f, 1.0f};
    float gt_media[3] = {0.0f, 1.0f, 1.0f};
    float pred_lumen[3] = {1.0f, 0.0f, 1.0f};
    float pred_media[3] = {1.0f, 1.0f, 1.0f};
};

Image render_overlay(const Image& image, const PolarChain& pred_lumen,
                     const PolarChain& pred_media, const CartesianContour& gt_lumen,
                     const CartesianContour& gt_media, const OverlayColors& colors = {});

void render_overlay_png(const Image& image, const PolarChain& pred_lumen,
                        const PolarChain& pred_media, const CartesianContour& gt_lumen,
                        const CartesianContour& gt_media, const std::string& path,
                        const OverlayColors& colors = {});

/// Predicted lumen/media chains for one sample (first n_v outputs = lumen).
std::pair<PolarChain, PolarChain> predict_chains(const RegressorState& model,
                                                 const LabeledSample& sample);

}  // namespace pcseg
