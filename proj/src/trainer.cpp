#include "pcseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pcseg/rng.hpp"

namespace fs = std::filesystem;

namespace pcseg {

namespace {

Vec2 chain_center(int size) { return {size / 2.0, size / 2.0}; }

LossReport sample_loss(const std::string& kind, const PolarChain& pred_lumen,
                       const PolarChain& pred_media, const LabeledSample& sample) {
    if (kind == "jm-exact") {
        return jm_loss(pred_lumen, pred_media, sample.lumen_chain, sample.media_chain,
                       LossBackend::Exact);
    }
    if (kind == "jm-paper") {
        return jm_loss(pred_lumen, pred_media, sample.lumen_chain, sample.media_chain,
                       LossBackend::Paper);
    }
    if (kind == "mse") {
        return mse_loss(pred_lumen, pred_media, sample.lumen_chain, sample.media_chain);
    }
    throw Error("InvalidSpec", "unknown loss '" + kind + "'");
}

std::pair<PolarChain, PolarChain> chains_from_row(const float* row, int n_v, Vec2 center) {
    PolarChain lumen, media;
    lumen.center = center;
    media.center = center;
    lumen.radii.assign(row, row + n_v);
    media.radii.assign(row + n_v, row + 2 * n_v);
    return {std::move(lumen), std::move(media)};
}

Tensor<float> assemble_batch(const std::vector<LabeledSample>& samples,
                             const std::vector<std::size_t>& idx, bool standardize) {
    const int s = samples[idx[0]].size();
    Tensor<float> batch({static_cast<int>(idx.size()), s, s, 3});
    const std::size_t per = static_cast<std::size_t>(s) * s * 3;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Image& img = samples[idx[i]].image;
        std::copy(img.data.begin(), img.data.end(), batch.data.begin() + i * per);
        if (standardize) {
            standardize_image(std::span<float>(batch.data.data() + i * per, per));
        }
    }
    return batch;
}

double quick_mean_jm(const RegressorState& model, const std::vector<LabeledSample>& samples,
                     const std::vector<std::size_t>& idx, int resolution, bool lumen) {
    double acc = 0.0;
    for (std::size_t i : idx) {
        const auto [pl, pm] = predict_chains(model, samples[i]);
        const PolarChain& chain = lumen ? pl : pm;
        const CartesianContour& gt = lumen ? samples[i].lumen_gt : samples[i].media_gt;
        acc += global_jm(to_cartesian(chain), gt, resolution);
    }
    return acc / static_cast<double>(idx.size());
}

}  // namespace

NetDescriptor default_descriptor(int input_size, int n_v) {
    NetDescriptor d;
    d.input_size = input_size;
    d.in_channels = 3;
    d.n_v = n_v;
    if (input_size >= 128) {
        d.conv_channels = {16, 32, 64, 128};
        d.fc_hidden = 256;
    } else {
        d.conv_channels = {8, 16, 32, 64};
        d.fc_hidden = 128;
    }
    d.validate();
    return d;
}

std::string TrainConfig::to_json() const {
    nlohmann::json j;
    j["n_v"] = n_v;
    j["loss"] = loss;
    j["epochs"] = epochs;
    j["batch"] = batch;
    j["optimizer"] = optimizer;
    j["lr"] = effective_lr();
    j["lr_schedule"] = lr_schedule;
    j["seed"] = seed;
    j["split_fraction"] = split_fraction;
    j["eval_cadence"] = eval_cadence;
    j["checkpoint_cadence"] = checkpoint_cadence;
    j["augment"] = augment;
    j["quick_eval_resolution"] = quick_eval_resolution;
    j["threads"] = threads;
    j["descriptor"] = nlohmann::json::parse(descriptor.to_json());
    return j.dump(2);
}

std::string EpochRecord::to_json() const {
    nlohmann::json j;
    j["epoch"] = epoch;
    j["train_loss"] = train_loss;
    if (has_val) {
        j["val_loss"] = val_loss;
        j["val_jm_lumen"] = val_jm_lumen;
        j["val_jm_media"] = val_jm_media;
    }
    return j.dump();
}

std::pair<PolarChain, PolarChain> predict_chains(const RegressorState& model,
                                                 const LabeledSample& sample) {
    Tensor<float> batch = assemble_batch({sample}, {0}, model.desc.input_standardize);
    ForwardCache<float> cache;
    const Tensor<float> radii = forward(model, batch, &cache);
    return chains_from_row(radii.data.data(), model.desc.n_v, chain_center(sample.size()));
}

TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const std::string& checkpoint_dir) {
    if (dataset.samples.empty()) throw Error("InvalidSpec", "training dataset is empty");
    if (config.batch < 1 || config.epochs < 1) {
        throw Error("InvalidSpec", "batch and epochs must be >= 1");
    }
    config.descriptor.validate();
    const int size = dataset.samples.front().size();
    if (config.descriptor.input_size != size || config.descriptor.n_v != config.n_v) {
        throw Error("InvalidSpec", "descriptor does not match data size / n_v");
    }

    TrainResult result;
    auto [train_idx, val_idx] = split_indices(dataset.samples.size(), config.split_fraction,
                                              config.seed);
    result.train_idx = train_idx;
    result.val_idx = val_idx;

    // Augmentation applies to the training subset only.
    std::vector<LabeledSample> train_set;
    train_set.reserve(train_idx.size());
    for (std::size_t i : train_idx) train_set.push_back(dataset.samples[i]);
    if (config.augment) {
        AugmentSpec aug;
        aug.seed = Rng::derive(config.seed, 0xA06).next_u64();
        train_set = augment_dataset(train_set, aug);
    }

    result.model = init_regressor<float>(config.descriptor, config.seed);
    const double lr0 = config.effective_lr();
    OptimizerState<float> opt = OptimizerState<float>::for_net(
        result.model, config.optimizer == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam,
        lr0);

    const int n_v = config.n_v;
    const Vec2 center = chain_center(size);
    const std::size_t n = train_set.size();
    const std::size_t batches = (n + config.batch - 1) / config.batch;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    if (config.lr_schedule != "cosine" && config.lr_schedule != "constant") {
        throw Error("InvalidSpec", "lr_schedule must be 'cosine' or 'constant'");
    }
    const long total_steps = static_cast<long>(batches) * config.epochs;
    long step_index = 0;

    // Stream the log so long runs stay observable.
    std::ofstream log_stream;
    if (!checkpoint_dir.empty()) {
        log_stream.open(fs::path(checkpoint_dir) / "train_log.jsonl");
    }

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        Rng shuffle_rng = Rng::derive(config.seed, 1000003ULL * static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t bi = 0; bi < batches; ++bi) {
            std::vector<std::size_t> idx(config.batch);
            for (int j = 0; j < config.batch; ++j) {
                // Short final batch pads by wrapping the epoch order.
                idx[j] = order[(bi * config.batch + j) % n];
            }
            Tensor<float> batch =
                assemble_batch(train_set, idx, config.descriptor.input_standardize);
            ForwardCache<float> cache;
            const Tensor<float> radii = forward(result.model, batch, &cache, config.threads);

            Tensor<float> d_radii({config.batch, 2 * n_v});
            double batch_loss = 0.0;
            const float inv_b = 1.0f / static_cast<float>(config.batch);
            for (int j = 0; j < config.batch; ++j) {
                const float* row = radii.data.data() + static_cast<std::size_t>(j) * 2 * n_v;
                const auto [pl, pm] = chains_from_row(row, n_v, center);
                const LossReport report =
                    sample_loss(config.loss, pl, pm, train_set[idx[j]]);
                batch_loss += report.value;
                float* drow = d_radii.data.data() + static_cast<std::size_t>(j) * 2 * n_v;
                for (int k = 0; k < 2 * n_v; ++k) {
                    drow[k] = static_cast<float>(report.grad[k]) * inv_b;
                }
            }
            batch_loss /= config.batch;
            if (!std::isfinite(batch_loss)) {
                std::ostringstream os;
                os << "non-finite loss at epoch " << epoch << " batch " << bi << " (samples";
                for (std::size_t k : idx) os << ' ' << train_set[k].id;
                os << ")";
                throw Error("NonFiniteLoss", os.str());
            }
            epoch_loss += batch_loss;

            if (config.lr_schedule == "cosine") {
                opt.lr = lr0 * 0.5 *
                         (1.0 + std::cos(M_PI * static_cast<double>(step_index) / total_steps));
            }
            ++step_index;
            const ParamGrads<float> grads =
                backward(result.model, cache, d_radii, config.threads);
            step(&result.model, &opt, grads);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(batches);
        const bool snapshot =
            config.eval_cadence > 0 && !val_idx.empty() &&
            (epoch % config.eval_cadence == 0 || epoch == config.epochs);
        if (snapshot) {
            double val_loss = 0.0;
            for (std::size_t i : val_idx) {
                const auto [pl, pm] = predict_chains(result.model, dataset.samples[i]);
                val_loss += sample_loss(config.loss, pl, pm, dataset.samples[i]).value;
            }
            rec.has_val = true;
            rec.val_loss = val_loss / static_cast<double>(val_idx.size());
            rec.val_jm_lumen = quick_mean_jm(result.model, dataset.samples, val_idx,
                                             config.quick_eval_resolution, true);
            rec.val_jm_media = quick_mean_jm(result.model, dataset.samples, val_idx,
                                             config.quick_eval_resolution, false);
        }
        result.log.push_back(rec);
        if (log_stream.is_open()) log_stream << rec.to_json() << "\n" << std::flush;

        if (!checkpoint_dir.empty() && config.checkpoint_cadence > 0 &&
            epoch % config.checkpoint_cadence == 0) {
            save_checkpoint(result.model, (fs::path(checkpoint_dir) /
                                           ("ckpt_epoch_" + std::to_string(epoch) + ".ckpt"))
                                              .string());
        }
    }
    return result;
}

ErrorHistogram build_histogram(const std::vector<double>& errors, double bin_width) {
    ErrorHistogram h;
    h.bin_width = bin_width;
    h.total = static_cast<long>(errors.size());
    if (errors.empty()) return h;
    double mean = 0.0;
    double lo = errors[0], hi = errors[0];
    for (double e : errors) {
        mean += e;
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    mean /= static_cast<double>(errors.size());
    double var = 0.0;
    for (double e : errors) var += (e - mean) * (e - mean);
    h.mean = mean;
    h.stddev = std::sqrt(var / static_cast<double>(errors.size()));

    const double lo_edge = std::floor(lo / bin_width) * bin_width;
    double hi_edge = std::ceil(hi / bin_width) * bin_width;
    if (hi_edge <= lo_edge) hi_edge = lo_edge + bin_width;
    const int bins = static_cast<int>(std::lround((hi_edge - lo_edge) / bin_width));
    h.counts.assign(bins, 0);
    h.edges.resize(bins + 1);
    for (int i = 0; i <= bins; ++i) h.edges[i] = lo_edge + i * bin_width;
    for (double e : errors) {
        int b = static_cast<int>(std::floor((e - lo_edge) / bin_width));
        b = std::clamp(b, 0, bins - 1);
        ++h.counts[b];
    }
    return h;
}

std::string ErrorHistogram::to_csv() const {
    std::ostringstream os;
    os.precision(9);
    os << "# mean=" << mean << ",std=" << stddev << ",total=" << total << "\n";
    os << "bin_left,bin_right,count\n";
    for (std::size_t i = 0; i < counts.size(); ++i) {
        os << edges[i] << ',' << edges[i + 1] << ',' << counts[i] << "\n";
    }
    return os.str();
}

EvalResult evaluate(const RegressorState& model, const std::vector<LabeledSample>& samples,
                    int resolution, int threads) {
    (void)threads;  // per-image work is serial; rasterization dominates and is cheap here
    EvalResult result;
    std::vector<double> errors;
    errors.reserve(samples.size() * 2 * model.desc.n_v);
    for (const LabeledSample& sample : samples) {
        const auto [pl, pm] = predict_chains(model, sample);
        MetricReport report;
        report.id = sample.id;
        const CartesianContour pred_lumen = to_cartesian(pl);
        const CartesianContour pred_media = to_cartesian(pm);
        report.jm_lumen = global_jm(pred_lumen, sample.lumen_gt, resolution);
        report.jm_media = global_jm(pred_media, sample.media_gt, resolution);
        const auto pred_l_pts = densify_contour(pred_lumen);
        const auto pred_m_pts = densify_contour(pred_media);
        const auto gt_l_pts = densify_contour(sample.lumen_gt);
        const auto gt_m_pts = densify_contour(sample.media_gt);
        report.hd_lumen = hausdorff(pred_l_pts, gt_l_pts);
        report.hd_media = hausdorff(pred_m_pts, gt_m_pts);
        report.hd_paper_literal_lumen = hd_paper_literal(pred_l_pts, gt_l_pts);
        report.hd_paper_literal_media = hd_paper_literal(pred_m_pts, gt_m_pts);
        result.per_image.push_back(report);

        for (int k = 0; k < model.desc.n_v; ++k) {
            errors.push_back(pl.radii[k] - sample.lumen_chain.radii[k]);
        }
        for (int k = 0; k < model.desc.n_v; ++k) {
            errors.push_back(pm.radii[k] - sample.media_chain.radii[k]);
        }
    }
    const double n = static_cast<double>(result.per_image.size());
    for (const MetricReport& r : result.per_image) {
        result.mean_jm_lumen += r.jm_lumen / n;
        result.mean_jm_media += r.jm_media / n;
        result.mean_hd_lumen += r.hd_lumen / n;
        result.mean_hd_media += r.hd_media / n;
        result.mean_hd_paper_literal_lumen += r.hd_paper_literal_lumen / n;
        result.mean_hd_paper_literal_media += r.hd_paper_literal_media / n;
    }
    result.histogram = build_histogram(errors);
    return result;
}

std::string EvalResult::to_json() const {
    nlohmann::json j;
    j["mean_jm_lumen"] = mean_jm_lumen;
    j["mean_jm_media"] = mean_jm_media;
    j["mean_hd_lumen"] = mean_hd_lumen;
    j["mean_hd_media"] = mean_hd_media;
    j["mean_hd_paper_literal_lumen"] = mean_hd_paper_literal_lumen;
    j["mean_hd_paper_literal_media"] = mean_hd_paper_literal_media;
    j["images"] = nlohmann::json::array();
    for (const MetricReport& r : per_image) {
        j["images"].push_back(nlohmann::json::parse(r.to_json()));
    }
    j["histogram"] = {{"mean", histogram.mean},
                      {"std", histogram.stddev},
                      {"total", histogram.total}};
    return j.dump(2);
}

std::string EvalResult::to_csv() const {
    std::ostringstream os;
    os.precision(9);
    os << MetricReport::csv_header() << "\n";
    for (const MetricReport& r : per_image) os << r.to_csv_row() << "\n";
    os << "mean," << mean_jm_lumen << ',' << mean_jm_media << ',' << mean_hd_lumen << ','
       << mean_hd_media << ',' << mean_hd_paper_literal_lumen << ','
       << mean_hd_paper_literal_media << "\n";
    return os.str();
}

namespace {

void draw_line(Image* img, Vec2 a, Vec2 b, const float color[3]) {
    int x0 = static_cast<int>(std::lround(a.x));
    int y0 = static_cast<int>(std::lround(a.y));
    const int x1 = static_cast<int>(std::lround(b.x));
    const int y1 = static_cast<int>(std::lround(b.y));
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        if (x0 >= 0 && x0 < img->width && y0 >= 0 && y0 < img->height) {
            for (int c = 0; c < 3; ++c) img->at(y0, x0, c) = color[c];
        }
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) { err += dy; x0 += sx; }
        if (e2 <= dx) { err += dx; y0 += sy; }
    }
}

void draw_contour(Image* img, const CartesianContour& contour, const float color[3]) {
    const std::size_t n = contour.points.size();
    for (std::size_t i = 0; i < n; ++i) {
        draw_line(img, contour.points[i], contour.points[(i + 1) % n], color);
    }
}

}  // namespace

Image render_overlay(const Image& image, const PolarChain& pred_lumen,
                     const PolarChain& pred_media, const CartesianContour& gt_lumen,
                     const CartesianContour& gt_media, const OverlayColors& colors) {
    Image out = image.replicated(3);
    draw_contour(&out, gt_lumen, colors.gt_lumen);
    draw_contour(&out, gt_media, colors.gt_media);
    draw_contour(&out, to_cartesian(pred_lumen), colors.pred_lumen);
    draw_contour(&out, to_cartesian(pred_media), colors.pred_media);
    return out;
}

void render_overlay_png(const Image& image, const PolarChain& pred_lumen,
                        const PolarChain& pred_media, const CartesianContour& gt_lumen,
                        const CartesianContour& gt_media, const std::string& path,
                        const OverlayColors& colors) {
    save_png(render_overlay(image, pred_lumen, pred_media, gt_lumen, gt_media, colors), path);
}

}  // namespace pcseg
