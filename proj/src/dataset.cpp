#include "pcseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pcseg/rng.hpp"

namespace fs = std::filesystem;

namespace pcseg {

namespace {

Vec2 chain_center(int size) { return {size / 2.0, size / 2.0}; }

void check_nesting(const LabeledSample& sample) {
    const int n = sample.lumen_chain.n_v();
    for (int k = 0; k < n; ++k) {
        if (sample.media_chain.radii[k] < sample.lumen_chain.radii[k]) {
            std::ostringstream os;
            os << "sample " << sample.id << ": media radius " << sample.media_chain.radii[k]
               << " < lumen radius " << sample.lumen_chain.radii[k] << " at ray " << k;
            throw Error("NestingViolation", os.str());
        }
    }
}

CartesianContour transform_points(const CartesianContour& contour,
                                  const std::function<Vec2(Vec2)>& map) {
    CartesianContour out;
    out.points.reserve(contour.points.size());
    for (const Vec2& p : contour.points) out.points.push_back(map(p));
    return out;
}

Image flip_lr_image(const Image& img) {
    Image out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    return out;
}

Image flip_ud_image(const Image& img) {
    Image out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = img.at(img.height - 1 - y, x, c);
    return out;
}

Image rotate_image(const Image& img, double angle) {
    // Inverse-map bilinear resampling about the geometric pixel-grid center;
    // out-of-frame pixels fill with 0.
    Image out(img.height, img.width, img.channels);
    const double cx = (img.width - 1) / 2.0;
    const double cy = (img.height - 1) / 2.0;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            const double sx = cx + c * dx + s * dy;   // rotate by -angle
            const double sy = cy - s * dx + c * dy;
            for (int ch = 0; ch < img.channels; ++ch) {
                out.at(y, x, ch) = img.sample(sx, sy, ch, /*clamp_border=*/false, 0.0f);
            }
        }
    }
    return out;
}

void add_noise(Image* img, double sigma, Rng* rng) {
    // One draw per pixel, replicated across channels, so grayscale-sourced
    // samples keep identical channels.
    for (int y = 0; y < img->height; ++y) {
        for (int x = 0; x < img->width; ++x) {
            const float n = static_cast<float>(rng->gaussian(0.0, sigma));
            for (int c = 0; c < img->channels; ++c) {
                img->at(y, x, c) = std::clamp(img->at(y, x, c) + n, 0.0f, 1.0f);
            }
        }
    }
}

LabeledSample make_variant(const LabeledSample& base, const std::string& suffix, Image image,
                           const std::function<Vec2(Vec2)>& map, int n_v) {
    LabeledSample out;
    out.id = base.id + suffix;
    out.image = std::move(image);
    out.lumen_gt = transform_points(base.lumen_gt, map);
    out.media_gt = transform_points(base.media_gt, map);
    finalize_chains(&out, n_v);
    return out;
}

// Scanline polygon fill at integer pixel centers (pixel (x, y) has center
// coordinate (x, y)).
void fill_polygon(Image* img, const CartesianContour& poly, float value) {
    const std::size_t n = poly.points.size();
    std::vector<double> xs;
    for (int y = 0; y < img->height; ++y) {
        xs.clear();
        const double fy = static_cast<double>(y);
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2& a = poly.points[i];
            const Vec2& b = poly.points[(i + 1) % n];
            if ((a.y > fy) != (b.y > fy)) {
                xs.push_back(a.x + (fy - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            const int first = std::max(0, static_cast<int>(std::ceil(xs[k])));
            const int last = std::min(img->width - 1,
                                      static_cast<int>(std::ceil(xs[k + 1])) - 1);
            for (int x = first; x <= last; ++x) {
                for (int c = 0; c < img->channels; ++c) img->at(y, x, c) = value;
            }
        }
    }
}

CartesianContour harmonic_contour(Vec2 center, double base, const std::vector<double>& amps,
                                  const std::vector<double>& phases, int vertices) {
    CartesianContour c;
    c.points.reserve(vertices);
    for (int j = 0; j < vertices; ++j) {
        const double phi = 2.0 * M_PI * j / vertices;
        double r = 1.0;
        for (std::size_t h = 0; h < amps.size(); ++h) {
            r += amps[h] * std::cos((h + 1) * phi + phases[h]);
        }
        r *= base;
        c.points.push_back(center + r * Vec2{std::cos(phi), std::sin(phi)});
    }
    return c;
}

}  // namespace

void finalize_chains(LabeledSample* sample, int n_v) {
    const Vec2 center = chain_center(sample->size());
    sample->lumen_chain = resample(sample->lumen_gt, center, n_v);
    sample->media_chain = resample(sample->media_gt, center, n_v);
    check_nesting(*sample);
}

LabeledSample preprocess(const Image& raw, const CartesianContour& lumen,
                         const CartesianContour& media, int target_size, int n_v,
                         std::string id) {
    LabeledSample sample;
    sample.id = std::move(id);
    sample.image = raw.resized(target_size).replicated(3);
    const double sx = static_cast<double>(target_size) / raw.width;
    const double sy = static_cast<double>(target_size) / raw.height;
    const auto scale = [sx, sy](Vec2 p) { return Vec2{p.x * sx, p.y * sy}; };
    sample.lumen_gt = transform_points(lumen, scale);
    sample.media_gt = transform_points(media, scale);
    finalize_chains(&sample, n_v);
    return sample;
}

std::vector<LabeledSample> augment(const LabeledSample& sample, const AugmentSpec& spec) {
    const int size = sample.size();
    const int n_v = sample.lumen_chain.n_v();
    const double w = size - 1.0;
    Rng rng(spec.seed);
    const double angle = rng.uniform(-spec.rotation_max_deg, spec.rotation_max_deg) * M_PI / 180.0;

    std::vector<LabeledSample> out;
    out.push_back(make_variant(sample, "_lr", flip_lr_image(sample.image),
                               [w](Vec2 p) { return Vec2{w - p.x, p.y}; }, n_v));
    out.push_back(make_variant(sample, "_ud", flip_ud_image(sample.image),
                               [w](Vec2 p) { return Vec2{p.x, w - p.y}; }, n_v));
    out.push_back(make_variant(sample, "_lrud", flip_lr_image(flip_ud_image(sample.image)),
                               [w](Vec2 p) { return Vec2{w - p.x, w - p.y}; }, n_v));
    const double cx = w / 2.0;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    out.push_back(make_variant(sample, "_rot", rotate_image(sample.image, angle),
                               [cx, c, s](Vec2 p) {
                                   const double dx = p.x - cx;
                                   const double dy = p.y - cx;
                                   return Vec2{cx + c * dx - s * dy, cx + s * dx + c * dy};
                               },
                               n_v));
    if (spec.noise_original) {
        LabeledSample copy = sample;
        copy.id += "_noise";
        out.push_back(std::move(copy));
    }
    const double sigma = std::sqrt(spec.noise_variance_255) / 255.0;
    for (LabeledSample& v : out) add_noise(&v.image, sigma, &rng);
    return out;
}

std::vector<LabeledSample> augment_dataset(const std::vector<LabeledSample>& samples,
                                           const AugmentSpec& spec) {
    std::vector<LabeledSample> out;
    out.reserve(samples.size() * 5);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out.push_back(samples[i]);
        AugmentSpec per = spec;
        per.seed = Rng::derive(spec.seed, i).next_u64();
        for (LabeledSample& v : augment(samples[i], per)) out.push_back(std::move(v));
    }
    return out;
}

void SynthSpec::validate() const {
    if (count < 1 || image_size < 16 || n_v < 4 || harmonics < 0) {
        throw Error("InvalidSpec", "count/image_size/n_v/harmonics out of range");
    }
    if (alpha_max < 0.0 || alpha_max >= 0.9) {
        throw Error("InvalidSpec", "alpha_max must lie in [0, 0.9)");
    }
    if (lumen_base_lo <= 0.0 || lumen_base_hi < lumen_base_lo || media_ratio_lo <= 1.0 ||
        media_ratio_hi < media_ratio_lo) {
        throw Error("InvalidSpec", "base radius / ratio bounds out of order");
    }
    // Worst-case nesting: smallest media ring must clear the largest lumen.
    if (media_ratio_lo * (1.0 - alpha_max / 2.0) <= 1.0 + alpha_max) {
        throw Error("InvalidSpec", "amplitude bounds permit non-nested contours");
    }
    // Largest media must stay inside the frame with a margin.
    const double max_media = lumen_base_hi * media_ratio_hi * (1.0 + alpha_max / 2.0);
    const double margin = std::max(1.0, image_size / 32.0);
    if (max_media * image_size >= image_size / 2.0 - margin) {
        throw Error("InvalidSpec", "media contour can leave the image frame");
    }
}

Dataset synth_generate(const SynthSpec& spec) {
    spec.validate();
    const int size = spec.image_size;
    const Vec2 center = chain_center(size);
    const int vertices = 8 * spec.n_v;

    Dataset dataset;
    dataset.samples.reserve(spec.count);
    for (int i = 0; i < spec.count; ++i) {
        Rng rng = Rng::derive(spec.seed, static_cast<std::uint64_t>(i));
        const double lumen_base = size * rng.uniform(spec.lumen_base_lo, spec.lumen_base_hi);
        const double media_base = lumen_base * rng.uniform(spec.media_ratio_lo, spec.media_ratio_hi);

        std::vector<double> amp_l(spec.harmonics), ph_l(spec.harmonics);
        std::vector<double> amp_m(spec.harmonics), ph_m(spec.harmonics);
        for (int h = 0; h < spec.harmonics; ++h) {
            amp_l[h] = rng.uniform(-1.0, 1.0) * spec.alpha_max / std::max(1, spec.harmonics);
            ph_l[h] = rng.uniform(0.0, 2.0 * M_PI);
            amp_m[h] = rng.uniform(-1.0, 1.0) * 0.5 * spec.alpha_max / std::max(1, spec.harmonics);
            ph_m[h] = rng.uniform(0.0, 2.0 * M_PI);
        }

        LabeledSample sample;
        char id[32];
        std::snprintf(id, sizeof(id), "synth_%05d", i);
        sample.id = id;
        sample.lumen_gt = harmonic_contour(center, lumen_base, amp_l, ph_l, vertices);
        sample.media_gt = harmonic_contour(center, media_base, amp_m, ph_m, vertices);

        Image img(size, size, 1, 0.30f);
        fill_polygon(&img, sample.media_gt, 0.75f);
        fill_polygon(&img, sample.lumen_gt, 0.12f);
        for (float& v : img.data) {
            v = static_cast<float>(v * (1.0 + spec.speckle * rng.gaussian()));
            v = std::clamp(v + static_cast<float>(spec.additive_sigma * rng.gaussian()), 0.0f,
                           1.0f);
        }
        sample.image = img.replicated(3);
        finalize_chains(&sample, spec.n_v);
        dataset.samples.push_back(std::move(sample));
    }
    return dataset;
}

void write_dataset(const std::vector<LabeledSample>& samples, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "labels");
    std::vector<ManifestEntry> entries;
    entries.reserve(samples.size());
    for (const LabeledSample& s : samples) {
        ManifestEntry e;
        e.id = s.id;
        e.image = "images/" + s.id + ".png";
        e.lumen = "labels/" + s.id + ".lum.txt";
        e.media = "labels/" + s.id + ".med.txt";
        Image gray(s.image.height, s.image.width, 1);
        for (int y = 0; y < s.image.height; ++y)
            for (int x = 0; x < s.image.width; ++x) gray.at(y, x, 0) = s.image.at(y, x, 0);
        save_png(gray, (fs::path(dir) / e.image).string());
        save_contour_text(s.lumen_gt, (fs::path(dir) / e.lumen).string());
        save_contour_text(s.media_gt, (fs::path(dir) / e.media).string());
        entries.push_back(std::move(e));
    }
    save_manifest(entries, (fs::path(dir) / "manifest.json").string());
}

void write_synth_dataset(const SynthSpec& spec, const std::string& dir) {
    write_dataset(synth_generate(spec).samples, dir);
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("ParseError", path + ": " + e.what());
    }
    std::vector<ManifestEntry> entries;
    for (const auto& item : j) {
        ManifestEntry e;
        e.id = item.at("id").get<std::string>();
        e.image = item.at("image").get<std::string>();
        e.lumen = item.at("lumen").get<std::string>();
        e.media = item.at("media").get<std::string>();
        entries.push_back(std::move(e));
    }
    return entries;
}

void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const ManifestEntry& e : entries) {
        j.push_back({{"id", e.id}, {"image", e.image}, {"lumen", e.lumen}, {"media", e.media}});
    }
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << j.dump(2) << "\n";
}

Dataset load_dataset(const std::string& manifest_path, int target_size, int n_v) {
    const fs::path root = fs::path(manifest_path).parent_path();
    Dataset dataset;
    dataset.entries = load_manifest(manifest_path);
    dataset.samples.reserve(dataset.entries.size());
    for (const ManifestEntry& e : dataset.entries) {
        Image raw = load_image((root / e.image).string());
        if (raw.channels > 1) {
            Image gray(raw.height, raw.width, 1);
            for (int y = 0; y < raw.height; ++y) {
                for (int x = 0; x < raw.width; ++x) {
                    float acc = 0.0f;
                    for (int c = 0; c < raw.channels; ++c) acc += raw.at(y, x, c);
                    gray.at(y, x, 0) = acc / raw.channels;
                }
            }
            raw = std::move(gray);
        }
        dataset.samples.push_back(preprocess(raw, load_label((root / e.lumen).string()),
                                             load_label((root / e.media).string()), target_size,
                                             n_v, e.id));
    }
    return dataset;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw Error("InvalidSpec", "split fraction must lie in (0, 1)");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    const std::size_t k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    std::vector<std::size_t> train(order.begin(), order.begin() + k);
    std::vector<std::size_t> val(order.begin() + k, order.end());
    std::sort(train.begin(), train.end());
    std::sort(val.begin(), val.end());
    return {std::move(train), std::move(val)};
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double fraction, std::uint64_t seed) {
    const auto [train_idx, val_idx] = split_indices(dataset.samples.size(), fraction, seed);
    Dataset train, val;
    auto copy_into = [&dataset](const std::vector<std::size_t>& idx, Dataset* out) {
        for (std::size_t i : idx) {
            out->samples.push_back(dataset.samples[i]);
            if (i < dataset.entries.size()) out->entries.push_back(dataset.entries[i]);
        }
    };
    copy_into(train_idx, &train);
    copy_into(val_idx, &val);
    return {std::move(train), std::move(val)};
}

}  // namespace pcseg
