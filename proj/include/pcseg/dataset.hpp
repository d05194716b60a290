#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pcseg/geometry.hpp"
#include "pcseg/image.hpp"

namespace pcseg {

/// One training/evaluation item: preprocessed image plus ground truth as both
/// the original expert point lists and the ray-resampled chains. Media
/// encloses lumen at every ray (checked on construction).
struct LabeledSample {
    Image image;  // S x S x 3, floats in [0,1]
    CartesianContour lumen_gt;
    CartesianContour media_gt;
    PolarChain lumen_chain;
    PolarChain media_chain;
    std::string id;

    int size() const { return image.width; }
};

struct AugmentSpec {
    double rotation_max_deg = 45.0;        // rotation drawn uniform in [-max, +max]
    double noise_variance_255 = 0.2 * 255.0;  // additive Gaussian variance, 0..255 units
    bool noise_original = false;           // also emit a noised copy of the source
    std::uint64_t seed = 0;
};

struct SynthSpec {
    int count = 500;
    int image_size = 64;
    int n_v = 32;
    int harmonics = 3;
    double alpha_max = 0.15;       // total relative radial deviation bound (lumen)
    double lumen_base_lo = 0.16;   // lumen base radius, fraction of image size
    double lumen_base_hi = 0.22;
    double media_ratio_lo = 1.50;  // media base radius / lumen base radius
    double media_ratio_hi = 1.85;
    double speckle = 0.05;         // multiplicative noise level
    double additive_sigma = 0.01;  // additive Gaussian sigma, [0,1] units
    std::uint64_t seed = 0;

    void validate() const;  // throws InvalidSpec when non-star or non-nested shapes are possible
};

struct ManifestEntry {
    std::string id;
    std::string image;  // path relative to the manifest directory
    std::string lumen;
    std::string media;
};

struct Dataset {
    std::vector<LabeledSample> samples;
    std::vector<ManifestEntry> entries;  // parallel to samples; empty for in-memory sets
};

/// IVUS label file: "x y" per line. Alias of the contour text loader.
inline CartesianContour load_label(const std::string& path) { return load_contour_text(path); }

/// Resamples both boundaries about the image center (S/2, S/2) and enforces
/// the nested-anatomy invariant. Throws NestingViolation with the offending
/// ray on violation.
void finalize_chains(LabeledSample* sample, int n_v);

/// Bilinear resize to S x S, label rescale by (S/W0, S/H0), 3-channel
/// replication, chain resampling at n_v about the image center.
LabeledSample preprocess(const Image& raw, const CartesianContour& lumen,
                         const CartesianContour& media, int target_size, int n_v,
                         std::string id);

/// The four geometric variants (LR, UD, LR+UD, random rotation), labels moved
/// by the same map, Gaussian noise added to every generated image.
std::vector<LabeledSample> augment(const LabeledSample& sample, const AugmentSpec& spec);

/// Whole-dataset augmentation; per-sample streams derived from (seed, index)
/// so parallel and serial runs agree. Returns originals + variants.
std::vector<LabeledSample> augment_dataset(const std::vector<LabeledSample>& samples,
                                           const AugmentSpec& spec);

/// Star-shaped harmonic contours about the image center: dark lumen disk,
/// bright media ring, gray background, multiplicative speckle plus additive
/// Gaussian noise. Bit-reproducible from (spec, seed).
Dataset synth_generate(const SynthSpec& spec);

/// Generates and writes images/*.png, labels/*.lum.txt, labels/*.med.txt and
/// manifest.json under `dir`.
void write_synth_dataset(const SynthSpec& spec, const std::string& dir);

/// Writes an existing dataset in the same layout.
void write_dataset(const std::vector<LabeledSample>& samples, const std::string& dir);

std::vector<ManifestEntry> load_manifest(const std::string& path);
void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);

/// Loads and preprocesses every manifest entry. Images may be PNG or PGM;
/// multi-channel inputs are reduced to grayscale before replication.
Dataset load_dataset(const std::string& manifest_path, int target_size, int n_v);

/// Seed-deterministic disjoint split; train gets floor(fraction * n) samples.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double fraction, std::uint64_t seed);

std::pair<Dataset, Dataset> split(const Dataset& dataset, double fraction, std::uint64_t seed);

}  // namespace pcseg
