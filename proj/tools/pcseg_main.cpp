#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "pcseg/dataset.hpp"
#include "pcseg/gradcheck.hpp"
#include "pcseg/metrics.hpp"
#include "pcseg/trainer.hpp"

namespace fs = std::filesystem;
using namespace pcseg;

namespace {

struct GlobalOpts {
    std::uint64_t seed = 0;
    std::string log_level = "text";
    int threads = 1;
};

Vec2 parse_center(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) {
        throw Error("ParseError", "--center expects 'auto' or 'x,y', got '" + text + "'");
    }
    try {
        return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
    } catch (const std::exception&) {
        throw Error("ParseError", "--center expects 'auto' or 'x,y', got '" + text + "'");
    }
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << content;
}

// Chain files hold either a single chain or a {"lumen":..., "media":...}
// pair; a single chain stands in for both boundaries.
std::pair<PolarChain, PolarChain> load_chain_pair(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
        throw Error("ParseError", path + ": " + e.what());
    }
    if (j.contains("lumen") && j.contains("media")) {
        return {chain_from_json(j["lumen"].dump()), chain_from_json(j["media"].dump())};
    }
    PolarChain c = chain_from_json(ss.str());
    return {c, c};
}

int probe_image_size(const std::string& manifest_path) {
    const auto entries = load_manifest(manifest_path);
    if (entries.empty()) throw Error("InvalidSpec", "manifest is empty");
    const fs::path root = fs::path(manifest_path).parent_path();
    const Image probe = load_image((root / entries.front().image).string());
    if (probe.width != probe.height) {
        throw Error("InvalidSpec", "non-square image; pass --size to resize");
    }
    return probe.width;
}

void cmd_resample(const std::string& labels, const std::string& center_text, int n_v, int size,
                  const std::string& out) {
    const CartesianContour contour = load_label(labels);
    Vec2 center;
    if (center_text == "auto") {
        if (size > 0) {
            center = {size / 2.0, size / 2.0};
        } else {
            // No image frame given: fall back to the label bounding-box center.
            double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
            for (const Vec2& p : contour.points) {
                min_x = std::min(min_x, p.x);
                min_y = std::min(min_y, p.y);
                max_x = std::max(max_x, p.x);
                max_y = std::max(max_y, p.y);
            }
            center = {0.5 * (min_x + max_x), 0.5 * (min_y + max_y)};
        }
    } else {
        center = parse_center(center_text);
    }
    save_chain(resample(contour, center, n_v), out);
}

void cmd_loss(const std::string& pred, const std::string& gt, const std::string& backend,
              bool with_grad, const std::string& out) {
    const auto [pred_lumen, pred_media] = load_chain_pair(pred);
    const auto [gt_lumen, gt_media] = load_chain_pair(gt);
    const LossReport report =
        jm_loss(pred_lumen, pred_media, gt_lumen, gt_media,
                backend == "paper" ? LossBackend::Paper : LossBackend::Exact);
    nlohmann::json j = nlohmann::json::parse(report.to_json());
    if (!with_grad) j.erase("grad");
    const std::string text = j.dump(2);
    std::cout << text << "\n";
    if (!out.empty()) write_text(out, text + "\n");
}

int cmd_gradcheck(const GradCheckConfig& cfg) {
    const GradCheckResult r = gradcheck_loss(cfg);
    std::cout << r.to_json() << "\n";
    return r.ok() ? 0 : 1;
}

void cmd_train(const std::string& manifest, const std::string& synth_dir, TrainConfig cfg,
               int size, bool standardize, const std::string& out_dir) {
    const std::string manifest_path =
        !synth_dir.empty() ? (fs::path(synth_dir) / "manifest.json").string() : manifest;
    if (size <= 0) size = probe_image_size(manifest_path);
    const Dataset dataset = load_dataset(manifest_path, size, cfg.n_v);

    cfg.descriptor = default_descriptor(size, cfg.n_v);
    cfg.descriptor.input_standardize = standardize;

    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "config.json").string(), cfg.to_json() + "\n");

    const TrainResult result = train(cfg, dataset, out_dir);  // streams train_log.jsonl
    save_checkpoint(result.model, (fs::path(out_dir) / "model.ckpt").string());

    // Held-out subset, re-rooted with absolute paths so the manifest works
    // from the run directory.
    const fs::path root = fs::absolute(fs::path(manifest_path).parent_path());
    std::vector<ManifestEntry> val_entries;
    for (std::size_t i : result.val_idx) {
        ManifestEntry e = dataset.entries[i];
        e.image = (root / e.image).string();
        e.lumen = (root / e.lumen).string();
        e.media = (root / e.media).string();
        val_entries.push_back(std::move(e));
    }
    save_manifest(val_entries, (fs::path(out_dir) / "val_manifest.json").string());

    std::cout << "trained " << cfg.epochs << " epochs; final train loss "
              << result.log.back().train_loss << "\n";
}

void cmd_eval(const std::string& model_path, const std::string& manifest, int resolution,
              const std::string& csv, const std::string& hist, const std::string& json_out,
              int threads) {
    const RegressorState model = load_checkpoint(model_path);
    const Dataset dataset = load_dataset(manifest, model.desc.input_size, model.desc.n_v);
    const EvalResult result = evaluate(model, dataset.samples, resolution, threads);
    if (!csv.empty()) write_text(csv, result.to_csv());
    if (!hist.empty()) write_text(hist, result.histogram.to_csv());
    const std::string summary = result.to_json();
    if (!json_out.empty()) write_text(json_out, summary + "\n");
    std::cout << summary << "\n";
}

void cmd_render(const std::string& image_path, const std::string& pred,
                const std::string& gt_lumen, const std::string& gt_media,
                const std::string& out) {
    const Image image = load_image(image_path);
    const auto [pred_lumen, pred_media] = load_chain_pair(pred);
    render_overlay_png(image, pred_lumen, pred_media, load_label(gt_lumen),
                       load_label(gt_media), out);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pcseg: lumen/media contour segmentation with closed polygonal chains"};
    app.require_subcommand(1);
    GlobalOpts global;
    app.add_option("--seed", global.seed, "RNG seed (default 0)");
    app.add_option("--log-level", global.log_level, "text|json diagnostics on stderr")
        ->check(CLI::IsMember({"text", "json"}));
    app.add_option("--threads", global.threads, "worker thread cap (default 1)")
        ->check(CLI::PositiveNumber);

    // resample
    auto* c_resample = app.add_subcommand("resample", "sample a contour onto fixed rays");
    std::string r_labels, r_center = "auto", r_out;
    int r_nv = 32, r_size = 0;
    c_resample->add_option("--labels", r_labels, "contour text file")->required();
    c_resample->add_option("--center", r_center, "auto | x,y");
    c_resample->add_option("--nv", r_nv, "vertex count")->check(CLI::PositiveNumber);
    c_resample->add_option("--size", r_size, "image side; auto center becomes (S/2, S/2)");
    c_resample->add_option("--out", r_out, "chain JSON output")->required();

    // loss
    auto* c_loss = app.add_subcommand("loss", "segment Jaccard loss between chain files");
    std::string l_pred, l_gt, l_backend = "exact", l_out;
    bool l_grad = false;
    c_loss->add_option("--pred", l_pred)->required();
    c_loss->add_option("--gt", l_gt)->required();
    c_loss->add_option("--backend", l_backend)->check(CLI::IsMember({"exact", "paper"}));
    c_loss->add_flag("--grad", l_grad, "include the gradient vector");
    c_loss->add_option("--out", l_out, "also write the report here");

    // gradcheck
    auto* c_grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    GradCheckConfig gc;
    c_grad->add_option("--backend", gc.backend)
        ->check(CLI::IsMember({"jm-exact", "jm-paper", "mse"}));
    c_grad->add_option("--trials", gc.trials)->check(CLI::PositiveNumber);
    c_grad->add_option("--eps", gc.eps, "central difference step");
    c_grad->add_option("--tol", gc.tol, "relative error threshold");

    // synth
    auto* c_synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
    SynthSpec synth;
    std::string s_out;
    c_synth->add_option("--count", synth.count)->check(CLI::PositiveNumber);
    c_synth->add_option("--size", synth.image_size)->check(CLI::PositiveNumber);
    c_synth->add_option("--nv", synth.n_v)->check(CLI::PositiveNumber);
    c_synth->add_option("--harmonics", synth.harmonics);
    c_synth->add_option("--alpha-max", synth.alpha_max, "total relative radial deviation");
    c_synth->add_option("--speckle", synth.speckle, "multiplicative noise level");
    c_synth->add_option("--out", s_out, "output directory")->required();

    // augment
    auto* c_aug = app.add_subcommand("augment", "write flip/rotate/noise variants of a dataset");
    std::string a_manifest, a_out;
    AugmentSpec aug;
    int a_size = 0, a_nv = 32;
    c_aug->add_option("--manifest", a_manifest)->required();
    c_aug->add_option("--out", a_out, "output directory")->required();
    c_aug->add_option("--noise-variance-255", aug.noise_variance_255,
                      "additive noise variance in 0..255 units");
    c_aug->add_flag("--noise-original", aug.noise_original,
                    "also emit a noised copy of each source image");
    c_aug->add_option("--size", a_size, "resize target (default: native)");
    c_aug->add_option("--nv", a_nv)->check(CLI::PositiveNumber);

    // train
    auto* c_train = app.add_subcommand("train", "train the radial regressor");
    std::string t_manifest, t_synth_dir, t_out;
    TrainConfig tc;
    int t_size = 0;
    auto* opt_manifest = c_train->add_option("--manifest", t_manifest);
    auto* opt_synth = c_train->add_option("--synth-dir", t_synth_dir);
    opt_manifest->excludes(opt_synth);
    c_train->add_option("--nv", tc.n_v)->check(CLI::PositiveNumber);
    c_train->add_option("--loss", tc.loss)
        ->check(CLI::IsMember({"jm-exact", "jm-paper", "mse"}));
    c_train->add_option("--epochs", tc.epochs)->check(CLI::PositiveNumber);
    c_train->add_option("--batch", tc.batch)->check(CLI::PositiveNumber);
    c_train->add_option("--lr", tc.lr, "initial learning rate (default: adam 1e-3, sgd 1e-2)");
    c_train->add_option("--lr-schedule", tc.lr_schedule)
        ->check(CLI::IsMember({"cosine", "constant"}));
    c_train->add_option("--optimizer", tc.optimizer)->check(CLI::IsMember({"adam", "sgd"}));
    c_train->add_option("--split", tc.split_fraction, "train fraction (default 0.9)");
    c_train->add_option("--eval-cadence", tc.eval_cadence);
    c_train->add_option("--checkpoint-cadence", tc.checkpoint_cadence);
    c_train->add_flag("--augment", tc.augment, "augment the training subset");
    bool t_standardize = true;
    c_train->add_flag("--standardize,!--no-standardize", t_standardize,
                      "per-image input standardization (default on)");
    c_train->add_option("--size", t_size, "resize target (default: native)");
    c_train->add_option("--out", t_out, "run directory")->required();

    // eval
    auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint against a manifest");
    std::string e_model, e_manifest, e_csv, e_hist, e_json;
    int e_resolution = 1024;
    c_eval->add_option("--model", e_model)->required();
    c_eval->add_option("--manifest", e_manifest)->required();
    c_eval->add_option("--resolution", e_resolution, "raster resolution (power of two)");
    c_eval->add_option("--csv", e_csv, "per-image metric table");
    c_eval->add_option("--hist", e_hist, "radial error histogram CSV");
    c_eval->add_option("--json", e_json, "summary JSON file");

    // render
    auto* c_render = app.add_subcommand("render", "draw prediction/ground-truth overlays");
    std::string rd_image, rd_pred, rd_gt_lumen, rd_gt_media, rd_out;
    c_render->add_option("--image", rd_image)->required();
    c_render->add_option("--pred", rd_pred, "chain JSON (single or lumen/media pair)")
        ->required();
    c_render->add_option("--gt-lumen", rd_gt_lumen)->required();
    c_render->add_option("--gt-media", rd_gt_media)->required();
    c_render->add_option("--out", rd_out, "PNG path")->required();

    // errata-report
    auto* c_errata = app.add_subcommand(
        "errata-report", "closed-form backend vs exact-oracle discrepancy tables");
    int er_trials = 10000;
    std::string er_out;
    c_errata->add_option("--trials", er_trials)->check(CLI::PositiveNumber);
    c_errata->add_option("--out", er_out, "report JSON path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*c_resample) {
            cmd_resample(r_labels, r_center, r_nv, r_size, r_out);
        } else if (*c_loss) {
            cmd_loss(l_pred, l_gt, l_backend, l_grad, l_out);
        } else if (*c_grad) {
            gc.seed = global.seed;
            return cmd_gradcheck(gc);
        } else if (*c_synth) {
            synth.seed = global.seed;
            write_synth_dataset(synth, s_out);
            std::cout << "wrote " << synth.count << " samples to " << s_out << "\n";
        } else if (*c_aug) {
            const int size = a_size > 0 ? a_size : probe_image_size(a_manifest);
            const Dataset dataset = load_dataset(a_manifest, size, a_nv);
            aug.seed = global.seed;
            write_dataset(augment_dataset(dataset.samples, aug), a_out);
            std::cout << "wrote augmented dataset to " << a_out << "\n";
        } else if (*c_train) {
            if (t_manifest.empty() && t_synth_dir.empty()) {
                throw Error("InvalidSpec", "train needs --manifest or --synth-dir");
            }
            tc.seed = global.seed;
            tc.threads = global.threads;
            cmd_train(t_manifest, t_synth_dir, tc, t_size, t_standardize, t_out);
        } else if (*c_eval) {
            cmd_eval(e_model, e_manifest, e_resolution, e_csv, e_hist, e_json, global.threads);
        } else if (*c_render) {
            cmd_render(rd_image, rd_pred, rd_gt_lumen, rd_gt_media, rd_out);
        } else if (*c_errata) {
            write_text(er_out, build_errata_report(er_trials, global.seed) + "\n");
            std::cout << "wrote errata report to " << er_out << "\n";
        }
    } catch (const Error& e) {
        if (global.log_level == "json") {
            nlohmann::json j;
            j["error"] = e.code();
            j["message"] = e.what();
            std::cerr << j.dump() << "\n";
        } else {
            std::cerr << "error: " << e.what() << "\n";
        }
        return 1;
    }
    return 0;
}
