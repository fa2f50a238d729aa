#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mxt/checkpoint.hpp"
#include "mxt/config.hpp"
#include "mxt/data.hpp"
#include "mxt/errors.hpp"
#include "mxt/gradcheck.hpp"
#include "mxt/metrics.hpp"
#include "mxt/model.hpp"
#include "mxt/ops.hpp"
#include "mxt/rng.hpp"
#include "mxt/scan_bench.hpp"
#include "mxt/train.hpp"

namespace fs = std::filesystem;
using namespace mxt;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct ConfigFlags {
    std::string file;
    std::vector<std::string> sets;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
    cmd->add_option("-c,--config", flags.file, "Config file with key = value lines");
    cmd->add_option("-s,--set", flags.sets, "Override one key, e.g. --set model.base_channels=8");
}

// File first, then MXT_SEED, then command-line flags.
RunConfig build_config(const ConfigFlags& flags) {
    RunConfig cfg;
    if (!flags.file.empty()) apply_config_file(cfg, flags.file);
    apply_environment(cfg);
    for (const auto& kv : flags.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t"), e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class T>
void train_with(RunConfig cfg, const std::string& resume, const std::string& log_path) {
    std::optional<CheckpointFile> start;
    if (!resume.empty()) {
        start = read_checkpoint(resume);
        for (const auto& n : adopt_checkpoint_config(cfg, *start, true)) std::cerr << "notice: " << n << "\n";
    }
    std::cout << format_config(cfg) << std::flush;
    Trainer<T> trainer(cfg, dataset_for(cfg));
    if (start) {
        trainer.restore(*start);
        std::cout << "resumed at step " << trainer.steps_done() << "\n";
    }
    std::ofstream file;
    if (!log_path.empty()) {
        file.open(log_path, std::ios::app);
        if (!file) throw IoError("cannot open log file '" + log_path + "'");
    }
    const auto t0 = std::chrono::steady_clock::now();
    run_training(trainer, log_path.empty() ? std::cout : file);
    std::cout << "wrote " << cfg.checkpoint << " after " << trainer.steps_done() << " steps in "
              << std::fixed << std::setprecision(1) << seconds_since(t0) << " s\n";
}

int cmd_train(const ConfigFlags& flags, const std::string& resume, const std::string& log_path) {
    RunConfig cfg = build_config(flags);
    if (cfg.precision == Precision::f64) {
        train_with<double>(cfg, resume, log_path);
    } else {
        train_with<float>(cfg, resume, log_path);
    }
    return kOk;
}

struct InferArgs {
    std::string checkpoint, image, mask, out;
    std::size_t tile = 0, overlap = 0;
    bool raw = false;
};

template <class T>
Image run_model(const MxtModel<T>& model, const Image& gt, const Image& mask, std::size_t tile,
                std::size_t overlap) {
    ImageSample s{gt, mask, MaskBucket::low};
    const auto masked = image_to_tensor<T>(s.masked());
    const auto m = image_to_tensor<T>(mask);
    const std::size_t h = gt.height, w = gt.width;
    if (tile == 0) {
        NoGradGuard guard;
        return tensor_to_image(model.forward(masked, m));
    }
    return tensor_to_image(tiled_inference(model, reshape(masked, {3, h, w}), reshape(m, {1, h, w}), tile, overlap));
}

template <class T>
Image infer_with(const CheckpointFile& file, const Image& gt, const Image& mask, std::size_t tile,
                 std::size_t overlap) {
    const auto model = load_model<T>(file);
    return run_model(model, gt, mask, tile, overlap);
}

Image infer_checkpoint(const CheckpointFile& file, const Image& gt, const Image& mask, std::size_t tile,
                       std::size_t overlap) {
    if (file.scalar_bytes == 8) return infer_with<double>(file, gt, mask, tile, overlap);
    return infer_with<float>(file, gt, mask, tile, overlap);
}

void check_pair(const Image& gt, const Image& mask, const std::string& what) {
    if (gt.channels != 3) throw DimensionError(what + ": image must have 3 channels");
    if (mask.channels != 1 || mask.height != gt.height || mask.width != gt.width) {
        throw DimensionError(what + ": mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                             " but image is " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
    }
}

int cmd_infer(const ConfigFlags& flags, const InferArgs& args) {
    RunConfig cfg = build_config(flags);
    const auto file = read_checkpoint(args.checkpoint);
    for (const auto& n : adopt_checkpoint_config(cfg, file, false)) std::cerr << "notice: " << n << "\n";
    if (args.tile != 0 && (args.tile % 8 != 0 || 2 * args.overlap >= args.tile)) {
        throw UsageError("--tile must be a multiple of 8 and --overlap less than half the tile");
    }
    const Image gt = read_image(args.image);
    const Image mask = read_pgm_mask(args.mask);
    check_pair(gt, mask, args.image);
    const auto t0 = std::chrono::steady_clock::now();
    Image out = infer_checkpoint(file, gt, mask, args.tile, args.overlap);
    const double secs = seconds_since(t0);
    if (!args.raw) out = composite_image(out, gt, mask);
    write_ppm(args.out, out);
    std::cout << "wrote " << args.out << " (" << gt.width << "x" << gt.height << ", "
              << (args.raw ? "raw" : "composited") << ") in " << std::fixed << std::setprecision(1)
              << 1000.0 * secs << " ms\n";
    return kOk;
}

struct EvalArgs {
    std::string gt_dir, mask_dir, out_dir, checkpoint, records;
    std::size_t tile = 0, overlap = 0;
    bool raw = false;
};

MaskBucket bucket_of(double ratio) {
    for (auto b : {MaskBucket::low, MaskBucket::mid}) {
        if (ratio <= bucket_range(b).high) return b;
    }
    return MaskBucket::high;
}

int cmd_eval(const EvalArgs& args) {
    if (args.out_dir.empty() == args.checkpoint.empty()) {
        throw UsageError("eval needs exactly one of --outputs or --checkpoint");
    }
    std::vector<fs::path> gts;
    if (!fs::is_directory(args.gt_dir)) throw IoError("ground-truth directory '" + args.gt_dir + "' does not exist");
    for (const auto& e : fs::directory_iterator(args.gt_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".ppm") gts.push_back(e.path());
    }
    std::sort(gts.begin(), gts.end());
    std::optional<CheckpointFile> file;
    if (!args.checkpoint.empty()) file = read_checkpoint(args.checkpoint);

    std::vector<EvalItem> items;
    for (const auto& p : gts) {
        const auto stem = p.stem().string();
        const fs::path mask_path = fs::path(args.mask_dir) / (stem + ".pgm");
        if (!fs::exists(mask_path)) {
            std::cerr << "warning: no mask for " << p.filename().string() << ", skipped\n";
            continue;
        }
        EvalItem item;
        item.name = stem;
        item.gt = read_ppm(p);
        item.mask = read_pgm_mask(mask_path);
        check_pair(item.gt, item.mask, p.string());
        item.bucket = bucket_of(hole_ratio(item.mask));
        if (file) {
            item.output = infer_checkpoint(*file, item.gt, item.mask, args.tile, args.overlap);
        } else {
            const fs::path out_path = fs::path(args.out_dir) / (stem + ".ppm");
            if (fs::exists(out_path)) item.output = read_ppm(out_path);
        }
        items.push_back(std::move(item));
    }
    const auto report = evaluate(items, !args.raw);
    report.write_table(std::cout);
    if (!args.records.empty()) {
        std::ofstream os(args.records);
        if (!os) throw IoError("cannot write '" + args.records + "'");
        report.write_records(os);
    }
    return kOk;
}

int cmd_gradcheck(const std::string& scope, std::uint64_t seed) {
    std::vector<std::string> names;
    if (scope == "all") {
        names = gradcheck_suite_names();
    } else {
        names = {scope};
    }
    GradcheckOptions options;
    options.seed = seed;
    bool ok = true;
    std::cout << std::left << std::setw(13) << "block" << std::setw(14) << "worst_rel_err" << std::setw(9)
              << "checked" << std::setw(9) << "skipped" << "status  worst_tensor\n";
    for (const auto& n : names) {
        const auto r = run_gradcheck_suite(n, options);
        ok = ok && r.passed;
        std::ostringstream err;
        err << std::scientific << std::setprecision(3) << r.worst_rel_error;
        std::cout << std::left << std::setw(13) << r.name << std::setw(14) << err.str() << std::setw(9)
                  << r.entries_checked << std::setw(9) << r.entries_skipped << std::setw(8)
                  << (r.passed ? "pass" : "FAIL") << r.worst_tensor << std::endl;
    }
    return ok ? kOk : kNumeric;
}

struct BenchArgs {
    std::vector<std::size_t> lengths{256, 512, 1024}, states{16}, chunks{64};
    std::size_t repeats = 5, channels = 16;
    std::uint64_t seed = 0;
};

int cmd_scan_bench(const BenchArgs& args) {
    for (auto v : {args.lengths, args.states, args.chunks}) {
        for (auto e : v) {
            if (e == 0) throw UsageError("scan-bench sizes must be positive");
        }
    }
    std::cout << std::right << std::setw(7) << "L" << std::setw(5) << "N" << std::setw(7) << "chunk"
              << std::setw(12) << "seq_ms" << std::setw(12) << "chunked_ms" << std::setw(12) << "max_diff"
              << "\n";
    for (auto l : args.lengths)
        for (auto n : args.states)
            for (auto c : args.chunks) {
                const auto row = scan_bench_row(l, n, c, args.repeats, args.seed, args.channels);
                if (!(row.max_abs_diff < 1e-10)) {
                    throw NumericError("chunked scan differs from sequential by " +
                                       std::to_string(row.max_abs_diff) + " at L=" + std::to_string(l));
                }
                std::cout << std::setw(7) << l << std::setw(5) << n << std::setw(7) << c << std::fixed
                          << std::setprecision(3) << std::setw(12) << row.sequential_ms << std::setw(12)
                          << row.chunked_ms << std::scientific << std::setprecision(1) << std::setw(12)
                          << row.max_abs_diff << std::defaultfloat << std::endl;
            }
    return kOk;
}

struct MaskArgs {
    std::string bucket = "low", out_dir;
    std::size_t count = 10, size = 256;
    std::uint64_t seed = 0;
};

int cmd_mask_gen(const MaskArgs& args) {
    const MaskBucket bucket = parse_bucket(args.bucket);
    std::error_code ec;
    fs::create_directories(args.out_dir, ec);
    if (ec) throw IoError("cannot create '" + args.out_dir + "': " + ec.message());
    const fs::path manifest_path = fs::path(args.out_dir) / "manifest.txt";
    std::ofstream manifest(manifest_path);
    if (!manifest) throw IoError("cannot write '" + manifest_path.string() + "'");
    std::size_t fallbacks = 0;
    for (std::size_t i = 0; i < args.count; ++i) {
        MaskSpec spec;
        spec.bucket = bucket;
        spec.seed = Rng::derive(args.seed, i).next();
        const auto r = generate_irregular_mask(spec, args.size, args.size);
        char name[32];
        std::snprintf(name, sizeof name, "mask_%04zu.pgm", i);
        write_pgm_mask(fs::path(args.out_dir) / name, r.mask);
        char ratio[32];
        std::snprintf(ratio, sizeof ratio, "%.6f", r.ratio);
        manifest << name << " bucket=" << to_string(bucket) << " ratio=" << ratio << " attempts=" << r.attempts
                 << " fallback=" << (r.fallback ? 1 : 0) << "\n";
        if (r.fallback) {
            ++fallbacks;
            std::cerr << "warning: " << name << " missed the " << to_string(bucket) << " bucket (ratio " << ratio
                      << ")\n";
        }
    }
    if (!manifest) throw IoError("failed writing '" + manifest_path.string() + "'");
    std::cout << "wrote " << args.count << " masks to " << args.out_dir << " (" << fallbacks << " fallbacks)\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MxT image inpainting: training, inference, evaluation and diagnostics"};
    app.require_subcommand(1);

    ConfigFlags train_flags;
    std::string resume, log_path;
    auto* train = app.add_subcommand("train", "Train a model (synthetic data unless data.dir is set)");
    add_config_flags(train, train_flags);
    train->add_option("--resume", resume, "Continue from a training checkpoint");
    train->add_option("--log", log_path, "Append loss records to this file instead of stdout");

    ConfigFlags infer_flags;
    InferArgs infer_args;
    auto* infer = app.add_subcommand("infer", "Inpaint one image");
    add_config_flags(infer, infer_flags);
    infer->add_option("--checkpoint", infer_args.checkpoint)->required();
    infer->add_option("--image", infer_args.image, "Ground-truth PPM; hole pixels are ignored")->required();
    infer->add_option("--mask", infer_args.mask, "PGM mask, 255 = hole")->required();
    infer->add_option("--out", infer_args.out)->required();
    infer->add_option("--tile", infer_args.tile, "Tile side (multiple of 8); 0 runs one pass");
    infer->add_option("--overlap", infer_args.overlap, "Tile overlap in pixels");
    infer->add_flag("--raw", infer_args.raw, "Write the raw network output instead of the composite");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "PSNR / SSIM / L1 per mask bucket");
    eval->add_option("--gt", eval_args.gt_dir, "Directory of ground-truth NAME.ppm")->required();
    eval->add_option("--masks", eval_args.mask_dir, "Directory of NAME.pgm masks")->required();
    eval->add_option("--outputs", eval_args.out_dir, "Directory of NAME.ppm model outputs");
    eval->add_option("--checkpoint", eval_args.checkpoint, "Run this model instead of reading outputs");
    eval->add_option("--tile", eval_args.tile);
    eval->add_option("--overlap", eval_args.overlap);
    eval->add_option("--records", eval_args.records, "Also write key=value records here");
    eval->add_flag("--raw", eval_args.raw, "Score raw outputs instead of composites");

    std::string scope = "all";
    std::uint64_t grad_seed = 0;
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks in double precision");
    grad->add_option("--scope", scope, "all or one block name");
    grad->add_option("--seed", grad_seed);

    BenchArgs bench_args;
    auto* bench = app.add_subcommand("scan-bench", "Time sequential and chunked selective scans");
    bench->add_option("--lengths", bench_args.lengths)->delimiter(',');
    bench->add_option("--states", bench_args.states)->delimiter(',');
    bench->add_option("--chunks", bench_args.chunks)->delimiter(',');
    bench->add_option("--repeats", bench_args.repeats);
    bench->add_option("--channels", bench_args.channels);
    bench->add_option("--seed", bench_args.seed);

    MaskArgs mask_args;
    auto* masks = app.add_subcommand("mask-gen", "Write irregular masks for one hole-ratio bucket");
    masks->add_option("--bucket", mask_args.bucket, "low (0-20%), mid (20-40%) or high (40-60%)");
    masks->add_option("--count", mask_args.count);
    masks->add_option("--size", mask_args.size)->check(CLI::PositiveNumber);
    masks->add_option("--seed", mask_args.seed);
    masks->add_option("--out-dir", mask_args.out_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*train) return cmd_train(train_flags, resume, log_path);
        if (*infer) return cmd_infer(infer_flags, infer_args);
        if (*eval) return cmd_eval(eval_args);
        if (*grad) return cmd_gradcheck(scope, grad_seed);
        if (*bench) return cmd_scan_bench(bench_args);
        if (*masks) return cmd_mask_gen(mask_args);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const ContractError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumeric;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kData;
    } catch (const CorruptionError& e) {
        std::cerr << "corrupt file: " << e.what() << "\n";
        return kData;
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return kData;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kData;
    } catch (const DimensionError& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return kData;
    }
    return kUsage;
}
