// Acceptance suite: one PASS/FAIL line per criterion, exit code 1 if any fails.
// Usage: acceptance <work-dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "vaesynth/cli/commands.hpp"
#include "vaesynth/cli/config.hpp"
#include "vaesynth/numcore/grad_check.hpp"

using namespace vaesynth;
namespace fs = std::filesystem;
using numcore::Tensor;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
    return out;
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Verdict& v, double secs) {
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << title << "  (" << v.detail
              << "; " << fmt(secs, 1) << " s)" << std::endl;
    if (!v.pass) ++failures;
}

// Runs one criterion, turning an escaped exception into a FAIL line.
void criterion(int id, const std::string& title, const std::function<Verdict()>& body) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
        v = body();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    report(id, title, v, seconds_since(t0));
}

bool run_cli(const std::vector<std::string>& args, std::ostream& log) {
    std::ostringstream err;
    const int code = cli::run(args, nullptr, log, err);
    if (code != 0) log << "exit " << code << ": " << err.str();
    return code == 0;
}

Tensor<float> heldout_fixture(const synthgen::FixtureSpec& base, std::uint64_t seed) {
    synthgen::FixtureSpec s = base;
    s.seed = seed;
    std::vector<Tensor<float>> imgs;
    auto classes = s.classes;
    std::sort(classes.begin(), classes.end());
    for (const auto& cls : classes)
        for (std::size_t i = 0; i < s.n_per_class; ++i)
            imgs.push_back(synthgen::preprocess_image<float>(synthgen::render_fixture_image(s, cls, i), s.image_side));
    return synthgen::stack_images(imgs);
}

std::vector<double> histogram_in_disk(const dataio::GrayImage& g, int bins) {
    const double c = (static_cast<double>(g.width) - 1.0) / 2.0;
    const double r = static_cast<double>(g.width) / 2.0 - 1.5;  // bilinear footprint stays inside the frame
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    double n = 0;
    for (std::size_t y = 0; y < g.height; ++y)
        for (std::size_t x = 0; x < g.width; ++x) {
            const double dx = static_cast<double>(x) - c, dy = static_cast<double>(y) - c;
            if (dx * dx + dy * dy > r * r) continue;
            const int b = std::min(bins - 1, static_cast<int>(g.at(x, y) / 255.0 * bins));
            h[static_cast<std::size_t>(b)] += 1;
            n += 1;
        }
    for (auto& v : h) v /= n;
    return h;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: acceptance <work-dir>\n";
        return 2;
    }
    const fs::path work = argv[1];
    fs::remove_all(work);
    fs::create_directories(work);
    std::ofstream log(work / "acceptance.log");

    cli::RunConfig cfg;  // defaults throughout
    cfg.out = (work / "run").string();
    const std::vector<std::string> commands{"fixture", "train", "generate", "augment", "project", "classify", "report"};
    const std::vector<std::string> out_args{"--out", cfg.out};

    // The full default pipeline runs twice in the same directory; later criteria read its artifacts.
    double classify_seconds = 0.0;
    bool pipeline_ok = true;
    std::map<std::string, std::string> first_tree, second_tree;
    const auto pipeline_t0 = Clock::now();
    for (int pass = 0; pass < 2 && pipeline_ok; ++pass) {
        for (const auto& cmd : commands) {
            std::vector<std::string> args{cmd};
            args.insert(args.end(), out_args.begin(), out_args.end());
            const auto t0 = Clock::now();
            if (!run_cli(args, log)) {
                pipeline_ok = false;
                std::cout << "pipeline step '" << cmd << "' failed; see " << (work / "acceptance.log").string() << "\n";
                break;
            }
            if (pass == 0 && cmd == "classify") classify_seconds = seconds_since(t0);
        }
        (pass == 0 ? first_tree : second_tree) = snapshot(cfg.out);
    }
    const double pipeline_seconds = seconds_since(pipeline_t0);
    std::cout << "pipeline: two full default runs in " << fmt(pipeline_seconds, 1) << " s" << std::endl;

    const auto manifest = dataio::scan_manifest(cfg.data_root());
    const auto corpus = evalkit::load_labeled(manifest, cfg.image_side);
    const vae::TrainConfig tc = cfg.train_config();

    // 1. gradient soundness
    criterion(1, "gradient check of the full VAE objective", [&] {
        auto model = vae::VaeModel<double>::initialized(8, 4, tc.seed);
        numcore::Rng rng(tc.seed);
        Tensor<double> x({1, 1, 8, 8}), eps({1, 4});
        for (auto& v : x.data()) v = rng.uniform();
        rng.fill_normal(eps.data());
        const auto t0 = Clock::now();
        const auto r = numcore::grad_check(
            [&](numcore::Tape<double>& tape, numcore::ParamSet<double>&) {
                return vae::objective_graph(tape, model, x, eps, tc.weights()).total;
            },
            model.params(), 1e-4);
        const double secs = seconds_since(t0);
        return Verdict{r.passed() && secs < 30.0, "max rel error " + std::to_string(r.max_rel_error) + " over " +
                                                      std::to_string(r.elements_checked) + " parameters, worst " +
                                                      r.worst_parameter};
    });

    // 2. loss formulas
    criterion(2, "loss-formula oracles", [&] {
        const auto t0 = Clock::now();
        numcore::Rng rng(2);
        Tensor<double> a({4, 1, 16, 16}), b({4, 1, 16, 16});
        for (auto& v : a.data()) v = rng.uniform();
        for (auto& v : b.data()) v = rng.uniform();
        double s = 0;
        for (std::size_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        const double rec_oracle = s / static_cast<double>(a.numel());
        const bool rec_ok = std::abs(vae::reconstruction_loss(a, b) - rec_oracle) <= 1e-6 * rec_oracle;

        numcore::ParamSet<double> ps;
        ps.add("p", Tensor<double>({1}, 2.0));
        const double wd = vae::weight_decay_loss(ps, 0.001);
        const bool wd_ok = wd == 0.004;

        const double mu = 0.7, lv = -0.4, sd = std::exp(0.5 * lv);
        double acc = 0;
        const int n = 1000000;
        for (int i = 0; i < n; ++i) {
            const double e = rng.normal(), z = mu + sd * e;
            acc += (-std::log(sd) - 0.5 * e * e) - (-0.5 * z * z);
        }
        const double closed = vae::kld_gaussian(Tensor<double>({1, 1}, mu), Tensor<double>({1, 1}, lv));
        const bool kld_ok = std::abs(closed - acc / n) < 1e-2;
        const double secs = seconds_since(t0);
        return Verdict{rec_ok && wd_ok && kld_ok && secs < 60.0,
                       "weight decay " + fmt(wd, 6) + ", KLD closed " + fmt(closed, 5) + " vs MC " + fmt(acc / n, 5) +
                           ", reconstruction " + (rec_ok ? "matches" : "differs from") + " loop oracle"};
    });

    // Trained models shared by criteria 3, 4 and 6.
    const auto t_train = Clock::now();
    auto model = vae::VaeModel<float>::initialized(cfg.image_side, cfg.latent_dim, tc.seed);
    const auto curve = vae::train(model, corpus.images, tc);
    auto model_again = vae::VaeModel<float>::initialized(cfg.image_side, cfg.latent_dim, tc.seed);
    const auto curve_again = vae::train(model_again, corpus.images, tc);
    const double train_twice_seconds = seconds_since(t_train);

    // 3. training property
    criterion(3, "100-epoch training on the fixture corpus", [&] {
        std::vector<double> ma;
        for (std::size_t i = 9; i < curve.size(); ++i) {
            double s = 0;
            for (std::size_t j = i - 9; j <= i; ++j) s += curve[j].total;
            ma.push_back(s / 10.0);
        }
        std::size_t rises = 0;
        for (std::size_t i = 1; i < ma.size(); ++i) rises += ma[i] > ma[i - 1];
        bool identical = curve.size() == curve_again.size() && model.params().same_values(model_again.params());
        for (std::size_t i = 0; identical && i < curve.size(); ++i)
            identical = curve[i].total == curve_again[i].total && curve[i].reconstruction == curve_again[i].reconstruction;
        const double rec = curve.back().reconstruction;
        const bool ok = curve.size() == 100 && rises == 0 && rec < 0.05 && identical && train_twice_seconds < 300.0;
        return Verdict{ok, "moving-average rises " + std::to_string(rises) + ", total " + fmt(curve.front().total) +
                               " -> " + fmt(curve.back().total) + ", final reconstruction " + fmt(rec) +
                               ", rerun " + (identical ? "bit-identical" : "differs") + ", two runs took " +
                               fmt(train_twice_seconds, 1) + " s"};
    });

    // 4. regularization effect
    criterion(4, "weight decay shrinks parameters without hurting test loss", [&] {
        vae::TrainConfig no_wd = tc;
        no_wd.lambda_wd = 0.0;
        auto plain = vae::VaeModel<float>::initialized(cfg.image_side, cfg.latent_dim, tc.seed);
        vae::train(plain, corpus.images, no_wd);
        const auto test = heldout_fixture(cfg.fixture_spec(), cfg.stream_seed("fixture-heldout"));
        const auto with = vae::evaluate_test_loss(model, test);
        const auto without = vae::evaluate_test_loss(plain, test);
        const double sq_with = model.params().sum_squares(), sq_without = plain.params().sum_squares();
        const bool ok = sq_with < sq_without && with.total <= 1.10 * without.total;
        return Verdict{ok, "sum param^2 " + fmt(sq_with, 2) + " (lambda 1e-3) vs " + fmt(sq_without, 2) +
                               " (lambda 0), held-out test total " + fmt(with.total) + " vs " + fmt(without.total)};
    });

    // 5. count law and linear cost
    criterion(5, "generation count law and linear cost in k", [&] {
        std::size_t synthetic = 0, originals = 0, stray = 0;
        for (const auto& [name, _] : first_tree) {
            if (!name.starts_with("synthetic/") || !name.ends_with(".pgm")) continue;
            const auto dir = fs::path(name).parent_path().filename().string();
            if (!dir.ends_with(synthgen::kReconstructedSuffix)) ++stray;
            (name.ends_with("_orig.pgm") ? originals : synthetic) += 1;
        }
        const std::vector<double> ks{1, 2, 4, 8};
        std::vector<double> times;
        const auto frozen = vae::load_model<float>(cfg.model_path());
        for (double k : ks) {
            double best = 1e300;
            for (int rep = 0; rep < 3; ++rep) {
                const fs::path dir = work / "timing" / std::to_string(static_cast<int>(k));
                const auto t0 = Clock::now();
                synthgen::generate_synthetic_dataset(manifest, frozen, static_cast<std::size_t>(k), dir, 1);
                best = std::min(best, seconds_since(t0));
                fs::remove_all(dir);
            }
            times.push_back(best);
        }
        const double mk = std::accumulate(ks.begin(), ks.end(), 0.0) / 4, mt = std::accumulate(times.begin(), times.end(), 0.0) / 4;
        double sxy = 0, sxx = 0, syy = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            sxy += (ks[i] - mk) * (times[i] - mt);
            sxx += (ks[i] - mk) * (ks[i] - mk);
            syy += (times[i] - mt) * (times[i] - mt);
        }
        const double r2 = sxy * sxy / (sxx * syy);
        const bool ok = synthetic == 450 && originals == 50 && stray == 0 && r2 > 0.95;
        std::string t;
        for (double v : times) t += (t.empty() ? "" : "/") + fmt(v, 3);
        return Verdict{ok, std::to_string(synthetic) + " synthetic + " + std::to_string(originals) +
                               " original files, k=1/2/4/8 took " + t + " s, R^2 " + fmt(r2)};
    });

    // 6. latent separation
    criterion(6, "trained latents separate classes", [&] {
        const auto untrained = vae::VaeModel<float>::initialized(cfg.image_side, cfg.latent_dim, tc.seed);
        const latentmap::PointCloud trained_cloud(corpus.size(), cfg.latent_dim,
                                                  cli::detail::encode_means(model, corpus.images), corpus.labels);
        const latentmap::PointCloud untrained_cloud(corpus.size(), cfg.latent_dim,
                                                    cli::detail::encode_means(untrained, corpus.images), corpus.labels);
        const double sep_trained = latentmap::cluster_separation(trained_cloud);
        const double sep_untrained = latentmap::cluster_separation(untrained_cloud);

        // the two classes whose latent centroids lie furthest apart
        const std::size_t C = manifest.num_classes(), d = cfg.latent_dim;
        std::vector<std::vector<double>> centroid(C, std::vector<double>(d, 0.0));
        std::vector<double> count(C, 0.0);
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            for (std::size_t j = 0; j < d; ++j) centroid[corpus.labels[i]][j] += trained_cloud.row(i)[j];
            count[corpus.labels[i]] += 1;
        }
        for (std::size_t c = 0; c < C; ++c)
            for (auto& v : centroid[c]) v /= count[c];
        std::size_t ca = 0, cb = 1;
        double far = -1;
        for (std::size_t a = 0; a < C; ++a)
            for (std::size_t b = a + 1; b < C; ++b) {
                const double dd = latentmap::sq_dist(centroid[a].data(), centroid[b].data(), d);
                if (dd > far) far = dd, ca = a, cb = b;
            }

        const auto proj = latentmap::tsne_2d(trained_cloud, cfg.tsne_config());
        std::vector<double> intra;
        double min_inter = 1e300;
        for (std::size_t i = 0; i < corpus.size(); ++i)
            for (std::size_t j = i + 1; j < corpus.size(); ++j) {
                const auto li = corpus.labels[i], lj = corpus.labels[j];
                if ((li != ca && li != cb) || (lj != ca && lj != cb)) continue;
                const double dist = std::hypot(proj.coords[i][0] - proj.coords[j][0], proj.coords[i][1] - proj.coords[j][1]);
                if (li == lj)
                    intra.push_back(dist);
                else
                    min_inter = std::min(min_inter, dist);
            }
        std::nth_element(intra.begin(), intra.begin() + static_cast<std::ptrdiff_t>(intra.size() / 2), intra.end());
        const double median_intra = intra[intra.size() / 2];
        const bool ok = sep_trained < sep_untrained && min_inter > median_intra;
        return Verdict{ok, "separation " + fmt(sep_trained) + " trained vs " + fmt(sep_untrained) + " untrained; t-SNE " +
                               manifest.classes[ca] + "/" + manifest.classes[cb] + " min inter " + fmt(min_inter, 2) +
                               " vs median intra " + fmt(median_intra, 2)};
    });

    // 7. downstream utility
    criterion(7, "classifier on the generated dataset", [&] {
        const auto metrics = cli::detail::read_json(cfg.metrics_json_path());
        const double acc = metrics["accuracy"].get<double>(), f1 = metrics["macro_f1"].get<double>();
        const auto test_orig = metrics["split"]["test_originals"].get<std::size_t>();
        const auto test_syn = metrics["split"]["test_synthetics"].get<std::size_t>();

        // Same split as the classify command, keeping only originals for training and validation.
        const auto syn_manifest = dataio::scan_manifest(cfg.synthetic_dir());
        const auto split = evalkit::stratified_split(syn_manifest, cfg.split_spec(), [](const fs::path& p) {
            return cli::detail::is_original_file(p) ? std::string("original") : std::string("synthetic");
        });
        const auto only_originals = [](evalkit::DatasetManifest m) {
            for (auto& files : m.files)
                std::erase_if(files, [](const fs::path& p) { return !cli::detail::is_original_file(p); });
            return m;
        };
        const auto t0 = Clock::now();
        const auto train = evalkit::load_labeled(only_originals(split.train), cfg.image_side);
        const auto val = evalkit::load_labeled(only_originals(split.validation), cfg.image_side);
        const auto test = evalkit::load_labeled(split.test, cfg.image_side);
        const auto clf = evalkit::train_classifier(train, val, syn_manifest.num_classes(), cfg.classifier_config());
        const auto base = evalkit::metrics_from_confusion(evalkit::confusion(clf.model, test));
        const double secs = classify_seconds + seconds_since(t0);
        const bool ok = acc >= 0.90 && f1 >= 0.90 && test_orig > 0 && test_syn > 0 && base.accuracy <= acc &&
                        base.macro_f1 <= f1 && secs < 300.0;
        return Verdict{ok, "generated: accuracy " + fmt(acc) + ", macro F1 " + fmt(f1) + " on " +
                               std::to_string(test_orig) + " original + " + std::to_string(test_syn) +
                               " synthetic test images; originals only (" + std::to_string(train.size()) +
                               " train): accuracy " + fmt(base.accuracy) + ", macro F1 " + fmt(base.macro_f1)};
    });

    // 8. baseline contrast
    criterion(8, "rotation copies keep their histogram, VAE copies vary", [&] {
        const std::string cls = manifest.classes.front();
        const std::string stem = manifest.files.front().front().stem().string();
        const fs::path rot_dir = cfg.baseline_dir() / (cls + synthgen::kReconstructedSuffix);
        const fs::path vae_dir = cfg.synthetic_dir() / (cls + synthgen::kReconstructedSuffix);
        const std::size_t k = cfg.images_per_sample;
        std::vector<std::vector<double>> hist;
        std::vector<dataio::GrayImage> vae_imgs;
        for (std::size_t i = 0; i < k; ++i) {
            hist.push_back(histogram_in_disk(dataio::read_pgm(rot_dir / synthgen::rotated_file_name(stem, i)), 16));
            vae_imgs.push_back(dataio::read_pgm(vae_dir / synthgen::recon_file_name(stem, i)));
        }
        double min_shared = 1.0, vae_frac = 0.0;
        std::size_t pairs = 0;
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = a + 1; b < k; ++b) {
                double shared = 0;
                for (std::size_t i = 0; i < 16; ++i) shared += std::min(hist[a][i], hist[b][i]);
                min_shared = std::min(min_shared, shared);
                std::size_t differ = 0;
                const auto& pa = vae_imgs[a].pixels;
                const auto& pb = vae_imgs[b].pixels;
                for (std::size_t i = 0; i < pa.size(); ++i) differ += std::abs(pa[i] - pb[i]) / 255.0 > 0.05;
                vae_frac += static_cast<double>(differ) / static_cast<double>(pa.size());
                ++pairs;
            }
        vae_frac /= static_cast<double>(pairs);
        const bool ok = min_shared > 0.99 && vae_frac > 0.01;
        return Verdict{ok, "original " + stem + ": min pairwise histogram mass shared by rotations " + fmt(min_shared) +
                               " (16 bins, inscribed disk); VAE copies differ by >0.05 in " + fmt(100 * vae_frac, 1) +
                               "% of pixels on average"};
    });

    // 9. bit-exactness
    criterion(9, "bit-exact round trips and pipeline reproducibility", [&] {
        const auto& sample = manifest.files.front().front();
        const std::string bytes = slurp(sample);
        const auto encoded = dataio::encode_pgm(dataio::read_pgm(sample));
        const bool pgm_ok = std::string(encoded.begin(), encoded.end()) == bytes;

        const auto saved = slurp(cfg.model_path());
        const auto loaded = vae::load_model<float>(cfg.model_path());
        const auto reserialized = vae::serialize_model(loaded);
        const bool model_ok = std::string(reserialized.begin(), reserialized.end()) == saved;

        std::size_t differing = 0;
        for (const auto& [name, content] : first_tree) {
            const auto it = second_tree.find(name);
            differing += it == second_tree.end() || it->second != content;
        }
        const bool tree_ok = pipeline_ok && first_tree.size() == second_tree.size() && differing == 0 &&
                             first_tree.count("report.md") == 1;
        return Verdict{pgm_ok && model_ok && tree_ok,
                       std::string("PGM round trip ") + (pgm_ok ? "identical" : "differs") + ", model save/load " +
                           (model_ok ? "identical" : "differs") + ", pipeline rerun: " + std::to_string(first_tree.size()) +
                           " files, " + std::to_string(differing) + " differ"};
    });

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
