// letet: synthetic data, preprocessing, training, evaluation and Grad-CAM
// for tetrahedral-mesh classifiers.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "run_io.hpp"

using namespace letet;
using namespace letet::cli;

namespace {

void log(const std::string& msg) { std::cerr << "letet: " << msg << '\n'; }

// ---------------------------------------------------------------------------
// Flags double as config-file keys. A value given on the command line wins
// over the same key in --config.

class Binder {
public:
    explicit Binder(CLI::App* app) : app_(app) {
        app_->add_option("--config", config_path_, "JSON config or run manifest; flags override its values");
    }

    template <class T>
    CLI::Option* option(const std::string& key, T& var, const std::string& help) {
        CLI::Option* opt = app_->add_option("--" + key, var, help)->capture_default_str();
        add(key, opt, var);
        return opt;
    }

    CLI::Option* flag(const std::string& key, bool& var, const std::string& help) {
        CLI::Option* opt = app_->add_flag("--" + key, var, help);
        add(key, opt, var);
        return opt;
    }

    /// Marks a key that must come from the command line or the config.
    void require(const std::string& key) { required_.push_back(key); }

    /// Applies --config (if any) to every key not given on the command line.
    void resolve(const std::string& command) {
        std::set<std::string> from_config;
        if (!config_path_.empty()) apply_config(command, from_config);
        for (const auto& key : required_) {
            if (entries_.at(key).opt->count() == 0 && !from_config.count(key)) throw UsageError("--" + key + " is required");
        }
    }

    ordered_json dump() const {
        ordered_json j = ordered_json::object();
        for (const auto& [key, e] : entries_) j[key] = e.get();
        return j;
    }

private:
    void apply_config(const std::string& command, std::set<std::string>& from_config) {
        json cfg = parse_json_file(config_path_);
        if (cfg.contains("command") && cfg.contains("config")) {
            if (cfg.at("command") != command) {
                throw UsageError("config is a run manifest of '" + cfg.at("command").get<std::string>() + "', not '" +
                                 command + "'");
            }
            cfg = cfg.at("config");
        }
        if (!cfg.is_object()) throw UsageError("config must be a JSON object");
        for (const auto& [key, value] : cfg.items()) {
            auto it = entries_.find(key);
            if (it == entries_.end()) throw UsageError("unknown config key '" + key + "'");
            if (it->second.opt->count() > 0) continue;
            try {
                it->second.set(value);
            } catch (const json::exception&) {
                throw UsageError("config key '" + key + "' has the wrong type");
            }
            from_config.insert(key);
        }
    }

    struct Entry {
        CLI::Option* opt;
        std::function<void(const json&)> set;
        std::function<ordered_json()> get;
    };

    template <class T>
    void add(const std::string& key, CLI::Option* opt, T& var) {
        entries_[key] = Entry{opt, [&var](const json& j) { var = j.get<T>(); }, [&var] { return ordered_json(var); }};
    }

    CLI::App* app_;
    std::string config_path_;
    std::map<std::string, Entry> entries_;
    std::vector<std::string> required_;
};

void write_run_manifest(const fs::path& path, const std::string& command, const Binder& b, ordered_json extra) {
    ordered_json j;
    j["format"] = "letet-run/1";
    j["command"] = command;
    j["config"] = b.dump();
    for (auto& [k, v] : extra.items()) j[k] = v;
    write_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Loading and preprocessing with an on-disk cache

struct Prepared {
    DatasetManifest manifest;
    std::vector<MeshSample> samples;
    std::vector<std::vector<char>> masks;  ///< empty where the manifest has no mask
    std::vector<std::string> mesh_hashes;
    int cache_hits = 0;
};

fs::path resolve_cache(const std::string& flag, const fs::path& data) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("LETET_CACHE_DIR"); env && *env) return env;
    return data / "cache";
}

void write_atomic(const fs::path& p, const std::string& bytes) {
    const fs::path tmp = p.string() + ".tmp";
    write_file(tmp, bytes);
    fs::rename(tmp, p);
}

struct PrepJob {
    const DatasetManifest& manifest;
    const PrepConfig& cfg;
    std::uint64_t seed;
    fs::path cache;
};

struct PrepOutcome {
    MeshSample sample;
    std::vector<char> mask;
    std::string mesh_hash;
    std::vector<std::string> messages;
    bool hit = false;
};

PrepOutcome prepare_one(const PrepJob& job, std::size_t index) {
    const SampleEntry& e = job.manifest.samples[index];
    PrepOutcome out;
    const TetMesh raw = read_tetgen((job.manifest.dir / e.node).string(), (job.manifest.dir / e.ele).string());
    const OrientedMesh oriented = validate_and_orient(raw);
    if (oriented.report.n_reoriented > 0) {
        out.messages.push_back(e.id + ": reoriented " + std::to_string(oriented.report.n_reoriented) + " tets");
    }
    MeshSample& s = out.sample;
    s.id = e.id;
    s.mesh = normalize_mesh(oriented.mesh).mesh;
    s.label = e.label;
    s.biomarker = e.biomarker;
    if (e.mask) out.mask = read_mask(job.manifest.dir / *e.mask, s.mesh.n_vertices());

    const PrepOptions opt = job.cfg.options(derive_seed(job.seed, 0x1a4d, index));
    const std::uint64_t mesh_hash = mesh_content_hash(s.mesh);
    out.mesh_hash = hex64(mesh_hash);
    const std::string lbo_tag = job.cfg.mass + "-" + job.cfg.normalization;
    const std::string lmk_tag = hex64(fnv1a(job.cfg.to_json().dump() + "/" + std::to_string(opt.seed)));
    const fs::path lbo_path = job.cache / (e.id + "." + out.mesh_hash + "." + lbo_tag + ".lbo");
    const fs::path lmk_path = job.cache / (e.id + "." + out.mesh_hash + "." + lmk_tag + ".lmk");

    bool lbo_hit = false, lmk_hit = false;
    if (fs::exists(lbo_path)) {
        try {
            std::ifstream in(lbo_path, std::ios::binary);
            s.lbo = load_lbo(in, mesh_hash);
            if (s.lbo.normalization != opt.lbo.normalization) throw DataError("normalization mismatch");
            lbo_hit = true;
        } catch (const DataError& err) {
            out.messages.push_back("warning: " + e.id + ": operator cache unusable (" + err.what() + "), recomputing");
        }
    }
    if (!lbo_hit) {
        s.lbo = build_lbo(s.mesh, opt.lbo);
        std::ostringstream buf(std::ios::binary);
        save_lbo(buf, s.lbo, mesh_hash);
        write_atomic(lbo_path, buf.str());
    }
    if (fs::exists(lmk_path)) {
        try {
            std::ifstream in(lmk_path);
            s.landmarks = load_landmarks(in, s.mesh);
            if (s.landmarks.method != opt.method || s.landmarks.seed != opt.seed ||
                s.landmarks.size() != static_cast<std::size_t>(std::min<std::size_t>(opt.n_landmarks, s.mesh.n_vertices()))) {
                throw DataError("landmark settings differ");
            }
            lmk_hit = true;
        } catch (const DataError& err) {
            out.messages.push_back("warning: " + e.id + ": landmark cache unusable (" + err.what() + "), recomputing");
        }
    }
    if (!lmk_hit) {
        s.landmarks = select_landmarks(s.mesh, s.lbo, opt);
        std::ostringstream buf;
        save_landmarks(buf, s.landmarks);
        write_atomic(lmk_path, buf.str());
    }
    s.patches = assign_patches(s.mesh.vertices, s.landmarks);
    s.validate();
    out.hit = lbo_hit && lmk_hit;
    out.messages.push_back(e.id + (out.hit ? ": cache hit" : ": computed") + " (" + std::to_string(s.mesh.n_vertices()) +
                           " vertices, " + std::to_string(s.landmarks.size()) + " landmarks)");
    return out;
}

Prepared load_and_prepare(const fs::path& data, const PrepConfig& cfg, std::uint64_t seed, const fs::path& cache, int jobs,
                          bool verbose) {
    Prepared p;
    p.manifest = load_manifest(data);
    fs::create_directories(cache);
    const std::size_t n = p.manifest.samples.size();
    std::vector<std::optional<PrepOutcome>> results(n);
    std::vector<std::exception_ptr> errors(n);
    const PrepJob job{p.manifest, cfg, seed, cache};
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                results[i] = prepare_one(job, i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    // Report in sample order so logs do not depend on scheduling.
    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
        PrepOutcome& r = *results[i];
        for (const auto& m : r.messages) {
            if (verbose || m.rfind("warning", 0) == 0) log(m);
        }
        p.cache_hits += r.hit ? 1 : 0;
        p.samples.push_back(std::move(r.sample));
        p.masks.push_back(std::move(r.mask));
        p.mesh_hashes.push_back(std::move(r.mesh_hash));
    }
    return p;
}

ordered_json data_record(const Prepared& p) {
    ordered_json hashes = ordered_json::object();
    for (std::size_t i = 0; i < p.samples.size(); ++i) hashes[p.samples[i].id] = p.mesh_hashes[i];
    return {{"manifest_hash", p.manifest.hash}, {"mesh_hashes", hashes}};
}

std::vector<int> indices_of(const Prepared& p, const std::vector<std::string>& ids) {
    std::map<std::string, int> pos;
    for (std::size_t i = 0; i < p.samples.size(); ++i) pos[p.samples[i].id] = static_cast<int>(i);
    std::vector<int> out;
    for (const auto& id : ids) {
        auto it = pos.find(id);
        if (it == pos.end()) throw DataError("checkpoint split refers to sample '" + id + "', which is not in the dataset");
        out.push_back(it->second);
    }
    return out;
}

std::vector<std::string> ids_of(const std::vector<MeshSample>& samples, const std::vector<int>& idx) {
    std::vector<std::string> out;
    for (int i : idx) out.push_back(samples[static_cast<std::size_t>(i)].id);
    return out;
}

std::vector<int> select_split(const Prepared& p, const Checkpoint& ck, const std::string& split) {
    if (split == "train") return indices_of(p, ck.train_ids);
    if (split == "val") return indices_of(p, ck.val_ids);
    if (split == "test") return indices_of(p, ck.test_ids);
    if (split == "all") {
        std::vector<int> all(p.samples.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    throw UsageError("unknown split '" + split + "' (train, val, test, all)");
}

std::string csv_value(const std::optional<double>& v) { return v ? detail::format_double(*v) : ""; }

// ---------------------------------------------------------------------------
// Commands

struct SynthCmd {
    std::string out;
    int classes = 2;
    SynthSpec spec;

    int run(const Binder& b) {
        if (classes != 2) throw UsageError("only binary datasets are supported (--classes 2)");
        spec.validate();
        const fs::path dir(out);
        fs::create_directories(dir);
        ordered_json samples = ordered_json::array();
        for (int i = 0; i < 2 * spec.n_per_class; ++i) {
            const RawSample s = generate_sample(spec, i);
            write_file(dir / (s.id + ".node"), write_node_file(s.mesh));
            write_file(dir / (s.id + ".ele"), write_ele_file(s.mesh));
            write_file(dir / (s.id + ".mask"), format_mask(s.mask));
            samples.push_back({{"id", s.id},
                               {"node", s.id + ".node"},
                               {"ele", s.id + ".ele"},
                               {"mask", s.id + ".mask"},
                               {"label", s.label},
                               {"biomarker", s.biomarker},
                               {"stratum", to_string(s.stratum)},
                               {"seed", s.seed}});
        }
        const BiomarkerBand band = medium_band(spec);
        ordered_json manifest;
        manifest["format"] = "letet-dataset/1";
        manifest["spec"] = synth_spec_json(spec);
        manifest["medium_band"] = {band.lower, band.upper};
        manifest["samples"] = std::move(samples);
        const std::string text = manifest.dump(1) + "\n";
        write_file(dir / "manifest.json", text);
        const std::string hash = hex64(fnv1a(text));
        write_run_manifest(dir / "run-synth.json", "synth", b, {{"manifest_hash", hash}});
        std::cout << "wrote " << 2 * spec.n_per_class << " samples to " << dir.string() << "\n"
                  << "manifest hash " << hash << "\n";
        return 0;
    }
};

struct PrepFlags {
    std::string data, cache;
    int jobs = 1;
    std::uint64_t seed = 0;
    PrepConfig prep;

    void bind(Binder& b) {
        b.option("data", data, "dataset directory (with manifest.json)");
        b.require("data");
        b.option("cache", cache, "cache directory (default: $LETET_CACHE_DIR, else DATA/cache)");
        b.option("jobs", jobs, "parallel preprocessing workers")->check(CLI::PositiveNumber);
        b.option("seed", seed, "master seed");
    }

    void bind_prep(Binder& b) {
        b.option("landmarks", prep.landmarks, "landmarks per mesh");
        b.option("method", prep.method, "landmark selection: gp-diffusion or fps");
        b.option("eigenpairs", prep.eigenpairs, "eigenpairs for the diffusion kernel");
        b.option("kernel-scales", prep.kernel_scales, "diffusion times, comma separated")->delimiter(',');
        b.option("mass", prep.mass, "lumped mass: quarter or paper-literal");
        b.option("normalization", prep.normalization, "Laplacian normalization: symmetric or random-walk");
    }
};

struct PrepCmd {
    PrepFlags f;

    int run(const Binder& b) {
        const fs::path cache = resolve_cache(f.cache, f.data);
        const Prepared p = load_and_prepare(f.data, f.prep, f.seed, cache, f.jobs, true);
        const std::size_t n = p.samples.size();
        std::cout << "prepared " << n << " samples (" << p.cache_hits << " cache hits, " << n - p.cache_hits
                  << " computed) in " << cache.string() << "\n";
        ordered_json extra{{"cache", cache.string()}, {"data", data_record(p)}};
        write_run_manifest(cache / "run-prep.json", "prep", b, extra);
        return 0;
    }
};

struct ModelFlags {
    ModelConfig model;
    std::string variant = "LETetCNN";
    std::string attention_norm = "per-channel";

    void bind(Binder& b) {
        b.option("variant", variant, "LETetCNN, LE or TetCNN-only");
        b.option("hidden", model.hidden_dim, "hidden width");
        b.option("tetcnn-layers", model.n_tetcnn_layers, "Chebyshev layers");
        b.option("transformer-layers", model.n_transformer_layers, "attention layers");
        b.option("cheb-order", model.cheb_order, "Chebyshev order K");
        b.option("radius", model.radius, "token graph radius (normalized units)");
        b.flag("fuse-biomarker", model.fuse_biomarker, "add the z-scored biomarker to the logit");
        b.option("attention-norm", attention_norm, "per-channel or per-edge");
        b.flag("value-position", model.attention.value_position, "add the positional term to the values")
            ->default_str("true");
    }

    ModelConfig resolve(int n_landmarks) const {
        ModelConfig c = model;
        c.variant = variant_from_string(variant);
        c.attention.norm = attention_norm_from_string(attention_norm);
        c.n_landmarks = n_landmarks;
        c.validate();
        return c;
    }
};

struct TrainCmd {
    PrepFlags f;
    ModelFlags m;
    TrainConfig t;
    std::string out;

    void bind(Binder& b) {
        f.bind(b);
        f.bind_prep(b);
        m.bind(b);
        b.option("lr", t.lr, "Adam learning rate");
        b.option("weight-decay", t.weight_decay, "L2 weight decay");
        b.option("epochs", t.epochs, "training epochs");
        b.option("micro-batch", t.micro_batch, "samples per micro-batch");
        b.option("accumulation", t.accumulation_steps, "micro-batches per optimizer step");
        b.option("out", out, "output directory");
        b.require("out");
    }

    int run(const Binder& b) {
        const ModelConfig mc = m.resolve(f.prep.landmarks);
        TrainConfig tc = t;
        tc.seed = f.seed;
        tc.validate();
        const fs::path cache = resolve_cache(f.cache, f.data);
        const Prepared p = load_and_prepare(f.data, f.prep, f.seed, cache, f.jobs, false);
        const Split split = stratified_split(p.manifest.labels(), f.seed);
        log("training " + to_string(mc.variant) + (mc.fuse_biomarker ? "+biomarker" : "") + " on " +
            std::to_string(split.train.size()) + " samples (" + std::to_string(split.val.size()) + " val, " +
            std::to_string(split.test.size()) + " test)");
        const TrainResult r = train(p.samples, split, mc, tc);

        Checkpoint ck;
        ck.model = mc;
        ck.prep = f.prep;
        ck.seed = f.seed;
        ck.params = r.params.clone();
        ck.best_epoch = r.best_epoch;
        ck.dataset_hash = p.manifest.hash;
        ck.train_ids = ids_of(p.samples, split.train);
        ck.val_ids = ids_of(p.samples, split.val);
        ck.test_ids = ids_of(p.samples, split.test);
        const fs::path dir(out);
        write_file(dir / "checkpoint.json", checkpoint_to_string(ck));

        std::string csv = "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
        for (const EpochRecord& e : r.history) {
            csv += std::to_string(e.epoch) + "," + detail::format_double(e.train_loss) + "," +
                   detail::format_double(e.train_accuracy) + "," + csv_value(e.val_loss) + "," + csv_value(e.val_accuracy) +
                   "\n";
        }
        write_file(dir / "history.csv", csv);

        ordered_json extra{{"data", data_record(p)}, {"best_epoch", r.best_epoch}};
        std::cout << "best epoch " << r.best_epoch << "\n";
        if (!split.test.empty()) {
            std::vector<PreparedSample> prepared;
            for (const auto& s : p.samples) prepared.push_back(prepare_for_model(s, mc));
            const Metrics mt = evaluate_prepared(prepared, split.test, r.params, mc).metrics;
            std::cout << "test ACC " << csv_value(mt.accuracy) << " SEN " << csv_value(mt.sensitivity) << " SPE "
                      << csv_value(mt.specificity) << "\n";
            extra["test_accuracy"] = *mt.accuracy;
        }
        write_run_manifest(dir / "run-train.json", "train", b, extra);
        return 0;
    }
};

/// Samples of a split, optionally restricted to one risk stratum.
std::vector<int> filter_stratum(const Prepared& p, std::vector<int> idx, const std::string& stratum) {
    if (stratum == "all") return idx;
    const RiskStratum want = risk_stratum_from_string(stratum);
    std::vector<int> kept;
    for (int i : idx) {
        const auto s = sample_stratum(p.manifest.samples[static_cast<std::size_t>(i)]);
        if (!s) throw DataError("sample '" + p.samples[static_cast<std::size_t>(i)].id + "' has no stratum or biomarker");
        if (*s == want) kept.push_back(i);
    }
    if (kept.empty()) throw DataError("no samples in stratum '" + stratum + "'");
    return kept;
}

struct EvalCmd {
    PrepFlags f;
    std::string checkpoint, split = "test", stratum = "all", out;

    void bind(Binder& b) {
        f.bind(b);
        b.option("checkpoint", checkpoint, "checkpoint.json from train");
        b.require("checkpoint");
        b.option("split", split, "train, val, test or all");
        b.option("stratum", stratum, "low, medium, high or all");
        b.option("out", out, "metrics CSV path");
        b.require("out");
    }

    int run(const Binder& b) {
        const Checkpoint ck = load_checkpoint(checkpoint);
        const fs::path cache = resolve_cache(f.cache, f.data);
        const Prepared p = load_and_prepare(f.data, ck.prep, ck.seed, cache, f.jobs, false);
        if (split != "all" && p.manifest.hash != ck.dataset_hash) {
            log("warning: dataset differs from the one the checkpoint was trained on");
        }
        const std::vector<int> idx = filter_stratum(p, select_split(p, ck, split), stratum);
        std::vector<PreparedSample> prepared;
        for (const auto& s : p.samples) prepared.push_back(prepare_for_model(s, ck.model));
        const Evaluation ev = evaluate_prepared(prepared, idx, ck.params, ck.model);
        const Metrics& mt = ev.metrics;
        std::string variant = to_string(ck.model.variant) + (ck.model.fuse_biomarker ? "+biomarker" : "");
        const std::string csv = "model,split,stratum,n,ACC,SEN,SPE\n" + variant + "," + split + "," + stratum + "," +
                                std::to_string(idx.size()) + "," + csv_value(mt.accuracy) + "," +
                                csv_value(mt.sensitivity) + "," + csv_value(mt.specificity) + "\n";
        write_file(out, csv);
        std::cout << csv;
        fs::path manifest_path(out);
        manifest_path.replace_extension(".run.json");
        write_run_manifest(manifest_path, "eval", b,
                           {{"data", data_record(p)}, {"checkpoint_hash", hex64(fnv1a(read_file(checkpoint)))}});
        return 0;
    }
};

struct GradcamCmd {
    PrepFlags f;
    std::string checkpoint, split = "all", out;
    int label = -1;

    void bind(Binder& b) {
        f.bind(b);
        b.option("checkpoint", checkpoint, "checkpoint.json from train");
        b.require("checkpoint");
        b.option("split", split, "train, val, test or all");
        b.option("label", label, "only samples with this label (-1: all)");
        b.option("out", out, "output directory for VTK files");
        b.require("out");
    }

    int run(const Binder& b) {
        const Checkpoint ck = load_checkpoint(checkpoint);
        if (!ck.model.uses_conv()) {
            throw DataError("gradcam needs a convolutional feature map; variant " + to_string(ck.model.variant) +
                            " has none");
        }
        const fs::path cache = resolve_cache(f.cache, f.data);
        const Prepared p = load_and_prepare(f.data, ck.prep, ck.seed, cache, f.jobs, false);
        const fs::path dir(out);
        fs::create_directories(dir);
        std::string summary = "id,label,all_zero,top_decile_mass_in_mask\n";
        int written = 0;
        for (int i : select_split(p, ck, split)) {
            const MeshSample& s = p.samples[static_cast<std::size_t>(i)];
            if (label >= 0 && s.label != label) continue;
            const Heatmap h = gradcam(s, ck.params, ck.model);
            if (h.all_zero) log("warning: " + h.warning);
            write_file(dir / (s.id + ".vtk"), export_heatmap(s.mesh, h));
            const auto& mask = p.masks[static_cast<std::size_t>(i)];
            summary += s.id + "," + std::to_string(s.label) + "," + (h.all_zero ? "1" : "0") + "," +
                       (mask.empty() ? "" : detail::format_double(top_decile_mass_in_mask(h.values, mask))) + "\n";
            ++written;
        }
        if (written == 0) throw DataError("no samples selected");
        write_file(dir / "summary.csv", summary);
        write_run_manifest(dir / "run-gradcam.json", "gradcam", b,
                           {{"data", data_record(p)}, {"checkpoint_hash", hex64(fnv1a(read_file(checkpoint)))}});
        std::cout << "wrote " << written << " heatmaps to " << dir.string() << "\n";
        return 0;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"letet: landmark-enhanced tetrahedral mesh classification"};
    app.require_subcommand(1);

    SynthCmd synth;
    CLI::App* synth_app = app.add_subcommand("synth", "generate a labeled synthetic dataset");
    Binder synth_b(synth_app);
    synth_b.option("out", synth.out, "output directory");
    synth_b.require("out");
    synth_b.option("classes", synth.classes, "number of classes (must be 2)");
    synth_b.option("per-class", synth.spec.n_per_class, "samples per class");
    synth_b.option("resolution", synth.spec.grid_resolution, "grid cubes per unit length");
    synth_b.option("amplitude", synth.spec.bump_amplitude, "dent depth");
    synth_b.option("bump-radius", synth.spec.bump_radius, "dent width");
    synth_b.option("center-spread", synth.spec.center_spread, "per-sample wobble of the dent center");
    synth_b.option("center-depth", synth.spec.center_depth, "dent center distance from the origin");
    synth_b.option("separation", synth.spec.biomarker_separation, "biomarker class separation");
    synth_b.option("noise", synth.spec.noise_scale, "vertex jitter");
    synth_b.option("seed", synth.spec.seed, "master seed");

    PrepCmd prep;
    CLI::App* prep_app = app.add_subcommand("prep", "precompute operators and landmarks into the cache");
    Binder prep_b(prep_app);
    prep.f.bind(prep_b);
    prep.f.bind_prep(prep_b);

    TrainCmd train_cmd;
    CLI::App* train_app = app.add_subcommand("train", "train a model and write a checkpoint");
    Binder train_b(train_app);
    train_cmd.bind(train_b);

    EvalCmd eval;
    CLI::App* eval_app = app.add_subcommand("eval", "evaluate a checkpoint (ACC, SEN, SPE)");
    Binder eval_b(eval_app);
    eval.bind(eval_b);

    GradcamCmd gc;
    CLI::App* gc_app = app.add_subcommand("gradcam", "write Grad-CAM heatmaps as VTK");
    Binder gc_b(gc_app);
    gc.bind(gc_b);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*synth_app) {
            synth_b.resolve("synth");
            return synth.run(synth_b);
        }
        if (*prep_app) {
            prep_b.resolve("prep");
            return prep.run(prep_b);
        }
        if (*train_app) {
            train_b.resolve("train");
            return train_cmd.run(train_b);
        }
        if (*eval_app) {
            eval_b.resolve("eval");
            return eval.run(eval_b);
        }
        gc_b.resolve("gradcam");
        return gc.run(gc_b);
    } catch (const UsageError& e) {
        std::cerr << "letet: usage error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "letet: numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const DataError& e) {
        std::cerr << "letet: data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "letet: data error: " << e.what() << '\n';
        return 2;
    }
}
