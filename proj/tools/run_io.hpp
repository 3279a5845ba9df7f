#pragma once

// JSON plumbing for the command-line tool: dataset manifests, checkpoints,
// the on-disk preprocessing cache.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "letet/explain.hpp"
#include "letet/synth.hpp"

namespace letet::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

/// Bad flags, bad config keys, inconsistent command lines.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    out << text;
    if (!out) throw DataError("write failed: " + p.string());
}

inline json parse_json_file(const fs::path& p) {
    const std::string text = read_file(p);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(p.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Preprocessing options

struct PrepConfig {
    int landmarks = 64;
    std::string method = "gp-diffusion";
    int eigenpairs = 64;
    std::vector<double> kernel_scales{0.01, 0.1, 1.0};
    std::string mass = "quarter";
    std::string normalization = "symmetric";

    PrepOptions options(std::uint64_t seed) const {
        PrepOptions o;
        o.n_landmarks = landmarks;
        o.method = landmark_method_from_string(method);
        o.kernel.n_eigenpairs = eigenpairs;
        o.kernel.scales = kernel_scales;
        o.kernel.validate();
        if (mass == "quarter") o.lbo.mass_mode = MassMode::quarter;
        else if (mass == "paper-literal") o.lbo.mass_mode = MassMode::paper_literal;
        else throw DataError("unknown mass mode '" + mass + "'");
        if (normalization == "symmetric") o.lbo.normalization = Normalization::symmetric;
        else if (normalization == "random-walk") o.lbo.normalization = Normalization::random_walk;
        else throw DataError("unknown normalization '" + normalization + "'");
        if (landmarks < 1) throw DataError("landmark count must be positive");
        o.seed = seed;
        return o;
    }

    ordered_json to_json() const {
        return {{"landmarks", landmarks}, {"method", method},   {"eigenpairs", eigenpairs},
                {"kernel_scales", kernel_scales}, {"mass", mass}, {"normalization", normalization}};
    }

    static PrepConfig from_json(const json& j) {
        PrepConfig c;
        c.landmarks = j.at("landmarks").get<int>();
        c.method = j.at("method").get<std::string>();
        c.eigenpairs = j.at("eigenpairs").get<int>();
        c.kernel_scales = j.at("kernel_scales").get<std::vector<double>>();
        c.mass = j.at("mass").get<std::string>();
        c.normalization = j.at("normalization").get<std::string>();
        return c;
    }
};

// ---------------------------------------------------------------------------
// Dataset manifest: one entry per sample, paths relative to the manifest.

struct SampleEntry {
    std::string id;
    std::string node, ele;
    int label = 0;
    std::optional<double> biomarker;
    std::optional<std::string> stratum;
    std::optional<std::string> mask;
    std::uint64_t seed = 0;
};

struct DatasetManifest {
    fs::path dir;
    std::string hash;  ///< of the manifest bytes
    std::vector<SampleEntry> samples;

    std::vector<int> labels() const {
        std::vector<int> out;
        for (const auto& s : samples) out.push_back(s.label);
        return out;
    }
};

inline ordered_json synth_spec_json(const SynthSpec& s) {
    return {{"n_per_class", s.n_per_class},       {"grid_resolution", s.grid_resolution},
            {"bump_amplitude", s.bump_amplitude}, {"bump_radius", s.bump_radius},
            {"center_spread", s.center_spread},   {"center_depth", s.center_depth},
            {"biomarker_separation", s.biomarker_separation}, {"noise_scale", s.noise_scale},
            {"seed", s.seed}};
}

inline DatasetManifest load_manifest(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    const std::string text = read_file(path);
    DatasetManifest m;
    m.dir = dir;
    m.hash = hex64(fnv1a(text));
    try {
        const json j = json::parse(text);
        std::set<std::string> ids;
        for (const json& e : j.at("samples")) {
            SampleEntry s;
            s.id = e.at("id").get<std::string>();
            s.node = e.at("node").get<std::string>();
            s.ele = e.at("ele").get<std::string>();
            s.label = e.at("label").get<int>();
            if (s.label != 0 && s.label != 1) throw DataError("sample '" + s.id + "': label must be 0 or 1");
            if (!ids.insert(s.id).second) throw DataError("duplicate sample id '" + s.id + "'");
            if (e.contains("biomarker")) s.biomarker = e.at("biomarker").get<double>();
            if (e.contains("stratum")) s.stratum = e.at("stratum").get<std::string>();
            if (e.contains("mask")) s.mask = e.at("mask").get<std::string>();
            if (e.contains("seed")) s.seed = e.at("seed").get<std::uint64_t>();
            m.samples.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    if (m.samples.empty()) throw DataError(path.string() + ": no samples");
    return m;
}

/// Stratum of a sample: explicit manifest value, else the pTau-217 cutoffs.
inline std::optional<RiskStratum> sample_stratum(const SampleEntry& s) {
    if (s.stratum) return risk_stratum_from_string(*s.stratum);
    if (s.biomarker) return stratify_risk(*s.biomarker);
    return std::nullopt;
}

inline std::vector<char> read_mask(const fs::path& p, std::size_t n) {
    std::istringstream in(read_file(p));
    std::vector<char> mask;
    int v = 0;
    while (in >> v) {
        if (v != 0 && v != 1) throw DataError(p.string() + ": mask values must be 0 or 1");
        mask.push_back(static_cast<char>(v));
    }
    if (mask.size() != n) throw DataError(p.string() + ": mask length does not match the mesh");
    return mask;
}

inline std::string format_mask(const std::vector<char>& mask) {
    std::string out;
    out.reserve(2 * mask.size());
    for (char c : mask) {
        out += c ? '1' : '0';
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline ordered_json model_config_json(const ModelConfig& c) {
    return {{"hidden_dim", c.hidden_dim},
            {"n_tetcnn_layers", c.n_tetcnn_layers},
            {"n_transformer_layers", c.n_transformer_layers},
            {"cheb_order", c.cheb_order},
            {"radius", c.radius},
            {"n_landmarks", c.n_landmarks},
            {"variant", to_string(c.variant)},
            {"fuse_biomarker", c.fuse_biomarker},
            {"attention_norm", c.attention.norm == nn::AttentionNorm::per_channel ? "per-channel" : "per-edge"},
            {"value_position", c.attention.value_position}};
}

inline nn::AttentionNorm attention_norm_from_string(const std::string& s) {
    if (s == "per-channel") return nn::AttentionNorm::per_channel;
    if (s == "per-edge") return nn::AttentionNorm::per_edge;
    throw DataError("unknown attention normalization '" + s + "'");
}

inline ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.n_tetcnn_layers = j.at("n_tetcnn_layers").get<int>();
    c.n_transformer_layers = j.at("n_transformer_layers").get<int>();
    c.cheb_order = j.at("cheb_order").get<int>();
    c.radius = j.at("radius").get<double>();
    c.n_landmarks = j.at("n_landmarks").get<int>();
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.fuse_biomarker = j.at("fuse_biomarker").get<bool>();
    c.attention.norm = attention_norm_from_string(j.at("attention_norm").get<std::string>());
    c.attention.value_position = j.at("value_position").get<bool>();
    c.validate();
    return c;
}

struct Checkpoint {
    ModelConfig model;
    PrepConfig prep;
    std::uint64_t seed = 0;
    ModelParams params;
    int best_epoch = 0;
    std::vector<std::string> train_ids, val_ids, test_ids;
    std::string dataset_hash;
};

inline constexpr const char* kCheckpointFormat = "letet-checkpoint/1";

/// Doubles are written in shortest round-trip form, so a reload is bit-exact.
inline std::string checkpoint_to_string(const Checkpoint& c) {
    ordered_json j;
    j["format"] = kCheckpointFormat;
    j["model"] = model_config_json(c.model);
    j["prep"] = c.prep.to_json();
    j["seed"] = c.seed;
    j["best_epoch"] = c.best_epoch;
    j["dataset_hash"] = c.dataset_hash;
    j["split"] = {{"train", c.train_ids}, {"val", c.val_ids}, {"test", c.test_ids}};
    j["biomarker"] = {{"mean", c.params.biomarker_mean}, {"std", c.params.biomarker_std}};
    ordered_json params = ordered_json::array();
    for (const auto& [name, t] : c.params.params) {
        params.push_back({{"name", name},
                          {"rows", t.rows()},
                          {"cols", t.cols()},
                          {"data", std::vector<double>(t.data().begin(), t.data().end())}});
    }
    j["params"] = std::move(params);
    return j.dump(1) + "\n";
}

inline Checkpoint checkpoint_from_json(const json& j) {
    Checkpoint c;
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) throw DataError("unsupported checkpoint format");
        c.model = model_config_from_json(j.at("model"));
        c.prep = PrepConfig::from_json(j.at("prep"));
        c.seed = j.at("seed").get<std::uint64_t>();
        c.best_epoch = j.at("best_epoch").get<int>();
        c.dataset_hash = j.at("dataset_hash").get<std::string>();
        c.train_ids = j.at("split").at("train").get<std::vector<std::string>>();
        c.val_ids = j.at("split").at("val").get<std::vector<std::string>>();
        c.test_ids = j.at("split").at("test").get<std::vector<std::string>>();
        // Shapes and names come from the config; the file only supplies values.
        c.params = init_params(c.model, 0);
        c.params.biomarker_mean = j.at("biomarker").at("mean").get<double>();
        c.params.biomarker_std = j.at("biomarker").at("std").get<double>();
        std::set<std::string> seen;
        for (const json& p : j.at("params")) {
            const std::string name = p.at("name").get<std::string>();
            if (!c.params.params.contains(name)) throw DataError("checkpoint has unexpected parameter '" + name + "'");
            nn::Tensor& t = c.params.params.at(name);
            const auto data = p.at("data").get<std::vector<double>>();
            if (p.at("rows").get<int>() != t.rows() || p.at("cols").get<int>() != t.cols() || data.size() != t.size()) {
                throw DataError("checkpoint parameter '" + name + "' has the wrong shape");
            }
            std::copy(data.begin(), data.end(), t.data().begin());
            seen.insert(name);
        }
        if (seen.size() != c.params.params.size()) throw DataError("checkpoint is missing parameters");
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    }
    return c;
}

inline Checkpoint load_checkpoint(const fs::path& p) {
    if (!fs::exists(p)) throw DataError("checkpoint not found: " + p.string());
    return checkpoint_from_json(parse_json_file(p));
}

} // namespace letet::cli
