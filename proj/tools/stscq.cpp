// stscq: command-line front end for the switchable token-specific codebook
// quantizer. Subcommands: synth, train, encode, decode, eval, sweep.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// divergence.

#include "stscq/report_json.hpp"
#include "stscq/stscq.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stscq;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorCode code)
{
    switch (code) {
    case ErrorCode::DivergenceDetected:
        return kExitDivergence;
    case ErrorCode::InvalidArgument:
    case ErrorCode::BadSpec:
    case ErrorCode::StageOrderError:
    case ErrorCode::UntrainedRouter:
    case ErrorCode::DimensionTooLarge:
        return kExitConfig;
    default:
        return kExitData;
    }
}

// Artifact names inside an output directory.
const char* const kPca = "pca.stscq";
const char* const kDecoder = "decoder.stscq";
const char* const kPoolStage1 = "pool_stage1.stscq";
const char* const kRouterStage1 = "router_stage1.stscq";
const char* const kPool = "pool.stscq";
const char* const kRouter = "router.stscq";

json load_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config " + path);
    try {
        json j = json::parse(in);
        if (!j.is_object())
            throw ConfigError("config " + path + " must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
}

/// Merges config-file values under flag overrides, rejecting unknown keys.
json merge_config(const std::string& config_path, const json& overrides, const std::set<std::string>& allowed)
{
    json merged = config_path.empty() ? json::object() : load_json_file(config_path);
    for (const auto& [k, v] : overrides.items())
        merged[k] = v;
    for (const auto& [k, v] : merged.items())
        if (!allowed.contains(k))
            throw ConfigError("unknown config key '" + k + "'");
    return merged;
}

std::uint64_t resolve_seed(const json& cfg)
{
    if (cfg.contains("seed"))
        return cfg["seed"].get<std::uint64_t>();
    if (const char* env = std::getenv("STSCQ_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError(std::string("STSCQ_SEED is not an integer: ") + env);
        }
    }
    return 0;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback)
{
    if (!j.contains(key))
        return fallback;
    try {
        return j[key].get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

template <typename T>
void override_flag(CLI::App* app, json& overrides, const std::string& flag, const std::string& key,
                   const std::string& help)
{
    app->add_option_function<T>(flag, [&overrides, key](const T& v) { overrides[key] = v; }, help);
}

const std::set<std::string> kTrainKeys = {"M",           "K",           "T",           "d",
                                          "s",           "lambda1",     "lambda2",     "learning_rate",
                                          "batch_size",  "steps_stage1", "steps_stage2", "steps_stage3",
                                          "seed",        "dead_code_epochs", "router_hidden", "commitment_weight",
                                          "log_interval", "patch_size", "latent_dim"};

void add_train_overrides(CLI::App* app, json& o)
{
    override_flag<int>(app, o, "--groups,-M", "M", "codebook groups M");
    override_flag<int>(app, o, "--codes,-K", "K", "codes per sub-codebook K");
    override_flag<int>(app, o, "--s", "s", "size-reduction exponent (recorded)");
    override_flag<double>(app, o, "--lambda1", "lambda1", "entropy loss weight");
    override_flag<double>(app, o, "--lambda2", "lambda2", "decisiveness loss weight");
    override_flag<double>(app, o, "--lr", "learning_rate", "learning rate");
    override_flag<int>(app, o, "--batch", "batch_size", "mini-batch size");
    override_flag<int>(app, o, "--steps1", "steps_stage1", "stage-1 steps");
    override_flag<int>(app, o, "--steps2", "steps_stage2", "stage-2 steps");
    override_flag<int>(app, o, "--steps3", "steps_stage3", "stage-3 steps");
    override_flag<std::uint64_t>(app, o, "--seed", "seed", "random seed (falls back to STSCQ_SEED)");
    override_flag<int>(app, o, "--dead-code-epochs", "dead_code_epochs", "epochs before re-seeding unused codes");
    override_flag<int>(app, o, "--hidden", "router_hidden", "router hidden width");
    override_flag<double>(app, o, "--commitment", "commitment_weight", "commitment term weight");
    override_flag<int>(app, o, "--patch-size", "patch_size", "patch size for image corpora");
    override_flag<int>(app, o, "--latent-dim", "latent_dim", "PCA dimension d for image corpora");
}

/// Training data: a token corpus file or an image manifest.
struct Dataset {
    TokenCorpus tokens;
    std::vector<ImageBuffer> images;  // empty for token corpora
    std::vector<int> image_labels;

    bool has_images() const { return !images.empty(); }
};

Dataset load_dataset(const std::string& path)
{
    Dataset ds;
    if (is_token_corpus_file(path)) {
        ds.tokens = load_corpus(path);
    } else {
        const auto manifest = read_manifest(path);
        ds.images = load_images(manifest);
        ds.image_labels = manifest.labels;
    }
    return ds;
}

TrainConfig train_config_from(const json& j, int T, int d)
{
    TrainConfig c;
    c.M = get_or(j, "M", c.M);
    c.K = get_or(j, "K", c.K);
    c.T = T;
    c.d = d;
    if (j.contains("T") && j["T"].get<int>() != T)
        throw ConfigError("config T disagrees with the data");
    if (j.contains("d") && j["d"].get<int>() != d)
        throw ConfigError("config d disagrees with the data");
    c.s = get_or(j, "s", c.s);
    c.lambda1 = get_or(j, "lambda1", c.lambda1);
    c.lambda2 = get_or(j, "lambda2", c.lambda2);
    c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
    c.batch_size = get_or(j, "batch_size", c.batch_size);
    c.steps_stage1 = get_or(j, "steps_stage1", c.steps_stage1);
    c.steps_stage2 = get_or(j, "steps_stage2", c.steps_stage2);
    c.steps_stage3 = get_or(j, "steps_stage3", c.steps_stage3);
    c.seed = resolve_seed(j);
    c.dead_code_epochs = get_or(j, "dead_code_epochs", c.dead_code_epochs);
    c.router_hidden = get_or(j, "router_hidden", c.router_hidden);
    c.commitment_weight = get_or(j, "commitment_weight", c.commitment_weight);
    c.log_interval = get_or(j, "log_interval", c.log_interval);
    c.validate();
    return c;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
}

void write_report(const fs::path& path, const TrainConfig& cfg, const StageReport& report)
{
    json j = {{"config", to_json(cfg)}, {"report", to_json(report)}};
    write_text(path, j.dump(2) + "\n");
}

fs::path pick(const fs::path& dir, const char* preferred, const char* fallback)
{
    if (fs::exists(dir / preferred))
        return dir / preferred;
    return dir / fallback;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const std::string& kind, const std::string& config, const json& overrides, const std::string& out_dir)
{
    static const std::set<std::string> token_keys = {"clusters", "separation", "sigma", "T", "d", "samples", "seed"};
    static const std::set<std::string> image_keys = {"clusters", "width",  "height", "channels",
                                                     "samples",  "noise",  "jitter", "seed"};
    fs::create_directories(out_dir);
    if (kind == "tokens") {
        const json j = merge_config(config, overrides, token_keys);
        TokenMixtureSpec spec;
        spec.clusters = get_or(j, "clusters", spec.clusters);
        spec.separation = get_or(j, "separation", spec.separation);
        spec.sigma = get_or(j, "sigma", spec.sigma);
        spec.T = get_or(j, "T", spec.T);
        spec.d = get_or(j, "d", spec.d);
        spec.samples = get_or(j, "samples", spec.samples);
        spec.seed = resolve_seed(j);
        const auto mix = make_token_mixture(spec);
        save_corpus((fs::path(out_dir) / "tokens.stscq").string(), mix.corpus);
        std::cout << "wrote " << mix.corpus.size() << " token samples (" << spec.clusters << " clusters) to "
                  << (fs::path(out_dir) / "tokens.stscq").string() << "\n";
        return 0;
    }
    if (kind == "images") {
        const json j = merge_config(config, overrides, image_keys);
        ImageSetSpec spec;
        spec.clusters = get_or(j, "clusters", spec.clusters);
        spec.width = get_or(j, "width", spec.width);
        spec.height = get_or(j, "height", spec.height);
        spec.channels = get_or(j, "channels", spec.channels);
        spec.samples = get_or(j, "samples", spec.samples);
        spec.noise = get_or(j, "noise", spec.noise);
        spec.jitter = get_or(j, "jitter", spec.jitter);
        spec.seed = resolve_seed(j);
        const auto set = make_image_set(spec);
        std::ostringstream manifest;
        const char* ext = spec.channels == 1 ? ".pgm" : ".ppm";
        for (std::size_t i = 0; i < set.images.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "img_%05zu%s", i, ext);
            write_pnm((fs::path(out_dir) / name).string(), set.images[i]);
            manifest << name << " " << set.labels[i] << "\n";
        }
        write_text(fs::path(out_dir) / "manifest.txt", manifest.str());
        std::cout << "wrote " << set.images.size() << " images and manifest.txt to " << out_dir << "\n";
        return 0;
    }
    throw ConfigError("unknown synth kind '" + kind + "' (expected tokens or images)");
}

// ---------------------------------------------------------------- train

struct PreparedData {
    Dataset ds;
    std::optional<PcaTransform> pca;
    TokenCorpus corpus;
};

PreparedData prepare(const std::string& data_path, const json& cfg, const fs::path& out, bool fit_if_missing)
{
    PreparedData p;
    p.ds = load_dataset(data_path);
    if (!p.ds.has_images()) {
        p.corpus = p.ds.tokens;
        return p;
    }
    const fs::path pca_path = out / kPca;
    if (fs::exists(pca_path)) {
        p.pca = load_pca(pca_path.string());
    } else {
        if (!fit_if_missing)
            throw Error(ErrorCode::StageOrderError, "missing " + pca_path.string() + "; run stage 1 first");
        p.pca = fit_pca(p.ds.images, get_or(cfg, "patch_size", 8), get_or(cfg, "latent_dim", 8));
        save_pca(pca_path.string(), *p.pca);
    }
    p.corpus = encode_corpus(p.ds.images, *p.pca, p.ds.image_labels);
    return p;
}

int cmd_train(const std::string& data, const std::string& config, const json& overrides, const std::string& out_dir,
              const std::string& stage)
{
    const json j = merge_config(config, overrides, kTrainKeys);
    if (stage != "1" && stage != "2" && stage != "3" && stage != "all")
        throw ConfigError("--stage must be 1, 2, 3 or all");
    const fs::path out(out_dir);
    fs::create_directories(out);

    const bool run1 = stage == "1" || stage == "all";
    const bool run2 = stage == "2" || stage == "all";
    const bool run3 = stage == "3" || stage == "all";

    // Stage ordering is checked before any data is touched.
    if (!run1 && run2 && (!fs::exists(out / kPoolStage1) || !fs::exists(out / kRouterStage1)))
        throw Error(ErrorCode::StageOrderError, "stage 2 needs " + (out / kPoolStage1).string() + "; run stage 1 first");
    if (!run2 && run3 && !fs::exists(out / kPool))
        throw Error(ErrorCode::StageOrderError, "stage 3 needs " + (out / kPool).string() + "; run stage 2 first");

    auto data_set = prepare(data, j, out, run1);
    const TrainConfig cfg = train_config_from(j, data_set.corpus.T(), data_set.corpus.d());

    if (run1) {
        auto r = stage1(data_set.corpus, cfg);
        save_pool((out / kPoolStage1).string(), r.pool);
        save_router((out / kRouterStage1).string(), r.router);
        write_report(out / "report_stage1.json", cfg, r.report);
        std::cout << "stage 1: mean quantization error " << r.report.initial_error << " -> " << r.report.final_error
                  << "\n";
    }
    if (run2) {
        const auto pool = load_pool((out / kPoolStage1).string());
        const auto router = load_router((out / kRouterStage1).string());
        auto r = stage2(data_set.corpus, pool, router, cfg);
        save_pool((out / kPool).string(), r.pool);
        save_router((out / kRouter).string(), r.router);
        write_report(out / "report_stage2.json", cfg, r.report);
        std::cout << "stage 2: mean quantization error " << r.report.initial_error << " -> " << r.report.final_error
                  << "\n";
    }
    // "all" on a token corpus has no pixel decoder to refit.
    if (run3 && !(stage == "all" && !data_set.pca)) {
        if (!data_set.pca)
            throw Error(ErrorCode::InvalidArgument, "stage 3 refits the pixel decoder and needs an image corpus");
        const auto pool = load_pool((out / kPool).string());
        auto r = stage3(data_set.ds.images, pool, *data_set.pca, cfg);
        save_pca((out / kDecoder).string(), r.pca);
        write_report(out / "report_stage3.json", cfg, r.report);
        std::cout << "stage 3: pixel MSE " << r.report.initial_pixel_mse << " -> " << r.report.final_pixel_mse << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------- encode / decode

struct Artifacts {
    CodebookPool pool;
    std::optional<RouterParams> router;
    std::optional<PcaTransform> pca;
};

Artifacts load_artifacts(const fs::path& dir)
{
    Artifacts a;
    const auto pool_path = pick(dir, kPool, kPoolStage1);
    if (!fs::exists(pool_path))
        throw Error(ErrorCode::IoError, "no codebook pool in " + dir.string());
    a.pool = load_pool(pool_path.string());
    const auto router_path = pick(dir, kRouter, kRouterStage1);
    if (fs::exists(router_path))
        a.router = load_router(router_path.string());
    const auto pca_path = pick(dir, kDecoder, kPca);
    if (fs::exists(pca_path))
        a.pca = load_pca(pca_path.string());
    return a;
}

const RouterParams* router_for(const Artifacts& a, RoutingPolicy policy)
{
    if (policy == RoutingPolicy::NearestNeighbor)
        return nullptr;
    if (!a.router)
        throw Error(ErrorCode::UntrainedRouter, "no router artifact for --policy cr");
    return &*a.router;
}

int cmd_encode(const std::string& input, std::size_t index, const std::string& artifacts, const std::string& policy_name,
               const std::string& output, bool header_bpp)
{
    const auto a = load_artifacts(artifacts);
    const auto policy = parse_policy(policy_name);
    TokenMatrix tokens;
    StreamHeader header = make_header(a.pool);
    if (is_token_corpus_file(input)) {
        const auto corpus = load_corpus(input);
        if (index >= corpus.size())
            throw Error(ErrorCode::IndexOutOfRange, "sample index " + std::to_string(index) + " out of range");
        tokens = corpus.samples[index];
        header = make_header(a.pool, corpus.width, corpus.height, 0);
    } else {
        if (!a.pca)
            throw Error(ErrorCode::IoError, "image input needs a PCA transform in " + artifacts);
        const auto img = read_pnm(input);
        tokens = encode(img, *a.pca);
        header = make_header(a.pool, img.width, img.height, img.channels);
    }
    const auto q = quantize_routed(tokens, a.pool, policy, router_for(a, policy));
    const auto bytes = serialize(q, header);
    io::write_file(output, bytes);

    const double err = quantize_group(tokens, a.pool.group(q.group_index)).total_error;
    std::cout << "group " << q.group_index << ", " << payload_bits(a.pool.T(), a.pool.K(), a.pool.M())
              << " payload bits, " << bytes.size() << " bytes, latent error " << format_number(err);
    if (header.width > 0 && header.height > 0) {
        std::cout << ", bpp " << format_number(bpp(a.pool.T(), a.pool.K(), a.pool.M(), header.width, header.height));
        if (header_bpp)
            std::cout << ", bpp incl. header "
                      << format_number(bpp_with_header(a.pool.T(), a.pool.K(), a.pool.M(), header.width, header.height));
    }
    std::cout << "\n";
    return 0;
}

int cmd_decode(const std::string& input, const std::string& artifacts, const std::string& output)
{
    const auto a = load_artifacts(artifacts);
    const auto bytes = io::read_file(input);
    const auto q = deserialize(bytes, a.pool);
    const auto header = parse_stream(bytes).header;
    const TokenMatrix tokens = dequantize(q, a.pool);
    if (header.channels > 0) {
        if (!a.pca)
            throw Error(ErrorCode::IoError, "image stream needs a PCA transform in " + artifacts);
        if (header.channels != a.pca->channels)
            throw Error(ErrorCode::HeaderMismatch, "stream channel count differs from the transform");
        write_pnm(output, decode(tokens, *a.pca, header.width, header.height));
    } else {
        TokenCorpus c;
        c.samples.push_back(tokens);
        c.width = header.width;
        c.height = header.height;
        save_corpus(output, c);
    }
    std::cout << "decoded group " << q.group_index << " to " << output << "\n";
    return 0;
}

// ---------------------------------------------------------------- eval / sweep

std::vector<RoutingPolicy> policies_from(const std::string& s)
{
    if (s == "both")
        return {RoutingPolicy::NearestNeighbor, RoutingPolicy::CodebookRouting};
    return {parse_policy(s)};
}

std::vector<RdPoint> evaluate(const PreparedData& data, const CodebookPool& pool, const RouterParams* router,
                              const std::vector<RoutingPolicy>& policies, std::uint64_t seed, int threads)
{
    std::vector<RdPoint> rows;
    for (auto policy : policies) {
        EvalOptions opts{policy, policy == RoutingPolicy::CodebookRouting ? router : nullptr, seed, threads};
        if (policy == RoutingPolicy::CodebookRouting && !router)
            throw Error(ErrorCode::UntrainedRouter, "no router available for the cr policy");
        if (data.ds.has_images())
            rows.push_back(eval_rd(data.ds.images, *data.pca, pool, opts));
        else
            rows.push_back(eval_rd(data.corpus, pool, opts));
    }
    return rows;
}

int cmd_eval(const std::string& data_path, const std::string& artifacts, const std::string& policy,
             const std::string& csv_path, const std::string& hist_path, int threads, std::uint64_t seed)
{
    const auto a = load_artifacts(artifacts);
    PreparedData data;
    data.ds = load_dataset(data_path);
    if (data.ds.has_images()) {
        if (!a.pca)
            throw Error(ErrorCode::IoError, "image corpus needs a PCA transform in " + artifacts);
        data.pca = a.pca;
        data.corpus = encode_corpus(data.ds.images, *a.pca, data.ds.image_labels);
    } else {
        data.corpus = data.ds.tokens;
    }
    const auto policies = policies_from(policy);
    const RouterParams* router = a.router ? &*a.router : nullptr;
    const auto rows = evaluate(data, a.pool, router, policies, seed, threads);

    std::ostringstream csv;
    write_rd_csv(csv, rows);
    if (csv_path.empty())
        std::cout << csv.str();
    else
        write_text(csv_path, csv.str());

    if (!hist_path.empty()) {
        json h = json::object();
        for (auto p : policies)
            h[std::string(to_string(p))] =
                to_json(routing_histogram(data.corpus, a.pool, {p, p == RoutingPolicy::CodebookRouting ? router : nullptr,
                                                                 seed, threads}));
        write_text(hist_path, h.dump(2) + "\n");
    }
    return 0;
}

std::vector<int> parse_int_list(const std::string& s)
{
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError("bad integer list '" + s + "'");
        }
    }
    if (out.empty())
        throw ConfigError("empty integer list");
    return out;
}

int cmd_sweep(const std::string& data_path, const std::string& eval_path, const std::string& config,
              const json& overrides, const std::string& out_dir, const std::string& groups,
              const std::string& policy, int threads)
{
    const json j = merge_config(config, overrides, kTrainKeys);
    const fs::path out(out_dir);
    fs::create_directories(out);
    auto train = prepare(data_path, j, out, true);
    PreparedData held;
    const PreparedData* eval_data = &train;
    if (!eval_path.empty()) {
        held.ds = load_dataset(eval_path);
        held.pca = train.pca;
        held.corpus = held.ds.has_images() ? encode_corpus(held.ds.images, *train.pca, held.ds.image_labels)
                                           : held.ds.tokens;
        eval_data = &held;
    }
    const auto policies = policies_from(policy);

    std::vector<RdPoint> rows;
    json hists = json::object();
    for (int M : parse_int_list(groups)) {
        json jm = j;
        jm["M"] = M;
        const TrainConfig cfg = train_config_from(jm, train.corpus.T(), train.corpus.d());
        auto r1 = stage1(train.corpus, cfg);
        auto r2 = stage2(train.corpus, r1.pool, r1.router, cfg);
        for (auto& row : evaluate(*eval_data, r2.pool, &r2.router, policies, cfg.seed, threads))
            rows.push_back(row);
        hists[std::to_string(M)] =
            to_json(routing_histogram(eval_data->corpus, r2.pool, {RoutingPolicy::NearestNeighbor, nullptr, cfg.seed, threads}));
        std::cout << "M=" << M << ": latent MSE (nn) " << format_number(rows[rows.size() - policies.size()].latent_mse)
                  << "\n";
    }
    std::ostringstream csv;
    write_rd_csv(csv, rows);
    write_text(out / "sweep.csv", csv.str());
    write_text(out / "sweep.gp", gnuplot_script("sweep.csv"));
    write_text(out / "histograms.json", hists.dump(2) + "\n");
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Switchable token-specific codebook quantization"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "stscq 1.0.0");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic token mixture or labelled image set");
    std::string synth_kind = "tokens", synth_out, synth_config;
    json synth_o = json::object();
    synth->add_option("--kind", synth_kind, "tokens or images")->capture_default_str();
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--config", synth_config, "JSON spec file");
    override_flag<int>(synth, synth_o, "--clusters", "clusters", "mixture components / image classes");
    override_flag<double>(synth, synth_o, "--separation", "separation", "scale of cluster means");
    override_flag<double>(synth, synth_o, "--sigma", "sigma", "token noise standard deviation");
    override_flag<int>(synth, synth_o, "--tokens", "T", "tokens per sample");
    override_flag<int>(synth, synth_o, "--dim", "d", "token dimension");
    override_flag<int>(synth, synth_o, "--samples", "samples", "sample count");
    override_flag<std::uint64_t>(synth, synth_o, "--seed", "seed", "random seed (falls back to STSCQ_SEED)");
    override_flag<int>(synth, synth_o, "--width", "width", "image width");
    override_flag<int>(synth, synth_o, "--height", "height", "image height");
    override_flag<int>(synth, synth_o, "--channels", "channels", "1 or 3");
    override_flag<double>(synth, synth_o, "--noise", "noise", "pixel noise standard deviation");
    override_flag<double>(synth, synth_o, "--jitter", "jitter", "per-image pattern jitter");

    // train
    auto* train = app.add_subcommand("train", "run the three-stage training pipeline");
    std::string train_data, train_config, train_out, train_stage = "all";
    json train_o = json::object();
    train->add_option("--data", train_data, "token corpus file or image manifest")->required();
    train->add_option("--config", train_config, "JSON training config");
    train->add_option("--out", train_out, "artifact directory")->required();
    train->add_option("--stage", train_stage, "1, 2, 3 or all")->capture_default_str();
    add_train_overrides(train, train_o);

    // encode
    auto* enc = app.add_subcommand("encode", "quantize one image or token sample into a stream");
    std::string enc_in, enc_art, enc_policy = "nn", enc_out;
    std::size_t enc_index = 0;
    bool enc_header_bpp = false;
    enc->add_option("--input", enc_in, "PGM/PPM image or token corpus file")->required();
    enc->add_option("--index", enc_index, "sample index within a token corpus")->capture_default_str();
    enc->add_option("--artifacts", enc_art, "artifact directory")->required();
    enc->add_option("--policy", enc_policy, "nn or cr")->capture_default_str();
    enc->add_option("--out", enc_out, "output stream")->required();
    enc->add_flag("--header-bpp", enc_header_bpp, "also report bpp including the stream header");

    // decode
    auto* dec = app.add_subcommand("decode", "reconstruct an image or tokens from a stream");
    std::string dec_in, dec_art, dec_out;
    dec->add_option("--input", dec_in, "stream file")->required();
    dec->add_option("--artifacts", dec_art, "artifact directory")->required();
    dec->add_option("--out", dec_out, "output image (or token file for token streams)")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "rate-distortion metrics and routing histograms");
    std::string ev_data, ev_art, ev_policy = "both", ev_csv, ev_hist;
    int ev_threads = 1;
    std::uint64_t ev_seed = 0;
    ev->add_option("--data", ev_data, "token corpus file or image manifest")->required();
    ev->add_option("--artifacts", ev_art, "artifact directory")->required();
    ev->add_option("--policy", ev_policy, "nn, cr or both")->capture_default_str();
    ev->add_option("--csv", ev_csv, "CSV output (stdout if omitted)");
    ev->add_option("--histogram", ev_hist, "routing histogram JSON output");
    ev->add_option("--threads", ev_threads, "evaluation threads")->capture_default_str();
    ev->add_option("--seed", ev_seed, "seed recorded in the CSV");

    // sweep
    auto* sw = app.add_subcommand("sweep", "train and evaluate across codebook group counts");
    std::string sw_data, sw_eval, sw_config, sw_out, sw_groups = "1,2,4,8,16", sw_policy = "both";
    int sw_threads = 1;
    json sw_o = json::object();
    sw->add_option("--data", sw_data, "training corpus")->required();
    sw->add_option("--eval-data", sw_eval, "held-out corpus (defaults to the training corpus)");
    sw->add_option("--config", sw_config, "JSON training config");
    sw->add_option("--out", sw_out, "output directory")->required();
    sw->add_option("--group-list", sw_groups, "comma-separated M values")->capture_default_str();
    sw->add_option("--policy", sw_policy, "nn, cr or both")->capture_default_str();
    sw->add_option("--threads", sw_threads, "evaluation threads")->capture_default_str();
    add_train_overrides(sw, sw_o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (ev_seed == 0 && std::getenv("STSCQ_SEED"))
            ev_seed = resolve_seed(json::object());
        if (*synth)
            return cmd_synth(synth_kind, synth_config, synth_o, synth_out);
        if (*train)
            return cmd_train(train_data, train_config, train_o, train_out, train_stage);
        if (*enc)
            return cmd_encode(enc_in, enc_index, enc_art, enc_policy, enc_out, enc_header_bpp);
        if (*dec)
            return cmd_decode(dec_in, dec_art, dec_out);
        if (*ev)
            return cmd_eval(ev_data, ev_art, ev_policy, ev_csv, ev_hist, ev_threads, ev_seed);
        if (*sw)
            return cmd_sweep(sw_data, sw_eval, sw_config, sw_o, sw_out, sw_groups, sw_policy, sw_threads);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
