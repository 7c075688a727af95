#include "ivl/data_engine.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>

namespace {

using namespace ivl;

std::unique_ptr<AnnotationClient> make_client(const std::string& kind, const std::string& url,
                                              const std::string& model, int timeout_sec) {
    if (kind == "mock") return std::make_unique<MockAnnotationClient>();
    if (kind == "http") {
        if (url.empty()) throw std::runtime_error("--url is required with --client http");
        HttpClientConfig cfg;
        cfg.base_url = url;
        cfg.model = model;
        cfg.timeout_sec = timeout_sec;
        return std::make_unique<HttpAnnotationClient>(cfg);
    }
    throw std::runtime_error("unknown client kind: " + kind);
}

int cmd_gen_data(const std::string& out_dir, long scenes, std::uint64_t seed, double p_replace,
                 const std::string& client_kind, const std::string& url,
                 const std::string& model, int timeout, int retries, int parallel, int grid_h,
                 int grid_w, int min_segments, int max_segments) {
    GenConfig gen;
    gen.seed = seed;
    gen.n_scenes = scenes;
    gen.height = grid_h;
    gen.width = grid_w;
    gen.min_segments = min_segments;
    gen.max_segments = max_segments;
    gen.p_replace = p_replace;
    gen.client_retries = retries;
    gen.parallelism = parallel;

    InterfaceConfig iface;  // encoder width for the similarity index
    ParamStore params = init_params(iface, seed);
    auto client = make_client(client_kind, url, model, timeout);
    GeneratedCorpus gc = generate_corpus(gen, *client, iface, params);

    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    write_scenes(gc.corpus.scenes, dir / "scenes.jsonl");
    write_dataset(gc.corpus.records, dir / "dataset.jsonl");
    write_similarity(gc.index, dir / "similarity.jsonl");

    const DatasetStats st = dataset_stats(gc.corpus.records);
    {
        std::ofstream os(dir / "stats.json");
        os << "{\"images\": " << st.images << ", \"captions\": " << st.captions
           << ", \"entities\": " << st.entities << "}\n";
    }
    std::cout << "images " << st.images << "\ncaptions " << st.captions << "\nentities "
              << st.entities << "\n";
    return 0;
}

TrainConfig resolve_train_config(const std::string& config_file, const KvMap& overrides) {
    KvMap kv;
    if (!config_file.empty()) kv = parse_kv_file(config_file);
    for (const auto& [k, v] : overrides) kv[k] = v;  // flags win
    return train_config_from_kv(kv);
}

int cmd_train(const std::string& data_dir, const std::string& config_file,
              const std::string& out_ckpt, const std::string& log_file,
              const KvMap& overrides) {
    TrainConfig cfg = resolve_train_config(config_file, overrides);
    // the resolved configuration echoes back as loadable config syntax
    std::cout << serialize_kv(train_config_to_kv(cfg));

    Corpus corpus = load_corpus(data_dir);
    ParamStore params = init_params(cfg.interface, cfg.seed);
    AdamState opt;

    const std::string log_path = log_file.empty() ? out_ckpt + ".log.jsonl" : log_file;
    std::ofstream log(log_path);
    if (!log) throw std::runtime_error("cannot write metrics log " + log_path);
    train(corpus, cfg, params, opt, &log);

    save_checkpoint(out_ckpt, params, opt, cfg, cfg.steps);
    std::cout << "checkpoint " << out_ckpt << "\nmetrics_log " << log_path << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& out_file,
             bool force) {
    const TrainConfig cfg = checkpoint_config(ckpt);
    Checkpoint ck = load_checkpoint(ckpt, cfg, force);
    Corpus corpus = load_corpus(data_dir);
    MetricsReport m = evaluate(corpus, cfg.interface, ck.params);
    std::cout << m.to_table();
    if (!out_file.empty()) {
        std::ofstream os(out_file);
        if (!os) throw std::runtime_error("cannot write report " + out_file);
        os << m.to_json() << "\n";
    }
    return 0;
}

int cmd_retrieve(const std::string& ckpt, const std::string& data_dir,
                 const std::string& query, int top, bool force) {
    const TrainConfig cfg = checkpoint_config(ckpt);
    Checkpoint ck = load_checkpoint(ckpt, cfg, force);
    Corpus corpus = load_corpus(data_dir);
    const InterleaveEntry entry = parse_query(query);

    Bind bind(ck.params);
    const std::vector<long> excluded = exclusion_scenes(entry);
    const Scene& host = corpus.scenes.begin()->second;
    Tensor query_emb =
        run_interleave_embeddings(host, entry, corpus.scenes, cfg.interface, bind).query;

    InterleaveEntry probe;
    probe.nodes = {{EntryNode::Kind::TextSpan, "the scene", {}}};
    std::vector<std::pair<double, long>> scored;
    for (const auto& [id, scene] : corpus.scenes) {
        if (std::find(excluded.begin(), excluded.end(), id) != excluded.end()) continue;
        Tensor img =
            run_interleave_embeddings(scene, probe, corpus.scenes, cfg.interface, bind).image;
        scored.emplace_back(head_score(query_emb, img, cfg.interface, bind).value(), id);
    }
    if (scored.empty()) throw std::runtime_error("corpus is empty after exclusion");
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    const std::size_t n = top > 0 ? std::min<std::size_t>(scored.size(),
                                                          static_cast<std::size_t>(top))
                                  : scored.size();
    for (std::size_t i = 0; i < n; ++i) {
        std::cout << i + 1 << " scene " << scored[i].second << " score " << scored[i].first
                  << "\n";
    }
    return 0;
}

int cmd_ground(const std::string& ckpt, const std::string& data_dir, long scene_id,
               const std::string& query, bool force) {
    const TrainConfig cfg = checkpoint_config(ckpt);
    Checkpoint ck = load_checkpoint(ckpt, cfg, force);
    Corpus corpus = load_corpus(data_dir);
    auto sit = corpus.scenes.find(scene_id);
    if (sit == corpus.scenes.end()) {
        throw std::runtime_error("no scene " + std::to_string(scene_id) + " in " + data_dir);
    }
    const Scene& scene = sit->second;
    const InterleaveEntry entry = parse_query(query);

    Bind bind(ck.params);
    GroundingForward fwd =
        run_interleave_grounding(scene, entry, corpus.scenes, cfg.interface, bind);

    int entity = 0;
    for (const EntryNode& node : entry.nodes) {
        if (node.kind == EntryNode::Kind::Connection) continue;
        std::cout << "entity " << entity;
        if (node.kind == EntryNode::Kind::TextSpan) {
            std::cout << " <" << node.text << ">";
        } else {
            std::cout << " [ref:" << node.ref.scene_id << ":" << node.ref.ann_id << "]";
        }
        std::cout << "\n";
        BoolMat mask(scene.height, scene.width, false);
        for (Index c = 0; c < fwd.selected_masks.cols(); ++c) {
            if (fwd.selected_masks.m(entity, c) > 0.0) {
                mask.set(c / scene.width, c % scene.width, true);
            }
        }
        for (Index y = 0; y < mask.rows; ++y) {
            std::cout << "  ";
            for (Index x = 0; x < mask.cols; ++x) std::cout << (mask.at(y, x) ? '#' : '.');
            std::cout << "\n";
        }
        std::cout << "  rle";
        for (int run : mask_to_rle(mask)) std::cout << " " << run;
        std::cout << "\n";
        ++entity;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"interleaved vision-language interface at desk scale"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic benchmark corpus");
    std::string out_dir, client_kind = "mock", url, model = "caption-engine";
    long scenes = 10;
    std::uint64_t seed = 1;
    double p_replace = 0.5;
    int timeout = 30, retries = 2, parallel = 4;
    int grid_h = 8, grid_w = 8, min_segments = 3, max_segments = 5;
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--scenes", scenes, "number of scenes");
    gen->add_option("--seed", seed, "generation seed");
    gen->add_option("--p-replace", p_replace, "visual replacement probability");
    gen->add_option("--client", client_kind, "annotation client: mock or http");
    gen->add_option("--url", url, "chat-completion endpoint base url");
    gen->add_option("--model", model, "model name sent to the endpoint");
    gen->add_option("--timeout", timeout, "client timeout seconds");
    gen->add_option("--retries", retries, "client retry count");
    gen->add_option("--parallel", parallel, "concurrent annotation requests");
    gen->add_option("--grid-h", grid_h, "scene grid height");
    gen->add_option("--grid-w", grid_w, "scene grid width");
    gen->add_option("--min-segments", min_segments, "segments per scene, lower bound");
    gen->add_option("--max-segments", max_segments, "segments per scene, upper bound");

    // train
    auto* tr = app.add_subcommand("train", "train on a generated corpus");
    std::string data_dir, config_file, out_ckpt, log_file;
    long steps = -1;
    std::uint64_t train_seed = 0;
    double lr = -1;
    int batch = -1;
    bool seed_set = false;
    tr->add_option("--data", data_dir, "corpus directory")->required();
    tr->add_option("--config", config_file, "key-value config file");
    tr->add_option("--out", out_ckpt, "checkpoint output path")->required();
    tr->add_option("--log", log_file, "metrics log path (default <out>.log.jsonl)");
    tr->add_option("--steps", steps, "override steps");
    tr->add_option("--seed", train_seed, "override seed")->each([&](const std::string&) {
        seed_set = true;
    });
    tr->add_option("--lr", lr, "override learning rate");
    tr->add_option("--batch-size", batch, "override batch size");

    // eval / retrieve / ground
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
    std::string ckpt, report_out;
    bool force = false;
    ev->add_option("--ckpt", ckpt, "checkpoint path")->required();
    ev->add_option("--data", data_dir, "corpus directory")->required();
    ev->add_option("--out", report_out, "machine-readable report path");
    ev->add_flag("--force", force, "ignore config hash mismatch");

    auto* re = app.add_subcommand("retrieve", "rank corpus scenes against a query");
    std::string query;
    int top = 10;
    re->add_option("--ckpt", ckpt, "checkpoint path")->required();
    re->add_option("--data", data_dir, "corpus directory")->required();
    re->add_option("--query", query,
                   "interleaved query, e.g. \"<the red square> near [ref:3:301]\"")
        ->required();
    re->add_option("--top", top, "print this many results (0 = all)");
    re->add_flag("--force", force, "ignore config hash mismatch");

    auto* gr = app.add_subcommand("ground", "ground query entities onto one scene");
    long scene_id = 0;
    gr->add_option("--ckpt", ckpt, "checkpoint path")->required();
    gr->add_option("--data", data_dir, "corpus directory")->required();
    gr->add_option("--scene", scene_id, "scene id to ground onto")->required();
    gr->add_option("--query", query, "interleaved query")->required();
    gr->add_flag("--force", force, "ignore config hash mismatch");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return cmd_gen_data(out_dir, scenes, seed, p_replace, client_kind, url, model,
                                timeout, retries, parallel, grid_h, grid_w, min_segments,
                                max_segments);
        }
        if (tr->parsed()) {
            KvMap overrides;
            if (steps >= 0) overrides["steps"] = std::to_string(steps);
            if (seed_set) overrides["seed"] = std::to_string(train_seed);
            if (lr >= 0) overrides["learning_rate"] = std::to_string(lr);
            if (batch >= 0) overrides["batch_size"] = std::to_string(batch);
            return cmd_train(data_dir, config_file, out_ckpt, log_file, overrides);
        }
        if (ev->parsed()) return cmd_eval(ckpt, data_dir, report_out, force);
        if (re->parsed()) return cmd_retrieve(ckpt, data_dir, query, top, force);
        if (gr->parsed()) return cmd_ground(ckpt, data_dir, scene_id, query, force);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
