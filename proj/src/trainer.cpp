#include "ivl/trainer.hpp"

#include "ivl/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <ostream>
#include <sstream>

namespace ivl {

Corpus load_corpus(const std::filesystem::path& dir) {
    Corpus c;
    c.scenes = read_scenes(dir / "scenes.jsonl");
    c.records = read_dataset(dir / "dataset.jsonl");
    return c;
}

namespace {

std::string pick_task(const std::map<std::string, double>& mix, Rng& rng) {
    double total = 0;
    for (const auto& [task, w] : mix) total += w;
    double draw = rng.uniform() * total;
    for (const auto& [task, w] : mix) {
        if (w <= 0) continue;
        draw -= w;
        if (draw <= 0) return task;
    }
    for (auto it = mix.rbegin(); it != mix.rend(); ++it) {
        if (it->second > 0) return it->first;
    }
    throw std::logic_error("pick_task: empty mix");
}

}  // namespace

Batch make_batch(const Corpus& corpus, const TrainConfig& cfg, long step) {
    if (corpus.records.empty()) throw std::invalid_argument("make_batch: empty corpus");
    Rng rng(mix_seed(cfg.seed, "batch:" + std::to_string(step)));
    Batch batch;
    batch.task = pick_task(cfg.effective_task_mix(), rng);

    const std::size_t n = corpus.records.size();
    if (n >= static_cast<std::size_t>(cfg.batch_size)) {
        // partial shuffle: records without replacement
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        for (int i = 0; i < cfg.batch_size; ++i) {
            const auto j = static_cast<std::size_t>(
                rng.uniform_int(i, static_cast<std::int64_t>(n) - 1));
            std::swap(order[static_cast<std::size_t>(i)], order[j]);
            batch.records.push_back(order[static_cast<std::size_t>(i)]);
        }
    } else {
        for (int i = 0; i < cfg.batch_size; ++i) {
            batch.records.push_back(static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)));
        }
    }

    if (batch.task == "interactive_segmentation") {
        for (std::size_t ri : batch.records) {
            const Scene& scene = corpus.scene_of(corpus.records[ri]);
            BatchInteraction it;
            it.segment = static_cast<std::size_t>(rng.uniform_int(
                0, static_cast<std::int64_t>(scene.segments.size()) - 1));
            const SegmentAnnotation& seg = scene.segments[it.segment];
            if (rng.bernoulli(0.5)) {
                it.box = seg.bbox;  // box mode
            } else {
                // point mode: one cell inside the segment
                std::vector<std::pair<int, int>> cells;
                for (int y = 0; y < scene.height; ++y)
                    for (int x = 0; x < scene.width; ++x)
                        if (seg.mask.at(y, x)) cells.emplace_back(y, x);
                const auto& [y, x] = cells[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(cells.size()) - 1))];
                it.box = Bbox{x, y, 1, 1};
            }
            batch.interactions.push_back(it);
        }
    }
    return batch;
}

namespace {

BoolMat gt_masks_of(const BenchRecord& r) {
    BoolMat out(static_cast<Index>(r.entities.size()),
                static_cast<Index>(r.height) * r.width, false);
    for (std::size_t e = 0; e < r.entities.size(); ++e) {
        const BoolMat& m = r.entities[e].mask;
        for (Index y = 0; y < m.rows; ++y)
            for (Index x = 0; x < m.cols; ++x)
                if (m.at(y, x)) out.set(static_cast<Index>(e), y * m.cols + x, true);
    }
    return out;
}

LossWeights mask_to_task(const LossWeights& w, const std::string& task) {
    LossWeights out = w;
    if (task != "generic_segmentation") out.pano_ce = out.pano_bce = out.pano_dice = 0;
    if (task != "grounded_segmentation") out.grd_ce = out.grd_bce = out.grd_dice = 0;
    if (task != "interactive_segmentation") out.iseg_ce = out.iseg_bce = out.iseg_dice = 0;
    if (task != "interleave_grounding") out.intg_ce = out.intg_bce = out.intg_dice = 0;
    if (task != "image_text_retrieval") out.retrieval = 0;
    if (task != "interleave_retrieval") out.interleave_retrieval = 0;
    return out;
}

}  // namespace

StepReport train_step(const Batch& batch, const Corpus& corpus, const TrainConfig& cfg,
                      long step, ParamStore& params, AdamState& opt) {
    Tape tape;
    Bind bind(params, &tape);
    TaskBatchOutputs outputs;

    if (batch.task == "interleave_grounding" || batch.task == "grounded_segmentation") {
        for (std::size_t ri : batch.records) {
            const BenchRecord& r = corpus.records[ri];
            const Scene& scene = corpus.scene_of(r);
            GroundingForward fwd =
                batch.task == "interleave_grounding"
                    ? run_interleave_grounding(scene, r.to_entry(), corpus.scenes,
                                               cfg.interface, bind)
                    : run_grounded_segmentation(scene, r.to_entry(false), corpus.scenes,
                                                cfg.interface, bind);
            auto& list = batch.task == "interleave_grounding" ? outputs.intg : outputs.grd;
            list.push_back({fwd.mask_logits, fwd.score, gt_masks_of(r)});
        }
    } else if (batch.task == "interactive_segmentation") {
        for (std::size_t k = 0; k < batch.records.size(); ++k) {
            const BenchRecord& r = corpus.records[batch.records[k]];
            const Scene& scene = corpus.scene_of(r);
            const BatchInteraction& it = batch.interactions[k];
            GroundingForward fwd =
                run_interactive_segmentation(scene, {it.box}, cfg.interface, bind);
            const SegmentAnnotation& seg = scene.segments[it.segment];
            BoolMat gt(1, static_cast<Index>(scene.height) * scene.width, false);
            for (Index y = 0; y < seg.mask.rows; ++y)
                for (Index x = 0; x < seg.mask.cols; ++x)
                    if (seg.mask.at(y, x)) gt.set(0, y * seg.mask.cols + x, true);
            outputs.iseg.push_back({fwd.mask_logits, fwd.score, gt});
        }
    } else if (batch.task == "generic_segmentation") {
        for (std::size_t ri : batch.records) {
            const Scene& scene = corpus.scene_of(corpus.records[ri]);
            PanoForward fwd = run_generic_segmentation(scene, cfg.interface, bind);
            PanopticOutputs po;
            po.mask_logits = fwd.mask_logits;
            po.class_logits = fwd.class_logits;
            po.gt_masks = BoolMat(static_cast<Index>(scene.segments.size()),
                                  static_cast<Index>(scene.height) * scene.width, false);
            for (std::size_t s = 0; s < scene.segments.size(); ++s) {
                const BoolMat& m = scene.segments[s].mask;
                for (Index y = 0; y < m.rows; ++y)
                    for (Index x = 0; x < m.cols; ++x)
                        if (m.at(y, x)) po.gt_masks.set(static_cast<Index>(s), y * m.cols + x,
                                                        true);
                po.gt_classes.push_back(scene.segments[s].category);
            }
            outputs.pano.push_back(std::move(po));
        }
    } else if (batch.task == "image_text_retrieval") {
        std::vector<Tensor> imgs, caps;
        for (std::size_t ri : batch.records) {
            const BenchRecord& r = corpus.records[ri];
            RetrievalEmbeddings emb = run_image_text_embeddings(
                corpus.scene_of(r), plain_caption(r.caption), cfg.interface, bind);
            imgs.push_back(emb.image);
            caps.push_back(emb.query);
        }
        outputs.imgtext_score =
            head_score(concat_rows(caps), concat_rows(imgs), cfg.interface, bind);
    } else if (batch.task == "interleave_retrieval") {
        std::vector<Tensor> imgs, entries;
        for (std::size_t ri : batch.records) {
            const BenchRecord& r = corpus.records[ri];
            RetrievalEmbeddings emb = run_interleave_embeddings(
                corpus.scene_of(r), r.to_entry(), corpus.scenes, cfg.interface, bind);
            imgs.push_back(emb.image);
            entries.push_back(emb.query);
        }
        outputs.interleave_score =
            head_score(concat_rows(entries), concat_rows(imgs), cfg.interface, bind);
    } else {
        throw std::invalid_argument("train_step: unknown task " + batch.task);
    }

    LossReport loss = combined_loss(outputs, mask_to_task(cfg.weights, batch.task));
    if (!std::isfinite(loss.total.value())) {
        std::ostringstream os;
        os << "train_step: non-finite loss at step " << step << " task " << batch.task << ":";
        for (const auto& [k, v] : loss.terms) os << " " << k << "=" << v;
        throw NumericError(os.str());
    }
    GradientMap grads = tape.backward(loss.total);

    // adaptive-moment update; parameters outside this task's subgraph see a
    // zero gradient
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    opt.t += 1;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(opt.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(opt.t));
    for (auto& [name, tensor] : params.tensors) {
        RowMatrix g = RowMatrix::Zero(tensor.rows(), tensor.cols());
        if (auto it = bind.bound().find(name);
            it != bind.bound().end() && grads.contains(it->second)) {
            g = grads.at(it->second);
        }
        auto mit = opt.m.find(name);
        if (mit == opt.m.end()) {
            opt.m.emplace(name, RowMatrix::Zero(tensor.rows(), tensor.cols()));
            opt.v.emplace(name, RowMatrix::Zero(tensor.rows(), tensor.cols()));
        }
        RowMatrix& m = opt.m.at(name);
        RowMatrix& v = opt.v.at(name);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
        const RowMatrix mhat = m / bc1;
        const RowMatrix vhat = v / bc2;
        tensor.m -= cfg.learning_rate *
                    (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
    }

    StepReport report;
    report.step = step;
    report.task = batch.task;
    report.lr = cfg.learning_rate;
    report.total = loss.total.value();
    report.terms = loss.terms;
    return report;
}

std::string StepReport::to_json_line() const {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [k, v] : terms) t[k] = v;
    return nlohmann::json{{"step", step}, {"task", task}, {"lr", lr}, {"total", total},
                          {"terms", std::move(t)}}
        .dump();
}

std::vector<StepReport> train(const Corpus& corpus, const TrainConfig& cfg, ParamStore& params,
                              AdamState& opt, std::ostream* metrics_log) {
    cfg.validate();
    std::vector<StepReport> reports;
    for (long step = 0; step < cfg.steps; ++step) {
        Batch batch = make_batch(corpus, cfg, step);
        StepReport r = train_step(batch, corpus, cfg, step, params, opt);
        if (metrics_log) *metrics_log << r.to_json_line() << "\n";
        reports.push_back(std::move(r));
    }
    return reports;
}

}  // namespace ivl
