#include "ivl/trainer.hpp"

#include <json.hpp>

#include <sstream>

namespace ivl {

std::vector<BoolMat> predict_grounding_masks(const Corpus& corpus, const BenchRecord& record,
                                             const InterfaceConfig& cfg,
                                             const ParamStore& params) {
    Bind bind(params);
    GroundingForward fwd = run_interleave_grounding(corpus.scene_of(record), record.to_entry(),
                                                    corpus.scenes, cfg, bind);
    std::vector<BoolMat> out;
    for (Index e = 0; e < fwd.selected_masks.rows(); ++e) {
        BoolMat m(record.height, record.width, false);
        for (Index c = 0; c < fwd.selected_masks.cols(); ++c) {
            if (fwd.selected_masks.m(e, c) > 0.0) {
                m.set(c / record.width, c % record.width, true);
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

MetricsReport evaluate(const Corpus& corpus, const InterfaceConfig& cfg,
                       const ParamStore& params) {
    if (corpus.records.empty()) throw std::invalid_argument("evaluate: empty corpus");
    Bind bind(params);
    MetricsReport rep;

    // interleave grounding: cIoU / mIoU over all entities
    {
        std::vector<BoolMat> pred, gt;
        for (const BenchRecord& r : corpus.records) {
            std::vector<BoolMat> masks = predict_grounding_masks(corpus, r, cfg, params);
            for (std::size_t e = 0; e < r.entities.size(); ++e) {
                pred.push_back(masks[e]);
                gt.push_back(r.entities[e].mask);
            }
        }
        rep.intg_ciou = metric_ciou(pred, gt);
        rep.intg_miou = metric_miou(pred, gt);
    }

    // interleave retrieval with self-exclusion
    {
        std::vector<long> scene_ids;
        for (const auto& [id, scene] : corpus.scenes) scene_ids.push_back(id);
        std::vector<InterleaveEntry> queries;
        std::vector<long> targets;
        for (const BenchRecord& r : corpus.records) {
            queries.push_back(r.to_entry());
            targets.push_back(r.scene_id);
        }
        const auto rankings =
            run_interleave_retrieval(queries, scene_ids, corpus.scenes, cfg, bind);
        rep.intl_ir1 = metric_ir_at_k(rankings, targets, 1);
        rep.intl_ir5 = metric_ir_at_k(rankings, targets, 5);
        rep.intl_ir10 = metric_ir_at_k(rankings, targets, 10);
    }

    // image-text retrieval in both directions
    {
        std::vector<std::pair<long, std::string>> pairs;
        for (const BenchRecord& r : corpus.records) {
            pairs.emplace_back(r.scene_id, plain_caption(r.caption));
        }
        ImageTextRun run = run_image_text_retrieval(pairs, corpus.scenes, cfg, bind);
        std::vector<long> scene_targets, caption_targets;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            scene_targets.push_back(pairs[i].first);
            caption_targets.push_back(static_cast<long>(i));
        }
        rep.text_ir1 = metric_ir_at_k(run.image_rankings, scene_targets, 1);
        rep.text_tr1 = metric_ir_at_k(run.caption_rankings, caption_targets, 1);
    }

    // generic segmentation: mean panoptic quality over scenes
    {
        double pq_sum = 0;
        long n = 0;
        for (const auto& [id, scene] : corpus.scenes) {
            PanoForward fwd = run_generic_segmentation(scene, cfg, bind);
            Partition pred = panoptic_infer(fwd, scene.height, scene.width);
            Partition gt;
            for (const auto& seg : scene.segments) gt.push_back({seg.mask, seg.category});
            pq_sum += metric_pq(pred, gt);
            ++n;
        }
        rep.pq = pq_sum / static_cast<double>(n);
    }
    return rep;
}

std::string MetricsReport::to_json() const {
    return nlohmann::json{{"interleave_grounding", {{"ciou", intg_ciou}, {"miou", intg_miou}}},
                          {"interleave_retrieval",
                           {{"ir1", intl_ir1}, {"ir5", intl_ir5}, {"ir10", intl_ir10}}},
                          {"image_text_retrieval", {{"ir1", text_ir1}, {"tr1", text_tr1}}},
                          {"generic_segmentation", {{"pq", pq}}}}
        .dump(2);
}

std::string MetricsReport::to_table() const {
    std::ostringstream os;
    os << "task                      metric   value\n";
    auto row = [&](const char* task, const char* metric, double v) {
        os << task;
        for (std::size_t i = std::strlen(task); i < 26; ++i) os << ' ';
        os << metric;
        for (std::size_t i = std::strlen(metric); i < 9; ++i) os << ' ';
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", v);
        os << buf << "\n";
    };
    row("interleave grounding", "cIoU", intg_ciou);
    row("interleave grounding", "mIoU", intg_miou);
    row("interleave retrieval", "IR@1", intl_ir1);
    row("interleave retrieval", "IR@5", intl_ir5);
    row("interleave retrieval", "IR@10", intl_ir10);
    row("image-text retrieval", "IR@1", text_ir1);
    row("image-text retrieval", "TR@1", text_tr1);
    row("generic segmentation", "PQ", pq);
    return os.str();
}

}  // namespace ivl
