#include "ivl/data_engine.hpp"

#include <stdexcept>
#include <thread>

namespace ivl {

GeneratedCorpus generate_corpus(const GenConfig& gen, AnnotationClient& client,
                                const InterfaceConfig& cfg, const ParamStore& params) {
    if (gen.n_scenes < 1) throw std::invalid_argument("generate_corpus: n_scenes must be >= 1");
    if (gen.min_segments < 1 || gen.max_segments < gen.min_segments) {
        throw std::invalid_argument("generate_corpus: bad segment range");
    }
    if (gen.parallelism < 1) {
        throw std::invalid_argument("generate_corpus: parallelism must be >= 1");
    }
    GeneratedCorpus out;
    Rng rng(mix_seed(gen.seed, "corpus"));

    std::vector<GeneratedScene> generated;
    for (long i = 0; i < gen.n_scenes; ++i) {
        const long scene_id = gen.first_scene_id + i;
        const int n_segments =
            static_cast<int>(rng.uniform_int(gen.min_segments, gen.max_segments));
        generated.push_back(
            generate_scene(gen.seed, scene_id, gen.height, gen.width, n_segments));
    }

    // annotation requests fan out in bounded waves; results keep scene order
    std::vector<InterleavedCaption> captions(generated.size());
    std::vector<std::string> failures(generated.size());
    for (std::size_t base = 0; base < generated.size();
         base += static_cast<std::size_t>(gen.parallelism)) {
        const std::size_t end =
            std::min(generated.size(), base + static_cast<std::size_t>(gen.parallelism));
        std::vector<std::thread> wave;
        for (std::size_t i = base; i < end; ++i) {
            wave.emplace_back([&, i] {
                try {
                    captions[i] = annotate(generated[i].scene, generated[i].plain_caption,
                                           generated[i].pseudo_description, client,
                                           gen.client_retries);
                } catch (const std::exception& e) {
                    failures[i] = e.what();
                }
            });
        }
        for (auto& t : wave) t.join();
    }
    for (std::size_t i = 0; i < generated.size(); ++i) {
        if (!failures[i].empty()) {
            throw std::runtime_error("generate_corpus: scene " +
                                     std::to_string(generated[i].scene.scene_id) + ": " +
                                     failures[i]);
        }
    }

    for (std::size_t i = 0; i < generated.size(); ++i) {
        GeneratedScene& g = generated[i];
        BenchRecord record;
        record.scene_id = g.scene.scene_id;
        record.height = gen.height;
        record.width = gen.width;
        record.caption = captions[i];
        for (const CaptionEntity& ce : captions[i].entities) {
            const SegmentAnnotation* seg = g.scene.find_segment(ce.ann_id);
            if (seg == nullptr) {
                throw std::runtime_error("generate_corpus: caption references ann " +
                                         std::to_string(ce.ann_id));
            }
            record.entities.push_back({seg->ann_id, ce.span, ce.phrase, seg->bbox, seg->mask,
                                       seg->category, std::nullopt});
        }
        out.corpus.scenes.emplace(g.scene.scene_id, std::move(g.scene));
        out.corpus.records.push_back(std::move(record));
    }

    Bind bind(params);
    out.index = build_similarity_index(out.corpus.scenes, cfg, bind);
    if (gen.p_replace > 0.0) {
        Rng replace_rng(mix_seed(gen.seed, "replace"));
        for (BenchRecord& r : out.corpus.records) {
            r = replace_entities(r, out.index, gen.p_replace, replace_rng);
        }
    }
    return out;
}

}  // namespace ivl
