#include "ivl/task_spec.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace ivl {

std::string query_arity_name(QueryArity a) {
    switch (a) {
        case QueryArity::ObjectPool: return "object_pool";
        case QueryArity::PerClass: return "per_class";
        case QueryArity::PerEntity: return "per_entity";
        case QueryArity::PerInteraction: return "per_interaction";
        case QueryArity::Single: return "single";
    }
    throw std::logic_error("bad query arity");
}

QueryArity query_arity_from(const std::string& s) {
    if (s == "object_pool") return QueryArity::ObjectPool;
    if (s == "per_class") return QueryArity::PerClass;
    if (s == "per_entity") return QueryArity::PerEntity;
    if (s == "per_interaction") return QueryArity::PerInteraction;
    if (s == "single") return QueryArity::Single;
    throw std::invalid_argument("unknown query arity: " + s);
}

QueryArity default_arity_for(const std::string& query_name) {
    const std::string kind =
        query_name.rfind("q.", 0) == 0 ? query_name.substr(2) : query_name;
    if (kind == "object" || kind == "segment" || kind == "grounding" || kind == "entity") {
        return QueryArity::ObjectPool;
    }
    if (kind == "class") return QueryArity::PerClass;
    if (kind == "interleave" || kind == "_interleave" || kind == "text") {
        return QueryArity::PerEntity;
    }
    if (kind == "spatial") return QueryArity::PerInteraction;
    if (kind == "image" || kind == "caption") return QueryArity::Single;
    throw std::invalid_argument("no default arity for query " + query_name);
}

bool TaskSpec::is_prompt(const std::string& n) const {
    return std::any_of(prompts.begin(), prompts.end(),
                       [&](const PromptDecl& p) { return p.name == n; });
}

bool TaskSpec::is_query(const std::string& n) const {
    return std::any_of(queries.begin(), queries.end(),
                       [&](const QueryDecl& q) { return q.name == n; });
}

const PromptDecl& TaskSpec::prompt(const std::string& n) const {
    for (const auto& p : prompts) {
        if (p.name == n) return p;
    }
    throw std::out_of_range("task " + name + ": unknown prompt " + n);
}

const QueryDecl& TaskSpec::query(const std::string& n) const {
    for (const auto& q : queries) {
        if (q.name == n) return q;
    }
    throw std::out_of_range("task " + name + ": unknown query " + n);
}

std::vector<std::string> TaskSpec::stream_order() const {
    std::vector<std::string> order;
    for (const auto& p : prompts) order.push_back(p.name);
    for (const auto& q : queries) order.push_back(q.name);
    return order;
}

void TaskSpec::validate() const {
    if (name.empty()) throw std::invalid_argument("task spec without a name");
    if (prompts.empty() || queries.empty()) {
        throw std::invalid_argument("task " + name + ": needs prompts and queries");
    }
    auto known = [&](const std::string& s) { return is_prompt(s) || is_query(s); };
    for (const Edge& e : content_edges) {
        if (!is_query(e.dst)) {
            throw std::invalid_argument("task " + name + ": content edge target " + e.dst +
                                        " is not a declared query stream");
        }
        if (!is_prompt(e.src)) {
            throw std::invalid_argument("task " + name + ": content edge source " + e.src +
                                        " is not a declared prompt stream");
        }
    }
    for (const Edge& e : condition_edges) {
        if (!known(e.dst) || !known(e.src)) {
            throw std::invalid_argument("task " + name + ": condition edge " + e.dst + " <- " +
                                        e.src + " references an undeclared stream");
        }
    }
}

namespace {

TaskSpec make_task(std::string name, std::vector<PromptDecl> prompts,
                   std::vector<QueryDecl> queries, std::vector<Edge> content,
                   std::vector<Edge> extra_condition, bool pixel) {
    TaskSpec t;
    t.name = std::move(name);
    t.prompts = std::move(prompts);
    t.queries = std::move(queries);
    t.content_edges = std::move(content);
    // Condition attention repeats the content routes on top of the default
    // self blocks, plus any task-specific extras.
    t.condition_edges = t.content_edges;
    for (auto& e : extra_condition) t.condition_edges.push_back(std::move(e));
    t.project_semantic = true;
    t.project_pixel = pixel;
    t.validate();
    return t;
}

QueryDecl q(const std::string& name) { return QueryDecl{name, default_arity_for(name)}; }

}  // namespace

std::vector<TaskSpec> builtin_tasks() {
    std::vector<TaskSpec> out;

    out.push_back(make_task(
        "generic_segmentation",
        {{"p.image", StreamKind::Image}, {"p.class", StreamKind::Class}},
        {q("q.object"), q("q.class")},
        {{"q.object", "p.image"}, {"q.class", "p.class"}},
        {}, /*pixel=*/true));

    out.push_back(make_task(
        "grounded_segmentation",
        {{"p.image", StreamKind::Image}, {"p.text", StreamKind::Text}},
        {q("q.grounding"), q("q.text")},
        {{"q.grounding", "p.image"}, {"q.text", "p.text"}},
        {{"q.grounding", "p.text"}}, /*pixel=*/true));

    out.push_back(make_task(
        "image_text_retrieval",
        {{"p.image", StreamKind::Image}, {"p.caption", StreamKind::Caption}},
        {q("q.image"), q("q.caption")},
        {{"q.image", "p.image"}, {"q.caption", "p.caption"}},
        {}, /*pixel=*/false));

    out.push_back(make_task(
        "interactive_segmentation",
        {{"p.image", StreamKind::Image}, {"p.spatial", StreamKind::Spatial}},
        {q("q.segment"), q("q.spatial")},
        {{"q.segment", "p.image"}, {"q.spatial", "p.spatial"}},
        {{"q.segment", "p.spatial"}}, /*pixel=*/true));

    out.push_back(make_task(
        "interleave_grounding",
        {{"p.image", StreamKind::Image}, {"p.interleave", StreamKind::Interleave}},
        {q("q.entity"), q("q.interleave")},
        {{"q.entity", "p.image"}, {"q.interleave", "p.interleave"}},
        {}, /*pixel=*/true));

    out.push_back(make_task(
        "interleave_retrieval",
        {{"p.image", StreamKind::Image}, {"p.interleave", StreamKind::Interleave}},
        {q("q.image"), q("q._interleave")},
        {{"q.image", "p.image"}, {"q._interleave", "p.interleave"}},
        {}, /*pixel=*/false));

    return out;
}

const TaskSpec& builtin_task(const std::string& name) {
    static const std::vector<TaskSpec> tasks = builtin_tasks();
    for (const auto& t : tasks) {
        if (t.name == name) return t;
    }
    throw std::out_of_range("unknown built-in task: " + name);
}

std::string serialize_task_spec(const TaskSpec& spec) {
    std::ostringstream os;
    os << "task " << spec.name << "\n";
    for (const auto& p : spec.prompts) {
        os << "prompt " << p.name << " " << stream_kind_name(p.kind) << "\n";
    }
    for (const auto& qd : spec.queries) {
        os << "query " << qd.name << " " << query_arity_name(qd.arity) << "\n";
    }
    for (const auto& e : spec.content_edges) {
        os << "content " << e.dst << " <- " << e.src << "\n";
    }
    for (const auto& e : spec.condition_edges) {
        os << "condition " << e.dst << " <- " << e.src << "\n";
    }
    os << "projection semantic";
    if (spec.project_pixel) os << " pixel";
    os << "\n";
    return os.str();
}

TaskSpec parse_task_spec(const std::string& text) {
    TaskSpec spec;
    spec.project_semantic = false;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw std::invalid_argument("task spec line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word) || word[0] == '#') continue;
        if (word == "task") {
            if (!(ls >> spec.name)) fail("missing task name");
        } else if (word == "prompt") {
            std::string name, kind;
            if (!(ls >> name >> kind)) fail("expected: prompt <name> <kind>");
            spec.prompts.push_back({name, stream_kind_from(kind)});
        } else if (word == "query") {
            std::string name, arity;
            if (!(ls >> name >> arity)) fail("expected: query <name> <arity>");
            spec.queries.push_back({name, query_arity_from(arity)});
        } else if (word == "content" || word == "condition") {
            std::string dst, arrow, src;
            if (!(ls >> dst >> arrow >> src) || arrow != "<-") {
                fail("expected: " + word + " <dst> <- <src>");
            }
            auto& edges = word == "content" ? spec.content_edges : spec.condition_edges;
            edges.push_back({dst, src});
        } else if (word == "projection") {
            std::string proj;
            while (ls >> proj) {
                if (proj == "semantic") {
                    spec.project_semantic = true;
                } else if (proj == "pixel") {
                    spec.project_pixel = true;
                } else {
                    fail("unknown projection: " + proj);
                }
            }
        } else {
            fail("unknown directive: " + word);
        }
    }
    spec.validate();
    return spec;
}

}  // namespace ivl
