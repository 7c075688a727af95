#pragma once

#include "ivl/streams.hpp"

#include <string>
#include <vector>

namespace ivl {

// How many rows a query stream samples from its pool.
enum class QueryArity { ObjectPool, PerClass, PerEntity, PerInteraction, Single };

std::string query_arity_name(QueryArity a);
QueryArity query_arity_from(const std::string& s);
QueryArity default_arity_for(const std::string& query_name);

struct PromptDecl {
    std::string name;  // "p.image"
    StreamKind kind = StreamKind::Image;
    bool operator==(const PromptDecl&) const = default;
};

struct QueryDecl {
    std::string name;  // "q.entity"
    QueryArity arity = QueryArity::ObjectPool;
    bool operator==(const QueryDecl&) const = default;
};

// dst attends src
struct Edge {
    std::string dst, src;
    bool operator==(const Edge&) const = default;
};

struct TaskSpec {
    std::string name;
    std::vector<PromptDecl> prompts;
    std::vector<QueryDecl> queries;
    std::vector<Edge> content_edges;    // query <- prompt only
    std::vector<Edge> condition_edges;  // beyond the default self blocks
    bool project_semantic = true;
    bool project_pixel = false;

    bool is_prompt(const std::string& name) const;
    bool is_query(const std::string& name) const;
    const PromptDecl& prompt(const std::string& name) const;
    const QueryDecl& query(const std::string& name) const;

    // Canonical stream order: prompts first, then queries.
    std::vector<std::string> stream_order() const;

    void validate() const;

    bool operator==(const TaskSpec&) const = default;
};

// The six built-in task definitions.
std::vector<TaskSpec> builtin_tasks();
const TaskSpec& builtin_task(const std::string& name);

// Declarative text format so tasks can be added without code changes.
std::string serialize_task_spec(const TaskSpec& spec);
TaskSpec parse_task_spec(const std::string& text);

}  // namespace ivl
