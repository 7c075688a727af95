#pragma once

#include "ivl/caption.hpp"
#include "ivl/scene.hpp"

#include <stdexcept>
#include <string>

namespace ivl {

// Transport or endpoint failure; annotate() retries these.
class ClientError : public std::runtime_error {
public:
    explicit ClientError(const std::string& msg) : std::runtime_error(msg) {}
};

// Reply that parsed or validated badly; not retried.
class AnnotationError : public std::runtime_error {
public:
    explicit AnnotationError(const std::string& msg) : std::runtime_error(msg) {}
};

// A caption engine: one text prompt in, one caption text out.
class AnnotationClient {
public:
    virtual ~AnnotationClient() = default;
    virtual std::string complete(const std::string& prompt) = 0;
};

// Offline deterministic stand-in: reads the segment_info block out of the
// prompt and interleaves every segment's description with connectives.
class MockAnnotationClient : public AnnotationClient {
public:
    std::string complete(const std::string& prompt) override;
};

// Generic chat-completion JSON endpoint. The bearer token is read from the
// configured environment variable at request time.
struct HttpClientConfig {
    std::string base_url;  // e.g. "http://127.0.0.1:8080"
    std::string path = "/v1/chat/completions";
    std::string model = "caption-engine";
    std::string token_env = "IVL_API_TOKEN";
    int timeout_sec = 30;
};

class HttpAnnotationClient : public AnnotationClient {
public:
    explicit HttpAnnotationClient(HttpClientConfig cfg) : cfg_(std::move(cfg)) {}
    std::string complete(const std::string& prompt) override;

private:
    HttpClientConfig cfg_;
};

// The data-engine prompt with its GT / PD / Box / SI / SP slots filled from
// the scene annotations.
std::string annotation_prompt(const Scene& scene, const std::string& gt_caption,
                              const std::string& pseudo_description);

// Prompt -> client -> parsed, validated caption. Client failures are retried
// up to max_retries before surfacing; invalid replies fail immediately with
// the validation reasons.
InterleavedCaption annotate(const Scene& scene, const std::string& gt_caption,
                            const std::string& pseudo_description, AnnotationClient& client,
                            int max_retries = 2);

}  // namespace ivl
