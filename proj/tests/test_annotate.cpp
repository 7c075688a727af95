#include <doctest.h>

#include "ivl/annotate.hpp"
#include "ivl/scene_gen.hpp"

#include <json.hpp>
#include <httplib.h>

#include <atomic>
#include <thread>

using namespace ivl;
using nlohmann::json;

TEST_CASE("mock client interleaves every segment in template order") {
    Scene scene = generate_scene(11, 4, 6, 6, 4).scene;
    MockAnnotationClient mock;
    InterleavedCaption c = annotate(scene, "a plain caption", "a pseudo description", mock);
    REQUIRE(c.entities.size() == scene.segments.size());
    for (std::size_t i = 0; i < c.entities.size(); ++i) {
        CHECK(c.entities[i].ann_id == scene.segments[i].ann_id);
        CHECK(c.entities[i].phrase == scene.segments[i].phrase);
    }
}

TEST_CASE("annotate validates replies") {
    Scene scene = generate_scene(11, 4, 6, 6, 2).scene;

    struct FixedClient : AnnotationClient {
        std::string reply;
        std::string complete(const std::string&) override { return reply; }
    } client;

    // unknown ann_id
    client.reply = "[999]<ghost>";
    CHECK_THROWS_WITH_AS(annotate(scene, "c", "d", client), doctest::Contains("999"),
                         AnnotationError);

    // duplicate reference
    const std::string id = std::to_string(scene.segments[0].ann_id);
    client.reply = "[" + id + "]<a> and [" + id + "]<b>";
    CHECK_THROWS_WITH_AS(annotate(scene, "c", "d", client), doctest::Contains("twice"),
                         AnnotationError);

    // unparsable reply
    client.reply = "[12<broken";
    CHECK_THROWS_AS(annotate(scene, "c", "d", client), AnnotationError);

    // empty scene fails before any client call
    Scene empty;
    empty.scene_id = 99;
    struct BombClient : AnnotationClient {
        std::string complete(const std::string&) override {
            throw std::logic_error("should not be called");
        }
    } bomb;
    CHECK_THROWS_AS(annotate(empty, "c", "d", bomb), AnnotationError);
}

TEST_CASE("annotate retries client failures then surfaces them") {
    Scene scene = generate_scene(11, 4, 6, 6, 2).scene;
    struct FlakyClient : AnnotationClient {
        int failures_left;
        int calls = 0;
        MockAnnotationClient inner;
        std::string complete(const std::string& prompt) override {
            ++calls;
            if (failures_left-- > 0) throw ClientError("transient");
            return inner.complete(prompt);
        }
    } flaky;

    flaky.failures_left = 2;
    InterleavedCaption c = annotate(scene, "c", "d", flaky, 2);
    CHECK(c.entities.size() == 2);
    CHECK(flaky.calls == 3);

    flaky.failures_left = 5;
    flaky.calls = 0;
    CHECK_THROWS_AS(annotate(scene, "c", "d", flaky, 2), ClientError);
    CHECK(flaky.calls == 3);  // initial try plus two retries
}

TEST_CASE("annotation prompt carries all five context slots") {
    Scene scene = generate_scene(11, 4, 6, 6, 3).scene;
    const std::string prompt = annotation_prompt(scene, "GT CAPTION", "PSEUDO DESC");
    CHECK(prompt.find("GT CAPTION") != std::string::npos);
    CHECK(prompt.find("PSEUDO DESC") != std::string::npos);
    CHECK(prompt.find("bounding boxes") != std::string::npos);
    CHECK(prompt.find("segment_info") != std::string::npos);
    CHECK(prompt.find("segment_proposal") != std::string::npos);
    CHECK(prompt.find(std::to_string(scene.segments[0].ann_id)) != std::string::npos);
}

TEST_CASE("http client speaks chat-completion JSON with retry") {
    Scene scene = generate_scene(11, 4, 6, 6, 2).scene;
    MockAnnotationClient mock;
    const std::string canned = mock.complete(annotation_prompt(scene, "gt", "pd"));

    std::atomic<int> hits{0};
    std::string seen_auth, seen_prompt;
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req,
                                            httplib::Response& res) {
        const int n = ++hits;
        if (auto it = req.headers.find("Authorization"); it != req.headers.end()) {
            seen_auth = it->second;
        }
        seen_prompt = json::parse(req.body).at("messages").at(0).at("content");
        if (n == 1) {  // first call fails, the retry succeeds
            res.status = 500;
            res.set_content("overloaded", "text/plain");
            return;
        }
        const json reply{{"choices",
                          json::array({{{"message", {{"role", "assistant"},
                                                     {"content", canned}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("IVL_TEST_TOKEN", "sekrit", 1);
    HttpClientConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.token_env = "IVL_TEST_TOKEN";
    cfg.timeout_sec = 5;
    HttpAnnotationClient client(cfg);

    InterleavedCaption c = annotate(scene, "gt", "pd", client, 2);
    CHECK(c.entities.size() == 2);
    CHECK(hits.load() == 2);
    CHECK(seen_auth == "Bearer sekrit");
    CHECK(seen_prompt.find("segment_info") != std::string::npos);

    server.stop();
    worker.join();

    // unreachable endpoint surfaces a client error after retries
    HttpClientConfig dead = cfg;
    dead.base_url = "http://127.0.0.1:1";
    dead.timeout_sec = 1;
    HttpAnnotationClient dead_client(dead);
    CHECK_THROWS_AS(annotate(scene, "gt", "pd", dead_client, 1), ClientError);
}
