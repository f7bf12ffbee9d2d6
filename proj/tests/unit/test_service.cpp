#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <map>
#include <random>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "latentce/checkpoint.hpp"
#include "latentce/counterfactual.hpp"
#include "latentce/error.hpp"
#include "service.hpp"
#include "test_support.hpp"

namespace latentce::cli {
namespace {

using nlohmann::json;
using testing::TempDir;

constexpr int kCorpusSize = 100;

// Tiny corpus, model and calibrated probe written once per suite.
class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("svc");
    generate_corpus(kCorpusSize, 5, {0.5, 0.2, 0.1, 0.2}, dir() / "data");
    const auto corpus = load_corpus(dir() / "data");
    std::vector<const Image*> imgs;
    for (const auto& s : corpus) imgs.push_back(&s.image);
    TrainConfig cfg;
    cfg.total_steps = 3;
    cfg.batch_size = 4;
    cfg.latent_dim = 4;
    cfg.horizon = 50;
    cfg.seed = 1;
    save_checkpoint(train(imgs, cfg).model, dir() / "model.daec");
    Probe p;
    p.plane = Hyperplane{{0.6, -0.3, 0.2, 0.4}, 0.01};
    p.cal = fit_calibration({-0.5, 0.5, 0.0}, {0, 3, 1}, CalibrationMode::MeansOfExtremes);
    save_probe(p, (dir() / "probe.json").string());
  }
  static void TearDownTestSuite() { delete dir_; }
  static std::filesystem::path dir() { return dir_->path(); }

  static ServeOptions options() {
    ServeOptions o;
    o.corpus = dir() / "data";
    o.checkpoint = dir() / "model.daec";
    o.probe = dir() / "probe.json";
    o.latents = dir() / "latents";
    o.workers = 1;
    o.encode_steps = 6;
    o.decode_steps = 4;
    return o;
  }

  // Runs a service on an ephemeral port for the lifetime of the object.
  struct Running {
    explicit Running(const ServeOptions& o) : service(o) {
      port = service.bind_any_port("127.0.0.1");
      thread = std::thread([this] { service.listen_after_bind(); });
      client = std::make_unique<httplib::Client>("127.0.0.1", port);
      client->set_read_timeout(120, 0);
      for (int i = 0; i < 200 && !client->Get("/api/health"); ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ~Running() {
      service.stop();
      thread.join();
    }
    httplib::Result post(const std::string& path, const json& body) {
      return client->Post(path, body.dump(), "application/json");
    }
    Service service;
    int port = -1;
    std::thread thread;
    std::unique_ptr<httplib::Client> client;
  };

  static TempDir* dir_;
};
TempDir* ServiceTest::dir_ = nullptr;

void expect_api_error(const httplib::Result& r, int status, const std::string& code) {
  ASSERT_TRUE(r) << "no response";
  EXPECT_EQ(r->status, status) << r->body;
  const json j = json::parse(r->body);
  EXPECT_EQ(j["code"], code) << r->body;
  EXPECT_TRUE(j.contains("message"));
  EXPECT_TRUE(j.contains("detail"));
}

TEST_F(ServiceTest, HealthAndSamples) {
  Running s(options());
  ASSERT_GT(s.port, 0);
  auto r = s.client->Get("/api/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(json::parse(r->body)["model_loaded"], true);
  r = s.client->Get("/api/samples?split=train-dae");
  ASSERT_TRUE(r);
  EXPECT_EQ(json::parse(r->body).size(), 50u);
  r = s.client->Get("/api/sample/3");
  ASSERT_TRUE(r);
  const json j = json::parse(r->body);
  EXPECT_EQ(j["id"], 3);
  EXPECT_EQ(j["image"]["pixels"].size(), 1024u);
  EXPECT_EQ(j["split"], "train-dae");
}

TEST_F(ServiceTest, NotFoundErrorsAreJson) {
  Running s(options());
  expect_api_error(s.client->Get("/api/sample/999999"), 404, "not_found");
  expect_api_error(s.client->Get("/api/nothing-here"), 404, "not_found");
  expect_api_error(s.post("/api/encode", {{"id", 999}}), 404, "not_found");
}

TEST_F(ServiceTest, MalformedRequestsAre400) {
  Running s(options());
  expect_api_error(s.client->Post("/api/encode", "{not json", "application/json"), 400, "bad_request");
  expect_api_error(s.post("/api/encode", json::object()), 400, "bad_request");
  expect_api_error(s.post("/api/encode", {{"id", 1}, {"image", std::vector<double>(1024, 0.5)}}), 400,
                   "bad_request");
  std::vector<double> px(1024, 0.5);
  px[7] = 2.0;
  expect_api_error(s.post("/api/encode", {{"image", px}}), 400, "bad_request");
  expect_api_error(s.post("/api/encode", {{"image", std::vector<double>(10, 0.5)}}), 400, "bad_request");
  expect_api_error(s.post("/api/counterfactual", {{"id", 1}, {"target_grade", 7}}), 400, "bad_request");
  expect_api_error(s.post("/api/counterfactual", {{"id", 1}, {"sweep_grades", std::vector<double>(17, 1.0)}}),
                   400, "bad_request");
  expect_api_error(s.post("/api/counterfactual", {{"id", 1}, {"encode_steps", 5000}}), 400, "bad_request");
  expect_api_error(s.post("/api/counterfactual", {{"id", 1}, {"mode", "warp"}}), 400, "bad_request");
  expect_api_error(s.client->Get("/api/samples?split=nope"), 400, "bad_request");
  expect_api_error(s.client->Get("/api/projection?k=99"), 400, "bad_request");
}

TEST_F(ServiceTest, EncodeMatchesLibrary) {
  Running s(options());
  const auto r = s.post("/api/encode", {{"id", 4}});
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200) << r->body;
  const json j = json::parse(r->body);
  const DaeModel m = load_checkpoint(dir() / "model.daec");
  const Probe p = load_probe((dir() / "probe.json").string());
  const auto corpus = load_corpus(dir() / "data");
  const nn::Tensor z = encode_semantic(m, image_to_batch(corpus[4].image));
  const Vector w(z.data(), z.data() + z.size());
  EXPECT_EQ(j["z_sem"].get<Vector>(), w);
  EXPECT_EQ(j["distance"].get<double>(), signed_distance(w, p.plane));
  EXPECT_EQ(j["id"], 4);

  const auto up = s.post("/api/encode", {{"image", {{"dims", {32, 32}}, {"pixels", corpus[4].image.pixels}}}});
  ASSERT_TRUE(up);
  const json u = json::parse(up->body);
  EXPECT_TRUE(u["id"].is_null());
  EXPECT_EQ(u["z_sem"], j["z_sem"]);
}

TEST_F(ServiceTest, ReflectionNegatesDistanceAndRepeatsExactly) {
  Running s(options());
  const json req = {{"id", 2}, {"mode", "reflect"}};
  const auto a = s.post("/api/counterfactual", req);
  const auto b = s.post("/api/counterfactual", req);
  ASSERT_TRUE(a && b);
  ASSERT_EQ(a->status, 200) << a->body;
  EXPECT_EQ(a->body, b->body);
  const json j = json::parse(a->body);
  EXPECT_NEAR(j["distance_edited"][0].get<double>(), -j["distance_original"].get<double>(), 1e-9);
  EXPECT_EQ(j["frames"].size(), 1u);
  EXPECT_EQ(j["frames"][0]["image"]["pixels"].size(), 1024u);
  EXPECT_EQ(j["reconstruction"]["pixels"].size(), 1024u);
}

TEST_F(ServiceTest, SweepHitsRequestedScores) {
  Running s(options());
  const auto r = s.post("/api/counterfactual", {{"id", 5}, {"sweep_grades", {0, 1, 2, 3}}});
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200) << r->body;
  const json j = json::parse(r->body);
  EXPECT_EQ(j["mode"], "sweep");
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(j["score_edited"][k].get<double>(), k, 1e-9);
}

TEST_F(ServiceTest, CalibrationAndProjection) {
  Running s(options());
  auto r = s.client->Get("/api/calibration");
  ASSERT_TRUE(r);
  json j = json::parse(r->body);
  ASSERT_EQ(j["points"].size(), 64u);
  for (std::size_t i = 1; i < 64; ++i)
    EXPECT_GT(j["points"][i]["score"].get<double>(), j["points"][i - 1]["score"].get<double>());
  EXPECT_EQ(j["mode"], "means-of-extremes");
  r = s.client->Get("/api/projection?split=test&k=2");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200) << r->body;
  j = json::parse(r->body);
  EXPECT_EQ(j["points"].size(), 20u);
  EXPECT_EQ(j["points"][0]["coords"].size(), 2u);
}

TEST_F(ServiceTest, CorsHeadersAndPreflight) {
  ServeOptions o = options();
  o.cors_origin = "http://localhost:5173";
  Running s(o);
  const auto pre = s.client->Options("/api/counterfactual");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
  EXPECT_EQ(pre->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
  EXPECT_NE(pre->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
  const auto get = s.client->Get("/api/health");
  ASSERT_TRUE(get);
  EXPECT_EQ(get->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
}

TEST_F(ServiceTest, StartsWithoutModelAndAnswers503) {
  ServeOptions o = options();
  o.checkpoint = dir() / "missing.daec";
  Running s(o);
  EXPECT_FALSE(s.service.model_loaded());
  EXPECT_FALSE(s.service.load_error().empty());
  const auto h = s.client->Get("/api/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(json::parse(h->body)["model_loaded"], false);
  expect_api_error(s.post("/api/encode", {{"id", 1}}), 503, "not_ready");
  expect_api_error(s.post("/api/counterfactual", {{"id", 1}}), 503, "not_ready");
  expect_api_error(s.client->Get("/api/calibration"), 503, "not_ready");
  const auto samples = s.client->Get("/api/samples");
  ASSERT_TRUE(samples);
  EXPECT_EQ(samples->status, 200);
}

TEST_F(ServiceTest, RequestsNeverModifyArtifacts) {
  std::map<std::string, std::uint64_t> before;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir()))
    if (e.is_regular_file()) before[e.path().string()] = file_hash(e.path());
  {
    Running s(options());
    s.post("/api/counterfactual", {{"id", 1}, {"target_grade", 2}});
    s.post("/api/encode", {{"id", 1}});
    s.client->Get("/api/projection");
  }
  std::map<std::string, std::uint64_t> after;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir()))
    if (e.is_regular_file()) after[e.path().string()] = file_hash(e.path());
  EXPECT_EQ(before, after);
}

TEST(JobGate, AdmitsWaitersInArrivalOrder) {
  JobGate gate(1);
  gate.acquire();
  std::mutex mu;
  std::vector<int> order;
  std::vector<std::thread> threads;
  for (int i = 0; i < 5; ++i) {
    threads.emplace_back([&, i] {
      gate.acquire();
      {
        std::lock_guard lock(mu);
        order.push_back(i);
      }
      gate.release();
    });
    while (gate.waiting() < i + 1) std::this_thread::yield();
  }
  gate.release();
  for (auto& t : threads) t.join();
  EXPECT_EQ(order, (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_EQ(gate.active(), 0);
}

TEST(JobGate, BoundsConcurrency) {
  JobGate gate(2);
  std::atomic<int> inside{0}, peak{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&] {
      JobSlot slot(gate);
      const int now = ++inside;
      int p = peak.load();
      while (now > p && !peak.compare_exchange_weak(p, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --inside;
    });
  for (auto& t : threads) t.join();
  EXPECT_LE(peak.load(), 2);
  EXPECT_GE(peak.load(), 1);
}

}  // namespace
}  // namespace latentce::cli
