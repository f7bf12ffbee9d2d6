#include "service.hpp"

#include <pthread.h>
#include <signal.h>

#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "latentce/counterfactual.hpp"
#include "latentce/dae.hpp"
#include "latentce/error.hpp"
#include "latentce/pipeline.hpp"
#include "latentce/synthcorpus.hpp"

namespace latentce::cli {

using nlohmann::json;

JobGate::JobGate(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigError("worker count must be at least 1");
}

void JobGate::acquire() {
  std::unique_lock lock(mu_);
  const std::uint64_t ticket = next_ticket_++;
  cv_.wait(lock, [&] { return ticket == admitted_ && active_ < capacity_; });
  ++admitted_;
  ++active_;
  cv_.notify_all();
}

void JobGate::release() {
  {
    std::lock_guard lock(mu_);
    --active_;
  }
  cv_.notify_all();
}

int JobGate::active() const {
  std::lock_guard lock(mu_);
  return active_;
}

int JobGate::waiting() const {
  std::lock_guard lock(mu_);
  return static_cast<int>(next_ticket_ - admitted_);
}

namespace {

constexpr int kCalibrationPoints = 64;
constexpr std::size_t kMaxFrames = 16;
constexpr std::size_t kMaxBody = 1 << 20;

struct ApiFailure {
  int status;
  std::string code;
  std::string message;
  std::string detail;
};

[[noreturn]] void fail(int status, const std::string& code, const std::string& message,
                       const std::string& detail = "") {
  throw ApiFailure{status, code, message, detail};
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                const std::string& detail) {
  res.status = status;
  res.set_content(json{{"code", code}, {"message", message}, {"detail", detail}}.dump(), "application/json");
}

void send_json(httplib::Response& res, const json& j) { res.set_content(j.dump(), "application/json"); }

json parse_body(const httplib::Request& req) {
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception& e) {
    fail(400, "bad_request", "request body is not valid JSON", e.what());
  }
  if (!body.is_object()) fail(400, "bad_request", "request body must be a JSON object");
  return body;
}

Image parse_image(const json& j) {
  const json* pixels = &j;
  int height = 32, width = 32;
  if (j.is_object()) {
    if (!j.contains("pixels")) fail(400, "bad_request", "image object needs 'pixels'");
    pixels = &j["pixels"];
    if (j.contains("dims")) {
      const json& dims = j["dims"];
      if (!dims.is_array() || dims.size() != 2 || !dims[0].is_number_integer() || !dims[1].is_number_integer())
        fail(400, "bad_request", "image dims must be [height, width]");
      height = dims[0].get<int>();
      width = dims[1].get<int>();
    }
  }
  if (height != 32 || width != 32) fail(400, "bad_request", "images must be 32x32");
  if (!pixels->is_array() || pixels->size() != 1024)
    fail(400, "bad_request", "image must carry 1024 row-major pixels");
  Image img{32, 32, std::vector<float>(1024)};
  for (std::size_t i = 0; i < 1024; ++i) {
    const json& v = (*pixels)[i];
    if (!v.is_number()) fail(400, "bad_request", "pixel values must be numbers");
    const double p = v.get<double>();
    if (!std::isfinite(p) || p < 0.0 || p > 1.0)
      fail(400, "bad_request", "pixel values must lie in [0, 1]", "index " + std::to_string(i));
    img.pixels[i] = static_cast<float>(p);
  }
  return img;
}

Split query_split(const httplib::Request& req) {
  const std::string name = req.has_param("split") ? req.get_param_value("split") : "test";
  try {
    return parse_split(name);
  } catch (const Error& e) {
    fail(400, "bad_request", e.what());
  }
}

json sample_summary(const SyntheticSample& s) { return {{"id", s.id}, {"grade", s.grade}, {"g", s.g}}; }

}  // namespace

struct Service::Impl {
  ServeOptions opt;
  std::vector<SyntheticSample> corpus;
  std::optional<DaeModel> model;
  std::optional<Probe> probe;
  std::string load_error;
  JobGate gate;
  std::mutex latents_mu;
  std::map<Split, LatentTable> latents;
  httplib::Server server;

  explicit Impl(const ServeOptions& o) : opt(o), gate(o.workers) {
    if (o.encode_steps < 1 || o.decode_steps < 1) throw ConfigError("step counts must be at least 1");
    corpus = load_corpus(o.corpus);
    try {
      Probe p = load_probe(o.probe.string());
      if (!p.cal) throw ConfigError("probe " + o.probe.string() + " has no calibration");
      DaeModel m = load_checkpoint(o.checkpoint);
      if (static_cast<int>(p.plane.n.size()) != m.latent_dim)
        throw ConfigError("probe dimension does not match the checkpoint latent size");
      model = std::move(m);
      probe = std::move(p);
    } catch (const Error& e) {
      load_error = e.what();
    }
    routes();
  }

  bool ready() const { return model.has_value() && probe.has_value(); }

  void require_model() const {
    if (!ready()) fail(503, "not_ready", "model not loaded", load_error);
  }

  const SyntheticSample& sample(long long id) const {
    if (id < 0 || id >= static_cast<long long>(corpus.size()))
      fail(404, "not_found", "unknown sample id", std::to_string(id));
    return corpus[static_cast<std::size_t>(id)];
  }

  // Source image from {"id": n} or {"image": ...}; id is empty for uploads.
  std::pair<Image, std::optional<int>> source(const json& body) const {
    const bool has_id = body.contains("id"), has_image = body.contains("image");
    if (has_id == has_image) fail(400, "bad_request", "provide exactly one of 'id' or 'image'");
    if (has_image) return {parse_image(body["image"]), std::nullopt};
    if (!body["id"].is_number_integer()) fail(400, "bad_request", "'id' must be an integer");
    const auto& s = sample(body["id"].get<long long>());
    return {s.image, s.id};
  }

  const LatentTable& split_latents(Split split) {
    std::lock_guard lock(latents_mu);
    if (auto it = latents.find(split); it != latents.end()) return it->second;
    LatentTable table;
    if (!opt.latents.empty() && std::filesystem::exists(latent_cache_path(opt.latents, split))) {
      table = load_latents(opt.latents, {split});
    } else {
      require_model();
      std::vector<const Image*> images;
      std::vector<int> ids;
      for (const auto* s : select_split(corpus, split)) {
        images.push_back(&s->image);
        ids.push_back(s->id);
      }
      JobSlot slot(gate);
      const auto records = embed_images(*model, images, ids);
      table = to_table(records);
    }
    return latents.emplace(split, std::move(table)).first->second;
  }

  template <class F>
  httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const ApiFailure& e) {
        send_error(res, e.status, e.code, e.message, e.detail);
      } catch (const json::exception& e) {
        send_error(res, 400, "bad_request", "malformed request field", e.what());
      } catch (const DomainError& e) {
        send_error(res, 400, "bad_request", e.what(), "");
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", "internal error", e.what());
      }
    };
  }

  void routes() {
    server.set_payload_max_length(kMaxBody);
    server.set_default_headers({{"Access-Control-Allow-Origin", opt.cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      if (res.status == 404)
        send_error(res, 404, "not_found", "no such endpoint", req.method + " " + req.path);
      else if (res.status < 500)
        send_error(res, res.status, "bad_request", "request rejected", httplib::status_message(res.status));
      else
        send_error(res, res.status, "internal", "internal error", httplib::status_message(res.status));
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "unknown exception";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      send_error(res, 500, "internal", "internal error", what);
    });
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/api/health", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, {{"status", "ok"}, {"model_loaded", ready()}});
    }));

    server.Get("/api/samples", guarded([this](const httplib::Request& req, httplib::Response& res) {
      json out = json::array();
      for (const auto* s : select_split(corpus, query_split(req))) out.push_back(sample_summary(*s));
      send_json(res, out);
    }));

    server.Get(R"(/api/sample/(-?\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      long long id = -1;
      try {
        id = std::stoll(req.matches[1].str());
      } catch (const std::exception&) {
        fail(404, "not_found", "unknown sample id", req.matches[1].str());
      }
      const auto& s = sample(id);
      json j = sample_summary(s);
      j["split"] = std::string(split_name(s.split));
      j["image"] = {{"dims", {s.image.height, s.image.width}}, {"pixels", s.image.pixels}};
      send_json(res, j);
    }));

    server.Post("/api/encode", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      auto [image, id] = source(body);
      require_model();
      const nn::Tensor z = encode_semantic(*model, image_to_batch(image));
      const Vector w(z.data(), z.data() + z.size());
      const GradePrediction p = predict_grade(w, probe->plane, *probe->cal);
      json j = {{"z_sem", w}, {"distance", p.distance}, {"score", p.score}, {"grade", p.grade}};
      j["id"] = id ? json(*id) : json(nullptr);
      send_json(res, j);
    }));

    server.Post("/api/counterfactual", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      auto [image, id] = source(body);
      CounterfactualRequest ce;
      ce.encode_steps = body.value("encode_steps", opt.encode_steps);
      ce.decode_steps = body.value("decode_steps", opt.decode_steps);
      ce.allow_extrapolation = body.value("allow_extrapolation", false);
      if (body.contains("target_grade")) ce.grades = {body["target_grade"].get<double>()};
      if (body.contains("sweep_grades")) ce.grades = body["sweep_grades"].get<std::vector<double>>();
      if (body.contains("offsets")) ce.offsets = body["offsets"].get<std::vector<double>>();
      if (body.contains("mode")) {
        ce.mode = parse_ce_mode(body["mode"].get<std::string>());
      } else if (!ce.offsets.empty()) {
        ce.mode = CeMode::Offsets;
      } else {
        ce.mode = ce.grades.empty() ? CeMode::Reflect
                                    : (body.contains("sweep_grades") ? CeMode::Sweep : CeMode::TargetGrade);
      }
      if (ce.grades.size() > kMaxFrames || ce.offsets.size() > kMaxFrames)
        fail(400, "bad_request", "at most " + std::to_string(kMaxFrames) + " frames per request");
      const int horizon = model ? model->schedule.T : kDefaultHorizon;
      if (ce.encode_steps > horizon || ce.decode_steps > horizon)
        fail(400, "bad_request", "step counts cannot exceed the diffusion horizon");
      require_model();
      validate_request(ce, probe->cal->gmax);
      CounterfactualResult result;
      {
        JobSlot slot(gate);
        result = generate_ce(*model, *probe, image, ce);
      }
      json j = json::parse(ce_result_json(result, id.value_or(-1), true));
      if (!id) j["id"] = nullptr;
      send_json(res, j);
    }));

    server.Get("/api/calibration", guarded([this](const httplib::Request&, httplib::Response& res) {
      require_model();
      const Calibration& cal = *probe->cal;
      double lo = cal.d_min, hi = cal.d_max;
      if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
      }
      json points = json::array();
      for (int i = 0; i < kCalibrationPoints; ++i) {
        const double d = lo + (hi - lo) * i / (kCalibrationPoints - 1);
        points.push_back({{"d", d}, {"score", calibrated_score(cal, d)}});
      }
      send_json(res, {{"mode", calibration_mode_name(cal.mode)},
                      {"degree", cal.degree},
                      {"coeffs", cal.coeffs},
                      {"gmax", cal.gmax},
                      {"d_min", cal.d_min},
                      {"d_max", cal.d_max},
                      {"points", points}});
    }));

    server.Get("/api/projection", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const Split split = query_split(req);
      int k = 2;
      if (req.has_param("k")) {
        try {
          k = std::stoi(req.get_param_value("k"));
        } catch (const std::exception&) {
          fail(400, "bad_request", "k must be an integer");
        }
      }
      const auto samples = select_split(corpus, split);
      const LatentTable& table = split_latents(split);
      const int dim = table.empty() ? 0 : static_cast<int>(table.begin()->second.size());
      if (k < 1 || k > dim) fail(400, "bad_request", "k must lie in [1, " + std::to_string(dim) + "]");
      send_json(res, projection_json(samples, table, k, std::string(split_name(split))));
    }));
  }
};

Service::Service(const ServeOptions& options) : impl_(std::make_unique<Impl>(options)) {}
Service::~Service() { stop(); }

bool Service::model_loaded() const { return impl_->ready(); }
const std::string& Service::load_error() const { return impl_->load_error; }

int Service::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool Service::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }
bool Service::listen_after_bind() { return impl_->server.listen_after_bind(); }
void Service::stop() {
  if (impl_) impl_->server.stop();
}

int run_serve(const ServeOptions& o) {
  // Route SIGINT/SIGTERM to a waiter thread so shutdown runs outside a handler.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Service service(o);
  if (!service.model_loaded()) std::cerr << "warning: model not loaded: " << service.load_error() << "\n";
  if (!service.bind(o.host, o.port))
    throw IoError("cannot bind " + o.host + ":" + std::to_string(o.port));
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  std::cout << "serving on http://" << o.host << ":" << o.port << " (workers " << o.workers << ")" << std::endl;
  const bool ok = service.listen_after_bind();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return ok ? 0 : 1;
}

}  // namespace latentce::cli
