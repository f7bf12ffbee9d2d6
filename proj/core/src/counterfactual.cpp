#include "latentce/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "latentce/checkpoint.hpp"
#include "latentce/error.hpp"

namespace latentce {

using nlohmann::json;

namespace {

Vector along(const Vector& w, const Vector& u, double step) {
  Vector out = w;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += step * u[k];
  return out;
}

json image_json(const Image& img) {
  return {{"dims", {img.height, img.width}}, {"pixels", img.pixels}};
}

std::string format_value(double v) {
  char buf[32];
  if (v == std::floor(v) && std::abs(v) < 1e6)
    std::snprintf(buf, sizeof buf, "%d", static_cast<int>(v));
  else
    std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

Vector reflect(const Vector& w, const Hyperplane& h) {
  return along(w, unit_normal(h), -2.0 * signed_distance(w, h));
}

Vector shift_to_grade(const Vector& w, const Hyperplane& h, const Calibration& cal, double target,
                      bool allow_extrapolation) {
  const double d_target = invert_calibration(cal, target, allow_extrapolation);
  return along(w, unit_normal(h), d_target - signed_distance(w, h));
}

Vector shift_by_distance(const Vector& w, const Hyperplane& h, double offset) {
  if (w.size() != h.n.size()) throw ShapeError("latent and hyperplane dimensions differ");
  return along(w, unit_normal(h), offset);
}

std::vector<Vector> sweep(const Vector& w, const Hyperplane& h, const Calibration& cal,
                          std::span<const double> grades, bool allow_extrapolation) {
  std::vector<Vector> out;
  for (double g : grades) {
    const double target = allow_extrapolation ? g : std::clamp(g, 0.0, cal.gmax);
    out.push_back(shift_to_grade(w, h, cal, target, allow_extrapolation));
  }
  return out;
}

std::vector<Vector> sweep_offsets(const Vector& w, const Hyperplane& h, std::span<const double> offsets) {
  std::vector<Vector> out;
  for (double o : offsets) out.push_back(shift_by_distance(w, h, o));
  return out;
}

std::string ce_mode_name(CeMode m) {
  switch (m) {
    case CeMode::Reflect: return "reflect";
    case CeMode::TargetGrade: return "target-grade";
    case CeMode::Sweep: return "sweep";
    case CeMode::Offsets: return "offsets";
  }
  return "?";
}

CeMode parse_ce_mode(const std::string& name) {
  for (auto m : {CeMode::Reflect, CeMode::TargetGrade, CeMode::Sweep, CeMode::Offsets})
    if (ce_mode_name(m) == name) return m;
  throw DomainError("unknown counterfactual mode '" + name + "'");
}

void validate_request(const CounterfactualRequest& req, double gmax) {
  if (req.encode_steps < 1 || req.decode_steps < 1) throw DomainError("step counts must be at least 1");
  auto check_grades = [&] {
    for (double g : req.grades) {
      if (!std::isfinite(g)) throw DomainError("target grades must be finite");
      if (!req.allow_extrapolation && (g < 0.0 || g > gmax))
        throw DomainError("target grade " + format_value(g) + " outside [0, " + format_value(gmax) +
                          "]; pass allow_extrapolation to permit it");
    }
  };
  switch (req.mode) {
    case CeMode::Reflect:
      break;
    case CeMode::TargetGrade:
      if (req.grades.size() != 1) throw DomainError("target-grade mode needs exactly one grade");
      check_grades();
      break;
    case CeMode::Sweep:
      // Out-of-range sweep grades are clamped later unless extrapolating.
      if (req.grades.size() < 2) throw DomainError("sweep mode needs at least two grades");
      for (double g : req.grades)
        if (!std::isfinite(g)) throw DomainError("sweep grades must be finite");
      break;
    case CeMode::Offsets:
      if (req.offsets.size() < 2) throw DomainError("offset sweep needs at least two offsets");
      for (double o : req.offsets)
        if (!std::isfinite(o)) throw DomainError("offsets must be finite");
      break;
  }
}

std::vector<CounterfactualResult> generate_ce(const DaeModel& model, const Probe& probe,
                                              std::span<const Image* const> sources,
                                              const CounterfactualRequest& req) {
  if (!probe.cal) throw ConfigError("probe has no calibration; run calibrate first");
  const Calibration& cal = *probe.cal;
  const Hyperplane& h = probe.plane;
  if (static_cast<int>(h.n.size()) != model.latent_dim)
    throw ConfigError("probe dimension " + std::to_string(h.n.size()) + " does not match model latent dimension " +
                      std::to_string(model.latent_dim));
  validate_request(req, cal.gmax);
  if (sources.empty()) return {};

  const Encoding enc = encode(model, sources, req.encode_steps);
  const int d = model.latent_dim;
  constexpr std::size_t px = nn::kImageSize * nn::kImageSize;

  std::vector<CounterfactualResult> results(sources.size());
  std::vector<Vector> latents;  // reconstruction first, then frames, per source
  std::vector<int> owner;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    auto& r = results[i];
    r.mode = req.mode;
    r.latent.assign(enc.z.data() + i * d, enc.z.data() + (i + 1) * d);
    r.distance = signed_distance(r.latent, h);
    r.score = calibrated_score(cal, r.distance);
    r.grade = grade_from_score(r.score, cal.gmax);
    r.x_T = nn::Tensor({1, 1, nn::kImageSize, nn::kImageSize},
                       std::vector<float>(enc.x_T.data() + i * px, enc.x_T.data() + (i + 1) * px));
    std::vector<Vector> edited;
    std::vector<double> targets;
    switch (req.mode) {
      case CeMode::Reflect:
        edited = {reflect(r.latent, h)};
        targets = {-r.distance};
        break;
      case CeMode::TargetGrade:
      case CeMode::Sweep:
        edited = sweep(r.latent, h, cal, req.grades, req.allow_extrapolation);
        for (double g : req.grades)
          targets.push_back(req.allow_extrapolation ? g : std::clamp(g, 0.0, cal.gmax));
        break;
      case CeMode::Offsets:
        edited = sweep_offsets(r.latent, h, req.offsets);
        targets = req.offsets;
        break;
    }
    latents.push_back(r.latent);
    owner.push_back(static_cast<int>(i));
    for (std::size_t k = 0; k < edited.size(); ++k) {
      CounterfactualFrame f;
      f.target = targets[k];
      f.latent = edited[k];
      f.distance = signed_distance(f.latent, h);
      f.score = calibrated_score(cal, f.distance);
      f.grade = grade_from_score(f.score, cal.gmax);
      latents.push_back(f.latent);
      owner.push_back(static_cast<int>(i));
      r.frames.push_back(std::move(f));
    }
  }

  // Every decode of source i starts from the same copy of its x_T.
  const int total = static_cast<int>(latents.size());
  nn::Tensor z({total, d});
  nn::Tensor x_T({total, 1, nn::kImageSize, nn::kImageSize});
  for (int j = 0; j < total; ++j) {
    for (int k = 0; k < d; ++k) z[j * d + k] = static_cast<float>(latents[j][k]);
    const auto& src = results[owner[j]].x_T;
    std::copy(src.data(), src.data() + px, x_T.data() + j * px);
  }
  const std::vector<Image> images = decode(model, z, x_T, req.decode_steps);
  std::size_t j = 0;
  for (auto& r : results) {
    r.reconstruction = images[j++];
    for (auto& f : r.frames) f.image = images[j++];
  }
  return results;
}

CounterfactualResult generate_ce(const DaeModel& model, const Probe& probe, const Image& source,
                                 const CounterfactualRequest& req) {
  const Image* p = &source;
  return generate_ce(model, probe, std::span<const Image* const>(&p, 1), req).front();
}

std::string frame_label(const CounterfactualResult& r, std::size_t frame) {
  if (r.mode == CeMode::Reflect) return "reflect";
  if (r.mode == CeMode::Offsets) return "offset" + format_value(r.frames.at(frame).target);
  return format_value(r.frames.at(frame).target);
}

std::string ce_result_json(const CounterfactualResult& r, int id, bool inline_images) {
  json frames = json::array();
  json distances = json::array(), scores = json::array();
  for (std::size_t k = 0; k < r.frames.size(); ++k) {
    const auto& f = r.frames[k];
    json fj = {{"label", frame_label(r, k)},
               {"target", f.target},
               {"latent_edited", f.latent},
               {"distance_edited", f.distance},
               {"score_edited", f.score},
               {"grade_edited", f.grade}};
    if (inline_images) fj["image"] = image_json(f.image);
    frames.push_back(std::move(fj));
    distances.push_back(f.distance);
    scores.push_back(f.score);
  }
  json j = {{"id", id},
            {"mode", ce_mode_name(r.mode)},
            {"latent_original", r.latent},
            {"distance_original", r.distance},
            {"score_original", r.score},
            {"grade_original", r.grade},
            {"distance_edited", distances},
            {"score_edited", scores},
            {"x_T_fnv", hex64(fnv1a(r.x_T.data(), r.x_T.size() * sizeof(float)))},
            {"frames", frames}};
  if (inline_images) j["reconstruction"] = image_json(r.reconstruction);
  return j.dump(2);
}

std::vector<std::filesystem::path> write_ce_outputs(const CounterfactualResult& r, int id,
                                                    const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  const std::string stem = "ce_" + std::to_string(id);
  write_file_atomic(dir / (stem + ".json"), ce_result_json(r, id, false) + "\n");
  written.push_back(dir / (stem + ".json"));
  write_pgm(r.reconstruction, dir / (stem + "_recon.pgm"));
  written.push_back(dir / (stem + "_recon.pgm"));
  for (std::size_t k = 0; k < r.frames.size(); ++k) {
    const auto path = dir / (stem + "_" + frame_label(r, k) + ".pgm");
    write_pgm(r.frames[k].image, path);
    written.push_back(path);
  }
  return written;
}

}  // namespace latentce
