#include "commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <json.hpp>

#include "latentce/checkpoint.hpp"
#include "latentce/counterfactual.hpp"
#include "latentce/dae.hpp"
#include "latentce/error.hpp"
#include "latentce/pipeline.hpp"
#include "latentce/synthcorpus.hpp"

namespace latentce::cli {

using nlohmann::json;

fs::path default_home() {
  if (const char* env = std::getenv("LATENT_CE_HOME"); env && *env) return env;
  return "latentce_home";
}

namespace {

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

std::vector<const Image*> split_images(const std::vector<SyntheticSample>& corpus, Split split,
                                       std::vector<int>* ids = nullptr) {
  std::vector<const Image*> out;
  for (const auto* s : select_split(corpus, split)) {
    out.push_back(&s->image);
    if (ids) ids->push_back(s->id);
  }
  return out;
}

}  // namespace

int run_generate(const GenerateOptions& o) {
  if (o.fractions.size() != 4) throw DomainError("--fractions needs four values");
  const std::array<double, 4> fr{o.fractions[0], o.fractions[1], o.fractions[2], o.fractions[3]};
  const auto m = generate_corpus(o.n, o.seed, fr, o.out);
  std::cout << "wrote " << m.samples.size() << " samples to " << m.manifest_path.string() << "\n";
  return 0;
}

int run_train(const TrainOptions& o) {
  const auto corpus = load_corpus(o.corpus);
  const auto images = split_images(corpus, Split::TrainDae);
  TrainConfig cfg;
  cfg.total_steps = o.steps;
  cfg.batch_size = o.batch;
  cfg.lr = o.lr;
  cfg.seed = o.seed;
  cfg.latent_dim = o.latent_dim;
  cfg.checkpoint_every = o.checkpoint_every;
  cfg.checkpoint_path = o.checkpoint;
  const auto progress = [&](const LossPoint& p) {
    if (!o.quiet && (p.step + cfg.trace_every) % 1000 == 0)
      std::cerr << "step " << p.step + cfg.trace_every << "  loss " << std::setprecision(5)
                << p.window_mean << "\n";
  };
  const TrainResult r = train(images, cfg, progress);
  save_checkpoint(r.model, o.checkpoint);

  json trace = json::array();
  for (const auto& p : r.trace)
    trace.push_back({{"step", p.step}, {"loss", p.loss}, {"window_mean", p.window_mean}});
  write_json(o.trace, {{"steps", o.steps},
                       {"batch_size", o.batch},
                       {"lr", o.lr},
                       {"seed", o.seed},
                       {"train_images", images.size()},
                       {"trace", trace}});
  // Wall-clock time is kept apart so the trace stays reproducible.
  fs::path timing = o.trace;
  timing.replace_extension(".runtime.json");
  write_json(timing, {{"seconds", r.seconds}, {"cpu_seconds", r.cpu_seconds}, {"steps", o.steps}});
  std::cout << "trained " << o.steps << " steps in " << std::fixed << std::setprecision(1)
            << r.seconds << " s; checkpoint " << o.checkpoint.string() << "\n";
  return 0;
}

int run_embed(const EmbedOptions& o) {
  const auto corpus = load_corpus(o.corpus);
  const DaeModel model = load_checkpoint(o.checkpoint);
  std::vector<Split> splits;
  if (o.splits.empty())
    splits.assign(kAllSplits.begin(), kAllSplits.end());
  else
    for (const auto& name : o.splits) splits.push_back(parse_split(name));
  for (Split split : splits) {
    std::vector<int> ids;
    const auto images = split_images(corpus, split, &ids);
    const auto records = embed_images(model, images, ids);
    write_latent_cache(latent_cache_path(o.out, split), records);
    std::cout << split_name(split) << ": " << records.size() << " latents -> "
              << latent_cache_path(o.out, split).string() << "\n";
  }
  return 0;
}

int run_fit_probe(const FitProbeOptions& o) {
  const auto corpus = load_corpus(o.corpus);
  const auto latents = load_latents(o.latents, {Split::TrainProbe});
  const auto data = probe_dataset(select_split(corpus, Split::TrainProbe), latents);
  ProbeFitOptions opt;
  opt.kind = o.kind;
  opt.lambda = o.lambda;
  opt.epochs = o.epochs;
  const Probe probe = fit_probe(data, opt);
  std::vector<double> dist;
  for (const auto& w : data.w) dist.push_back(signed_distance(w, probe.plane));
  save_probe(probe, o.out.string());
  std::cout << o.kind << " probe on " << data.w.size() << " latents, training AUC " << std::setprecision(4)
            << roc_auc(dist, data.y) << " -> " << o.out.string() << "\n";
  return 0;
}

int run_calibrate(const CalibrateOptions& o) {
  const auto corpus = load_corpus(o.corpus);
  const Split split = parse_split(o.split);
  const auto latents = load_latents(o.latents, {split});
  Probe probe = load_probe(o.probe.string());
  probe.cal = calibrate_probe(probe.plane, select_split(corpus, split), latents,
                              parse_calibration_mode(o.mode), o.degree);
  save_probe(probe, o.out.string());
  std::cout << o.mode << " calibration on " << o.split << " -> " << o.out.string() << "\n";
  return 0;
}

int run_evaluate(const EvaluateOptions& o) {
  const auto corpus = load_corpus(o.corpus);
  const Split split = parse_split(o.split);
  const auto latents = load_latents(o.latents, {split});
  const Probe probe = load_probe(o.probe.string());
  const auto samples = select_split(corpus, split);
  EvalReport report = evaluate_predictions(predict_split(probe, samples, latents), o.split);

  if (!o.checkpoint.empty()) {
    const DaeModel model = load_checkpoint(o.checkpoint);
    std::vector<const Image*> images;
    for (const auto* s : samples) {
      if (static_cast<int>(images.size()) >= o.recon_limit) break;
      images.push_back(&s->image);
    }
    const Encoding enc = encode(model, images, o.encode_steps);
    const auto recon = decode(model, enc.z, enc.x_T, o.decode_steps);
    double p = 0.0, q = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      p += psnr(*images[i], recon[i]);
      q += ssim(*images[i], recon[i]);
    }
    report.extra["recon PSNR dB (LPIPS substitute)"] = p / images.size();
    report.extra["recon SSIM (LPIPS substitute)"] = q / images.size();
    const int d = model.latent_dim;
    if (static_cast<int>(images.size()) > d) {
      std::vector<const Image*> rp;
      for (const auto& r : recon) rp.push_back(&r);
      const nn::Tensor z2 = encode_semantic(model, images_to_batch(rp));
      std::vector<Vector> a, b;
      for (std::size_t i = 0; i < images.size(); ++i) {
        a.emplace_back(enc.z.data() + i * d, enc.z.data() + (i + 1) * d);
        b.emplace_back(z2.data() + i * d, z2.data() + (i + 1) * d);
      }
      report.extra["latent Frechet recon (FID substitute)"] = latent_frechet(a, b);
    }
  }
  fs::create_directories(o.out);
  write_file_atomic(o.out / "eval.json", report_json(report) + "\n");
  write_file_atomic(o.out / "eval.txt", report_table(report));
  std::cout << report_table(report);
  return 0;
}

int run_counterfactual(const CounterfactualOptions& o) {
  CounterfactualRequest req;
  if (!o.offsets.empty())
    req.mode = CeMode::Offsets;
  else if (!o.mode.empty())
    req.mode = parse_ce_mode(o.mode);
  else
    req.mode = o.grades.empty() ? CeMode::Reflect : (o.grades.size() == 1 ? CeMode::TargetGrade : CeMode::Sweep);
  req.grades = o.grades;
  req.offsets = o.offsets;
  req.allow_extrapolation = o.allow_extrapolation;
  req.encode_steps = o.encode_steps;
  req.decode_steps = o.decode_steps;

  const auto corpus = load_corpus(o.corpus);
  if (o.id < 0 || o.id >= static_cast<int>(corpus.size()))
    throw DomainError("unknown sample id " + std::to_string(o.id));
  const DaeModel model = load_checkpoint(o.checkpoint);
  const Probe probe = load_probe(o.probe.string());
  const auto result = generate_ce(model, probe, corpus[o.id].image, req);
  const auto files = write_ce_outputs(result, o.id, o.out);
  std::cout << "sample " << o.id << ": distance " << std::setprecision(6) << result.distance << ", score "
            << result.score << "\n";
  for (std::size_t k = 0; k < result.frames.size(); ++k)
    std::cout << "  " << frame_label(result, k) << ": distance " << result.frames[k].distance << ", score "
              << result.frames[k].score << "\n";
  std::cout << "wrote " << files.size() << " files to " << o.out.string() << "\n";
  return 0;
}

nlohmann::json projection_json(const std::vector<const SyntheticSample*>& samples, const LatentTable& latents,
                               int k, const std::string& split) {
  std::vector<Vector> w;
  for (const auto* s : samples) w.push_back(latent_of(latents, s->id));
  const PcaResult pca = pca_project(w, k);
  json points = json::array();
  for (std::size_t i = 0; i < samples.size(); ++i)
    points.push_back({{"id", samples[i]->id}, {"grade", samples[i]->grade}, {"g", samples[i]->g},
                      {"coords", pca.coords[i]}});
  return {{"split", split},
          {"k", k},
          {"explained_variance_ratio", pca.explained_variance_ratio},
          {"eigenvalues", Vector(pca.eigenvalues.begin(), pca.eigenvalues.begin() + k)},
          {"rank_deficient", pca.rank_deficient},
          {"mean", pca.mean},
          {"components", pca.components},
          {"points", points}};
}

int run_project(const ProjectOptions& o) {
  const auto corpus = load_corpus(o.corpus);
  const Split split = parse_split(o.split);
  const auto latents = load_latents(o.latents, {split});
  const json j = projection_json(select_split(corpus, split), latents, o.k, o.split);
  write_json(o.out, j);
  std::cout << "projected " << j["points"].size() << " latents -> " << o.out.string() << "\n";
  return 0;
}

}  // namespace latentce::cli
