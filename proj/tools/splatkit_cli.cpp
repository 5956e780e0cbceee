// Command-line front end for the splatting pipeline: depth alignment, view
// mining, visibility masks, Gaussian construction, scene alignment,
// rendering, appearance interpolation, evaluation and synthetic scenes.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "splatkit/splatkit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace splatkit;

namespace {

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("SPLATKIT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

PinholeCamera resolve_camera(const std::string& arg,
                             const std::string& manifest_path) {
  // An integer selects a view id from the manifest; anything else is a
  // camera text file.
  char* end = nullptr;
  const long id = std::strtol(arg.c_str(), &end, 10);
  if (end && *end == '\0' && !arg.empty()) {
    if (manifest_path.empty())
      throw FormatError("--camera <id> requires --manifest");
    return read_manifest(manifest_path).view(int(id)).camera;
  }
  return read_camera_text(arg);
}

struct BuildInputs {
  RayMap rays;
  DepthMap model_depth;  // z-depth in the frame the rays live in
  FeatureMap features;
};

BuildInputs load_build_inputs(const SceneManifest& manifest, int view_id) {
  const ViewEntry& entry = manifest.view(view_id);
  BuildInputs in;
  in.rays = entry.rays.empty()
                ? RayMap::from_camera(entry.camera)
                : rays_from_raster(read_raster(manifest.resolve(entry.rays)));
  const std::string depth_path =
      entry.pred_depth.empty() ? entry.depth : entry.pred_depth;
  if (depth_path.empty())
    throw FormatError("view " + std::to_string(view_id) + " has no depth raster");
  in.model_depth = depth_from_raster(read_raster(manifest.resolve(depth_path)));
  if (entry.features.empty())
    throw FormatError("view " + std::to_string(view_id) +
                      " has no feature raster");
  in.features =
      features_from_raster(read_raster(manifest.resolve(entry.features)));
  return in;
}

/// Default raw head outputs for CLI builds: constant opacity logit, identity
/// rotation, per-pixel log-scale chosen so the projected footprint is about
/// `splat_scale` pixels, zero depth offset.
RawHeadOutputs default_raw_outputs(const PinholeCamera& cam,
                                   const DepthMap& depth,
                                   const FeatureMap& features,
                                   double opacity_logit, double splat_scale) {
  const int w = cam.width, h = cam.height;
  FeatureMap logit(w, h, 1), rot(w, h, 4), scale_log(w, h, 3), offset(w, h, 1);
  const double focal = 0.5 * (cam.fx + cam.fy);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      logit.set(x, y, 0, opacity_logit);
      rot.set(x, y, 0, 1.0);
      const double z = depth.is_valid(x, y) ? depth.at(x, y) : 1.0;
      const double s = std::log(splat_scale * z / focal);
      for (int c = 0; c < 3; ++c) scale_log.set(x, y, c, s);
    }
  return RawHeadOutputs(std::move(logit), std::move(rot), std::move(scale_log),
                        std::move(offset), features);
}

PointMap model_points(const SceneManifest& manifest, int view_id) {
  const ViewEntry& entry = manifest.view(view_id);
  const BuildInputs in = load_build_inputs(manifest, view_id);
  return ray_points(in.rays, ray_lengths_from_depth(entry.camera, in.model_depth));
}

std::vector<int> parse_id_pair(const std::vector<int>& ids, const char* flag) {
  if (ids.size() != 2)
    throw FormatError(std::string(flag) + " expects exactly two ids");
  if (ids[0] == ids[1])
    throw FormatError(std::string(flag) + " ids must be distinct");
  return ids;
}

std::vector<int> parse_context_list(const std::vector<int>& ids) {
  if (ids.empty() || ids.size() > 2)
    throw FormatError("--contexts expects one or two ids");
  return ids;
}

json vec3_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

// ---------------------------------------------------------------------------

int cmd_align_depth(const std::string& pred_path, const std::string& sparse_path,
                    const std::string& out_path, int iters, double thresh,
                    std::uint64_t seed, int min_inliers) {
  const DepthMap pred = depth_from_raster(read_raster(pred_path));
  const SparseDepth sparse = read_sparse_depth(sparse_path);
  RansacConfig cfg;
  cfg.iterations = iters;
  cfg.inlier_log_threshold = thresh;
  cfg.seed = seed;
  cfg.min_inliers = min_inliers;
  const RansacResult result = ransac_scale_shift(pred, sparse, cfg);
  write_raster(out_path, to_raster(apply_scale_shift(pred, result.model)));

  json report;
  report["scale"] = result.model.scale;
  report["shift"] = result.model.shift;
  report["inliers"] = result.inlier_count;
  report["samples"] = sparse.samples.size();
  std::cout << report.dump() << "\n";
  return 0;
}

int cmd_mine_views(const std::string& manifest_path, int seed_view,
                   double delta, double cov, double vis, double sky_cutoff) {
  const SceneManifest manifest = read_manifest(manifest_path);
  std::vector<ViewRecord> views;
  views.reserve(manifest.views.size());
  for (const auto& entry : manifest.views)
    views.push_back(load_view_record(manifest, entry.id));

  const auto pairs =
      select_context_pairs(views, seed_view, delta, cov, sky_cutoff);
  for (const auto& pair : pairs) {
    const ViewRecord* ctx1 = nullptr;
    const ViewRecord* ctx2 = nullptr;
    for (const auto& v : views) {
      if (v.id == pair.seed_id) ctx1 = &v;
      if (v.id == pair.other_id) ctx2 = &v;
    }
    const auto targets =
        select_targets(*ctx1, *ctx2, views, delta, vis, sky_cutoff);
    std::cout << "pair " << pair.seed_id << " " << pair.other_id
              << " coverage " << pair.coverage << " targets";
    for (int t : targets) std::cout << " " << t;
    std::cout << "\n";
  }
  return 0;
}

int cmd_mask(const std::string& manifest_path, int target_id,
             std::vector<int> context_ids, double delta, double sky_cutoff,
             const std::string& out_path, const std::string& out_sky_path) {
  const SceneManifest manifest = read_manifest(manifest_path);
  const ViewRecord target = load_view_record(manifest, target_id);
  std::vector<ViewRecord> contexts;
  std::vector<const ViewRecord*> context_ptrs;
  for (int id : context_ids) contexts.push_back(load_view_record(manifest, id));
  for (const auto& c : contexts) context_ptrs.push_back(&c);

  const VisibilityMask mask = visibility_mask(target, context_ptrs, delta);
  write_raster(out_path, to_raster(mask));
  if (!out_sky_path.empty())
    write_raster(out_sky_path,
                 to_raster(extend_with_sky(mask, target.sky, sky_cutoff)));
  std::cout << "mask " << mask.count() << "/" << mask.bits.size()
            << " visible\n";
  return 0;
}

int cmd_build(const std::string& manifest_path, std::vector<int> view_ids,
              const std::string& weights_path, const std::string& embedding_path,
              const std::string& out_path, double opacity_logit,
              double splat_scale, const std::string& valid_out) {
  const SceneManifest manifest = read_manifest(manifest_path);
  const ConvHeadWeights weights = read_conv_weights(weights_path);
  const AppearanceEmbedding embedding = read_embeddings(embedding_path).front();
  if (!valid_out.empty() && view_ids.size() != 1)
    throw FormatError("--valid-out requires a single --view");

  GaussianSet combined;
  bool first = true;
  for (int id : view_ids) {
    const ViewEntry& entry = manifest.view(id);
    const BuildInputs in = load_build_inputs(manifest, id);
    const RawHeadOutputs raw = default_raw_outputs(
        entry.camera, in.model_depth, in.features, opacity_logit, splat_scale);
    const FeatureMap sh_raster = appearance_head(in.features, embedding, weights);
    const DepthMap ray_len = ray_lengths_from_depth(entry.camera, in.model_depth);
    GaussianSet set = assemble_gaussians(in.rays, ray_len, raw, sh_raster);
    if (!valid_out.empty()) {
      const PointMap pm = ray_points(in.rays, ray_len, &raw.depth_offset);
      VisibilityMask valid(pm.width, pm.height);
      valid.bits = pm.validity;
      write_raster(valid_out, to_raster(valid));
    }
    if (first) {
      combined = std::move(set);
      first = false;
    } else {
      combined.append(set);
    }
  }
  write_gaussians(out_path, combined);

  json report;
  report["count"] = combined.size();
  report["sh_degree"] = combined.sh_degree;
  std::cout << report.dump() << "\n";
  return 0;
}

int cmd_align(const std::string& gauss_path, const std::string& manifest_path,
              std::vector<int> context_ids, double gamma, double reject,
              const std::string& out_path) {
  const SceneManifest manifest = read_manifest(manifest_path);
  const ViewRecord v1 = load_view_record(manifest, context_ids[0]);
  const ViewRecord v2 = load_view_record(manifest, context_ids[1]);
  const auto [w1, w2] = consistency_weights(v1, v2, gamma);

  const std::vector<PointMap> pred{model_points(manifest, context_ids[0]),
                                   model_points(manifest, context_ids[1])};
  const std::vector<PointMap> ref{
      depth_to_points(v1.camera, v1.aligned_depth),
      depth_to_points(v2.camera, v2.aligned_depth)};
  const std::vector<AlignmentWeights> weights{w1, w2};

  const SimScaleTranslation t = wls_scale_translation(pred, ref, weights);
  const AlignmentResidual residual =
      alignment_residual(pred, ref, weights, t, reject);

  const GaussianSet aligned = apply_alignment(read_gaussians(gauss_path), t);
  write_gaussians(out_path, aligned);

  json report;
  report["scale"] = t.scale;
  report["translation"] = vec3_json(t.translation);
  report["residual"] = residual.value;
  report["rejected"] = residual.reject;
  std::cout << report.dump() << "\n";
  return 0;
}

int cmd_render(const std::string& gauss_path, const std::string& camera_arg,
               const std::string& manifest_path, const std::string& out_path,
               const std::string& depth_out, const std::string& alpha_out,
               int threads) {
  const PinholeCamera camera = resolve_camera(camera_arg, manifest_path);
  const GaussianSet set = read_gaussians(gauss_path);
  const RenderOutput out = rasterize(set, camera, resolve_threads(threads));
  write_png(out_path, out.color);
  if (!depth_out.empty()) write_raster(depth_out, to_raster(out.expected_depth));
  if (!alpha_out.empty()) write_raster(alpha_out, to_raster(out.accum_alpha));
  return 0;
}

int cmd_interp(const std::string& gauss_path, const std::string& features_path,
               const std::string& weights_path, const std::string& e1_path,
               const std::string& e2_path, int steps,
               const std::string& camera_arg, const std::string& manifest_path,
               const std::string& out_prefix, const std::string& valid_path,
               int threads) {
  if (steps < 2) throw FormatError("--steps must be at least 2");
  const GaussianSet geometry = read_gaussians(gauss_path);
  const FeatureMap features =
      features_from_raster(read_raster(features_path));
  const ConvHeadWeights weights = read_conv_weights(weights_path);
  const AppearanceEmbedding e1 = read_embeddings(e1_path).front();
  const AppearanceEmbedding e2 = read_embeddings(e2_path).front();
  const PinholeCamera camera = resolve_camera(camera_arg, manifest_path);

  // Pixel-to-primitive correspondence: primitives are stored in row-major
  // valid-pixel order.
  VisibilityMask valid(features.width, features.height);
  if (valid_path.empty()) {
    std::fill(valid.bits.begin(), valid.bits.end(), std::uint8_t(1));
  } else {
    valid = mask_from_raster(read_raster(valid_path));
    if (valid.width != features.width || valid.height != features.height)
      throw FormatError("--valid raster size does not match features");
  }
  if (valid.count() != geometry.size())
    throw FormatError("valid pixel count " + std::to_string(valid.count()) +
                      " does not match primitive count " +
                      std::to_string(geometry.size()));

  const int n_threads = resolve_threads(threads);
  for (int k = 0; k < steps; ++k) {
    const double t = double(k) / (steps - 1);
    const AppearanceEmbedding e = interpolate_embedding(e1, e2, t);
    const FeatureMap sh_raster = appearance_head(features, e, weights);
    if (sh_raster.width != features.width || sh_raster.height != features.height)
      throw FormatError("appearance head changed the raster size");

    GaussianSet set = geometry;
    set.sh_degree = sh_degree_from_channels(sh_raster.channels);
    set.sh.clear();
    set.sh.reserve(set.size() * set.sh_stride());
    for (int y = 0; y < sh_raster.height; ++y)
      for (int x = 0; x < sh_raster.width; ++x) {
        if (!valid.at(x, y)) continue;
        for (int c = 0; c < sh_raster.channels; ++c)
          set.sh.push_back(sh_raster.at(x, y, c));
      }

    const RenderOutput out = rasterize(set, camera, n_threads);
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "_%02d.png", k);
    write_png(out_prefix + suffix, out.color);
  }
  return 0;
}

int cmd_eval(const std::string& a_path, const std::string& b_path,
             const std::string& mask_path) {
  const ImageBuffer a = read_png(a_path);
  const ImageBuffer b = read_png(b_path);
  std::optional<VisibilityMask> mask;
  if (!mask_path.empty()) mask = mask_from_raster(read_raster(mask_path));

  VisibilityMask all(a.width, a.height);
  std::fill(all.bits.begin(), all.bits.end(), std::uint8_t(1));
  const double mse = masked_mse(a, b, mask ? *mask : all);
  const double db = psnr(a, b, mask ? &*mask : nullptr);
  std::printf("mse %.10g\n", mse);
  std::printf("psnr %.2f dB\n", db);
  return 0;
}

int cmd_synth(const std::string& out_dir, std::uint64_t seed, int n_gaussians,
              int n_views, int size, int variants, int sh_degree,
              double model_scale, std::vector<double> model_shift,
              double arc_span, int threads) {
  SynthConfig cfg;
  cfg.out_dir = out_dir;
  cfg.seed = seed;
  cfg.n_gaussians = n_gaussians;
  cfg.n_views = n_views;
  cfg.image_size = size;
  cfg.n_variants = variants;
  cfg.sh_degree = sh_degree;
  cfg.model_scale = model_scale;
  if (!model_shift.empty()) {
    if (model_shift.size() != 3)
      throw FormatError("--model-shift expects x,y,z");
    cfg.model_shift = Vec3(model_shift[0], model_shift[1], model_shift[2]);
  }
  cfg.arc_span = arc_span;
  cfg.threads = resolve_threads(threads);
  const SynthResult result = synth_scene(cfg);
  std::cout << result.manifest_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feed-forward Gaussian splatting pipeline tools"};
  app.require_subcommand(1);

  // align-depth
  auto* align_depth = app.add_subcommand(
      "align-depth", "Fit scale/shift of a depth map to sparse depth (RANSAC)");
  std::string ad_pred, ad_sparse, ad_out;
  int ad_iters = 1000, ad_min_inliers = 0;
  double ad_thresh = 0.05;
  std::uint64_t ad_seed = 0;
  align_depth->add_option("--pred", ad_pred)->required();
  align_depth->add_option("--sparse", ad_sparse)->required();
  align_depth->add_option("--out", ad_out)->required();
  align_depth->add_option("--iters", ad_iters);
  align_depth->add_option("--thresh", ad_thresh);
  align_depth->add_option("--seed", ad_seed);
  align_depth->add_option("--min-inliers", ad_min_inliers);

  // mine-views
  auto* mine = app.add_subcommand("mine-views",
                                  "Select context pairs and target views");
  std::string mv_manifest;
  int mv_seed_view = 0;
  double mv_delta = kDefaultDelta, mv_cov = kDefaultCoverageThreshold;
  double mv_vis = kDefaultVisibilityThreshold, mv_sky = kDefaultSkyCutoff;
  mine->add_option("--manifest", mv_manifest)->required();
  mine->add_option("--seed-view", mv_seed_view)->required();
  mine->add_option("--delta", mv_delta);
  mine->add_option("--cov", mv_cov);
  mine->add_option("--vis", mv_vis);
  mine->add_option("--sky-cutoff", mv_sky);

  // mask
  auto* mask = app.add_subcommand("mask", "Visibility mask for a target view");
  std::string mk_manifest, mk_out, mk_out_sky;
  int mk_target = 0;
  std::vector<int> mk_contexts;
  double mk_delta = kDefaultDelta, mk_sky = kDefaultSkyCutoff;
  mask->add_option("--manifest", mk_manifest)->required();
  mask->add_option("--target", mk_target)->required();
  mask->add_option("--contexts", mk_contexts)->required()->delimiter(',');
  mask->add_option("--delta", mk_delta);
  mask->add_option("--sky-cutoff", mk_sky);
  mask->add_option("--out", mk_out)->required();
  mask->add_option("--out-sky", mk_out_sky);

  // build
  auto* build = app.add_subcommand(
      "build", "Assemble pixel-aligned Gaussians for context views");
  std::string bd_manifest, bd_weights, bd_embedding, bd_out, bd_valid_out;
  std::vector<int> bd_views;
  double bd_logit = 6.0, bd_splat_scale = 1.0;
  build->add_option("--manifest", bd_manifest)->required();
  build->add_option("--view", bd_views)->required()->delimiter(',');
  build->add_option("--weights", bd_weights)->required();
  build->add_option("--embedding", bd_embedding)->required();
  build->add_option("--out", bd_out)->required();
  build->add_option("--opacity-logit", bd_logit);
  build->add_option("--splat-scale", bd_splat_scale);
  build->add_option("--valid-out", bd_valid_out);

  // align
  auto* align = app.add_subcommand(
      "align", "Weighted least-squares alignment to dataset scale");
  std::string al_gauss, al_manifest, al_out;
  std::vector<int> al_contexts;
  double al_gamma = kDefaultConsistencyGamma;
  double al_reject = kDefaultRejectThreshold;
  align->add_option("--gauss", al_gauss)->required();
  align->add_option("--manifest", al_manifest)->required();
  align->add_option("--contexts", al_contexts)->required()->delimiter(',');
  align->add_option("--gamma", al_gamma);
  align->add_option("--reject", al_reject);
  align->add_option("--out", al_out)->required();

  // render
  auto* render = app.add_subcommand("render", "Rasterize a Gaussian file");
  std::string rd_gauss, rd_camera, rd_manifest, rd_out, rd_depth, rd_alpha;
  int rd_threads = 0;
  render->add_option("--gauss", rd_gauss)->required();
  render->add_option("--camera", rd_camera)->required();
  render->add_option("--manifest", rd_manifest);
  render->add_option("--out", rd_out)->required();
  render->add_option("--depth", rd_depth);
  render->add_option("--alpha", rd_alpha);
  render->add_option("--threads", rd_threads);

  // interp
  auto* interp = app.add_subcommand(
      "interp", "Render along an appearance-embedding interpolation");
  std::string ip_gauss, ip_features, ip_weights, ip_e1, ip_e2, ip_camera,
      ip_manifest, ip_prefix, ip_valid;
  int ip_steps = 5, ip_threads = 0;
  interp->add_option("--gauss-geom", ip_gauss)->required();
  interp->add_option("--features", ip_features)->required();
  interp->add_option("--weights", ip_weights)->required();
  interp->add_option("--e1", ip_e1)->required();
  interp->add_option("--e2", ip_e2)->required();
  interp->add_option("--steps", ip_steps);
  interp->add_option("--camera", ip_camera)->required();
  interp->add_option("--manifest", ip_manifest);
  interp->add_option("--out-prefix", ip_prefix)->required();
  interp->add_option("--valid", ip_valid);
  interp->add_option("--threads", ip_threads);

  // eval
  auto* eval = app.add_subcommand("eval", "PSNR / masked MSE between images");
  std::string ev_a, ev_b, ev_mask;
  eval->add_option("--a", ev_a)->required();
  eval->add_option("--b", ev_b)->required();
  eval->add_option("--mask", ev_mask);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene");
  std::string sy_out;
  std::uint64_t sy_seed = 0;
  int sy_gaussians = 500, sy_views = 4, sy_size = 256, sy_variants = 2;
  int sy_degree = 1, sy_threads = 0;
  double sy_model_scale = 1.0, sy_arc_span = 0.5;
  std::vector<double> sy_model_shift;
  synth->add_option("--out", sy_out)->required();
  synth->add_option("--seed", sy_seed);
  synth->add_option("--gaussians", sy_gaussians);
  synth->add_option("--views", sy_views);
  synth->add_option("--size", sy_size);
  synth->add_option("--variants", sy_variants);
  synth->add_option("--sh-degree", sy_degree);
  synth->add_option("--model-scale", sy_model_scale);
  synth->add_option("--model-shift", sy_model_shift)->delimiter(',');
  synth->add_option("--arc-span", sy_arc_span);
  synth->add_option("--threads", sy_threads);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(align_depth))
      return cmd_align_depth(ad_pred, ad_sparse, ad_out, ad_iters, ad_thresh,
                             ad_seed, ad_min_inliers);
    if (app.got_subcommand(mine))
      return cmd_mine_views(mv_manifest, mv_seed_view, mv_delta, mv_cov, mv_vis,
                            mv_sky);
    if (app.got_subcommand(mask))
      return cmd_mask(mk_manifest, mk_target, parse_context_list(mk_contexts),
                      mk_delta, mk_sky, mk_out, mk_out_sky);
    if (app.got_subcommand(build))
      return cmd_build(bd_manifest, bd_views, bd_weights, bd_embedding, bd_out,
                       bd_logit, bd_splat_scale, bd_valid_out);
    if (app.got_subcommand(align))
      return cmd_align(al_gauss, al_manifest,
                       parse_id_pair(al_contexts, "--contexts"), al_gamma,
                       al_reject, al_out);
    if (app.got_subcommand(render))
      return cmd_render(rd_gauss, rd_camera, rd_manifest, rd_out, rd_depth,
                        rd_alpha, rd_threads);
    if (app.got_subcommand(interp))
      return cmd_interp(ip_gauss, ip_features, ip_weights, ip_e1, ip_e2,
                        ip_steps, ip_camera, ip_manifest, ip_prefix, ip_valid,
                        ip_threads);
    if (app.got_subcommand(eval)) return cmd_eval(ev_a, ev_b, ev_mask);
    if (app.got_subcommand(synth))
      return cmd_synth(sy_out, sy_seed, sy_gaussians, sy_views, sy_size,
                       sy_variants, sy_degree, sy_model_scale, sy_model_shift,
                       sy_arc_span, sy_threads);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
