#include "splatkit/synth.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "splatkit/image_io.hpp"
#include "splatkit/render.hpp"

using namespace splatkit;
namespace fs = std::filesystem;

namespace {

SynthConfig small_config(const fs::path& dir) {
  SynthConfig cfg;
  cfg.n_gaussians = 60;
  cfg.n_views = 3;
  cfg.image_size = 48;
  cfg.n_variants = 2;
  cfg.seed = 5;
  cfg.out_dir = dir;
  return cfg;
}

}  // namespace

TEST_CASE("synth_scene: byte-identical outputs for a fixed seed") {
  const fs::path base = fs::temp_directory_path() / "splatkit_synth_tests";
  fs::remove_all(base);
  const SynthResult a = synth_scene(small_config(base / "a"));
  const SynthResult b = synth_scene(small_config(base / "b"));

  for (const char* name :
       {"scene.json", "gt.wsgs", "weights.wscw", "embedding_var1.wsem",
        "view_000_depth.wsrf", "view_001_sky.wsrf", "view_000_features.wsrf",
        "view_002_var1.png", "view_000_rays.wsrf", "view_000_sparse.txt"}) {
    INFO(name);
    CHECK(io_detail::read_file(base / "a" / name) ==
          io_detail::read_file(base / "b" / name));
  }
  CHECK(a.manifest.views.size() == 3);
  CHECK(b.manifest.views.size() == 3);
}

TEST_CASE("synth_scene: zero arc span gives identical poses and coverage 1") {
  const fs::path dir =
      fs::temp_directory_path() / "splatkit_synth_tests" / "flat";
  fs::remove_all(dir);
  SynthConfig cfg = small_config(dir);
  cfg.n_views = 2;
  cfg.arc_span = 0.0;
  const SynthResult result = synth_scene(cfg);

  const ViewRecord v0 = load_view_record(result.manifest, 0);
  const ViewRecord v1 = load_view_record(result.manifest, 1);
  const auto sep = pose_distance_angle(v0.camera, v1.camera);
  CHECK(sep.distance == 0.0);
  CHECK(sep.angle == 0.0);
  CHECK(symmetric_coverage(v0, v1) == 1.0);
}

TEST_CASE("synth_scene: identity variant render equals the untinted set") {
  const fs::path dir =
      fs::temp_directory_path() / "splatkit_synth_tests" / "tint";
  fs::remove_all(dir);
  const SynthResult result = synth_scene(small_config(dir));

  const GaussianSet gt = read_gaussians(result.gaussians_path);
  const PinholeCamera cam = result.manifest.view(0).camera;
  const RenderOutput render = rasterize(gt, cam);
  const ImageBuffer png =
      read_png(result.manifest.resolve(result.manifest.view(0).images[0]));

  // Difference sources: PNG quantization (<= 1/510) plus the float32
  // narrowing of the stored ground truth.
  double max_err = 0;
  for (size_t i = 0; i < png.values.size(); ++i)
    max_err = std::max(max_err, std::abs(png.values[i] -
                                         std::clamp(render.color.values[i], 0.0, 1.0)));
  CHECK(max_err < 1.5 / 255.0);
}

TEST_CASE("synth_scene: invalid configurations are rejected") {
  SynthConfig cfg;
  cfg.out_dir = fs::temp_directory_path() / "splatkit_synth_tests" / "bad";
  cfg.n_gaussians = 0;
  CHECK_THROWS_AS(synth_scene(cfg), std::invalid_argument);
  cfg.n_gaussians = 10;
  cfg.n_views = 1;
  CHECK_THROWS_AS(synth_scene(cfg), std::invalid_argument);
  cfg.n_views = 2;
  cfg.model_scale = -1;
  CHECK_THROWS_AS(synth_scene(cfg), std::invalid_argument);
  cfg.model_scale = 1;
  cfg.out_dir.clear();
  CHECK_THROWS_AS(synth_scene(cfg), std::invalid_argument);
}
