#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lomar/bench.hpp"
#include "lomar/checkpoint.hpp"
#include "lomar/config.hpp"
#include "lomar/corpus.hpp"
#include "lomar/error.hpp"
#include "lomar/gradsuite.hpp"
#include "lomar/probe.hpp"
#include "lomar/trainer.hpp"

namespace fs = std::filesystem;
using namespace lomar;

namespace {

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::string ckpt;
  std::string resume;
  std::string image;
  std::string data;
  std::optional<std::size_t> layer;
  std::optional<std::size_t> target;
  std::optional<std::uint64_t> view_seed;
  std::size_t steps = 0;
  std::size_t repetitions = 5;
  std::vector<std::size_t> grids{8, 14, 28};
  std::vector<std::size_t> views{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<double> ratios{0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  bool copy_visible = false;
  bool random_init = false;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

fs::path prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
  return out;
}

TrainConfig config_from_options(const Options& o) {
  auto sets = o.sets;
  if (!o.data.empty()) sets.push_back("data.dir=" + o.data);
  return parse_config(o.config.empty() ? "" : read_text(o.config), sets);
}

// Config stored in a checkpoint, with command-line overrides applied on top.
TrainConfig config_from_checkpoint(const Checkpoint& ckpt, const Options& o) {
  auto sets = o.sets;
  if (!o.data.empty()) sets.push_back("data.dir=" + o.data);
  return parse_config(ckpt.config_text, sets);
}

void echo_config(const Options& o, const TrainConfig& cfg) {
  if (!o.out.empty()) write_text(prepare_out(o.out) / "config.cfg", format_config(cfg));
}

template <typename T>
Model<T> model_from(const Checkpoint& ckpt, const TrainConfig& cfg, std::size_t channels) {
  Rng rng(purpose_seed(cfg.seed, Purpose::init));
  auto model = Model<T>::init(cfg.model_config(channels), rng);
  load_model(ckpt, model);
  return model;
}

Image input_image(const Options& o, const TrainConfig& cfg) {
  Image img = o.image.empty() ? synthetic_corpus(1, cfg.data.image_size, cfg.data.num_classes, cfg.seed).front().image
                              : load_image(o.image);
  if (img.height != cfg.data.image_size || img.width != cfg.data.image_size) {
    img = resize_bilinear(img, cfg.data.image_size, cfg.data.image_size);
  }
  return img;
}

struct View {
  WindowSpec window;
  MaskPlan plan;
};

View sample_view(const PatchGrid& grid, const TrainConfig& cfg, std::uint64_t seed) {
  Rng wrng(purpose_seed(seed, Purpose::windows));
  Rng mrng(purpose_seed(seed, Purpose::masks));
  const auto k = cfg.sampler.k;
  return {sample_windows(grid.grid_h, grid.grid_w, k, 1, wrng).front(), make_mask_plan(k, cfg.sampler.mask_ratio, mrng)};
}

template <typename T>
int pretrain(const Options& o, const TrainConfig& cfg) {
  const fs::path out = prepare_out(o.out);
  const std::string config_text = format_config(cfg);
  write_text(out / "config.cfg", config_text);

  Trainer<T> trainer(cfg, training_images(cfg));
  auto mode = std::ios::trunc;
  if (!o.resume.empty()) {
    trainer.restore(load_checkpoint(o.resume));
    mode = std::ios::app;
  }
  std::ofstream metrics(out / "metrics.csv", std::ios::out | mode);
  if (!metrics) throw IoError("cannot write " + (out / "metrics.csv").string());

  const std::size_t budget = o.steps > 0 ? o.steps : cfg.run_steps();
  std::printf("pretrain: %zu steps from step %zu, %zu steps per epoch\n", budget, trainer.steps_done(),
              cfg.steps_per_epoch());
  trainer.run(budget, [&](const StepMetrics& m) {
    metrics << format_metrics_line(m) << '\n' << std::flush;
    if (m.step % 10 == 0 || m.step == 1) std::printf("step %zu lr %.3e loss %.5f\n", m.step, m.lr, m.loss);
    if (cfg.checkpoint_every > 0 && m.step % cfg.checkpoint_every == 0) {
      save_checkpoint(out / ("step_" + std::to_string(m.step) + ".lmck"), trainer.to_checkpoint(config_text));
    }
  });
  save_checkpoint(out / "final.lmck", trainer.to_checkpoint(config_text));
  std::printf("wrote %s\n", (out / "final.lmck").string().c_str());
  return 0;
}

template <typename T>
int reconstruct_cmd(const Options& o, const Checkpoint& ckpt, const TrainConfig& cfg) {
  const auto img = input_image(o, cfg);
  const auto model = model_from<T>(ckpt, cfg, img.channels);
  const auto grid = patchify(img, cfg.data.patch_size, cfg.data.target_norm);
  const auto view = sample_view(grid, cfg, o.view_seed.value_or(cfg.seed));
  const fs::path out = prepare_out(o.out);
  echo_config(o, cfg);
  RenderOptions ropt;
  ropt.copy_visible = o.copy_visible;
  render_reconstruction(model, img, grid, view.window, view.plan, out / "reconstruction.png", ropt);
  std::printf("window (%zu,%zu) k=%zu masked %zu: wrote %s\n", view.window.top, view.window.left, view.window.k,
              view.plan.masked.size(), (out / "reconstruction.png").string().c_str());
  return 0;
}

template <typename T>
int locality_cmd(const Options& o, const Checkpoint& ckpt, const TrainConfig& cfg) {
  const auto img = input_image(o, cfg);
  const auto model = model_from<T>(ckpt, cfg, img.channels);
  const auto grid = patchify(img, cfg.data.patch_size, cfg.data.target_norm);
  const auto view = sample_view(grid, cfg, o.view_seed.value_or(cfg.seed));
  const std::size_t layer = o.layer.value_or(cfg.encoder.num_layers - 1);
  const std::size_t k = cfg.sampler.k;

  std::string text;
  if (o.target) {
    const auto stat = attention_locality(model, grid, view.window, view.plan, *o.target, layer);
    text = locality_csv(stat, uniform_locality(k, *o.target));
  } else {
    text = "target,row,col,mass_within_2,uniform_within_2,mean_distance,uniform_mean_distance\n";
    const std::size_t r = std::min<std::size_t>(2, k - 1);
    char buf[200];
    for (std::size_t t : view.plan.masked) {
      const auto stat = attention_locality(model, grid, view.window, view.plan, t, layer);
      const auto uni = uniform_locality(k, t);
      std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.6f,%.6f,%.6f,%.6f\n", t, stat.target_cell.row,
                    stat.target_cell.col, stat.mass_within[r], uni.mass_within[r], stat.mean_distance,
                    uni.mean_distance);
      text += buf;
    }
  }
  if (o.out.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    const fs::path out = prepare_out(o.out);
    echo_config(o, cfg);
    write_text(out / "locality.csv", text);
    std::printf("layer %zu: wrote %s\n", layer, (out / "locality.csv").string().c_str());
  }
  return 0;
}

template <typename T>
int probe_cmd(const Options& o, const Checkpoint* ckpt, const TrainConfig& cfg) {
  const auto set = probe_images(cfg);
  if (set.empty()) throw IngestionError("probe: no labeled images");
  Rng rng(purpose_seed(cfg.seed, Purpose::init));
  auto model = Model<T>::init(cfg.model_config(set.front().image.channels), rng);
  if (ckpt) load_model(*ckpt, model);
  echo_config(o, cfg);
  const auto r = linear_probe(model, set, cfg.data, cfg.probe, cfg.seed, resolve_threads(cfg.threads));
  std::printf("probe %s: train_accuracy=%.4f test_accuracy=%.4f classes=%zu train=%zu test=%zu\n",
              ckpt ? "pretrained" : "random-init", r.train_accuracy, r.test_accuracy, r.classes, r.train_count,
              r.test_count);
  return 0;
}

template <typename T>
int sweep_cmd(const Options& o, const TrainConfig& cfg) {
  const fs::path out = prepare_out(o.out);
  write_text(out / "config.cfg", format_config(cfg));
  const std::size_t steps = o.steps > 0 ? o.steps : cfg.run_steps();
  const auto rows = mask_ratio_sweep<T>(cfg, o.ratios, training_images(cfg), probe_images(cfg), steps);
  write_text(out / "sweep.csv", sweep_csv(rows));
  std::fputs(sweep_csv(rows).c_str(), stdout);
  return 0;
}

int bench_cmd(const Options& o) {
  BenchConfig cfg;
  cfg.grids = o.grids;
  cfg.views = o.views;
  cfg.repetitions = o.repetitions;
  const auto report = run_scaling_bench(cfg);
  const fs::path out = prepare_out(o.out);
  char buf[400];
  std::snprintf(buf, sizeof buf, "m = %zu\nn = %zu\nembed_dim = %zu\nnum_heads = %zu\nrepetitions = %zu\n", cfg.m,
                cfg.n, cfg.embed_dim, cfg.num_heads, cfg.repetitions);
  write_text(out / "bench.cfg", buf);
  write_text(out / "scaling.csv", scaling_csv(report));
  write_text(out / "views.csv", views_csv(report));
  std::fputs(scaling_csv(report).c_str(), stdout);
  std::printf("global exponent %.3f, local exponent %.3f, local vs n: R^2 %.4f\n", report.global_exponent,
              report.local_exponent, report.local_linear_r2);
  return 0;
}

int gradcheck_cmd(const Options& o) {
  const auto reports = gradient_suite();
  const auto csv = gradcheck_csv(reports);
  std::fputs(csv.c_str(), stdout);
  if (!o.out.empty()) write_text(prepare_out(o.out) / "gradcheck.csv", csv);
  for (const auto& r : reports) {
    if (!r.passed) {
      std::fprintf(stderr, "lomar: gradient check failed for %s\n", r.op_name.c_str());
      return 1;
    }
  }
  return 0;
}

template <template <typename> class F, typename... Args>
int by_precision(const TrainConfig& cfg, Args&&... args) {
  if (cfg.precision == 64) return F<double>{}(std::forward<Args>(args)...);
  return F<float>{}(std::forward<Args>(args)...);
}

#define LOMAR_DISPATCH(name, fn)                 \
  template <typename T>                          \
  struct name {                                  \
    template <typename... A>                     \
    int operator()(A&&... a) const {             \
      return fn<T>(std::forward<A>(a)...);       \
    }                                            \
  };

LOMAR_DISPATCH(Pretrain, pretrain)
LOMAR_DISPATCH(Reconstruct, reconstruct_cmd)
LOMAR_DISPATCH(Locality, locality_cmd)
LOMAR_DISPATCH(Probe, probe_cmd)
LOMAR_DISPATCH(Sweep, sweep_cmd)

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local masked-window autoencoder pretraining"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* c) {
    c->add_option("--config", o.config, "Config file (sectioned key = value)")->check(CLI::ExistingFile);
    c->add_option("--set", o.sets, "Override, e.g. --set sampler.k=5")->take_all();
  };
  auto add_view = [&](CLI::App* c) {
    c->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
    c->add_option("--image", o.image, "Image (.png or tensor container); synthetic if omitted");
    c->add_option("--seed", o.view_seed, "Seed for the window and mask");
    c->add_option("--set", o.sets, "Config override applied to the checkpoint config")->take_all();
  };

  auto* pre = app.add_subcommand("pretrain", "Pretrain and write metrics and checkpoints");
  add_config(pre);
  pre->add_option("--out", o.out, "Output directory")->required();
  pre->add_option("--data", o.data, "Image directory (synthetic corpus if omitted)");
  pre->add_option("--steps", o.steps, "Stop after this many steps");
  pre->add_option("--resume", o.resume, "Resume from a checkpoint")->check(CLI::ExistingFile);

  auto* rec = app.add_subcommand("reconstruct", "Render a masked-window reconstruction PNG");
  add_view(rec);
  rec->add_option("--out", o.out, "Output directory")->required();
  rec->add_flag("--copy-visible", o.copy_visible, "Show originals on visible patches");

  auto* loc = app.add_subcommand("locality", "Attention locality of masked targets");
  add_view(loc);
  loc->add_option("--layer", o.layer, "Encoder layer (default: last)");
  loc->add_option("--target", o.target, "Window-local masked index: print its radius profile");
  loc->add_option("--out", o.out, "Output directory (stdout if omitted)");

  auto* prb = app.add_subcommand("probe", "Linear probe on frozen pooled features");
  prb->add_option("--ckpt", o.ckpt, "Checkpoint");
  prb->add_flag("--random-init", o.random_init, "Probe a randomly initialized encoder");
  add_config(prb);
  prb->add_option("--data", o.data, "Labeled directory, one subdirectory per class");
  prb->add_option("--out", o.out, "Output directory for the resolved config");

  auto* bch = app.add_subcommand("bench", "Attention scaling benchmark");
  bch->add_option("--out", o.out, "Output directory")->required();
  bch->add_option("--grids", o.grids, "Grid sides")->take_all();
  bch->add_option("--views", o.views, "Window counts for the linearity sweep")->take_all();
  bch->add_option("--repetitions", o.repetitions, "Timed repetitions per point")->check(CLI::PositiveNumber);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc->add_option("--out", o.out, "Output directory");

  auto* sw = app.add_subcommand("sweep", "Mask-ratio sweep with probe accuracies");
  add_config(sw);
  sw->add_option("--out", o.out, "Output directory")->required();
  sw->add_option("--data", o.data, "Image directory");
  sw->add_option("--steps", o.steps, "Pretraining steps per ratio");
  sw->add_option("--ratios", o.ratios, "Mask ratios")->take_all();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*pre) {
      const auto cfg = config_from_options(o);
      return by_precision<Pretrain>(cfg, o, cfg);
    }
    if (*rec || *loc) {
      const auto ckpt = load_checkpoint(o.ckpt);
      const auto cfg = config_from_checkpoint(ckpt, o);
      if (*rec) return by_precision<Reconstruct>(cfg, o, ckpt, cfg);
      return by_precision<Locality>(cfg, o, ckpt, cfg);
    }
    if (*prb) {
      if (o.ckpt.empty() == !o.random_init) throw ConfigError("--ckpt", "give either --ckpt or --random-init");
      if (o.random_init) {
        const auto cfg = config_from_options(o);
        return by_precision<Probe>(cfg, o, static_cast<const Checkpoint*>(nullptr), cfg);
      }
      const auto ckpt = load_checkpoint(o.ckpt);
      const auto cfg = config_from_checkpoint(ckpt, o);
      return by_precision<Probe>(cfg, o, &ckpt, cfg);
    }
    if (*bch) return bench_cmd(o);
    if (*gc) return gradcheck_cmd(o);
    if (*sw) {
      const auto cfg = config_from_options(o);
      return by_precision<Sweep>(cfg, o, cfg);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "lomar: config error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "lomar: error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "lomar: unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
