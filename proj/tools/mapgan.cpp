// mapgan: command-line driver for the satellite-to-map translation toolkit.
//
// Subcommands:
//   train      fit a generator/discriminator pair on a paired-image corpus
//   infer      translate bare satellite images with a trained checkpoint
//   gradcheck  verify analytic gradients against central differences
//   inspect    print a checkpoint manifest
//
// Exit codes: 0 success, 1 runtime or verification failure, 2 usage error.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <mapgan/mapgan.hpp>

namespace fs = std::filesystem;

namespace {

std::vector<std::string> list_images(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg")
      files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

mapgan::Tensor as_batch_of_one(const mapgan::Tensor& chw) {
  mapgan::Tensor out =
      mapgan::Tensor::zeros({1, chw.dim(0), chw.dim(1), chw.dim(2)});
  std::copy(chw.data(), chw.data() + chw.numel(), out.data());
  return out;
}

int run_train(const mapgan::TrainConfig& cfg, const std::string& resume,
              bool dump_config) {
  if (dump_config) {
    const nlohmann::json j = cfg;
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  if (cfg.data_root.empty() || !fs::is_directory(cfg.data_root)) {
    std::cerr << "mapgan train: --data-dir '" << cfg.data_root
              << "' is not a directory\n";
    return 2;
  }
  if (!fs::is_directory(fs::path(cfg.data_root) / "train")) {
    std::cerr << "mapgan train: no 'train' split under '" << cfg.data_root
              << "'\n";
    return 2;
  }
  if (!resume.empty() && !fs::is_regular_file(resume)) {
    std::cerr << "mapgan train: checkpoint '" << resume << "' not found\n";
    return 2;
  }
  try {
    mapgan::validate_train_config(cfg);
  } catch (const std::invalid_argument& e) {
    std::cerr << "mapgan train: " << e.what() << "\n";
    return 2;
  }
  try {
    const mapgan::FitResult result =
        mapgan::fit(cfg, resume, [](const mapgan::StepMetrics& m) {
          std::cout << mapgan::format_metrics(m) << "\n";
        });
    std::cout << "done: " << result.history.size()
              << " steps this run, outputs under '" << cfg.output_dir << "'\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "mapgan train: " << e.what() << "\n";
    return 1;
  }
}

int run_infer(const std::string& checkpoint, const std::string& input,
              const std::string& out_dir, bool stochastic, uint64_t seed) {
  if (!fs::is_regular_file(checkpoint)) {
    std::cerr << "mapgan infer: checkpoint '" << checkpoint << "' not found\n";
    return 2;
  }
  if (!fs::exists(input)) {
    std::cerr << "mapgan infer: input '" << input << "' not found\n";
    return 2;
  }
  try {
    const mapgan::CheckpointData ckpt = mapgan::load_checkpoint(checkpoint);
    mapgan::Rng init_rng(0);
    mapgan::GeneratorConfig gcfg;
    gcfg.image_size = ckpt.config.resize_to;
    gcfg.base_channels = ckpt.config.base_channels;
    mapgan::Generator G = mapgan::Generator::create(gcfg, init_rng);
    mapgan::apply_generator(ckpt, G);

    std::vector<std::string> inputs;
    if (fs::is_directory(input)) {
      inputs = list_images(input);
      if (inputs.empty())
        throw std::runtime_error("no images under '" + input + "'");
    } else {
      inputs.push_back(input);
    }
    fs::create_directories(out_dir);

    mapgan::Rng rng(seed);
    const int size = gcfg.image_size;
    const mapgan::ForwardMode mode =
        stochastic ? mapgan::kStochasticEval : mapgan::kEvalMode;
    for (const std::string& file : inputs) {
      const mapgan::ImageU8 img = mapgan::load_image(file);
      if (img.width != size || img.height != size)
        throw std::runtime_error(
            "input '" + file + "' is " + std::to_string(img.width) + "x" +
            std::to_string(img.height) + ", this checkpoint expects " +
            std::to_string(size) + "x" + std::to_string(size));
      const mapgan::Tensor x = as_batch_of_one(mapgan::normalize(img));
      const mapgan::Tensor y = mapgan::generator_forward(G, x, mode, rng);
      const fs::path out_path =
          fs::path(out_dir) / (fs::path(file).stem().string() + ".png");
      mapgan::save_png(out_path.string(),
                       mapgan::denormalize(mapgan::slice_sample(y, 0)));
      std::cout << out_path.string() << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "mapgan infer: " << e.what() << "\n";
    return 1;
  }
}

int run_gradcheck(const std::string& op_filter, float epsilon, uint64_t seed) {
  std::vector<mapgan::GradcheckReport> reports;
  try {
    reports = mapgan::run_gradcheck_suite(op_filter, epsilon, seed);
  } catch (const std::exception& e) {
    std::cerr << "mapgan gradcheck: " << e.what() << "\n";
    return 1;
  }
  if (reports.empty()) {
    std::cerr << "mapgan gradcheck: no op matches '" << op_filter << "'\n";
    return 2;
  }
  bool all_pass = true;
  std::printf("%-32s %14s %10s  %s\n", "op", "max_rel_err", "tol", "status");
  for (const auto& r : reports) {
    std::printf("%-32s %14.6e %10.1e  %s\n", r.op.c_str(), r.max_rel_err,
                r.tolerance, r.pass ? "PASS" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

int run_inspect(const std::string& checkpoint) {
  if (!fs::is_regular_file(checkpoint)) {
    std::cerr << "mapgan inspect: checkpoint '" << checkpoint
              << "' not found\n";
    return 2;
  }
  try {
    const mapgan::CheckpointData ckpt = mapgan::load_checkpoint(checkpoint);
    std::cout << ckpt.manifest.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "mapgan inspect: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional-GAN satellite-to-map translation toolkit"};
  app.require_subcommand(1);

  mapgan::TrainConfig cfg;
  std::string gan_loss = mapgan::to_string(cfg.gan_loss);
  std::string resume;
  bool dump_config = false;
  CLI::App* train =
      app.add_subcommand("train", "train a generator/discriminator pair");
  train->add_option("--data-dir", cfg.data_root,
                    "dataset root containing a train/ split of paired images");
  train->add_option("--epochs", cfg.epochs, "full passes over the train split")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--batch-size", cfg.batch_size, "samples per step")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--lr", cfg.lr, "Adam learning rate")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--beta1", cfg.beta1, "Adam first-moment decay")
      ->capture_default_str();
  train->add_option("--seed", cfg.seed, "rng seed")
      ->capture_default_str()
      ->envname("MAPGAN_SEED");
  train
      ->add_option("--gan-loss", gan_loss,
                   "generator objective: saturating or non-saturating")
      ->capture_default_str()
      ->check(CLI::IsMember({"saturating", "non-saturating"}));
  train
      ->add_option("--l1-weight", cfg.l1_weight,
                   "weight of the L1 reconstruction term (0 disables)")
      ->capture_default_str();
  train
      ->add_option("--adv-weight", cfg.adv_weight,
                   "weight of the adversarial term (0 disables)")
      ->capture_default_str();
  train
      ->add_option("--checkpoint-every", cfg.checkpoint_every,
                   "checkpoint every N epochs")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train
      ->add_option("--sample-every", cfg.sample_every,
                   "write a sample grid every N steps (0 disables)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  train->add_option("--out", cfg.output_dir, "output directory")
      ->capture_default_str();
  train
      ->add_option("--resize-to", cfg.resize_to,
                   "square side each pair half is resized to (power of two)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train
      ->add_option("--base-channels", cfg.base_channels,
                   "channel width of the first encoder stage")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train
      ->add_option("--d-steps", cfg.d_steps,
                   "discriminator updates per generator update")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train
      ->add_option("--max-steps", cfg.max_steps,
                   "stop after N global steps (0 = run all epochs)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  train->add_flag("--swap-halves", cfg.swap_halves,
                  "corpus stores map left, satellite right");
  train->add_option("--resume", resume, "checkpoint to resume from");
  train->add_flag("--dump-config", dump_config,
                  "print the effective config as JSON and exit");

  std::string in_checkpoint, in_input;
  std::string in_out = ".";
  bool stochastic = false;
  uint64_t infer_seed = 0;
  CLI::App* infer = app.add_subcommand(
      "infer", "translate satellite images with a trained checkpoint");
  infer->add_option("--checkpoint", in_checkpoint, "trained checkpoint file")
      ->required();
  infer
      ->add_option("--input", in_input,
                   "satellite image or directory of images")
      ->required();
  infer->add_option("--out", in_out, "output directory")
      ->capture_default_str();
  infer->add_flag("--stochastic-infer", stochastic,
                  "keep decoder dropout active (varied outputs)");
  infer->add_option("--seed", infer_seed, "rng seed for --stochastic-infer")
      ->capture_default_str()
      ->envname("MAPGAN_SEED");

  std::string op_filter;
  float epsilon = 1e-3f;
  uint64_t gc_seed = 0;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "verify analytic gradients against central differences");
  gradcheck->add_option("--epsilon", epsilon, "finite-difference step")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  gradcheck->add_option(
      "--op", op_filter,
      "only run suite entries whose name contains this substring");
  gradcheck->add_option("--seed", gc_seed, "rng seed")
      ->capture_default_str()
      ->envname("MAPGAN_SEED");

  std::string ins_checkpoint;
  CLI::App* inspect =
      app.add_subcommand("inspect", "print a checkpoint manifest");
  inspect->add_option("--checkpoint", ins_checkpoint, "checkpoint file")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  cfg.gan_loss = mapgan::gan_loss_from_string(gan_loss);
  if (train->parsed()) return run_train(cfg, resume, dump_config);
  if (infer->parsed())
    return run_infer(in_checkpoint, in_input, in_out, stochastic, infer_seed);
  if (gradcheck->parsed()) return run_gradcheck(op_filter, epsilon, gc_seed);
  if (inspect->parsed()) return run_inspect(ins_checkpoint);
  return 2;
}
