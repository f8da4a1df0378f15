#ifndef MAPGAN_TRAIN_HPP_
#define MAPGAN_TRAIN_HPP_

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mapgan/data.hpp"
#include "mapgan/gan.hpp"
#include "mapgan/image.hpp"
#include "mapgan/rng.hpp"
#include "mapgan/tensor.hpp"

namespace mapgan {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

// -------------------------------------------------------------------------
// configuration

struct TrainConfig {
  std::string data_root;
  int epochs = 1;
  int batch_size = 10;
  float lr = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  GanLossVariant gan_loss = GanLossVariant::NonSaturating;
  float l1_weight = 0.0f;
  float adv_weight = 1.0f;
  uint64_t seed = 0;
  int checkpoint_every = 1;  // epochs
  int sample_every = 100;    // steps; 0 disables sample grids
  int resize_to = 256;
  int base_channels = 64;
  int d_steps = 1;  // discriminator updates per generator update
  bool swap_halves = false;
  std::string output_dir = "out";
  int64_t max_steps = 0;  // 0 = run all epochs; used to stop mid-epoch
};

inline GanLossVariant gan_loss_from_string(const std::string& s) {
  if (s == "saturating") return GanLossVariant::Saturating;
  if (s == "non-saturating") return GanLossVariant::NonSaturating;
  throw std::invalid_argument("unknown gan loss variant '" + s +
                              "' (expected saturating or non-saturating)");
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"data_root", c.data_root},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lr", c.lr},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"gan_loss", to_string(c.gan_loss)},
                     {"l1_weight", c.l1_weight},
                     {"adv_weight", c.adv_weight},
                     {"seed", c.seed},
                     {"checkpoint_every", c.checkpoint_every},
                     {"sample_every", c.sample_every},
                     {"resize_to", c.resize_to},
                     {"base_channels", c.base_channels},
                     {"d_steps", c.d_steps},
                     {"swap_halves", c.swap_halves},
                     {"output_dir", c.output_dir},
                     {"max_steps", c.max_steps}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("data_root").get_to(c.data_root);
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("lr").get_to(c.lr);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  c.gan_loss = gan_loss_from_string(j.at("gan_loss").get<std::string>());
  j.at("l1_weight").get_to(c.l1_weight);
  j.at("adv_weight").get_to(c.adv_weight);
  j.at("seed").get_to(c.seed);
  j.at("checkpoint_every").get_to(c.checkpoint_every);
  j.at("sample_every").get_to(c.sample_every);
  j.at("resize_to").get_to(c.resize_to);
  j.at("base_channels").get_to(c.base_channels);
  j.at("d_steps").get_to(c.d_steps);
  j.at("swap_halves").get_to(c.swap_halves);
  j.at("output_dir").get_to(c.output_dir);
  j.at("max_steps").get_to(c.max_steps);
}

inline void validate_train_config(const TrainConfig& cfg) {
  using detail::check;
  check(cfg.epochs >= 1, "config: epochs must be >= 1");
  check(cfg.batch_size >= 1, "config: batch_size must be >= 1");
  check(cfg.lr > 0.0f, "config: lr must be positive");
  check(cfg.beta1 >= 0.0f && cfg.beta1 < 1.0f, "config: beta1 must be in [0,1)");
  check(cfg.beta2 >= 0.0f && cfg.beta2 < 1.0f, "config: beta2 must be in [0,1)");
  check(cfg.l1_weight >= 0.0f, "config: l1_weight must be >= 0");
  check(cfg.adv_weight >= 0.0f, "config: adv_weight must be >= 0");
  check(cfg.l1_weight > 0.0f || cfg.adv_weight > 0.0f,
        "config: adv_weight and l1_weight cannot both be zero");
  check(cfg.checkpoint_every >= 1, "config: checkpoint_every must be >= 1");
  check(cfg.sample_every >= 0, "config: sample_every must be >= 0");
  check(detail::is_power_of_two(cfg.resize_to) && cfg.resize_to >= 4,
        "config: resize_to must be a power of two >= 4");
  check(cfg.base_channels >= 1, "config: base_channels must be >= 1");
  check(cfg.d_steps >= 1, "config: d_steps must be >= 1");
  check(cfg.max_steps >= 0, "config: max_steps must be >= 0");
}

// -------------------------------------------------------------------------
// metrics

struct StepMetrics {
  int64_t step = 0;  // 1-based global step
  int64_t epoch = 0;
  float d_loss = 0.0f;
  float g_adv = 0.0f;
  float g_l1 = 0.0f;
  double d_real = 0.0;  // mean D(satellite, real map)
  double d_fake = 0.0;  // mean D(satellite, G(satellite))
};

// one append-only line per step; precision chosen so parsing the line back
// reproduces the stored values exactly
inline std::string format_metrics(const StepMetrics& m) {
  std::ostringstream os;
  os << "step=" << m.step << " epoch=" << m.epoch << std::setprecision(9)
     << " d_loss=" << m.d_loss << " g_adv=" << m.g_adv << " g_l1=" << m.g_l1
     << std::setprecision(17) << " d_real=" << m.d_real
     << " d_fake=" << m.d_fake;
  return os.str();
}

// -------------------------------------------------------------------------
// training phases

struct DPhaseResult {
  float d_loss = 0.0f;
  double d_real = 0.0;
  double d_fake = 0.0;
};

// Discriminator update. The generator runs OUTSIDE any graph, so its output
// is plain data: phase-1 backward cannot reach a single G parameter.
inline DPhaseResult d_phase(const Batch& batch, Generator& G, Discriminator& D,
                            Adam& g_opt, Adam& d_opt, const TrainConfig& cfg,
                            Rng& rng) {
  (void)cfg;
  g_opt.zero_grad();
  d_opt.zero_grad();
  Tensor fake = generator_forward(G, batch.satellite, kTrainMode, rng);
  DPhaseResult res;
  {
    Graph graph;
    Tensor real_scores =
        discriminator_forward(D, batch.satellite, batch.map_img);
    Tensor fake_scores = discriminator_forward(D, batch.satellite, fake);
    Tensor loss = discriminator_loss(real_scores, fake_scores);
    res.d_loss = loss.item();
    res.d_real = mean_value(real_scores);
    res.d_fake = mean_value(fake_scores);
    if (!std::isfinite(res.d_loss))
      throw std::runtime_error("train_step: non-finite d_loss");
    graph.backward(loss);
  }
  d_opt.step();
  return res;
}

struct GPhaseResult {
  float g_adv = 0.0f;
  float g_l1 = 0.0f;
};

// Generator update on fresh discriminator scores. Backward also deposits
// gradients on D's parameters; they are discarded by the zeroing at the next
// phase boundary and D itself is not stepped here.
inline GPhaseResult g_phase(const Batch& batch, Generator& G, Discriminator& D,
                            Adam& g_opt, Adam& d_opt, const TrainConfig& cfg,
                            Rng& rng) {
  g_opt.zero_grad();
  d_opt.zero_grad();
  GPhaseResult res;
  {
    Graph graph;
    Tensor fake = generator_forward(G, batch.satellite, kTrainMode, rng);
    Tensor total;
    if (cfg.adv_weight != 0.0f) {
      Tensor fake_scores = discriminator_forward(D, batch.satellite, fake);
      Tensor adv = generator_loss(fake_scores, cfg.gan_loss);
      res.g_adv = adv.item();
      if (!std::isfinite(res.g_adv))
        throw std::runtime_error("train_step: non-finite g_adv");
      total = cfg.adv_weight == 1.0f ? adv : scale(adv, cfg.adv_weight);
    }
    if (cfg.l1_weight != 0.0f) {
      Tensor l1 = l1_loss(fake, batch.map_img);
      res.g_l1 = l1.item();
      if (!std::isfinite(res.g_l1))
        throw std::runtime_error("train_step: non-finite g_l1");
      total = total.defined() ? add_scaled(total, l1, cfg.l1_weight)
                              : scale(l1, cfg.l1_weight);
    }
    detail::check(total.defined(),
                  "train_step: adv_weight and l1_weight are both zero");
    graph.backward(total);
  }
  g_opt.step();
  return res;
}

// One batch: d_steps discriminator updates, then one generator update.
inline StepMetrics train_step(const Batch& batch, Generator& G,
                              Discriminator& D, Adam& g_opt, Adam& d_opt,
                              const TrainConfig& cfg, Rng& rng) {
  DPhaseResult d;
  for (int i = 0; i < cfg.d_steps; ++i)
    d = d_phase(batch, G, D, g_opt, d_opt, cfg, rng);
  const GPhaseResult g = g_phase(batch, G, D, g_opt, d_opt, cfg, rng);
  StepMetrics m;
  m.d_loss = d.d_loss;
  m.d_real = d.d_real;
  m.d_fake = d.d_fake;
  m.g_adv = g.g_adv;
  m.g_l1 = g.g_l1;
  return m;
}

// -------------------------------------------------------------------------
// sample grids

// [B,C,H,W] -> sample i as [C,H,W]
inline Tensor slice_sample(const Tensor& batch, int i) {
  detail::check(batch.ndim() == 4 && i >= 0 && i < batch.dim(0),
                "slice_sample: bad index");
  Tensor out = Tensor::zeros({batch.dim(1), batch.dim(2), batch.dim(3)});
  const int64_t n = out.numel();
  std::copy(batch.data() + static_cast<int64_t>(i) * n,
            batch.data() + static_cast<int64_t>(i + 1) * n, out.data());
  return out;
}

// [B,C,H,W] -> first k samples
inline Tensor head_samples(const Tensor& batch, int k) {
  detail::check(batch.ndim() == 4 && k >= 1 && k <= batch.dim(0),
                "head_samples: bad count");
  Tensor out = Tensor::zeros({k, batch.dim(1), batch.dim(2), batch.dim(3)});
  std::copy(batch.data(), batch.data() + out.numel(), out.data());
  return out;
}

// One PNG, rows = samples, columns = [satellite, generated, real map].
inline void emit_sample_grid(const std::vector<Tensor>& satellites,
                             const std::vector<Tensor>& generated,
                             const std::vector<Tensor>& reals,
                             const std::string& path) {
  detail::check(!satellites.empty() && satellites.size() == generated.size() &&
                    satellites.size() == reals.size(),
                "emit_sample_grid: column lists must be equal-length and "
                "non-empty");
  const int h = satellites[0].dim(1);
  const int w = satellites[0].dim(2);
  ImageU8 grid;
  grid.width = 3 * w;
  grid.height = static_cast<int>(satellites.size()) * h;
  grid.pixels.assign(static_cast<size_t>(grid.width) * grid.height * 3, 0);
  for (size_t row = 0; row < satellites.size(); ++row) {
    const Tensor* cols[3] = {&satellites[row], &generated[row], &reals[row]};
    for (int col = 0; col < 3; ++col) {
      detail::check(cols[col]->ndim() == 3 && cols[col]->dim(0) == 3 &&
                        cols[col]->dim(1) == h && cols[col]->dim(2) == w,
                    "emit_sample_grid: tile shape mismatch at row " +
                        std::to_string(row));
      const ImageU8 tile = denormalize(*cols[col]);
      for (int y = 0; y < h; ++y) {
        const unsigned char* src =
            tile.pixels.data() + static_cast<size_t>(y) * w * 3;
        unsigned char* dst =
            grid.pixels.data() +
            ((row * h + y) * static_cast<size_t>(grid.width) + col * w) * 3;
        std::copy(src, src + static_cast<size_t>(w) * 3, dst);
      }
    }
  }
  save_png(path, grid);
}

// -------------------------------------------------------------------------
// checkpoints

inline constexpr char kCheckpointMagic[8] = {'M', 'A', 'P', 'G',
                                             'A', 'N', 'C', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

// every tensor a training run must persist, in canonical order
inline NamedTensors checkpoint_entries(const Generator& G,
                                       const Discriminator& D,
                                       const Adam* g_opt, const Adam* d_opt) {
  NamedTensors all;
  for (auto& [n, t] : G.named_parameters()) all.emplace_back("G." + n, t);
  for (auto& [n, t] : G.named_buffers()) all.emplace_back("G." + n, t);
  for (auto& [n, t] : D.named_parameters()) all.emplace_back("D." + n, t);
  for (auto& [n, t] : D.named_buffers()) all.emplace_back("D." + n, t);
  if (g_opt)
    for (auto& [n, t] : g_opt->named_state())
      all.emplace_back("opt_g." + n, t);
  if (d_opt)
    for (auto& [n, t] : d_opt->named_state())
      all.emplace_back("opt_d." + n, t);
  return all;
}

inline void save_checkpoint(const std::string& path, const Generator& G,
                            const Discriminator& D, const Adam& g_opt,
                            const Adam& d_opt, int64_t step, const Rng& rng,
                            const TrainConfig& cfg) {
  const NamedTensors entries = checkpoint_entries(G, D, &g_opt, &d_opt);
  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["step"] = step;
  manifest["g_opt_steps"] = g_opt.step_count();
  manifest["d_opt_steps"] = d_opt.step_count();
  manifest["rng"] = rng.state();
  manifest["config"] = cfg;
  nlohmann::json tensors = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : entries) {
    const uint64_t bytes = static_cast<uint64_t>(t.numel()) * sizeof(float);
    tensors.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"offset", offset},
                       {"bytes", bytes}});
    offset += bytes;
  }
  manifest["tensors"] = std::move(tensors);
  manifest["payload_bytes"] = offset;
  const std::string mstr = manifest.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out.write(kCheckpointMagic, 8);
    const uint32_t ver = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
    const uint64_t msize = mstr.size();
    out.write(reinterpret_cast<const char*>(&msize), sizeof(msize));
    out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    for (const auto& [name, t] : entries)
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
    out.flush();
    if (!out) throw std::runtime_error("failed writing checkpoint '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

struct CheckpointData {
  int64_t step = 0;
  int64_t g_opt_steps = 0;
  int64_t d_opt_steps = 0;
  std::string rng_state;
  TrainConfig config;
  NamedTensors tensors;       // manifest order
  nlohmann::json manifest;    // as stored, for inspection
};

// Parses and validates the whole file before returning: a truncated or
// inconsistent checkpoint throws and leaves nothing partially applied.
inline CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  in.seekg(0, std::ios::end);
  const uint64_t fsize = static_cast<uint64_t>(in.tellg());
  in.seekg(0);
  const auto corrupt = [&path](const std::string& why) -> std::runtime_error {
    return std::runtime_error("checkpoint integrity error in '" + path +
                              "': " + why);
  };
  char magic[8];
  uint32_t ver = 0;
  uint64_t msize = 0;
  if (fsize < 20) throw corrupt("file shorter than header");
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  in.read(reinterpret_cast<char*>(&msize), sizeof(msize));
  if (!std::equal(magic, magic + 8, kCheckpointMagic))
    throw corrupt("bad magic");
  if (ver != kCheckpointVersion)
    throw corrupt("unsupported format version " + std::to_string(ver));
  if (20 + msize > fsize) throw corrupt("manifest extends past end of file");
  std::string mstr(msize, '\0');
  in.read(mstr.data(), static_cast<std::streamsize>(msize));

  CheckpointData ckpt;
  try {
    ckpt.manifest = nlohmann::json::parse(mstr);
    ckpt.step = ckpt.manifest.at("step").get<int64_t>();
    ckpt.g_opt_steps = ckpt.manifest.at("g_opt_steps").get<int64_t>();
    ckpt.d_opt_steps = ckpt.manifest.at("d_opt_steps").get<int64_t>();
    ckpt.rng_state = ckpt.manifest.at("rng").get<std::string>();
    ckpt.config = ckpt.manifest.at("config").get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw corrupt(std::string("malformed manifest: ") + e.what());
  }
  const uint64_t payload_bytes =
      ckpt.manifest.at("payload_bytes").get<uint64_t>();
  if (fsize != 20 + msize + payload_bytes)
    throw corrupt("payload size mismatch: manifest says " +
                  std::to_string(payload_bytes) + " bytes, file holds " +
                  std::to_string(fsize - 20 - msize));

  std::unordered_set<std::string> seen;
  for (const auto& e : ckpt.manifest.at("tensors")) {
    std::string name;
    std::vector<int> shape;
    uint64_t offset = 0, bytes = 0;
    try {
      name = e.at("name").get<std::string>();
      shape = e.at("shape").get<std::vector<int>>();
      offset = e.at("offset").get<uint64_t>();
      bytes = e.at("bytes").get<uint64_t>();
    } catch (const nlohmann::json::exception& ex) {
      throw corrupt(std::string("malformed tensor entry: ") + ex.what());
    }
    if (!seen.insert(name).second)
      throw corrupt("duplicate tensor '" + name + "'");
    Tensor t = Tensor::zeros(shape);
    if (bytes != static_cast<uint64_t>(t.numel()) * sizeof(float))
      throw corrupt("tensor '" + name + "' byte count does not match shape");
    if (offset + bytes > payload_bytes)
      throw corrupt("tensor '" + name + "' extends past payload");
    in.seekg(static_cast<std::streamoff>(20 + msize + offset));
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(bytes));
    if (!in) throw corrupt("short read on tensor '" + name + "'");
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

namespace detail {

inline void copy_checkpoint_tensor(const Tensor& src, const Tensor& dst,
                                   const std::string& name) {
  if (src.shape() != dst.shape())
    throw std::runtime_error("checkpoint tensor '" + name + "' has shape " +
                             shape_str(src.shape()) + ", model expects " +
                             shape_str(dst.shape()));
  Tensor target = dst;  // shares storage
  std::copy(src.data(), src.data() + src.numel(), target.data());
}

}  // namespace detail

// Full training-state restore; the checkpoint must contain exactly the
// tensors this (G, D, optimizers) quadruple persists.
inline void apply_checkpoint(const CheckpointData& ckpt, Generator& G,
                             Discriminator& D, Adam& g_opt, Adam& d_opt) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : ckpt.tensors) by_name.emplace(name, &t);
  const NamedTensors expected = checkpoint_entries(G, D, &g_opt, &d_opt);
  if (by_name.size() != expected.size())
    throw std::runtime_error(
        "checkpoint holds " + std::to_string(by_name.size()) +
        " tensors, model expects " + std::to_string(expected.size()) +
        " (architecture mismatch)");
  for (const auto& [name, t] : expected) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint is missing tensor '" + name + "'");
    detail::copy_checkpoint_tensor(*it->second, t, name);
  }
  g_opt.set_step_count(ckpt.g_opt_steps);
  d_opt.set_step_count(ckpt.d_opt_steps);
}

// Generator-only restore for inference; optimizer and discriminator tensors
// in the checkpoint are ignored.
inline void apply_generator(const CheckpointData& ckpt, Generator& G) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : ckpt.tensors) by_name.emplace(name, &t);
  NamedTensors expected;
  for (auto& [n, t] : G.named_parameters()) expected.emplace_back("G." + n, t);
  for (auto& [n, t] : G.named_buffers()) expected.emplace_back("G." + n, t);
  for (const auto& [name, t] : expected) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint is missing tensor '" + name + "'");
    detail::copy_checkpoint_tensor(*it->second, t, name);
  }
}

// -------------------------------------------------------------------------
// fit

struct FitResult {
  Generator g;
  Discriminator d;
  std::vector<StepMetrics> history;
};

// Alternating adversarial training over full epochs. Epoch shuffle order is
// a pure function of (seed, epoch), and eval-mode sample rendering consumes
// no rng draws, so a resumed run replays the exact batch and noise sequence
// of an uninterrupted one.
inline FitResult fit(
    const TrainConfig& cfg, const std::string& resume_path = "",
    const std::function<void(const StepMetrics&)>& on_step = {}) {
  namespace fs = std::filesystem;
  validate_train_config(cfg);
  Dataset ds =
      Dataset::open(cfg.data_root, "train", cfg.resize_to, cfg.swap_halves);
  if (ds.size() == 0)
    throw std::runtime_error("empty train split under '" + cfg.data_root + "'");

  Rng rng(cfg.seed);
  GeneratorConfig gcfg;
  gcfg.image_size = cfg.resize_to;
  gcfg.base_channels = cfg.base_channels;
  Generator G = Generator::create(gcfg, rng);
  DiscriminatorConfig dcfg;
  dcfg.base_channels = cfg.base_channels;
  Discriminator D = Discriminator::create(dcfg, rng);
  AdamConfig ocfg{cfg.lr, cfg.beta1, cfg.beta2, 1e-8f};
  Adam g_opt(G.named_parameters(), ocfg);
  Adam d_opt(D.named_parameters(), ocfg);

  int64_t start_step = 0;
  if (!resume_path.empty()) {
    const CheckpointData ckpt = load_checkpoint(resume_path);
    if (ckpt.config.resize_to != cfg.resize_to ||
        ckpt.config.base_channels != cfg.base_channels)
      throw std::runtime_error(
          "checkpoint architecture (resize_to " +
          std::to_string(ckpt.config.resize_to) + ", base_channels " +
          std::to_string(ckpt.config.base_channels) +
          ") does not match the requested config");
    apply_checkpoint(ckpt, G, D, g_opt, d_opt);
    rng.restore(ckpt.rng_state);
    start_step = ckpt.step;
  }

  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir / "checkpoints");
  fs::create_directories(out_dir / "samples");
  std::ofstream mlog(out_dir / "metrics.log", std::ios::app);
  if (!mlog)
    throw std::runtime_error("cannot open metrics log under '" +
                             cfg.output_dir + "'");

  const int64_t n = static_cast<int64_t>(ds.size());
  const int64_t spe = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total = spe * cfg.epochs;

  FitResult result{G, D, {}};
  std::vector<size_t> order;
  int64_t order_epoch = -1;
  int64_t step = start_step;
  for (; step < total && (cfg.max_steps == 0 || step < cfg.max_steps); ++step) {
    const int64_t epoch = step / spe;
    const int64_t bi = step % spe;
    if (epoch != order_epoch) {
      order = shuffled_order(static_cast<size_t>(n), mix_seed(cfg.seed, epoch));
      order_epoch = epoch;
    }
    const size_t begin = static_cast<size_t>(bi) * cfg.batch_size;
    const size_t end =
        std::min(static_cast<size_t>(n), begin + cfg.batch_size);
    Batch batch = assemble_batch(ds, order, begin, end);

    StepMetrics m = train_step(batch, G, D, g_opt, d_opt, cfg, rng);
    m.step = step + 1;
    m.epoch = epoch;
    result.history.push_back(m);
    mlog << format_metrics(m) << '\n';
    mlog.flush();
    if (on_step) on_step(m);

    if (cfg.sample_every > 0 && (step + 1) % cfg.sample_every == 0) {
      const int k = static_cast<int>(std::min<size_t>(3, end - begin));
      Tensor sats = head_samples(batch.satellite, k);
      Tensor gens = generator_forward(G, sats, kEvalMode, rng);
      std::vector<Tensor> sat_tiles, gen_tiles, real_tiles;
      for (int i = 0; i < k; ++i) {
        sat_tiles.push_back(slice_sample(sats, i));
        gen_tiles.push_back(slice_sample(gens, i));
        real_tiles.push_back(slice_sample(batch.map_img, i));
      }
      emit_sample_grid(
          sat_tiles, gen_tiles, real_tiles,
          (out_dir / "samples" / ("step_" + std::to_string(step + 1) + ".png"))
              .string());
    }
    if (bi == spe - 1 && (epoch + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(
          (out_dir / "checkpoints" / ("ckpt_" + std::to_string(epoch + 1) + ".bin"))
              .string(),
          G, D, g_opt, d_opt, step + 1, rng, cfg);
  }
  // a max_steps stop can land mid-epoch; persist the split point so the run
  // can resume from exactly here
  if (cfg.max_steps > 0 && step == cfg.max_steps && step < total)
    save_checkpoint(
        (out_dir / "checkpoints" / ("ckpt_step_" + std::to_string(step) + ".bin"))
            .string(),
        G, D, g_opt, d_opt, step, rng, cfg);
  return result;
}

}  // namespace mapgan

#endif  // MAPGAN_TRAIN_HPP_
