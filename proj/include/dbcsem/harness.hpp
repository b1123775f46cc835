#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dbcsem/baselines.hpp"
#include "dbcsem/broadcast.hpp"
#include "dbcsem/channel.hpp"
#include "dbcsem/datahub.hpp"
#include "dbcsem/fusion.hpp"
#include "dbcsem/jscc.hpp"
#include "dbcsem/nn_core.hpp"
#include "dbcsem/similarity.hpp"

namespace dbcsem {

using Json = nlohmann::ordered_json;

struct DataConfig {
  PairingMode mode = PairingMode::same_dataset_disjoint;
  DatasetSpec user1;
  std::optional<DatasetSpec> user2;

  PairingPolicy policy() const { return {mode, user1, user2}; }
};

struct TrainConfig {
  std::int64_t epochs = 30;
  std::int64_t batch_size = 64;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  CsiSampling csi;
  // weight on the better user in the TD / PA loss
  double lambda = 0.3;
  // 0 disables the cap; otherwise training stops after this many steps
  std::int64_t max_steps = 0;
};

struct EvalConfig {
  std::vector<double> snr1_grid{5, 7, 9, 11, 13, 15, 17, 19};
  double gap_db = 5.0;
  std::vector<double> sigma_e_grid{0.0, 0.5, 1.0};
  std::vector<double> gap_grid{1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<double> ratio_grid{0.3, 0.5, 0.7};
  // fixed snr1 of the gap sweep
  double gap_sweep_snr1_db = 13.0;
  std::int64_t batch_size = 100;
  std::uint64_t seed = 0;
};

/// Everything a run needs; validated before any compute and echoed verbatim
/// next to its results.
struct RunConfig {
  Scheme scheme = Scheme::sf;
  double alpha = 0.5;
  double beta = 0.5;
  double gamma = 0.5;
  double zeta = 0.2;
  double cbr = 0.25;
  JsccConfig jscc = JsccConfig::low_res();
  FusionConfig fusion = FusionConfig::low_res();
  DataConfig data;
  TrainConfig train;
  EvalConfig eval;
  std::filesystem::path out = "runs";

  void validate() const;
  /// n complex channel uses per image pair.
  std::int64_t channel_uses() const;
  /// The scheme's resource ratio (alpha, beta, gamma or zeta).
  double ratio() const;
  void set_ratio(double value);
  /// Fills derived fields (fusion channel uses from cbr, alpha into fusion).
  void resolve();

  Json to_json() const;
  static RunConfig from_json(const Json& j);
  static RunConfig from_file(const std::filesystem::path& file);

  /// Hex hash of everything that shapes a trained model (not eval or out).
  std::string checkpoint_id() const;
  /// Hex hash of the architecture alone.
  std::string architecture_id() const;
};

BroadcastModel build_model(const RunConfig& config);

// ---- checkpoints ------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainProgress {
  std::int64_t next_step = 0;
  std::vector<double> epoch_mean_l3;
  std::vector<double> epoch_mean_loss;
  // running sums of the epoch in progress
  double partial_l3 = 0;
  double partial_loss = 0;
  std::int64_t partial_count = 0;
};

/// Binary file: magic, format version, config JSON, progress JSON, then named
/// tensor groups (parameters and, when given, Adam moments).
void save_checkpoint(const std::filesystem::path& file, const RunConfig& config, torch::nn::Module& model,
                     torch::optim::Adam* optimizer, const TrainProgress& progress);

struct LoadedCheckpoint {
  RunConfig config;
  TrainProgress progress;
  BroadcastModel model;
  std::string id;
};

/// Rebuilds the model from the embedded config. Format or architecture
/// mismatches raise VersionError.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& file);

/// Restores parameters (and optimizer moments) into an existing model whose
/// config must match the file.
TrainProgress restore_checkpoint(const std::filesystem::path& file, const RunConfig& config,
                                 torch::nn::Module& model, torch::optim::Adam* optimizer);

/// out/checkpoints/<checkpoint_id>/
std::filesystem::path checkpoint_dir(const RunConfig& config);
std::filesystem::path latest_checkpoint(const RunConfig& config);

// ---- training ---------------------------------------------------------------

struct StepRecord {
  std::int64_t step = 0;
  double l1 = 0;
  double l2 = 0;
  double l3 = 0;
  double psnr1 = 0;
  double psnr2 = 0;
  double w1 = 0;
  double w2 = 0;
  double snr1 = 0;
  double snr2 = 0;
  double loss = 0;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  TrainProgress progress;
  std::vector<StepRecord> steps;  // the steps run by this call
  bool from_cache = false;
};

struct TrainOptions {
  bool resume = true;
  // stop after this many steps in this call (0 = run to the end)
  std::int64_t step_limit = 0;
  std::function<void(const StepRecord&)> on_step;
};

/// Adam on the scheme's loss (L3 for SF, the lambda-combined MSE for TD/PA),
/// one CSI draw per batch. Writes config.json, train_log.csv, epochs.csv and
/// checkpoints under checkpoint_dir(config).
TrainResult train(const RunConfig& config, const TrainOptions& options = {});

/// One optimizer step; exposed for resume checks.
StepRecord train_step(BroadcastModelImpl& model, torch::optim::Adam& optimizer, const RunConfig& config,
                      const ImagePair& pair, std::int64_t step);

// ---- evaluation -------------------------------------------------------------

struct PerformancePoint {
  Scheme scheme = Scheme::sf;
  double ratio = 0;
  double snr1_db = 0;
  double snr2_db = 0;
  double psnr1_db = 0;
  double psnr2_db = 0;
  double sigma_e = 0;
  std::uint64_t seed = 0;
  std::string checkpoint_id;
  std::int64_t channel_uses = 0;
  std::int64_t channel_budget = 0;
  std::int64_t images = 0;
  // codec reconstructions that fell back to the mean colour (SIC only)
  std::int64_t fallbacks = 0;
};

Json to_json(const PerformancePoint& point);
void write_points(const std::vector<PerformancePoint>& points, const std::filesystem::path& csv,
                  const std::filesystem::path& json);
std::vector<PerformancePoint> read_points_csv(const std::filesystem::path& csv);

/// One point per state over the configured test split. sigma_e > 0 feeds
/// perturbed CSI to every CSI encoder while the channel keeps the true SNRs.
std::vector<PerformancePoint> evaluate(const LoadedCheckpoint& checkpoint, const std::vector<ChannelState>& states,
                                       double sigma_e);
std::vector<PerformancePoint> evaluate(BroadcastModelImpl& model, const RunConfig& config,
                                       const std::vector<ChannelState>& states, double sigma_e,
                                       const std::string& checkpoint_id);

/// Superposition coding + codec point: each image gets floor(n R_j) bits.
std::vector<PerformancePoint> evaluate_sic(const RunConfig& config, const std::vector<ChannelState>& states,
                                           const CodecAdapter& adapter);

/// (snr1, snr1 - gap) for every snr1.
std::vector<ChannelState> snr_grid(const std::vector<double>& snr1_db, double gap_db);
/// (snr1, snr1 - gap) for every gap.
std::vector<ChannelState> gap_grid(double snr1_db, const std::vector<double>& gaps_db);

/// Throws ConfigError if a point spent a different number of channel uses
/// than its budget.
void audit_budget(const std::vector<PerformancePoint>& points);

struct RegionResult {
  Scheme scheme = Scheme::sf;
  ChannelState state;
  std::vector<PerformancePoint> points;  // sorted by ratio
};

/// One trained model per ratio (trained when absent and allowed), each
/// evaluated at the state. SIC uses rate math and the codec only.
RegionResult region_sweep(const RunConfig& config, const std::vector<double>& ratios, const ChannelState& state,
                          bool allow_train, const CodecAdapter* adapter = nullptr);

nn::ParameterReport count_parameters(const LoadedCheckpoint& checkpoint);

// ---- similarity -------------------------------------------------------------

/// User-1 encoder outputs of the first `count` test images as C x (h*w)
/// matrices, at the given CSI.
std::vector<FeatureMatrix> encoded_features(SfSystemImpl& model, const ImageBatch& images,
                                            const ChannelState& csi);

struct SimilarityReport {
  SimilarityMatrix rv2;
  SimilarityMatrix pearson;
  double median_rv2 = 0;
  double median_pearson = 0;
};

SimilarityReport similarity_report(SfSystemImpl& model, const ImageBatch& images, const ChannelState& csi);

// ---- persistence ------------------------------------------------------------

void write_json(const std::filesystem::path& file, const Json& j);
/// Writes through a temporary file and renames; failures raise Error.
void write_text_atomic(const std::filesystem::path& file, const std::string& text);

}  // namespace dbcsem
