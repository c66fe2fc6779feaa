#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bnnfi/fault.hpp"
#include "bnnfi/network.hpp"

namespace bnnfi {

enum class CampaignMode { Exhaustive, Statistical };

struct CampaignConfig {
  CampaignMode mode = CampaignMode::Exhaustive;
  SpaceKind space = SpaceKind::Transient;
  double confidence = 0.99;
  double moe = 0.01;
  double p = 0.5;
  std::optional<std::uint64_t> seed;
  double budget_factor = 2.0;
  std::size_t workers = 1;
  std::string model;   // model file path; empty means a generated reference model
  std::string images;  // IDX images path; empty means synthetic images
  std::string labels;
  std::vector<std::size_t> indices{0};
  std::vector<std::size_t> fifo_depths;  // empty means defaults
  ArgmaxMode argmax = ArgmaxMode::Masked;

  /// Throws ConfigError (e.g. statistical mode without a seed).
  void validate() const;
  /// Stable text form of every field that influences results (workers excluded).
  std::string canonical() const;
};

/// Parses the `key = value` config format. Blank lines and `#` comments are ignored.
/// Keys: mode, space, confidence, moe, p, seed, budget_factor, workers, model, images,
/// labels, indices, fifo_depths, argmax.
CampaignConfig parse_config(std::string_view text);
CampaignConfig load_config(const std::filesystem::path& path);

struct FaultPlan {
  SpaceKind space = SpaceKind::Transient;
  std::uint64_t population = 0;
  /// Fault uids in execution order (ascending).
  std::vector<std::uint64_t> uids;
  std::size_t run_length = 0;
  std::size_t inputs = 1;
  /// Rough cost in simulated cycles over all planned runs.
  std::uint64_t estimated_cycles = 0;

  std::uint64_t sample_size() const noexcept { return uids.size(); }
  std::uint64_t total_runs() const noexcept { return uids.size() * inputs; }
};

struct CampaignSummary {
  std::uint64_t planned = 0;
  std::uint64_t completed = 0;
  std::array<std::uint64_t, kOutcomeCount> counts{};
  bool finished() const noexcept { return completed == planned; }
};

struct ExecuteOptions {
  std::filesystem::path records;
  /// Defaults to `<records>.ckpt`.
  std::filesystem::path checkpoint;
  /// Stop after this many new records (simulates an interruption).
  std::optional<std::uint64_t> stop_after;
  std::size_t batch_size = 4096;
  std::function<void(std::uint64_t done, std::uint64_t total)> progress;
};

/// A planned campaign over one model and a list of inputs. Golden runs are computed once
/// per input at construction.
class Campaign {
 public:
  Campaign(CampaignConfig config, Model model, std::vector<BitVector> inputs);

  const CampaignConfig& config() const noexcept { return config_; }
  const Model& model() const noexcept { return *model_; }
  const FaultPlan& plan() const noexcept { return plan_; }
  const std::vector<GoldenRun>& goldens() const noexcept { return goldens_; }
  const std::vector<RegisterDescriptor>& registers() const noexcept { return registers_; }
  FaultDescriptor descriptor(std::uint64_t uid) const;
  /// Hex digest over the canonical config, the model bytes and the inputs.
  const std::string& digest() const noexcept { return digest_; }

  /// Executes runs [begin, end) of the plan in parallel and returns them in plan order.
  std::vector<RunRecord> run_range(std::uint64_t begin, std::uint64_t end) const;
  std::vector<RunRecord> run_all() const { return run_range(0, plan_.total_runs()); }

  /// Fresh execution: truncates the records file and writes meta, records and checkpoint.
  CampaignSummary execute(const ExecuteOptions& options) const;
  /// Continues from the checkpoint. Refuses when the digest does not match.
  CampaignSummary resume(const ExecuteOptions& options) const;

  /// Metadata written next to the records (`<records>.meta.json`).
  std::string meta_json() const;

 private:
  CampaignSummary continue_from(const ExecuteOptions& options, std::uint64_t completed,
                                const std::array<std::uint64_t, kOutcomeCount>& counts) const;

  CampaignConfig config_;
  std::shared_ptr<const Model> model_;
  std::vector<BitVector> inputs_;
  std::vector<GoldenRun> goldens_;
  std::vector<RegisterDescriptor> registers_;
  std::optional<TransientSpace> transient_;
  std::optional<PersistentSpace> persistent_;
  FaultPlan plan_;
  std::string digest_;
};

/// Resolves the model and input images named by a config (generated reference model and
/// seeded synthetic inputs when paths are empty). Synthetic inputs are images for 784-wide
/// models and random bit vectors otherwise.
Model load_campaign_model(const CampaignConfig& config);
std::vector<BitVector> load_campaign_inputs(const CampaignConfig& config,
                                            std::size_t input_features = 784);

std::string record_to_json(const RunRecord& record);
RunRecord record_from_json(std::string_view line);
std::vector<RunRecord> read_records(const std::filesystem::path& path);

/// Records sorted by (input_index, fault_uid).
std::vector<RunRecord> canonical_sort(std::vector<RunRecord> records);

std::filesystem::path default_checkpoint_path(const std::filesystem::path& records);
std::filesystem::path meta_path(const std::filesystem::path& records);

}  // namespace bnnfi
