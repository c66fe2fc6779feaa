#include "bnnfi/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "bnnfi/error.hpp"
#include "bnnfi/io.hpp"
#include "bnnfi/random.hpp"

namespace bnnfi {

using ojson = nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + ": expected a number, got '" + v + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end || v.empty()) {
    throw ConfigError("config: " + key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(static_cast<std::size_t>(parse_uint(key, trim(item))));
  }
  if (out.empty()) throw ConfigError("config: " + key + ": empty list");
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string format_double(double d) {
  std::ostringstream os;
  os << std::setprecision(17) << d;
  return os.str();
}

std::uint64_t fnv1a(std::uint64_t h, std::span<const std::uint8_t> bytes) {
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  return fnv1a(h, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

void write_text_atomically(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string checkpoint_json(const std::string& digest, std::uint64_t completed, std::uint64_t planned) {
  ojson j;
  j["digest"] = digest;
  j["completed"] = completed;
  j["planned"] = planned;
  return j.dump() + "\n";
}

}  // namespace

void CampaignConfig::validate() const {
  if (mode == CampaignMode::Statistical) {
    if (!seed) throw ConfigError("config: statistical mode requires a seed");
    confidence_quantile(confidence);
    if (!(moe > 0.0 && moe < 1.0)) throw ConfigError("config: moe must be in (0, 1)");
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("config: p must be in (0, 1)");
  }
  if (!(budget_factor >= 1.0)) throw ConfigError("config: budget_factor must be >= 1");
  if (workers == 0) throw ConfigError("config: workers must be >= 1");
  if (indices.empty()) throw ConfigError("config: at least one input index is required");
  if (!labels.empty() && images.empty()) throw ConfigError("config: labels given without images");
}

std::string CampaignConfig::canonical() const {
  std::ostringstream os;
  os << "mode=" << (mode == CampaignMode::Exhaustive ? "exhaustive" : "statistical") << '\n';
  os << "space=" << space_name(space) << '\n';
  if (mode == CampaignMode::Statistical) {
    os << "confidence=" << format_double(confidence) << '\n';
    os << "moe=" << format_double(moe) << '\n';
    os << "p=" << format_double(p) << '\n';
  }
  os << "seed=" << (seed ? std::to_string(*seed) : "none") << '\n';
  os << "budget_factor=" << format_double(budget_factor) << '\n';
  os << "model=" << model << '\n';
  os << "images=" << images << '\n';
  os << "indices=" << join(indices) << '\n';
  os << "fifo_depths=" << join(fifo_depths) << '\n';
  os << "argmax=" << (argmax == ArgmaxMode::Masked ? "masked" : "raw") << '\n';
  return os.str();
}

CampaignConfig parse_config(std::string_view text) {
  CampaignConfig c;
  bool have_stat_params = false;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key == "mode") {
      if (value == "exhaustive") {
        c.mode = CampaignMode::Exhaustive;
      } else if (value == "statistical") {
        c.mode = CampaignMode::Statistical;
      } else {
        throw ConfigError("config: mode must be exhaustive or statistical");
      }
    } else if (key == "space") {
      if (value == "transient") {
        c.space = SpaceKind::Transient;
      } else if (value == "persistent") {
        c.space = SpaceKind::Persistent;
      } else {
        throw ConfigError("config: space must be transient or persistent");
      }
    } else if (key == "confidence") {
      c.confidence = parse_double(key, value);
      have_stat_params = true;
    } else if (key == "moe") {
      c.moe = parse_double(key, value);
      have_stat_params = true;
    } else if (key == "p") {
      c.p = parse_double(key, value);
      have_stat_params = true;
    } else if (key == "seed") {
      c.seed = parse_uint(key, value);
    } else if (key == "budget_factor") {
      c.budget_factor = parse_double(key, value);
    } else if (key == "workers") {
      c.workers = static_cast<std::size_t>(parse_uint(key, value));
    } else if (key == "model") {
      c.model = value;
    } else if (key == "images") {
      c.images = value;
    } else if (key == "labels") {
      c.labels = value;
    } else if (key == "indices") {
      c.indices = parse_list(key, value);
    } else if (key == "fifo_depths") {
      c.fifo_depths = parse_list(key, value);
    } else if (key == "argmax") {
      if (value == "masked") {
        c.argmax = ArgmaxMode::Masked;
      } else if (value == "raw") {
        c.argmax = ArgmaxMode::Raw;
      } else {
        throw ConfigError("config: argmax must be masked or raw");
      }
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  if (have_stat_params && c.mode != CampaignMode::Statistical) {
    throw ConfigError("config: confidence/moe/p are only valid in statistical mode");
  }
  c.validate();
  return c;
}

CampaignConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

Model load_campaign_model(const CampaignConfig& config) {
  if (config.model.empty()) return generate_model(NetworkTopology::reference(), config.seed.value_or(1));
  return read_model(config.model);
}

std::vector<BitVector> load_campaign_inputs(const CampaignConfig& config, std::size_t input_features) {
  std::vector<BitVector> inputs;
  if (config.images.empty()) {
    for (auto idx : config.indices) {
      const std::uint64_t seed = config.seed.value_or(0) * 1000003ULL + idx;
      if (input_features == 784) {
        inputs.push_back(binarize_image(synthetic_image(seed)));
      } else {
        Rng rng(seed);
        inputs.push_back(random_bits(input_features, rng));
      }
    }
    return inputs;
  }
  std::optional<std::filesystem::path> labels;
  if (!config.labels.empty()) labels = config.labels;
  const auto data = read_idx(config.images, labels);
  for (auto idx : config.indices) {
    if (idx >= data.images.count) {
      throw ConfigError("config: image index " + std::to_string(idx) + " out of range (" +
                        std::to_string(data.images.count) + " images)");
    }
    inputs.push_back(binarize_image(data.images.image(idx)));
  }
  return inputs;
}

Campaign::Campaign(CampaignConfig config, Model model, std::vector<BitVector> inputs)
    : config_(std::move(config)), model_(std::make_shared<const Model>(std::move(model))),
      inputs_(std::move(inputs)) {
  config_.validate();
  if (inputs_.size() != config_.indices.size()) {
    throw ConfigError("campaign: one input vector per configured index is required");
  }
  for (const auto& in : inputs_) goldens_.push_back(compute_golden(*model_, in, config_.fifo_depths));
  const std::size_t run_length = goldens_.front().latency;
  for (const auto& g : goldens_) {
    if (g.latency != run_length) throw ConfigError("campaign: golden latency differs between inputs");
  }
  registers_ = goldens_.front().snapshots.front().registers();

  plan_.space = config_.space;
  plan_.run_length = run_length;
  plan_.inputs = inputs_.size();
  if (config_.space == SpaceKind::Transient) {
    transient_.emplace(registers_, run_length);
    plan_.population = transient_->size();
  } else {
    persistent_.emplace(model_->topology);
    plan_.population = persistent_->size();
  }
  if (plan_.population == 0) throw ConfigError("campaign: empty fault space");

  if (config_.mode == CampaignMode::Exhaustive) {
    plan_.uids.resize(plan_.population);
    for (std::uint64_t i = 0; i < plan_.population; ++i) plan_.uids[i] = i;
  } else {
    const auto n = sample_size(plan_.population, config_.confidence, config_.moe, config_.p);
    plan_.uids = draw_sample(plan_.population, n, *config_.seed);
  }
  // Transient runs replay on average half the run from a snapshot; persistent runs the whole run.
  const std::uint64_t per_run = config_.space == SpaceKind::Transient ? (run_length + 1) / 2 : run_length;
  plan_.estimated_cycles = plan_.total_runs() * per_run;

  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(h, config_.canonical());
  h = fnv1a(h, encode_model(*model_));
  for (const auto& in : inputs_) h = fnv1a(h, in.to_string());
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  digest_ = os.str();
}

FaultDescriptor Campaign::descriptor(std::uint64_t uid) const {
  return transient_ ? transient_->at(uid) : persistent_->at(uid);
}

std::vector<RunRecord> Campaign::run_range(std::uint64_t begin, std::uint64_t end) const {
  end = std::min(end, plan_.total_runs());
  if (begin >= end) return {};
  std::vector<RunRecord> out(end - begin);
  std::atomic<std::uint64_t> next{begin};
  const InjectionOptions opts{config_.budget_factor, config_.argmax};
  const std::size_t nuids = plan_.uids.size();
  auto worker = [&]() {
    Model local = *model_;
    for (std::uint64_t j = next.fetch_add(1); j < end; j = next.fetch_add(1)) {
      const std::size_t input = static_cast<std::size_t>(j / nuids);
      const auto fault = descriptor(plan_.uids[j % nuids]);
      out[j - begin] = inject_and_run(local, goldens_[input], fault, config_.indices[input], opts);
    }
  };
  const std::size_t threads = std::min<std::uint64_t>(config_.workers, end - begin);
  if (threads <= 1) {
    worker();
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return out;
}

std::string Campaign::meta_json() const {
  ojson j;
  j["digest"] = digest_;
  j["space"] = std::string(space_name(plan_.space));
  j["mode"] = config_.mode == CampaignMode::Exhaustive ? "exhaustive" : "statistical";
  j["population"] = plan_.population;
  j["sample_size"] = plan_.sample_size();
  j["run_length"] = plan_.run_length;
  j["useful_lsb_bits"] = model_->topology.useful_lsb_bits;
  if (config_.mode == CampaignMode::Statistical) {
    j["confidence"] = config_.confidence;
    j["moe"] = config_.moe;
    j["p"] = config_.p;
  }
  ojson regs = ojson::array();
  for (const auto& r : registers_) {
    regs.push_back(ojson{{"reg_id", r.reg_id},
                         {"layer", r.layer_id},
                         {"name", std::string(role_name(r.role))},
                         {"index", r.index},
                         {"width", r.width},
                         {"label", r.label()}});
  }
  j["registers"] = regs;
  ojson windows = ojson::array();
  for (const auto& w : goldens_.front().windows) {
    windows.push_back(ojson{{"layer", w.layer_id}, {"start", w.start_cycle}, {"end", w.end_cycle}});
  }
  j["windows"] = windows;
  ojson phases = ojson::array();
  for (const auto& p : phase_table(goldens_.front().windows, plan_.run_length).phases) {
    phases.push_back(ojson{{"start", p.start_cycle}, {"end", p.end_cycle}, {"active_layers", p.active_layers}});
  }
  j["phases"] = phases;
  ojson golden = ojson::array();
  for (std::size_t i = 0; i < goldens_.size(); ++i) {
    golden.push_back(ojson{{"input_index", config_.indices[i]},
                           {"scores", goldens_[i].scores.values},
                           {"class", decide_class(goldens_[i].scores, model_->topology.useful_lsb_bits,
                                                  config_.argmax)},
                           {"latency", goldens_[i].latency}});
  }
  j["golden"] = golden;
  return j.dump(2) + "\n";
}

CampaignSummary Campaign::execute(const ExecuteOptions& options) const {
  {
    std::ofstream truncate(options.records, std::ios::trunc);
    if (!truncate) throw std::runtime_error("cannot write records file " + options.records.string());
  }
  write_text_atomically(meta_path(options.records), meta_json());
  const auto ckpt = options.checkpoint.empty() ? default_checkpoint_path(options.records) : options.checkpoint;
  write_text_atomically(ckpt, checkpoint_json(digest_, 0, plan_.total_runs()));
  return continue_from(options, 0, {});
}

CampaignSummary Campaign::resume(const ExecuteOptions& options) const {
  const auto ckpt = options.checkpoint.empty() ? default_checkpoint_path(options.records) : options.checkpoint;
  std::ifstream in(ckpt);
  if (!in) throw ConfigError("resume: cannot open checkpoint " + ckpt.string());
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const std::exception& e) {
    throw ParseError(std::string("resume: malformed checkpoint: ") + e.what());
  }
  if (j.value("digest", std::string{}) != digest_) {
    throw ConfigError("resume: checkpoint digest does not match this campaign; refusing to resume");
  }
  const auto completed = j.at("completed").get<std::uint64_t>();
  if (completed > plan_.total_runs()) throw ParseError("resume: checkpoint beyond the plan");

  // Drop any records written after the last checkpoint (a partially flushed batch).
  std::vector<std::string> kept;
  {
    std::ifstream rin(options.records);
    std::string line;
    while (kept.size() < completed && std::getline(rin, line)) kept.push_back(line);
  }
  if (kept.size() < completed) throw ParseError("resume: records file shorter than checkpoint");
  std::array<std::uint64_t, kOutcomeCount> counts{};
  for (const auto& l : kept) ++counts[static_cast<std::size_t>(record_from_json(l).outcome)];
  {
    std::ofstream rout(options.records, std::ios::trunc);
    for (const auto& l : kept) rout << l << '\n';
    if (!rout) throw std::runtime_error("cannot rewrite records file " + options.records.string());
  }
  return continue_from(options, completed, counts);
}

CampaignSummary Campaign::continue_from(const ExecuteOptions& options, std::uint64_t completed,
                                        const std::array<std::uint64_t, kOutcomeCount>& counts) const {
  const auto ckpt = options.checkpoint.empty() ? default_checkpoint_path(options.records) : options.checkpoint;
  CampaignSummary summary;
  summary.planned = plan_.total_runs();
  summary.completed = completed;
  summary.counts = counts;
  std::uint64_t budget = options.stop_after.value_or(summary.planned);
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  while (summary.completed < summary.planned && budget > 0) {
    const std::uint64_t n = std::min<std::uint64_t>({batch, budget, summary.planned - summary.completed});
    const auto records = run_range(summary.completed, summary.completed + n);
    {
      std::ofstream out(options.records, std::ios::app);
      if (!out) throw std::runtime_error("cannot append to records file " + options.records.string());
      for (const auto& r : records) out << record_to_json(r) << '\n';
      out.flush();
      if (!out) throw std::runtime_error("write failed for records file " + options.records.string());
    }
    for (const auto& r : records) ++summary.counts[static_cast<std::size_t>(r.outcome)];
    summary.completed += n;
    budget -= n;
    write_text_atomically(ckpt, checkpoint_json(digest_, summary.completed, summary.planned));
    if (options.progress) options.progress(summary.completed, summary.planned);
  }
  return summary;
}

std::string record_to_json(const RunRecord& r) {
  ojson j;
  j["fault_uid"] = r.fault.fault_uid;
  if (const auto* t = std::get_if<TransientFault>(&r.fault.target)) {
    j["space"] = "transient";
    j["reg_id"] = t->reg_id;
    j["bit"] = t->bit;
    j["cycle"] = t->cycle;
  } else if (const auto* w = std::get_if<WeightBitFault>(&r.fault.target)) {
    j["space"] = "persistent";
    j["target"] = "weight";
    j["flat_bit"] = w->flat_bit;
  } else {
    const auto& th = std::get<ThresholdBitFault>(r.fault.target);
    j["space"] = "persistent";
    j["target"] = "threshold";
    j["neuron"] = th.neuron;
    j["bit"] = th.bit;
  }
  j["layer"] = r.layer;
  j["input_index"] = r.input_index;
  j["outcome"] = std::string(outcome_name(r.outcome));
  j["golden_class"] = r.golden_class;
  if (r.observed_class) j["observed_class"] = *r.observed_class;
  j["latency"] = r.latency;
  return j.dump();
}

RunRecord record_from_json(std::string_view line) {
  ojson j;
  try {
    j = ojson::parse(line);
    RunRecord r;
    r.fault.fault_uid = j.at("fault_uid").get<std::uint64_t>();
    r.layer = j.at("layer").get<std::size_t>();
    const auto space = j.at("space").get<std::string>();
    if (space == "transient") {
      r.fault.target = TransientFault{j.at("reg_id").get<std::size_t>(), j.at("bit").get<std::size_t>(),
                                      j.at("cycle").get<std::size_t>()};
    } else if (space == "persistent") {
      const auto target = j.at("target").get<std::string>();
      if (target == "weight") {
        r.fault.target = WeightBitFault{r.layer, j.at("flat_bit").get<std::size_t>()};
      } else if (target == "threshold") {
        r.fault.target = ThresholdBitFault{r.layer, j.at("neuron").get<std::size_t>(),
                                           j.at("bit").get<std::size_t>()};
      } else {
        throw ParseError("record: unknown persistent target '" + target + "'");
      }
    } else {
      throw ParseError("record: unknown space '" + space + "'");
    }
    r.input_index = j.at("input_index").get<std::size_t>();
    r.outcome = parse_outcome(j.at("outcome").get<std::string>());
    r.golden_class = j.at("golden_class").get<std::size_t>();
    if (j.contains("observed_class")) r.observed_class = j.at("observed_class").get<std::size_t>();
    r.latency = j.at("latency").get<std::size_t>();
    return r;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("record: ") + e.what());
  }
}

std::vector<RunRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open records file " + path.string());
  std::vector<RunRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(record_from_json(line));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RunRecord> canonical_sort(std::vector<RunRecord> records) {
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    if (a.input_index != b.input_index) return a.input_index < b.input_index;
    return a.fault.fault_uid < b.fault.fault_uid;
  });
  return records;
}

std::filesystem::path default_checkpoint_path(const std::filesystem::path& records) {
  auto p = records;
  p += ".ckpt";
  return p;
}

std::filesystem::path meta_path(const std::filesystem::path& records) {
  auto p = records;
  p += ".meta.json";
  return p;
}

}  // namespace bnnfi
