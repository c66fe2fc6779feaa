#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bnnfi/campaign.hpp"
#include "bnnfi/error.hpp"
#include "bnnfi/io.hpp"
#include "bnnfi/random.hpp"
#include "bnnfi/report.hpp"

using namespace bnnfi;

namespace {

struct ModelArgs {
  std::string model;
  std::uint64_t seed = 1;
};

void add_model_args(CLI::App* cmd, ModelArgs& args) {
  cmd->add_option("--model", args.model, "Model file (default: generated reference model)");
  cmd->add_option("--seed", args.seed, "Seed for the generated model and synthetic inputs");
}

Model resolve_model(const ModelArgs& args) {
  if (!args.model.empty()) return read_model(args.model);
  return generate_model(NetworkTopology::reference(), args.seed);
}

struct InputArgs {
  std::string images;
  std::string labels;
  std::size_t index = 0;
};

void add_input_args(CLI::App* cmd, InputArgs& args) {
  cmd->add_option("--images", args.images, "IDX image file (default: synthetic input)");
  cmd->add_option("--labels", args.labels, "IDX label file");
  cmd->add_option("--index", args.index, "Image index");
}

struct ResolvedInput {
  BitVector bits;
  std::optional<int> label;
};

ResolvedInput resolve_input(const InputArgs& args, const Model& model, std::uint64_t seed) {
  CampaignConfig c;
  c.seed = seed;
  c.images = args.images;
  c.labels = args.labels;
  c.indices = {args.index};
  ResolvedInput r;
  r.bits = load_campaign_inputs(c, model.topology.input_features()).front();
  if (!args.images.empty() && !args.labels.empty()) {
    r.label = read_idx(args.images, std::filesystem::path(args.labels)).labels.at(args.index);
  }
  return r;
}

std::string join_scores(const ClassScores& s) {
  std::ostringstream out;
  for (std::size_t i = 0; i < s.values.size(); ++i) out << (i ? " " : "") << s.values[i];
  return out.str();
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      throw ConfigError("invalid integer list: " + text);
    }
    if (pos != item.size()) throw ConfigError("invalid integer list: " + text);
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

SpaceKind parse_space(const std::string& s) {
  if (s == "transient") return SpaceKind::Transient;
  if (s == "persistent") return SpaceKind::Persistent;
  throw ConfigError("unknown space: " + s);
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + out_path);
  out << text;
  if (!out) throw ConfigError("cannot write " + out_path);
}

int cmd_infer(const ModelArgs& margs, const InputArgs& iargs) {
  const Model model = resolve_model(margs);
  const auto input = resolve_input(iargs, model, margs.seed);
  const auto golden = network_forward(input.bits, model);
  Simulator sim(model);
  const auto run = run_to_completion(sim, input.bits, 1'000'000);
  if (!run.completed()) throw DataError("cycle simulation did not complete");
  const auto lsb = model.topology.useful_lsb_bits;
  const auto gc = decide_class(golden, lsb, ArgmaxMode::Masked);
  const auto sc = decide_class(run.scores, lsb, ArgmaxMode::Masked);
  std::cout << "golden_scores: " << join_scores(golden) << "\n"
            << "golden_class: " << gc << "\n"
            << "sim_scores: " << join_scores(run.scores) << "\n"
            << "sim_class: " << sc << "\n"
            << "raw_class: " << decide_class(run.scores, lsb, ArgmaxMode::Raw) << "\n"
            << "latency: " << run.latency << "\n";
  if (input.label) std::cout << "label: " << *input.label << "\n";
  std::cout << "match: " << (golden == run.scores && gc == sc ? "yes" : "no") << "\n";
  return golden == run.scores ? 0 : 1;
}

int cmd_registers(const ModelArgs& margs) {
  const Model model = resolve_model(margs);
  Simulator sim(model);
  std::cout << "reg_id,label,layer,role,index,width\n";
  for (const auto& r : sim.registers()) {
    std::cout << r.reg_id << ',' << r.label() << ',' << r.layer_id << ',' << role_name(r.role) << ','
              << r.index << ',' << r.width << "\n";
  }
  std::cout << "# registers " << sim.registers().size() << " bits " << sim.total_register_bits() << "\n";
  return 0;
}

int cmd_plan(const ModelArgs& margs, const InputArgs& iargs, const std::string& space, double confidence,
             double moe, double p) {
  const Model model = resolve_model(margs);
  std::uint64_t population = 0;
  if (parse_space(space) == SpaceKind::Persistent) {
    population = enumerate_persistent_space(model).size();
  } else {
    const auto input = resolve_input(iargs, model, margs.seed);
    const auto golden = compute_golden(model, input.bits, {}, false);
    Simulator sim(model);
    population = enumerate_transient_space(sim, golden.latency).size();
    std::cout << "run_length: " << golden.latency << "\n";
  }
  const auto n = sample_size(population, confidence, moe, p);
  std::cout << "space: " << space << "\n"
            << "population: " << population << "\n"
            << "confidence: " << confidence << "\n"
            << "moe: " << moe << "\n"
            << "sample_size: " << n << "\n"
            << std::fixed << std::setprecision(4)
            << "sample_fraction_pct: " << 100.0 * static_cast<double>(n) / static_cast<double>(population)
            << "\n";
  const auto ten_pct = population / 10;
  if (ten_pct > 0 && n < ten_pct && moe < 0.005) {
    std::cout << "note: formula sample size " << n << " differs from a 10% sample of the population ("
              << ten_pct << "); this tool reports the formula value\n";
  }
  return 0;
}

int cmd_campaign(const std::string& config_path, const std::string& out, std::optional<std::size_t> workers,
                 bool resume) {
  if (config_path.empty()) throw ConfigError("campaign: --config is required");
  if (out.empty()) throw ConfigError("campaign: --out is required");
  auto config = load_config(config_path);
  if (workers) config.workers = *workers;
  auto model = load_campaign_model(config);
  auto inputs = load_campaign_inputs(config, model.topology.input_features());
  Campaign campaign(config, std::move(model), std::move(inputs));
  ExecuteOptions opts;
  opts.records = out;
  opts.progress = [](std::uint64_t done, std::uint64_t total) {
    std::cerr << "progress " << done << "/" << total << "\n";
  };
  const auto summary = resume ? campaign.resume(opts) : campaign.execute(opts);
  std::cout << "population: " << campaign.plan().population << "\n"
            << "planned: " << summary.planned << "\n"
            << "completed: " << summary.completed << "\n";
  for (std::size_t i = 0; i < kOutcomeCount; ++i) {
    std::cout << outcome_name(static_cast<Outcome>(i)) << ": " << summary.counts[i] << "\n";
  }
  return summary.finished() ? 0 : 1;
}

nlohmann::json read_meta(const std::string& records) {
  std::ifstream in(meta_path(records));
  if (!in) return {};
  try {
    return nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw ParseError(std::string("malformed meta file: ") + e.what());
  }
}

int cmd_report(const std::string& records_path, const std::string& by, const std::string& format,
               const std::string& out) {
  if (records_path.empty()) throw ConfigError("report: --records is required");
  const auto fmt = parse_export_format(format);
  const auto records = read_records(records_path);
  if (records.empty()) throw DataError("report: no records in " + records_path);
  const auto meta = read_meta(records_path);
  ReportTable table;
  if (by == "layer") {
    table = to_report(per_layer_table(records));
  } else if (by == "phase") {
    if (!meta.contains("phases")) throw DataError("report: phase breakdown needs " + meta_path(records_path).string());
    PhaseTable phases;
    for (const auto& p : meta["phases"]) {
      phases.phases.push_back(Phase{p.at("start").get<std::size_t>(), p.at("end").get<std::size_t>(),
                                    p.at("active_layers").get<std::vector<std::size_t>>()});
    }
    table = to_report(per_phase_breakdown(records, phases));
  } else if (by == "register") {
    std::map<std::size_t, std::string> labels;
    if (meta.contains("registers")) {
      for (const auto& r : meta["registers"]) labels[r.at("reg_id").get<std::size_t>()] = r.at("label").get<std::string>();
    }
    table = to_report(per_register_histogram(records), labels);
  } else {
    throw ConfigError("report: --by must be layer, phase or register");
  }
  emit(export_report(table, fmt), out);
  return 0;
}

int cmd_compare(const std::string& stat, const std::string& exh, double moe) {
  const auto cmp = compare_campaigns(read_records(stat), read_records(exh), moe);
  std::cout << "class,statistical_pct,exhaustive_pct,delta_pp,within_moe\n" << std::fixed << std::setprecision(4);
  for (const auto& d : cmp.deltas) {
    const std::string name = d.outcome == Outcome::Masked ? "no_error" : std::string(outcome_name(d.outcome));
    std::cout << name << ',' << d.statistical_percent << ',' << d.exhaustive_percent << ',' << d.delta << ','
              << (d.within_moe ? "yes" : "no") << "\n";
  }
  return cmp.all_within() ? 0 : 1;
}

int cmd_gen_model(const std::string& out, std::uint64_t seed, const std::string& topology, const std::string& pe,
                  const std::string& simd) {
  if (out.empty()) throw ConfigError("gen-model: --out is required");
  NetworkTopology topo = NetworkTopology::reference();
  if (!topology.empty()) {
    const auto widths = parse_list(topology);
    if (widths.size() < 2) throw ConfigError("gen-model: --topology needs at least two widths");
    auto pes = pe.empty() ? std::vector<std::size_t>(widths.size() - 1, 1) : parse_list(pe);
    auto simds = simd.empty() ? std::vector<std::size_t>(widths.size() - 1, 1) : parse_list(simd);
    topo = NetworkTopology::chain(widths, pes, simds);
  } else if (!pe.empty() || !simd.empty()) {
    throw ConfigError("gen-model: --pe/--simd require --topology");
  }
  const Model model = generate_model(topo, seed);
  write_model(out, model);
  std::cout << "wrote " << out << " (" << topo.layers.size() << " layers, crc "
            << std::hex << std::setw(8) << std::setfill('0') << crc32(encode_model(model)) << std::dec << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fault injection toolkit for folded binarized neural network accelerators"};
  app.require_subcommand(1);

  ModelArgs margs;
  InputArgs iargs;

  auto* infer = app.add_subcommand("infer", "Classify one input with the functional model and the cycle simulator");
  add_model_args(infer, margs);
  add_input_args(infer, iargs);

  auto* registers = app.add_subcommand("registers", "List the simulated register file");
  add_model_args(registers, margs);

  std::string space = "transient";
  double confidence = 0.99, moe = 0.01, p = 0.5;
  auto* plan = app.add_subcommand("plan", "Print fault population N and sample size n");
  add_model_args(plan, margs);
  add_input_args(plan, iargs);
  plan->add_option("--space", space, "transient or persistent");
  plan->add_option("--confidence", confidence, "0.90, 0.95 or 0.99");
  plan->add_option("--moe", moe, "Margin of error (fraction)");
  plan->add_option("--p", p, "Estimated proportion");

  std::string config_path, out;
  std::optional<std::size_t> workers;
  bool resume = false;
  auto* campaign = app.add_subcommand("campaign", "Run a fault injection campaign");
  campaign->add_option("--config", config_path, "Campaign config file");
  campaign->add_option("--out", out, "Records output (JSONL)");
  campaign->add_option("--workers", workers, "Worker threads (overrides the config)");
  campaign->add_flag("--resume", resume, "Continue from the checkpoint");

  std::string records_path, by = "layer", format = "csv";
  auto* report = app.add_subcommand("report", "Aggregate campaign records");
  report->add_option("--records", records_path, "Records file (JSONL)");
  report->add_option("--by", by, "layer, phase or register");
  report->add_option("--format", format, "csv, json or plotdata");
  report->add_option("--out", out, "Output file (default: stdout)");

  std::string stat_path, exh_path;
  double cmp_moe = 0.02;
  auto* compare = app.add_subcommand("compare", "Compare statistical and exhaustive campaign rates");
  compare->add_option("--statistical", stat_path)->required();
  compare->add_option("--exhaustive", exh_path)->required();
  compare->add_option("--moe", cmp_moe, "Margin of error (fraction)");

  std::string topology, pe, simd;
  auto* gen = app.add_subcommand("gen-model", "Write a seeded random model file");
  gen->add_option("--out", out, "Model output path");
  gen->add_option("--seed", margs.seed, "Generator seed");
  gen->add_option("--topology", topology, "Comma-separated widths, e.g. 784,256,10");
  gen->add_option("--pe", pe, "Comma-separated PE counts per layer");
  gen->add_option("--simd", simd, "Comma-separated SIMD widths per layer");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (infer->parsed()) return cmd_infer(margs, iargs);
    if (registers->parsed()) return cmd_registers(margs);
    if (plan->parsed()) return cmd_plan(margs, iargs, space, confidence, moe, p);
    if (campaign->parsed()) return cmd_campaign(config_path, out, workers, resume);
    if (report->parsed()) return cmd_report(records_path, by, format, out);
    if (compare->parsed()) return cmd_compare(stat_path, exh_path, cmp_moe);
    if (gen->parsed()) return cmd_gen_model(out, margs.seed, topology, pe, simd);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
