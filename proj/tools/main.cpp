// moestress: simulator, metrics engine, and black-box probing toolkit for
// routing imbalance in expert-parallel MoE serving.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "moestress/arch.hpp"
#include "moestress/defense.hpp"
#include "moestress/deployment.hpp"
#include "moestress/errors.hpp"
#include "moestress/latsim.hpp"
#include "moestress/manifest.hpp"
#include "moestress/metrics.hpp"
#include "moestress/mock_server.hpp"
#include "moestress/probe.hpp"
#include "moestress/prompts.hpp"
#include "moestress/router.hpp"
#include "moestress/trace.hpp"
#include "moestress/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Small helpers

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void write_text_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw moestress::Error("cannot write " + path.string());
  out << content;
  if (!content.empty() && content.back() != '\n') out << '\n';
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw moestress::Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run manifests

struct RunContext {
  std::string subcommand;
  std::vector<std::string> argv;  // full command tail, for rerun
  std::vector<fs::path> inputs;
  std::string started_at;
};

std::map<std::string, std::string> flag_summary(
    const std::vector<std::string>& argv) {
  std::map<std::string, std::string> args;
  for (std::size_t i = 0; i < argv.size(); ++i) {
    if (argv[i].rfind("--", 0) != 0) continue;
    if (i + 1 < argv.size() && argv[i + 1].rfind("--", 0) != 0) {
      args[argv[i]] = argv[i + 1];
    } else {
      args[argv[i]] = "true";
    }
  }
  return args;
}

void write_manifest(const RunContext& ctx, const fs::path& primary_out) {
  moestress::RunManifest m;
  m.tool_version = moestress::kVersion;
  m.subcommand = ctx.subcommand;
  m.argv = ctx.argv;
  m.args = flag_summary(ctx.argv);
  for (const fs::path& p : ctx.inputs) {
    m.input_digests[p.string()] = moestress::fnv1a64_hex_of_file(p);
  }
  m.started_at = ctx.started_at;
  m.finished_at = moestress::iso8601_utc_now();
  m.write(primary_out.string() + ".manifest.json");
}

// ---------------------------------------------------------------------------
// Shared router / sampling flags

struct RouterFlags {
  std::string arch_file;
  int layers = 4;
  int experts = 8;
  int top_k = 2;
  int vocab = 32000;
  int hidden = 32;
  std::uint64_t router_seed = 42;
  int attractors = 0;
  double attractor_gain = 8.0;
};

void add_router_flags(CLI::App* cmd, RouterFlags& rf) {
  cmd->add_option("--arch", rf.arch_file,
                  "Architecture config JSON (overrides the dimension flags)");
  cmd->add_option("--layers", rf.layers, "MoE layer count")
      ->capture_default_str();
  cmd->add_option("--experts", rf.experts, "Experts per layer")
      ->capture_default_str();
  cmd->add_option("--top-k", rf.top_k, "Experts routed per token")
      ->capture_default_str();
  cmd->add_option("--vocab", rf.vocab, "Vocabulary size")
      ->capture_default_str();
  cmd->add_option("--hidden", rf.hidden, "Router hidden dimension")
      ->capture_default_str();
  cmd->add_option("--router-seed", rf.router_seed, "Router generation seed")
      ->capture_default_str();
  cmd->add_option("--attractors", rf.attractors,
                  "Per-layer attractor experts (0 = plain router)")
      ->capture_default_str();
  cmd->add_option("--attractor-gain", rf.attractor_gain,
                  "Attractor logit gain")
      ->capture_default_str();
}

moestress::ModelArch arch_from_flags(const RouterFlags& rf, RunContext& ctx) {
  if (!rf.arch_file.empty()) {
    ctx.inputs.push_back(rf.arch_file);
    return moestress::load_arch_config(rf.arch_file);
  }
  moestress::ModelArch arch{"synthetic", rf.layers, rf.experts, rf.top_k,
                            rf.vocab};
  arch.validate();
  return arch;
}

moestress::SyntheticRouter router_from_flags(const RouterFlags& rf,
                                             RunContext& ctx) {
  moestress::RouterConfig cfg;
  cfg.arch = arch_from_flags(rf, ctx);
  cfg.hidden_dim = rf.hidden;
  cfg.seed = rf.router_seed;
  cfg.attractor_experts = rf.attractors;
  cfg.attractor_gain = rf.attractor_gain;
  return moestress::SyntheticRouter(cfg);
}

struct SampleFlags {
  int sample = 2000;
  std::uint64_t sample_seed = 0;
  std::string tokens_list;
  bool full_vocab = false;
};

void add_sample_flags(CLI::App* cmd, SampleFlags& sf) {
  cmd->add_option("--sample", sf.sample,
                  "Number of vocabulary tokens to sample")
      ->capture_default_str();
  cmd->add_option("--sample-seed", sf.sample_seed, "Token sampling seed")
      ->capture_default_str();
  cmd->add_option("--tokens", sf.tokens_list,
                  "Explicit comma-separated token IDs (overrides sampling)");
  cmd->add_flag("--full-vocab", sf.full_vocab,
                "Sweep every vocabulary token instead of sampling");
}

std::vector<int> tokens_from_flags(const SampleFlags& sf, int vocab_size) {
  if (!sf.tokens_list.empty()) {
    std::vector<int> tokens = parse_int_list(sf.tokens_list);
    for (int t : tokens) {
      if (t < 0 || t >= vocab_size) {
        throw moestress::ConfigError("token ID " + std::to_string(t) +
                                     " outside vocabulary of size " +
                                     std::to_string(vocab_size));
      }
    }
    return tokens;
  }
  if (sf.full_vocab) {
    std::vector<int> tokens(vocab_size);
    for (int i = 0; i < vocab_size; ++i) tokens[i] = i;
    return tokens;
  }
  if (sf.sample < 1) {
    throw moestress::ConfigError("--sample must be at least 1");
  }
  std::vector<int> tokens(sf.sample);
  for (int i = 0; i < sf.sample; ++i) {
    tokens[i] = static_cast<int>(
        splitmix64(sf.sample_seed * 0x9e3779b97f4a7c15ULL + i) %
        static_cast<std::uint64_t>(vocab_size));
  }
  return tokens;
}

int run_cli(const std::vector<std::string>& argv);

// ---------------------------------------------------------------------------
// trace

struct TraceCmd {
  RouterFlags rf;
  std::string mode;
  int token = 0;
  int length = 128;
  std::uint64_t sample_seed = 0;
  std::string out;

  int run(RunContext& ctx) const {
    moestress::SyntheticRouter router = router_from_flags(rf, ctx);
    moestress::RoutingTrace trace(0, 0, 0);
    if (mode == "repeat") {
      if (token < 0 || token >= router.arch().vocab_size) {
        throw moestress::ConfigError("token ID " + std::to_string(token) +
                                     " outside vocabulary of size " +
                                     std::to_string(router.arch().vocab_size));
      }
      trace = router.repeated_token_trace(token, length);
    } else {
      trace = router.sample_baseline_trace(length, sample_seed);
    }
    moestress::write_trace(trace, out);
    write_manifest(ctx, out);
    std::cout << "wrote " << out << " (" << trace.num_tokens() << " tokens, "
              << trace.layers() << " layers)\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// metrics coverage | bottleneck | entropy

struct CoverageCmd {
  RouterFlags rf;
  SampleFlags sf;
  std::string trace_dir;
  int devices = 8;
  int repeat_length = 128;
  int threads = 0;
  std::string out;
  std::string csv;

  int run(RunContext& ctx) const {
    const moestress::ModelArch arch = arch_from_flags(rf, ctx);
    const moestress::Deployment deployment =
        moestress::build_default_deployment(arch, devices);
    const std::vector<int> tokens = tokens_from_flags(sf, arch.vocab_size);

    moestress::CoverageReport report;
    if (!trace_dir.empty()) {
      report = moestress::coverage(moestress::directory_trace_source(trace_dir),
                                   deployment, tokens, threads);
    } else {
      const moestress::SyntheticRouter router = router_from_flags(rf, ctx);
      report =
          moestress::coverage(router, deployment, tokens, repeat_length, threads);
    }
    write_text_file(out, report.to_json());
    if (!csv.empty()) write_text_file(csv, report.to_csv());
    write_manifest(ctx, out);
    std::cout << "coverage = " << report.coverage << " over "
              << report.tokens_evaluated << " tokens ("
              << report.skipped_tokens.size() << " skipped)\n";
    return 0;
  }
};

struct BottleneckCmd {
  std::string trace_file;
  int devices = 8;
  std::string out;
  std::string heatmap;

  int run(RunContext& ctx) const {
    ctx.inputs.push_back(trace_file);
    const moestress::RoutingTrace trace = moestress::read_trace(trace_file);
    const moestress::ExpertLoadProfile profile =
        moestress::load_profile_from_trace(trace);
    moestress::ModelArch arch{"trace", trace.layers(), trace.experts_per_layer(),
                              trace.top_k(), 1};
    const moestress::Deployment deployment =
        moestress::build_default_deployment(arch, devices);
    const moestress::BottleneckReport report =
        moestress::bottleneck(profile, deployment);
    write_text_file(out, report.to_json());
    if (!heatmap.empty()) {
      write_text_file(heatmap, moestress::profile_heatmap_csv(profile));
    }
    write_manifest(ctx, out);
    std::cout << "bottleneck B = " << report.bottleneck << "\n";
    return 0;
  }
};

struct EntropyCmd {
  std::string trace_file;
  std::string out;

  int run(RunContext& ctx) const {
    ctx.inputs.push_back(trace_file);
    const moestress::RoutingTrace trace = moestress::read_trace(trace_file);
    const double h = moestress::normalized_entropy(trace);
    json j;
    j["normalized_entropy"] = h;
    j["num_tokens"] = trace.num_tokens();
    j["layers"] = trace.layers();
    j["experts_per_layer"] = trace.experts_per_layer();
    j["top_k"] = trace.top_k();
    write_text_file(out, j.dump(2));
    write_manifest(ctx, out);
    std::cout << "normalized entropy = " << h << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// simulate

struct SimulateCmd {
  std::string attack_file;
  std::string normal_file;
  int devices = 8;
  std::string ep_sweep;
  std::string cost_file;
  std::string out;
  std::string timeline_csv;

  int run(RunContext& ctx) const {
    ctx.inputs.push_back(attack_file);
    ctx.inputs.push_back(normal_file);
    const moestress::RoutingTrace attack = moestress::read_trace(attack_file);
    const moestress::RoutingTrace normal = moestress::read_trace(normal_file);
    moestress::CostModel cost;
    if (!cost_file.empty()) {
      ctx.inputs.push_back(cost_file);
      cost = moestress::load_cost_model(cost_file);
    }
    moestress::ModelArch arch{"trace", attack.layers(),
                              attack.experts_per_layer(), attack.top_k(), 1};

    json j;
    if (!ep_sweep.empty()) {
      json sweep = json::array();
      for (int d : parse_int_list(ep_sweep)) {
        const moestress::Deployment deployment =
            moestress::build_default_deployment(arch, d);
        const auto attack_report =
            moestress::simulate_prefill(attack, deployment, cost);
        const auto normal_report =
            moestress::simulate_prefill(normal, deployment, cost);
        json row;
        row["ep"] = d;
        row["r_moe_mean"] = moestress::r_moe_mean(attack_report, normal_report);
        if (arch.experts_per_layer % d == 0) {
          row["tmi"] =
              moestress::tmi(d, arch.experts_per_layer / d, arch.top_k);
        }
        sweep.push_back(std::move(row));
      }
      j["sweep"] = std::move(sweep);
    } else {
      const moestress::Deployment deployment =
          moestress::build_default_deployment(arch, devices);
      const auto attack_report =
          moestress::simulate_prefill(attack, deployment, cost);
      const auto normal_report =
          moestress::simulate_prefill(normal, deployment, cost);
      j["r_moe_mean"] = moestress::r_moe_mean(attack_report, normal_report);
      json per_layer = json::array();
      for (int l = 0; l < attack.layers(); ++l) {
        per_layer.push_back(moestress::r_moe(attack_report, normal_report, l));
      }
      j["r_moe_per_layer"] = std::move(per_layer);
      j["attack"] = json::parse(attack_report.to_json());
      j["normal"] = json::parse(normal_report.to_json());
      if (!timeline_csv.empty()) {
        write_text_file(timeline_csv, attack_report.timeline_csv());
      }
    }
    write_text_file(out, j.dump(2));
    write_manifest(ctx, out);
    if (j.contains("r_moe_mean")) {
      std::cout << "r_moe (mean over layers) = " << j["r_moe_mean"] << "\n";
    } else {
      std::cout << "wrote EP sweep with " << j["sweep"].size() << " rows\n";
    }
    return 0;
  }
};

// ---------------------------------------------------------------------------
// defend

struct DefendCmd {
  RouterFlags rf;
  SampleFlags sf;
  std::string vmap_file;
  std::string trace_dir;
  int devices = 4;
  double tau = 0.9;
  int repeat_length = 128;
  int threads = 0;
  std::string out;
  std::string vmap_out;
  std::string eval_csv;

  int run(RunContext& ctx) const {
    std::optional<moestress::SyntheticRouter> router;
    moestress::TraceSource source;
    if (!trace_dir.empty()) {
      source = moestress::directory_trace_source(trace_dir);
    } else {
      router.emplace(router_from_flags(rf, ctx));
      source = moestress::repeated_trace_source(*router, repeat_length);
    }

    moestress::VulnerabilityMap vmap;
    std::vector<int> tokens;
    if (!vmap_file.empty()) {
      ctx.inputs.push_back(vmap_file);
      vmap = moestress::VulnerabilityMap::from_json(read_text_file(vmap_file));
    } else {
      const int vocab = router ? router->arch().vocab_size : rf.vocab;
      tokens = tokens_from_flags(sf, vocab);
      vmap = moestress::vulnerability_scan(source, tokens, tau, threads);
    }

    const moestress::Deployment defended =
        moestress::vulnerability_aware_deployment(vmap, devices);
    moestress::write_deployment(defended, out);
    if (!vmap_out.empty()) write_text_file(vmap_out, vmap.to_json());

    if (!eval_csv.empty()) {
      if (tokens.empty()) {
        const int vocab = router ? router->arch().vocab_size : rf.vocab;
        tokens = tokens_from_flags(sf, vocab);
      }
      const moestress::DefenseEvaluation eval = moestress::evaluate_defense(
          source, vmap, devices, tokens, threads);
      write_text_file(eval_csv, eval.to_csv());
      std::cout << "coverage before = " << eval.before.coverage
                << ", after = " << eval.after.coverage << "\n";
    }
    write_manifest(ctx, out);
    std::cout << "wrote defended deployment to " << out << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// filter

// Interns whitespace-separated words as sequential IDs so text prompts can be
// scored without a tokenizer. The proxy score depends only on unit counts, so
// any injective word->ID assignment gives the same result.
std::vector<int> intern_words(const std::string& text) {
  std::map<std::string, int> ids;
  std::vector<int> seq;
  for (const std::string& word : moestress::split_units(text)) {
    auto [it, inserted] = ids.emplace(word, static_cast<int>(ids.size()));
    seq.push_back(it->second);
  }
  return seq;
}

struct FilterCmd {
  std::string in_file;
  std::string text_file;
  std::string tokens_list;
  double threshold = 2.0;
  std::string out;

  int run(RunContext& ctx) const {
    std::vector<std::vector<int>> sequences;
    if (!tokens_list.empty()) {
      sequences.push_back(parse_int_list(tokens_list));
    } else if (!text_file.empty()) {
      ctx.inputs.push_back(text_file);
      sequences.push_back(intern_words(read_text_file(text_file)));
    } else if (!in_file.empty()) {
      ctx.inputs.push_back(in_file);
      std::ifstream in(in_file);
      if (!in) throw moestress::Error("cannot open " + in_file);
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          sequences.push_back(json::parse(line).get<std::vector<int>>());
        } catch (const json::exception& e) {
          throw moestress::ParseError(
              std::string("expected a JSON array of token IDs: ") + e.what(),
              line_no);
        }
      }
    } else {
      throw moestress::ConfigError("filter needs --in, --text, or --tokens");
    }

    std::ostringstream lines;
    int rejected = 0;
    for (const auto& seq : sequences) {
      const moestress::FilterDecision d =
          moestress::filter_prompt(seq, threshold);
      if (!d.accept) ++rejected;
      lines << json{{"score", d.score}, {"accept", d.accept}}.dump() << '\n';
    }
    write_text_file(out, lines.str());
    write_manifest(ctx, out);
    std::cout << "filtered " << sequences.size() << " sequences, rejected "
              << rejected << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// prompt

struct PromptCmd {
  std::string kind = "attack";
  std::string unit = "the";
  int length = 20000;
  std::string system_file;
  std::string corpus;
  std::uint64_t seed = 0;
  int count = 1;
  int vocab = 32000;
  std::string out;

  int run(RunContext& ctx) const {
    if (count < 1) throw moestress::ConfigError("--count must be at least 1");
    std::string system_prompt;
    if (!system_file.empty()) {
      ctx.inputs.push_back(system_file);
      system_prompt = read_text_file(system_file);
    }
    if (!corpus.empty()) ctx.inputs.push_back(corpus);

    for (int i = 0; i < count; ++i) {
      moestress::PromptSpec spec;
      spec.system_prompt = system_prompt;
      spec.target_length = length;
      std::string text;
      if (kind == "attack") {
        spec.kind = moestress::PromptSpec::Kind::attack;
        spec.repeated_unit = unit;
        spec.nonce = moestress::make_nonce(seed, i);
        text = moestress::build_attack_prompt(spec);
      } else {
        spec.kind = moestress::PromptSpec::Kind::normal;
        if (!corpus.empty()) {
          spec.corpus_path = corpus;
          text = moestress::build_normal_prompt(spec, seed + i);
        } else {
          // No corpus: synthetic high-entropy baseline.
          text = moestress::random_word_prompt(length, seed + i, vocab);
        }
      }
      fs::path path = out;
      if (count > 1) path += "." + std::to_string(i);
      write_text_file(path, text);
    }
    write_manifest(ctx, out);
    std::cout << "wrote " << count << " " << kind << " prompt(s) to " << out
              << (count > 1 ? ".*" : "") << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// probe

struct ProbeCmd {
  std::string endpoint_file;
  int count = 8;
  int budget = 64;
  int warmup = 1;
  std::string unit = "the";
  int length = 2000;
  std::string corpus;
  std::uint64_t seed = 42;
  int resamples = 10000;
  double confidence = 0.95;
  double moe_threshold = 1.4;
  double dense_threshold = 1.2;
  std::string rmoe_table_file;
  std::string out;
  std::string samples_path;

  int run(RunContext& ctx) const {
    ctx.inputs.push_back(endpoint_file);
    const json ep_json = json::parse(read_text_file(endpoint_file));
    moestress::EndpointConfig endpoint;
    endpoint.base_url = ep_json.at("base_url").get<std::string>();
    endpoint.model = ep_json.value("model", "unknown");
    endpoint.path = ep_json.value("path", endpoint.path);
    endpoint.auth_env = ep_json.value("auth_env", "");
    endpoint.timeout_sec = ep_json.value("timeout_sec", endpoint.timeout_sec);
    endpoint.max_tokens = ep_json.value("max_tokens", endpoint.max_tokens);
    endpoint.max_requests = budget;

    moestress::ProbeOptions opts;
    opts.samples_per_arm = count;
    opts.warmup_requests = warmup;
    opts.bootstrap_resamples = resamples;
    opts.confidence = confidence;
    opts.moe_threshold = moe_threshold;
    opts.dense_threshold = dense_threshold;
    opts.bootstrap_seed = seed;
    opts.samples_path =
        samples_path.empty() ? out + ".samples.jsonl" : samples_path;

    moestress::PromptSpec attack_spec;
    attack_spec.repeated_unit = unit;
    attack_spec.target_length = length;
    attack_spec.nonce = moestress::make_nonce(seed, 0);
    opts.attack_prompt = moestress::build_attack_prompt(attack_spec);
    if (!corpus.empty()) {
      ctx.inputs.push_back(corpus);
      moestress::PromptSpec normal_spec;
      normal_spec.kind = moestress::PromptSpec::Kind::normal;
      normal_spec.target_length = length;
      normal_spec.corpus_path = corpus;
      opts.normal_prompt = moestress::build_normal_prompt(normal_spec, seed);
    } else {
      opts.normal_prompt = moestress::random_word_prompt(length, seed);
    }

    const moestress::ProbeReport report = moestress::run_probe(endpoint, opts);

    json j = json::parse(report.to_json());
    if (!rmoe_table_file.empty() && report.valid) {
      ctx.inputs.push_back(rmoe_table_file);
      const json table_json = json::parse(read_text_file(rmoe_table_file));
      std::vector<std::pair<int, double>> table;
      for (const auto& row : table_json) {
        table.emplace_back(row.at(0).get<int>(), row.at(1).get<double>());
      }
      const moestress::EpEstimate ep =
          moestress::estimate_ep_size(report.r_api.point, table);
      j["ep_estimate"] = {{"display", ep.to_string()},
                          {"ep", ep.ep},
                          {"exceeds_table", ep.exceeds_table},
                          {"below_table", ep.below_table}};
    }
    write_text_file(out, j.dump(2));
    write_manifest(ctx, out);

    if (!report.valid) {
      std::cerr << "probe invalid: " << report.invalid_reason << "\n";
      return 1;
    }
    std::cout << "r_api point = " << report.r_api.point
              << ", lower = " << report.r_api.lower
              << ", verdict = " << moestress::to_string(report.verdict) << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------------------
// mock-serve

struct MockServeCmd {
  int port = 8089;
  double base_latency = 20.0;
  double ratio = 3.0;
  double noise = 0.05;
  std::uint64_t seed = 7;
  double threshold = 2.0;

  int run() const {
    moestress::MockEndpointOptions opts;
    opts.port = port;
    opts.base_latency_ms = base_latency;
    opts.attack_ratio = ratio;
    opts.noise_frac = noise;
    opts.seed = seed;
    opts.repetition_threshold = threshold;
    moestress::MockEndpoint endpoint(opts);
    endpoint.start();
    std::cout << "mock endpoint listening on " << endpoint.base_url()
              << "/v1/chat/completions (Ctrl-C to stop)\n";
    while (true) std::this_thread::sleep_for(std::chrono::seconds(1));
  }
};

// ---------------------------------------------------------------------------
// CLI wiring

int dispatch(const std::vector<std::string>& argv) {
  CLI::App app{"Simulator, metrics engine, and black-box probe for routing "
               "imbalance in expert-parallel MoE serving"};
  app.set_version_flag("--version", moestress::kVersion);
  app.require_subcommand(1);

  // trace
  TraceCmd trace_cmd;
  CLI::App* trace = app.add_subcommand(
      "trace", "Generate a routing trace from the synthetic router");
  add_router_flags(trace, trace_cmd.rf);
  trace->add_option("--mode", trace_cmd.mode, "repeat | baseline")
      ->required()
      ->check(CLI::IsMember({"repeat", "baseline"}));
  trace->add_option("--token", trace_cmd.token, "Repeated token ID")
      ->capture_default_str();
  trace->add_option("--length", trace_cmd.length, "Trace length in tokens")
      ->capture_default_str();
  trace->add_option("--sample-seed", trace_cmd.sample_seed,
                    "Baseline sampling seed")
      ->capture_default_str();
  trace->add_option("--out", trace_cmd.out, "Output trace JSONL")->required();

  // metrics
  CLI::App* metrics =
      app.add_subcommand("metrics", "Imbalance metrics over traces");
  metrics->require_subcommand(1);

  CoverageCmd coverage_cmd;
  CLI::App* coverage = metrics->add_subcommand(
      "coverage", "Vocabulary-wide mean bottleneck for repeated-token prompts");
  add_router_flags(coverage, coverage_cmd.rf);
  add_sample_flags(coverage, coverage_cmd.sf);
  coverage->add_option("--trace-dir", coverage_cmd.trace_dir,
                       "Directory of token_<id>.jsonl traces (instead of the "
                       "synthetic router)");
  coverage->add_option("--devices", coverage_cmd.devices, "EP device count")
      ->capture_default_str();
  coverage->add_option("--repeat-length", coverage_cmd.repeat_length,
                       "Repeated-prompt length per token")
      ->capture_default_str();
  coverage->add_option("--threads", coverage_cmd.threads,
                       "Worker threads (0 = hardware)")
      ->capture_default_str();
  coverage->add_option("--out", coverage_cmd.out, "Output report JSON")
      ->required();
  coverage->add_option("--csv", coverage_cmd.csv, "Optional per-token CSV");

  BottleneckCmd bottleneck_cmd;
  CLI::App* bneck = metrics->add_subcommand(
      "bottleneck", "Per-layer straggler load for one trace");
  bneck->add_option("--trace", bottleneck_cmd.trace_file, "Input trace JSONL")
      ->required();
  bneck->add_option("--devices", bottleneck_cmd.devices, "EP device count")
      ->capture_default_str();
  bneck->add_option("--out", bottleneck_cmd.out, "Output report JSON")
      ->required();
  bneck->add_option("--heatmap", bottleneck_cmd.heatmap,
                    "Optional layer,expert,rho CSV");

  EntropyCmd entropy_cmd;
  CLI::App* entropy = metrics->add_subcommand(
      "entropy", "Normalized expert-selection entropy of a trace");
  entropy->add_option("--trace", entropy_cmd.trace_file, "Input trace JSONL")
      ->required();
  entropy->add_option("--out", entropy_cmd.out, "Output JSON")->required();

  // simulate
  SimulateCmd simulate_cmd;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "Prefill latency timeline and amplification ratio");
  simulate->add_option("--attack", simulate_cmd.attack_file,
                       "Attack trace JSONL")
      ->required();
  simulate->add_option("--normal", simulate_cmd.normal_file,
                       "Normal trace JSONL")
      ->required();
  simulate->add_option("--devices", simulate_cmd.devices, "EP device count")
      ->capture_default_str();
  simulate->add_option("--ep-sweep", simulate_cmd.ep_sweep,
                       "Comma-separated EP sizes (emits a ratio table)");
  simulate->add_option("--cost", simulate_cmd.cost_file,
                       "Cost model JSON (default: unit per-token cost)");
  simulate->add_option("--out", simulate_cmd.out, "Output report JSON")
      ->required();
  simulate->add_option("--timeline-csv", simulate_cmd.timeline_csv,
                       "Optional attack-timeline CSV");

  // defend
  DefendCmd defend_cmd;
  CLI::App* defend = app.add_subcommand(
      "defend", "Vulnerability scan and balance-aware expert placement");
  add_router_flags(defend, defend_cmd.rf);
  add_sample_flags(defend, defend_cmd.sf);
  defend->add_option("--vmap", defend_cmd.vmap_file,
                     "Existing vulnerability map JSON (skips scanning)");
  defend->add_option("--trace-dir", defend_cmd.trace_dir,
                     "Directory of token_<id>.jsonl traces");
  defend->add_option("--devices", defend_cmd.devices, "EP device count")
      ->capture_default_str();
  defend->add_option("--tau", defend_cmd.tau, "Membership threshold")
      ->capture_default_str();
  defend->add_option("--repeat-length", defend_cmd.repeat_length,
                     "Repeated-prompt length per scanned token")
      ->capture_default_str();
  defend->add_option("--threads", defend_cmd.threads,
                     "Worker threads (0 = hardware)")
      ->capture_default_str();
  defend->add_option("--out", defend_cmd.out, "Output deployment JSON")
      ->required();
  defend->add_option("--vmap-out", defend_cmd.vmap_out,
                     "Optional vulnerability map JSON output");
  defend->add_option("--eval-csv", defend_cmd.eval_csv,
                     "Optional before/after coverage CSV");

  // filter
  FilterCmd filter_cmd;
  CLI::App* filter = app.add_subcommand(
      "filter", "Repetition screening via the unigram proxy-PPL score");
  filter->add_option("--in", filter_cmd.in_file,
                     "Input file: one JSON array of token IDs per line");
  filter->add_option("--text", filter_cmd.text_file,
                     "Plain-text prompt file; words are interned as unit IDs");
  filter->add_option("--tokens", filter_cmd.tokens_list,
                     "Inline comma-separated token IDs");
  filter->add_option("--threshold", filter_cmd.threshold,
                     "Reject when proxy-PPL is strictly below this")
      ->capture_default_str();
  filter->add_option("--out", filter_cmd.out, "Output decisions JSONL")
      ->required();

  // prompt
  PromptCmd prompt_cmd;
  CLI::App* prompt =
      app.add_subcommand("prompt", "Build attack or normal prompt text");
  prompt->add_option("--kind", prompt_cmd.kind, "attack | normal")
      ->check(CLI::IsMember({"attack", "normal"}))
      ->capture_default_str();
  prompt->add_option("--unit", prompt_cmd.unit, "Repeated unit (attack)")
      ->capture_default_str();
  prompt->add_option("--length", prompt_cmd.length,
                     "Target length in whitespace units")
      ->capture_default_str();
  prompt->add_option("--system-file", prompt_cmd.system_file,
                     "System prompt text file");
  prompt->add_option("--corpus", prompt_cmd.corpus,
                     "Normal-prompt corpus (blank-line-separated documents)");
  prompt->add_option("--seed", prompt_cmd.seed, "Nonce / selection seed")
      ->capture_default_str();
  prompt->add_option("--count", prompt_cmd.count, "Number of prompts")
      ->capture_default_str();
  prompt->add_option("--vocab", prompt_cmd.vocab,
                     "Synthetic-baseline vocabulary size")
      ->capture_default_str();
  prompt->add_option("--out", prompt_cmd.out, "Output text file (suffixed "
                     "with .N when --count > 1)")
      ->required();

  // probe
  ProbeCmd probe_cmd;
  CLI::App* probe = app.add_subcommand(
      "probe", "Measure TTFT amplification against a chat endpoint");
  probe->add_option("--endpoint", probe_cmd.endpoint_file,
                    "Endpoint config JSON")
      ->required();
  probe->add_option("--count", probe_cmd.count, "Samples per arm")
      ->capture_default_str();
  probe->add_option("--budget", probe_cmd.budget,
                    "Hard cap on HTTP requests (warmups included)")
      ->capture_default_str();
  probe->add_option("--warmup", probe_cmd.warmup, "Warmup requests per arm")
      ->capture_default_str();
  probe->add_option("--unit", probe_cmd.unit, "Repeated unit")
      ->capture_default_str();
  probe->add_option("--length", probe_cmd.length, "Prompt length in units")
      ->capture_default_str();
  probe->add_option("--corpus", probe_cmd.corpus, "Normal-prompt corpus");
  probe->add_option("--seed", probe_cmd.seed, "Bootstrap / prompt seed")
      ->capture_default_str();
  probe->add_option("--resamples", probe_cmd.resamples, "Bootstrap resamples")
      ->capture_default_str();
  probe->add_option("--confidence", probe_cmd.confidence,
                    "One-sided confidence level")
      ->capture_default_str();
  probe->add_option("--moe-threshold", probe_cmd.moe_threshold,
                    "Lower bound at or above this: moe-likely")
      ->capture_default_str();
  probe->add_option("--dense-threshold", probe_cmd.dense_threshold,
                    "Point at or below this: dense-likely")
      ->capture_default_str();
  probe->add_option("--rmoe-table", probe_cmd.rmoe_table_file,
                    "JSON [[ep, r_moe], ...] table for EP-size estimation");
  probe->add_option("--out", probe_cmd.out, "Output report JSON")->required();
  probe->add_option("--samples", probe_cmd.samples_path,
                    "Raw-sample JSONL path (default <out>.samples.jsonl)");

  // mock-serve
  MockServeCmd mock_cmd;
  CLI::App* mock = app.add_subcommand(
      "mock-serve", "Run the chat-completions mock endpoint in the foreground");
  mock->add_option("--port", mock_cmd.port, "Listen port")
      ->capture_default_str();
  mock->add_option("--base-latency", mock_cmd.base_latency,
                   "Normal-arm latency in ms")
      ->capture_default_str();
  mock->add_option("--ratio", mock_cmd.ratio, "Attack latency multiplier")
      ->capture_default_str();
  mock->add_option("--noise", mock_cmd.noise, "Multiplicative noise fraction")
      ->capture_default_str();
  mock->add_option("--seed", mock_cmd.seed, "Noise seed")
      ->capture_default_str();
  mock->add_option("--threshold", mock_cmd.threshold,
                   "Repetition proxy-PPL threshold")
      ->capture_default_str();

  // rerun
  std::string manifest_file;
  CLI::App* rerun =
      app.add_subcommand("rerun", "Re-execute a run from its manifest");
  rerun->add_option("--manifest", manifest_file, "Manifest JSON")->required();

  std::vector<const char*> cargv;
  cargv.push_back("moestress");
  for (const std::string& a : argv) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  RunContext ctx;
  ctx.argv = argv;
  ctx.started_at = moestress::iso8601_utc_now();
  CLI::App* sub = app.get_subcommands().front();
  ctx.subcommand = sub->get_name();
  if (sub == metrics) {
    ctx.subcommand += " " + metrics->get_subcommands().front()->get_name();
  }

  if (sub == trace) return trace_cmd.run(ctx);
  if (sub == metrics) {
    CLI::App* msub = metrics->get_subcommands().front();
    if (msub == coverage) return coverage_cmd.run(ctx);
    if (msub == bneck) return bottleneck_cmd.run(ctx);
    return entropy_cmd.run(ctx);
  }
  if (sub == simulate) return simulate_cmd.run(ctx);
  if (sub == defend) return defend_cmd.run(ctx);
  if (sub == filter) return filter_cmd.run(ctx);
  if (sub == prompt) return prompt_cmd.run(ctx);
  if (sub == probe) return probe_cmd.run(ctx);
  if (sub == mock) return mock_cmd.run();
  if (sub == rerun) {
    const moestress::RunManifest m = moestress::RunManifest::load(manifest_file);
    if (m.subcommand == "rerun") {
      throw moestress::ConfigError("refusing to rerun a rerun manifest");
    }
    return run_cli(m.argv);
  }
  return 2;
}

int run_cli(const std::vector<std::string>& argv) {
  try {
    return dispatch(argv);
  } catch (const moestress::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  return run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
