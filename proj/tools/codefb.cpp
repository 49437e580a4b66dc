#include <atomic>
#include <chrono>
#include <cstdlib>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "codefb/core/jsonl.hpp"
#include "codefb/core/stats.hpp"
#include "codefb/core/validate.hpp"
#include "codefb/eval/harness.hpp"
#include "codefb/knn/embedding.hpp"
#include "codefb/leakage/leakage.hpp"
#include "codefb/llm/factory.hpp"
#include "codefb/pipeline/correction.hpp"
#include "codefb/pipeline/filter.hpp"
#include "codefb/pipeline/leetcode.hpp"
#include "codefb/pipeline/packing.hpp"
#include "codefb/pipeline/simulate.hpp"
#include "codefb/service/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace codefb;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBelowThreshold = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything needed to re-run a command: argv, resolved settings, seeds,
/// providers, counts.
struct RunManifest {
  std::string subcommand;
  std::vector<std::string> argv;
  json config = json::object();
  json inputs = json::object();
  json outputs = json::object();
  json providers = json::object();
  json counts = json::object();
  json drops = json::array();
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  json to_json() const {
    auto wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return {{"subcommand", subcommand}, {"argv", argv},         {"config", config}, {"inputs", inputs},
            {"outputs", outputs},       {"providers", providers}, {"counts", counts}, {"drops", drops},
            {"wall_time_s", wall}};
  }
};

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

/// Manifest goes to --manifest, else next to the main output, else to stderr.
void emit_manifest(const RunManifest& m, const std::string& manifest_path, const std::string& main_output) {
  auto text = m.to_json().dump(2) + "\n";
  if (!manifest_path.empty()) {
    write_text(manifest_path, text);
  } else if (!main_output.empty()) {
    write_text(main_output + ".manifest.json", text);
  } else {
    std::cerr << "manifest: " << m.to_json().dump() << "\n";
  }
}

void require_file(const std::string& path, const char* flag) {
  if (!fs::is_regular_file(path)) throw UsageError(std::string(flag) + ": no such file: " + path);
}

struct Common {
  std::size_t jobs = 1;
  std::string manifest;
  long long timeout_ms = 10'000;
};

ExecutionLimits limits_from(const Common& c) {
  ExecutionLimits l;
  l.wall_timeout = Millis(c.timeout_ms);
  return l;
}

/// Scripted runs pop one shared queue, so they stay sequential.
std::size_t effective_jobs(const Common& c, std::initializer_list<std::string> specs) {
  for (const auto& s : specs) {
    if (llm::ProviderFactory::is_scripted(s)) return 1;
  }
  return c.jobs;
}

void check_samples(const std::vector<PackedSample>& samples) {
  for (const auto& s : samples) {
    auto v = validate_sample(s);
    if (!v.ok()) throw std::runtime_error("emitted sample " + s.dialogue.id + " is invalid: " + v.violations[0].what);
  }
}

// ---------------------------------------------------------------- filter

struct FilterOpts {
  std::string input, output, rejects, provider = "http";
  int threshold = 4;
};

int run_filter(const FilterOpts& o, const Common& c, RunManifest& m) {
  require_file(o.input, "--input");
  auto items = pipeline::read_items(o.input);
  llm::ProviderFactory pf;
  auto& provider = pf.get(o.provider);
  pipeline::FilterConfig cfg;
  cfg.threshold = o.threshold;
  cfg.jobs = effective_jobs(c, {o.provider});
  auto result = pipeline::filter_queries(items, provider, cfg);

  auto encode = [](const pipeline::RatedItem& r) {
    auto j = pipeline::item_to_json(r.item);
    json ratings = json::array();
    for (const auto& rt : r.ratings) ratings.push_back({{"prompt", llm::template_name(rt.prompt_used)}, {"score", rt.score}});
    j["ratings"] = ratings;
    if (!r.retained) j["reject_reason"] = r.reject_reason;
    return j;
  };
  std::vector<pipeline::RatedItem> kept, dropped;
  for (const auto& r : result.rows) (r.retained ? kept : dropped).push_back(r);
  write_jsonl_as(o.output, kept, encode);
  if (!o.rejects.empty()) write_jsonl_as(o.rejects, dropped, encode);
  for (const auto& r : dropped) m.drops.push_back({{"id", r.item.id}, {"reason", r.reject_reason}});

  m.config = {{"threshold", o.threshold}, {"jobs", cfg.jobs}};
  m.inputs = {{"items", o.input}};
  m.outputs = {{"retained", o.output}, {"rejects", o.rejects}};
  m.providers = {{"rater", provider.id()}};
  m.counts = {{"input", items.size()}, {"retained", kept.size()}, {"rejected", dropped.size()},
              {"malformed", result.malformed()}};
  std::cout << "retained " << kept.size() << " of " << items.size() << " items\n";
  return 0;
}

// ---------------------------------------------------------------- pack

struct PackOpts {
  std::string input, output, embedder = "hash", cache;
  std::uint64_t seed = 0;
  std::size_t k = 4, dim = 32;
  std::vector<int> group_sizes{2, 3};
};

int run_pack(const PackOpts& o, const Common&, RunManifest& m) {
  require_file(o.input, "--input");
  auto items = pipeline::read_items(o.input);
  std::unique_ptr<knn::Embedder> base;
  if (o.embedder == "hash") base = std::make_unique<knn::HashEmbedder>(o.dim);
  else if (o.embedder == "http") {
    // Embeddings use their own model name; the chat model is not an embedder.
    auto ep = llm::HttpEndpoint::from_env();
    const char* model = std::getenv("CODEFB_EMBED_MODEL");
    ep.model = model ? model : "text-embedding-3-small";
    base = std::make_unique<knn::HttpEmbedder>(ep, o.dim);
  }
  else throw UsageError("--embedder must be hash or http");
  std::unique_ptr<knn::CachedEmbedder> cached;
  knn::Embedder* emb = base.get();
  if (!o.cache.empty()) {
    cached = std::make_unique<knn::CachedEmbedder>(*base, o.cache);
    emb = cached.get();
  }
  auto store = pipeline::build_store(items, *emb);
  pipeline::PackingConfig cfg;
  cfg.k = o.k;
  cfg.rng_seed = o.seed;
  cfg.group_size_choices = o.group_sizes;
  auto res = pipeline::pack_single_turn(items, store, cfg);
  check_samples(res.samples);
  write_jsonl(o.output, res.samples);

  std::size_t packed = 0;
  for (const auto& s : res.samples) packed += s.source_ids.size();
  for (const auto& id : res.bypassed) m.drops.push_back({{"id", id}, {"reason", "all neighbours already used"}});
  m.config = {{"k", o.k}, {"seed", o.seed}, {"group_sizes", o.group_sizes}, {"embedder", emb->id()}, {"dim", o.dim}};
  m.inputs = {{"items", o.input}};
  m.outputs = {{"samples", o.output}, {"embedding_cache", o.cache}};
  m.counts = {{"input", items.size()}, {"samples", res.samples.size()}, {"items_packed", packed},
              {"bypassed", res.bypassed.size()}};
  std::cout << "packed " << packed << " items into " << res.samples.size() << " samples, bypassed "
            << res.bypassed.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
  std::string input, output, provider = "http", initial, refiner, feedback, trace;
  int max_iterations = 3, feedback_rounds = 1;
};

int run_simulate(const SimulateOpts& o, const Common& c, RunManifest& m) {
  require_file(o.input, "--input");
  auto items = pipeline::read_items(o.input);
  llm::ProviderFactory pf;
  auto initial_spec = o.initial.empty() ? o.provider : o.initial;
  auto refiner_spec = o.refiner.empty() ? o.provider : o.refiner;
  auto feedback_spec = o.feedback.empty() ? o.provider : o.feedback;
  pipeline::SimulationProviders providers{pf.get(initial_spec), pf.get(refiner_spec), pf.get(feedback_spec)};
  pipeline::SimulationConfig cfg;
  cfg.loop.max_iterations = o.max_iterations;
  cfg.loop.limits = limits_from(c);
  cfg.feedback_rounds = o.feedback_rounds;
  Executor ex;
  std::unique_ptr<refine::JsonlTrace> trace;
  if (!o.trace.empty()) trace = std::make_unique<refine::JsonlTrace>(o.trace);

  auto jobs = effective_jobs(c, {initial_spec, refiner_spec, feedback_spec});
  auto results = util::parallel_map(items, jobs, [&](const pipeline::SingleTurnItem& it) {
    return pipeline::simulate_interaction(it, providers, ex, cfg, trace.get());
  });
  std::vector<PackedSample> samples;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].sample) samples.push_back(*results[i].sample);
    else m.drops.push_back({{"id", items[i].id}, {"reason", results[i].drop_reason}});
  }
  check_samples(samples);
  write_jsonl(o.output, samples);

  m.config = {{"max_iterations", o.max_iterations}, {"feedback_rounds", o.feedback_rounds}, {"jobs", jobs},
              {"timeout_ms", c.timeout_ms}};
  m.inputs = {{"items", o.input}};
  m.outputs = {{"samples", o.output}, {"trace", o.trace}};
  m.providers = {{"initial", providers.initial.id()}, {"refiner", providers.refiner.id()},
                 {"feedback_sim", providers.feedback_sim.id()}};
  m.counts = {{"input", items.size()}, {"samples", samples.size()}, {"dropped", items.size() - samples.size()}};
  std::cout << "simulated " << samples.size() << " of " << items.size() << " items\n";
  return 0;
}

// ---------------------------------------------------------------- correct

struct CorrectOpts {
  std::string input, output, provider = "http";
  int max_iterations = 3;
};

int run_correct(const CorrectOpts& o, const Common& c, RunManifest& m) {
  require_file(o.input, "--input");
  auto items = pipeline::read_items(o.input);
  llm::ProviderFactory pf;
  auto& provider = pf.get(o.provider);
  pipeline::CorrectionConfig cfg;
  cfg.fix_loop.max_iterations = o.max_iterations;
  cfg.fix_loop.limits = limits_from(c);
  Executor ex;
  std::vector<std::size_t> idx(items.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto jobs = effective_jobs(c, {o.provider});
  auto results = util::parallel_map(idx, jobs, [&](std::size_t i) {
    return pipeline::generate_code_correction(items[i], provider, pipeline::seed_kind_for(i), ex, cfg);
  });
  std::vector<PackedSample> samples;
  json kinds = json::object();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (r.sample) {
      auto found = pipeline::injection_findings(*r.sample);
      if (!found.empty()) throw std::runtime_error("sample " + r.sample->dialogue.id + " leaks '" + found[0] + "'");
      samples.push_back(*r.sample);
      auto k = std::string(to_string(r.kinds_tried.back()));
      kinds[k] = kinds.value(k, 0) + 1;
    } else {
      m.drops.push_back({{"id", items[i].id}, {"reason", r.drop_reason}});
    }
  }
  check_samples(samples);
  write_jsonl(o.output, samples);
  m.config = {{"max_iterations", o.max_iterations}, {"jobs", jobs}, {"timeout_ms", c.timeout_ms}};
  m.inputs = {{"items", o.input}};
  m.outputs = {{"samples", o.output}};
  m.providers = {{"generator", provider.id()}};
  m.counts = {{"input", items.size()}, {"samples", samples.size()}, {"seed_kinds", kinds}};
  std::cout << "corrected " << samples.size() << " of " << items.size() << " items\n";
  return 0;
}

// ---------------------------------------------------------------- leetcode-pack

struct LeetcodeOpts {
  std::string input, output, provider, mode = "both";
  bool rephrase = false;
};

int run_leetcode(const LeetcodeOpts& o, const Common&, RunManifest& m) {
  require_file(o.input, "--input");
  auto problems = pipeline::read_problems(o.input);
  llm::ProviderFactory pf;
  llm::Provider* provider = o.provider.empty() ? nullptr : &pf.get(o.provider);
  pipeline::LeetcodeStats st;
  std::vector<PackedSample> samples;
  std::size_t similar = 0, followup = 0;
  if (o.mode == "similar" || o.mode == "both") {
    auto s = pipeline::pack_leetcode_similar(problems, provider, &st);
    similar = s.size();
    samples.insert(samples.end(), s.begin(), s.end());
  }
  if (o.mode == "followup" || o.mode == "both") {
    pipeline::FollowupConfig fc;
    fc.rephrase = o.rephrase;
    auto s = pipeline::pack_leetcode_followup(problems, provider, fc, &st);
    followup = s.size();
    samples.insert(samples.end(), s.begin(), s.end());
  }
  check_samples(samples);
  write_jsonl(o.output, samples);
  m.config = {{"mode", o.mode}, {"rephrase", o.rephrase}};
  m.inputs = {{"problems", o.input}};
  m.outputs = {{"samples", o.output}};
  m.providers = {{"explainer", provider ? provider->id() : "none"}};
  m.counts = {{"problems", problems.size()}, {"similar", similar}, {"followup", followup},
              {"enrich_fallbacks", st.enrich_fallbacks}};
  std::cout << "packed " << similar << " similar and " << followup << " follow-up samples\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalOpts {
  std::string suite, provider = "http", feedback_provider, scenario = "exec-feedback", report, table;
  int max_rounds = 2;
  double threshold = -1;
  bool no_self_check = false;
};

int run_eval(const EvalOpts& o, const Common& c, RunManifest& m) {
  require_file(o.suite, "--suite");
  auto scenario = eval::parse_scenario(o.scenario);
  if (!scenario) throw UsageError("--scenario must be exec-feedback, human-feedback or human-feedback-oracle");
  Executor ex;
  auto limits = limits_from(c);
  auto suite = eval::load_suite(o.suite, o.no_self_check ? nullptr : &ex, limits, c.jobs);
  std::vector<llm::OracleProvider::Entry> oracle;
  for (const auto& t : suite) oracle.push_back({t.prompt, t.canonical_solution, t.language});
  llm::ProviderFactory pf(oracle);
  auto& provider = pf.get(o.provider);
  llm::Provider* fb = nullptr;
  if (*scenario != eval::Scenario::ExecutionFeedback) {
    if (o.feedback_provider.empty()) throw UsageError("--feedback-provider is required for " + o.scenario);
    fb = &pf.get(o.feedback_provider);
  }
  eval::EvalConfig cfg;
  cfg.limits = limits;
  cfg.max_rounds = o.max_rounds;
  cfg.scenario = *scenario;
  cfg.jobs = effective_jobs(c, {o.provider, o.feedback_provider});
  auto report = eval::run_multi_turn(suite, provider, ex, cfg, fb);

  eval::print_report(std::cout, report);
  auto rj = eval::report_to_json(report);
  if (!o.report.empty()) write_text(o.report, rj.dump(2) + "\n");

  m.config = {{"scenario", o.scenario}, {"max_rounds", o.max_rounds}, {"threshold", o.threshold},
              {"jobs", cfg.jobs}, {"timeout_ms", c.timeout_ms}, {"self_check", !o.no_self_check}};
  m.inputs = {{"suite", o.suite}};
  m.outputs = {{"report", o.report}};
  m.providers = {{"model", provider.id()}, {"feedback", fb ? fb->id() : "none"}};
  m.counts = {{"tasks", suite.size()}, {"pass_at_1", report.single_turn()}, {"pass_at_1_final", report.final_pass()}};
  if (o.threshold >= 0 && report.final_pass() < o.threshold) {
    std::cerr << "pass@1 " << eval::fixed3(report.final_pass()) << " is below threshold " << o.threshold << "\n";
    return kExitBelowThreshold;
  }
  return 0;
}

// ---------------------------------------------------------------- leakage

struct LeakageOpts {
  std::string dataset, out;
  std::vector<std::string> benchmarks;
  std::vector<std::size_t> n{5, 6, 7};
  bool reverse = false;
};

std::vector<std::string> dataset_code(const std::string& path) {
  std::vector<std::string> docs;
  for (const auto& s : read_jsonl(path)) {
    for (const auto& msg : s.dialogue.messages) {
      if (msg.role() != Role::Assistant) continue;
      for (const auto& b : msg.code_blocks()) docs.push_back(b.source);
    }
  }
  return docs;
}

int run_leakage(const LeakageOpts& o, const Common&, RunManifest& m) {
  require_file(o.dataset, "--dataset");
  auto dataset = leakage::normalize_all(dataset_code(o.dataset));
  std::vector<std::pair<std::string, std::vector<leakage::Lines>>> suites;
  json bench_inputs = json::object();
  for (const auto& spec : o.benchmarks) {
    // NAME=PATH, or a bare path named after its stem.
    auto eq = spec.find('=');
    std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    require_file(path, "--benchmark");
    std::vector<std::string> docs;
    for (const auto& t : eval::load_suite(path, nullptr)) docs.push_back(t.canonical_solution);
    suites.emplace_back(name, leakage::normalize_all(docs));
    bench_inputs[name] = path;
  }
  leakage::LeakageConfig cfg;
  cfg.n_values = o.n;
  cfg.dataset_denominator = o.reverse;
  auto table = leakage::leakage_table(dataset, suites, cfg);
  leakage::print_table(std::cout, table);
  auto tj = leakage::table_to_json(table);
  if (!o.out.empty()) write_text(o.out, tj.dump(2) + "\n");
  m.config = {{"n", o.n}, {"orientation", o.reverse ? "dataset" : "benchmark"}};
  m.inputs = {{"dataset", o.dataset}, {"benchmarks", bench_inputs}};
  m.outputs = {{"table", o.out}};
  m.counts = {{"dataset_blocks", dataset.size()}, {"table", tj}};
  return 0;
}

// ---------------------------------------------------------------- stats

struct StatsOpts {
  std::string input, out;
};

int run_stats(const StatsOpts& o, const Common&, RunManifest& m) {
  require_file(o.input, "--input");
  auto st = compute_stats(read_jsonl(o.input));
  print_stats_table(std::cout, st);
  auto j = stats_to_json(st);
  if (!o.out.empty()) write_text(o.out, j.dump(2) + "\n");
  m.inputs = {{"samples", o.input}};
  m.outputs = {{"stats", o.out}};
  m.counts = j;
  return 0;
}

// ---------------------------------------------------------------- serve

struct ServeOpts {
  std::string listen = "127.0.0.1:8080", data_dir, provider = "http", cors_origin = "*", port_file;
  int max_iterations = 3;
};

httplib::Server* g_server = nullptr;

int run_serve(const ServeOpts& o, const Common& c, RunManifest& m) {
  if (o.data_dir.empty()) throw UsageError("--data-dir is required");
  auto colon = o.listen.rfind(':');
  if (colon == std::string::npos) throw UsageError("--listen must be HOST:PORT");
  auto host = o.listen.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(o.listen.substr(colon + 1));
  } catch (const std::exception&) {
    throw UsageError("--listen port is not a number");
  }
  llm::ProviderFactory pf;
  auto& provider = pf.get(o.provider);
  ExecutorConfig ec = ExecutorConfig::defaults();
  ec.pool_size = std::max<std::size_t>(c.jobs, 1);
  Executor ex(ec);
  service::SessionConfig defaults;
  defaults.max_iterations = o.max_iterations;
  defaults.wall_timeout = Millis(c.timeout_ms);
  service::SessionService svc(o.data_dir, provider, ex, defaults);

  httplib::Server server;
  service::mount(server, svc, o.cors_origin);
  if (port == 0) {
    port = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    throw std::runtime_error("cannot bind " + o.listen);
  }
  if (port <= 0) throw std::runtime_error("cannot bind " + o.listen);
  if (!o.port_file.empty()) write_text(o.port_file, std::to_string(port) + "\n");
  std::cout << "listening on " << host << ":" << port << " (" << svc.size() << " sessions loaded)" << std::endl;

  m.config = {{"listen", host + ":" + std::to_string(port)}, {"max_iterations", o.max_iterations},
              {"timeout_ms", c.timeout_ms}, {"cors_origin", o.cors_origin}};
  m.inputs = {{"data_dir", o.data_dir}};
  m.providers = {{"model", provider.id()}};

  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  server.listen_after_bind();
  g_server = nullptr;
  m.counts = {{"sessions", svc.size()}};
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate, execute and refine code with feedback; build multi-turn data; evaluate; measure leakage."};
  app.set_config("--config", "", "Read options from a key = value file ([subcommand] sections allowed)");
  app.require_subcommand(1);
  Common common;
  app.add_option("--jobs", common.jobs, "Maximum parallel workers (scripted providers force 1)")
      ->envname("CODEFB_JOBS")->check(CLI::PositiveNumber);
  app.add_option("--manifest", common.manifest, "Where to write the run manifest (default: <output>.manifest.json)");
  app.add_option("--timeout-ms", common.timeout_ms, "Sandbox wall-clock limit per run, in milliseconds")
      ->envname("CODEFB_TIMEOUT_MS")->check(CLI::PositiveNumber);

  RunManifest manifest;
  for (int i = 0; i < argc; ++i) manifest.argv.emplace_back(argv[i]);
  std::string main_output;
  std::function<int()> action;

  FilterOpts fo;
  auto* filter = app.add_subcommand("filter", "Keep queries both complexity prompts rate at or above the threshold");
  filter->add_option("--input", fo.input, "Single-turn items JSONL {id, query, response, source}")->required();
  filter->add_option("--output", fo.output, "Retained items JSONL, with their ratings")->required();
  filter->add_option("--rejects", fo.rejects, "Rejected items JSONL, with the reason");
  filter->add_option("--provider", fo.provider, "Rater: http | echo | scripted:PATH")->envname("CODEFB_PROVIDER");
  filter->add_option("--threshold", fo.threshold, "Minimum score under each prompt")->check(CLI::Range(1, 5));
  filter->callback([&] { main_output = fo.output; action = [&] { return run_filter(fo, common, manifest); }; });

  PackOpts po;
  auto* pack = app.add_subcommand("pack", "Merge embedding-neighbour single-turn items into multi-turn samples");
  pack->add_option("--input", po.input, "Single-turn items JSONL")->required();
  pack->add_option("--output", po.output, "Packed samples JSONL")->required();
  pack->add_option("--seed", po.seed, "Seed for the group-size draws");
  pack->add_option("--k", po.k, "Neighbours considered per query")->check(CLI::PositiveNumber);
  pack->add_option("--group-sizes", po.group_sizes, "Group sizes to draw from, counting the query")->delimiter(',');
  pack->add_option("--embedder", po.embedder, "hash (deterministic) | http (CODEFB_BASE_URL, CODEFB_API_KEY, CODEFB_EMBED_MODEL)");
  pack->add_option("--dim", po.dim, "Embedding dimension")->check(CLI::PositiveNumber);
  pack->add_option("--embedding-cache", po.cache, "Embedding cache file, keyed by text hash");
  pack->callback([&] { main_output = po.output; action = [&] { return run_pack(po, common, manifest); }; });

  SimulateOpts so;
  auto* sim = app.add_subcommand("simulate", "Simulated sessions with execution and human-style feedback");
  sim->add_option("--input", so.input, "Single-turn items JSONL")->required();
  sim->add_option("--output", so.output, "Samples JSONL")->required();
  sim->add_option("--provider", so.provider, "Default provider for every role")->envname("CODEFB_PROVIDER");
  sim->add_option("--initial-provider", so.initial, "Provider for the first answer");
  sim->add_option("--refiner-provider", so.refiner, "Provider for refinements and judging");
  sim->add_option("--feedback-provider", so.feedback, "Provider playing the user");
  sim->add_option("--max-iterations", so.max_iterations, "Execution-feedback rounds per loop")->check(CLI::PositiveNumber);
  sim->add_option("--feedback-rounds", so.feedback_rounds, "Simulated human-feedback turns")->check(CLI::NonNegativeNumber);
  sim->add_option("--trace", so.trace, "Write a replayable JSONL trace of every loop");
  sim->callback([&] { main_output = so.output; action = [&] { return run_simulate(so, common, manifest); }; });

  CorrectOpts co;
  auto* corr = app.add_subcommand("correct", "Deliberately buggy code, its diagnostics and the repair");
  corr->add_option("--input", co.input, "Single-turn items JSONL")->required();
  corr->add_option("--output", co.output, "Samples JSONL")->required();
  corr->add_option("--provider", co.provider, "Generator: http | scripted:PATH")->envname("CODEFB_PROVIDER");
  corr->add_option("--max-iterations", co.max_iterations, "Repair rounds")->check(CLI::PositiveNumber);
  corr->callback([&] { main_output = co.output; action = [&] { return run_correct(co, common, manifest); }; });

  LeetcodeOpts lo;
  auto* lc = app.add_subcommand("leetcode-pack", "Chain related problems, or alternative solutions of one problem");
  lc->add_option("--input", lo.input, "Tagged problems JSONL {id, statement, solutions, related_ids}")->required();
  lc->add_option("--output", lo.output, "Samples JSONL")->required();
  lc->add_option("--mode", lo.mode, "similar | followup | both")->check(CLI::IsMember({"similar", "followup", "both"}));
  lc->add_option("--provider", lo.provider, "Explanation writer; without one a stock preamble is used");
  lc->add_flag("--rephrase", lo.rephrase, "Let the provider reword follow-up requests");
  lc->callback([&] { main_output = lo.output; action = [&] { return run_leetcode(lo, common, manifest); }; });

  EvalOpts eo;
  auto* ev = app.add_subcommand("eval", "pass@1 over a task suite, with feedback rounds");
  ev->add_option("--suite", eo.suite, "Suite JSONL {id, prompt, language, canonical_solution, tests, entry_point}")
      ->required();
  ev->add_option("--provider", eo.provider, "Model: oracle | http | echo | scripted:PATH")->envname("CODEFB_PROVIDER");
  ev->add_option("--scenario", eo.scenario, "exec-feedback | human-feedback | human-feedback-oracle");
  ev->add_option("--feedback-provider", eo.feedback_provider, "Writes feedback in the human-feedback scenarios");
  ev->add_option("--max-rounds", eo.max_rounds, "Generations per task; 1 is single-turn")->check(CLI::PositiveNumber);
  ev->add_option("--report", eo.report, "Machine-readable report JSON");
  ev->add_option("--threshold", eo.threshold, "Exit 3 when final pass@1 is below this");
  ev->add_flag("--no-self-check", eo.no_self_check, "Skip running canonical solutions at load");
  ev->callback([&] { main_output = eo.report; action = [&] { return run_eval(eo, common, manifest); }; });

  LeakageOpts lko;
  auto* lk = app.add_subcommand("leakage", "Consecutive-line overlap between a dataset and benchmark solutions");
  lk->add_option("--dataset", lko.dataset, "Samples JSONL; code blocks of assistant turns are compared")->required();
  lk->add_option("--benchmark", lko.benchmarks, "Suite JSONL as PATH or NAME=PATH; repeatable")->required();
  lk->add_option("--n", lko.n, "Window lengths, ascending")->delimiter(',');
  lk->add_flag("--reverse", lko.reverse, "Use dataset windows as the denominator");
  lk->add_option("--out", lko.out, "Machine-readable table JSON");
  lk->callback([&] { main_output = lko.out; action = [&] { return run_leakage(lko, common, manifest); }; });

  StatsOpts sto;
  auto* stc = app.add_subcommand("stats", "Per-method sample and turn counts");
  stc->add_option("--input", sto.input, "Samples JSONL")->required();
  stc->add_option("--out", sto.out, "Machine-readable stats JSON");
  stc->callback([&] { main_output = sto.out; action = [&] { return run_stats(sto, common, manifest); }; });

  ServeOpts svo;
  auto* srv = app.add_subcommand("serve", "HTTP session service for interactive refinement");
  srv->add_option("--listen", svo.listen, "HOST:PORT; port 0 picks a free one")->envname("CODEFB_LISTEN");
  srv->add_option("--data-dir", svo.data_dir, "Directory for session event logs")->envname("CODEFB_DATA_DIR");
  srv->add_option("--provider", svo.provider, "Model: http | echo | scripted:PATH")->envname("CODEFB_PROVIDER");
  srv->add_option("--cors-origin", svo.cors_origin, "Access-Control-Allow-Origin value");
  srv->add_option("--max-iterations", svo.max_iterations, "Default rounds per user turn")->check(CLI::PositiveNumber);
  srv->add_option("--port-file", svo.port_file, "Write the bound port here once listening");
  srv->callback([&] { main_output.clear(); action = [&] { return run_serve(svo, common, manifest); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  manifest.subcommand = app.get_subcommands().front()->get_name();
  try {
    int rc = action();
    manifest.counts["exit_code"] = rc;
    emit_manifest(manifest, common.manifest, main_output);
    return rc;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
