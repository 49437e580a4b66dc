// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.
#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <condition_variable>
#include <functional>
#include <future>
#include <iostream>
#include <random>
#include <set>
#include <thread>

#include <httplib.h>

#include "codefb/core/jsonl.hpp"
#include "codefb/core/stats.hpp"
#include "codefb/core/validate.hpp"
#include "codefb/eval/harness.hpp"
#include "codefb/leakage/leakage.hpp"
#include "codefb/pipeline/correction.hpp"
#include "codefb/pipeline/filter.hpp"
#include "codefb/pipeline/leetcode.hpp"
#include "codefb/pipeline/packing.hpp"
#include "codefb/pipeline/simulate.hpp"
#include "codefb/refine/engine.hpp"
#include "codefb/service/service.hpp"
#include "codefb/util/parallel.hpp"
#include "support.hpp"

using namespace codefb;
using namespace std::chrono_literals;
using codefb::testing::slurp;
using codefb::testing::source_path;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

/// Collects the first few problems of one criterion.
struct Check {
  std::vector<std::string> problems;
  void expect(bool ok, const std::string& what) {
    if (!ok && problems.size() < 5) problems.push_back(what);
  }
  std::string result() const {
    std::string out;
    for (const auto& p : problems) out += (out.empty() ? "" : "; ") + p;
    return out;
  }
};

const std::vector<TaskSpec>& toy_suite() {
  static const auto suite = [] {
    Executor ex;
    return eval::load_suite(source_path("data/toy_suite.jsonl"), &ex);
  }();
  return suite;
}

ExecutionLimits limits(Millis wall) {
  ExecutionLimits l;
  l.wall_timeout = wall;
  return l;
}

// ------------------------------------------------------------------ eval

std::string oracle_eval() {
  Check c;
  codefb::testing::Scratch tmp;
  auto report = (tmp / "report.json").string();
  auto start = Clock::now();
  auto r = codefb::testing::run_cli(
      {"--jobs", "4", "eval", "--suite", "data/toy_suite.jsonl", "--provider", "oracle", "--max-rounds", "1", "--report",
       report});
  auto secs = std::chrono::duration<double>(Clock::now() - start).count();
  c.expect(r.exit_code == 0, "exit " + std::to_string(r.exit_code) + ": " + r.err);
  if (r.exit_code == 0) {
    auto j = json::parse(slurp(report));
    c.expect(j["tasks"] == 10, "suite is not 10 tasks");
    c.expect(j["pass_at_1"] == 1.0, "pass@1 " + j["pass_at_1"].dump());
    c.expect(r.out.find("1.000") != std::string::npos, "table lacks 1.000");
  }
  c.expect(secs < 60, "took " + std::to_string(secs) + " s");
  return c.result();
}

std::string refinement_lift() {
  Check c;
  Executor ex;
  auto script = llm::ScriptedProvider::from_file(source_path("data/scripts/eval_wrong_then_right.json"));
  llm::RecordingProvider model(*script);
  llm::ScriptedProvider fb_inner;
  llm::RecordingProvider feedback(fb_inner);
  eval::EvalConfig cfg;
  cfg.limits = limits(4000ms);
  cfg.max_rounds = 2;
  cfg.scenario = eval::Scenario::ExecutionFeedback;
  cfg.jobs = 4;
  auto r = eval::run_multi_turn(toy_suite(), model, ex, cfg, &feedback);
  c.expect(r.pass_at_round(1) == 0.0, "round 1 pass@1 " + std::to_string(r.pass_at_round(1)));
  c.expect(r.pass_at_round(2) == 1.0, "round 2 pass@1 " + std::to_string(r.pass_at_round(2)));
  c.expect(feedback.calls() == 0, "feedback provider was called");
  bool timed_out_prompt = false;
  for (const auto& req : model.requests()) {
    if (req.messages.size() >= 3 && util::contains(req.messages.back().content, "Execution timed out"))
      timed_out_prompt = true;
  }
  c.expect(timed_out_prompt, "no round-2 prompt carried 'Execution timed out'");
  return c.result();
}

// ------------------------------------------------------------------ loop

std::string loop_bound() {
  const std::string pass = "```python\nprint(1)\n```", fail = "```python\nprint(2)\n```",
                    crash = "```python\nraise ValueError('x')\n```", prose = "No code today.";
  Executor ex;
  TaskSpec task;
  task.id = "one";
  task.prompt = "Print 1.";
  task.canonical_solution = "print(1)";
  task.tests = {{"", "1"}};
  std::vector<int> seeds(200);
  for (int i = 0; i < 200; ++i) seeds[static_cast<std::size_t>(i)] = i;
  auto errs = util::parallel_map(seeds, 8, [&](int s) -> std::string {
    std::mt19937_64 rng(static_cast<std::uint64_t>(s) + 1000);
    refine::LoopConfig cfg;
    cfg.max_iterations = 1 + static_cast<int>(rng() % 4);
    cfg.judge = std::array{refine::Judge::TestDriven, refine::Judge::ModelDriven,
                           refine::Judge::ExecutionDriven}[rng() % 3];
    llm::ScriptedProvider p;
    std::optional<int> expected;
    for (int round = 1; round <= cfg.max_iterations + 2; ++round) {
      const std::array replies{pass, fail, crash, prose};
      const auto& reply = replies[rng() % replies.size()];
      p.push(reply);
      bool clean = reply == pass || (reply == fail && cfg.judge != refine::Judge::TestDriven);
      bool accepted = clean;
      if (clean && cfg.judge == refine::Judge::ModelDriven) {
        accepted = rng() % 2;
        p.push(accepted ? "Yes." : "No.");
      }
      if (accepted && !expected && round <= cfg.max_iterations) expected = round;
    }
    Dialogue input{"acc", {Message::user("Print 1.")}};
    const Dialogue before = input;
    refine::LoopContext ctx(p, ex);
    ctx.task = &task;
    auto r = refine::run_execution_loop(input, cfg, ctx);
    auto added = r.dialogue.count(Role::Assistant) - before.count(Role::Assistant);
    if (!(input == before)) return "seed " + std::to_string(s) + " mutated its input";
    if (added > static_cast<std::size_t>(cfg.max_iterations)) return "seed " + std::to_string(s) + " overran";
    if (r.passed_round != expected) return "seed " + std::to_string(s) + " passed_round not minimal";
    return {};
  });
  Check c;
  for (const auto& e : errs) c.expect(e.empty(), e);
  return c.result();
}

// ------------------------------------------------------------------ sandbox

std::string sandbox_taxonomy() {
  Check c;
  Executor ex;
  auto l = limits(5000ms);
  c.expect(ex.execute("print('ok')", "python", l).status == ExecStatus::Pass, "pass snippet");
  c.expect(ex.execute("raise KeyError('k')", "python", l).status == ExecStatus::ExceptionRaised, "exception snippet");
  auto mm = ex.run_tests("print(int(input()) + 1)", "python", {{"4\n", "6"}}, l);
  c.expect(mm.status == ExecStatus::OutputMismatch && mm.mismatch && mm.mismatch->test_input == "4\n" &&
               mm.mismatch->expected == "6" && mm.mismatch->actual == "5",
           "mismatch triple");

  auto start = Clock::now();
  auto to = ex.execute("while True:\n    pass", "python", limits(1000ms));
  auto wall = Clock::now() - start;
  c.expect(to.status == ExecStatus::Timeout, "timeout snippet");
  c.expect(wall >= 1000ms && wall <= 3000ms,
           "timeout took " + std::to_string(std::chrono::duration_cast<Millis>(wall).count()) + " ms");

  ::setenv("CODEFB_ACCEPTANCE_SECRET", "s3cret", 1);
  auto env = ex.execute("import os\nprint(os.environ.get('CODEFB_ACCEPTANCE_SECRET', 'absent'))", "python", l);
  ::unsetenv("CODEFB_ACCEPTANCE_SECRET");
  c.expect(env.stdout_text == "absent\n", "parent environment leaked");
  auto w = ex.execute("open('left.txt', 'w').write('x')\nimport os\nprint(os.getcwd())", "python", l);
  c.expect(!std::filesystem::exists(std::string(util::trim(w.stdout_text))), "run directory survived");
  auto rd = ex.execute("import os\nprint(os.path.exists('left.txt'))", "python", l);
  c.expect(rd.stdout_text == "False\n", "file visible to the next run");
  return c.result();
}

// ------------------------------------------------------------------ packing

std::string packing() {
  Check c;
  auto j = json::parse(slurp(source_path("tests/data/packing12.json")));
  std::vector<pipeline::SingleTurnItem> items;
  knn::EmbeddingStore store(j["items"][0]["vector"].size());
  for (const auto& e : j["items"]) {
    auto id = e["id"].get<std::string>();
    items.push_back({id, "query " + id, "answer " + id, "synthetic"});
    store.add(id, e["vector"].get<knn::Vector>());
  }
  pipeline::PackingConfig cfg;
  cfg.k = 4;
  cfg.group_size_choices = {2, 3};
  cfg.rng_seed = 7;
  auto r = pipeline::pack_single_turn(items, store, cfg);
  std::vector<std::vector<std::string>> groups;
  for (const auto& s : r.samples) groups.push_back(s.source_ids);
  // Frozen from tests/oracles/packing_oracle.py tests/data/packing12.json 7 4 2,3
  c.expect(groups == std::vector<std::vector<std::string>>{{"s00", "s06", "s05"}, {"s01", "s11"}, {"s02", "s10"},
                                                            {"s03", "s08"}, {"s04", "s09"}},
           "groups differ from the oracle");
  auto text = [](const pipeline::PackingResult& pr) {
    std::string out;
    for (const auto& s : pr.samples) out += to_jsonl_line(sample_to_json(s));
    return out;
  };
  c.expect(text(r) == text(pipeline::pack_single_turn(items, store, cfg)), "two runs differ");

  std::mt19937_64 rng(31337);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 3 + rng() % 30, dim = 2 + rng() % 6;
    knn::EmbeddingStore st(dim);
    std::vector<pipeline::SingleTurnItem> its;
    std::uniform_int_distribution<int> coord(-3, 3);
    for (std::size_t i = 0; i < n; ++i) {
      knn::Vector v(dim);
      do {
        for (auto& x : v) x = coord(rng);
      } while (knn::norm(v) == 0);
      auto id = "i" + std::to_string(i);
      st.add(id, v);
      its.push_back({id, "q", "a", ""});
    }
    std::size_t k = 1 + rng() % (n - 1);
    for (const auto& [qid, qv] : st.entries()) {
      std::vector<std::pair<double, std::string>> all;
      for (const auto& [id, v] : st.entries())
        if (id != qid) all.emplace_back(-knn::dot(qv, v), id);
      std::sort(all.begin(), all.end());
      std::vector<std::string> want;
      for (std::size_t i = 0; i < k; ++i) want.push_back(all[i].second);
      if (knn::knn(qid, st, k) != want) {
        c.expect(false, "knn differs from full sort in trial " + std::to_string(trial));
        break;
      }
    }
    pipeline::PackingConfig pc;
    pc.k = std::min<std::size_t>(k, 4);
    pc.group_size_choices = {2};
    if (pc.k >= 2) pc.group_size_choices.push_back(3);
    pc.rng_seed = rng();
    auto pr = pipeline::pack_single_turn(its, st, pc);
    std::set<std::string> seen;
    for (const auto& s : pr.samples)
      for (const auto& id : s.source_ids) c.expect(seen.insert(id).second, "id reused in trial " + std::to_string(trial));
  }
  return c.result();
}

// ------------------------------------------------------------------ filter

std::string filtering() {
  Check c;
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<pipeline::SingleTurnItem> items;
    std::map<std::string, std::string> reply;
    std::set<std::string> want, malformed;
    for (int i = 0; i < 10; ++i) {
      pipeline::SingleTurnItem it{"t" + std::to_string(i), "query " + std::to_string(trial) + "." + std::to_string(i),
                                  "r", ""};
      bool ok = true;
      for (auto id : {llm::TemplateId::FilterPrompt1, llm::TemplateId::FilterPrompt2}) {
        auto roll = rng() % 6;
        std::string text = roll == 0 ? "no score" : std::to_string(roll) + " Points";
        if (roll == 0) malformed.insert(it.id);
        ok = ok && roll >= 4;
        reply[llm::render(id, {{"query", it.query}})] = text;
      }
      if (ok) want.insert(it.id);
      items.push_back(it);
    }
    llm::FunctionProvider p([&](const llm::CompletionRequest& req) { return reply.at(req.messages.back().content); });
    auto r = pipeline::filter_queries(items, p);
    std::set<std::string> got;
    for (const auto& it : r.retained()) got.insert(it.id);
    c.expect(got == want, "retained set differs in trial " + std::to_string(trial));
    for (const auto& id : malformed) c.expect(!got.count(id), "malformed rating retained: " + id);
  }
  return c.result();
}

// ------------------------------------------------------------------ leakage

std::string leakage_check() {
  Check c;
  auto j = json::parse(slurp(source_path("tests/data/leakage_planted.json")));
  auto dataset = leakage::normalize_all(j["dataset"].get<std::vector<std::string>>());
  auto bench = leakage::normalize_all(j["benchmark"].get<std::vector<std::string>>());
  c.expect(leakage::duplicate_ratio(bench, bench, 5) == 1.0, "identical corpora");
  std::vector<leakage::Lines> other{{"u1", "u2", "u3", "u4", "u5", "u6", "u7"}};
  c.expect(leakage::duplicate_ratio(other, bench, 5) == 0.0, "disjoint corpora");
  // Counts from tests/oracles/leakage_oracle.py.
  c.expect(leakage::duplicate_ratio(dataset, bench, 5) == 2.0 / 9.0, "n=5 differs from the oracle");
  c.expect(leakage::duplicate_ratio(dataset, bench, 6) == 1.0 / 7.0, "n=6 differs from the oracle");
  c.expect(leakage::duplicate_ratio(dataset, bench, 7) == 0.0, "n=7 is not zero");

  std::mt19937_64 rng(50);
  auto corpus = [&](std::size_t vocab) {
    std::vector<leakage::Lines> out(1 + rng() % 5);
    for (auto& d : out)
      for (std::size_t i = 0, len = rng() % 14; i < len; ++i) d.push_back("l" + std::to_string(rng() % vocab));
    return out;
  };
  for (int trial = 0; trial < 50; ++trial) {
    auto vocab = 2 + rng() % 6;
    auto a = corpus(vocab), b = corpus(vocab);
    bool zero = false;
    for (std::size_t n = 1; n <= 8; ++n) {
      auto m = leakage::count_windows(b, a, n).matched;
      if (zero) c.expect(m == 0, "zero did not propagate in trial " + std::to_string(trial));
      zero = zero || m == 0;
    }
  }
  return c.result();
}

// ------------------------------------------------------------------ prompts

std::string prompt_fidelity() {
  Check c;
  for (auto id : llm::kAllTemplates) {
    auto golden = slurp(source_path("tests/golden/" + std::string(llm::template_name(id)) + ".txt"));
    c.expect(!golden.empty() && golden == llm::template_text(id),
             std::string(llm::template_name(id)) + " differs from its golden file");
  }
  c.expect(std::size(llm::kAllTemplates) == 10, "expected 10 templates");
  for (const auto& v : {llm::HumanFeedbackVerdict{"works", "no docs", "add a docstring"},
                        llm::HumanFeedbackVerdict{"a \"quoted\" bit", "new\nline", "é"}})
    c.expect(llm::parse_verdict(llm::serialize_verdict(v)) == v, "verdict round-trip");
  c.expect(std::string(llm::template_text(llm::TemplateId::HumanFeedbackSystem)).find("WITHIN 2 SHORT SENTENCES") !=
               std::string::npos,
           "sentence limit missing from the simulator prompt");
  return c.result();
}

// ------------------------------------------------------------------ dataset

std::string dataset_schema() {
  Check c;
  Executor ex;
  std::vector<PackedSample> all;

  auto items = pipeline::read_items(source_path("data/items.jsonl"));
  knn::HashEmbedder emb(32);
  auto store = pipeline::build_store(items, emb);
  pipeline::PackingConfig pc;
  pc.rng_seed = 7;
  for (auto& s : pipeline::pack_single_turn(items, store, pc).samples) all.push_back(s);

  auto sim = llm::ScriptedProvider::from_file(source_path("data/scripts/simulate.json"));
  pipeline::SimulationProviders sp{*sim, *sim, *sim};
  for (const auto& it : pipeline::read_items(source_path("data/items_sim.jsonl"))) {
    auto r = pipeline::simulate_interaction(it, sp, ex, pipeline::SimulationConfig{});
    if (r.sample) all.push_back(*r.sample);
  }

  auto corr = llm::ScriptedProvider::from_file(source_path("data/scripts/correct.json"));
  auto citems = pipeline::read_items(source_path("data/items_correct.jsonl"));
  for (std::size_t i = 0; i < citems.size(); ++i) {
    auto r = pipeline::generate_code_correction(citems[i], *corr, pipeline::seed_kind_for(i), ex);
    if (!r.sample) continue;
    auto leaks = pipeline::injection_findings(*r.sample);
    c.expect(leaks.empty(), r.sample->dialogue.id + " mentions '" + (leaks.empty() ? "" : leaks[0]) + "'");
    all.push_back(*r.sample);
  }

  auto problems = pipeline::read_problems(source_path("data/problems.jsonl"));
  for (auto& s : pipeline::pack_leetcode_similar(problems, nullptr)) all.push_back(s);
  for (auto& s : pipeline::pack_leetcode_followup(problems, nullptr)) all.push_back(s);

  std::set<Method> methods;
  for (const auto& s : all) {
    methods.insert(s.method);
    auto v = validate_sample(s);
    c.expect(v.ok(), s.dialogue.id + ": " + (v.ok() ? "" : v.violations[0].what));
    auto f = flags_for(s.method);
    c.expect((s.dialogue.count(Role::ExecutionFeedback) > 0) == f.exec, s.dialogue.id + " exec flag mismatch");
    auto back = sample_from_json(json::parse(to_jsonl_line(sample_to_json(s))));
    c.expect(sample_to_json(back) == sample_to_json(s), s.dialogue.id + " does not round-trip");
  }
  c.expect(methods.size() == std::size(kAllMethods), "not every method produced a sample");

  auto whole = compute_stats(all);
  DatasetStats sum;
  std::vector<PackedSample> half_a(all.begin(), all.begin() + static_cast<long>(all.size() / 2));
  std::vector<PackedSample> half_b(all.begin() + static_cast<long>(all.size() / 2), all.end());
  sum += compute_stats(half_a);
  sum += compute_stats(half_b);
  c.expect(sum == whole, "stats are not additive");
  c.expect(whole.total_samples() == all.size() && whole.rejects == 0, "stats miscount samples");
  return c.result();
}

// ------------------------------------------------------------------ service

struct Child {
  pid_t pid = -1;
  ~Child() {
    if (pid > 0) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
    }
  }
};

/// Starts `codefb serve` and returns its port, or 0.
int start_server(Child& child, const std::filesystem::path& data_dir, const std::filesystem::path& port_file) {
  std::filesystem::remove(port_file);
  std::vector<std::string> args{CODEFB_CLI_PATH, "--timeout-ms", "5000", "serve", "--listen", "127.0.0.1:0",
                                "--data-dir", data_dir.string(), "--provider", "echo", "--port-file", port_file.string()};
  child.pid = ::fork();
  if (child.pid == 0) {
    int devnull = ::open("/dev/null", O_RDWR);
    ::dup2(devnull, 1);
    ::dup2(devnull, 2);
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    ::execv(argv[0], argv.data());
    ::_exit(127);
  }
  for (int i = 0; i < 200; ++i) {
    auto text = slurp(port_file);
    if (!text.empty() && text.back() == '\n') return std::stoi(text);
    std::this_thread::sleep_for(50ms);
  }
  return 0;
}

std::string service_durability() {
  Check c;
  codefb::testing::Scratch tmp;
  auto data = tmp / "sessions";
  auto port_file = tmp / "port";
  std::string id;
  json before;
  {
    Child first;
    int port = start_server(first, data, port_file);
    if (!port) return "service did not start";
    httplib::Client cl("127.0.0.1", port);
    auto created = cl.Post("/v1/sessions", "{}", "application/json");
    if (!created || created->status != 201) return "create failed";
    id = json::parse(created->body)["session_id"];
    json body{{"content", "```python\nprint(6 * 7)\n```"}, {"feedback_category", "Efficiency"}};
    auto posted = cl.Post("/v1/sessions/" + id + "/messages", body.dump(), "application/json");
    if (!posted || posted->status != 200) return "post failed";
    before = json::parse(posted->body);
    c.expect(before["messages"].size() == 3 && before["last_outcome"]["status"] == "pass", "turn did not complete");
    // Child's destructor sends SIGKILL: no shutdown path runs.
  }
  {
    Child second;
    int port = start_server(second, data, port_file);
    if (!port) return "service did not restart";
    httplib::Client cl("127.0.0.1", port);
    auto got = cl.Get("/v1/sessions/" + id);
    c.expect(got && got->status == 200, "GET after restart failed");
    if (got) c.expect(json::parse(got->body) == before, "transcript changed across restart");
  }

  // Two posts race on one session while the first is still generating.
  std::mutex mu;
  std::condition_variable cv;
  bool entered = false, release = false;
  llm::FunctionProvider slow([&](const llm::CompletionRequest&) {
    std::unique_lock lock(mu);
    entered = true;
    cv.notify_all();
    cv.wait(lock, [&] { return release; });
    return std::string("```python\nprint(1)\n```");
  });
  Executor ex;
  service::SessionService svc(tmp / "race", slow, ex);
  httplib::Server server;
  service::mount(server, svc, "*");
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  auto sid = svc.create()["session_id"].get<std::string>();
  auto post = [&] {
    httplib::Client cl("127.0.0.1", port);
    cl.set_read_timeout(60, 0);
    auto r = cl.Post("/v1/sessions/" + sid + "/messages", R"({"content":"go"})", "application/json");
    return r ? r->status : -1;
  };
  auto a = std::async(std::launch::async, post);
  {
    std::unique_lock lock(mu);
    cv.wait_for(lock, 10s, [&] { return entered; });
  }
  int second = post();
  {
    std::lock_guard lock(mu);
    release = true;
  }
  cv.notify_all();
  int first = a.get();
  server.stop();
  th.join();
  c.expect(first == 200 && second == 409,
           "concurrent posts gave " + std::to_string(first) + " and " + std::to_string(second));
  return c.result();
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<std::string()>>> criteria{
      {"oracle eval: toy suite pass@1 = 1.000 under 60 s", oracle_eval},
      {"refinement lift: wrong-then-right goes 0.0 -> 1.0 with execution feedback", refinement_lift},
      {"loop bound: 200 random traces stay within budget with minimal passed_round", loop_bound},
      {"sandbox: taxonomy, timeout bound and isolation", sandbox_taxonomy},
      {"packing: oracle groups, 100 random stores, byte-identical reruns", packing},
      {"filtering: retained set is the conjunction of both ratings", filtering},
      {"leakage: identical, disjoint, planted overlap and zero propagation", leakage_check},
      {"prompt fidelity: golden templates, verdict round-trip, sentence limit", prompt_fidelity},
      {"dataset schema: validation, method flags, additive stats, no injection wording", dataset_schema},
      {"service durability: restart keeps the transcript; concurrent posts give 200 and 409", service_durability},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    std::string why;
    try {
      why = fn();
    } catch (const std::exception& e) {
      why = std::string("threw: ") + e.what();
    }
    if (why.empty()) {
      std::cout << "PASS " << name << std::endl;
    } else {
      ++failed;
      std::cout << "FAIL " << name << " (" << why << ")" << std::endl;
    }
  }
  return failed == 0 ? 0 : 1;
}
