#pragma once

#include <optional>
#include <string>
#include <vector>

#include "codefb/llm/parsing.hpp"
#include "codefb/llm/provider.hpp"
#include "codefb/llm/templates.hpp"
#include "codefb/pipeline/items.hpp"
#include "codefb/refine/engine.hpp"

namespace codefb::pipeline {

/// Plain-text transcript handed to the feedback simulator.
inline std::string render_transcript(const Dialogue& d) {
  std::string out;
  for (const auto& m : d.messages) {
    if (!out.empty()) out += "\n\n";
    out += "[";
    out += to_string(m.role());
    out += "]\n";
    out += m.content();
  }
  return out;
}

struct SimulationProviders {
  llm::Provider& initial;
  llm::Provider& refiner;
  llm::Provider& feedback_sim;
};

struct SimulationConfig {
  refine::LoopConfig loop = [] {
    refine::LoopConfig c;
    c.max_iterations = 3;
    c.judge = refine::Judge::ModelDriven;
    c.system_prompt = std::string(llm::template_text(llm::TemplateId::ExecFeedbackSystem));
    return c;
  }();
  int feedback_rounds = 1;
  /// Simulator asks per feedback round; the extra ones are re-asks after a malformed verdict.
  int verdict_attempts = 2;
};

struct SimulationResult {
  std::optional<PackedSample> sample;
  std::string drop_reason;
  std::vector<llm::HumanFeedbackVerdict> verdicts;
};

inline llm::HumanFeedbackVerdict ask_verdict(const Dialogue& d, llm::Provider& sim, int attempts) {
  llm::CompletionRequest req;
  req.messages.push_back({"system", std::string(llm::template_text(llm::TemplateId::HumanFeedbackSystem))});
  req.messages.push_back({"user", render_transcript(d)});
  for (int a = 1;; ++a) {
    auto reply = llm::complete(sim, req);
    try {
      return llm::parse_verdict(reply);
    } catch (const llm::MalformedVerdict&) {
      if (a >= attempts) throw;
    }
  }
}

/// Initial answer, execution-feedback refinement, then simulated human
/// feedback and one more refinement per feedback round.
inline SimulationResult simulate_interaction(const SingleTurnItem& item, const SimulationProviders& p,
                                             const Executor& executor, const SimulationConfig& cfg = {},
                                             refine::TraceSink* trace = nullptr) {
  SimulationResult res;
  Dialogue d;
  d.id = "sim-" + item.id;
  d.messages.push_back(Message::user(item.query));
  try {
    refine::LoopContext ctx{p.refiner, executor};
    ctx.initial = &p.initial;
    ctx.trace = trace;
    ctx.trace_id = d.id;
    d = refine::run_execution_loop(d, cfg.loop, ctx).dialogue;

    ctx.initial = nullptr;
    for (int f = 0; f < cfg.feedback_rounds; ++f) {
      auto verdict = ask_verdict(d, p.feedback_sim, cfg.verdict_attempts);
      res.verdicts.push_back(verdict);
      d = refine::inject_human_feedback(d, verdict.feedback);
      d = refine::run_feedback_round(d, cfg.loop, ctx).dialogue;
    }
  } catch (const llm::MalformedVerdict& e) {
    res.drop_reason = std::string("malformed verdict: ") + e.what();
    return res;
  } catch (const refine::LoopError& e) {
    res.drop_reason = std::string("provider failure: ") + e.what();
    return res;
  } catch (const llm::ProviderError& e) {
    res.drop_reason = std::string("provider failure: ") + e.what();
    return res;
  }
  PackedSample s;
  s.dialogue = std::move(d);
  s.method = Method::InteractionSimulation;
  s.source_ids = {item.id};
  res.sample = std::move(s);
  return res;
}

}  // namespace codefb::pipeline
