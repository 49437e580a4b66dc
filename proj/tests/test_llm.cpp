#include <atomic>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "codefb/llm/factory.hpp"
#include "codefb/llm/http_provider.hpp"
#include "codefb/llm/parsing.hpp"
#include "codefb/llm/provider.hpp"
#include "codefb/llm/templates.hpp"
#include "support.hpp"

using namespace codefb;
using namespace codefb::llm;
using codefb::testing::slurp;
using codefb::testing::source_path;

TEST(Templates, ByteMatchGoldenFiles) {
  for (auto id : kAllTemplates) {
    auto golden = slurp(source_path("tests/golden/" + std::string(template_name(id)) + ".txt"));
    ASSERT_FALSE(golden.empty()) << template_name(id);
    EXPECT_EQ(std::string(template_text(id)), golden) << template_name(id);
  }
}

TEST(Templates, PlaceholderSets) {
  using V = std::vector<std::string>;
  EXPECT_EQ(placeholders(template_text(TemplateId::FilterPrompt1)), V{"query"});
  EXPECT_EQ(placeholders(template_text(TemplateId::FilterPrompt2)), V{"query"});
  EXPECT_TRUE(placeholders(template_text(TemplateId::HumanFeedbackSystem)).empty());
  EXPECT_TRUE(placeholders(template_text(TemplateId::ExecFeedbackSystem)).empty());
  EXPECT_TRUE(placeholders(template_text(TemplateId::DeliberateErrorSystem)).empty());
  auto mimic = placeholders(template_text(TemplateId::MimicFeedbackWithOracle));
  std::sort(mimic.begin(), mimic.end());
  EXPECT_EQ(mimic, (V{"canonical solution", "execution result", "original prompt", "sanitized code"}));
  auto nl = placeholders(template_text(TemplateId::NlExplanation));
  std::sort(nl.begin(), nl.end());
  EXPECT_EQ(nl, (V{"code", "previous dialogues", "recent problem"}));
}

TEST(Templates, RenderSubstitutesOnceAndReportsMissing) {
  auto out = render(TemplateId::FilterPrompt1, {{"query", "sort {query} please"}});
  EXPECT_NE(out.find("sort {query} please"), std::string::npos);
  EXPECT_EQ(out.find("{query}"), out.rfind("{query}"));
  try {
    render(TemplateId::EvalHumanEval, {{"language", "python"}});
    FAIL() << "expected MissingBinding";
  } catch (const MissingBinding& e) {
    EXPECT_EQ(e.placeholder(), "original prompt");
  }
}

TEST(Templates, SimulatorPromptKeepsSentenceLimit) {
  auto text = std::string(template_text(TemplateId::HumanFeedbackSystem));
  EXPECT_NE(text.find("WITHIN 2 SHORT SENTENCES"), std::string::npos);
  EXPECT_EQ(render_text(text, {}), text);
}

TEST(Verdict, ParsesFencedAndBareJson) {
  auto v = parse_verdict("Sure.\n```json\n{\"satisfied\": \"a\", \"not_satisfied\": \"b {x}\", \"feedback\": \"c\"}\n```");
  EXPECT_EQ(v, (HumanFeedbackVerdict{"a", "b {x}", "c"}));
  EXPECT_EQ(parse_verdict("{\"feedback\": \"f\", \"satisfied\": \"\", \"not_satisfied\": \"\"}").feedback, "f");
}

TEST(Verdict, RejectsMalformed) {
  EXPECT_THROW(parse_verdict("no json here"), MalformedVerdict);
  EXPECT_THROW(parse_verdict("{\"satisfied\": \"a\", \"not_satisfied\": \"b\"}"), MalformedVerdict);
  EXPECT_THROW(parse_verdict("{\"satisfied\": 1, \"not_satisfied\": \"b\", \"feedback\": \"c\"}"), MalformedVerdict);
  EXPECT_THROW(parse_verdict("{\"satisfied\": \"a\", \"not_satisfied\": \"b\", \"feedback\": \"  \"}"), MalformedVerdict);
}

TEST(Verdict, SerializeRoundTrips) {
  std::vector<HumanFeedbackVerdict> cases{{"a", "b", "c"},
                                          {"quotes \" and \\ backslash", "new\nline", "unicode é 日本"},
                                          {"", "", "braces { } inside"}};
  for (const auto& v : cases) EXPECT_EQ(parse_verdict(serialize_verdict(v)), v);
}

TEST(Rating, FirstStandaloneDigit) {
  EXPECT_EQ(parse_rating("4 Points - Advanced"), 4);
  EXPECT_EQ(parse_rating("Score: 5."), 5);
  EXPECT_EQ(parse_rating("1 Point"), 1);
  EXPECT_EQ(parse_rating("Python3 is used; I'd say 2"), 2);
  EXPECT_EQ(parse_rating("3.5 is not allowed, so 4"), 4);
  EXPECT_THROW(parse_rating("three points"), MalformedRating);
  EXPECT_THROW(parse_rating("10 out of 10"), MalformedRating);
  EXPECT_THROW(parse_rating(""), MalformedRating);
}

TEST(Providers, ScriptedQueueAndRoutes) {
  ScriptedProvider p;
  p.push("a");
  p.route("alpha", {"A1", "A2"});
  CompletionRequest r;
  r.messages.push_back({"user", "about alpha"});
  EXPECT_EQ(p.complete(r), "A1");
  EXPECT_EQ(p.complete(r), "A2");
  EXPECT_THROW(p.complete(r), ScriptExhausted);
  r.messages[0].content = "other";
  EXPECT_EQ(p.complete(r), "a");
  EXPECT_THROW(p.complete(r), ScriptExhausted);
  EXPECT_EQ(p.calls(), 5u);
}

TEST(Providers, EchoAndOracle) {
  EchoProvider echo;
  CompletionRequest r;
  r.messages = {{"system", "s"}, {"user", "first"}, {"assistant", "x"}, {"user", "last"}};
  EXPECT_EQ(echo.complete(r), "last");

  OracleProvider oracle({{"def f():", "def f():\n    return 1", "python"}, {"def f(): # long", "pass", "python"}});
  CompletionRequest q;
  q.messages = {{"user", "Complete:\ndef f(): # long\n"}};
  EXPECT_EQ(oracle.complete(q), "```python\npass\n```");
  q.messages = {{"user", "unrelated"}};
  EXPECT_THROW(oracle.complete(q), ProviderRefusal);
}

TEST(Providers, RetryOnlyTransportErrors) {
  int calls = 0;
  FunctionProvider flaky([&](const CompletionRequest&) -> std::string {
    if (++calls < 3) throw TransportError("503");
    return "ok";
  });
  RetryPolicy fast{3, std::chrono::milliseconds(1), 2.0};
  EXPECT_EQ(complete(flaky, {}, fast), "ok");
  EXPECT_EQ(calls, 3);

  calls = 0;
  FunctionProvider refusing([&](const CompletionRequest&) -> std::string {
    ++calls;
    throw ProviderRefusal("400");
  });
  EXPECT_THROW(complete(refusing, {}, fast), ProviderRefusal);
  EXPECT_EQ(calls, 1);

  calls = 0;
  FunctionProvider down([&](const CompletionRequest&) -> std::string {
    ++calls;
    throw TransportError("down");
  });
  EXPECT_THROW(complete(down, {}, fast), TransportError);
  EXPECT_EQ(calls, 4);
}

TEST(Providers, ToChatMapsExecutionToUser) {
  Dialogue d{"x", {Message::user("q"), Message::assistant("a"), Message::execution("1")}};
  auto chat = to_chat(d, "sys");
  ASSERT_EQ(chat.size(), 4u);
  EXPECT_EQ(chat[0], (ChatMessage{"system", "sys"}));
  EXPECT_EQ(chat[3], (ChatMessage{"user", "Execution result: 1"}));
}

TEST(Providers, FactoryCachesAndClassifies) {
  ProviderFactory f;
  auto& a = f.get("echo");
  auto& b = f.get("echo");
  EXPECT_EQ(&a, &b);
  EXPECT_TRUE(ProviderFactory::is_scripted("scripted:x.json"));
  EXPECT_FALSE(ProviderFactory::is_scripted("echo"));
  EXPECT_THROW(f.get("nonsense"), std::invalid_argument);
}

namespace {

struct FakeChatServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  nlohmann::json last_body;
  std::string last_auth;
  std::mutex mu;

  explicit FakeChatServer(std::function<void(int, httplib::Response&)> reply) {
    server.Post("/v1/chat/completions", [this, reply](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mu);
        last_body = nlohmann::json::parse(req.body);
        last_auth = req.get_header_value("Authorization");
      }
      reply(++hits, res);
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeChatServer() {
    server.stop();
    thread.join();
  }
  HttpEndpoint endpoint() const {
    HttpEndpoint ep;
    ep.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/";
    ep.api_key = "k";
    ep.model = "m";
    ep.timeout = std::chrono::seconds(5);
    return ep;
  }
};

std::string chat_body(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}, {"finish_reason", "stop"}}}}}
      .dump();
}

}  // namespace

TEST(HttpProvider, SendsChatRequestAndParsesReply) {
  FakeChatServer fake([](int, httplib::Response& res) { res.set_content(chat_body("hi there"), "application/json"); });
  HttpChatProvider p(fake.endpoint());
  CompletionRequest r;
  r.messages = {{"system", "s"}, {"user", "u"}};
  EXPECT_EQ(p.complete(r), "hi there");
  std::lock_guard lock(fake.mu);
  EXPECT_EQ(fake.last_body["model"], "m");
  EXPECT_EQ(fake.last_body["temperature"], 0.0);
  EXPECT_EQ(fake.last_body["max_tokens"], 2048);
  EXPECT_EQ(fake.last_body["messages"].size(), 2u);
  EXPECT_EQ(fake.last_auth, "Bearer k");
}

TEST(HttpProvider, ClassifiesStatusCodes) {
  FakeChatServer fake([](int n, httplib::Response& res) {
    if (n == 1) {
      res.status = 429;
      res.set_content("slow down", "text/plain");
    } else if (n == 2) {
      res.set_content(chat_body("second time lucky"), "application/json");
    } else {
      res.status = 400;
      res.set_content("bad", "text/plain");
    }
  });
  HttpChatProvider p(fake.endpoint());
  RetryPolicy fast{3, std::chrono::milliseconds(1), 2.0};
  EXPECT_EQ(complete(p, {}, fast), "second time lucky");
  EXPECT_THROW(complete(p, {}, fast), ProviderRefusal);
  EXPECT_EQ(fake.hits.load(), 3);
}

TEST(HttpProvider, UnreachableIsTransportError) {
  HttpEndpoint ep;
  ep.base_url = "http://127.0.0.1:1/v1";
  ep.timeout = std::chrono::seconds(2);
  HttpChatProvider p(ep);
  EXPECT_THROW(p.complete({}), TransportError);
}

TEST(HttpProvider, ContentFilterIsRefusal) {
  auto body = nlohmann::json{{"choices", {{{"message", {{"content", nullptr}}}, {"finish_reason", "content_filter"}}}}};
  EXPECT_THROW(HttpChatProvider::parse_response(body.dump()), ProviderRefusal);
  EXPECT_THROW(HttpChatProvider::parse_response("{\"nope\": 1}"), ProviderRefusal);
}
