#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace codefb::llm {

enum class TemplateId {
  FilterPrompt1,
  FilterPrompt2,
  ExecFeedbackSystem,
  HumanFeedbackSystem,
  DeliberateErrorSystem,
  NlExplanation,
  EvalHumanEval,
  EvalMBPP,
  MimicFeedbackWithOracle,
  MimicFeedbackNoOracle,
};

inline constexpr std::array<TemplateId, 10> kAllTemplates = {
    TemplateId::FilterPrompt1,         TemplateId::FilterPrompt2,   TemplateId::ExecFeedbackSystem,
    TemplateId::HumanFeedbackSystem,   TemplateId::DeliberateErrorSystem, TemplateId::NlExplanation,
    TemplateId::EvalHumanEval,         TemplateId::EvalMBPP,        TemplateId::MimicFeedbackWithOracle,
    TemplateId::MimicFeedbackNoOracle};

/// Stable file-style name ("filter_prompt_1", ...).
inline std::string_view template_name(TemplateId id) {
  switch (id) {
    case TemplateId::FilterPrompt1: return "filter_prompt_1";
    case TemplateId::FilterPrompt2: return "filter_prompt_2";
    case TemplateId::ExecFeedbackSystem: return "exec_feedback_system";
    case TemplateId::HumanFeedbackSystem: return "human_feedback_system";
    case TemplateId::DeliberateErrorSystem: return "deliberate_error_system";
    case TemplateId::NlExplanation: return "nl_explanation";
    case TemplateId::EvalHumanEval: return "eval_humaneval";
    case TemplateId::EvalMBPP: return "eval_mbpp";
    case TemplateId::MimicFeedbackWithOracle: return "mimic_feedback_with_oracle";
    case TemplateId::MimicFeedbackNoOracle: return "mimic_feedback_no_oracle";
  }
  return "?";
}

namespace templates {

inline constexpr std::string_view kFilterPrompt1 =
R"(Rate the following code queries on a scale of 1 to 5 based on their complexity, where 1 is the easiest and 5 is the most difficult. Consider the complexity of the query

Query: [{query}]

You are obliged to choose only from the following list.

Scoring Criteria:

1 Point - Very Basic: The query involves simple operations or common issues

2 Points - Basic: The query involves fundamental programming concepts or commonly used functions

3 Points - Intermediate: The query requires some programming experience, possibly involving multiple steps

4 Points - Difficult: The query involves advanced programming skills, including complex logic, algorithms, or data structures

5 Points - Very Difficult: The query requires extensive expertise, potentially involving innovative problem-solving approaches or unique algorithm design

Please give the score first then explain why)";

inline constexpr std::string_view kFilterPrompt2 =
R"(Rate the following code queries on a scale of 1 to 5 based on their complexity, where 1 is the easiest and 5 is the most difficult. Consider the complexity of the query

Query: [{query}]

You are obliged to choose only from the following list.

Scoring Criteria:

1 Point - Moderately Difficult: Involves understanding specific programming concepts or libraries, and may include medium complexity algorithms or data structures like basic sorting algorithms or tree structures.

2 Points - Challenging: Requires handling more complex logic or algorithms such as advanced sorting algorithms, recursive logic, or intermediate data structures like hash tables and heaps.

3 Points - Highly Challenging: Demands deeper knowledge in algorithms and data structures, potentially including graph algorithms, dynamic programming, or complex string manipulation techniques.

4 Points - Advanced: Focuses on proficiency in programming and algorithm design, dealing with complex system architecture issues, performance optimization, or solving advanced algorithmic challenges like NP-hard problems.

5 Points - Expert Level: The highest difficulty level, requiring innovative problem-solving approaches or unique algorithm design, possibly involving interdisciplinary knowledge or the application of cutting-edge technologies.

Please give the score first then explain why)";

inline constexpr std::string_view kExecFeedbackSystem =
R"(You are an AI code interpreter.

Your goal is to help users do a variety of jobs by executing Python code.

You should:

1. Comprehend the user's requirements carefully & to the letter.

2. Give a brief description for what you plan to do & call the provided function to run code.

3. Provide results analysis based on the execution output.

4. If error occurred, try to fix it.

5. Response in the same language as the user.)";

inline constexpr std::string_view kHumanFeedbackSystem =
R"(You are a user who gives feedback to the latest generated code. If no available code is found in the conversation, you should give a feedback to encourage assistant to generate code.
NOTE: your feedback should be WITHIN 2 SHORT SENTENCES.

You can refer to the following types of feedback:

1. **Syntax and Formatting**: Checking for syntax errors, inconsistent formatting, and suggesting adherence to standard coding styles for readability and maintainability.

2. **Efficiency**: Identifying parts of the code that can be optimized for better performance, such as reducing time complexity, optimizing loops, or suggesting more efficient data structures.

3. **Functionality Enhancements**: Suggesting additional features or enhancements that could make the code more functional or user-friendly.

4. **Code Clarity and Documentation**: Recommending improvements in code comments and documentation to make the code more understandable and easier to maintain.

5. **Bug Identification**: Pointing out any potential bugs or logical errors in the code and suggesting ways to fix them.

6. **Security Improvements**: Highlighting any security vulnerabilities in the code and suggesting best practices to enhance security.

7. **Compatibility and Testing**: Advising on making the code more compatible with different environments or platforms and suggesting more comprehensive testing scenarios.

8. **Resource Optimization**: Identifying areas where the code might be using more resources than necessary (like memory or CPU) and suggesting optimizations.

9. **Scalability**: Providing insights on how the code can be made more scalable to handle larger data sets or more users.

10. **Adherence to Best Practices**: Ensuring the code follows the best practices specific to the language or framework being used.

Your output MUST be in a json format like this:

{
    "satisfied": "The points that have been achieved in generated code",
    "not_satisfied": "The points that have not yet been achieved in generated code",
    "feedback": "The actual feedback. Your feedback should be WITHIN 2 SHORT SENTENCES. Feedback must come from a point included in 'not_satisfied' field. You can ask the assistant here to generate code if no available code is found in previous conversations."
})";

inline constexpr std::string_view kDeliberateErrorSystem =
R"(You are an AI code interpreter.

Your goal is to generate and execute Python code.

Your code MUST contain at least one of the following types of errors:

1. Syntax Error: This type of error occurs when the code violates the grammar rules of the programming language. For example, forgetting to close a parenthesis or a quotation mark, or misspelling a keyword.

2. Logical Error: These errors sneak into your code when there's a misunderstanding of the problem you're solving, leading to incorrect results despite the code running without crashing. For example, calculating the average of a list of numbers by summing them up but forgetting to divide by the count of the numbers.

3. Type Error: This error occurs when an operation is applied to an object of an inappropriate type. For example, attempting to concatenate a string with an integer without converting the integer to a string first.

4. Name Error: This happens when the code attempts to reference a variable or a function name that hasn't been defined. For example, trying to print a variable that hasn't been declared.

5. Timeout Error: This error occurs when your code gets stuck in a loop that never ends, either due to a logic flaw or a condition that never becomes false. In programming, such an error can cause your application to hang indefinitely, consuming resources and potentially leading to a crash if not handled properly. For example, writing a loop that waits for a certain condition to change, but the condition is never updated within the loop.

NOTE:

1. You MUST make mistakes in the generated code!

2. Do not explain the errors within. Just write your thoughts and code as normal.

3. Do not tell me you are writing the wrong code in any form (e.g., in text/code/comments). Just pretend you are writing the correct code and still not recognizing the errors.)";

inline constexpr std::string_view kNlExplanation =
R"(Here is a list containing a series of dialogues between a user and a programmer assistant.
Following the previous dialogues, the user posed a latest problem.
The assistant has now crafted the correct code based on the previous dialogues and the latest problem.
Assuming you are this programmer assistant, please add some text before the code.
The purpose of this text is to respond to the latest problem and to introduce the code that follows.
This text may include: language used in the code, algorithm used in the code, step-by-step implementation overview, and other relevant content.
You may use phrases like "The following code", "My code", "My solution", to refer to the @@Code.
Your response should ONLY contain the text that you add before the code.
Your only task is to write the text, never modify the code or remind me something.
Never restate the previous dialogues and the problem.

@@Previous Dialogues
{previous dialogues}

@@Recent Problem:
{recent problem}

Add the text there.
@@Code:
{code})";

inline constexpr std::string_view kEvalHumanEval =
R"(You are an exceptionally intelligent coding assistant that consistently delivers accurate and reliable responses to user instructions.

@@ Instruction
Here is the given code to do completion:

```{language}
{original prompt}
```
Please continue to complete the function with {language} programming language. You are not allowed to modify the given code and do the completion only.

Please return all completed codes in one code block.
This code block should be in the following format:
```{language}
# Your codes here
```

@@ Response)";

inline constexpr std::string_view kEvalMBPP =
R"(You are an exceptionally intelligent coding assistant that consistently delivers accurate and reliable responses to user instructions.

@@ Instruction
Here is the given problem and test examples:

{original prompt}

Please use the {language} programming language to solve this problem.

Please make sure that your code includes the functions from the test samples and that the input and output formats of these functions match the test samples.

Please return all completed codes in one code block.

This code block should be in the following format:

```{language}

# Your codes here

```

@@ Response)";

inline constexpr std::string_view kMimicFeedbackWithOracle =
R"(You are tasked with providing guidance to a programmer who has drafted a code for a programming problem.
Your role is to mimic human-like responses and offer suggestions for modifying the code based on the canonical solution and the observed execution results.
You should NOT directly revealing contents of the @@Canonical Solution or mentioning terms such as "canonical solution."
You should refrain from directly writing code.
Begin by thoroughly examining the existing code and its functionality.
Compare the @@Existing Code with the @@Canonical Solution provided. Note any discrepancies in logic, approach, or implementation.
Analyze the @@Execution Result obtained from running the @@Existing Code. Identify any errors, unexpected behavior, or deviations from the expected output.
Consider potential edge cases, optimization opportunities, or alternative approaches based on insights from both the @@Canonical Solution and @@Execution Result.
Offer guidance in a clear and understandable manner, explaining the rationale behind each suggestion.
Refrain from providing actual code solutions, but instead focus on conceptual modifications or strategies.
Provide constructive feedback to help the programmer improve their coding skills.
Remember, your role is to simulate human-like guidance and expertise in programming without directly implementing solutions.
Please respond in no more than three sentences.

@@Problem
{original prompt}

@@Existing Code
{sanitized code}

@@Execution Result
{execution result}

@@Canonical Solution
{canonical solution}

@@Guidance)";

inline constexpr std::string_view kMimicFeedbackNoOracle =
R"(You are tasked with providing guidance to a programmer who has drafted a code for a programming problem.
Your role is to mimic human-like responses and offer suggestions for modifying the code based on the observed execution results.
You should refrain from directly writing code.
Begin by thoroughly examining the existing code and its functionality.
Analyze the @@Execution Result obtained from running the @@Existing Code. Identify any errors, unexpected behavior, or deviations from the expected output.
Consider potential edge cases, optimization opportunities, or alternative approaches based on insights from the @@Execution Result.
Offer guidance in a clear and understandable manner, explaining the rationale behind each suggestion.
Refrain from providing actual code solutions, but instead focus on conceptual modifications or strategies.
Provide constructive feedback to help the programmer improve their coding skills.
Remember, your role is to simulate human-like guidance and expertise in programming without directly implementing solutions.
Please respond in no more than three sentences.

@@Problem
{original prompt}

@@Existing Code
{sanitized code}

@@Execution Result
{execution result}

@@Guidance)";

}  // namespace templates

inline std::string_view template_text(TemplateId id) {
  switch (id) {
    case TemplateId::FilterPrompt1: return templates::kFilterPrompt1;
    case TemplateId::FilterPrompt2: return templates::kFilterPrompt2;
    case TemplateId::ExecFeedbackSystem: return templates::kExecFeedbackSystem;
    case TemplateId::HumanFeedbackSystem: return templates::kHumanFeedbackSystem;
    case TemplateId::DeliberateErrorSystem: return templates::kDeliberateErrorSystem;
    case TemplateId::NlExplanation: return templates::kNlExplanation;
    case TemplateId::EvalHumanEval: return templates::kEvalHumanEval;
    case TemplateId::EvalMBPP: return templates::kEvalMBPP;
    case TemplateId::MimicFeedbackWithOracle: return templates::kMimicFeedbackWithOracle;
    case TemplateId::MimicFeedbackNoOracle: return templates::kMimicFeedbackNoOracle;
  }
  return {};
}

class MissingBinding : public std::runtime_error {
 public:
  explicit MissingBinding(const std::string& name)
      : std::runtime_error("missing binding: " + name), name_(name) {}
  const std::string& placeholder() const { return name_; }

 private:
  std::string name_;
};

namespace detail {

// A placeholder is "{" lowercase words separated by single spaces "}".
// JSON braces in the simulator prompt never match: they are followed by a
// newline or a quote.
inline std::optional<std::size_t> placeholder_end(std::string_view text, std::size_t open) {
  std::size_t i = open + 1;
  bool prev_space = true;
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (c == '}') break;
    if (c >= 'a' && c <= 'z') {
      prev_space = false;
    } else if (c == ' ' && !prev_space) {
      prev_space = true;
    } else {
      return std::nullopt;
    }
  }
  if (i >= text.size() || i == open + 1 || prev_space) return std::nullopt;
  return i;
}

}  // namespace detail

/// Placeholder names in order of first appearance.
inline std::vector<std::string> placeholders(std::string_view text) {
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    if (auto end = detail::placeholder_end(text, i)) {
      std::string name(text.substr(i + 1, *end - i - 1));
      if (seen.insert(name).second) names.push_back(name);
      i = *end;
    }
  }
  return names;
}

using Bindings = std::map<std::string, std::string>;

/// Substitutes every placeholder in one pass, so bound values that happen to
/// contain "{...}" are copied verbatim rather than re-expanded.
inline std::string render_text(std::string_view text, const Bindings& bindings) {
  for (const auto& name : placeholders(text)) {
    if (!bindings.count(name)) throw MissingBinding(name);
  }
  std::string out;
  out.reserve(text.size() + 256);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '{') {
      if (auto end = detail::placeholder_end(text, i)) {
        out += bindings.at(std::string(text.substr(i + 1, *end - i - 1)));
        i = *end;
        continue;
      }
    }
    out += text[i];
  }
  return out;
}

inline std::string render(TemplateId id, const Bindings& bindings) { return render_text(template_text(id), bindings); }

}  // namespace codefb::llm
