#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mammqa/backends.hpp"
#include "mammqa/core.hpp"

namespace mammqa {

struct MissingPlaceholder : std::runtime_error {
  explicit MissingPlaceholder(const std::string& name)
      : std::runtime_error("unbound placeholder: {" + name + "}"), placeholder(name) {}
  std::string placeholder;
};

struct TemplateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A prompt template: system text plus a user skeleton with {placeholders}.
// The placeholders appearing in the skeleton must exactly match the declared
// set; load_template enforces this.
struct PromptTemplate {
  std::string name;
  std::string system_text;
  std::string user_skeleton;
  std::set<std::string> required_placeholders;
};

// Template file format:
//   #! template=<name> placeholders=<a>,<b>,...
//   [system]
//   ...
//   [user]
//   ...
PromptTemplate parse_template(const std::string& content, const std::string& origin = "");
PromptTemplate load_template(const std::string& path);

// A binding is text, an image, or both (text first, then the image part).
struct Binding {
  std::string text;
  std::optional<ImageRef> image;

  Binding() = default;
  Binding(const char* t) : text(t) {}                 // NOLINT(google-explicit-constructor)
  Binding(std::string t) : text(std::move(t)) {}      // NOLINT(google-explicit-constructor)
  Binding(ImageRef img) : image(std::move(img)) {}    // NOLINT(google-explicit-constructor)
  Binding(std::string t, ImageRef img) : text(std::move(t)), image(std::move(img)) {}
};

// Renders [system message, user message]. Image bindings become image parts
// in the user message. Throws MissingPlaceholder when a required placeholder
// is unbound. Pure: equal bindings give equal messages.
std::vector<ChatMessage> render(const PromptTemplate& tmpl,
                                const std::map<std::string, Binding>& bindings);

// Canonical headers of the templated output format.
enum class Section { Insights, Cues, Gaps, SubAnswers, FinalAnswer, Uncertainty, Reasoning };

const char* section_name(Section s);

struct ParsedSections {
  std::map<Section, std::string> sections;

  bool has(Section s) const { return sections.count(s) > 0; }
  std::string get(Section s) const {
    auto it = sections.find(s);
    return it == sections.end() ? "" : it->second;
  }
};

// Total function: splits model text on "HEADER:" lines (case-insensitive,
// markdown bold/bullets tolerated). Text before the first header lands in
// REASONING; duplicate headers keep the last occurrence.
ParsedSections parse_sections(const std::string& raw);

// Splits a section body into trimmed items, one per non-empty line, bullet
// prefixes stripped.
std::vector<std::string> section_items(const std::string& body);

// Answers that count as declining to answer. The set is extensible per call.
const std::set<std::string>& default_abstention_markers();
bool is_abstention_marker(const std::string& answer,
                          const std::set<std::string>& extra_markers = {});

struct FinalAnswer {
  std::optional<std::string> answer;  // absent = abstention
  bool uncertain = false;
};

// FINAL_ANSWER text trimmed; abstention when the section is missing, empty,
// or an abstention marker. Uncertain when abstaining or when UNCERTAINTY is
// non-empty and not one of "none"/"no"/"-".
FinalAnswer extract_final_answer(const ParsedSections& sections,
                                 const std::set<std::string>& extra_markers = {});

// The seven role/baseline templates, loaded from a prompts directory.
class PromptLibrary {
 public:
  static PromptLibrary load_dir(const std::string& dir);

  const PromptTemplate& get(const std::string& name) const;
  bool has(const std::string& name) const;

  void add(PromptTemplate tmpl);

 private:
  std::map<std::string, PromptTemplate> templates_;
};

}  // namespace mammqa
