#include "mammqa/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace mammqa {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Placeholder names found in a skeleton: {identifier} with [A-Za-z0-9_].
std::set<std::string> find_placeholders(const std::string& skeleton) {
  std::set<std::string> out;
  for (size_t i = 0; i < skeleton.size(); ++i) {
    if (skeleton[i] != '{') continue;
    size_t end = i + 1;
    while (end < skeleton.size() &&
           (std::isalnum(static_cast<unsigned char>(skeleton[end])) || skeleton[end] == '_'))
      ++end;
    if (end > i + 1 && end < skeleton.size() && skeleton[end] == '}') {
      out.insert(skeleton.substr(i + 1, end - i - 1));
      i = end;
    }
  }
  return out;
}

}  // namespace

PromptTemplate parse_template(const std::string& content, const std::string& origin) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line) || line.rfind("#!", 0) != 0)
    throw TemplateError(origin + ": template file must start with a '#!' front-matter line");

  PromptTemplate tmpl;
  std::istringstream front(line.substr(2));
  std::string field;
  while (front >> field) {
    auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    std::string key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "template") {
      tmpl.name = value;
    } else if (key == "placeholders") {
      std::istringstream names(value);
      std::string name;
      while (std::getline(names, name, ',')) {
        name = trim(name);
        if (!name.empty()) tmpl.required_placeholders.insert(name);
      }
    }
  }
  if (tmpl.name.empty())
    throw TemplateError(origin + ": front-matter line must name the template");

  std::string* target = nullptr;
  std::string system_text, user_text;
  while (std::getline(in, line)) {
    std::string marker = trim(line);
    if (marker == "[system]") {
      target = &system_text;
      continue;
    }
    if (marker == "[user]") {
      target = &user_text;
      continue;
    }
    if (!target) {
      if (!marker.empty())
        throw TemplateError(origin + ": content before [system]/[user] section");
      continue;
    }
    *target += line;
    *target += '\n';
  }
  tmpl.system_text = trim(system_text);
  tmpl.user_skeleton = trim(user_text);
  if (tmpl.user_skeleton.empty())
    throw TemplateError(origin + ": template has no [user] skeleton");

  std::set<std::string> found = find_placeholders(tmpl.user_skeleton);
  if (found != tmpl.required_placeholders) {
    std::string msg = origin + ": skeleton placeholders must match the declared set; declared {";
    for (const auto& p : tmpl.required_placeholders) msg += " " + p;
    msg += " } found {";
    for (const auto& p : found) msg += " " + p;
    msg += " }";
    throw TemplateError(msg);
  }
  return tmpl;
}

PromptTemplate load_template(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TemplateError("cannot open template file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_template(buffer.str(), path);
}

std::vector<ChatMessage> render(const PromptTemplate& tmpl,
                                const std::map<std::string, Binding>& bindings) {
  for (const std::string& name : tmpl.required_placeholders)
    if (!bindings.count(name)) throw MissingPlaceholder(name);

  ChatMessage user;
  user.role = Role::User;
  std::string pending;  // text accumulated since the last image part

  const std::string& skel = tmpl.user_skeleton;
  for (size_t i = 0; i < skel.size();) {
    if (skel[i] == '{') {
      size_t end = i + 1;
      while (end < skel.size() &&
             (std::isalnum(static_cast<unsigned char>(skel[end])) || skel[end] == '_'))
        ++end;
      if (end > i + 1 && end < skel.size() && skel[end] == '}') {
        std::string name = skel.substr(i + 1, end - i - 1);
        const Binding& binding = bindings.at(name);
        pending += binding.text;
        if (binding.image) {
          user.parts.push_back(MessagePart{pending, std::nullopt});
          user.parts.push_back(MessagePart{"", binding.image});
          pending.clear();
        }
        i = end + 1;
        continue;
      }
    }
    pending += skel[i];
    ++i;
  }
  user.parts.push_back(MessagePart{pending, std::nullopt});

  std::vector<ChatMessage> messages;
  messages.push_back(ChatMessage::system(tmpl.system_text));
  messages.push_back(std::move(user));
  return messages;
}

const char* section_name(Section s) {
  switch (s) {
    case Section::Insights: return "INSIGHTS";
    case Section::Cues: return "CUES";
    case Section::Gaps: return "GAPS";
    case Section::SubAnswers: return "SUB_ANSWERS";
    case Section::FinalAnswer: return "FINAL_ANSWER";
    case Section::Uncertainty: return "UNCERTAINTY";
    case Section::Reasoning: return "REASONING";
  }
  return "REASONING";
}

namespace {

// Canonicalizes a candidate header token: uppercase, spaces/hyphens to
// underscores, markdown emphasis stripped.
std::string canonical_header(const std::string& raw) {
  std::string out;
  for (unsigned char c : raw) {
    if (c == '*' || c == '_' || c == '#' || c == '`') continue;
    if (c == ' ' || c == '-' || c == '\t') {
      if (!out.empty() && out.back() != '_') out += '_';
      continue;
    }
    out += static_cast<char>(std::toupper(c));
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  while (!out.empty() && out.front() == '_') out.erase(out.begin());
  return out;
}

std::optional<Section> section_from_header(const std::string& canonical) {
  if (canonical == "INSIGHTS" || canonical == "KEY_FACTS" || canonical == "FACTS")
    return Section::Insights;
  if (canonical == "CUES" || canonical == "CONTEXTUAL_CUES" || canonical == "TEMPORAL_CUES")
    return Section::Cues;
  if (canonical == "GAPS" || canonical == "AMBIGUITIES") return Section::Gaps;
  if (canonical == "SUB_ANSWERS" || canonical == "SUBANSWERS" || canonical == "SUB_QUESTIONS")
    return Section::SubAnswers;
  if (canonical == "FINAL_ANSWER" || canonical == "ANSWER") return Section::FinalAnswer;
  if (canonical == "UNCERTAINTY" || canonical == "UNCERTAINTIES") return Section::Uncertainty;
  if (canonical == "REASONING" || canonical == "RATIONALE") return Section::Reasoning;
  return std::nullopt;
}

// Strips list bullets and numbering from the front of a line.
std::string strip_bullet(const std::string& line) {
  size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  size_t mark = i;
  if (i < line.size() && (line[i] == '-' || line[i] == '*' || line[i] == '+')) {
    ++i;
  } else {
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > mark && i < line.size() && (line[i] == '.' || line[i] == ')')) ++i;
    else i = mark;
  }
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  return line.substr(i);
}

}  // namespace

ParsedSections parse_sections(const std::string& raw) {
  ParsedSections out;
  std::optional<Section> current;
  std::string preamble;
  std::map<Section, std::string> bodies;

  std::istringstream in(raw);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string stripped = strip_bullet(line);
    auto colon = stripped.find(':');
    bool matched = false;
    if (colon != std::string::npos && colon > 0) {
      std::string canonical = canonical_header(stripped.substr(0, colon));
      if (auto section = section_from_header(canonical)) {
        std::string rest = stripped.substr(colon + 1);
        // Drop emphasis closing the header, e.g. "**Final Answer:** x".
        size_t start = 0;
        while (start < rest.size() && (rest[start] == '*' || rest[start] == '_')) ++start;
        bodies[*section] = trim(rest.substr(start));  // last occurrence wins
        current = *section;
        matched = true;
      }
    }
    if (!matched) {
      if (current) {
        std::string& body = bodies[*current];
        if (!body.empty()) body += '\n';
        body += line;
      } else {
        if (!preamble.empty()) preamble += '\n';
        preamble += line;
      }
    }
  }

  for (auto& [section, body] : bodies) out.sections[section] = trim(body);
  std::string lead = trim(preamble);
  if (!lead.empty() && !out.sections.count(Section::Reasoning))
    out.sections[Section::Reasoning] = lead;
  return out;
}

std::vector<std::string> section_items(const std::string& body) {
  std::vector<std::string> items;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    std::string item = trim(strip_bullet(line));
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

const std::set<std::string>& default_abstention_markers() {
  static const std::set<std::string> markers = {
      "unknown", "cannot be determined", "insufficient evidence", "unanswerable", "n/a"};
  return markers;
}

bool is_abstention_marker(const std::string& answer, const std::set<std::string>& extra_markers) {
  std::string needle = lower(trim(answer));
  if (needle.empty()) return true;
  if (default_abstention_markers().count(needle)) return true;
  for (const std::string& marker : extra_markers)
    if (needle == lower(marker)) return true;
  return false;
}

FinalAnswer extract_final_answer(const ParsedSections& sections,
                                 const std::set<std::string>& extra_markers) {
  FinalAnswer out;
  std::string answer = trim(sections.get(Section::FinalAnswer));
  bool abstain = !sections.has(Section::FinalAnswer) || is_abstention_marker(answer, extra_markers);
  if (!abstain) out.answer = answer;

  std::string uncertainty = lower(trim(sections.get(Section::Uncertainty)));
  bool uncertain_marked =
      !uncertainty.empty() && uncertainty != "none" && uncertainty != "no" && uncertainty != "-";
  out.uncertain = abstain || uncertain_marked;
  return out;
}

void PromptLibrary::add(PromptTemplate tmpl) {
  templates_[tmpl.name] = std::move(tmpl);
}

const PromptTemplate& PromptLibrary::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw TemplateError("no template named '" + name + "' loaded");
  return it->second;
}

bool PromptLibrary::has(const std::string& name) const { return templates_.count(name) > 0; }

PromptLibrary PromptLibrary::load_dir(const std::string& dir) {
  static const char* const kNames[] = {"expert",         "synthesis",   "aggregator", "cot",
                                       "capcot_caption", "tot_propose", "tot_value"};
  PromptLibrary lib;
  for (const char* name : kNames) {
    lib.add(load_template(dir + "/" + name + ".txt"));
  }
  return lib;
}

}  // namespace mammqa
