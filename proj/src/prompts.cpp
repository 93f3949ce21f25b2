#include "tiermem/prompts.hpp"

#include <algorithm>
#include <cctype>

namespace tiermem {

namespace detail {
const std::map<std::string, std::string_view, std::less<>>& embedded_prompts();
}

namespace {

std::string_view lookup(std::string_view key) {
  const auto& all = detail::embedded_prompts();
  auto it = all.find(key);
  if (it == all.end()) {
    throw Error(ErrorKind::validation, "no prompt template named '" + std::string(key) + "'");
  }
  auto text = it->second;
  if (!text.empty() && text.back() == '\n') text.remove_suffix(1);
  return text;
}

int max_tokens_for(PromptTag tag) {
  switch (tag) {
    case PromptTag::extract: return 1024;
    case PromptTag::synthesize: return 600;
    case PromptTag::plan: return 512;
    case PromptTag::rank: return 1024;
    case PromptTag::categorize: return 128;
  }
  return 1024;
}

bool is_placeholder_char(char c) {
  return std::islower(static_cast<unsigned char>(c)) || c == '_';
}

template <typename Fn>
void scan_placeholders(std::string_view text, Fn&& on_placeholder) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < text.size() && is_placeholder_char(text[j])) ++j;
    if (j > i + 1 && j < text.size() && text[j] == '}') {
      on_placeholder(i, j + 1, text.substr(i + 1, j - i - 1));
      i = j;
    }
  }
}

std::string substitute(std::string_view text, PromptTag tag, const PromptContext& context) {
  std::string out;
  std::size_t last = 0;
  scan_placeholders(text, [&](std::size_t begin, std::size_t end, std::string_view name) {
    out.append(text.substr(last, begin - last));
    auto it = context.find(std::string(name));
    if (it != context.end()) {
      out.append(it->second);
    } else if (!(tag == PromptTag::rank && name == "instruction_section")) {
      throw Error(ErrorKind::validation, "prompt " + std::string(to_string(tag)) +
                                             " is missing placeholder {" + std::string(name) +
                                             "}");
    }
    last = end;
  });
  out.append(text.substr(last));
  return out;
}

}  // namespace

PromptTemplate prompt_template(PromptTag tag) {
  const std::string base(to_string(tag));
  return PromptTemplate{lookup(base + ".system"), lookup(base + ".user")};
}

std::vector<std::string> template_placeholders(PromptTag tag) {
  const auto tmpl = prompt_template(tag);
  std::vector<std::string> names;
  auto collect = [&](std::size_t, std::size_t, std::string_view name) {
    if (std::find(names.begin(), names.end(), name) == names.end()) names.emplace_back(name);
  };
  scan_placeholders(tmpl.system, collect);
  scan_placeholders(tmpl.user, collect);
  return names;
}

ChatRequest render_prompt(PromptTag tag, const PromptContext& context) {
  const auto tmpl = prompt_template(tag);
  ChatRequest req;
  req.tag = tag;
  req.temperature = 0.0;
  req.max_output_tokens = max_tokens_for(tag);
  req.system = substitute(tmpl.system, tag, context);
  req.user = substitute(tmpl.user, tag, context);
  return req;
}

}  // namespace tiermem
