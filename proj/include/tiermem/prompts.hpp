#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tiermem/gateway.hpp"

namespace tiermem {

using PromptContext = std::map<std::string, std::string>;

struct PromptTemplate {
  std::string_view system;
  std::string_view user;
};

// Template text as shipped in prompts/<tag>.{system,user}.txt.
PromptTemplate prompt_template(PromptTag tag);

// Placeholder names in order of first appearance, e.g. {"item_noun", ...}.
std::vector<std::string> template_placeholders(PromptTag tag);

// Substitutes every {placeholder}. A missing context key is an error, except
// for the rank template's instruction_section, which renders empty.
ChatRequest render_prompt(PromptTag tag, const PromptContext& context);

}  // namespace tiermem
