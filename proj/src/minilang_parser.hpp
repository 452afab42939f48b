#pragma once

#include <string>
#include <string_view>

#include "codeprobe/ast.hpp"

namespace codeprobe::detail {

// Recursive-descent parser for the MiniLang subset. Produces the node shapes
// of the tree-sitter Java/C grammars, except that declarator wrappers
// (variable_declarator, init_declarator) are spliced into their declaration.
AstTree parse_minilang(std::string_view code, Language language, std::string source_id);

}  // namespace codeprobe::detail
