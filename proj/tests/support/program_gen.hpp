#pragma once

#include <set>
#include <string>
#include <vector>

#include "codeprobe/common.hpp"

namespace codeprobe::testing {

/// One statement-level node as the generator printed it.
struct GenNode {
  ByteRange range;
  std::set<std::string> defs;
  std::set<std::string> uses;
};

struct GenStmt {
  enum class Kind { Assign, Decl, BareDecl, Incr, Return, Break, Continue, If, While, For };
  Kind kind = Kind::Assign;
  int node = -1;  // the statement itself, or the predicate of if/while/for
  int init = -1;  // for loops only
  int update = -1;
  bool has_else = false;
  std::vector<GenStmt> body;
  std::vector<GenStmt> orelse;
};

/// A single MiniLang (Java subset) function together with the generator's own
/// record of every node's range and def/use sets.
struct GenProgram {
  std::string source;
  std::vector<std::string> params;
  std::vector<GenNode> nodes;
  std::vector<GenStmt> body;
  bool has_jumps = false;
};

struct GenOptions {
  int max_statements = 8;
  int max_depth = 2;
  bool allow_jumps = true;
};

GenProgram generate_program(Rng& rng, const GenOptions& options = {});

}  // namespace codeprobe::testing
