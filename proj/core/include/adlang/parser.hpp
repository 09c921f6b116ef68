// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string_view>

#include "adlang/ast.hpp"

namespace adlang {

// Parses and desugars a `.vlad` program: `define` forms followed by one entry
// expression. let/let*/letrec and multi-argument lambdas/applications are
// desugared here; the result is the unary core language.
std::unique_ptr<Program> parse_program(std::string_view text);

// As above but tolerates a missing entry expression (used for the prelude).
std::unique_ptr<Program> parse_program_defs_ok(std::string_view text);

// Confirms program invariants: every name resolves (binder, earlier
// definition, or basis primitive), primitives are drawn from the user basis,
// and labels are unique. Resolution results are installed on success.
void validate(Program& p);

}  // namespace adlang
