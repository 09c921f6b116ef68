// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "adlang/ast.hpp"

namespace adlang {

// Source-to-source AD transforms over lambda code. Results are cached on the
// Program so repeated transformation of the same code is free and the flow
// analysis sees a finite code universe. Thread-safe via the program's
// transform mutex.

// Forward transform: numeric primitives become level-polymorphic generic
// variants, literals are tagged at the frame level, global references are
// lifted. Code already in forward or reverse form is its own forward
// transform (the generic operators promote untagged operands).
int fwd_lam(Program& p, int lam_id);

// Reverse transform: rewrites into backpropagator-passing style. Every
// subexpression of the transformed body evaluates to (value . kappa) where
// kappa maps an output sensitivity to a sensitivity record over the scope
// variables; the root wrapper returns (value . backpropagator) pairs.
int rev_lam(Program& p, int lam_id);

// Reverse behavior of a primitive as a closed in-language closure; applying
// it follows the backpropagator-passing protocol. Cached per operator.
int rev_prim_template(Program& p, PrimOp op);

}  // namespace adlang
