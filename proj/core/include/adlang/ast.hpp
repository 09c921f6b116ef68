// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "adlang/error.hpp"
#include "adlang/symbols.hpp"

namespace adlang {

// ---------------------------------------------------------------------------
// Primitive operators.
//
// The user-visible basis is a fixed set of names. Transformed code uses two
// extra dimensions that never appear in source programs:
//   - gen: level-polymorphic ("generic") variants that accept tagged values
//     (bundles / reverse-tagged reals) and apply the dual-number rules.
//   - rev_depth: how many reverse (backpropagator-passing) protocol layers
//     wrap the operator. Depth k operators return (value, backpropagator)
//     pairs k levels deep.
// ---------------------------------------------------------------------------

enum class PrimBase : uint8_t {
  // numeric
  Add, Sub, Mul, Div, Sqrt, Exp, Log, Sin, Cos, Atan2,
  // comparison
  NumEq, Lt,
  // structure
  Car, Cdr,
  // predicates
  IsReal, IsPair, IsProcedure,
  // AD basis
  Jstar, Primal, Tangent, Bundle, Zero, StarJ,
  // internal (generated code only)
  MkBundle,    // (mkbundle p t eps) eager bundle at an explicit level
  Plus,        // tangent-space addition
  SensZero,    // zero sensitivity of a value, outermost reverse tags stripped
  RevUntag,    // strip the outermost reverse tag level
  SensPrimal,  // lenient primal projection of a bundle-shaped sensitivity
  SensTangent, // lenient tangent projection
  SensBundleP, // (sens-bundle-p ph v) bundle-shaped sens with primal part ph
  SensBundleT, // (sens-bundle-t th v) bundle-shaped sens with tangent part th
  ClSlot,      // (cl-slot i c) project slot i of a closure-shaped sensitivity
  ClMake,      // (cl-make lam-id|template record) build a closure-shaped sens
  ClUnslot,    // (cl-unslot i y c) closure-shaped sens, y at slot i
  ClUnmake,    // closure-shaped sens -> slot list
  ClRetarget,  // (cl-retarget s c) re-address a closure-shaped sens onto c
  TStackOf,    // pair-list -> stacked-tangent vector
  TStackToList,
  Lift,        // (lift v eps) forward-lift a plain value for use in fwd code
  RevLift,     // (rev-lift v) reverse-lift a plain value for use in rev code
};

struct PrimOp {
  PrimBase base{PrimBase::Add};
  bool gen{false};       // level-polymorphic flavor
  uint16_t rev_depth{0}; // backpropagator protocol depth

  friend bool operator==(const PrimOp&, const PrimOp&) = default;
};

// Number of curried arguments a primitive consumes before it fires.
int prim_arity(PrimBase b);
// Surface name of a user-visible primitive; internal ops get a #% prefix.
std::string prim_name(const PrimOp& op);
// Maps a surface name to a basis primitive; returns false if not in basis.
bool prim_lookup(std::string_view name, PrimBase* out);
bool prim_is_numeric(PrimBase b);
bool prim_is_compare(PrimBase b);
bool prim_is_ad(PrimBase b);

// ---------------------------------------------------------------------------
// Expressions
// ---------------------------------------------------------------------------

enum class LitKind : uint8_t { Real, Boolean, Empty };

struct LitVal {
  LitKind kind{LitKind::Real};
  double real{0.0};
  bool boolean{false};
  // Transform-generated literals (slot indices, lambda ids) are never tagged
  // by a later forward transform.
  bool raw{false};
};

enum class ResKind : uint8_t { Unresolved, Param, Slot, Global, Eps };

struct VarRes {
  ResKind kind{ResKind::Unresolved};
  int index{-1};
};

struct Expr;

enum class ExprKind : uint8_t { Var, Lam, App, If, Cons, Lit, Prim };

struct Expr {
  ExprKind kind{ExprKind::Lit};
  int label{-1};

  Sym var{-1};     // Var
  VarRes res;      // Var
  int lam{-1};     // Lam: index into Program::lams
  const Expr* a{nullptr}; // App fn | If test | Cons a
  const Expr* b{nullptr}; // App arg | If then | Cons d
  const Expr* c{nullptr}; // If else
  LitVal lit;      // Lit
  PrimOp prim;     // Prim
};

enum class LamFlavor : uint8_t { Plain, Fwd, Rev };

struct LamInfo {
  int id{-1};
  Sym param{-1};
  const Expr* node{nullptr}; // the Lam expression
  const Expr* body{nullptr};
  std::vector<Sym> free_sorted; // captured variables, name-sorted
  // How the creating context supplies each capture slot (aligned with
  // free_sorted; resolved relative to the enclosing lambda).
  std::vector<VarRes> free_sorted_res;
  LamFlavor flavor{LamFlavor::Plain};
  int orig{-1};       // lambda this one was derived from by a transform, or -1
  Sym debug_name{-1}; // definition name when bound by a top-level define
};

// ---------------------------------------------------------------------------
// Program
// ---------------------------------------------------------------------------

struct Definition {
  Sym name{-1};
  const Expr* value{nullptr};
};

// Owns every expression node (labels are arena indices, hence unique) and the
// lambda table. Transforms append new nodes under a lock; existing nodes are
// immutable once resolved.
class Program {
 public:
  Program() = default;
  Program(const Program&) = delete;
  Program& operator=(const Program&) = delete;

  SymbolTable& syms() { return syms_; }
  const SymbolTable& syms() const { return syms_; }

  Expr* make(ExprKind k);
  Expr* make_var(Sym s);
  Expr* make_lit_real(double v, bool raw = false);
  Expr* make_lit_bool(bool v);
  Expr* make_lit_empty();
  Expr* make_prim(PrimOp op);
  Expr* make_app(const Expr* f, const Expr* a);
  Expr* make_if(const Expr* t, const Expr* a, const Expr* b);
  Expr* make_cons(const Expr* a, const Expr* d);
  // Creates the Lam node and its LamInfo entry; body may be set afterwards
  // (generated code sometimes needs the lambda id before the body exists).
  Expr* make_lam(Sym param, const Expr* body, LamFlavor flavor = LamFlavor::Plain,
                 int orig = -1);
  void set_lam_body(int lam_id, const Expr* body);

  const Expr* node(int label) const { return arena_.at(static_cast<size_t>(label)).get(); }
  size_t node_count() const { return arena_.size(); }

  LamInfo& lam(int id) { return lams_.at(static_cast<size_t>(id)); }
  const LamInfo& lam(int id) const { return lams_.at(static_cast<size_t>(id)); }
  size_t lam_count() const { return lams_.size(); }

  std::vector<Definition>& defs() { return defs_; }
  const std::vector<Definition>& defs() const { return defs_; }
  const Expr* entry() const { return entry_; }
  void set_entry(const Expr* e) { entry_ = e; }
  int global_index(Sym name) const; // -1 if not defined
  Sym eps_sym() const { return eps_sym_; }

  // Resolves variable references and computes capture lists for a lambda
  // whose free variables are either bound within it, global, or $eps.
  void resolve_lam(int lam_id);
  // Resolves the whole program (definitions in order, then the entry).
  void resolve_all();

  // Transform cache: (lam id, kind) -> derived lam id. kind: 0=fwd, 1=rev.
  int transform_cached(int lam_id, int kind) const;
  void transform_store(int lam_id, int kind, int derived);

  std::mutex& transform_mutex() { return transform_mu_; }

 private:
  friend class Parser;
  SymbolTable syms_;
  std::vector<std::unique_ptr<Expr>> arena_;
  std::vector<LamInfo> lams_;
  std::vector<Definition> defs_;
  const Expr* entry_{nullptr};
  Sym eps_sym_{-1};
  std::vector<std::pair<int64_t, int>> transform_cache_; // sorted key -> lam
  mutable std::mutex transform_mu_;

  void install_free_sets(const Expr* e, std::vector<std::vector<Sym>>& free_sets);
};

// Deterministic s-expression printer for core programs.
std::string print_expr(const Program& p, const Expr* e);
std::string print_program(const Program& p);
// Shortest round-trip decimal form, always with a '.' or exponent.
std::string format_real(double v);

}  // namespace adlang
