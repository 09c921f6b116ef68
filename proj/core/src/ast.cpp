// SPDX-License-Identifier: Apache-2.0
#include "adlang/ast.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace adlang {

// ---------------------------------------------------------------------------
// Primitive tables
// ---------------------------------------------------------------------------

namespace {
struct PrimDesc {
  PrimBase base;
  const char* name;
  int arity;
};

constexpr PrimDesc kPrims[] = {
    {PrimBase::Add, "+", 2},          {PrimBase::Sub, "-", 2},
    {PrimBase::Mul, "*", 2},          {PrimBase::Div, "/", 2},
    {PrimBase::Sqrt, "sqrt", 1},      {PrimBase::Exp, "exp", 1},
    {PrimBase::Log, "log", 1},        {PrimBase::Sin, "sin", 1},
    {PrimBase::Cos, "cos", 1},        {PrimBase::Atan2, "atan2", 2},
    {PrimBase::NumEq, "=?", 2},       {PrimBase::Lt, "<?", 2},
    {PrimBase::Car, "car", 1},        {PrimBase::Cdr, "cdr", 1},
    {PrimBase::IsReal, "real?", 1},   {PrimBase::IsPair, "pair?", 1},
    {PrimBase::IsProcedure, "procedure?", 1},
    {PrimBase::Jstar, "j*", 1},       {PrimBase::Primal, "primal", 1},
    {PrimBase::Tangent, "tangent", 1},{PrimBase::Bundle, "bundle", 2},
    {PrimBase::Zero, "zero", 1},      {PrimBase::StarJ, "*j", 1},
    {PrimBase::MkBundle, "mkbundle", 3},
    {PrimBase::Plus, "plus", 2},
    {PrimBase::SensZero, "sens-zero", 1},
    {PrimBase::RevUntag, "rev-untag", 1},
    {PrimBase::SensPrimal, "sens-primal", 1},
    {PrimBase::SensTangent, "sens-tangent", 1},
    {PrimBase::SensBundleP, "sens-bundle-p", 2},
    {PrimBase::SensBundleT, "sens-bundle-t", 2},
    {PrimBase::ClSlot, "cl-slot", 2},
    {PrimBase::ClMake, "cl-make", 2},
    {PrimBase::ClUnslot, "cl-unslot", 3},
    {PrimBase::ClUnmake, "cl-unmake", 1},
    {PrimBase::ClRetarget, "cl-retarget", 2},
    {PrimBase::TStackOf, "tstack", 1},
    {PrimBase::TStackToList, "tstack-list", 1},
    {PrimBase::Lift, "lift", 2},
    {PrimBase::RevLift, "rev-lift", 1},
};

const PrimDesc& desc(PrimBase b) {
  for (const auto& d : kPrims)
    if (d.base == b) return d;
  bug("unknown primitive");
}

constexpr PrimBase kUserBasis[] = {
    PrimBase::Add,   PrimBase::Sub,    PrimBase::Mul,    PrimBase::Div,
    PrimBase::Sqrt,  PrimBase::Exp,    PrimBase::Log,    PrimBase::Sin,
    PrimBase::Cos,   PrimBase::Atan2,  PrimBase::NumEq,  PrimBase::Lt,
    PrimBase::Car,   PrimBase::Cdr,    PrimBase::IsReal, PrimBase::IsPair,
    PrimBase::IsProcedure, PrimBase::Jstar, PrimBase::Primal,
    PrimBase::Tangent, PrimBase::Bundle, PrimBase::Zero, PrimBase::StarJ,
};
}  // namespace

int prim_arity(PrimBase b) { return desc(b).arity; }

std::string prim_name(const PrimOp& op) {
  std::string n = desc(op.base).name;
  if (!op.gen && op.rev_depth == 0) return n;
  std::string out = "#%";
  if (op.gen) out += "g:";
  if (op.rev_depth > 0) out += "r" + std::to_string(op.rev_depth) + ":";
  return out + n;
}

bool prim_lookup(std::string_view name, PrimBase* out) {
  for (PrimBase b : kUserBasis) {
    if (name == desc(b).name) {
      *out = b;
      return true;
    }
  }
  return false;
}

bool prim_is_numeric(PrimBase b) {
  switch (b) {
    case PrimBase::Add: case PrimBase::Sub: case PrimBase::Mul:
    case PrimBase::Div: case PrimBase::Sqrt: case PrimBase::Exp:
    case PrimBase::Log: case PrimBase::Sin: case PrimBase::Cos:
    case PrimBase::Atan2:
      return true;
    default:
      return false;
  }
}

bool prim_is_compare(PrimBase b) {
  return b == PrimBase::NumEq || b == PrimBase::Lt;
}

bool prim_is_ad(PrimBase b) {
  switch (b) {
    case PrimBase::Jstar: case PrimBase::Primal: case PrimBase::Tangent:
    case PrimBase::Bundle: case PrimBase::Zero: case PrimBase::StarJ:
      return true;
    default:
      return false;
  }
}

// ---------------------------------------------------------------------------
// Program arena
// ---------------------------------------------------------------------------

Expr* Program::make(ExprKind k) {
  auto e = std::make_unique<Expr>();
  e->kind = k;
  e->label = static_cast<int>(arena_.size());
  arena_.push_back(std::move(e));
  return arena_.back().get();
}

Expr* Program::make_var(Sym s) {
  Expr* e = make(ExprKind::Var);
  e->var = s;
  return e;
}

Expr* Program::make_lit_real(double v, bool raw) {
  Expr* e = make(ExprKind::Lit);
  e->lit = {LitKind::Real, v, false, raw};
  return e;
}

Expr* Program::make_lit_bool(bool v) {
  Expr* e = make(ExprKind::Lit);
  e->lit = {LitKind::Boolean, 0.0, v, false};
  return e;
}

Expr* Program::make_lit_empty() {
  Expr* e = make(ExprKind::Lit);
  e->lit = {LitKind::Empty, 0.0, false, false};
  return e;
}

Expr* Program::make_prim(PrimOp op) {
  Expr* e = make(ExprKind::Prim);
  e->prim = op;
  return e;
}

Expr* Program::make_app(const Expr* f, const Expr* a) {
  Expr* e = make(ExprKind::App);
  e->a = f;
  e->b = a;
  return e;
}

Expr* Program::make_if(const Expr* t, const Expr* a, const Expr* b) {
  Expr* e = make(ExprKind::If);
  e->a = t;
  e->b = a;
  e->c = b;
  return e;
}

Expr* Program::make_cons(const Expr* a, const Expr* d) {
  Expr* e = make(ExprKind::Cons);
  e->a = a;
  e->b = d;
  return e;
}

Expr* Program::make_lam(Sym param, const Expr* body, LamFlavor flavor, int orig) {
  if (eps_sym_ < 0) eps_sym_ = syms_.intern("$eps");
  Expr* e = make(ExprKind::Lam);
  LamInfo li;
  li.id = static_cast<int>(lams_.size());
  li.param = param;
  li.node = e;
  li.body = body;
  li.flavor = flavor;
  li.orig = orig;
  e->lam = li.id;
  lams_.push_back(std::move(li));
  return e;
}

void Program::set_lam_body(int lam_id, const Expr* body) {
  lams_.at(static_cast<size_t>(lam_id)).body = body;
}

int Program::global_index(Sym name) const {
  for (size_t i = 0; i < defs_.size(); ++i)
    if (defs_[i].name == name) return static_cast<int>(i);
  return -1;
}

int Program::transform_cached(int lam_id, int kind) const {
  int64_t key = static_cast<int64_t>(lam_id) * 2 + kind;
  auto it = std::lower_bound(transform_cache_.begin(), transform_cache_.end(), key,
                             [](const auto& p, int64_t k) { return p.first < k; });
  if (it != transform_cache_.end() && it->first == key) return it->second;
  return -1;
}

void Program::transform_store(int lam_id, int kind, int derived) {
  int64_t key = static_cast<int64_t>(lam_id) * 2 + kind;
  auto it = std::lower_bound(transform_cache_.begin(), transform_cache_.end(), key,
                             [](const auto& p, int64_t k) { return p.first < k; });
  transform_cache_.insert(it, {key, derived});
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

namespace {

struct Resolver {
  Program& p;
  // Names of globals visible in the current resolution context.
  const std::vector<Sym>& globals;
  // Transformed lambdas may leave free names as capture slots of the root;
  // user programs must have every name bound.
  bool allow_root_capture{false};

  bool global_visible(Sym s, int* idx) const {
    for (size_t i = 0; i < globals.size(); ++i) {
      if (globals[i] == s) {
        *idx = static_cast<int>(i);
        return true;
      }
    }
    return false;
  }

  // Pass 1: compute free-variable sets. `stack` holds enclosing lambda ids,
  // innermost last. `root` is the lambda whose subtree we are resolving; free
  // names of the root itself become its capture slots (unless global).
  void collect(const Expr* e, std::vector<int>& stack,
               std::vector<std::vector<Sym>>& free_sets) {
    switch (e->kind) {
      case ExprKind::Var: {
        Sym v = e->var;
        if (v == p.eps_sym()) return;
        // Bound by an enclosing lambda in the stack?
        int binder = -1;
        for (int i = static_cast<int>(stack.size()) - 1; i >= 0; --i) {
          if (p.lam(stack[static_cast<size_t>(i)]).param == v) {
            binder = i;
            break;
          }
        }
        if (binder >= 0) {
          // Captured by every lambda strictly inside the binder.
          for (size_t i = static_cast<size_t>(binder) + 1; i < stack.size(); ++i) {
            auto& fs = free_sets[static_cast<size_t>(stack[i])];
            if (std::find(fs.begin(), fs.end(), v) == fs.end()) fs.push_back(v);
          }
          return;
        }
        int gidx = -1;
        if (global_visible(v, &gidx)) return;
        // Unbound names drawn from the basis denote primitives.
        PrimBase pb;
        if (prim_lookup(p.syms().name(v), &pb)) {
          Expr* mut = const_cast<Expr*>(e);
          mut->kind = ExprKind::Prim;
          mut->prim = {pb, false, 0};
          return;
        }
        // Free of the whole subtree: captured by everything on the stack.
        if (allow_root_capture && !stack.empty()) {
          for (size_t i = 0; i < stack.size(); ++i) {
            auto& fs = free_sets[static_cast<size_t>(stack[i])];
            if (std::find(fs.begin(), fs.end(), v) == fs.end()) fs.push_back(v);
          }
          return;
        }
        fail(ErrClass::Validate,
             "unbound variable `" + p.syms().name(v) + "` (label " +
                 std::to_string(e->label) + ")",
             e->label);
      }
      case ExprKind::Lam: {
        stack.push_back(e->lam);
        collect(p.lam(e->lam).body, stack, free_sets);
        stack.pop_back();
        return;
      }
      case ExprKind::App:
      case ExprKind::Cons:
        collect(e->a, stack, free_sets);
        collect(e->b, stack, free_sets);
        return;
      case ExprKind::If:
        collect(e->a, stack, free_sets);
        collect(e->b, stack, free_sets);
        collect(e->c, stack, free_sets);
        return;
      case ExprKind::Lit:
      case ExprKind::Prim:
        return;
    }
  }

  // Pass 2: assign VarRes to every variable and capture resolutions to every
  // lambda (how the enclosing context supplies each slot).
  void assign(const Expr* e, std::vector<int>& stack) {
    switch (e->kind) {
      case ExprKind::Var: {
        Expr* mut = const_cast<Expr*>(e);
        Sym v = e->var;
        if (v == p.eps_sym()) {
          mut->res = {ResKind::Eps, 0};
          return;
        }
        mut->res = resolve_name(v, stack, e->label);
        return;
      }
      case ExprKind::Lam: {
        LamInfo& li = p.lam(e->lam);
        // How the creating context fills each capture slot. A transformed
        // root lambda gets its slots from the original closure instead.
        li.free_sorted_res.clear();
        for (Sym s : li.free_sorted) {
          if (stack.empty() && allow_root_capture)
            li.free_sorted_res.push_back({ResKind::Unresolved, -1});
          else
            li.free_sorted_res.push_back(resolve_name(s, stack, e->label));
        }
        stack.push_back(e->lam);
        assign(li.body, stack);
        stack.pop_back();
        return;
      }
      case ExprKind::App:
      case ExprKind::Cons:
        assign(e->a, stack);
        assign(e->b, stack);
        return;
      case ExprKind::If:
        assign(e->a, stack);
        assign(e->b, stack);
        assign(e->c, stack);
        return;
      case ExprKind::Lit:
      case ExprKind::Prim:
        return;
    }
  }

  VarRes resolve_name(Sym v, const std::vector<int>& stack, int label) {
    if (!stack.empty()) {
      const LamInfo& inner = p.lam(stack.back());
      if (inner.param == v) return {ResKind::Param, 0};
      auto it = std::find(inner.free_sorted.begin(), inner.free_sorted.end(), v);
      if (it != inner.free_sorted.end())
        return {ResKind::Slot,
                static_cast<int>(it - inner.free_sorted.begin())};
    }
    int gidx = -1;
    if (global_visible(v, &gidx)) return {ResKind::Global, gidx};
    fail(ErrClass::Validate,
         "unbound variable `" + p.syms().name(v) + "` (label " +
             std::to_string(label) + ")",
         label);
  }
};

}  // namespace

void Program::resolve_lam(int lam_id) {
  std::vector<Sym> globals;
  globals.reserve(defs_.size());
  for (const auto& d : defs_) globals.push_back(d.name);
  Resolver r{*this, globals, /*allow_root_capture=*/true};

  std::vector<std::vector<Sym>> free_sets(lams_.size());
  for (auto& li : lams_) free_sets[static_cast<size_t>(li.id)] = {};
  std::vector<int> stack;
  const Expr* node = lam(lam_id).node;
  r.collect(node, stack, free_sets);
  // Install sorted free lists for every lambda in this subtree. Sorting is by
  // name string so closure slot order is deterministic.
  install_free_sets(node, free_sets);
  r.assign(node, stack);
}

void Program::install_free_sets(const Expr* e,
                                std::vector<std::vector<Sym>>& free_sets) {
  switch (e->kind) {
    case ExprKind::Lam: {
      LamInfo& li = lam(e->lam);
      auto fs = free_sets[static_cast<size_t>(e->lam)];
      std::sort(fs.begin(), fs.end(), [&](Sym a, Sym b) {
        return syms_.name(a) < syms_.name(b);
      });
      li.free_sorted = std::move(fs);
      install_free_sets(li.body, free_sets);
      return;
    }
    case ExprKind::App:
    case ExprKind::Cons:
      install_free_sets(e->a, free_sets);
      install_free_sets(e->b, free_sets);
      return;
    case ExprKind::If:
      install_free_sets(e->a, free_sets);
      install_free_sets(e->b, free_sets);
      install_free_sets(e->c, free_sets);
      return;
    default:
      return;
  }
}

void Program::resolve_all() {
  std::vector<std::vector<Sym>> free_sets(lams_.size());
  for (size_t k = 0; k < defs_.size(); ++k) {
    std::vector<Sym> visible;
    for (size_t i = 0; i < k; ++i) visible.push_back(defs_[i].name);
    Resolver r{*this, visible};
    std::vector<int> stack;
    free_sets.resize(lams_.size());
    r.collect(defs_[k].value, stack, free_sets);
    install_free_sets(defs_[k].value, free_sets);
    r.assign(defs_[k].value, stack);
  }
  std::vector<Sym> visible;
  for (const auto& d : defs_) visible.push_back(d.name);
  Resolver r{*this, visible};
  std::vector<int> stack;
  free_sets.resize(lams_.size());
  if (!entry_) fail(ErrClass::Parse, "program has no entry expression");
  r.collect(entry_, stack, free_sets);
  install_free_sets(entry_, free_sets);
  r.assign(entry_, stack);
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  // Ensure reals are never mistaken for the (unsupported) integer syntax.
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
      s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
    s += ".0";
  return s;
}

namespace {
void print_rec(const Program& p, const Expr* e, std::string& out) {
  switch (e->kind) {
    case ExprKind::Var:
      out += p.syms().name(e->var);
      return;
    case ExprKind::Lam:
      out += "(lambda (";
      out += p.syms().name(p.lam(e->lam).param);
      out += ") ";
      print_rec(p, p.lam(e->lam).body, out);
      out += ")";
      return;
    case ExprKind::App:
      out += "(";
      print_rec(p, e->a, out);
      out += " ";
      print_rec(p, e->b, out);
      out += ")";
      return;
    case ExprKind::If:
      out += "(if ";
      print_rec(p, e->a, out);
      out += " ";
      print_rec(p, e->b, out);
      out += " ";
      print_rec(p, e->c, out);
      out += ")";
      return;
    case ExprKind::Cons:
      out += "(cons ";
      print_rec(p, e->a, out);
      out += " ";
      print_rec(p, e->b, out);
      out += ")";
      return;
    case ExprKind::Lit:
      switch (e->lit.kind) {
        case LitKind::Real: out += format_real(e->lit.real); return;
        case LitKind::Boolean: out += e->lit.boolean ? "#t" : "#f"; return;
        case LitKind::Empty: out += "()"; return;
      }
      return;
    case ExprKind::Prim:
      out += prim_name(e->prim);
      return;
  }
}
}  // namespace

std::string print_expr(const Program& p, const Expr* e) {
  std::string out;
  print_rec(p, e, out);
  return out;
}

std::string print_program(const Program& p) {
  std::string out;
  for (const auto& d : p.defs()) {
    out += "(define " + p.syms().name(d.name) + " ";
    print_rec(p, d.value, out);
    out += ")\n";
  }
  if (p.entry()) {
    print_rec(p, p.entry(), out);
    out += "\n";
  }
  return out;
}

const char* err_class_name(ErrClass c) {
  switch (c) {
    case ErrClass::Lex: return "lex";
    case ErrClass::Parse: return "parse";
    case ErrClass::Validate: return "validate";
    case ErrClass::Eval: return "eval";
    case ErrClass::Analysis: return "analysis";
    case ErrClass::Internal: return "internal";
  }
  return "unknown";
}

}  // namespace adlang
