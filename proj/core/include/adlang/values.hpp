// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "adlang/ast.hpp"

namespace adlang {

// ---------------------------------------------------------------------------
// Value trees, parameterized by the scalar domain.
//
// The same tree shape serves three interpreters: the concrete evaluator
// (leaves are doubles/bools), the flow analysis (leaves are constants or
// "any"), and the code generator (leaves are constants or registers). All
// structural AD machinery -- bundles, reverse tags, shape/zero/plus,
// conformance, level stamping -- is written once against a Domain policy.
//
// Tag discipline: Bundle and Rev nodes wrap only real-skeleton values (reals,
// or further-tagged wholes); they distribute over pairs at construction, so a
// pair is always visible as a Pair node. Along any path from the root, tag
// levels strictly decrease going inward. Level 0 marks a pending tag, created
// by the user-level `bundle`/`*j` primitives and stamped when a transformed
// closure is applied.
// ---------------------------------------------------------------------------

enum class ValKind : uint8_t {
  Real, Bool, Empty, Level, Pair, Closure, Prim, Bundle, Rev, TStack,
};

enum class Boundary : uint8_t { None, Fwd, Rev };

template <class D>
struct Val {
  using R = typename D::R;
  using B = typename D::B;
  using Ptr = std::shared_ptr<const Val<D>>;

  ValKind kind{ValKind::Empty};
  R real{};          // Real
  B boolean{};       // Bool
  int level{0};      // Level payload; Bundle/Rev tag level (0 = pending)
  Ptr a, d;          // Pair car/cdr; Bundle primal/tangent; Rev inner (a)
  int lam{-1};       // Closure code
  Boundary boundary{Boundary::None};
  int closure_eps{0};   // frame level captured at creation (0 = none)
  int fixed_level{0};   // transform level fixed at creation (0 = deferred)
  PrimOp op;            // Prim
  std::vector<Ptr> kids; // Closure slots | Prim partial args | TStack items

  static Ptr real_v(R r) {
    auto v = std::make_shared<Val<D>>();
    v->kind = ValKind::Real;
    v->real = r;
    return v;
  }
  static Ptr bool_v(B b) {
    auto v = std::make_shared<Val<D>>();
    v->kind = ValKind::Bool;
    v->boolean = b;
    return v;
  }
  static Ptr empty_v() {
    auto v = std::make_shared<Val<D>>();
    v->kind = ValKind::Empty;
    return v;
  }
  static Ptr level_v(int l) {
    auto v = std::make_shared<Val<D>>();
    v->kind = ValKind::Level;
    v->level = l;
    return v;
  }
  static Ptr pair_v(Ptr a, Ptr d) {
    auto v = std::make_shared<Val<D>>();
    v->kind = ValKind::Pair;
    v->a = std::move(a);
    v->d = std::move(d);
    return v;
  }
  static Ptr closure_v(int lam, std::vector<Ptr> slots, Boundary b = Boundary::None,
                       int eps = 0, int fixed = 0) {
    auto v = std::make_shared<Val<D>>();
    v->kind = ValKind::Closure;
    v->lam = lam;
    v->kids = std::move(slots);
    v->boundary = b;
    v->closure_eps = eps;
    v->fixed_level = fixed;
    return v;
  }
  static Ptr prim_v(PrimOp op, std::vector<Ptr> partial = {}) {
    auto v = std::make_shared<Val<D>>();
    v->kind = ValKind::Prim;
    v->op = op;
    v->kids = std::move(partial);
    return v;
  }
  static Ptr bundle_v(int level, Ptr p, Ptr t) {
    auto v = std::make_shared<Val<D>>();
    v->kind = ValKind::Bundle;
    v->level = level;
    v->a = std::move(p);
    v->d = std::move(t);
    return v;
  }
  static Ptr rev_v(int level, Ptr inner) {
    auto v = std::make_shared<Val<D>>();
    v->kind = ValKind::Rev;
    v->level = level;
    v->a = std::move(inner);
    return v;
  }
  static Ptr tstack_v(std::vector<Ptr> items) {
    auto v = std::make_shared<Val<D>>();
    v->kind = ValKind::TStack;
    v->kids = std::move(items);
    return v;
  }
};

// ---------------------------------------------------------------------------
// Concrete domain
// ---------------------------------------------------------------------------

struct ConcreteDomain {
  using R = double;
  using B = bool;

  static bool known(R) { return true; }
  static double value(R r) { return r; }
  static R lift(double c) { return c; }
  static bool known_bool(B) { return true; }
  static bool bool_value(B b) { return b; }
  static B lift_bool(bool b) { return b; }

  R add(R a, R b) { return a + b; }
  R sub(R a, R b) { return a - b; }
  R mul(R a, R b) { return a * b; }
  R div(R a, R b) { return a / b; }
  R atan2_(R a, R b) { return std::atan2(a, b); }
  R neg(R a) { return -a; }
  R sqrt_(R a) { return std::sqrt(a); }
  R exp_(R a) { return std::exp(a); }
  R log_(R a) { return std::log(a); }
  R sin_(R a) { return std::sin(a); }
  R cos_(R a) { return std::cos(a); }
  B eq(R a, R b) { return a == b; }
  B lt(R a, R b) { return a < b; }
};

using Value = Val<ConcreteDomain>;
using ValuePtr = Value::Ptr;

// ---------------------------------------------------------------------------
// Shapes
// ---------------------------------------------------------------------------

// Structural skeleton of a value: no numeric payloads, but tag levels,
// closure identity (lambda + captured shapes) and primitive identity remain.
struct Shape {
  ValKind kind{ValKind::Empty};
  int level{0};
  int lam{-1};
  PrimOp op;
  std::shared_ptr<const Shape> a, d;
  std::vector<std::shared_ptr<const Shape>> kids;
};
using ShapePtr = std::shared_ptr<const Shape>;

bool shape_equal(const ShapePtr& x, const ShapePtr& y);
std::string shape_to_string(const Shape& s);

template <class D>
ShapePtr shape_of(const typename Val<D>::Ptr& v) {
  auto s = std::make_shared<Shape>();
  s->kind = v->kind;
  s->level = v->kind == ValKind::Level ? v->level : v->level;
  switch (v->kind) {
    case ValKind::Real:
    case ValKind::Bool:
    case ValKind::Empty:
    case ValKind::Level:
      break;
    case ValKind::Pair:
    case ValKind::Bundle:
      s->a = shape_of<D>(v->a);
      s->d = shape_of<D>(v->d);
      break;
    case ValKind::Rev:
      s->a = shape_of<D>(v->a);
      break;
    case ValKind::Closure:
      s->lam = v->lam;
      for (const auto& k : v->kids) s->kids.push_back(shape_of<D>(k));
      break;
    case ValKind::Prim:
      s->op = v->op;
      for (const auto& k : v->kids) s->kids.push_back(shape_of<D>(k));
      break;
    case ValKind::TStack:
      for (const auto& k : v->kids) s->kids.push_back(shape_of<D>(k));
      break;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Generic structural operations
// ---------------------------------------------------------------------------

// Largest tag level appearing anywhere in v (bundle/reverse tags, captured
// frame levels, level values). Fresh transform levels are chosen above this.
template <class D>
int max_level(const typename Val<D>::Ptr& v) {
  int m = 0;
  switch (v->kind) {
    case ValKind::Level: return v->level;
    case ValKind::Bundle:
      m = std::max({v->level, max_level<D>(v->a), max_level<D>(v->d)});
      return m;
    case ValKind::Rev:
      return std::max(v->level, max_level<D>(v->a));
    case ValKind::Pair:
      return std::max(max_level<D>(v->a), max_level<D>(v->d));
    case ValKind::Closure:
      m = std::max(v->closure_eps, v->fixed_level);
      for (const auto& k : v->kids) m = std::max(m, max_level<D>(k));
      return m;
    case ValKind::Prim:
    case ValKind::TStack:
      for (const auto& k : v->kids) m = std::max(m, max_level<D>(k));
      return m;
    default:
      return 0;
  }
}

// Largest reverse-tag level on the spine of v (through pairs, bundle
// components and prim partials). This is the protocol level a reverse
// template operates at; 0 means "constant with respect to any reverse pass".
template <class D>
int max_rev_level(const typename Val<D>::Ptr& v) {
  switch (v->kind) {
    case ValKind::Rev:
      return v->level; // outermost rev tag dominates deeper ones
    case ValKind::Bundle:
      return std::max(max_rev_level<D>(v->a), max_rev_level<D>(v->d));
    case ValKind::Pair:
      return std::max(max_rev_level<D>(v->a), max_rev_level<D>(v->d));
    case ValKind::Prim:
    case ValKind::TStack: {
      int m = 0;
      for (const auto& k : v->kids) m = std::max(m, max_rev_level<D>(k));
      return m;
    }
    default:
      return 0;
  }
}

template <class D>
typename Val<D>::Ptr strip_rev(const typename Val<D>::Ptr& v, int eps) {
  using V = Val<D>;
  switch (v->kind) {
    case ValKind::Rev:
      if (v->level == eps) return v->a;
      return v;
    case ValKind::Bundle: {
      auto p = strip_rev<D>(v->a, eps), t = strip_rev<D>(v->d, eps);
      if (p == v->a && t == v->d) return v;
      return V::bundle_v(v->level, p, t);
    }
    case ValKind::Pair: {
      auto a = strip_rev<D>(v->a, eps), d = strip_rev<D>(v->d, eps);
      if (a == v->a && d == v->d) return v;
      return V::pair_v(a, d);
    }
    case ValKind::Prim: {
      bool changed = false;
      std::vector<typename V::Ptr> kids;
      for (const auto& k : v->kids) {
        kids.push_back(strip_rev<D>(k, eps));
        changed |= kids.back() != k;
      }
      if (!changed) return v;
      return V::prim_v(v->op, std::move(kids));
    }
    case ValKind::TStack: {
      std::vector<typename V::Ptr> kids;
      for (const auto& k : v->kids) kids.push_back(strip_rev<D>(k, eps));
      return V::tstack_v(std::move(kids));
    }
    default:
      return v;
  }
}

// Re-applies a reverse tag at level eps, mirroring strip_rev: real-skeleton
// wholes get wrapped, higher tags are descended through, structure recurses.
template <class D>
typename Val<D>::Ptr retag_rev(const typename Val<D>::Ptr& v, int eps) {
  using V = Val<D>;
  switch (v->kind) {
    case ValKind::Real:
      return V::rev_v(eps, v);
    case ValKind::Bundle:
      if (v->level > eps)
        return V::bundle_v(v->level, retag_rev<D>(v->a, eps), retag_rev<D>(v->d, eps));
      return V::rev_v(eps, v);
    case ValKind::Rev:
      if (v->level > eps)
        return V::rev_v(v->level, retag_rev<D>(v->a, eps));
      return V::rev_v(eps, v);
    case ValKind::Pair:
      return V::pair_v(retag_rev<D>(v->a, eps), retag_rev<D>(v->d, eps));
    case ValKind::Prim: {
      std::vector<typename V::Ptr> kids;
      for (const auto& k : v->kids) kids.push_back(retag_rev<D>(k, eps));
      return V::prim_v(v->op, std::move(kids));
    }
    case ValKind::TStack: {
      std::vector<typename V::Ptr> kids;
      for (const auto& k : v->kids) kids.push_back(retag_rev<D>(k, eps));
      return V::tstack_v(std::move(kids));
    }
    default:
      return v; // booleans, empty, levels, closures pass through untagged
  }
}

std::string value_to_string(const ValuePtr& v, const Program& p);

// Tolerant structural comparison for tests and the harness.
bool values_equal(const ValuePtr& a, const ValuePtr& b, double tol);

}  // namespace adlang
