// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "adlang/transform.hpp"
#include "adlang/values.hpp"

namespace adlang {

// ---------------------------------------------------------------------------
// Domain-generic value semantics: structural AD operations and primitive
// application. Shared verbatim by the evaluator (concrete doubles), the flow
// analysis (constants-or-any) and the code generator (constants-or-registers).
// Control decisions inside these routines depend only on tags and shapes,
// which are static in every domain, never on unknown scalar payloads.
// ---------------------------------------------------------------------------

template <class D>
struct Interp {
  using V = Val<D>;
  using P = typename V::Ptr;

  Program& prog;
  D dom;
  ErrClass err_class{ErrClass::Eval};

  [[noreturn]] void err(const std::string& msg) const { fail(err_class, msg); }

  // ---- small helpers ------------------------------------------------------

  static bool is_tag(const P& v) {
    return v->kind == ValKind::Bundle || v->kind == ValKind::Rev;
  }
  static int tag_level(const P& v) { return is_tag(v) ? v->level : 0; }

  void check_stamped(const P& v) const {
    if (is_tag(v) && v->level == 0)
      err("unstamped bundle: `bundle`/`*j` value used outside a transformed "
          "procedure application");
  }

  P zero_of(const P& v) {
    switch (v->kind) {
      case ValKind::Real: return V::real_v(dom.lift(0.0));
      case ValKind::Bool:
      case ValKind::Empty:
      case ValKind::Level: return v;
      case ValKind::Pair: return V::pair_v(zero_of(v->a), zero_of(v->d));
      case ValKind::Bundle: return V::bundle_v(v->level, zero_of(v->a), zero_of(v->d));
      case ValKind::Rev: return V::rev_v(v->level, zero_of(v->a));
      case ValKind::Closure: {
        std::vector<P> slots;
        for (const auto& k : v->kids) slots.push_back(zero_of(k));
        return V::closure_v(v->lam, std::move(slots), v->boundary, v->closure_eps,
                            v->fixed_level);
      }
      case ValKind::Prim: {
        std::vector<P> ps;
        for (const auto& k : v->kids) ps.push_back(zero_of(k));
        return V::prim_v(v->op, std::move(ps));
      }
      case ValKind::TStack: {
        std::vector<P> ks;
        for (const auto& k : v->kids) ks.push_back(zero_of(k));
        return V::tstack_v(std::move(ks));
      }
    }
    err("zero: unreachable");
  }

  // Tangent-space addition. Tag-promoting: an operand untagged at the
  // operating level is a constant there (zero tangent).
  P plus(const P& x, const P& y) {
    check_stamped(x);
    check_stamped(y);
    int e = std::max(tag_level(x), tag_level(y));
    if (e > 0) {
      ValKind k = tag_level(x) == e ? x->kind : y->kind;
      if (tag_level(x) == e && tag_level(y) == e && x->kind != y->kind)
        err("tangent addition: mixed forward/reverse tags at level " +
            std::to_string(e));
      if (k == ValKind::Bundle) {
        P px = tag_level(x) == e ? x->a : x, tx = tag_level(x) == e ? x->d : zero_of(x);
        P py = tag_level(y) == e ? y->a : y, ty = tag_level(y) == e ? y->d : zero_of(y);
        return V::bundle_v(e, plus(px, py), plus(tx, ty));
      }
      P ix = tag_level(x) == e ? x->a : x;
      P iy = tag_level(y) == e ? y->a : y;
      return V::rev_v(e, plus(ix, iy));
    }
    if (x->kind != y->kind) {
      if (x->kind == ValKind::TStack || y->kind == ValKind::TStack) {
        const P& st = x->kind == ValKind::TStack ? x : y;
        const P& sc = x->kind == ValKind::TStack ? y : x;
        std::vector<P> ks;
        for (const auto& k : st->kids) ks.push_back(plus(k, sc));
        return V::tstack_v(std::move(ks));
      }
      err("tangent addition: shape mismatch (" +
          shape_to_string(*shape_of<D>(x)) + " vs " +
          shape_to_string(*shape_of<D>(y)) + ")");
    }
    switch (x->kind) {
      case ValKind::Real: return V::real_v(dom.add(x->real, y->real));
      case ValKind::Bool:
      case ValKind::Empty:
        return x;
      case ValKind::Level:
        if (x->level != y->level) err("tangent addition: level mismatch");
        return x;
      case ValKind::Pair:
        return V::pair_v(plus(x->a, y->a), plus(x->d, y->d));
      case ValKind::Closure: {
        if (x->lam != y->lam || x->kids.size() != y->kids.size())
          err("tangent addition: closure mismatch");
        std::vector<P> slots;
        for (size_t i = 0; i < x->kids.size(); ++i)
          slots.push_back(plus(x->kids[i], y->kids[i]));
        return V::closure_v(x->lam, std::move(slots), x->boundary, x->closure_eps,
                            x->fixed_level);
      }
      case ValKind::Prim: {
        if (!(x->op == y->op) || x->kids.size() != y->kids.size())
          err("tangent addition: primitive mismatch");
        std::vector<P> ps;
        for (size_t i = 0; i < x->kids.size(); ++i)
          ps.push_back(plus(x->kids[i], y->kids[i]));
        return V::prim_v(x->op, std::move(ps));
      }
      case ValKind::TStack: {
        if (x->kids.size() != y->kids.size())
          err("tangent addition: stacked tangent width mismatch");
        std::vector<P> ks;
        for (size_t i = 0; i < x->kids.size(); ++i)
          ks.push_back(plus(x->kids[i], y->kids[i]));
        return V::tstack_v(std::move(ks));
      }
      default:
        err("tangent addition: unsupported value");
    }
  }

  // ---- conformance and eager bundling -------------------------------------

  // t conforms to p when both erase to the same skeleton; t may omit tags
  // that p carries (an untagged tangent is a constant at those levels).
  bool conforms(const P& p, const P& t) {
    if (t->kind == ValKind::TStack) {
      for (const auto& k : t->kids)
        if (!conforms(p, k)) return false;
      return true;
    }
    switch (p->kind) {
      case ValKind::Real: return t->kind == ValKind::Real;
      case ValKind::Bool: return t->kind == ValKind::Bool;
      case ValKind::Empty: return t->kind == ValKind::Empty;
      case ValKind::Level: return t->kind == ValKind::Level && t->level == p->level;
      case ValKind::Pair:
        return t->kind == ValKind::Pair && conforms(p->a, t->a) && conforms(p->d, t->d);
      case ValKind::Bundle:
        if (t->kind == ValKind::Bundle && t->level == p->level)
          return conforms(p->a, t->a) && conforms(p->d, t->d);
        return conforms(p->a, t);
      case ValKind::Rev:
        if (t->kind == ValKind::Rev && t->level == p->level)
          return conforms(p->a, t->a);
        return conforms(p->a, t);
      case ValKind::Closure: {
        if (t->kind != ValKind::Closure || t->lam != p->lam ||
            t->kids.size() != p->kids.size())
          return false;
        for (size_t i = 0; i < p->kids.size(); ++i)
          if (!conforms(p->kids[i], t->kids[i])) return false;
        return true;
      }
      case ValKind::Prim: {
        if (t->kind != ValKind::Prim || !(t->op.base == p->op.base) ||
            t->kids.size() != p->kids.size())
          return false;
        for (size_t i = 0; i < p->kids.size(); ++i)
          if (!conforms(p->kids[i], t->kids[i])) return false;
        return true;
      }
      default:
        return false;
    }
  }

  // prim_bundle with an explicit level: pairs recurse, reals become bundle
  // nodes, closures get forward-transformed code with bundled slots.
  P bundle_at(const P& p, const P& t, int eps) {
    check_stamped(p);
    check_stamped(t);
    if (!conforms(p, t))
      err("bundle: tangent shape " + shape_to_string(*shape_of<D>(t)) +
          " does not conform to primal shape " + shape_to_string(*shape_of<D>(p)));
    return bundle_rec(p, t, eps);
  }

  P bundle_rec(const P& p, const P& t, int eps) {
    if (t->kind == ValKind::TStack && p->kind == ValKind::Pair) {
      // Transpose the stack through the pair so pairs stay visible.
      std::vector<P> as, ds;
      for (const auto& k : t->kids) {
        as.push_back(k->a);
        ds.push_back(k->d);
      }
      return V::pair_v(bundle_rec(p->a, V::tstack_v(std::move(as)), eps),
                       bundle_rec(p->d, V::tstack_v(std::move(ds)), eps));
    }
    switch (p->kind) {
      case ValKind::Pair:
        return V::pair_v(bundle_rec(p->a, t->a, eps), bundle_rec(p->d, t->d, eps));
      case ValKind::Bool:
      case ValKind::Empty:
      case ValKind::Level:
        return p;
      case ValKind::Closure: {
        if (p->boundary != Boundary::None)
          err("bundle: cannot bundle a transformed procedure; compose "
              "derivative operators by nesting calls instead");
        int fl = fwd_target_lam(p->lam);
        std::vector<P> slots;
        for (size_t i = 0; i < p->kids.size(); ++i)
          slots.push_back(bundle_rec(p->kids[i], t->kids[i], eps));
        return V::closure_v(fl, std::move(slots), Boundary::Fwd, p->closure_eps, eps);
      }
      case ValKind::Prim: {
        std::vector<P> ps;
        for (size_t i = 0; i < p->kids.size(); ++i)
          ps.push_back(bundle_rec(p->kids[i], t->kids[i], eps));
        PrimOp op = p->op;
        op.gen = true;
        return V::prim_v(op, std::move(ps));
      }
      default:
        // Real, or an already-tagged whole at a deeper level.
        return V::bundle_v(eps, p, t);
    }
  }

  // prim_starj value side: reals (and tagged wholes) get a reverse tag,
  // pairs recurse, closures get reverse-transformed code.
  P starj_at(const P& v, int eps) {
    check_stamped(v);
    switch (v->kind) {
      case ValKind::Pair:
        return V::pair_v(starj_at(v->a, eps), starj_at(v->d, eps));
      case ValKind::Bool:
      case ValKind::Empty:
      case ValKind::Level:
        return v;
      case ValKind::Closure:
        return V::closure_v(rev_target_lam(v->lam), v->kids, Boundary::Rev,
                            v->closure_eps, eps);
      case ValKind::Prim:
        return lift_prim_rev(v);
      case ValKind::TStack:
        err("*j: stacked tangents are forward-mode only");
      default:
        return V::rev_v(eps, v);
    }
  }

  int fwd_target_lam(int lam_id) {
    const LamInfo& li = prog.lam(lam_id);
    if (li.flavor == LamFlavor::Plain) return fwd_lam(prog, lam_id);
    return lam_id; // generic operators make transformed code its own fwd form
  }
  int rev_target_lam(int lam_id) { return rev_lam(prog, lam_id); }

  P lift_prim_rev(const P& v) {
    if (!v->kids.empty())
      err("*j: reverse transform of a partially applied primitive is not "
          "supported");
    int tl = rev_prim_template(prog, v->op);
    return V::closure_v(tl, {});
  }

  // Boundary application support: replace pending tags in the argument.
  P stamp(const P& v, int eps, Boundary mode) {
    switch (v->kind) {
      case ValKind::Pair: {
        P a = stamp(v->a, eps, mode), d = stamp(v->d, eps, mode);
        if (a == v->a && d == v->d) return v;
        return V::pair_v(a, d);
      }
      case ValKind::TStack: {
        std::vector<P> ks;
        bool ch = false;
        for (const auto& k : v->kids) {
          ks.push_back(stamp(k, eps, mode));
          ch |= ks.back() != k;
        }
        return ch ? V::tstack_v(std::move(ks)) : v;
      }
      case ValKind::Bundle:
        if (v->level == 0 && mode == Boundary::Fwd)
          return bundle_at(stamp(v->a, eps, mode), stamp(v->d, eps, mode), eps);
        return v;
      case ValKind::Rev:
        if (v->level == 0 && mode == Boundary::Rev)
          return starj_at(stamp(v->a, eps, mode), eps);
        return v;
      default:
        return v;
    }
  }

  // ---- projections ---------------------------------------------------------

  // Largest outer tag level across pair structure; the level a user-facing
  // primal/tangent extraction operates at.
  static int outer_level(const P& v) {
    switch (v->kind) {
      case ValKind::Pair:
        return std::max(outer_level(v->a), outer_level(v->d));
      case ValKind::Bundle:
      case ValKind::Rev:
        return v->level;
      case ValKind::Closure:
        return v->fixed_level;
      default:
        return 0;
    }
  }

  P primal_at(const P& v, int eps) {
    check_stamped(v);
    switch (v->kind) {
      case ValKind::Pair:
        return V::pair_v(primal_at(v->a, eps), primal_at(v->d, eps));
      case ValKind::Bundle:
      case ValKind::Rev:
        if (v->level == eps) return v->a;
        if (v->level < eps) return v;
        err("primal: level mismatch (outermost tag " + std::to_string(v->level) +
            ", expected " + std::to_string(eps) + ")");
      case ValKind::Closure: {
        if (v->boundary != Boundary::None &&
            (v->fixed_level == eps || v->fixed_level == 0)) {
          int orig = prog.lam(v->lam).orig;
          if (orig < 0) {
            if (v->boundary == Boundary::Fwd && prog.lam(v->lam).flavor != LamFlavor::Plain)
              orig = v->lam; // deferred forward wrap of transformed code
            else
              err("primal: transformed closure has no stored original code");
          }
          std::vector<P> slots;
          for (const auto& k : v->kids) slots.push_back(primal_at(k, eps));
          return V::closure_v(orig, std::move(slots), Boundary::None, v->closure_eps, 0);
        }
        return v;
      }
      case ValKind::Prim: {
        std::vector<P> ps;
        for (const auto& k : v->kids) ps.push_back(primal_at(k, eps));
        return V::prim_v(v->op, std::move(ps));
      }
      default:
        return v;
    }
  }

  P tangent_at(const P& v, int eps) {
    check_stamped(v);
    switch (v->kind) {
      case ValKind::Pair:
        return V::pair_v(tangent_at(v->a, eps), tangent_at(v->d, eps));
      case ValKind::Bundle:
        if (v->level == eps) return v->d;
        if (v->level < eps) return zero_of(v);
        err("tangent: level mismatch (outermost tag " + std::to_string(v->level) +
            ", expected " + std::to_string(eps) + ")");
      case ValKind::Rev:
        if (v->level == eps)
          err("tangent: reverse-tagged value has no tangent component");
        if (v->level > eps) err("tangent: level mismatch");
        return zero_of(v);
      case ValKind::Closure: {
        if (v->boundary == Boundary::Fwd && v->fixed_level == eps) {
          int orig = prog.lam(v->lam).orig;
          if (orig < 0) orig = v->lam;
          std::vector<P> slots;
          for (const auto& k : v->kids) slots.push_back(tangent_at(k, eps));
          return V::closure_v(orig, std::move(slots), Boundary::None, v->closure_eps, 0);
        }
        return zero_of(v);
      }
      default:
        return zero_of(v);
    }
  }

  // ---- generic arithmetic ---------------------------------------------------

  typename D::R scalar(const P& v, const char* who) {
    if (v->kind != ValKind::Real)
      err(std::string(who) + ": expected a real, got " +
          shape_to_string(*shape_of<D>(v)));
    return v->real;
  }

  // Erase every tag, keeping the primal at each level (comparison semantics).
  P strip_all(const P& v) {
    switch (v->kind) {
      case ValKind::Bundle:
      case ValKind::Rev:
        check_stamped(v);
        return strip_all(v->a);
      case ValKind::Pair:
        return V::pair_v(strip_all(v->a), strip_all(v->d));
      default:
        return v;
    }
  }

  P gen1(PrimBase op, const P& x) {
    check_stamped(x);
    if (x->kind == ValKind::Bundle) {
      int e = x->level;
      const P& p = x->a;
      const P& t = x->d;
      P rp, rt;
      switch (op) {
        case PrimBase::Sqrt:
          rp = gen1(op, p);
          rt = tan_map(t, [&](const P& ti) {
            return gen2(PrimBase::Div, ti,
                        gen2(PrimBase::Mul, V::real_v(dom.lift(2.0)), rp));
          });
          break;
        case PrimBase::Exp:
          rp = gen1(op, p);
          rt = tan_map(t, [&](const P& ti) { return gen2(PrimBase::Mul, ti, rp); });
          break;
        case PrimBase::Log:
          rp = gen1(op, p);
          rt = tan_map(t, [&](const P& ti) { return gen2(PrimBase::Div, ti, p); });
          break;
        case PrimBase::Sin:
          rp = gen1(op, p);
          rt = tan_map(t, [&](const P& ti) {
            return gen2(PrimBase::Mul, ti, gen1(PrimBase::Cos, p));
          });
          break;
        case PrimBase::Cos:
          rp = gen1(op, p);
          rt = tan_map(t, [&](const P& ti) {
            return gen2(PrimBase::Sub, V::real_v(dom.lift(0.0)),
                        gen2(PrimBase::Mul, ti, gen1(PrimBase::Sin, p)));
          });
          break;
        default:
          err("gen1: unexpected operator");
      }
      return V::bundle_v(e, rp, rt);
    }
    if (x->kind == ValKind::Rev)
      return V::rev_v(x->level, gen1(op, x->a));
    typename D::R a = scalar(x, prim_name({op, false, 0}).c_str());
    switch (op) {
      case PrimBase::Sqrt: return V::real_v(dom.sqrt_(a));
      case PrimBase::Exp: return V::real_v(dom.exp_(a));
      case PrimBase::Log: return V::real_v(dom.log_(a));
      case PrimBase::Sin: return V::real_v(dom.sin_(a));
      case PrimBase::Cos: return V::real_v(dom.cos_(a));
      default: err("gen1: unexpected operator");
    }
  }

  // Applies f to each stacked tangent, or directly when not stacked.
  template <class F>
  P tan_map(const P& t, F f) {
    if (t->kind != ValKind::TStack) return f(t);
    std::vector<P> ks;
    for (const auto& k : t->kids) ks.push_back(f(k));
    return V::tstack_v(std::move(ks));
  }

  template <class F>
  P tan_map2(const P& tx, const P& ty, F f) {
    bool sx = tx->kind == ValKind::TStack, sy = ty->kind == ValKind::TStack;
    if (!sx && !sy) return f(tx, ty);
    size_t n = sx ? tx->kids.size() : ty->kids.size();
    if (sx && sy && tx->kids.size() != ty->kids.size())
      err("stacked tangent width mismatch");
    std::vector<P> ks;
    for (size_t i = 0; i < n; ++i)
      ks.push_back(f(sx ? tx->kids[i] : tx, sy ? ty->kids[i] : ty));
    return V::tstack_v(std::move(ks));
  }

  P gen2(PrimBase op, const P& x, const P& y) {
    check_stamped(x);
    check_stamped(y);
    int ex = tag_level(x), ey = tag_level(y);
    int e = std::max(ex, ey);
    if (e > 0) {
      ValKind k = ex == ey ? x->kind : (ex > ey ? x->kind : y->kind);
      if (ex == ey && x->kind != y->kind)
        err("mixed forward/reverse tags at level " + std::to_string(e));
      if (k == ValKind::Bundle) {
        P px = ex == e ? x->a : x, tx = ex == e ? x->d : zero_of(x);
        P py = ey == e ? y->a : y, ty = ey == e ? y->d : zero_of(y);
        P rp, rt;
        switch (op) {
          case PrimBase::Add:
            rp = gen2(op, px, py);
            rt = tan_map2(tx, ty, [&](const P& a, const P& b) { return gen2(op, a, b); });
            break;
          case PrimBase::Sub:
            rp = gen2(op, px, py);
            rt = tan_map2(tx, ty, [&](const P& a, const P& b) { return gen2(op, a, b); });
            break;
          case PrimBase::Mul:
            rp = gen2(op, px, py);
            rt = tan_map2(tx, ty, [&](const P& a, const P& b) {
              return gen2(PrimBase::Add, gen2(PrimBase::Mul, a, py),
                          gen2(PrimBase::Mul, px, b));
            });
            break;
          case PrimBase::Div: {
            rp = gen2(op, px, py);
            rt = tan_map2(tx, ty, [&](const P& a, const P& b) {
              // (ta - q*tb) / pb
              return gen2(PrimBase::Div,
                          gen2(PrimBase::Sub, a, gen2(PrimBase::Mul, rp, b)), py);
            });
            break;
          }
          case PrimBase::Atan2: {
            rp = gen2(op, px, py);
            P denom = gen2(PrimBase::Add, gen2(PrimBase::Mul, px, px),
                           gen2(PrimBase::Mul, py, py));
            rt = tan_map2(tx, ty, [&](const P& a, const P& b) {
              // (x*ty' - y*tx')/ (y^2+x^2) with (y=px, x=py) per atan2(y,x)
              return gen2(PrimBase::Div,
                          gen2(PrimBase::Sub, gen2(PrimBase::Mul, py, a),
                               gen2(PrimBase::Mul, px, b)),
                          denom);
            });
            break;
          }
          default: err("gen2: unexpected operator");
        }
        return V::bundle_v(e, rp, rt);
      }
      // Reverse tags are transparent to arithmetic; the surrounding
      // backpropagator-passing code tracks the adjoints.
      P ix = ex == e ? x->a : x;
      P iy = ey == e ? y->a : y;
      return V::rev_v(e, gen2(op, ix, iy));
    }
    typename D::R a = scalar(x, prim_name({op, false, 0}).c_str());
    typename D::R b = scalar(y, prim_name({op, false, 0}).c_str());
    switch (op) {
      case PrimBase::Add: return V::real_v(dom.add(a, b));
      case PrimBase::Sub: return V::real_v(dom.sub(a, b));
      case PrimBase::Mul: return V::real_v(dom.mul(a, b));
      case PrimBase::Div: return V::real_v(dom.div(a, b));
      case PrimBase::Atan2: return V::real_v(dom.atan2_(a, b));
      default: err("gen2: unexpected operator");
    }
  }

  P gen_cmp(PrimBase op, const P& x, const P& y) {
    P sx = strip_all(x), sy = strip_all(y);
    typename D::R a = scalar(sx, "comparison");
    typename D::R b = scalar(sy, "comparison");
    return V::bool_v(op == PrimBase::Lt ? dom.lt(a, b) : dom.eq(a, b));
  }

  // ---- sensitivity helpers (reverse protocol) ------------------------------

  P rev_untag(const P& v) {
    int e = max_rev_level<D>(v);
    return e > 0 ? strip_rev<D>(v, e) : v;
  }

  P sens_zero(const P& v) { return zero_of(rev_untag(v)); }

  P sens_primal(const P& v) {
    switch (v->kind) {
      case ValKind::Pair:
        return V::pair_v(sens_primal(v->a), sens_primal(v->d));
      case ValKind::Bundle:
        return v->a;
      default:
        return v;
    }
  }

  P sens_tangent(const P& v) {
    switch (v->kind) {
      case ValKind::Pair:
        return V::pair_v(sens_tangent(v->a), sens_tangent(v->d));
      case ValKind::Bundle:
        return v->d;
      default:
        return zero_of(v);
    }
  }

  // Bundle-shaped sensitivity with the given primal part and zero tangent,
  // mirroring the tag structure of v.
  P sens_bundle_p(const P& ph, const P& v) {
    switch (v->kind) {
      case ValKind::Pair:
        return V::pair_v(sens_bundle_p(ph->kind == ValKind::Pair ? ph->a : ph, v->a),
                         sens_bundle_p(ph->kind == ValKind::Pair ? ph->d : ph, v->d));
      case ValKind::Bundle:
        return V::bundle_v(v->level, ph, sens_zero(v->d));
      default:
        return ph;
    }
  }

  P sens_bundle_t(const P& th, const P& v) {
    switch (v->kind) {
      case ValKind::Pair:
        return V::pair_v(sens_bundle_t(th->kind == ValKind::Pair ? th->a : th, v->a),
                         sens_bundle_t(th->kind == ValKind::Pair ? th->d : th, v->d));
      case ValKind::Bundle:
        return V::bundle_v(v->level, sens_zero(v->a), th);
      default:
        return th;
    }
  }

  // ---- primitive application -----------------------------------------------

  int level_arg(const P& v, const char* who) {
    if (v->kind != ValKind::Level) err(std::string(who) + ": expected a level");
    return v->level;
  }

  int index_arg(const P& v, const char* who) {
    if (v->kind != ValKind::Real || !D::known(v->real))
      err(std::string(who) + ": expected a constant index");
    double d = D::value(v->real);
    return static_cast<int>(d);
  }

  // Full-arity primitive application. Closure application is the caller's
  // business (evaluator, analyzer and code generator differ there).
  P apply_prim(PrimOp op, const std::vector<P>& a) {
    switch (op.base) {
      case PrimBase::Add: case PrimBase::Sub: case PrimBase::Mul:
      case PrimBase::Div: case PrimBase::Atan2:
        if (!op.gen) require_plain(a[0]), require_plain(a[1]);
        return gen2(op.base, a[0], a[1]);
      case PrimBase::Sqrt: case PrimBase::Exp: case PrimBase::Log:
      case PrimBase::Sin: case PrimBase::Cos:
        if (!op.gen) require_plain(a[0]);
        return gen1(op.base, a[0]);
      case PrimBase::NumEq: case PrimBase::Lt:
        return gen_cmp(op.base, a[0], a[1]);
      case PrimBase::Car:
        if (a[0]->kind != ValKind::Pair) err("car: not a pair");
        return a[0]->a;
      case PrimBase::Cdr:
        if (a[0]->kind != ValKind::Pair) err("cdr: not a pair");
        return a[0]->d;
      case PrimBase::IsReal: {
        P s = strip_all(a[0]);
        return V::bool_v(dom.lift_bool(s->kind == ValKind::Real));
      }
      case PrimBase::IsPair:
        return V::bool_v(dom.lift_bool(a[0]->kind == ValKind::Pair));
      case PrimBase::IsProcedure:
        return V::bool_v(dom.lift_bool(a[0]->kind == ValKind::Closure ||
                                       a[0]->kind == ValKind::Prim));
      case PrimBase::Jstar:
        return user_jstar(a[0]);
      case PrimBase::StarJ:
        return user_starj(a[0]);
      case PrimBase::Bundle:
        return V::bundle_v(0, a[0], a[1]); // pending until stamped
      case PrimBase::Primal: {
        int e = outer_level(a[0]);
        if (e == 0) err("primal: value carries no tag");
        return primal_at(a[0], e);
      }
      case PrimBase::Tangent: {
        int e = outer_level(a[0]);
        if (e == 0) err("tangent: value carries no tag");
        return tangent_at(a[0], e);
      }
      case PrimBase::Zero:
        return zero_of(a[0]);
      case PrimBase::MkBundle:
        return bundle_at(a[0], a[1], level_arg(a[2], "mkbundle"));
      case PrimBase::Plus:
        return plus(a[0], a[1]);
      case PrimBase::SensZero:
        return sens_zero(a[0]);
      case PrimBase::ClSlot: {
        int i = index_arg(a[0], "cl-slot");
        const P& c = a[1];
        if (c->kind != ValKind::Closure && c->kind != ValKind::Prim)
          err("cl-slot: not a closure-shaped sensitivity");
        if (i < 0 || static_cast<size_t>(i) >= c->kids.size())
          err("cl-slot: index out of range");
        return c->kids[static_cast<size_t>(i)];
      }
      case PrimBase::ClMake: {
        std::vector<P> slots;
        P rest = a[1];
        while (rest->kind == ValKind::Pair) {
          slots.push_back(rest->a);
          rest = rest->d;
        }
        if (a[0]->kind == ValKind::Closure)
          return V::closure_v(a[0]->lam, std::move(slots));
        return V::closure_v(index_arg(a[0], "cl-make"), std::move(slots));
      }
      case PrimBase::ClUnslot: {
        int i = index_arg(a[0], "cl-unslot");
        const P& c = a[2];
        if (c->kind != ValKind::Closure) err("cl-unslot: not a closure");
        std::vector<P> slots;
        for (size_t j = 0; j < c->kids.size(); ++j)
          slots.push_back(static_cast<int>(j) == i ? a[1] : sens_zero(c->kids[j]));
        return V::closure_v(c->lam, std::move(slots));
      }
      case PrimBase::ClUnmake: {
        const P& c = a[0];
        if (c->kind != ValKind::Closure) err("cl-unmake: not a closure");
        P list = V::empty_v();
        for (size_t j = c->kids.size(); j-- > 0;)
          list = V::pair_v(c->kids[j], list);
        return list;
      }
      case PrimBase::ClRetarget: {
        if (a[1]->kind != ValKind::Closure || a[0]->kind != ValKind::Closure)
          return a[0];
        if (a[0]->kids.size() != a[1]->kids.size())
          err("cl-retarget: slot count mismatch");
        return V::closure_v(a[1]->lam, a[0]->kids, a[1]->boundary,
                            a[1]->closure_eps, a[1]->fixed_level);
      }
      case PrimBase::SensPrimal: return sens_primal(a[0]);
      case PrimBase::SensTangent: return sens_tangent(a[0]);
      case PrimBase::SensBundleP: return sens_bundle_p(a[0], a[1]);
      case PrimBase::SensBundleT: return sens_bundle_t(a[0], a[1]);
      case PrimBase::RevUntag: return rev_untag(a[0]);
      case PrimBase::Lift: return lift_fwd(a[0], level_arg(a[1], "lift"));
      case PrimBase::RevLift: return lift_rev(a[0]);
      case PrimBase::TStackOf: {
        std::vector<P> ks;
        P rest = a[0];
        while (rest->kind == ValKind::Pair) {
          ks.push_back(rest->a);
          rest = rest->d;
        }
        if (ks.empty()) err("tstack: empty tangent stack");
        return V::tstack_v(std::move(ks));
      }
      case PrimBase::TStackToList: {
        const P& s = a[0];
        if (s->kind != ValKind::TStack) err("tstack-list: not a stacked tangent");
        P list = V::empty_v();
        for (size_t j = s->kids.size(); j-- > 0;)
          list = V::pair_v(s->kids[j], list);
        return list;
      }
    }
    err("unknown primitive application");
  }

  void require_plain(const P& v) {
    if (is_tag(v))
      err("arithmetic on a tagged value outside transformed code");
  }

  P user_jstar(const P& v) {
    check_stamped(v);
    switch (v->kind) {
      case ValKind::Closure: {
        if (v->boundary != Boundary::None)
          err("j*: cannot re-transform a transformed procedure; compose "
              "derivative operators by nesting calls instead");
        return V::closure_v(fwd_target_lam(v->lam), v->kids, Boundary::Fwd,
                            v->closure_eps, 0);
      }
      case ValKind::Prim: {
        PrimOp op = v->op;
        op.gen = true;
        return V::prim_v(op, v->kids);
      }
      default:
        return V::bundle_v(0, v, zero_of(v)); // pending bundle with zero tangent
    }
  }

  P user_starj(const P& v) {
    check_stamped(v);
    if (v->kind == ValKind::Closure) {
      if (v->boundary == Boundary::Rev)
        err("*j: cannot re-transform a reverse procedure; compose derivative "
            "operators by nesting calls instead");
      return V::closure_v(rev_target_lam(v->lam), v->kids, Boundary::Rev,
                          v->closure_eps, 0);
    }
    if (v->kind == ValKind::Prim) return lift_prim_rev(v);
    return V::rev_v(0, v); // pending reverse tag
  }

  P lift_fwd(const P& v, int eps) {
    switch (v->kind) {
      case ValKind::Pair:
        return V::pair_v(lift_fwd(v->a, eps), lift_fwd(v->d, eps));
      case ValKind::Closure: {
        if (v->boundary != Boundary::None) return v;
        int fl = fwd_target_lam(v->lam);
        std::vector<P> slots;
        for (const auto& k : v->kids) slots.push_back(lift_fwd(k, eps));
        return V::closure_v(fl, std::move(slots), Boundary::None, eps, 0);
      }
      case ValKind::Prim: {
        PrimOp op = v->op;
        op.gen = true;
        std::vector<P> ps;
        for (const auto& k : v->kids) ps.push_back(lift_fwd(k, eps));
        return V::prim_v(op, std::move(ps));
      }
      default:
        return v;
    }
  }

  P lift_rev(const P& v) {
    switch (v->kind) {
      case ValKind::Pair:
        return V::pair_v(lift_rev(v->a), lift_rev(v->d));
      case ValKind::Closure: {
        if (prog.lam(v->lam).flavor == LamFlavor::Rev || v->boundary != Boundary::None)
          return v;
        std::vector<P> slots;
        for (const auto& k : v->kids) slots.push_back(lift_rev(k));
        return V::closure_v(rev_lam(prog, v->lam), std::move(slots), Boundary::None,
                            v->closure_eps, 0);
      }
      case ValKind::Prim:
        return lift_prim_rev(v);
      default:
        return v;
    }
  }
};

}  // namespace adlang
