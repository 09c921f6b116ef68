// SPDX-License-Identifier: Apache-2.0
#include "adlang/parser.hpp"

#include <cctype>
#include <cstdlib>
#include <set>
#include <string>
#include <vector>

namespace adlang {

namespace {

// ---------------------------------------------------------------------------
// Reader
// ---------------------------------------------------------------------------

struct Sx {
  enum class K { List, Name, Real, Bool } kind{K::List};
  std::vector<Sx> items;
  std::string name;
  double real{0.0};
  bool boolean{false};
  int line{0}, col{0};
};

bool name_char(char c) {
  if (std::isalnum(static_cast<unsigned char>(c))) return true;
  return std::string_view("!?*+-/<>=._:&^~@").find(c) != std::string_view::npos;
}

struct Reader {
  std::string_view src;
  size_t pos{0};
  int line{1}, col{1};

  [[noreturn]] void err(const std::string& msg) {
    fail(ErrClass::Lex, msg + " at " + std::to_string(line) + ":" + std::to_string(col));
  }

  char peek() const { return pos < src.size() ? src[pos] : '\0'; }

  char advance() {
    char c = src[pos++];
    if (c == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    return c;
  }

  void skip_ws() {
    while (pos < src.size()) {
      char c = peek();
      if (c == ';') {
        while (pos < src.size() && peek() != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        return;
      }
    }
  }

  bool at_end() {
    skip_ws();
    return pos >= src.size();
  }

  Sx read() {
    skip_ws();
    if (pos >= src.size()) err("unexpected end of input");
    Sx out;
    out.line = line;
    out.col = col;
    char c = peek();
    if (c == '(') {
      advance();
      out.kind = Sx::K::List;
      while (true) {
        skip_ws();
        if (pos >= src.size()) err("unterminated list");
        if (peek() == ')') {
          advance();
          return out;
        }
        out.items.push_back(read());
      }
    }
    if (c == ')') err("unexpected `)`");
    if (c == '#') {
      advance();
      char d = pos < src.size() ? advance() : '\0';
      if (d == 't') { out.kind = Sx::K::Bool; out.boolean = true; return out; }
      if (d == 'f') { out.kind = Sx::K::Bool; out.boolean = false; return out; }
      err("bad token `#`");
    }
    std::string tok;
    while (pos < src.size() && name_char(peek())) tok += advance();
    if (tok.empty()) err(std::string("bad character `") + c + "`");
    // A token is a real literal iff strtod consumes it entirely.
    const char* begin = tok.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin + tok.size() && tok != "." && tok != "-" && tok != "+") {
      out.kind = Sx::K::Real;
      out.real = v;
      return out;
    }
    out.kind = Sx::K::Name;
    out.name = tok;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Desugarer
// ---------------------------------------------------------------------------

struct Desugarer {
  Program& p;

  [[noreturn]] void err(const Sx& at, const std::string& msg) {
    fail(ErrClass::Parse,
         msg + " at " + std::to_string(at.line) + ":" + std::to_string(at.col));
  }

  bool is_form(const Sx& sx, const char* head) {
    return sx.kind == Sx::K::List && !sx.items.empty() &&
           sx.items[0].kind == Sx::K::Name && sx.items[0].name == head;
  }

  Sym sym(const std::string& n) { return p.syms().intern(n); }

  const Expr* expr(const Sx& sx) {
    switch (sx.kind) {
      case Sx::K::Real: return p.make_lit_real(sx.real);
      case Sx::K::Bool: return p.make_lit_bool(sx.boolean);
      case Sx::K::Name:
        if (sx.name.find('$') != std::string::npos)
          err(sx, "`$` is reserved in identifiers");
        return p.make_var(sym(sx.name));
      case Sx::K::List: break;
    }
    if (sx.items.empty()) return p.make_lit_empty();
    if (is_form(sx, "lambda")) return lambda_form(sx);
    if (is_form(sx, "if")) {
      if (sx.items.size() != 4) err(sx, "`if` needs 3 subexpressions");
      return p.make_if(expr(sx.items[1]), expr(sx.items[2]), expr(sx.items[3]));
    }
    if (is_form(sx, "cons")) {
      if (sx.items.size() != 3) err(sx, "`cons` needs 2 subexpressions");
      return p.make_cons(expr(sx.items[1]), expr(sx.items[2]));
    }
    if (is_form(sx, "let")) return let_form(sx);
    if (is_form(sx, "let*")) return let_star_form(sx);
    if (is_form(sx, "letrec")) return letrec_form(sx);
    if (is_form(sx, "define")) err(sx, "`define` is only allowed at top level");
    // Application, left-associated over curried operators.
    if (sx.items.size() < 2) err(sx, "application needs an operator and arguments");
    const Expr* acc = expr(sx.items[0]);
    for (size_t i = 1; i < sx.items.size(); ++i)
      acc = p.make_app(acc, expr(sx.items[i]));
    return acc;
  }

  const Expr* lambda_form(const Sx& sx) {
    if (sx.items.size() != 3 || sx.items[1].kind != Sx::K::List)
      err(sx, "`lambda` needs an argument list and one body");
    const auto& args = sx.items[1].items;
    if (args.empty()) err(sx, "`lambda` needs at least one argument");
    return curry_lambda(args, 0, sx.items[2], sx);
  }

  const Expr* curry_lambda(const std::vector<Sx>& args, size_t i, const Sx& body,
                           const Sx& at) {
    if (args[i].kind != Sx::K::Name) err(at, "lambda argument must be a name");
    if (args[i].name.find('$') != std::string::npos)
      err(at, "`$` is reserved in identifiers");
    const Expr* inner = (i + 1 == args.size()) ? expr(body)
                                               : curry_lambda(args, i + 1, body, at);
    return p.make_lam(sym(args[i].name), inner);
  }

  void check_bindings(const Sx& sx) {
    if (sx.items.size() != 3 || sx.items[1].kind != Sx::K::List)
      err(sx, "binding form needs a binding list and one body");
    for (const auto& b : sx.items[1].items)
      if (b.kind != Sx::K::List || b.items.size() != 2 ||
          b.items[0].kind != Sx::K::Name)
        err(sx, "malformed binding");
  }

  const Expr* let_form(const Sx& sx) {
    check_bindings(sx);
    const auto& binds = sx.items[1].items;
    if (binds.empty()) return expr(sx.items[2]);
    // ((lambda (x y ...) body) e1 e2 ...)
    const Expr* fn = nullptr;
    {
      std::vector<Sx> names;
      for (const auto& b : binds) names.push_back(b.items[0]);
      fn = curry_lambda(names, 0, sx.items[2], sx);
    }
    const Expr* acc = fn;
    for (const auto& b : binds) acc = p.make_app(acc, expr(b.items[1]));
    return acc;
  }

  const Expr* let_star_form(const Sx& sx) {
    check_bindings(sx);
    const auto& binds = sx.items[1].items;
    const Expr* body = expr(sx.items[2]);
    for (size_t i = binds.size(); i-- > 0;) {
      const Expr* lam = p.make_lam(sym(binds[i].items[0].name), body);
      body = p.make_app(lam, expr(binds[i].items[1]));
    }
    return body;
  }

  // Applicative-order fixpoint combinator:
  //   Z = (lambda (h) (M M))  with  M = (lambda (x) (h (lambda (v) ((x x) v))))
  const Expr* make_fix(const Expr* h_body_lam) {
    Sym h = sym("$fix-h"), x = sym("$fix-x"), v = sym("$fix-v");
    auto eta = [&]() {
      const Expr* xx = p.make_app(p.make_var(x), p.make_var(x));
      const Expr* call = p.make_app(xx, p.make_var(v));
      return p.make_lam(v, call);
    };
    const Expr* m1 = p.make_lam(x, p.make_app(p.make_var(h), eta()));
    const Expr* m2 = p.make_lam(x, p.make_app(p.make_var(h), eta()));
    const Expr* z = p.make_lam(h, p.make_app(m1, m2));
    return p.make_app(z, h_body_lam);
  }

  const Expr* letrec_form(const Sx& sx) {
    check_bindings(sx);
    const auto& binds = sx.items[1].items;
    if (binds.empty()) return expr(sx.items[2]);
    for (const auto& b : binds)
      if (!is_form(b.items[1], "lambda"))
        err(sx, "`letrec` bindings must be lambda expressions");

    if (binds.size() == 1) {
      Sym f = sym(binds[0].items[0].name);
      const Expr* gen = p.make_lam(f, expr(binds[0].items[1]));
      const Expr* fixed = make_fix(gen);
      const Expr* body = p.make_lam(f, expr(sx.items[2]));
      return p.make_app(body, fixed);
    }

    // Mutual recursion through a single recursive dispatcher indexed by a
    // constant: d(i) evaluates binding i with every name rebound to an
    // eta-expanded (d j) call.
    Sym d = sym("$rec-d"), iv = sym("$rec-i"), vv = sym("$rec-v");
    auto bind_names = [&](const Expr* inner_value) {
      // ((lambda (f1 .. fk) X) w1 .. wk), built as curried applications.
      const Expr* fn = inner_value;
      for (size_t i = binds.size(); i-- > 0;)
        fn = p.make_lam(sym(binds[i].items[0].name), fn);
      const Expr* acc = fn;
      for (size_t i = 0; i < binds.size(); ++i) {
        const Expr* di =
            p.make_app(p.make_var(d), p.make_lit_real(static_cast<double>(i), true));
        const Expr* w = p.make_lam(vv, p.make_app(di, p.make_var(vv)));
        acc = p.make_app(acc, w);
      }
      return acc;
    };
    // Dispatcher body: nested ifs selecting binding i.
    const Expr* dispatch = bind_names(expr(binds.back().items[1]));
    for (size_t i = binds.size() - 1; i-- > 0;) {
      const Expr* test = p.make_app(
          p.make_app(p.make_prim({PrimBase::Lt, false, 0}), p.make_var(iv)),
          p.make_lit_real(static_cast<double>(i) + 0.5, true));
      dispatch = p.make_if(test, bind_names(expr(binds[i].items[1])), dispatch);
    }
    const Expr* gen = p.make_lam(d, p.make_lam(iv, dispatch));
    const Expr* fixed = make_fix(gen);
    const Expr* body = p.make_lam(d, bind_names(expr(sx.items[2])));
    return p.make_app(body, fixed);
  }
};

}  // namespace

static std::unique_ptr<Program> parse_impl(std::string_view text, bool need_entry) {
  auto prog = std::make_unique<Program>();
  Reader rd{text};
  Desugarer ds{*prog};

  std::vector<Sx> forms;
  while (!rd.at_end()) forms.push_back(rd.read());

  std::set<std::string> def_names;
  for (size_t i = 0; i < forms.size(); ++i) {
    const Sx& sx = forms[i];
    if (ds.is_form(sx, "define")) {
      if (sx.items.size() != 3) ds.err(sx, "`define` needs a name and one value");
      Sym name;
      const Expr* value = nullptr;
      if (sx.items[1].kind == Sx::K::Name) {
        name = ds.sym(sx.items[1].name);
        value = ds.expr(sx.items[2]);
      } else if (sx.items[1].kind == Sx::K::List && !sx.items[1].items.empty() &&
                 sx.items[1].items[0].kind == Sx::K::Name) {
        name = ds.sym(sx.items[1].items[0].name);
        std::vector<Sx> args(sx.items[1].items.begin() + 1, sx.items[1].items.end());
        if (args.empty()) ds.err(sx, "`define` procedure form needs arguments");
        value = ds.curry_lambda(args, 0, sx.items[2], sx);
      } else {
        ds.err(sx, "malformed `define`");
      }
      if (!def_names.insert(prog->syms().name(name)).second)
        ds.err(sx, "duplicate definition name `" + prog->syms().name(name) + "`");
      if (value->kind == ExprKind::Lam)
        prog->lam(value->lam).debug_name = name;
      prog->defs().push_back({name, value});
      continue;
    }
    if (i + 1 != forms.size())
      ds.err(sx, "only `define` forms may precede the entry expression");
    prog->set_entry(ds.expr(sx));
  }
  if (need_entry && !prog->entry())
    fail(ErrClass::Parse, "program has no entry expression");
  return prog;
}

std::unique_ptr<Program> parse_program(std::string_view text) {
  return parse_impl(text, true);
}

std::unique_ptr<Program> parse_program_defs_ok(std::string_view text) {
  return parse_impl(text, false);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {
void check_prims(const Program& p, const Expr* e, std::set<int>& labels) {
  if (!labels.insert(e->label).second)
    fail(ErrClass::Validate, "duplicate label " + std::to_string(e->label), e->label);
  switch (e->kind) {
    case ExprKind::Prim: {
      PrimBase b;
      if (e->prim.gen || e->prim.rev_depth != 0 ||
          !prim_lookup(prim_name(e->prim), &b))
        fail(ErrClass::Validate,
             "unknown primitive `" + prim_name(e->prim) + "` (label " +
                 std::to_string(e->label) + ")",
             e->label);
      return;
    }
    case ExprKind::Lam:
      check_prims(p, p.lam(e->lam).body, labels);
      return;
    case ExprKind::App:
    case ExprKind::Cons:
      check_prims(p, e->a, labels);
      check_prims(p, e->b, labels);
      return;
    case ExprKind::If:
      check_prims(p, e->a, labels);
      check_prims(p, e->b, labels);
      check_prims(p, e->c, labels);
      return;
    default:
      return;
  }
}
}  // namespace

void validate(Program& p) {
  std::set<int> labels;
  for (const auto& d : p.defs()) check_prims(p, d.value, labels);
  if (p.entry()) check_prims(p, p.entry(), labels);
  p.resolve_all();
}

}  // namespace adlang
