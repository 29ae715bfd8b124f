#include "manipdt/pddl.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace pddl {

namespace {

// ---- s-expression layer ----

struct Sexpr {
  // leaf iff children empty and !is_list
  bool is_list = false;
  std::string atom;
  std::vector<Sexpr> children;
  int line = 0;
};

struct Token {
  std::string text;  // "(", ")" or symbol (already lower-cased)
  int line;
};

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> toks;
  int line = 1;
  size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (std::isspace((unsigned char)c)) {
      ++i;
    } else if (c == ';') {
      while (i < text.size() && text[i] != '\n') ++i;
    } else if (c == '(' || c == ')') {
      toks.push_back({std::string(1, c), line});
      ++i;
    } else {
      size_t j = i;
      while (j < text.size() && !std::isspace((unsigned char)text[j]) && text[j] != '(' &&
             text[j] != ')' && text[j] != ';')
        ++j;
      std::string sym = text.substr(i, j - i);
      for (char& ch : sym) ch = char(std::tolower((unsigned char)ch));
      toks.push_back({sym, line});
      i = j;
    }
  }
  return toks;
}

[[noreturn]] void syntax_error(int line, const std::string& what) {
  throw Error(Error::Kind::Syntax, "line " + std::to_string(line) + ": " + what);
}

Sexpr parse_sexpr(const std::vector<Token>& toks, size_t& pos) {
  if (pos >= toks.size()) syntax_error(toks.empty() ? 0 : toks.back().line, "unexpected end of input");
  const Token& t = toks[pos];
  if (t.text == "(") {
    Sexpr e;
    e.is_list = true;
    e.line = t.line;
    ++pos;
    while (pos < toks.size() && toks[pos].text != ")") e.children.push_back(parse_sexpr(toks, pos));
    if (pos >= toks.size()) syntax_error(t.line, "missing ')'");
    ++pos;  // ')'
    return e;
  }
  if (t.text == ")") syntax_error(t.line, "unexpected ')'");
  Sexpr e;
  e.atom = t.text;
  e.line = t.line;
  ++pos;
  return e;
}

Sexpr parse_top(const std::string& text) {
  std::vector<Token> toks = tokenize(text);
  size_t pos = 0;
  Sexpr e = parse_sexpr(toks, pos);
  if (pos != toks.size()) syntax_error(toks[pos].line, "trailing content after top-level form");
  if (!e.is_list) syntax_error(e.line, "expected '(define ...)'");
  return e;
}

const std::string& head(const Sexpr& e) {
  static const std::string empty;
  if (!e.is_list || e.children.empty() || e.children[0].is_list) return empty;
  return e.children[0].atom;
}

// Parse "name+ [- type] name+ [- type] ..." typed lists (objects or ?vars).
std::vector<TypedName> parse_typed_list(const Sexpr& list, size_t start, bool vars, int line) {
  std::vector<TypedName> out;
  std::vector<std::string> pending;
  for (size_t i = start; i < list.children.size(); ++i) {
    const Sexpr& c = list.children[i];
    if (c.is_list) syntax_error(c.line, "unexpected list in typed name list");
    if (c.atom == "-") {
      if (pending.empty()) syntax_error(c.line, "dangling '-' in typed list");
      ++i;
      if (i >= list.children.size() || list.children[i].is_list)
        syntax_error(c.line, "missing type after '-'");
      const std::string& ty = list.children[i].atom;
      for (const std::string& n : pending) out.push_back({n, ty});
      pending.clear();
    } else {
      if (vars && c.atom[0] != '?')
        syntax_error(c.line, "expected variable starting with '?', got '" + c.atom + "'");
      if (!vars && c.atom[0] == '?')
        syntax_error(c.line, "unexpected variable '" + c.atom + "' in object list");
      pending.push_back(c.atom);
    }
  }
  for (const std::string& n : pending) out.push_back({n, "object"});
  (void)line;
  return out;
}

void check_type_declared(const Domain& d, const std::string& ty, int line) {
  if (ty == "object") return;
  if (!d.has_type(ty))
    throw Error(Error::Kind::TypeMismatch,
                "line " + std::to_string(line) + ": undeclared type '" + ty + "'");
}

Literal parse_literal(const Sexpr& e) {
  if (!e.is_list || e.children.empty())
    syntax_error(e.line, "expected literal");
  Literal lit;
  const Sexpr* body = &e;
  if (head(e) == "not") {
    if (e.children.size() != 2 || !e.children[1].is_list)
      syntax_error(e.line, "malformed (not ...)");
    lit.positive = false;
    body = &e.children[1];
  }
  if (body->children.empty() || body->children[0].is_list)
    syntax_error(body->line, "expected predicate name");
  lit.pred = body->children[0].atom;
  for (size_t i = 1; i < body->children.size(); ++i) {
    if (body->children[i].is_list) syntax_error(body->children[i].line, "nested list in literal");
    lit.args.push_back(body->children[i].atom);
  }
  return lit;
}

std::vector<Literal> parse_condition(const Sexpr& e) {
  std::vector<Literal> lits;
  if (head(e) == "and") {
    for (size_t i = 1; i < e.children.size(); ++i) lits.push_back(parse_literal(e.children[i]));
  } else {
    lits.push_back(parse_literal(e));
  }
  return lits;
}

// Validate a schema literal: known predicate, arity, args are declared params
// with compatible types.
void check_schema_literal(const Domain& d, const ActionSchema& schema, const Literal& lit,
                          int line) {
  const Predicate* p = d.find_predicate(lit.pred);
  if (!p)
    throw Error(Error::Kind::UnknownPredicate,
                "line " + std::to_string(line) + ": unknown predicate '" + lit.pred + "'");
  if (p->params.size() != lit.args.size())
    throw Error(Error::Kind::TypeMismatch, "line " + std::to_string(line) + ": predicate '" +
                                               lit.pred + "' expects " +
                                               std::to_string(p->params.size()) + " args");
  for (size_t i = 0; i < lit.args.size(); ++i) {
    const std::string& a = lit.args[i];
    if (a.empty() || a[0] != '?')
      syntax_error(line, "constants are not supported in action bodies ('" + a + "')");
    const TypedName* param = nullptr;
    for (const TypedName& tp : schema.params)
      if (tp.name == a) param = &tp;
    if (!param)
      throw Error(Error::Kind::UnknownObject,
                  "line " + std::to_string(line) + ": variable '" + a + "' is not a parameter");
    const std::string& want = p->params[i].type;
    if (want != "object" && param->type != want)
      throw Error(Error::Kind::TypeMismatch, "line " + std::to_string(line) + ": argument " +
                                                 std::to_string(i + 1) + " of '" + lit.pred +
                                                 "' wants type '" + want + "', variable '" + a +
                                                 "' has type '" + param->type + "'");
  }
}

}  // namespace

const Predicate* Domain::find_predicate(const std::string& n) const {
  for (const Predicate& p : predicates)
    if (p.name == n) return &p;
  return nullptr;
}

bool Domain::has_type(const std::string& t) const {
  return std::find(types.begin(), types.end(), t) != types.end();
}

std::string Atom::str() const {
  std::string s = pred;
  for (const std::string& a : args) {
    s += ' ';
    s += a;
  }
  return s;
}

Domain parse_domain(const std::string& text) {
  Sexpr top = parse_top(text);
  if (head(top) != "define") syntax_error(top.line, "expected (define ...)");
  Domain d;
  bool named = false;
  for (size_t i = 1; i < top.children.size(); ++i) {
    const Sexpr& sec = top.children[i];
    const std::string& h = head(sec);
    if (h == "domain") {
      if (sec.children.size() != 2 || sec.children[1].is_list)
        syntax_error(sec.line, "malformed (domain name)");
      d.name = sec.children[1].atom;
      named = true;
    } else if (h == ":requirements") {
      for (size_t j = 1; j < sec.children.size(); ++j) {
        const std::string& req = sec.children[j].atom;
        if (req != ":strips" && req != ":typing")
          throw Error(Error::Kind::UnsupportedRequirement,
                      "line " + std::to_string(sec.children[j].line) + ": requirement '" + req +
                          "' is outside the supported subset (:strips :typing)");
        d.requirements.push_back(req);
      }
    } else if (h == ":types") {
      for (size_t j = 1; j < sec.children.size(); ++j) {
        if (sec.children[j].is_list) syntax_error(sec.children[j].line, "nested list in :types");
        const std::string& ty = sec.children[j].atom;
        if (ty == "-")
          throw Error(Error::Kind::UnsupportedRequirement,
                      "line " + std::to_string(sec.children[j].line) +
                          ": type hierarchies are not supported (flat :types only)");
        if (d.has_type(ty))
          throw Error(Error::Kind::DuplicateName,
                      "line " + std::to_string(sec.children[j].line) + ": duplicate type '" + ty + "'");
        d.types.push_back(ty);
      }
    } else if (h == ":predicates") {
      for (size_t j = 1; j < sec.children.size(); ++j) {
        const Sexpr& pe = sec.children[j];
        if (!pe.is_list || pe.children.empty() || pe.children[0].is_list)
          syntax_error(pe.line, "malformed predicate declaration");
        Predicate p;
        p.name = pe.children[0].atom;
        if (d.find_predicate(p.name))
          throw Error(Error::Kind::DuplicateName,
                      "line " + std::to_string(pe.line) + ": duplicate predicate '" + p.name + "'");
        p.params = parse_typed_list(pe, 1, /*vars=*/true, pe.line);
        for (const TypedName& tn : p.params) check_type_declared(d, tn.type, pe.line);
        d.predicates.push_back(p);
      }
    } else if (h == ":action") {
      if (sec.children.size() < 2 || sec.children[1].is_list)
        syntax_error(sec.line, "missing action name");
      ActionSchema a;
      a.name = sec.children[1].atom;
      for (const ActionSchema& prev : d.actions)
        if (prev.name == a.name)
          throw Error(Error::Kind::DuplicateName,
                      "line " + std::to_string(sec.line) + ": duplicate action '" + a.name + "'");
      size_t j = 2;
      while (j < sec.children.size()) {
        const std::string& key = sec.children[j].atom;
        if (key == ":parameters") {
          if (j + 1 >= sec.children.size() || !sec.children[j + 1].is_list)
            syntax_error(sec.line, ":parameters needs a list");
          a.params = parse_typed_list(sec.children[j + 1], 0, /*vars=*/true, sec.line);
          for (const TypedName& tn : a.params) {
            check_type_declared(d, tn.type, sec.line);
            int count = 0;
            for (const TypedName& o : a.params)
              if (o.name == tn.name) ++count;
            if (count > 1)
              throw Error(Error::Kind::DuplicateName, "line " + std::to_string(sec.line) +
                                                          ": duplicate parameter '" + tn.name + "'");
          }
          j += 2;
        } else if (key == ":precondition") {
          if (j + 1 >= sec.children.size()) syntax_error(sec.line, ":precondition needs a form");
          a.precond = parse_condition(sec.children[j + 1]);
          j += 2;
        } else if (key == ":effect") {
          if (j + 1 >= sec.children.size()) syntax_error(sec.line, ":effect needs a form");
          a.effect = parse_condition(sec.children[j + 1]);
          j += 2;
        } else {
          syntax_error(sec.children[j].line, "unexpected token '" + key + "' in :action");
        }
      }
      for (const Literal& l : a.precond) check_schema_literal(d, a, l, sec.line);
      for (const Literal& l : a.effect) check_schema_literal(d, a, l, sec.line);
      d.actions.push_back(a);
    } else {
      syntax_error(sec.line, "unsupported domain section '" + h + "'");
    }
  }
  if (!named) syntax_error(top.line, "domain has no name");
  return d;
}

namespace {

const TypedName* find_object(const Problem& p, const std::string& name) {
  for (const TypedName& o : p.objects)
    if (o.name == name) return &o;
  return nullptr;
}

void check_ground_atom(const Domain& d, const Problem& p, const Atom& a, int line) {
  const Predicate* pred = d.find_predicate(a.pred);
  if (!pred)
    throw Error(Error::Kind::UnknownPredicate,
                "line " + std::to_string(line) + ": unknown predicate '" + a.pred + "'");
  if (pred->params.size() != a.args.size())
    throw Error(Error::Kind::TypeMismatch, "line " + std::to_string(line) + ": predicate '" +
                                               a.pred + "' expects " +
                                               std::to_string(pred->params.size()) + " args");
  for (size_t i = 0; i < a.args.size(); ++i) {
    const TypedName* obj = find_object(p, a.args[i]);
    if (!obj)
      throw Error(Error::Kind::UnknownObject,
                  "line " + std::to_string(line) + ": unknown object '" + a.args[i] + "'");
    const std::string& want = pred->params[i].type;
    if (want != "object" && obj->type != want)
      throw Error(Error::Kind::TypeMismatch, "line " + std::to_string(line) + ": argument " +
                                                 std::to_string(i + 1) + " of '" + a.pred +
                                                 "' wants type '" + want + "', object '" +
                                                 a.args[i] + "' has type '" + obj->type + "'");
  }
}

Atom sexpr_to_atom(const Sexpr& e) {
  if (!e.is_list || e.children.empty() || e.children[0].is_list)
    syntax_error(e.line, "expected ground atom");
  Atom a;
  a.pred = e.children[0].atom;
  for (size_t i = 1; i < e.children.size(); ++i) {
    if (e.children[i].is_list) syntax_error(e.children[i].line, "nested list in atom");
    a.args.push_back(e.children[i].atom);
  }
  return a;
}

}  // namespace

Problem parse_problem(const std::string& text, const Domain& domain) {
  Sexpr top = parse_top(text);
  if (head(top) != "define") syntax_error(top.line, "expected (define ...)");
  Problem p;
  for (size_t i = 1; i < top.children.size(); ++i) {
    const Sexpr& sec = top.children[i];
    const std::string& h = head(sec);
    if (h == "problem") {
      if (sec.children.size() != 2 || sec.children[1].is_list)
        syntax_error(sec.line, "malformed (problem name)");
      p.name = sec.children[1].atom;
    } else if (h == ":domain") {
      if (sec.children.size() != 2 || sec.children[1].is_list)
        syntax_error(sec.line, "malformed (:domain name)");
      p.domain_name = sec.children[1].atom;
      if (p.domain_name != domain.name)
        throw Error(Error::Kind::UnknownObject,
                    "line " + std::to_string(sec.line) + ": problem requires domain '" +
                        p.domain_name + "', got '" + domain.name + "'");
    } else if (h == ":objects") {
      p.objects = parse_typed_list(sec, 1, /*vars=*/false, sec.line);
      std::set<std::string> seen;
      for (const TypedName& o : p.objects) {
        check_type_declared(domain, o.type, sec.line);
        if (!seen.insert(o.name).second)
          throw Error(Error::Kind::DuplicateName,
                      "line " + std::to_string(sec.line) + ": duplicate object '" + o.name + "'");
      }
    } else if (h == ":init") {
      for (size_t j = 1; j < sec.children.size(); ++j) {
        if (head(sec.children[j]) == "not")
          throw Error(Error::Kind::UnsupportedRequirement,
                      "line " + std::to_string(sec.children[j].line) +
                          ": negated :init atoms are not supported");
        Atom a = sexpr_to_atom(sec.children[j]);
        check_ground_atom(domain, p, a, sec.children[j].line);
        if (std::find(p.init.begin(), p.init.end(), a) == p.init.end()) p.init.push_back(a);
      }
    } else if (h == ":goal") {
      if (sec.children.size() != 2) syntax_error(sec.line, ":goal needs exactly one form");
      const Sexpr& g = sec.children[1];
      std::vector<const Sexpr*> conjuncts;
      if (head(g) == "and") {
        for (size_t j = 1; j < g.children.size(); ++j) conjuncts.push_back(&g.children[j]);
      } else {
        conjuncts.push_back(&g);
      }
      for (const Sexpr* c : conjuncts) {
        if (head(*c) == "not")
          throw Error(Error::Kind::NegatedGoal,
                      "line " + std::to_string(c->line) + ": negated goal atoms are rejected");
        Atom a = sexpr_to_atom(*c);
        check_ground_atom(domain, p, a, c->line);
        p.goal.push_back(a);
      }
    } else {
      syntax_error(sec.line, "unsupported problem section '" + h + "'");
    }
  }
  if (p.name.empty()) syntax_error(top.line, "problem has no name");
  if (p.domain_name.empty()) syntax_error(top.line, "problem has no (:domain ...)");
  return p;
}

namespace {

// Objects compatible with a parameter type, in problem declaration order.
std::vector<int> candidates_for(const Problem& p, const std::string& type) {
  std::vector<int> out;
  for (size_t i = 0; i < p.objects.size(); ++i)
    if (type == "object" || p.objects[i].type == type) out.push_back(int(i));
  return out;
}

}  // namespace

int GroundTask::atom(const std::string& s) const {
  auto it = atom_id.find(s);
  if (it == atom_id.end())
    throw Error(Error::Kind::UnknownObject, "no such atom in grounded universe: " + s);
  return it->second;
}

GroundTask ground(const Domain& domain, const Problem& problem) {
  GroundTask t;
  t.domain = domain;
  t.problem = problem;

  // Atom universe: every type-consistent instantiation of every predicate,
  // indexed in sorted lexicographic order of the printed atom.
  std::vector<std::string> names;
  for (const Predicate& pred : domain.predicates) {
    std::vector<std::vector<int>> cands;
    for (const TypedName& prm : pred.params) cands.push_back(candidates_for(problem, prm.type));
    std::vector<size_t> idx(pred.params.size(), 0);
    bool any_empty = false;
    for (const auto& c : cands)
      if (c.empty()) any_empty = true;
    if (any_empty && !pred.params.empty()) continue;
    for (;;) {
      Atom a;
      a.pred = pred.name;
      for (size_t k = 0; k < idx.size(); ++k)
        a.args.push_back(problem.objects[size_t(cands[k][idx[k]])].name);
      names.push_back(a.str());
      if (idx.empty()) break;
      size_t k = 0;
      for (;;) {
        if (++idx[k] < cands[k].size()) break;
        idx[k] = 0;
        ++k;
        if (k == idx.size()) { k = SIZE_MAX; break; }
      }
      if (k == SIZE_MAX) break;
    }
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  for (const std::string& s : names) {
    std::istringstream ss(s);
    Atom a;
    ss >> a.pred;
    std::string w;
    while (ss >> w) a.args.push_back(w);
    t.atom_id[s] = int(t.atoms.size());
    t.atoms.push_back(a);
  }

  // Ground actions: schemas in declaration order; within a schema, bindings
  // ordered with the last parameter most significant (objects compared by
  // declaration index). See docs/pddl-subset.md.
  for (size_t si = 0; si < domain.actions.size(); ++si) {
    const ActionSchema& schema = domain.actions[si];
    std::vector<std::vector<int>> cands;
    for (const TypedName& prm : schema.params) cands.push_back(candidates_for(problem, prm.type));
    bool any_empty = false;
    for (const auto& c : cands)
      if (c.empty()) any_empty = true;
    if (any_empty) continue;
    std::vector<size_t> idx(schema.params.size(), 0);
    for (;;) {
      GroundAction ga;
      ga.schema_index = int(si);
      ga.name = schema.name;
      for (size_t k = 0; k < idx.size(); ++k) {
        ga.args.push_back(problem.objects[size_t(cands[k][idx[k]])].name);
        ga.name += ' ';
        ga.name += ga.args.back();
      }
      auto bind = [&](const std::string& var) -> const std::string& {
        for (size_t k = 0; k < schema.params.size(); ++k)
          if (schema.params[k].name == var) return ga.args[k];
        throw Error(Error::Kind::UnknownObject, "unbound variable " + var);
      };
      bool type_ok = true;
      auto lit_atom = [&](const Literal& l) {
        Atom a;
        a.pred = l.pred;
        for (const std::string& v : l.args) a.args.push_back(bind(v));
        return a;
      };
      for (const Literal& l : schema.precond) {
        Atom a = lit_atom(l);
        auto it = t.atom_id.find(a.str());
        if (it == t.atom_id.end()) { type_ok = false; break; }
        (l.positive ? ga.pre_pos : ga.pre_neg).push_back(it->second);
      }
      if (type_ok) {
        for (const Literal& l : schema.effect) {
          Atom a = lit_atom(l);
          auto it = t.atom_id.find(a.str());
          if (it == t.atom_id.end()) { type_ok = false; break; }
          (l.positive ? ga.add : ga.del).push_back(it->second);
        }
      }
      if (type_ok) {
        t.action_id[ga.name] = int(t.actions.size());
        t.actions.push_back(std::move(ga));
      }
      // odometer, FIRST parameter varies fastest (=> last parameter most
      // significant in the resulting order)
      if (idx.empty()) break;
      size_t k = 0;
      for (;;) {
        if (++idx[k] < cands[k].size()) break;
        idx[k] = 0;
        ++k;
        if (k == idx.size()) { k = SIZE_MAX; break; }
      }
      if (k == SIZE_MAX) break;
    }
  }

  t.init.resize(int(t.atoms.size()));
  for (const Atom& a : problem.init) t.init.set(t.atom(a.str()));
  for (const Atom& a : problem.goal) t.goal.push_back(t.atom(a.str()));
  return t;
}

bool applicable(const GroundAction& a, const SymbolicState& s) {
  for (int i : a.pre_pos)
    if (!s.get(i)) return false;
  for (int i : a.pre_neg)
    if (s.get(i)) return false;
  return true;
}

SymbolicState apply(const GroundAction& a, const SymbolicState& s) {
  SymbolicState out = s;
  for (int i : a.del) out.clear(i);
  for (int i : a.add) out.set(i);
  return out;
}

bool holds_goal(const GroundTask& t, const SymbolicState& s) {
  for (int g : t.goal)
    if (!s.get(g)) return false;
  return true;
}

namespace {

void print_typed_list(std::ostringstream& os, const std::vector<TypedName>& list) {
  for (size_t i = 0; i < list.size(); ++i) {
    if (i) os << ' ';
    os << list[i].name << " - " << list[i].type;
  }
}

void print_literal(std::ostringstream& os, const Literal& l) {
  if (!l.positive) os << "(not ";
  os << '(' << l.pred;
  for (const std::string& a : l.args) os << ' ' << a;
  os << ')';
  if (!l.positive) os << ')';
}

void print_condition(std::ostringstream& os, const std::vector<Literal>& ls) {
  os << "(and";
  for (const Literal& l : ls) {
    os << ' ';
    print_literal(os, l);
  }
  os << ')';
}

}  // namespace

std::string pretty_print(const Domain& d) {
  std::ostringstream os;
  os << "(define (domain " << d.name << ")\n";
  if (!d.requirements.empty()) {
    os << "  (:requirements";
    for (const std::string& r : d.requirements) os << ' ' << r;
    os << ")\n";
  }
  if (!d.types.empty()) {
    os << "  (:types";
    for (const std::string& ty : d.types) os << ' ' << ty;
    os << ")\n";
  }
  os << "  (:predicates";
  for (const Predicate& p : d.predicates) {
    os << "\n    (" << p.name;
    if (!p.params.empty()) {
      os << ' ';
      print_typed_list(os, p.params);
    }
    os << ')';
  }
  os << ")\n";
  for (const ActionSchema& a : d.actions) {
    os << "  (:action " << a.name << "\n    :parameters (";
    print_typed_list(os, a.params);
    os << ")\n    :precondition ";
    print_condition(os, a.precond);
    os << "\n    :effect ";
    print_condition(os, a.effect);
    os << ")\n";
  }
  os << ")\n";
  return os.str();
}

std::string pretty_print(const Problem& p) {
  std::ostringstream os;
  os << "(define (problem " << p.name << ")\n  (:domain " << p.domain_name << ")\n  (:objects ";
  print_typed_list(os, p.objects);
  os << ")\n  (:init";
  for (const Atom& a : p.init) os << "\n    (" << a.str() << ')';
  os << ")\n  (:goal (and";
  for (const Atom& a : p.goal) os << "\n    (" << a.str() << ')';
  os << ")))\n";
  return os.str();
}

}  // namespace pddl
