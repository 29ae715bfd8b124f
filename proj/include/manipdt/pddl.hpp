#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

// STRIPS + flat typing subset of PDDL: parsing, grounding, state transition.
// The exact accepted grammar and the deterministic grounding order are
// documented in docs/pddl-subset.md.
namespace pddl {

struct Error : std::runtime_error {
  enum class Kind {
    Syntax,
    UnsupportedRequirement,
    DuplicateName,
    UnknownPredicate,
    UnknownObject,
    TypeMismatch,
    NegatedGoal,
  };
  Kind kind;
  Error(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct TypedName {
  std::string name;
  std::string type;
};

struct Predicate {
  std::string name;
  std::vector<TypedName> params;
};

// Literal inside a schema body. Args are parameter variables (with '?').
struct Literal {
  bool positive = true;
  std::string pred;
  std::vector<std::string> args;
};

struct ActionSchema {
  std::string name;
  std::vector<TypedName> params;
  std::vector<Literal> precond;
  std::vector<Literal> effect;
};

struct Domain {
  std::string name;
  std::vector<std::string> requirements;
  std::vector<std::string> types;
  std::vector<Predicate> predicates;
  std::vector<ActionSchema> actions;

  const Predicate* find_predicate(const std::string& n) const;
  bool has_type(const std::string& t) const;
};

struct Atom {
  std::string pred;
  std::vector<std::string> args;
  std::string str() const;
  bool operator==(const Atom&) const = default;
};

struct Problem {
  std::string name;
  std::string domain_name;
  std::vector<TypedName> objects;  // declaration order is meaningful (see docs)
  std::vector<Atom> init;
  std::vector<Atom> goal;
};

// Bitset over the grounded atom universe.
struct SymbolicState {
  std::vector<uint64_t> words;
  int n_atoms = 0;

  void resize(int n) {
    n_atoms = n;
    words.assign((size_t(n) + 63) / 64, 0);
  }
  bool get(int i) const { return (words[size_t(i) >> 6] >> (i & 63)) & 1; }
  void set(int i) { words[size_t(i) >> 6] |= (1ull << (i & 63)); }
  void clear(int i) { words[size_t(i) >> 6] &= ~(1ull << (i & 63)); }
  bool operator==(const SymbolicState&) const = default;
};

struct SymbolicStateHash {
  size_t operator()(const SymbolicState& s) const {
    uint64_t h = 1469598103934665603ull;
    for (uint64_t w : s.words) {
      h ^= w;
      h *= 1099511628211ull;
    }
    return size_t(h);
  }
};

struct GroundAction {
  std::string name;  // e.g. "put david bread_slice1 cutting_board"
  int schema_index = 0;
  std::vector<std::string> args;
  std::vector<int> pre_pos, pre_neg, add, del;  // atom ids
};

struct GroundTask {
  Domain domain;
  Problem problem;
  std::vector<Atom> atoms;  // id -> atom, sorted lexicographically by Atom::str
  std::unordered_map<std::string, int> atom_id;
  std::vector<GroundAction> actions;  // deterministic order, see docs
  std::unordered_map<std::string, int> action_id;  // GroundAction::name -> index
  SymbolicState init;
  std::vector<int> goal;

  int atom(const std::string& s) const;  // throws UnknownObject if absent
};

Domain parse_domain(const std::string& text);
Problem parse_problem(const std::string& text, const Domain& domain);
GroundTask ground(const Domain& domain, const Problem& problem);

bool applicable(const GroundAction& a, const SymbolicState& s);
SymbolicState apply(const GroundAction& a, const SymbolicState& s);
bool holds_goal(const GroundTask& t, const SymbolicState& s);

std::string pretty_print(const Domain& d);
std::string pretty_print(const Problem& p);

}  // namespace pddl
