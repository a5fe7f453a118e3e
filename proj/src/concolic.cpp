#include "sparktrace/concolic.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace sparktrace {

// Symbolic expressions -------------------------------------------------------

namespace sym {

namespace {

SymExpr node(SymKind kind, int64_t a = 0, int64_t b = 0, SymExpr l = nullptr, SymExpr r = nullptr) {
  auto n = std::make_shared<SymNode>();
  n->kind = kind;
  n->a = a;
  n->b = b;
  n->l = std::move(l);
  n->r = std::move(r);
  return n;
}

bool is_int_const(const SymExpr &e, int64_t v) { return e->kind == SymKind::ConstInt && e->a == v; }

int64_t apply(SymKind kind, int64_t x, int64_t y) {
  auto ux = static_cast<uint64_t>(x), uy = static_cast<uint64_t>(y);
  switch (kind) {
  case SymKind::Add: return static_cast<int64_t>(ux + uy);
  case SymKind::Sub: return static_cast<int64_t>(ux - uy);
  case SymKind::Mul: return static_cast<int64_t>(ux * uy);
  case SymKind::Div:
    if (y == 0) return 0;
    if (x == std::numeric_limits<int64_t>::min() && y == -1) return x;
    return x / y;
  case SymKind::Mod:
    if (y == 0 || y == -1) return 0;
    return x % y;
  case SymKind::Eq: return x == y;
  case SymKind::Lt: return x < y;
  case SymKind::Le: return x <= y;
  case SymKind::And: return (x != 0) && (y != 0);
  case SymKind::Or: return (x != 0) || (y != 0);
  default: return 0;
  }
}

bool bool_kind(SymKind k) {
  return k == SymKind::ConstBool || k == SymKind::Eq || k == SymKind::Lt || k == SymKind::Le || k == SymKind::Not ||
         k == SymKind::And || k == SymKind::Or;
}

}  // namespace

SymExpr byte(int symbol, int64_t offset) { return node(SymKind::Byte, symbol, offset); }
SymExpr len(int symbol) { return node(SymKind::Len, symbol); }
SymExpr integer(int64_t v) { return node(SymKind::ConstInt, v); }
SymExpr boolean(bool v) { return node(SymKind::ConstBool, v ? 1 : 0); }

bool is_bool(const SymExpr &e) { return bool_kind(e->kind); }
bool is_const(const SymExpr &e) { return e->kind == SymKind::ConstInt || e->kind == SymKind::ConstBool; }

SymExpr negate(const SymExpr &e) { return make(SymKind::Not, e); }

SymExpr truth(const SymExpr &e) {
  if (is_bool(e))
    return e;
  return negate(make(SymKind::Eq, e, integer(0)));
}

SymExpr make(SymKind kind, SymExpr l, SymExpr r) {
  if (kind == SymKind::Not) {
    if (is_const(l))
      return boolean(l->a == 0);
    if (l->kind == SymKind::Not && is_bool(l->l))
      return l->l;
    return node(SymKind::Not, 0, 0, std::move(l));
  }
  bool boolean_result = bool_kind(kind);
  if (is_const(l) && is_const(r)) {
    int64_t v = apply(kind, l->a, r->a);
    return boolean_result ? boolean(v != 0) : integer(v);
  }
  switch (kind) {
  case SymKind::Add:
    if (is_int_const(r, 0)) return l;
    if (is_int_const(l, 0)) return r;
    break;
  case SymKind::Sub:
    if (is_int_const(r, 0)) return l;
    break;
  case SymKind::Mul:
    if (is_int_const(r, 1)) return l;
    if (is_int_const(l, 1)) return r;
    if (is_int_const(r, 0) || is_int_const(l, 0)) return integer(0);
    break;
  case SymKind::Eq:
    if (l == r) return boolean(true);
    if (is_bool(l) && is_const(r)) return r->a == 0 ? negate(l) : (r->a == 1 ? l : boolean(false));
    if (is_bool(r) && is_const(l)) return l->a == 0 ? negate(r) : (l->a == 1 ? r : boolean(false));
    break;
  case SymKind::And:
  case SymKind::Or: {
    bool is_and = kind == SymKind::And;
    for (int side = 0; side < 2; ++side) {
      const SymExpr &c = side ? r : l;
      const SymExpr &o = side ? l : r;
      if (is_const(c))
        return (c->a != 0) == is_and ? truth(o) : boolean(!is_and);
    }
    l = truth(l);
    r = truth(r);
    break;
  }
  default:
    break;
  }
  return node(kind, 0, 0, std::move(l), std::move(r));
}

int64_t eval(const SymExpr &e, const Bindings &model) {
  switch (e->kind) {
  case SymKind::ConstInt:
  case SymKind::ConstBool:
    return e->a;
  case SymKind::Byte: {
    const std::string &s = model.at(static_cast<int>(e->a));
    return e->b >= 0 && e->b < static_cast<int64_t>(s.size()) ? static_cast<unsigned char>(s[e->b]) : 0;
  }
  case SymKind::Len:
    return static_cast<int64_t>(model.at(static_cast<int>(e->a)).size());
  case SymKind::Not:
    return eval(e->l, model) == 0;
  case SymKind::And:
    return eval(e->l, model) != 0 && eval(e->r, model) != 0;
  case SymKind::Or:
    return eval(e->l, model) != 0 || eval(e->r, model) != 0;
  default:
    return apply(e->kind, eval(e->l, model), eval(e->r, model));
  }
}

std::string to_string(const SymExpr &e) {
  static constexpr const char *kOps[] = {"", "", "", "", "+", "-", "*", "/", "%", "==", "<", "<=", "!", "&&", "||"};
  switch (e->kind) {
  case SymKind::ConstInt:
    return std::to_string(e->a);
  case SymKind::ConstBool:
    return e->a ? "true" : "false";
  case SymKind::Byte:
    return "s" + std::to_string(e->a) + "[" + std::to_string(e->b) + "]";
  case SymKind::Len:
    return "len(s" + std::to_string(e->a) + ")";
  case SymKind::Not:
    return "!(" + to_string(e->l) + ")";
  default:
    return "(" + to_string(e->l) + " " + kOps[static_cast<int>(e->kind)] + " " + to_string(e->r) + ")";
  }
}

void collect_vars(const SymExpr &e, std::set<Var> &out) {
  std::vector<const SymNode *> stack{e.get()};
  std::unordered_set<const SymNode *> seen;
  while (!stack.empty()) {
    const SymNode *n = stack.back();
    stack.pop_back();
    if (!n || !seen.insert(n).second)
      continue;
    if (n->kind == SymKind::Byte)
      out.insert({static_cast<int>(n->a), n->b});
    else if (n->kind == SymKind::Len)
      out.insert({static_cast<int>(n->a), -1});
    stack.push_back(n->l.get());
    stack.push_back(n->r.get());
  }
}

}  // namespace sym

uint64_t path_signature(const PathCondition &pc) {
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (const PathEntry &e : pc) {
    mix(static_cast<uint64_t>(e.origin_pc));
    mix(static_cast<uint64_t>(e.target_pc));
    mix(e.taken ? 1 : 2);
  }
  return h;
}

// Symbolic replay ----------------------------------------------------------------

namespace {

class Shadow : public IrObserver {
public:
  explicit Shadow(const IrModule &module, const Bindings &bindings)
      : module_(module), bindings_(bindings), values_(static_cast<std::size_t>(module.value_count)) {}

  void after(const IrInstr &in, std::span<const int64_t> v) override {
    auto shadow = [&](int id) { return values_[static_cast<std::size_t>(id)]; };
    auto operand = [&](int id) {
      const SymExpr &s = values_[static_cast<std::size_t>(id)];
      return s ? s : sym::integer(v[static_cast<std::size_t>(id)]);
    };
    auto set = [&](SymExpr e) {
      if (e && sym::is_const(e))
        e = nullptr;
      values_[static_cast<std::size_t>(in.result)] = std::move(e);
    };
    switch (in.kind) {
    case IrKind::Const:
      set(nullptr);
      break;
    case IrKind::Add:
    case IrKind::Sub:
    case IrKind::Mul:
    case IrKind::Div:
    case IrKind::Mod:
    case IrKind::CmpEq:
    case IrKind::CmpLt:
    case IrKind::CmpLe: {
      if (!shadow(in.args[0]) && !shadow(in.args[1])) {
        set(nullptr);
        break;
      }
      static constexpr SymKind kMap[] = {SymKind::Add, SymKind::Sub, SymKind::Mul, SymKind::Div,
                                         SymKind::Mod, SymKind::Eq,  SymKind::Lt,  SymKind::Le};
      SymKind k = kMap[static_cast<int>(in.kind) - static_cast<int>(IrKind::Add)];
      set(sym::make(k, operand(in.args[0]), operand(in.args[1])));
      break;
    }
    case IrKind::Not:
      set(shadow(in.args[0]) ? sym::negate(sym::truth(operand(in.args[0]))) : nullptr);
      break;
    case IrKind::Select:
      // Concretized on the observed condition.
      set(shadow(v[static_cast<std::size_t>(in.args[0])] ? in.args[1] : in.args[2]));
      break;
    case IrKind::ReadMem8: {
      auto it = memory_.find(v[static_cast<std::size_t>(in.args[0])]);
      set(it == memory_.end() ? nullptr : it->second);
      break;
    }
    case IrKind::WriteMem8: {
      int64_t addr = v[static_cast<std::size_t>(in.args[0])];
      if (SymExpr s = shadow(in.args[1]))
        memory_[addr] = s;
      else
        memory_.erase(addr);
      break;
    }
    case IrKind::MakeSymbolic: {
      int id = static_cast<int>(in.imms[0]);
      int64_t base = in.imms[1], cap = in.imms[2];
      auto n = static_cast<int64_t>(bindings_.at(id).size());
      for (int64_t i = 0; i < cap; ++i) {
        if (i < n)
          memory_[base + i] = sym::byte(id, i);
        else
          memory_.erase(base + i);
      }
      values_[static_cast<std::size_t>(in.result)] = sym::len(id);
      break;
    }
    case IrKind::AssertPathTaken: {
      PathEntry e;
      e.expr = sym::truth(operand(in.args[0]));
      e.taken = v[static_cast<std::size_t>(in.args[0])] != 0;
      e.origin_pc = in.imms[1];
      e.target_pc = in.imms[2];
      path.push_back(std::move(e));
      break;
    }
    case IrKind::LogError:
      break;
    }
  }

  PathCondition path;

private:
  const IrModule &module_;
  const Bindings &bindings_;
  std::vector<SymExpr> values_;
  std::unordered_map<int64_t, SymExpr> memory_;
};

}  // namespace

ReplayResult symbolic_replay(const IrModule &module, const Bindings &bindings) {
  Shadow shadow(module, bindings);
  ReplayResult r;
  r.eval = eval_ir(module, bindings, &shadow);
  if (r.eval.diverged) {
    int k = r.eval.first_failed();
    throw DivergenceError(k, "path assertion " + std::to_string(k) + " does not hold for these bindings");
  }
  r.path = std::move(shadow.path);
  return r;
}

// Solver ---------------------------------------------------------------------------

std::string_view solve_status_name(SolveStatus s) {
  switch (s) {
  case SolveStatus::Sat: return "sat";
  case SolveStatus::Unsat: return "unsat";
  case SolveStatus::Unknown: return "unknown";
  }
  return "?";
}

namespace {

struct BudgetExceeded {};

class ByteSearch {
public:
  ByteSearch(const std::vector<Constraint> &cons, const std::vector<std::vector<int>> &cons_vars,
             const std::vector<sym::Var> &vars, std::vector<std::vector<uint8_t>> domains, Bindings &model,
             int64_t &nodes, int64_t budget)
      : cons_(cons), cons_vars_(cons_vars), vars_(vars), domains_(std::move(domains)), model_(model), nodes_(nodes),
        budget_(budget), assigned_(vars.size(), false), var_cons_(vars.size()) {
    for (std::size_t c = 0; c < cons_vars_.size(); ++c)
      for (int v : cons_vars_[c])
        var_cons_[static_cast<std::size_t>(v)].push_back(static_cast<int>(c));
  }

  bool run() { return search(0); }

private:
  void put(int v, uint8_t b) {
    const sym::Var &var = vars_[static_cast<std::size_t>(v)];
    model_[var.symbol][static_cast<std::size_t>(var.offset)] = static_cast<char>(b);
  }
  bool holds(int c) const { return (sym::eval(cons_[c].expr, model_) != 0) == cons_[c].want; }

  int unassigned_in(int c, int &which) const {
    int n = 0;
    for (int v : cons_vars_[static_cast<std::size_t>(c)])
      if (!assigned_[static_cast<std::size_t>(v)]) {
        ++n;
        which = v;
      }
    return n;
  }

  bool search(std::size_t depth) {
    if (depth == vars_.size())
      return true;
    int pick = -1;
    for (std::size_t v = 0; v < vars_.size(); ++v)
      if (!assigned_[v] && (pick < 0 || domains_[v].size() < domains_[static_cast<std::size_t>(pick)].size()))
        pick = static_cast<int>(v);
    auto p = static_cast<std::size_t>(pick);
    assigned_[p] = true;
    std::vector<uint8_t> domain = domains_[p];
    for (uint8_t b : domain) {
      if (++nodes_ > budget_)
        throw BudgetExceeded{};
      put(pick, b);
      std::vector<std::pair<int, std::vector<uint8_t>>> saved;
      bool ok = true;
      for (int c : var_cons_[p]) {
        int other = -1;
        int n = unassigned_in(c, other);
        if (n == 0) {
          ok = holds(c);
        } else if (n == 1) {
          auto o = static_cast<std::size_t>(other);
          std::vector<uint8_t> kept;
          for (uint8_t x : domains_[o]) {
            put(other, x);
            if (holds(c))
              kept.push_back(x);
          }
          put(other, domains_[o].empty() ? 0 : domains_[o].front());
          saved.emplace_back(other, std::move(domains_[o]));
          domains_[o] = std::move(kept);
          ok = !domains_[o].empty();
        }
        if (!ok)
          break;
      }
      if (ok && search(depth + 1))
        return true;
      for (auto it = saved.rbegin(); it != saved.rend(); ++it)
        domains_[static_cast<std::size_t>(it->first)] = std::move(it->second);
    }
    assigned_[p] = false;
    return false;
  }

  const std::vector<Constraint> &cons_;
  const std::vector<std::vector<int>> &cons_vars_;
  const std::vector<sym::Var> &vars_;
  std::vector<std::vector<uint8_t>> domains_;
  Bindings &model_;
  int64_t &nodes_;
  int64_t budget_;
  std::vector<bool> assigned_;
  std::vector<std::vector<int>> var_cons_;
};

// Fill byte for position i of a solved string: the hint's byte when allowed.
uint8_t fill_byte(const Bindings &hint, int symbol, int64_t i, const std::string &alphabet) {
  auto it = hint.find(symbol);
  if (it != hint.end() && i < static_cast<int64_t>(it->second.size()) &&
      alphabet.find(it->second[static_cast<std::size_t>(i)]) != std::string::npos)
    return static_cast<uint8_t>(it->second[static_cast<std::size_t>(i)]);
  return static_cast<uint8_t>(alphabet.front());
}

bool satisfies(const std::vector<Constraint> &cons, const Bindings &model) {
  for (const Constraint &c : cons)
    if ((sym::eval(c.expr, model) != 0) != c.want)
      return false;
  return true;
}

}  // namespace

SolveResult solve(const std::vector<Constraint> &constraints, const std::set<int> &symbols, const Bindings &hint,
                  const SolverOptions &options) {
  if (options.alphabet.empty())
    throw Error("solver alphabet is empty");
  std::vector<Constraint> live;
  std::vector<std::set<sym::Var>> live_vars;
  std::set<int> involved;
  for (const Constraint &c : constraints) {
    if (sym::is_const(c.expr)) {
      if ((c.expr->a != 0) != c.want)
        return {SolveStatus::Unsat, {}};
      continue;
    }
    std::set<sym::Var> vars;
    sym::collect_vars(c.expr, vars);
    for (const sym::Var &v : vars)
      involved.insert(v.symbol);
    live.push_back(c);
    live_vars.push_back(std::move(vars));
  }

  Bindings base;
  for (int s : symbols) {
    auto it = hint.find(s);
    base[s] = it == hint.end() ? std::string() : it->second;
  }
  for (int s : involved)
    if (!base.count(s))
      base[s] = hint.count(s) ? hint.at(s) : std::string();
  if (live.empty())
    return {SolveStatus::Sat, base};

  // Candidate lengths per involved symbol, nearest to the hint first.
  std::vector<int> syms(involved.begin(), involved.end());
  std::vector<std::vector<int64_t>> lens(syms.size());
  for (std::size_t i = 0; i < syms.size(); ++i) {
    auto h = static_cast<int64_t>(base[syms[i]].size());
    for (int64_t L = 0; L <= options.max_len; ++L)
      lens[i].push_back(L);
    if (h > options.max_len)
      lens[i].push_back(h);
    std::stable_sort(lens[i].begin(), lens[i].end(), [h](int64_t x, int64_t y) {
      return std::llabs(x - h) < std::llabs(y - h) || (std::llabs(x - h) == std::llabs(y - h) && x < y);
    });
  }
  std::vector<std::vector<int64_t>> combos{{}};
  for (std::size_t i = 0; i < syms.size(); ++i) {
    std::vector<std::vector<int64_t>> next;
    for (const auto &c : combos)
      for (int64_t L : lens[i]) {
        auto d = c;
        d.push_back(L);
        next.push_back(std::move(d));
      }
    combos = std::move(next);
  }
  auto distance = [&](const std::vector<int64_t> &c) {
    int64_t d = 0;
    for (std::size_t i = 0; i < c.size(); ++i)
      d += std::llabs(c[i] - static_cast<int64_t>(base[syms[i]].size()));
    return d;
  };
  std::stable_sort(combos.begin(), combos.end(),
                   [&](const auto &x, const auto &y) { return distance(x) < distance(y); });

  int64_t nodes = 0;
  try {
    for (const auto &combo : combos) {
      Bindings model = base;
      for (std::size_t i = 0; i < syms.size(); ++i) {
        std::string s(static_cast<std::size_t>(combo[i]), '\0');
        for (int64_t j = 0; j < combo[i]; ++j)
          s[static_cast<std::size_t>(j)] = static_cast<char>(fill_byte(hint, syms[i], j, options.alphabet));
        model[syms[i]] = std::move(s);
      }
      // Byte variables that exist at these lengths.
      std::map<sym::Var, int> index;
      std::vector<sym::Var> vars;
      std::vector<std::vector<int>> cons_vars(live.size());
      for (std::size_t c = 0; c < live.size(); ++c)
        for (const sym::Var &v : live_vars[c]) {
          if (v.offset < 0 || v.offset >= static_cast<int64_t>(model[v.symbol].size()))
            continue;
          auto [it, fresh] = index.emplace(v, static_cast<int>(vars.size()));
          if (fresh)
            vars.push_back(v);
          cons_vars[c].push_back(it->second);
        }
      bool ok = true;
      std::vector<std::vector<uint8_t>> domains(vars.size());
      for (std::size_t v = 0; v < vars.size(); ++v) {
        uint8_t first = fill_byte(hint, vars[v].symbol, vars[v].offset, options.alphabet);
        domains[v].push_back(first);
        for (char ch : options.alphabet)
          if (static_cast<uint8_t>(ch) != first)
            domains[v].push_back(static_cast<uint8_t>(ch));
      }
      for (std::size_t c = 0; c < live.size() && ok; ++c) {
        if (cons_vars[c].empty()) {
          ok = (sym::eval(live[c].expr, model) != 0) == live[c].want;
        } else if (cons_vars[c].size() == 1) {
          auto v = static_cast<std::size_t>(cons_vars[c][0]);
          std::string &s = model[vars[v].symbol];
          char keep = s[static_cast<std::size_t>(vars[v].offset)];
          std::vector<uint8_t> kept;
          for (uint8_t b : domains[v]) {
            s[static_cast<std::size_t>(vars[v].offset)] = static_cast<char>(b);
            if ((sym::eval(live[c].expr, model) != 0) == live[c].want)
              kept.push_back(b);
          }
          s[static_cast<std::size_t>(vars[v].offset)] = keep;
          domains[v] = std::move(kept);
          ok = !domains[v].empty();
        }
      }
      if (!ok)
        continue;
      ByteSearch search(live, cons_vars, vars, std::move(domains), model, nodes, options.node_budget);
      if (search.run() && satisfies(live, model))
        return {SolveStatus::Sat, std::move(model)};
    }
  } catch (BudgetExceeded &) {
    return {SolveStatus::Unknown, {}};
  }
  return {SolveStatus::Unsat, {}};
}

SolveResult negate_and_solve(const PathCondition &pc, std::size_t k, const std::map<int, SymbolDecl> &decls,
                             const Bindings &hint, const SolverOptions &options) {
  if (k >= pc.size())
    throw Error("negate_and_solve: branch index out of range");
  std::set<int> symbols;
  for (const auto &[id, d] : decls)
    symbols.insert(id);

  std::vector<Constraint> all;
  all.reserve(k + 1);
  for (std::size_t j = 0; j < k; ++j)
    all.push_back({pc[j].expr, pc[j].taken});
  all.push_back({pc[k].expr, !pc[k].taken});

  // Slice: constraints connected to the negated one through shared variables.
  // A length variable connects to every byte of its symbol.
  std::vector<std::set<sym::Var>> vars(all.size());
  for (std::size_t j = 0; j < all.size(); ++j)
    sym::collect_vars(all[j].expr, vars[j]);
  std::set<sym::Var> reach = vars[k];
  std::vector<bool> in(all.size(), false);
  in[k] = true;
  auto touches = [&](const std::set<sym::Var> &vs) {
    for (const sym::Var &v : vs)
      if (reach.count(v) || reach.count({v.symbol, -1}))
        return true;
    return false;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t j = 0; j < k; ++j)
      if (!in[j] && touches(vars[j])) {
        in[j] = true;
        reach.insert(vars[j].begin(), vars[j].end());
        changed = true;
      }
  }
  std::vector<Constraint> slice;
  bool sliced = false;
  for (std::size_t j = 0; j < all.size(); ++j) {
    if (in[j])
      slice.push_back(all[j]);
    else
      sliced = true;
  }
  if (sliced) {
    // Lengths outside the slice stay at the hint's value.
    std::set<int> byte_only;
    for (const sym::Var &v : reach)
      if (v.offset >= 0 && !reach.count({v.symbol, -1}))
        byte_only.insert(v.symbol);
    for (int s : byte_only) {
      auto it = hint.find(s);
      int64_t h = it == hint.end() ? 0 : static_cast<int64_t>(it->second.size());
      slice.push_back({sym::make(SymKind::Eq, sym::len(s), sym::integer(h)), true});
    }
    // Pinned lengths can make the slice unsat when the full set is not.
    SolveResult r = solve(slice, symbols, hint, options);
    if (r.status == SolveStatus::Sat && satisfies(all, r.model))
      return r;
  }
  return solve(all, symbols, hint, options);
}

// Test cases ------------------------------------------------------------------------

namespace {

std::string value_type_name(Tag t) {
  switch (t) {
  case Tag::Int: return "int";
  case Tag::Str: return "string";
  case Tag::Bool: return "bool";
  case Tag::Null: return "null";
  }
  return "null";
}

}  // namespace

std::string test_case_to_json(const TestCase &tc) {
  nlohmann::ordered_json j;
  j["id"] = tc.id;
  j["function"] = tc.function;
  j["generation"] = tc.generation;
  if (tc.provenance == Provenance::RandomSeed)
    j["provenance"] = {{"kind", "RandomSeed"}};
  else
    j["provenance"] = {{"kind", "NegatedBranch"}, {"parent", tc.parent}, {"branch", tc.branch}};
  auto args = nlohmann::ordered_json::array();
  for (const Value &v : tc.args) {
    std::string text;
    switch (v.tag) {
    case Tag::Str: text = percent_encode(v.str); break;
    case Tag::Int: text = std::to_string(v.num); break;
    case Tag::Bool: text = v.num ? "true" : "false"; break;
    case Tag::Null: break;
    }
    args.push_back({{"type", value_type_name(v.tag)}, {"value", text}});
  }
  j["args"] = args;
  return j.dump(2) + "\n";
}

TestCase test_case_from_json(const std::string &text) {
  TestCase tc;
  try {
    auto j = nlohmann::json::parse(text);
    tc.id = j.value("id", 0);
    tc.function = j.value("function", "");
    tc.generation = j.value("generation", 0);
    if (j.contains("provenance") && j["provenance"].value("kind", "RandomSeed") == "NegatedBranch") {
      tc.provenance = Provenance::NegatedBranch;
      tc.parent = j["provenance"].value("parent", -1);
      tc.branch = j["provenance"].value("branch", -1);
    }
    for (const auto &a : j.at("args")) {
      std::string type = a.at("type").get<std::string>();
      std::string value = a.at("value").get<std::string>();
      if (type == "string")
        tc.args.push_back(Value::string(percent_decode(value)));
      else if (type == "int")
        tc.args.push_back(Value::integer(std::stoll(value)));
      else if (type == "bool")
        tc.args.push_back(Value::boolean(value == "true"));
      else if (type == "null")
        tc.args.push_back(Value::null());
      else
        throw Error("unknown argument type '" + type + "'");
    }
  } catch (nlohmann::json::exception &e) {
    throw Error(std::string("bad test case json: ") + e.what());
  } catch (std::invalid_argument &) {
    throw Error("bad integer in test case json");
  }
  return tc;
}

// Generation -----------------------------------------------------------------------

double GenerateReport::mean_iteration_ms() const {
  if (iteration_ms.empty())
    return 0;
  double sum = 0;
  for (double d : iteration_ms)
    sum += d;
  return sum / static_cast<double>(iteration_ms.size());
}

std::string GenerateReport::to_json(bool timing) const {
  nlohmann::ordered_json j;
  j["function"] = function;
  j["iterations"] = iterations;
  j["testCases"] = test_cases.size();
  j["uniquePaths"] = unique_paths;
  auto ex = nlohmann::ordered_json::array();
  for (const ExceptionRecord &e : exceptions)
    ex.push_back({{"kind", outcome_kind_name(e.kind)}, {"message", e.message}, {"span", e.span.str()},
                  {"testCaseId", e.test_case}});
  j["exceptions"] = ex;
  j["divergences"] = divergences;
  j["solverCalls"] = solver_calls;
  j["solverUnknown"] = unknown;
  j["traceOverflows"] = trace_overflows;
  j["meanIterationMs"] = timing ? mean_iteration_ms() : 0.0;
  j["wallTimeMs"] = timing ? wall_time_ms : 0.0;
  return j.dump(2) + "\n";
}

std::set<int> symbolic_params(const ExportInfo &info, const Config &config) {
  std::set<int> out;
  for (int i = 0; i < info.param_count; ++i)
    if (info.param_types[static_cast<std::size_t>(i)] == ParamType::String) {
      out.insert(i);
      if (!config.symbolize_all_strings)
        break;
    }
  return out;
}

std::vector<Value> random_arguments(int param_count, std::mt19937_64 &rng, const Config &config) {
  std::vector<Value> args;
  std::uniform_int_distribution<int> len(0, config.max_seed_len);
  std::uniform_int_distribution<std::size_t> pick(0, config.alphabet.size() - 1);
  for (int i = 0; i < param_count; ++i) {
    std::string s(static_cast<std::size_t>(len(rng)), ' ');
    for (char &c : s)
      c = config.alphabet[pick(rng)];
    args.push_back(Value::string(std::move(s)));
  }
  return args;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

uint64_t fnv(std::string_view s) {
  uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

// (origin, target, ordinal, taken). In-handler guards share their bytecode's pc, so
// the ordinal counts the guards before this one in the same run of that pc.
using Site = std::tuple<int64_t, int64_t, int, bool>;

std::vector<Site> branch_sites(const PathCondition &pc) {
  std::vector<Site> out;
  int ordinal = 0;
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const PathEntry &e = pc[i];
    bool guard = e.origin_pc == e.target_pc;
    ordinal = guard && i > 0 && pc[i - 1].origin_pc == e.origin_pc && pc[i - 1].target_pc == e.origin_pc ? ordinal + 1 : 0;
    out.emplace_back(e.origin_pc, e.target_pc, guard ? ordinal : 0, e.taken);
  }
  return out;
}

struct Pending {
  TestCase tc;
  std::size_t bound = 0;
  bool parent_found_new = false;
  int64_t order = 0;
  // Branch site this case was solved to reach.
  Site direction{};
  // Expected (origin, target, taken) prefix; empty for seeds.
  std::vector<std::tuple<int64_t, int64_t, bool>> expected;
};

}  // namespace

GenerateReport generate(const Program &program, const ExportInfo &info, const Config &config,
                        const std::vector<Value> *seed_args, GenerateArtifacts *artifacts) {
  const BytecodeFunction *fn = program.find(info.name);
  if (!fn)
    throw Error("no function named '" + info.name + "'");
  auto start = Clock::now();
  GenerateReport report;
  report.function = info.name;

  std::set<int> symbolic = symbolic_params(info, config);
  std::mt19937_64 rng(config.rng_seed ^ fnv(info.name));
  TraceOptions topts;
  topts.max_string_len = config.max_string_len;
  topts.op_cap = config.trace_op_cap;
  SolverOptions sopts;
  sopts.alphabet = config.alphabet;
  sopts.max_len = config.max_solve_len;
  sopts.node_budget = config.solver_node_budget;

  std::vector<Pending> queue;
  std::set<Site> directions;
  std::map<int64_t, int> origin_visits;
  // Cases reaching a branch site no run has taken yet go first. The rest are spread across branch sites, then children of runs that
  // found new statements, then by generation.
  auto pop = [&]() {
    auto key = [&](const Pending &p) {
      bool negated = p.tc.provenance == Provenance::NegatedBranch;
      bool fresh = negated && !directions.count(p.direction);
      int visits = negated ? origin_visits[std::get<0>(p.direction)] : 0;
      return std::make_tuple(fresh ? 0 : 1, visits, p.parent_found_new ? 0 : 1, p.tc.generation, p.order);
    };
    auto best = queue.begin();
    for (auto it = queue.begin(); it != queue.end(); ++it)
      if (key(*it) < key(*best))
        best = it;
    Pending p = std::move(*best);
    queue.erase(best);
    return p;
  };
  int64_t order = 0;
  int next_id = 0;
  {
    Pending seed;
    seed.tc.id = next_id++;
    seed.tc.function = info.name;
    seed.tc.args = seed_args ? *seed_args : random_arguments(info.param_count, rng, config);
    if (static_cast<int>(seed.tc.args.size()) != info.param_count)
      throw Error("seed for '" + info.name + "' has the wrong number of arguments");
    queue.push_back(std::move(seed));
  }

  std::unordered_set<uint64_t> paths;
  std::unordered_set<uint64_t> attempted;
  std::set<Span> covered;

  while (!queue.empty() && report.iterations < config.max_iterations &&
         ms_since(start) < static_cast<double>(config.per_function_time_budget_ms)) {
    Pending job = pop();
    if (job.tc.provenance == Provenance::NegatedBranch)
      ++origin_visits[std::get<0>(job.direction)];
    auto iter_start = Clock::now();
    ++report.iterations;
    const TestCase &tc = job.tc;

    MicroTrace raw;
    try {
      raw = baseline_trace(program, *fn, tc.args, symbolic, topts);
    } catch (TraceOverflow &) {
      ++report.trace_overflows;
      report.iteration_ms.push_back(ms_since(iter_start));
      continue;
    }
    MicroTrace extracted = extract_function_instr(raw);
    IrModule module = build_entry(lift(extracted));
    Bindings bindings = bindings_from_trace(extracted);
    ReplayResult replay = symbolic_replay(module, bindings);
    if (!matches_outcome(replay.eval, extracted.outcome))
      throw Error("lifted replay disagrees with the traced outcome for " + info.name);
    if (artifacts) {
      std::string stem = "iter-" + std::to_string(report.iterations - 1);
      artifacts->files.emplace_back(stem + ".raw.trace", dump_trace(raw));
      artifacts->files.emplace_back(stem + ".trace", dump_trace(extracted));
      artifacts->files.emplace_back(stem + ".sir", dump_ir(module));
      artifacts->files.emplace_back(stem + ".tc.json", test_case_to_json(tc));
    }

    const PathCondition &pc = replay.path;
    std::size_t bound = job.bound;
    if (!job.expected.empty()) {
      bool follows = pc.size() >= job.expected.size();
      for (std::size_t i = 0; follows && i < job.expected.size(); ++i)
        follows = std::make_tuple(pc[i].origin_pc, pc[i].target_pc, pc[i].taken) == job.expected[i];
      if (!follows) {
        ++report.divergences;
        bound = 0;
      }
    }
    if (!paths.insert(path_signature(pc)).second) {
      report.iteration_ms.push_back(ms_since(iter_start));
      continue;
    }
    report.test_cases.push_back(tc);
    const ExecOutcome &o = extracted.outcome;
    for (const HandledEvent &h : o.handled)
      report.exceptions.push_back({OutcomeKind::HandledException, h.message, h.throw_span, tc.id});
    if (o.kind == OutcomeKind::UnhandledException)
      report.exceptions.push_back({OutcomeKind::UnhandledException, o.message, o.span, tc.id});

    bool found_new = false;
    std::vector<Site> sites = branch_sites(pc);
    directions.insert(sites.begin(), sites.end());
    for (const DispatchEntry &d : o.dispatch_log) {
      const BytecodeFunction &f = program.at_address(d.pc);
      const Span &s = f.statement_map[static_cast<std::size_t>(d.pc - f.code_base)];
      if (s.valid() && covered.insert(s).second)
        found_new = true;
    }

    // Negate every branch at or after the bound, in order.
    uint64_t prefix = 1469598103934665603ULL;
    auto mix = [](uint64_t h, const PathEntry &e, bool taken) {
      for (uint64_t v : {static_cast<uint64_t>(e.origin_pc), static_cast<uint64_t>(e.target_pc),
                         static_cast<uint64_t>(taken ? 1 : 2)})
        for (int i = 0; i < 8; ++i) {
          h ^= (v >> (8 * i)) & 0xff;
          h *= 1099511628211ULL;
        }
      return h;
    };
    for (std::size_t k = 0; k < pc.size(); ++k) {
      uint64_t flipped = mix(prefix, pc[k], !pc[k].taken);
      prefix = mix(prefix, pc[k], pc[k].taken);
      if (k < bound || sym::is_const(pc[k].expr))
        continue;
      if (!attempted.insert(flipped).second)
        continue;
      if (report.solver_calls >= config.max_solver_calls ||
          ms_since(start) >= static_cast<double>(config.per_function_time_budget_ms))
        break;
      ++report.solver_calls;
      SolveResult r = negate_and_solve(pc, k, module.symbols, bindings, sopts);
      if (r.status == SolveStatus::Unknown)
        ++report.unknown;
      if (r.status != SolveStatus::Sat)
        continue;
      Pending child;
      child.tc.id = next_id++;
      child.tc.function = info.name;
      child.tc.args = tc.args;
      for (const auto &[id, s] : r.model)
        child.tc.args[static_cast<std::size_t>(id)] = Value::string(s);
      child.tc.generation = tc.generation + 1;
      child.tc.provenance = Provenance::NegatedBranch;
      child.tc.parent = tc.id;
      child.tc.branch = static_cast<int>(k);
      child.bound = k + 1;
      child.parent_found_new = found_new;
      child.order = order++;
      for (std::size_t i = 0; i <= k; ++i)
        child.expected.emplace_back(pc[i].origin_pc, pc[i].target_pc, i == k ? !pc[i].taken : pc[i].taken);
      child.direction = sites[k];
      std::get<3>(child.direction) = !pc[k].taken;
      queue.push_back(std::move(child));
    }
    report.iteration_ms.push_back(ms_since(iter_start));
  }
  report.unique_paths = static_cast<int>(paths.size());
  report.wall_time_ms = ms_since(start);
  return report;
}

}  // namespace sparktrace
