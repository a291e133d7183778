#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwps/family.hpp"

namespace gwps {

/// Ordered rooted tree; a leaf has no children. Size = node count.
struct PlaneTree {
  std::vector<PlaneTree> children;

  bool operator==(const PlaneTree& other) const { return children == other.children; }
};

inline int tree_size(const PlaneTree& a) {
  int n = 1;
  for (const auto& c : a.children) n += tree_size(c);
  return n;
}

/// Outdegree profile k_j(a) = number of nodes with exactly j children,
/// indexed 0..n-1. Always satisfies sum k_j = n and sum j k_j = n - 1.
inline std::vector<int> outdegree_profile(const PlaneTree& a) {
  std::vector<int> k(static_cast<std::size_t>(tree_size(a)), 0);
  const std::function<void(const PlaneTree&)> walk = [&](const PlaneTree& t) {
    ++k[t.children.size()];
    for (const auto& c : t.children) walk(c);
  };
  walk(a);
  return k;
}

/// Canonical balanced-parentheses form: a node is "(" + children + ")", so a
/// single node is "()" and a root with two leaf children is "(()())".
inline std::string to_parens(const PlaneTree& a) {
  std::string out = "(";
  for (const auto& c : a.children) out += to_parens(c);
  out += ")";
  return out;
}

inline PlaneTree parse_parens(const std::string& s) {
  std::size_t pos = 0;
  const std::function<PlaneTree()> parse = [&]() -> PlaneTree {
    if (pos >= s.size() || s[pos] != '(') throw std::invalid_argument("parse_parens: expected '('");
    ++pos;
    PlaneTree t;
    while (pos < s.size() && s[pos] == '(') t.children.push_back(parse());
    if (pos >= s.size() || s[pos] != ')') throw std::invalid_argument("parse_parens: expected ')'");
    ++pos;
    return t;
  };
  PlaneTree t = parse();
  if (pos != s.size()) throw std::invalid_argument("parse_parens: trailing characters");
  return t;
}

/// Enumeration ceiling. Catalan(11) = 58786 trees at n = 12 is where the
/// exact oracle stops being cheap.
inline constexpr int kMaxEnumerationSize = 12;

inline std::uint64_t catalan(int n) {
  // C_0..C_n by the convolution recurrence; exact well past n = 12.
  std::vector<std::uint64_t> c(static_cast<std::size_t>(n) + 1, 0);
  c[0] = 1;
  for (int m = 1; m <= n; ++m)
    for (int i = 0; i < m; ++i) c[m] += c[i] * c[m - 1 - i];
  return c[static_cast<std::size_t>(n)];
}

/// All rooted plane trees with exactly n nodes, each exactly once
/// (count = Catalan(n-1)). Deterministic order: root child-subtree sizes run
/// through the compositions of n-1 in lexicographic order, and within a
/// composition the rightmost child subtree varies fastest.
inline std::vector<PlaneTree> enumerate_plane_trees(int n) {
  if (n < 1) throw std::invalid_argument("enumerate_plane_trees: n must be >= 1");
  if (n > kMaxEnumerationSize)
    throw std::invalid_argument("enumerate_plane_trees: size cap " +
                                std::to_string(kMaxEnumerationSize) + " exceeded");
  std::vector<std::vector<PlaneTree>> by_size(static_cast<std::size_t>(n) + 1);
  by_size[1] = {PlaneTree{}};
  for (int m = 2; m <= n; ++m) {
    std::vector<PlaneTree>& out = by_size[static_cast<std::size_t>(m)];
    // parts: current composition of m-1, built left to right in lex order.
    std::vector<int> parts;
    std::vector<std::size_t> pick;
    const std::function<void(int)> rec = [&](int remaining) {
      if (remaining == 0) {
        // Cartesian product over child lists, rightmost fastest.
        pick.assign(parts.size(), 0);
        while (true) {
          PlaneTree t;
          t.children.reserve(parts.size());
          for (std::size_t i = 0; i < parts.size(); ++i)
            t.children.push_back(by_size[static_cast<std::size_t>(parts[i])][pick[i]]);
          out.push_back(std::move(t));
          std::size_t i = parts.size();
          while (i > 0) {
            --i;
            if (++pick[i] < by_size[static_cast<std::size_t>(parts[i])].size()) break;
            pick[i] = 0;
            if (i == 0) return;
          }
        }
      }
      for (int c = 1; c <= remaining; ++c) {
        parts.push_back(c);
        rec(remaining - c);
        parts.pop_back();
      }
    };
    rec(m - 1);
  }
  return std::move(by_size[static_cast<std::size_t>(n)]);
}

/// omega(a) = prod_j b_j^{k_j(a)} with 0^0 = 1; exact in the rational
/// backend. Zero when the tree uses an outdegree the law forbids.
template <class S>
S tree_weight(const PlaneTree& a, const OffspringSpec<S>& spec) {
  S w(1);
  const std::function<bool(const PlaneTree&)> walk = [&](const PlaneTree& t) {
    const S b = spec.series.at(static_cast<int>(t.children.size()));
    if (b == S(0)) return false;
    w *= b;
    for (const auto& c : t.children)
      if (!walk(c)) return false;
    return true;
  };
  if (!walk(a)) return S(0);
  return w;
}

/// Decidable subclass of plane trees (the R in R_n = sum of omega over
/// R intersect G_n).
struct SubclassPredicate {
  std::string name;
  std::function<bool(const PlaneTree&)> accepts;
};

inline SubclassPredicate pred_all() {
  return {"all", [](const PlaneTree&) { return true; }};
}

inline SubclassPredicate pred_root_outdegree(int j) {
  return {"root-outdegree:" + std::to_string(j),
          [j](const PlaneTree& a) { return static_cast<int>(a.children.size()) == j; }};
}

inline SubclassPredicate pred_max_outdegree(int j) {
  return {"max-outdegree:" + std::to_string(j), [j](const PlaneTree& a) {
            const std::function<bool(const PlaneTree&)> ok = [&](const PlaneTree& t) {
              if (static_cast<int>(t.children.size()) > j) return false;
              for (const auto& c : t.children)
                if (!ok(c)) return false;
              return true;
            };
            return ok(a);
          }};
}

inline SubclassPredicate pred_leaf_count(int k) {
  return {"leaves:" + std::to_string(k), [k](const PlaneTree& a) {
            const std::function<int(const PlaneTree&)> leaves = [&](const PlaneTree& t) -> int {
              if (t.children.empty()) return 1;
              int c = 0;
              for (const auto& ch : t.children) c += leaves(ch);
              return c;
            };
            return leaves(a) == k;
          }};
}

/// Named predicate lookup for the CLI: "all", "root-outdegree:<j>",
/// "max-outdegree:<j>", "leaves:<k>".
inline SubclassPredicate parse_predicate(const std::string& name) {
  if (name == "all") return pred_all();
  const auto colon = name.find(':');
  if (colon != std::string::npos) {
    const std::string head = name.substr(0, colon);
    const int arg = std::stoi(name.substr(colon + 1));
    if (head == "root-outdegree") return pred_root_outdegree(arg);
    if (head == "max-outdegree") return pred_max_outdegree(arg);
    if (head == "leaves") return pred_leaf_count(arg);
  }
  throw std::invalid_argument("unknown subclass predicate '" + name + "'");
}

/// R_n (pred given) or A_n (pred = all): exact weight sum over the
/// enumerated trees of size n.
template <class S>
S sum_weights(int n, const OffspringSpec<S>& spec, const SubclassPredicate& pred = pred_all()) {
  S total(0);
  for (const auto& a : enumerate_plane_trees(n))
    if (pred.accepts(a)) total += tree_weight(a, spec);
  return total;
}

/// P(T_t = a) = omega(a) t^{n-1} / psi(t)^n for a of size n; coincides with
/// the product of Khinchin masses over the outdegree profile.
template <class S>
S tree_probability(const PlaneTree& a, const OffspringSpec<S>& spec, const S& t) {
  detail::check_domain(spec, to_double(t));
  if (!(to_double(t) > 0)) throw std::domain_error("tree_probability: t must be positive");
  const int n = tree_size(a);
  const S w = tree_weight(a, spec);
  if (w == S(0)) return S(0);
  S tpow(1);
  for (int k = 0; k < n - 1; ++k) tpow *= t;
  S ppow(1);
  const S p = spec.series.eval(t);
  for (int k = 0; k < n; ++k) ppow *= p;
  return w * tpow / ppow;
}

}  // namespace gwps
