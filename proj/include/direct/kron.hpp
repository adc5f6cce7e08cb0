#pragma once

#include <cstddef>
#include <vector>

#include "direct/numeric.hpp"

namespace direct {

/// One non-unity factor of a Kronecker product: the length-dims[var] vector for variable `var`.
struct Factor {
  std::size_t var = 0;
  std::vector<double> values;

  friend bool operator==(const Factor&, const Factor&) = default;
};

/// Factors sorted by variable index, at most one per variable. Missing variables are all-ones.
using FactorList = std::vector<Factor>;

/// coeff * (kron over j of f_j), with f_j = 1 for variables absent from `factors`.
struct KronTerm {
  double coeff = 1.0;
  FactorList factors;
};

/// A vector of length prod(dims) stored as a sum of Kronecker product terms.
/// The dense ordering has the first variable varying slowest.
class KronSumVec {
 public:
  KronSumVec() = default;
  explicit KronSumVec(std::vector<std::size_t> dims);
  KronSumVec(std::vector<std::size_t> dims, std::vector<KronTerm> terms);

  /// Single all-ones term scaled by `coeff`.
  static KronSumVec ones(std::vector<std::size_t> dims, double coeff = 1.0);

  /// Validates the term against dims and sorts its factors.
  void add_term(KronTerm term);

  [[nodiscard]] const std::vector<std::size_t>& dims() const { return dims_; }
  [[nodiscard]] const std::vector<KronTerm>& terms() const { return terms_; }
  [[nodiscard]] std::size_t num_vars() const { return dims_.size(); }
  /// prod(dims) as a double (it overflows integers long before it matters).
  [[nodiscard]] double dense_size() const;

  [[nodiscard]] KronSumVec scaled(double alpha) const;
  /// Concatenates term lists; dims must match.
  [[nodiscard]] KronSumVec operator+(const KronSumVec& other) const;

 private:
  std::vector<std::size_t> dims_;
  std::vector<KronTerm> terms_;
};

/// <a, k> computed term pair by term pair as a product of per-variable inner products.
double kron_inner(const KronSumVec& a, const KronSumVec& k);

/// Elementwise log of a single positive Kronecker term, returned as a generalized Kronecker sum:
/// one term per variable plus a constant term carrying log(coeff).
KronSumVec kron_log(const KronSumVec& k);

/// Elementwise product; the term count is the product of the operand term counts.
KronSumVec kron_hadamard(const KronSumVec& a, const KronSumVec& k);

inline constexpr double kDefaultDenseCap = 1e6;

/// Explicit length-prod(dims) materialization. Throws SizeError above `cap` entries.
std::vector<double> dense_expand(const KronSumVec& k, double cap = kDefaultDenseCap);

/// Merges terms whose factors are proportional. Dense expansion is unchanged up to rounding;
/// zero terms are dropped and factors that normalize to all-ones become implicit.
KronSumVec kron_compact(const KronSumVec& k);

namespace factors {

/// Product over variables of <fa_j, fb_j>; a missing factor acts as the all-ones vector.
StableProduct inner(const FactorList& fa, const FactorList& fb, const std::vector<std::size_t>& dims,
                    bool force_log = false);

/// Per-variable elementwise product of two factor lists.
FactorList hadamard(const FactorList& fa, const FactorList& fb);

/// Rescales each factor so its largest-magnitude entry is +1 and returns the removed scale.
/// Factors that become all-ones are dropped; a zero factor yields scale 0 and an empty list.
double normalize(FactorList& list);

/// Dense value of the factor product at a multi-index.
double evaluate(const FactorList& list, const std::vector<std::size_t>& index);

/// Lookup by variable; nullptr when the factor is implicit ones.
const Factor* find(const FactorList& list, std::size_t var);

}  // namespace factors

}  // namespace direct
