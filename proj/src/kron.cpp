#include "direct/kron.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "direct/errors.hpp"

namespace direct {

namespace {

void check_same_dims(const KronSumVec& a, const KronSumVec& k) {
  if (a.dims() != k.dims()) throw InvalidInput("kron: operand dims differ");
}

struct FactorListLess {
  bool operator()(const FactorList& a, const FactorList& b) const {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                        [](const Factor& x, const Factor& y) {
                                          if (x.var != y.var) return x.var < y.var;
                                          return x.values < y.values;
                                        });
  }
};

}  // namespace

KronSumVec::KronSumVec(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  for (auto d : dims_) {
    if (d == 0) throw InvalidInput("kron: zero-length factor dimension");
  }
}

KronSumVec::KronSumVec(std::vector<std::size_t> dims, std::vector<KronTerm> terms)
    : KronSumVec(std::move(dims)) {
  terms_.reserve(terms.size());
  for (auto& t : terms) add_term(std::move(t));
}

KronSumVec KronSumVec::ones(std::vector<std::size_t> dims, double coeff) {
  KronSumVec out(std::move(dims));
  out.terms_.push_back(KronTerm{coeff, {}});
  return out;
}

void KronSumVec::add_term(KronTerm term) {
  std::sort(term.factors.begin(), term.factors.end(),
            [](const Factor& a, const Factor& b) { return a.var < b.var; });
  for (std::size_t i = 0; i < term.factors.size(); ++i) {
    const auto& f = term.factors[i];
    if (f.var >= dims_.size()) {
      throw InvalidInput("kron: factor variable " + std::to_string(f.var) + " out of range");
    }
    if (f.values.size() != dims_[f.var]) {
      throw InvalidInput("kron: factor for variable " + std::to_string(f.var) + " has length " +
                         std::to_string(f.values.size()) + ", expected " +
                         std::to_string(dims_[f.var]));
    }
    if (i > 0 && term.factors[i - 1].var == f.var) {
      throw InvalidInput("kron: duplicate factor for variable " + std::to_string(f.var));
    }
  }
  terms_.push_back(std::move(term));
}

double KronSumVec::dense_size() const {
  double s = 1.0;
  for (auto d : dims_) s *= static_cast<double>(d);
  return s;
}

KronSumVec KronSumVec::scaled(double alpha) const {
  KronSumVec out = *this;
  for (auto& t : out.terms_) t.coeff *= alpha;
  return out;
}

KronSumVec KronSumVec::operator+(const KronSumVec& other) const {
  check_same_dims(*this, other);
  KronSumVec out = *this;
  out.terms_.insert(out.terms_.end(), other.terms_.begin(), other.terms_.end());
  return out;
}

namespace factors {

const Factor* find(const FactorList& list, std::size_t var) {
  auto it = std::lower_bound(list.begin(), list.end(), var,
                             [](const Factor& f, std::size_t v) { return f.var < v; });
  if (it == list.end() || it->var != var) return nullptr;
  return &*it;
}

StableProduct inner(const FactorList& fa, const FactorList& fb, const std::vector<std::size_t>& dims,
                    bool force_log) {
  StableProduct prod(force_log);
  std::size_t ia = 0;
  std::size_t ib = 0;
  std::size_t touched = 0;
  auto sum = [](const std::vector<double>& v) {
    long double s = 0;
    for (double x : v) s += x;
    return static_cast<double>(s);
  };
  while (ia < fa.size() || ib < fb.size()) {
    const std::size_t va = ia < fa.size() ? fa[ia].var : SIZE_MAX;
    const std::size_t vb = ib < fb.size() ? fb[ib].var : SIZE_MAX;
    if (va == vb) {
      long double s = 0;
      const auto& x = fa[ia].values;
      const auto& y = fb[ib].values;
      for (std::size_t c = 0; c < x.size(); ++c) s += static_cast<long double>(x[c]) * y[c];
      prod.multiply(static_cast<double>(s));
      ++ia;
      ++ib;
    } else if (va < vb) {
      prod.multiply(sum(fa[ia].values));
      ++ia;
    } else {
      prod.multiply(sum(fb[ib].values));
      ++ib;
    }
    ++touched;
  }
  // Variables absent from both lists contribute their dimension.
  if (touched < dims.size()) {
    std::vector<bool> seen(dims.size(), false);
    for (const auto& f : fa) seen[f.var] = true;
    for (const auto& f : fb) seen[f.var] = true;
    for (std::size_t j = 0; j < dims.size(); ++j) {
      if (!seen[j] && dims[j] != 1) prod.multiply(static_cast<double>(dims[j]));
    }
  }
  return prod;
}

FactorList hadamard(const FactorList& fa, const FactorList& fb) {
  FactorList out;
  out.reserve(fa.size() + fb.size());
  std::size_t ia = 0;
  std::size_t ib = 0;
  while (ia < fa.size() || ib < fb.size()) {
    const std::size_t va = ia < fa.size() ? fa[ia].var : SIZE_MAX;
    const std::size_t vb = ib < fb.size() ? fb[ib].var : SIZE_MAX;
    if (va == vb) {
      Factor f{va, fa[ia].values};
      for (std::size_t c = 0; c < f.values.size(); ++c) f.values[c] *= fb[ib].values[c];
      out.push_back(std::move(f));
      ++ia;
      ++ib;
    } else if (va < vb) {
      out.push_back(fa[ia++]);
    } else {
      out.push_back(fb[ib++]);
    }
  }
  return out;
}

double normalize(FactorList& list) {
  double scale = 1.0;
  FactorList kept;
  kept.reserve(list.size());
  for (auto& f : list) {
    double pivot = 0.0;
    for (double v : f.values) {
      if (std::abs(v) > std::abs(pivot)) pivot = v;
    }
    if (pivot == 0.0) {
      list.clear();
      return 0.0;
    }
    bool all_one = true;
    for (double& v : f.values) {
      v /= pivot;
      all_one = all_one && v == 1.0;
    }
    scale *= pivot;
    if (!all_one) kept.push_back(std::move(f));
  }
  list = std::move(kept);
  return scale;
}

double evaluate(const FactorList& list, const std::vector<std::size_t>& index) {
  double v = 1.0;
  for (const auto& f : list) v *= f.values[index[f.var]];
  return v;
}

}  // namespace factors

double kron_inner(const KronSumVec& a, const KronSumVec& k) {
  check_same_dims(a, k);
  long double total = 0;
  for (const auto& ta : a.terms()) {
    if (ta.coeff == 0.0) continue;
    for (const auto& tk : k.terms()) {
      if (tk.coeff == 0.0) continue;
      auto prod = factors::inner(ta.factors, tk.factors, a.dims());
      prod.multiply(ta.coeff);
      prod.multiply(tk.coeff);
      total += prod.value();
    }
  }
  return static_cast<double>(total);
}

KronSumVec kron_log(const KronSumVec& k) {
  if (k.terms().size() != 1) {
    throw UnsupportedError("kron_log: input must be a single Kronecker term");
  }
  const auto& term = k.terms().front();
  if (!(term.coeff > 0.0)) throw DomainError("kron_log: coefficient must be positive");
  KronSumVec out(k.dims());
  out.add_term(KronTerm{std::log(term.coeff), {}});
  for (std::size_t j = 0; j < k.num_vars(); ++j) {
    std::vector<double> logs(k.dims()[j], 0.0);
    if (const Factor* f = factors::find(term.factors, j)) {
      for (std::size_t c = 0; c < logs.size(); ++c) {
        if (!(f->values[c] > 0.0)) {
          throw DomainError("kron_log: nonpositive entry in factor " + std::to_string(j));
        }
        logs[c] = std::log(f->values[c]);
      }
    }
    out.add_term(KronTerm{1.0, {Factor{j, std::move(logs)}}});
  }
  return out;
}

KronSumVec kron_hadamard(const KronSumVec& a, const KronSumVec& k) {
  check_same_dims(a, k);
  KronSumVec out(a.dims());
  for (const auto& ta : a.terms()) {
    for (const auto& tk : k.terms()) {
      out.add_term(KronTerm{ta.coeff * tk.coeff, factors::hadamard(ta.factors, tk.factors)});
    }
  }
  return out;
}

std::vector<double> dense_expand(const KronSumVec& k, double cap) {
  const double size = k.dense_size();
  if (size > cap) {
    throw SizeError("dense_expand: " + std::to_string(size) + " entries exceeds cap " +
                    std::to_string(cap));
  }
  const auto n = static_cast<std::size_t>(size);
  const auto& dims = k.dims();
  std::vector<double> out(n, 0.0);
  std::vector<std::size_t> index(dims.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    double v = 0.0;
    for (const auto& t : k.terms()) v += t.coeff * factors::evaluate(t.factors, index);
    out[flat] = v;
    // Odometer increment, last variable fastest.
    for (std::size_t j = dims.size(); j-- > 0;) {
      if (++index[j] < dims[j]) break;
      index[j] = 0;
    }
  }
  return out;
}

KronSumVec kron_compact(const KronSumVec& k) {
  std::map<FactorList, std::size_t, FactorListLess> slot;
  std::vector<KronTerm> merged;
  for (const auto& t : k.terms()) {
    if (t.coeff == 0.0) continue;
    FactorList f = t.factors;
    const double scale = factors::normalize(f);
    if (scale == 0.0) continue;
    auto [it, inserted] = slot.try_emplace(f, merged.size());
    if (inserted) {
      merged.push_back(KronTerm{t.coeff * scale, std::move(f)});
    } else {
      merged[it->second].coeff += t.coeff * scale;
    }
  }
  std::vector<KronTerm> kept;
  kept.reserve(merged.size());
  for (auto& t : merged) {
    if (t.coeff != 0.0) kept.push_back(std::move(t));
  }
  return KronSumVec(k.dims(), std::move(kept));
}

}  // namespace direct
