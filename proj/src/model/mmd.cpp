#include "crowdcate/model/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <fmt/format.h>

namespace crowdcate::model {

namespace {

struct RowView {
  const double* data;
  std::size_t dim;
  const double* row(std::size_t i) const { return data + i * dim; }
};

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return s;
}

double median_bandwidth(RowView rep, const std::vector<std::size_t>& rows) {
  std::vector<double> dists;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      dists.push_back(std::sqrt(sq_dist(rep.row(rows[i]), rep.row(rows[j]), rep.dim)));
    }
  }
  if (dists.empty()) return 1.0;
  std::sort(dists.begin(), dists.end());
  const std::size_t m = dists.size();
  const double med = m % 2 ? dists[m / 2] : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
  return med > 0.0 ? med : 1.0;
}

// Value of squared MMD between two row subsets and, if `grad` is non-null, its gradient
// added (times `scale`) into grad rows.
double mmd_eval(RowView rep, const std::vector<std::size_t>& p, const std::vector<std::size_t>& q,
                const MmdConfig& config, double* grad, double scale) {
  if (p.empty() || q.empty()) throw std::invalid_argument("empirical MMD needs two nonempty samples");
  const std::size_t d = rep.dim;
  const double np = static_cast<double>(p.size()), nq = static_cast<double>(q.size());

  if (config.kernel == MmdKernel::linear) {
    std::vector<double> diff(d, 0.0);
    std::vector<double> mq(d, 0.0);
    for (std::size_t i : p)
      for (std::size_t k = 0; k < d; ++k) diff[k] += rep.row(i)[k];
    for (std::size_t i : q)
      for (std::size_t k = 0; k < d; ++k) mq[k] += rep.row(i)[k];
    double value = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      diff[k] = diff[k] / np - mq[k] / nq;
      value += diff[k] * diff[k];
    }
    if (grad) {
      for (std::size_t i : p)
        for (std::size_t k = 0; k < d; ++k) grad[i * d + k] += scale * 2.0 * diff[k] / np;
      for (std::size_t i : q)
        for (std::size_t k = 0; k < d; ++k) grad[i * d + k] -= scale * 2.0 * diff[k] / nq;
    }
    return value;
  }

  double h = config.bandwidth;
  if (h <= 0.0) {
    std::vector<std::size_t> pooled = p;
    pooled.insert(pooled.end(), q.begin(), q.end());
    h = median_bandwidth(rep, pooled);
  }
  const double inv2h2 = 1.0 / (2.0 * h * h);
  auto kernel_sum = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double s = 0.0;
    for (std::size_t i : a)
      for (std::size_t j : b) s += std::exp(-sq_dist(rep.row(i), rep.row(j), d) * inv2h2);
    return s;
  };
  const double value = kernel_sum(p, p) / (np * np) + kernel_sum(q, q) / (nq * nq) - 2.0 * kernel_sum(p, q) / (np * nq);
  if (grad) {
    // value = sum_a sum_b s_a s_b k(a, b) with s = 1/np on p and -1/nq on q;
    // d k(a, b) / d a = -k(a, b) (a - b) / h^2.
    std::vector<std::size_t> all = p;
    all.insert(all.end(), q.begin(), q.end());
    auto weight = [&](std::size_t idx) { return idx < p.size() ? 1.0 / np : -1.0 / nq; };
    for (std::size_t ia = 0; ia < all.size(); ++ia) {
      const double* a = rep.row(all[ia]);
      double* ga = grad + all[ia] * d;
      for (std::size_t ib = 0; ib < all.size(); ++ib) {
        if (ia == ib) continue;
        const double* b = rep.row(all[ib]);
        const double kab = std::exp(-sq_dist(a, b, d) * inv2h2);
        const double c = scale * 2.0 * weight(ia) * weight(ib) * (-kab) * (2.0 * inv2h2);
        for (std::size_t k = 0; k < d; ++k) ga[k] += c * (a[k] - b[k]);
      }
    }
  }
  return value;
}

std::map<std::size_t, std::vector<std::size_t>> group_rows(const std::vector<std::size_t>& treatments) {
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < treatments.size(); ++i) groups[treatments[i]].push_back(i);
  return groups;
}

RowView view_of(const nn::Tensor& rep) {
  if (rep.rank() != 2) throw nn::ShapeError("representation must be [N, d], got " + nn::shape_string(rep.shape()));
  return {rep.data().data(), rep.dim(1)};
}

}  // namespace

double empirical_mmd(const nn::Tensor& p, const nn::Tensor& q, const MmdConfig& config) {
  if (p.rank() != 2 || q.rank() != 2 || p.dim(1) != q.dim(1)) {
    throw nn::ShapeError(fmt::format("MMD samples must be [n, d] and [m, d], got {} and {}", nn::shape_string(p.shape()),
                                     nn::shape_string(q.shape())));
  }
  const std::size_t n = p.dim(0), m = q.dim(0), d = p.dim(1);
  std::vector<double> pooled(p.data().begin(), p.data().end());
  pooled.insert(pooled.end(), q.data().begin(), q.data().end());
  std::vector<std::size_t> rp(n), rq(m);
  for (std::size_t i = 0; i < n; ++i) rp[i] = i;
  for (std::size_t i = 0; i < m; ++i) rq[i] = n + i;
  return mmd_eval({pooled.data(), d}, rp, rq, config, nullptr, 0.0);
}

nn::Tensor& mmd(nn::Tape& tape, nn::Tensor& rep, const std::vector<std::size_t>& rows_p,
                const std::vector<std::size_t>& rows_q, const MmdConfig& config) {
  const double value = mmd_eval(view_of(rep), rows_p, rows_q, config, nullptr, 0.0);
  nn::Tensor& out = tape.hold(nn::Tensor::scalar(value));
  tape.record([&rep, &out, rows_p, rows_q, config] {
    if (!rep.has_grad()) return;
    mmd_eval(view_of(rep), rows_p, rows_q, config, rep.grad().data(), out.grad()[0]);
  });
  return out;
}

std::size_t modal_treatment(const std::vector<std::size_t>& treatments) {
  if (treatments.empty()) throw std::invalid_argument("modal_treatment of an empty batch");
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t t : treatments) ++counts[t];
  std::size_t best = counts.begin()->first, best_count = 0;
  for (const auto& [t, c] : counts) {
    if (c > best_count) {
      best = t;
      best_count = c;
    }
  }
  return best;
}

namespace {

struct IpmTerms {
  std::vector<std::size_t> control;
  std::vector<std::vector<std::size_t>> others;
};

IpmTerms ipm_terms(const std::vector<std::size_t>& treatments, std::size_t min_group_size) {
  IpmTerms terms;
  if (treatments.size() < 2) return terms;
  const std::size_t control = modal_treatment(treatments);
  auto groups = group_rows(treatments);
  if (groups[control].size() < std::max<std::size_t>(min_group_size, 1)) return terms;
  terms.control = groups[control];
  for (auto& [t, rows] : groups) {
    if (t != control && rows.size() >= std::max<std::size_t>(min_group_size, 1)) terms.others.push_back(rows);
  }
  return terms;
}

}  // namespace

nn::Tensor& batch_ipm_penalty(nn::Tape& tape, nn::Tensor& rep, const std::vector<std::size_t>& treatments,
                              const MmdConfig& config, std::size_t min_group_size) {
  if (rep.rank() != 2 || rep.dim(0) != treatments.size()) {
    throw nn::ShapeError(fmt::format("IPM needs one treatment per representation row ({} rows, {} treatments)",
                                     rep.rank() ? rep.dim(0) : 0, treatments.size()));
  }
  IpmTerms terms = ipm_terms(treatments, min_group_size);
  const RowView view = view_of(rep);
  double total = 0.0;
  for (const auto& g : terms.others) total += mmd_eval(view, terms.control, g, config, nullptr, 0.0);
  nn::Tensor& out = tape.hold(nn::Tensor::scalar(total));
  if (terms.others.empty()) return out;
  tape.record([&rep, &out, terms = std::move(terms), config] {
    if (!rep.has_grad()) return;
    const double g = out.grad()[0];
    for (const auto& other : terms.others) mmd_eval(view_of(rep), terms.control, other, config, rep.grad().data(), g);
  });
  return out;
}

double batch_ipm_value(const nn::Tensor& rep, const std::vector<std::size_t>& treatments, const MmdConfig& config,
                       std::size_t min_group_size) {
  const IpmTerms terms = ipm_terms(treatments, min_group_size);
  const RowView view = view_of(rep);
  double total = 0.0;
  for (const auto& g : terms.others) total += mmd_eval(view, terms.control, g, config, nullptr, 0.0);
  return total;
}

}  // namespace crowdcate::model
