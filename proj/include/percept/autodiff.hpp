#pragma once

// Dense-matrix reverse-mode autodiff on 64-bit floats.
//
// A Tape records primitive applications in execution order (which is a
// topological order by construction) and replays registered backward
// closures in reverse on backward(). Leaf tensors live outside the tape
// (model parameters, input features); intermediates are owned by the tape.
// Gradients of leaves are zeroed the first time a tape touches them, so a
// fresh tape per optimizer step never sees stale gradients.
//
// Primitives: matmul, add (same shape or 1xM row-bias broadcast), scale,
// concat_cols, row_mean, leaky_relu, sigmoid, l2_normalize_rows,
// cosine_similarity_rows, pow, sum, mean, select_rows, replace_rows,
// bce_with_logits. Every forward output is checked finite; NaN/Inf raises
// TrainingDivergence naming the primitive.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <string>
#include <unordered_set>
#include <vector>

#include "percept/errors.hpp"

namespace percept::ad {

struct Tensor {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;
    std::vector<double> grad;  // allocated while participating in a tape
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, bool rg = false)
        : rows(r), cols(c), data(r * c, 0.0), requires_grad(rg) {}

    static Tensor from_row(std::vector<double> v, bool rg = false) {
        Tensor t;
        t.rows = 1;
        t.cols = v.size();
        t.data = std::move(v);
        t.requires_grad = rg;
        return t;
    }
    static Tensor from_rows(std::size_t r, std::size_t c, std::vector<double> v, bool rg = false) {
        Tensor t;
        t.rows = r;
        t.cols = c;
        t.data = std::move(v);
        t.requires_grad = rg;
        if (t.data.size() != r * c) throw ShapeError("from_rows: data length != rows*cols");
        return t;
    }

    std::size_t size() const { return rows * cols; }
    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    void zero_grad() { grad.assign(data.size(), 0.0); }

    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }
};

namespace detail {

inline void check_finite(const Tensor& t, const char* op) {
    for (double v : t.data)
        if (!std::isfinite(v))
            throw TrainingDivergence(std::string("non-finite value in output of '") + op + "'");
}

[[noreturn]] inline void shape_fail(const char* op, const Tensor& a) {
    throw ShapeError(std::string(op) + ": bad shape " + a.shape_str());
}

[[noreturn]] inline void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                     b.shape_str());
}

// C += A * B, contiguous row-major, i-k-j order for cache friendliness.
inline void matmul_acc(const double* a, const double* b, double* c, std::size_t n,
                       std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A^T * B where A is n x k (so C is k x m)
inline void matmul_at_acc(const double* a, const double* b, double* c, std::size_t n,
                          std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A * B^T where B is m x k (so C is n x m)
inline void matmul_bt_acc(const double* a, const double* b, double* c, std::size_t n,
                          std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

}  // namespace detail

class Tape {
public:
    // track_grads=false gives a pure inference tape: parameters are never
    // written to (no grad buffers allocated), so concurrent forward passes
    // over a frozen model are safe.
    explicit Tape(bool track_grads = true) : track_(track_grads) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Copies a constant (no-grad) tensor onto the tape.
    Tensor* constant(Tensor t) {
        t.requires_grad = false;
        store_.push_back(std::move(t));
        return &store_.back();
    }

    Tensor* constant_fill(std::size_t r, std::size_t c, double fill) {
        Tensor t(r, c);
        std::fill(t.data.begin(), t.data.end(), fill);
        return constant(std::move(t));
    }

    Tensor* matmul(Tensor* a, Tensor* b) {
        if (a->cols != b->rows) detail::shape_fail("matmul", *a, *b);
        Tensor* out = fresh(a->rows, b->cols, needs_grad({a, b}));
        detail::matmul_acc(a->data.data(), b->data.data(), out->data.data(), a->rows, a->cols,
                           b->cols);
        detail::check_finite(*out, "matmul");
        if (out->requires_grad)
            record([a, b, out] {
                if (a->requires_grad)
                    detail::matmul_bt_acc(out->grad.data(), b->data.data(), a->grad.data(),
                                          a->rows, b->cols, a->cols);
                if (b->requires_grad)
                    detail::matmul_at_acc(a->data.data(), out->grad.data(), b->grad.data(),
                                          a->rows, a->cols, b->cols);
            });
        return out;
    }

    // Same-shape addition, or bias broadcast when b is 1 x cols.
    Tensor* add(Tensor* a, Tensor* b) {
        const bool bias = b->rows == 1 && a->cols == b->cols && a->rows != 1;
        if (!bias && (a->rows != b->rows || a->cols != b->cols))
            detail::shape_fail("add", *a, *b);
        Tensor* out = fresh(a->rows, a->cols, needs_grad({a, b}));
        for (std::size_t i = 0; i < a->rows; ++i)
            for (std::size_t j = 0; j < a->cols; ++j)
                out->at(i, j) = a->at(i, j) + (bias ? b->at(0, j) : b->at(i, j));
        detail::check_finite(*out, "add");
        if (out->requires_grad)
            record([a, b, out, bias] {
                if (a->requires_grad)
                    for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
                if (b->requires_grad) {
                    if (bias) {
                        for (std::size_t i = 0; i < out->rows; ++i)
                            for (std::size_t j = 0; j < out->cols; ++j)
                                b->grad[j] += out->grad[i * out->cols + j];
                    } else {
                        for (std::size_t i = 0; i < out->grad.size(); ++i)
                            b->grad[i] += out->grad[i];
                    }
                }
            });
        return out;
    }

    Tensor* scale(Tensor* a, double c) {
        Tensor* out = fresh(a->rows, a->cols, needs_grad({a}));
        for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = c * a->data[i];
        detail::check_finite(*out, "scale");
        if (out->requires_grad)
            record([a, c, out] {
                for (std::size_t i = 0; i < out->grad.size(); ++i)
                    a->grad[i] += c * out->grad[i];
            });
        return out;
    }

    Tensor* concat_cols(Tensor* a, Tensor* b) {
        if (a->rows != b->rows) detail::shape_fail("concat_cols", *a, *b);
        Tensor* out = fresh(a->rows, a->cols + b->cols, needs_grad({a, b}));
        for (std::size_t i = 0; i < a->rows; ++i) {
            for (std::size_t j = 0; j < a->cols; ++j) out->at(i, j) = a->at(i, j);
            for (std::size_t j = 0; j < b->cols; ++j) out->at(i, a->cols + j) = b->at(i, j);
        }
        if (out->requires_grad)
            record([a, b, out] {
                for (std::size_t i = 0; i < out->rows; ++i) {
                    if (a->requires_grad)
                        for (std::size_t j = 0; j < a->cols; ++j)
                            a->grad[i * a->cols + j] += out->grad[i * out->cols + j];
                    if (b->requires_grad)
                        for (std::size_t j = 0; j < b->cols; ++j)
                            b->grad[i * b->cols + j] += out->grad[i * out->cols + a->cols + j];
                }
            });
        return out;
    }

    // Column-wise mean over rows: n x m -> 1 x m.
    Tensor* row_mean(Tensor* a) {
        if (a->rows == 0) detail::shape_fail("row_mean", *a);
        Tensor* out = fresh(1, a->cols, needs_grad({a}));
        const double inv = 1.0 / static_cast<double>(a->rows);
        for (std::size_t i = 0; i < a->rows; ++i)
            for (std::size_t j = 0; j < a->cols; ++j) out->data[j] += a->at(i, j) * inv;
        detail::check_finite(*out, "row_mean");
        if (out->requires_grad)
            record([a, out, inv] {
                for (std::size_t i = 0; i < a->rows; ++i)
                    for (std::size_t j = 0; j < a->cols; ++j)
                        a->grad[i * a->cols + j] += out->grad[j] * inv;
            });
        return out;
    }

    Tensor* leaky_relu(Tensor* a, double alpha) {
        Tensor* out = fresh(a->rows, a->cols, needs_grad({a}));
        for (std::size_t i = 0; i < a->size(); ++i) {
            const double x = a->data[i];
            min_kink_distance_ = std::min(min_kink_distance_, std::abs(x));
            out->data[i] = x > 0.0 ? x : alpha * x;
        }
        detail::check_finite(*out, "leaky_relu");
        if (out->requires_grad)
            record([a, alpha, out] {
                for (std::size_t i = 0; i < out->grad.size(); ++i)
                    a->grad[i] += out->grad[i] * (a->data[i] > 0.0 ? 1.0 : alpha);
            });
        return out;
    }

    Tensor* sigmoid(Tensor* a) {
        Tensor* out = fresh(a->rows, a->cols, needs_grad({a}));
        for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = stable_sigmoid(a->data[i]);
        detail::check_finite(*out, "sigmoid");
        if (out->requires_grad)
            record([a, out] {
                for (std::size_t i = 0; i < out->grad.size(); ++i) {
                    const double s = out->data[i];
                    a->grad[i] += out->grad[i] * s * (1.0 - s);
                }
            });
        return out;
    }

    // Row-wise L2 normalization with eps under the square root to guard the
    // zero-row singularity.
    Tensor* l2_normalize_rows(Tensor* a) {
        constexpr double kEps = 1e-12;
        Tensor* out = fresh(a->rows, a->cols, needs_grad({a}));
        std::vector<double> norms(a->rows);
        for (std::size_t i = 0; i < a->rows; ++i) {
            double sq = kEps;
            for (std::size_t j = 0; j < a->cols; ++j) sq += a->at(i, j) * a->at(i, j);
            norms[i] = std::sqrt(sq);
            for (std::size_t j = 0; j < a->cols; ++j) out->at(i, j) = a->at(i, j) / norms[i];
        }
        detail::check_finite(*out, "l2_normalize_rows");
        if (out->requires_grad)
            record([a, out, norms = std::move(norms)] {
                for (std::size_t i = 0; i < a->rows; ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < a->cols; ++j)
                        dot += out->grad[i * a->cols + j] * out->data[i * a->cols + j];
                    for (std::size_t j = 0; j < a->cols; ++j)
                        a->grad[i * a->cols + j] +=
                            (out->grad[i * a->cols + j] -
                             out->data[i * a->cols + j] * dot) /
                            norms[i];
                }
            });
        return out;
    }

    // Per-row cosine similarity of two n x d tensors -> n x 1, with the same
    // eps guard as l2_normalize_rows.
    Tensor* cosine_similarity_rows(Tensor* a, Tensor* b) {
        constexpr double kEps = 1e-12;
        if (a->rows != b->rows || a->cols != b->cols)
            detail::shape_fail("cosine_similarity_rows", *a, *b);
        Tensor* out = fresh(a->rows, 1, needs_grad({a, b}));
        std::vector<double> na(a->rows), nb(a->rows), dots(a->rows);
        for (std::size_t i = 0; i < a->rows; ++i) {
            double sa = kEps, sb = kEps, dot = 0.0;
            for (std::size_t j = 0; j < a->cols; ++j) {
                sa += a->at(i, j) * a->at(i, j);
                sb += b->at(i, j) * b->at(i, j);
                dot += a->at(i, j) * b->at(i, j);
            }
            na[i] = std::sqrt(sa);
            nb[i] = std::sqrt(sb);
            min_cosine_norm_ = std::min({min_cosine_norm_, na[i], nb[i]});
            dots[i] = dot;
            out->data[i] = dot / (na[i] * nb[i]);
        }
        detail::check_finite(*out, "cosine_similarity_rows");
        if (out->requires_grad)
            record([a, b, out, na = std::move(na), nb = std::move(nb),
                    dots = std::move(dots)] {
                for (std::size_t i = 0; i < a->rows; ++i) {
                    const double g = out->grad[i];
                    if (g == 0.0) continue;
                    const double inv = 1.0 / (na[i] * nb[i]);
                    for (std::size_t j = 0; j < a->cols; ++j) {
                        const double av = a->at(i, j), bv = b->at(i, j);
                        if (a->requires_grad)
                            a->grad[i * a->cols + j] +=
                                g * (bv * inv - av * dots[i] * inv / (na[i] * na[i]));
                        if (b->requires_grad)
                            b->grad[i * b->cols + j] +=
                                g * (av * inv - bv * dots[i] * inv / (nb[i] * nb[i]));
                    }
                }
            });
        return out;
    }

    // Elementwise x^p.
    Tensor* pow(Tensor* a, double p) {
        Tensor* out = fresh(a->rows, a->cols, needs_grad({a}));
        for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = std::pow(a->data[i], p);
        detail::check_finite(*out, "pow");
        if (out->requires_grad)
            record([a, p, out] {
                for (std::size_t i = 0; i < out->grad.size(); ++i)
                    a->grad[i] += out->grad[i] * p * std::pow(a->data[i], p - 1.0);
            });
        return out;
    }

    Tensor* sum(Tensor* a) {
        Tensor* out = fresh(1, 1, needs_grad({a}));
        double acc = 0.0;
        for (double v : a->data) acc += v;
        out->data[0] = acc;
        detail::check_finite(*out, "sum");
        if (out->requires_grad)
            record([a, out] {
                const double g = out->grad[0];
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += g;
            });
        return out;
    }

    Tensor* mean(Tensor* a) {
        if (a->size() == 0) detail::shape_fail("mean", *a);
        Tensor* out = fresh(1, 1, needs_grad({a}));
        double acc = 0.0;
        for (double v : a->data) acc += v;
        out->data[0] = acc / static_cast<double>(a->size());
        detail::check_finite(*out, "mean");
        if (out->requires_grad)
            record([a, out] {
                const double g = out->grad[0] / static_cast<double>(a->size());
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += g;
            });
        return out;
    }

    // Gather rows by index (repeats allowed); backward scatter-adds.
    Tensor* select_rows(Tensor* a, std::vector<std::size_t> idx) {
        for (std::size_t i : idx)
            if (i >= a->rows) detail::shape_fail("select_rows", *a);
        Tensor* out = fresh(idx.size(), a->cols, needs_grad({a}));
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t j = 0; j < a->cols; ++j) out->at(r, j) = a->at(idx[r], j);
        if (out->requires_grad)
            record([a, out, idx = std::move(idx)] {
                for (std::size_t r = 0; r < idx.size(); ++r)
                    for (std::size_t j = 0; j < a->cols; ++j)
                        a->grad[idx[r] * a->cols + j] += out->grad[r * a->cols + j];
            });
        return out;
    }

    // Copy of `a` with the given rows replaced by the 1 x cols `row`.
    // Gradients flow to `a` on untouched rows and accumulate into `row` over
    // replaced rows.
    Tensor* replace_rows(Tensor* a, Tensor* row, const std::vector<std::size_t>& idx) {
        if (row->rows != 1 || row->cols != a->cols)
            detail::shape_fail("replace_rows", *a, *row);
        for (std::size_t i : idx)
            if (i >= a->rows) detail::shape_fail("replace_rows", *a);
        Tensor* out = fresh(a->rows, a->cols, needs_grad({a, row}));
        out->data = a->data;
        std::vector<char> replaced(a->rows, 0);
        for (std::size_t i : idx) {
            replaced[i] = 1;
            for (std::size_t j = 0; j < a->cols; ++j) out->at(i, j) = row->data[j];
        }
        if (out->requires_grad)
            record([a, row, out, replaced = std::move(replaced)] {
                for (std::size_t i = 0; i < a->rows; ++i) {
                    if (replaced[i]) {
                        if (row->requires_grad)
                            for (std::size_t j = 0; j < a->cols; ++j)
                                row->grad[j] += out->grad[i * a->cols + j];
                    } else if (a->requires_grad) {
                        for (std::size_t j = 0; j < a->cols; ++j)
                            a->grad[i * a->cols + j] += out->grad[i * a->cols + j];
                    }
                }
            });
        return out;
    }

    // Mean binary cross-entropy over logits d (n x 1) against fixed targets
    // in [0,1]: mean_i(softplus(d_i) - t_i * d_i). Numerically stable for
    // large |d|; gradient is (sigmoid(d_i) - t_i) / n.
    Tensor* bce_with_logits(Tensor* d, std::vector<double> targets) {
        if (d->cols != 1 || d->rows != targets.size())
            detail::shape_fail("bce_with_logits", *d);
        Tensor* out = fresh(1, 1, needs_grad({d}));
        const double inv = 1.0 / static_cast<double>(d->rows);
        double acc = 0.0;
        for (std::size_t i = 0; i < d->rows; ++i)
            acc += softplus(d->data[i]) - targets[i] * d->data[i];
        out->data[0] = acc * inv;
        detail::check_finite(*out, "bce_with_logits");
        if (out->requires_grad)
            record([d, out, inv, targets = std::move(targets)] {
                const double g = out->grad[0] * inv;
                for (std::size_t i = 0; i < d->rows; ++i)
                    d->grad[i] += g * (stable_sigmoid(d->data[i]) - targets[i]);
            });
        return out;
    }

    // Runs all recorded backward closures in reverse and resets the tape's
    // record. Leaf gradients stay readable until the leaves join a new tape.
    void backward(Tensor* loss) {
        if (loss->rows != 1 || loss->cols != 1)
            throw ShapeError("backward: loss must be 1x1, got " + loss->shape_str());
        if (loss->requires_grad) {
            loss->grad.assign(1, 1.0);
            for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
        }
        nodes_.clear();
        seen_.clear();
    }

    // Smoothness probes for finite-difference checks: how close any
    // leaky_relu input came to its kink, and the smallest row norm seen by
    // cosine_similarity_rows. A check instance whose probe values are within
    // the step size of the non-smooth point cannot be validated by central
    // differences and should be redrawn.
    double min_kink_distance() const { return min_kink_distance_; }
    double min_cosine_norm() const { return min_cosine_norm_; }

    static double stable_sigmoid(double x) {
        if (x >= 0.0) {
            const double z = std::exp(-x);
            return 1.0 / (1.0 + z);
        }
        const double z = std::exp(x);
        return z / (1.0 + z);
    }

    static double softplus(double x) {
        return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    }

private:
    Tensor* fresh(std::size_t r, std::size_t c, bool rg) {
        store_.emplace_back(r, c, rg);
        Tensor* t = &store_.back();
        if (rg) t->zero_grad();
        return t;
    }

    bool needs_grad(std::initializer_list<Tensor*> inputs) {
        if (!track_) return false;
        bool any = false;
        for (Tensor* t : inputs) {
            if (t->requires_grad) {
                any = true;
                touch(t);
            }
        }
        return any;
    }

    // First touch per tape zeroes the grad buffer, so gradients left over
    // from an earlier tape never leak into this one. Touching happens during
    // the forward phase only, when accumulation has not started yet.
    void touch(Tensor* t) {
        if (seen_.insert(t).second) t->zero_grad();
    }

    bool track_;
    std::deque<Tensor> store_;
    std::vector<std::function<void()>> nodes_;
    std::unordered_set<Tensor*> seen_;
    double min_kink_distance_ = std::numeric_limits<double>::infinity();
    double min_cosine_norm_ = std::numeric_limits<double>::infinity();

    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
};

// True when f's forward pass keeps a safe margin from every non-smooth point
// (leaky_relu kinks, near-zero cosine rows), i.e. central differences with a
// step below `margin` measure a genuine derivative. Randomized checks redraw
// instances that fail this.
inline bool fd_smooth_at(const std::function<Tensor*(Tape&)>& f, double margin = 1e-3) {
    Tape tape(false);
    f(tape);
    return tape.min_kink_distance() > margin && tape.min_cosine_norm() > margin;
}

// Compares reverse-mode gradients of a scalar-valued function against central
// finite differences, entry by entry over every parameter. Returns the max
// relative error with denominator max(|analytic|, |numeric|, 1e-8). The
// function must rebuild its forward pass from the current parameter values on
// the tape it is given.
inline double grad_check(const std::function<Tensor*(Tape&)>& f,
                         const std::vector<Tensor*>& params, double h = 1e-4) {
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor* loss = f(tape);
        tape.backward(loss);
        for (Tensor* p : params) {
            if (p->grad.size() == p->data.size())
                analytic.push_back(p->grad);
            else
                analytic.emplace_back(p->data.size(), 0.0);
        }
    }
    auto eval = [&] {
        Tape tape(false);
        return f(tape)->data[0];
    };
    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor* p = params[pi];
        for (std::size_t i = 0; i < p->data.size(); ++i) {
            const double orig = p->data[i];
            p->data[i] = orig + h;
            const double fp = eval();
            p->data[i] = orig - h;
            const double fm = eval();
            p->data[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[pi][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace percept::ad
