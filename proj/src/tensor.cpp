#include "countgnn/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace countgnn::ad {

struct Tensor::Data {
    std::vector<double> value;
    std::vector<double> grad;
    int rows = 0; // 0 for rank-1
    int cols = 0;
    bool requires_grad = false;
    std::string name;
};

Tensor Tensor::vector(std::vector<double> v, bool requires_grad) {
    auto d = std::make_shared<Data>();
    d->value = std::move(v);
    d->requires_grad = requires_grad;
    if (requires_grad) d->grad.assign(d->value.size(), 0.0);
    return Tensor(std::move(d));
}

Tensor Tensor::zeros(int n, bool requires_grad) {
    return vector(std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> v,
                      bool requires_grad) {
    if (static_cast<int>(v.size()) != rows * cols)
        throw ShapeError("matrix data length does not match rows*cols");
    auto d = std::make_shared<Data>();
    d->value = std::move(v);
    d->rows = rows;
    d->cols = cols;
    d->requires_grad = requires_grad;
    if (requires_grad) d->grad.assign(d->value.size(), 0.0);
    return Tensor(std::move(d));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return vector({v}, requires_grad);
}

bool Tensor::is_matrix() const { return d_->rows > 0; }
int Tensor::rows() const { return d_->rows; }
int Tensor::cols() const { return d_->cols; }
int Tensor::size() const { return static_cast<int>(d_->value.size()); }

std::vector<double>& Tensor::value() const { return d_->value; }

double Tensor::scalar_value() const {
    if (!is_scalar()) throw ShapeError("tensor is not a scalar");
    return d_->value[0];
}

bool Tensor::requires_grad() const { return d_->requires_grad; }

std::vector<double>& Tensor::grad() const { return d_->grad; }

void Tensor::zero_grad() const {
    std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

void Tensor::check_finite() const {
    for (double x : d_->value)
        if (!std::isfinite(x))
            throw Error("non-finite value in tensor " + d_->name);
}

Tensor Tensor::clone_detached() const {
    auto d = std::make_shared<Data>();
    d->value = d_->value;
    d->rows = d_->rows;
    d->cols = d_->cols;
    d->requires_grad = d_->requires_grad;
    if (d->requires_grad) d->grad.assign(d->value.size(), 0.0);
    d->name = d_->name;
    return Tensor(std::move(d));
}

const std::string& Tensor::name() const { return d_->name; }

Tensor& Tensor::set_name(std::string name) {
    d_->name = std::move(name);
    return *this;
}

// ---------------------------------------------------------------------

namespace {

void require_vector(const Tensor& t, const char* op) {
    if (t.is_matrix()) throw ShapeError(std::string(op) + ": expected a vector");
}

void require_same_size(const Tensor& a, const Tensor& b, const char* op) {
    if (a.size() != b.size())
        throw ShapeError(std::string(op) + ": size mismatch " +
                         std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
}

} // namespace

Tensor Tape::make_result(std::vector<double> v, bool matrix, int rows, int cols,
                         bool track) {
    Tensor out = matrix ? Tensor::matrix(rows, cols, std::move(v), track)
                        : Tensor::vector(std::move(v), track);
    return out;
}

Tensor Tape::matvec(const Tensor& w, const Tensor& x) {
    if (!w.is_matrix()) throw ShapeError("matvec: first argument must be a matrix");
    require_vector(x, "matvec");
    if (w.cols() != x.size())
        throw ShapeError("matvec: " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()) + " by vector of length " +
                         std::to_string(x.size()));
    const int m = w.rows(), n = w.cols();
    std::vector<double> y(m, 0.0);
    const double* wd = w.value().data();
    const double* xd = x.value().data();
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        const double* row = wd + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) s += row[j] * xd[j];
        y[i] = s;
    }
    const bool track = w.requires_grad() || x.requires_grad();
    Tensor out = make_result(std::move(y), false, 0, 0, track);
    if (track) {
        Tensor wc = w, xc = x, oc = out;
        steps_.push_back([wc, xc, oc]() mutable {
            const int m = wc.rows(), n = wc.cols();
            const auto& go = oc.grad();
            if (wc.requires_grad()) {
                auto& gw = wc.grad();
                const auto& xv = xc.value();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        gw[static_cast<std::size_t>(i) * n + j] += go[i] * xv[j];
            }
            if (xc.requires_grad()) {
                auto& gx = xc.grad();
                const auto& wv = wc.value();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j)
                        gx[j] += wv[static_cast<std::size_t>(i) * n + j] * go[i];
            }
        });
    }
    return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    require_same_size(a, b, "add");
    std::vector<double> y(a.size());
    for (int i = 0; i < a.size(); ++i) y[i] = a.value()[i] + b.value()[i];
    const bool track = a.requires_grad() || b.requires_grad();
    Tensor out = make_result(std::move(y), a.is_matrix(), a.rows(), a.cols(), track);
    if (track) {
        Tensor ac = a, bc = b, oc = out;
        steps_.push_back([ac, bc, oc]() mutable {
            const auto& go = oc.grad();
            if (ac.requires_grad()) {
                auto& ga = ac.grad();
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
            }
        });
    }
    return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    require_same_size(a, b, "sub");
    std::vector<double> y(a.size());
    for (int i = 0; i < a.size(); ++i) y[i] = a.value()[i] - b.value()[i];
    const bool track = a.requires_grad() || b.requires_grad();
    Tensor out = make_result(std::move(y), a.is_matrix(), a.rows(), a.cols(), track);
    if (track) {
        Tensor ac = a, bc = b, oc = out;
        steps_.push_back([ac, bc, oc]() mutable {
            const auto& go = oc.grad();
            if (ac.requires_grad()) {
                auto& ga = ac.grad();
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
            }
        });
    }
    return out;
}

Tensor Tape::hadamard(const Tensor& a, const Tensor& b) {
    require_same_size(a, b, "hadamard");
    std::vector<double> y(a.size());
    for (int i = 0; i < a.size(); ++i) y[i] = a.value()[i] * b.value()[i];
    const bool track = a.requires_grad() || b.requires_grad();
    Tensor out = make_result(std::move(y), a.is_matrix(), a.rows(), a.cols(), track);
    if (track) {
        Tensor ac = a, bc = b, oc = out;
        steps_.push_back([ac, bc, oc]() mutable {
            const auto& go = oc.grad();
            if (ac.requires_grad()) {
                auto& ga = ac.grad();
                const auto& bv = bc.value();
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad();
                const auto& av = ac.value();
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
            }
        });
    }
    return out;
}

Tensor Tape::scale(const Tensor& x, double c) {
    std::vector<double> y(x.size());
    for (int i = 0; i < x.size(); ++i) y[i] = c * x.value()[i];
    const bool track = x.requires_grad();
    Tensor out = make_result(std::move(y), x.is_matrix(), x.rows(), x.cols(), track);
    if (track) {
        Tensor xc = x, oc = out;
        steps_.push_back([xc, oc, c]() mutable {
            auto& gx = xc.grad();
            const auto& go = oc.grad();
            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += c * go[i];
        });
    }
    return out;
}

Tensor Tape::concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat: empty input");
    std::vector<double> y;
    bool track = false;
    for (const auto& p : parts) {
        require_vector(p, "concat");
        y.insert(y.end(), p.value().begin(), p.value().end());
        track = track || p.requires_grad();
    }
    Tensor out = make_result(std::move(y), false, 0, 0, track);
    if (track) {
        std::vector<Tensor> pc = parts;
        Tensor oc = out;
        steps_.push_back([pc, oc]() mutable {
            const auto& go = oc.grad();
            std::size_t off = 0;
            for (auto& p : pc) {
                if (p.requires_grad()) {
                    auto& gp = p.grad();
                    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += go[off + i];
                }
                off += p.value().size();
            }
        });
    }
    return out;
}

Tensor Tape::leaky_relu(const Tensor& x, double slope) {
    std::vector<double> y(x.size());
    for (int i = 0; i < x.size(); ++i) {
        const double v = x.value()[i];
        y[i] = v >= 0.0 ? v : slope * v;
    }
    const bool track = x.requires_grad();
    Tensor out = make_result(std::move(y), x.is_matrix(), x.rows(), x.cols(), track);
    if (track) {
        Tensor xc = x, oc = out;
        steps_.push_back([xc, oc, slope]() mutable {
            auto& gx = xc.grad();
            const auto& go = oc.grad();
            const auto& xv = xc.value();
            // subgradient at the kink takes the slope side
            for (std::size_t i = 0; i < go.size(); ++i)
                gx[i] += go[i] * (xv[i] > 0.0 ? 1.0 : slope);
        });
    }
    return out;
}

Tensor Tape::relu(const Tensor& x) {
    std::vector<double> y(x.size());
    for (int i = 0; i < x.size(); ++i) y[i] = std::max(x.value()[i], 0.0);
    const bool track = x.requires_grad();
    Tensor out = make_result(std::move(y), x.is_matrix(), x.rows(), x.cols(), track);
    if (track) {
        Tensor xc = x, oc = out;
        steps_.push_back([xc, oc]() mutable {
            auto& gx = xc.grad();
            const auto& go = oc.grad();
            const auto& xv = xc.value();
            // subgradient at the kink takes the zero side
            for (std::size_t i = 0; i < go.size(); ++i)
                gx[i] += go[i] * (xv[i] > 0.0 ? 1.0 : 0.0);
        });
    }
    return out;
}

Tensor Tape::mean_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ShapeError("mean_rows: empty input");
    Tensor s = sum_rows(rows);
    return scale(s, 1.0 / static_cast<double>(rows.size()));
}

Tensor Tape::sum_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ShapeError("sum_rows: empty input");
    const int n = rows[0].size();
    bool track = false;
    for (const auto& r : rows) {
        require_vector(r, "sum_rows");
        require_same_size(rows[0], r, "sum_rows");
        track = track || r.requires_grad();
    }
    std::vector<double> y(n, 0.0);
    for (const auto& r : rows)
        for (int i = 0; i < n; ++i) y[i] += r.value()[i];
    Tensor out = make_result(std::move(y), false, 0, 0, track);
    if (track) {
        std::vector<Tensor> rc = rows;
        Tensor oc = out;
        steps_.push_back([rc, oc]() mutable {
            const auto& go = oc.grad();
            for (auto& r : rc) {
                if (!r.requires_grad()) continue;
                auto& gr = r.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gr[i] += go[i];
            }
        });
    }
    return out;
}

Tensor Tape::dot(const Tensor& a, const Tensor& b) {
    require_vector(a, "dot");
    require_vector(b, "dot");
    require_same_size(a, b, "dot");
    double s = 0.0;
    for (int i = 0; i < a.size(); ++i) s += a.value()[i] * b.value()[i];
    const bool track = a.requires_grad() || b.requires_grad();
    Tensor out = make_result({s}, false, 0, 0, track);
    if (track) {
        Tensor ac = a, bc = b, oc = out;
        steps_.push_back([ac, bc, oc]() mutable {
            const double g = oc.grad()[0];
            if (ac.requires_grad()) {
                auto& ga = ac.grad();
                const auto& bv = bc.value();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bv[i];
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad();
                const auto& av = ac.value();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * av[i];
            }
        });
    }
    return out;
}

Tensor Tape::sum_squares(const Tensor& x) {
    double s = 0.0;
    for (double v : x.value()) s += v * v;
    const bool track = x.requires_grad();
    Tensor out = make_result({s}, false, 0, 0, track);
    if (track) {
        Tensor xc = x, oc = out;
        steps_.push_back([xc, oc]() mutable {
            const double g = oc.grad()[0];
            auto& gx = xc.grad();
            const auto& xv = xc.value();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * g * xv[i];
        });
    }
    return out;
}

Tensor Tape::abs(const Tensor& x) {
    std::vector<double> y(x.size());
    for (int i = 0; i < x.size(); ++i) y[i] = std::fabs(x.value()[i]);
    const bool track = x.requires_grad();
    Tensor out = make_result(std::move(y), x.is_matrix(), x.rows(), x.cols(), track);
    if (track) {
        Tensor xc = x, oc = out;
        steps_.push_back([xc, oc]() mutable {
            auto& gx = xc.grad();
            const auto& go = oc.grad();
            const auto& xv = xc.value();
            for (std::size_t i = 0; i < go.size(); ++i) {
                const double s = xv[i] > 0.0 ? 1.0 : (xv[i] < 0.0 ? -1.0 : 0.0);
                gx[i] += go[i] * s;
            }
        });
    }
    return out;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || !loss.is_scalar())
        throw ShapeError("backward: loss must be a scalar");
    if (!loss.requires_grad()) return; // constant loss, all grads zero
    loss.grad()[0] += 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

FiniteDiffReport finite_diff_check(const std::function<Tensor(Tape&)>& f,
                                   const std::vector<Tensor>& params, double h,
                                   double tol) {
    if (h <= 0.0) throw Error("finite_diff_check: h must be positive");
    for (const auto& p : params) p.zero_grad();
    {
        Tape tape;
        Tensor loss = f(tape);
        tape.backward(loss);
    }
    std::vector<std::vector<double>> g_ad;
    g_ad.reserve(params.size());
    for (const auto& p : params) g_ad.push_back(p.grad());

    FiniteDiffReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        for (int i = 0; i < p.size(); ++i) {
            const double saved = p.value()[i];
            p.value()[i] = saved + h;
            double fp, fm;
            {
                Tape t;
                fp = f(t).scalar_value();
            }
            p.value()[i] = saved - h;
            {
                Tape t;
                fm = f(t).scalar_value();
            }
            p.value()[i] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double ad = g_ad[pi][i];
            const double rel =
                std::fabs(ad - fd) / std::max({1.0, std::fabs(ad), std::fabs(fd)});
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = p.name();
                report.worst_index = i;
                report.worst_ad = ad;
                report.worst_fd = fd;
            }
        }
    }
    report.passed = report.max_rel_err <= tol;
    return report;
}

} // namespace countgnn::ad
