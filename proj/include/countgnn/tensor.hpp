#ifndef COUNTGNN_TENSOR_HPP
#define COUNTGNN_TENSOR_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "countgnn/error.hpp"

namespace countgnn::ad {

/// Dense float64 tensor handle with shared storage. Rank 1 (vectors,
/// scalars as length-1 vectors) or rank 2 (row-major matrices).
class Tensor {
public:
    Tensor() = default;

    static Tensor vector(std::vector<double> v, bool requires_grad = false);
    static Tensor zeros(int n, bool requires_grad = false);
    static Tensor matrix(int rows, int cols, std::vector<double> v,
                         bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return d_ != nullptr; }
    bool is_matrix() const;
    bool is_scalar() const { return !is_matrix() && size() == 1; }
    int rows() const;
    int cols() const;
    int size() const;

    /// Handles have pointer semantics; storage stays mutable through a
    /// const handle.
    std::vector<double>& value() const;
    double scalar_value() const;

    bool requires_grad() const;
    std::vector<double>& grad() const;
    void zero_grad() const;

    /// Throws if any value is NaN or infinite.
    void check_finite() const;

    /// Deep copy with no grad history.
    Tensor clone_detached() const;

    const std::string& name() const;
    Tensor& set_name(std::string name);

    bool same_storage(const Tensor& other) const { return d_ == other.d_; }

private:
    struct Data;
    std::shared_ptr<Data> d_;
    explicit Tensor(std::shared_ptr<Data> d) : d_(std::move(d)) {}
    friend class Tape;
};

/// Define-by-run reverse-mode tape. Ops append their backward rules in
/// execution order; backward() replays them in reverse, accumulating
/// gradients additively on fan-out. One tape per forward pass, confined
/// to a single thread.
class Tape {
public:
    Tensor matvec(const Tensor& w, const Tensor& x);
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor hadamard(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& x, double c);
    Tensor concat(const std::vector<Tensor>& parts);
    Tensor leaky_relu(const Tensor& x, double slope);
    Tensor relu(const Tensor& x);
    Tensor mean_rows(const std::vector<Tensor>& rows);
    Tensor sum_rows(const std::vector<Tensor>& rows);
    Tensor dot(const Tensor& a, const Tensor& b);
    Tensor sum_squares(const Tensor& x);
    Tensor abs(const Tensor& x);

    /// Populates grads of every requires_grad tensor reachable from loss.
    /// loss must be scalar. Call once per tape.
    void backward(const Tensor& loss);

    std::size_t num_ops() const { return steps_.size(); }
    void clear() { steps_.clear(); }

private:
    Tensor make_result(std::vector<double> v, bool matrix, int rows, int cols,
                       bool track);
    std::vector<std::function<void()>> steps_;
};

struct FiniteDiffReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
    double worst_ad = 0.0;
    double worst_fd = 0.0;
    bool passed = false;
};

/// Central-difference validation of reverse-mode gradients. f rebuilds
/// the scalar loss from the current parameter values on a fresh tape.
/// Relative error per coordinate: |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
FiniteDiffReport finite_diff_check(const std::function<Tensor(Tape&)>& f,
                                   const std::vector<Tensor>& params, double h,
                                   double tol);

} // namespace countgnn::ad

#endif
