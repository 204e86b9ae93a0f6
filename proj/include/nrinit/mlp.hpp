#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nrinit/rng.hpp"

namespace nrinit {

enum class Activation { tanh };

/// How raw network outputs are mapped to predictions.
///  - identity: y = raw
///  - voltage_angle: first half of the outputs are magnitudes,
///    V = softplus(raw) + 0.1; second half are angles in radians, θ = raw.
enum class OutputTransform { identity, voltage_angle };

std::string to_string(OutputTransform t);
OutputTransform output_transform_from_string(const std::string& s);

/// Fully connected network with tanh hidden layers and a linear last layer.
/// All weights and biases live in one flat parameter vector (layer by layer,
/// weights column-major then biases) so optimizers and serializers can treat
/// the model as a single vector. Inputs are standardized with a fixed
/// per-feature shift/scale before the first layer.
class Mlp {
  public:
    Mlp() = default;
    Mlp(std::vector<int> layer_sizes, OutputTransform transform = OutputTransform::identity);

    /// Glorot-uniform weights, zero biases; the last layer is multiplied by
    /// `output_gain`.
    void init(Rng& rng, double output_gain = 1.0);

    [[nodiscard]] const std::vector<int>& layer_sizes() const { return sizes_; }
    [[nodiscard]] int input_size() const { return sizes_.front(); }
    [[nodiscard]] int output_size() const { return sizes_.back(); }
    [[nodiscard]] OutputTransform output_transform() const { return transform_; }
    [[nodiscard]] Activation activation() const { return Activation::tanh; }

    [[nodiscard]] Eigen::VectorXd& params() { return params_; }
    [[nodiscard]] const Eigen::VectorXd& params() const { return params_; }

    void set_input_normalization(Eigen::VectorXd shift, Eigen::VectorXd scale);
    [[nodiscard]] const Eigen::VectorXd& input_shift() const { return shift_; }
    [[nodiscard]] const Eigen::VectorXd& input_scale() const { return scale_; }

    /// Activations kept for the backward pass. Columns are samples.
    struct Trace {
        std::vector<Eigen::MatrixXd> activations;  // per layer input, then raw output
        Eigen::MatrixXd output;                    // after output transform
    };

    [[nodiscard]] Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;
    [[nodiscard]] Eigen::VectorXd forward_one(const Eigen::VectorXd& input) const;
    [[nodiscard]] Trace forward_trace(const Eigen::MatrixXd& inputs) const;

    /// Accumulates dL/dparams into `grad` given dL/d(output) (transformed
    /// outputs, one column per sample). Returns dL/d(inputs) for callers that
    /// need it.
    Eigen::MatrixXd backward(const Trace& trace, const Eigen::MatrixXd& d_output, Eigen::VectorXd& grad) const;

    bool operator==(const Mlp& o) const {
        return sizes_ == o.sizes_ && transform_ == o.transform_ && params_ == o.params_ && shift_ == o.shift_ &&
               scale_ == o.scale_;
    }

  private:
    [[nodiscard]] Eigen::Index weight_offset(std::size_t layer) const { return offsets_[layer]; }
    [[nodiscard]] Eigen::Map<const Eigen::MatrixXd> weights(std::size_t layer) const;
    [[nodiscard]] Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

    std::vector<int> sizes_;
    std::vector<Eigen::Index> offsets_;
    OutputTransform transform_ = OutputTransform::identity;
    Eigen::VectorXd params_;
    Eigen::VectorXd shift_;
    Eigen::VectorXd scale_;
};

/// Adaptive-moment optimizer over a flat parameter vector.
class Adam {
  public:
    explicit Adam(Eigen::Index n_params, double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

    void set_learning_rate(double lr) { lr_ = lr; }

  private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    Eigen::VectorXd m_, v_;
};

/// Text serialization: header line, layer sizes, transform, normalization and
/// parameters (per layer: weights row-major, then biases), all in shortest
/// round-trip decimal.
std::string format_mlp(const Mlp& model);
Mlp parse_mlp(const std::string& text);

}  // namespace nrinit
