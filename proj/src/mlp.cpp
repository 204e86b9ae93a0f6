#include "nrinit/mlp.hpp"

#include <cmath>
#include <sstream>

#include "nrinit/error.hpp"
#include "nrinit/io_util.hpp"

namespace nrinit {

namespace {

constexpr double kVoltageFloor = 0.1;

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

std::string to_string(OutputTransform t) {
    return t == OutputTransform::identity ? "identity" : "voltage_angle";
}

OutputTransform output_transform_from_string(const std::string& s) {
    if (s == "identity") return OutputTransform::identity;
    if (s == "voltage_angle") return OutputTransform::voltage_angle;
    throw InputError("unknown output transform '" + s + "'");
}

Mlp::Mlp(std::vector<int> layer_sizes, OutputTransform transform)
    : sizes_(std::move(layer_sizes)), transform_(transform) {
    if (sizes_.size() < 2) throw InputError("MLP needs at least an input and an output layer");
    for (int s : sizes_) {
        if (s < 1) throw InputError("MLP layer sizes must be positive");
    }
    if (transform_ == OutputTransform::voltage_angle && sizes_.back() % 2 != 0) {
        throw InputError("voltage_angle transform needs an even output size");
    }
    Eigen::Index total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        offsets_.push_back(total);
        total += static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
    }
    params_ = Eigen::VectorXd::Zero(total);
    shift_ = Eigen::VectorXd::Zero(sizes_.front());
    scale_ = Eigen::VectorXd::Ones(sizes_.front());
}

void Mlp::init(Rng& rng, double output_gain) {
    params_.setZero();
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const double limit = std::sqrt(6.0 / (sizes_[l] + sizes_[l + 1]));
        const double gain = (l + 2 == sizes_.size()) ? output_gain : 1.0;
        const Eigen::Index n = static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1];
        for (Eigen::Index i = 0; i < n; ++i) params_[offsets_[l] + i] = gain * rng.uniform(-limit, limit);
    }
}

void Mlp::set_input_normalization(Eigen::VectorXd shift, Eigen::VectorXd scale) {
    if (shift.size() != input_size() || scale.size() != input_size()) {
        throw InputError("normalization length must equal the input size");
    }
    for (Eigen::Index i = 0; i < scale.size(); ++i) {
        if (!(scale[i] > 0.0)) throw InputError("normalization scale must be positive");
    }
    shift_ = std::move(shift);
    scale_ = std::move(scale);
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weights(std::size_t layer) const {
    return {params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t layer) const {
    return {params_.data() + offsets_[layer] + static_cast<Eigen::Index>(sizes_[layer]) * sizes_[layer + 1],
            sizes_[layer + 1]};
}

Mlp::Trace Mlp::forward_trace(const Eigen::MatrixXd& inputs) const {
    if (inputs.rows() != input_size()) {
        throw InputError("MLP input has " + std::to_string(inputs.rows()) + " features, expected " +
                         std::to_string(input_size()));
    }
    Trace tr;
    const std::size_t n_layers = sizes_.size() - 1;
    tr.activations.reserve(n_layers + 1);
    tr.activations.push_back((inputs.colwise() - shift_).array().colwise() / scale_.array());
    for (std::size_t l = 0; l < n_layers; ++l) {
        Eigen::MatrixXd z = weights(l) * tr.activations.back();
        z.colwise() += bias(l);
        if (l + 1 < n_layers) z = z.array().tanh();
        tr.activations.push_back(std::move(z));
    }
    tr.output = tr.activations.back();
    if (transform_ == OutputTransform::voltage_angle) {
        const Eigen::Index half = output_size() / 2;
        tr.output.topRows(half) = tr.output.topRows(half).unaryExpr([](double x) { return softplus(x) + kVoltageFloor; });
    }
    return tr;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& inputs) const { return forward_trace(inputs).output; }

Eigen::VectorXd Mlp::forward_one(const Eigen::VectorXd& input) const {
    return forward(Eigen::MatrixXd(input)).col(0);
}

Eigen::MatrixXd Mlp::backward(const Trace& trace, const Eigen::MatrixXd& d_output, Eigen::VectorXd& grad) const {
    if (grad.size() != params_.size()) grad = Eigen::VectorXd::Zero(params_.size());
    Eigen::MatrixXd delta = d_output;
    if (transform_ == OutputTransform::voltage_angle) {
        const Eigen::Index half = output_size() / 2;
        const Eigen::MatrixXd& raw = trace.activations.back();
        delta.topRows(half).array() *= raw.topRows(half).unaryExpr([](double x) { return sigmoid(x); }).array();
    }
    const std::size_t n_layers = sizes_.size() - 1;
    for (std::size_t l = n_layers; l-- > 0;) {
        const Eigen::MatrixXd& a = trace.activations[l];
        Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
        Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[l] + static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1],
                                       sizes_[l + 1]);
        gw.noalias() += delta * a.transpose();
        gb += delta.rowwise().sum();
        Eigen::MatrixXd d_a = weights(l).transpose() * delta;
        if (l > 0) {
            delta = d_a.array() * (1.0 - a.array().square());
        } else {
            return d_a.array().colwise() / scale_.array();
        }
    }
    return {};
}

Adam::Adam(Eigen::Index n_params, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(Eigen::VectorXd::Zero(n_params)),
      v_(Eigen::VectorXd::Zero(n_params)) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

namespace {

// In memory each weight matrix is column-major; files store it row-major.
// `to_file` selects the direction of the permutation.
Eigen::VectorXd file_order(const Mlp& model, const Eigen::VectorXd& src, bool to_file) {
    Eigen::VectorXd dst(src.size());
    const auto& sizes = model.layer_sizes();
    Eigen::Index off = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const Eigen::Index rows = sizes[l + 1], cols = sizes[l];
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                const Eigen::Index mem = off + c * rows + r, file = off + r * cols + c;
                if (to_file) dst[file] = src[mem];
                else dst[mem] = src[file];
            }
        }
        off += rows * cols;
        dst.segment(off, rows) = src.segment(off, rows);
        off += rows;
    }
    return dst;
}

}  // namespace

std::string format_mlp(const Mlp& model) {
    std::ostringstream out;
    out << "nrinit-mlp 1\nlayers";
    for (int s : model.layer_sizes()) out << ' ' << s;
    out << "\nactivation tanh\ntransform " << to_string(model.output_transform()) << "\nshift";
    for (Eigen::Index i = 0; i < model.input_shift().size(); ++i) out << ' ' << fmt_num(model.input_shift()[i]);
    out << "\nscale";
    for (Eigen::Index i = 0; i < model.input_scale().size(); ++i) out << ' ' << fmt_num(model.input_scale()[i]);
    out << "\nparams " << model.params().size() << '\n';
    const Eigen::VectorXd flat = file_order(model, model.params(), true);
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
        out << fmt_num(flat[i]) << ((i % 8 == 7 || i + 1 == flat.size()) ? '\n' : ' ');
    }
    return out.str();
}

Mlp parse_mlp(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    auto next_line = [&](const std::string& key) {
        if (!std::getline(in, line)) throw InputError("model file: missing '" + key + "'");
        auto toks = split_ws(trim(line));
        if (toks.empty() || toks[0] != key) throw InputError("model file: expected '" + key + "'");
        return std::vector<std::string>(toks.begin() + 1, toks.end());
    };
    auto header = next_line("nrinit-mlp");
    if (header.size() != 1 || header[0] != "1") throw InputError("model file: unsupported version");
    std::vector<int> sizes;
    for (const auto& t : next_line("layers")) {
        long v = 0;
        if (!parse_int(t, v)) throw InputError("model file: bad layer size '" + t + "'");
        sizes.push_back(static_cast<int>(v));
    }
    auto act = next_line("activation");
    if (act.size() != 1 || act[0] != "tanh") throw InputError("model file: unsupported activation");
    auto tr = next_line("transform");
    if (tr.size() != 1) throw InputError("model file: bad transform");
    Mlp model(sizes, output_transform_from_string(tr[0]));

    auto read_vec = [&](const std::vector<std::string>& toks, const std::string& key) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(toks.size()));
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (!parse_num(toks[i], v[static_cast<Eigen::Index>(i)])) throw InputError("model file: bad number in " + key);
        }
        return v;
    };
    Eigen::VectorXd shift = read_vec(next_line("shift"), "shift");
    Eigen::VectorXd scale = read_vec(next_line("scale"), "scale");
    model.set_input_normalization(shift, scale);
    auto count = next_line("params");
    long n = 0;
    if (count.size() != 1 || !parse_int(count[0], n) || n != model.params().size()) {
        throw InputError("model file: parameter count does not match layer sizes");
    }
    Eigen::VectorXd flat(n);
    Eigen::Index i = 0;
    while (i < n && std::getline(in, line)) {
        for (auto t : split_ws(trim(line))) {
            if (i >= n) throw InputError("model file: too many parameters");
            if (!parse_num(t, flat[i])) throw InputError("model file: bad parameter value");
            ++i;
        }
    }
    if (i != n) throw InputError("model file: truncated parameter block");
    model.params() = file_order(model, flat, false);
    return model;
}

}  // namespace nrinit
