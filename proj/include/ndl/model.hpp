#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ndl/segment.hpp"
#include "ndl/tensor.hpp"

namespace ndl {

// Architecture hyperparameters. The channel count d never appears here: the
// omega network is shared across channels, so one parameter set serves any
// number of channels.
struct Hyper {
    int T = 64;
    int p = 64;
    int kernel = 3;
    std::vector<int> omega_widths = {16, 32, 64};
    std::vector<int> g_widths = {16, 32, 64};

    bool operator==(const Hyper&) const = default;
};

void validate_hyper(const Hyper& h);

// d x p softmax attention; each column sums to 1 across channels.
struct ChannelWeights {
    Eigen::MatrixXd alpha;
};

// T x p channel-weighted combination of X and Z; the only model input to g.
struct AggregateMap {
    Eigen::MatrixXd S;
};

// All learnable parameters plus architecture hyperparameters. Tensors are
// kept in f32 (the serialized precision) in a fixed order; compute paths
// upcast to double.
struct NdlParams {
    Hyper hyper;
    std::vector<Tensor> tensors;
    int epochs_completed = 0;
    std::string config_digest;
};

struct TensorSpec {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::size_t offset = 0;
    std::size_t size = 0;
};

// Fixed tensor inventory for an architecture: omega conv blocks, omega fc,
// g conv blocks, g fc. Offsets index into the flat parameter vector.
std::vector<TensorSpec> model_shapes(const Hyper& h);
std::size_t param_count(const Hyper& h);

// Fan-in-scaled uniform weights, zero shifts, deterministic in the seed.
NdlParams init_params(const Hyper& h, std::uint64_t seed);

Eigen::VectorXd params_to_flat(const NdlParams& p);
void flat_to_params(const Eigen::VectorXd& theta, NdlParams& p);

// --- model operations ---------------------------------------------------

// Per-channel omega network: row l of the result depends only on row l of X.
Eigen::MatrixXd omega_forward(const MultiChannelSegment& X, const NdlParams& params);

// Column-wise softmax over channels. Channel sums are computed in sorted
// order so that permuting channels permutes the result bitwise.
ChannelWeights compute_alpha(const Eigen::MatrixXd& omega);

// Eq-style aggregation: S = X^T alpha + (sum_l alpha_l . Z_l) * ones(T, p).
AggregateMap aggregate(const MultiChannelSegment& X, const AuxContext& Z, const ChannelWeights& alpha);

double g_forward(const AggregateMap& S, const NdlParams& params);

// sigmoid(g(S(alpha(X)), Z)); strictly inside (0, 1).
double predict_proba(const MultiChannelSegment& X, const AuxContext& Z, const NdlParams& params);

struct LabeledSample {
    Eigen::MatrixXd X;
    Eigen::MatrixXd Z;
    int y = 0;
};

// Mean over the batch of softplus(g) - y*g, overflow-safe.
double nll_loss(const std::vector<LabeledSample>& batch, const NdlParams& params);

// Row sums of alpha; totals p across channels.
Eigen::VectorXd channel_importance(const ChannelWeights& alpha);

// L largest importances, descending, ties broken by lower channel index.
std::vector<std::pair<int, double>> top_channels(const Eigen::VectorXd& importance, int L);

// --- numeric helpers ------------------------------------------------------

double sigmoid(double x);
double softplus(double x);
double nll_from_logit(int y, double logit);
Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& omega);

// --- compute engine -------------------------------------------------------

// Reusable forward/backward machinery over a flat double parameter vector.
// Owns per-layer activation buffers; one instance per thread.
class ModelEngine {
  public:
    explicit ModelEngine(const Hyper& h);

    void set_params(const NdlParams& p);
    void set_theta(const Eigen::VectorXd& theta);
    const Eigen::VectorXd& theta() const { return theta_; }
    const Hyper& hyper() const { return hyper_; }
    std::size_t n_params() const { return static_cast<std::size_t>(theta_.size()); }

    Eigen::MatrixXd omega(const Eigen::MatrixXd& X);
    double g_on(const Eigen::MatrixXd& S);

    struct Forward {
        Eigen::MatrixXd omega;
        Eigen::MatrixXd alpha;
        Eigen::MatrixXd S;
        double logit = 0.0;
        double prob = 0.5;
    };
    Forward forward(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z);

    // Sum (not mean) of per-sample NLL over data[idx[begin..end)]; the
    // gradient of that sum is accumulated into grad.
    double loss_grad_range(const std::vector<LabeledSample>& data, const std::vector<int>& idx,
                           std::size_t begin, std::size_t end, Eigen::VectorXd& grad);
    double loss_range(const std::vector<LabeledSample>& data, const std::vector<int>& idx,
                      std::size_t begin, std::size_t end);

  private:
    struct ConvDims {
        int in_ch, out_ch, kernel, stride, pad, in_len, out_len;
        std::size_t w_off, s_off;
    };
    struct NetDims {
        std::vector<ConvDims> convs;
        int in_ch = 0, in_len = 0;
        int fc_in = 0, fc_out = 0;
        std::size_t fc_w_off = 0, fc_s_off = 0;
    };
    struct NetWs {
        Eigen::MatrixXd input;
        std::vector<Eigen::MatrixXd> cols;  // im2col per conv layer
        std::vector<Eigen::MatrixXd> z;     // pre-activation
        std::vector<Eigen::MatrixXd> y;     // post-activation
        Eigen::VectorXd fc_in;
    };

    Eigen::VectorXd net_forward(const NetDims& nd, const Eigen::MatrixXd& input, NetWs& ws) const;
    void net_backward(const NetDims& nd, const Eigen::VectorXd& dout, const NetWs& ws, Eigen::VectorXd& grad,
                      Eigen::MatrixXd* dinput) const;

    Hyper hyper_;
    NetDims omega_dims_, g_dims_;
    Eigen::VectorXd theta_;
    std::vector<NetWs> omega_ws_;
    NetWs g_ws_;
};

}  // namespace ndl
