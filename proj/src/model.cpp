#include "ndl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ndl/errors.hpp"
#include "ndl/rng.hpp"

namespace ndl {

namespace {

using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapW = Eigen::Map<RowMajorMat>;
using MapWConst = Eigen::Map<const RowMajorMat>;
using MapV = Eigen::Map<Eigen::VectorXd>;
using MapVConst = Eigen::Map<const Eigen::VectorXd>;

int conv_out_len(int in_len, int kernel, int stride, int pad) {
    return (in_len + 2 * pad - kernel) / stride + 1;
}

}  // namespace

void validate_hyper(const Hyper& h) {
    if (h.T < 1 || h.p < 1) throw ParameterError("hyper: T and p must be >= 1");
    if (h.kernel < 1 || h.kernel % 2 == 0) throw ParameterError("hyper: kernel must be odd and >= 1");
    if (h.omega_widths.empty() || h.g_widths.empty()) throw ParameterError("hyper: at least one conv block per net");
    for (int w : h.omega_widths) {
        if (w < 1) throw ParameterError("hyper: widths must be >= 1");
    }
    for (int w : h.g_widths) {
        if (w < 1) throw ParameterError("hyper: widths must be >= 1");
    }
}

std::vector<TensorSpec> model_shapes(const Hyper& h) {
    validate_hyper(h);
    std::vector<TensorSpec> specs;
    std::size_t off = 0;
    auto add = [&](std::string name, std::vector<std::uint32_t> dims) {
        TensorSpec s;
        s.name = std::move(name);
        s.dims = std::move(dims);
        s.size = 1;
        for (auto d : s.dims) s.size *= d;
        s.offset = off;
        off += s.size;
        specs.push_back(std::move(s));
    };
    auto add_net = [&](const std::string& prefix, int in_ch, int in_len, const std::vector<int>& widths, int fc_out) {
        int ch = in_ch;
        int len = in_len;
        for (std::size_t i = 0; i < widths.size(); ++i) {
            const int out_ch = widths[i];
            add(prefix + ".conv" + std::to_string(i) + ".weight",
                {static_cast<std::uint32_t>(out_ch), static_cast<std::uint32_t>(ch), static_cast<std::uint32_t>(h.kernel)});
            add(prefix + ".conv" + std::to_string(i) + ".shift", {static_cast<std::uint32_t>(out_ch)});
            len = conv_out_len(len, h.kernel, 2, h.kernel / 2);
            ch = out_ch;
        }
        add(prefix + ".fc.weight", {static_cast<std::uint32_t>(fc_out), static_cast<std::uint32_t>(ch * len)});
        add(prefix + ".fc.shift", {static_cast<std::uint32_t>(fc_out)});
    };
    add_net("omega", 1, h.T, h.omega_widths, h.p);
    add_net("g", h.p, h.T, h.g_widths, 1);
    return specs;
}

std::size_t param_count(const Hyper& h) {
    const auto specs = model_shapes(h);
    return specs.back().offset + specs.back().size;
}

NdlParams init_params(const Hyper& h, std::uint64_t seed) {
    NdlParams p;
    p.hyper = h;
    Rng rng(Rng::derive(seed, 0x1217));
    for (const auto& spec : model_shapes(h)) {
        Tensor t;
        t.name = spec.name;
        t.dims = spec.dims;
        t.data.assign(spec.size, 0.0f);
        if (t.name.ends_with(".weight")) {
            // fan-in = product of all dims but the leading output one
            std::size_t fan_in = 1;
            for (std::size_t i = 1; i < spec.dims.size(); ++i) fan_in *= spec.dims[i];
            const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
            for (auto& v : t.data) v = static_cast<float>(rng.uniform(-bound, bound));
        }
        p.tensors.push_back(std::move(t));
    }
    return p;
}

Eigen::VectorXd params_to_flat(const NdlParams& p) {
    const auto specs = model_shapes(p.hyper);
    if (p.tensors.size() != specs.size()) throw DimensionError("params: tensor inventory mismatch");
    Eigen::VectorXd theta(static_cast<Eigen::Index>(param_count(p.hyper)));
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        const auto& t = p.tensors[i];
        if (t.name != spec.name || t.dims != spec.dims || t.data.size() != spec.size) {
            throw DimensionError("params: tensor '" + t.name + "' does not match architecture");
        }
        for (std::size_t j = 0; j < spec.size; ++j) {
            theta[static_cast<Eigen::Index>(spec.offset + j)] = static_cast<double>(t.data[j]);
        }
    }
    return theta;
}

void flat_to_params(const Eigen::VectorXd& theta, NdlParams& p) {
    const auto specs = model_shapes(p.hyper);
    if (theta.size() != static_cast<Eigen::Index>(param_count(p.hyper))) {
        throw DimensionError("params: flat vector length mismatch");
    }
    if (p.tensors.size() != specs.size()) throw DimensionError("params: tensor inventory mismatch");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        auto& t = p.tensors[i];
        for (std::size_t j = 0; j < spec.size; ++j) {
            t.data[j] = static_cast<float>(theta[static_cast<Eigen::Index>(spec.offset + j)]);
        }
    }
}

// --- numeric helpers --------------------------------------------------------

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double nll_from_logit(int y, double logit) {
    return softplus(logit) - (y != 0 ? logit : 0.0);
}

Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& omega) {
    const Eigen::Index d = omega.rows();
    const Eigen::Index p = omega.cols();
    Eigen::MatrixXd alpha(d, p);
    std::vector<double> buf(static_cast<std::size_t>(d));
    for (Eigen::Index k = 0; k < p; ++k) {
        const double m = omega.col(k).maxCoeff();
        for (Eigen::Index l = 0; l < d; ++l) alpha(l, k) = std::exp(omega(l, k) - m);
        // Summing in value order makes the denominator independent of channel
        // order, so channel permutations permute alpha bitwise.
        for (Eigen::Index l = 0; l < d; ++l) buf[static_cast<std::size_t>(l)] = alpha(l, k);
        std::sort(buf.begin(), buf.end());
        double sum = 0.0;
        for (double v : buf) sum += v;
        alpha.col(k) /= sum;
    }
    return alpha;
}

// --- engine -----------------------------------------------------------------

ModelEngine::ModelEngine(const Hyper& h) : hyper_(h) {
    validate_hyper(h);
    auto build = [&](NetDims& nd, int in_ch, int in_len, const std::vector<int>& widths, int fc_out,
                     const std::string& prefix) {
        nd.in_ch = in_ch;
        nd.in_len = in_len;
        const auto specs = model_shapes(h);
        auto offset_of = [&](const std::string& name) {
            for (const auto& s : specs) {
                if (s.name == name) return s.offset;
            }
            throw Error("engine: missing tensor spec " + name);
        };
        int ch = in_ch;
        int len = in_len;
        for (std::size_t i = 0; i < widths.size(); ++i) {
            ConvDims cd;
            cd.in_ch = ch;
            cd.out_ch = widths[i];
            cd.kernel = h.kernel;
            cd.stride = 2;
            cd.pad = h.kernel / 2;
            cd.in_len = len;
            cd.out_len = conv_out_len(len, cd.kernel, cd.stride, cd.pad);
            cd.w_off = offset_of(prefix + ".conv" + std::to_string(i) + ".weight");
            cd.s_off = offset_of(prefix + ".conv" + std::to_string(i) + ".shift");
            nd.convs.push_back(cd);
            ch = cd.out_ch;
            len = cd.out_len;
        }
        nd.fc_in = ch * len;
        nd.fc_out = fc_out;
        nd.fc_w_off = offset_of(prefix + ".fc.weight");
        nd.fc_s_off = offset_of(prefix + ".fc.shift");
    };
    build(omega_dims_, 1, h.T, h.omega_widths, h.p, "omega");
    build(g_dims_, h.p, h.T, h.g_widths, 1, "g");
    theta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(param_count(h)));
}

void ModelEngine::set_params(const NdlParams& p) {
    if (!(p.hyper == hyper_)) throw DimensionError("engine: parameter hyper differs from engine hyper");
    theta_ = params_to_flat(p);
}

void ModelEngine::set_theta(const Eigen::VectorXd& theta) {
    if (theta.size() != theta_.size()) throw DimensionError("engine: theta length mismatch");
    theta_ = theta;
}

namespace {

void im2col(const Eigen::MatrixXd& in, int kernel, int stride, int pad, Eigen::MatrixXd& cols, int out_len) {
    const int in_ch = static_cast<int>(in.rows());
    const int in_len = static_cast<int>(in.cols());
    cols.resize(in_ch * kernel, out_len);
    for (int ic = 0; ic < in_ch; ++ic) {
        for (int u = 0; u < kernel; ++u) {
            const int row = ic * kernel + u;
            for (int j = 0; j < out_len; ++j) {
                const int pos = j * stride + u - pad;
                cols(row, j) = (pos >= 0 && pos < in_len) ? in(ic, pos) : 0.0;
            }
        }
    }
}

void col2im(const Eigen::MatrixXd& dcols, int kernel, int stride, int pad, Eigen::MatrixXd& din, int in_ch,
            int in_len) {
    din.setZero(in_ch, in_len);
    const int out_len = static_cast<int>(dcols.cols());
    for (int ic = 0; ic < in_ch; ++ic) {
        for (int u = 0; u < kernel; ++u) {
            const int row = ic * kernel + u;
            for (int j = 0; j < out_len; ++j) {
                const int pos = j * stride + u - pad;
                if (pos >= 0 && pos < in_len) din(ic, pos) += dcols(row, j);
            }
        }
    }
}

}  // namespace

Eigen::VectorXd ModelEngine::net_forward(const NetDims& nd, const Eigen::MatrixXd& input, NetWs& ws) const {
    if (input.rows() != nd.in_ch || input.cols() != nd.in_len) {
        throw DimensionError("engine: net input shape mismatch");
    }
    const std::size_t L = nd.convs.size();
    ws.cols.resize(L);
    ws.z.resize(L);
    ws.y.resize(L);
    ws.input = input;
    const Eigen::MatrixXd* cur = &ws.input;
    for (std::size_t i = 0; i < L; ++i) {
        const auto& cd = nd.convs[i];
        im2col(*cur, cd.kernel, cd.stride, cd.pad, ws.cols[i], cd.out_len);
        MapWConst W(theta_.data() + cd.w_off, cd.out_ch, cd.in_ch * cd.kernel);
        MapVConst shift(theta_.data() + cd.s_off, cd.out_ch);
        ws.z[i].noalias() = W * ws.cols[i];
        ws.z[i].colwise() -= shift;
        ws.y[i] = ws.z[i].cwiseMax(0.0);
        cur = &ws.y[i];
    }
    // flatten row-major (channel-major) to the fc input
    const auto& last = *cur;
    ws.fc_in.resize(nd.fc_in);
    {
        Eigen::Index idx = 0;
        for (Eigen::Index r = 0; r < last.rows(); ++r) {
            for (Eigen::Index c = 0; c < last.cols(); ++c) ws.fc_in[idx++] = last(r, c);
        }
    }
    MapWConst Wfc(theta_.data() + nd.fc_w_off, nd.fc_out, nd.fc_in);
    MapVConst sfc(theta_.data() + nd.fc_s_off, nd.fc_out);
    return Wfc * ws.fc_in - sfc;
}

void ModelEngine::net_backward(const NetDims& nd, const Eigen::VectorXd& dout, const NetWs& ws,
                               Eigen::VectorXd& grad, Eigen::MatrixXd* dinput) const {
    // fc
    {
        MapW gW(grad.data() + nd.fc_w_off, nd.fc_out, nd.fc_in);
        MapV gS(grad.data() + nd.fc_s_off, nd.fc_out);
        gW.noalias() += dout * ws.fc_in.transpose();
        gS -= dout;
    }
    MapWConst Wfc(theta_.data() + nd.fc_w_off, nd.fc_out, nd.fc_in);
    Eigen::VectorXd dflat = Wfc.transpose() * dout;

    const std::size_t L = nd.convs.size();
    // un-flatten into the last conv output gradient
    Eigen::MatrixXd dy(nd.convs[L - 1].out_ch, nd.convs[L - 1].out_len);
    {
        Eigen::Index idx = 0;
        for (Eigen::Index r = 0; r < dy.rows(); ++r) {
            for (Eigen::Index c = 0; c < dy.cols(); ++c) dy(r, c) = dflat[idx++];
        }
    }
    Eigen::MatrixXd dz, dcols, dprev;
    for (std::size_t i = L; i-- > 0;) {
        const auto& cd = nd.convs[i];
        dz = (ws.z[i].array() > 0.0).select(dy, 0.0);
        MapW gW(grad.data() + cd.w_off, cd.out_ch, cd.in_ch * cd.kernel);
        MapV gS(grad.data() + cd.s_off, cd.out_ch);
        gW.noalias() += dz * ws.cols[i].transpose();
        gS -= dz.rowwise().sum();
        if (i == 0 && dinput == nullptr) break;
        MapWConst W(theta_.data() + cd.w_off, cd.out_ch, cd.in_ch * cd.kernel);
        dcols.noalias() = W.transpose() * dz;
        if (i == 0) {
            col2im(dcols, cd.kernel, cd.stride, cd.pad, *dinput, cd.in_ch, cd.in_len);
        } else {
            col2im(dcols, cd.kernel, cd.stride, cd.pad, dprev, cd.in_ch, cd.in_len);
            dy = dprev;
        }
    }
}

Eigen::MatrixXd ModelEngine::omega(const Eigen::MatrixXd& X) {
    if (X.cols() != hyper_.T) throw DimensionError("omega: X must have T columns");
    if (X.rows() < 1) throw DimensionError("omega: X must have at least one channel");
    const Eigen::Index d = X.rows();
    if (omega_ws_.size() < static_cast<std::size_t>(d)) omega_ws_.resize(static_cast<std::size_t>(d));
    Eigen::MatrixXd om(d, hyper_.p);
    for (Eigen::Index l = 0; l < d; ++l) {
        om.row(l) = net_forward(omega_dims_, X.row(l), omega_ws_[static_cast<std::size_t>(l)]).transpose();
    }
    return om;
}

double ModelEngine::g_on(const Eigen::MatrixXd& S) {
    if (S.rows() != hyper_.T || S.cols() != hyper_.p) throw DimensionError("g: S must be T x p");
    // conv over time with p input features: feed S transposed (p x T)
    return net_forward(g_dims_, S.transpose(), g_ws_)[0];
}

ModelEngine::Forward ModelEngine::forward(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z) {
    if (Z.rows() != X.rows()) throw DimensionError("forward: X and Z must have the same channel count");
    if (Z.cols() != hyper_.p) throw DimensionError("forward: Z must have p columns");
    Forward f;
    f.omega = omega(X);
    f.alpha = softmax_columns(f.omega);
    const double c = (f.alpha.array() * Z.array()).sum();
    f.S.noalias() = X.transpose() * f.alpha;
    f.S.array() += c;
    f.logit = g_on(f.S);
    constexpr double lo = std::numeric_limits<double>::min();
    const double hi = std::nextafter(1.0, 0.0);
    f.prob = std::clamp(sigmoid(f.logit), lo, hi);
    return f;
}

double ModelEngine::loss_grad_range(const std::vector<LabeledSample>& data, const std::vector<int>& idx,
                                    std::size_t begin, std::size_t end, Eigen::VectorXd& grad) {
    double loss_sum = 0.0;
    Eigen::MatrixXd dSg, dS, dalpha, domega;
    for (std::size_t ii = begin; ii < end; ++ii) {
        const auto& s = data[static_cast<std::size_t>(idx[ii])];
        const Eigen::Index d = s.X.rows();
        Forward f = forward(s.X, s.Z);
        loss_sum += nll_from_logit(s.y, f.logit);
        const double dlogit = sigmoid(f.logit) - static_cast<double>(s.y);

        // g net
        Eigen::VectorXd dl(1);
        dl[0] = dlogit;
        net_backward(g_dims_, dl, g_ws_, grad, &dSg);
        dS = dSg.transpose();  // T x p

        // aggregation: dalpha = X dS + (sum dS) Z
        const double total = dS.sum();
        dalpha.noalias() = s.X * dS;
        dalpha.noalias() += total * s.Z;

        // softmax backward per column
        domega.resize(d, hyper_.p);
        for (int k = 0; k < hyper_.p; ++k) {
            const auto a = f.alpha.col(k);
            const auto da = dalpha.col(k);
            const double dot = a.dot(da);
            domega.col(k) = a.array() * (da.array() - dot);
        }

        // omega net per channel (workspaces persist from forward())
        for (Eigen::Index l = 0; l < d; ++l) {
            net_backward(omega_dims_, domega.row(l).transpose(), omega_ws_[static_cast<std::size_t>(l)], grad,
                         nullptr);
        }
    }
    return loss_sum;
}

double ModelEngine::loss_range(const std::vector<LabeledSample>& data, const std::vector<int>& idx,
                               std::size_t begin, std::size_t end) {
    double loss_sum = 0.0;
    for (std::size_t ii = begin; ii < end; ++ii) {
        const auto& s = data[static_cast<std::size_t>(idx[ii])];
        Forward f = forward(s.X, s.Z);
        loss_sum += nll_from_logit(s.y, f.logit);
    }
    return loss_sum;
}

// --- public ops ---------------------------------------------------------

Eigen::MatrixXd omega_forward(const MultiChannelSegment& X, const NdlParams& params) {
    ModelEngine eng(params.hyper);
    eng.set_params(params);
    return eng.omega(X.X);
}

ChannelWeights compute_alpha(const Eigen::MatrixXd& omega) {
    if (omega.size() == 0) throw DimensionError("compute_alpha: empty omega");
    if (!omega.allFinite()) throw ValidationError("compute_alpha: non-finite omega values");
    return ChannelWeights{softmax_columns(omega)};
}

AggregateMap aggregate(const MultiChannelSegment& X, const AuxContext& Z, const ChannelWeights& alpha) {
    const Eigen::Index d = X.X.rows();
    if (Z.Z.rows() != d || alpha.alpha.rows() != d) {
        throw DimensionError("aggregate: X, Z and alpha must share the channel count");
    }
    if (Z.Z.cols() != alpha.alpha.cols()) {
        throw DimensionError("aggregate: Z and alpha must share p");
    }
    AggregateMap m;
    const double c = (alpha.alpha.array() * Z.Z.array()).sum();
    m.S.noalias() = X.X.transpose() * alpha.alpha;
    m.S.array() += c;
    return m;
}

double g_forward(const AggregateMap& S, const NdlParams& params) {
    ModelEngine eng(params.hyper);
    eng.set_params(params);
    return eng.g_on(S.S);
}

double predict_proba(const MultiChannelSegment& X, const AuxContext& Z, const NdlParams& params) {
    ModelEngine eng(params.hyper);
    eng.set_params(params);
    return eng.forward(X.X, Z.Z).prob;
}

double nll_loss(const std::vector<LabeledSample>& batch, const NdlParams& params) {
    if (batch.empty()) throw ParameterError("nll_loss: empty batch");
    for (const auto& s : batch) {
        if (s.y != 0 && s.y != 1) throw ParameterError("nll_loss: labels must be 0 or 1");
    }
    ModelEngine eng(params.hyper);
    eng.set_params(params);
    double acc = 0.0;
    for (const auto& s : batch) {
        acc += nll_from_logit(s.y, eng.forward(s.X, s.Z).logit);
    }
    return acc / static_cast<double>(batch.size());
}

Eigen::VectorXd channel_importance(const ChannelWeights& alpha) {
    return alpha.alpha.rowwise().sum();
}

std::vector<std::pair<int, double>> top_channels(const Eigen::VectorXd& importance, int L) {
    const int d = static_cast<int>(importance.size());
    if (L < 1 || L > d) throw ParameterError("top_channels: L must be in [1, d]");
    std::vector<int> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (importance[a] != importance[b]) return importance[a] > importance[b];
        return a < b;
    });
    std::vector<std::pair<int, double>> out;
    out.reserve(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) out.emplace_back(order[static_cast<std::size_t>(i)], importance[order[static_cast<std::size_t>(i)]]);
    return out;
}

}  // namespace ndl
