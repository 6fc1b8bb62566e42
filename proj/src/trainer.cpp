#include "ndl/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "ndl/errors.hpp"
#include "ndl/rng.hpp"
#include "ndl/serialize.hpp"
#include "ndl/threadpool.hpp"

namespace ndl {

namespace {

constexpr int kChunk = 8;  // fixed reduction granularity, independent of thread count

struct Adam {
    Eigen::VectorXd m, v;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::int64_t t = 0;

    explicit Adam(Eigen::Index n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}

    void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr) {
        ++t;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        theta.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
    }
};

void validate_config(const TrainConfig& c) {
    if (c.epochs < 1) throw ParameterError("train: epochs must be >= 1");
    if (c.batch_size < 1) throw ParameterError("train: batch_size must be >= 1");
    if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) {
        throw ParameterError("train: val_fraction must be inside (0, 1)");
    }
    if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
        throw ParameterError("train: learning rate must be finite and >= 0");
    }
}

// A free engine always exists because concurrent tasks never exceed the
// pool size and engines match the pool size.
int acquire_engine(std::vector<std::atomic<bool>>& used) {
    for (;;) {
        for (std::size_t e = 0; e < used.size(); ++e) {
            bool expected = false;
            if (used[e].compare_exchange_strong(expected, true)) return static_cast<int>(e);
        }
    }
}

// Chunked deterministic reduction: per-chunk partial sums are combined in
// chunk order, so the result does not depend on how chunks map to threads.
double batch_loss_grad(std::vector<ModelEngine>& engines, ThreadPool& pool,
                       const std::vector<LabeledSample>& data, const std::vector<int>& idx, std::size_t begin,
                       std::size_t end, std::vector<Eigen::VectorXd>& chunk_grads, Eigen::VectorXd& grad_out) {
    const std::size_t n = end - begin;
    const int n_chunks = static_cast<int>((n + kChunk - 1) / kChunk);
    std::vector<double> chunk_loss(static_cast<std::size_t>(n_chunks), 0.0);
    if (chunk_grads.size() < static_cast<std::size_t>(n_chunks)) {
        chunk_grads.resize(static_cast<std::size_t>(n_chunks),
                           Eigen::VectorXd::Zero(engines.front().theta().size()));
    }
    // Results are chunk-indexed, so engine-to-chunk assignment does not
    // affect the reduction order.
    std::vector<std::atomic<bool>> engine_used(engines.size());
    pool.parallel_for(n_chunks, [&](int c) {
        const int slot = acquire_engine(engine_used);
        const std::size_t cb = begin + static_cast<std::size_t>(c) * kChunk;
        const std::size_t ce = std::min(end, cb + kChunk);
        auto& g = chunk_grads[static_cast<std::size_t>(c)];
        g.setZero();
        chunk_loss[static_cast<std::size_t>(c)] = engines[static_cast<std::size_t>(slot)].loss_grad_range(
            data, idx, cb, ce, g);
        engine_used[static_cast<std::size_t>(slot)].store(false);
    });
    grad_out.setZero();
    double loss = 0.0;
    for (int c = 0; c < n_chunks; ++c) {
        loss += chunk_loss[static_cast<std::size_t>(c)];
        grad_out += chunk_grads[static_cast<std::size_t>(c)];
    }
    return loss;
}

double dataset_loss(std::vector<ModelEngine>& engines, ThreadPool& pool, const std::vector<LabeledSample>& data,
                    const std::vector<int>& idx) {
    const std::size_t n = idx.size();
    const int n_chunks = static_cast<int>((n + kChunk - 1) / kChunk);
    std::vector<double> chunk_loss(static_cast<std::size_t>(n_chunks), 0.0);
    std::vector<std::atomic<bool>> engine_used(engines.size());
    pool.parallel_for(n_chunks, [&](int c) {
        const int slot = acquire_engine(engine_used);
        const std::size_t cb = static_cast<std::size_t>(c) * kChunk;
        const std::size_t ce = std::min(n, cb + kChunk);
        chunk_loss[static_cast<std::size_t>(c)] =
            engines[static_cast<std::size_t>(slot)].loss_range(data, idx, cb, ce);
        engine_used[static_cast<std::size_t>(slot)].store(false);
    });
    double loss = 0.0;
    for (double v : chunk_loss) loss += v;
    return loss / static_cast<double>(n);
}

std::vector<double> predict_indices(std::vector<ModelEngine>& engines, ThreadPool& pool,
                                    const std::vector<LabeledSample>& data, const std::vector<int>& idx) {
    std::vector<double> probs(idx.size(), 0.0);
    const int n_chunks = static_cast<int>((idx.size() + kChunk - 1) / kChunk);
    std::vector<std::atomic<bool>> engine_used(engines.size());
    pool.parallel_for(n_chunks, [&](int c) {
        const int slot = acquire_engine(engine_used);
        auto& eng = engines[static_cast<std::size_t>(slot)];
        const std::size_t cb = static_cast<std::size_t>(c) * kChunk;
        const std::size_t ce = std::min(idx.size(), cb + kChunk);
        for (std::size_t i = cb; i < ce; ++i) {
            const auto& s = data[static_cast<std::size_t>(idx[i])];
            probs[i] = eng.forward(s.X, s.Z).prob;
        }
        engine_used[static_cast<std::size_t>(slot)].store(false);
    });
    return probs;
}

EvalMetrics eval_indices(std::vector<ModelEngine>& engines, ThreadPool& pool,
                         const std::vector<LabeledSample>& data, const std::vector<int>& idx, double threshold) {
    const auto probs = predict_indices(engines, pool, data, idx);
    std::vector<metrics::ScoredLabel> scored;
    scored.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        scored.emplace_back(probs[i], data[static_cast<std::size_t>(idx[i])].y);
    }
    return metrics_from_scores(scored, threshold);
}

}  // namespace

EvalMetrics metrics_from_scores(const std::vector<metrics::ScoredLabel>& scored, double threshold) {
    if (scored.empty()) throw ParameterError("evaluate: empty dataset");
    EvalMetrics m;
    for (const auto& [prob, y] : scored) {
        const bool pred = prob >= threshold;
        if (y != 0) {
            (pred ? m.counts.tp : m.counts.fn)++;
        } else {
            (pred ? m.counts.fp : m.counts.tn)++;
        }
    }
    const auto cm = metrics::confusion_metrics(m.counts);
    m.sensitivity = cm.sensitivity;
    m.precision = cm.precision;
    m.specificity = cm.specificity;
    m.f1 = cm.f1;
    m.sensitivity_defined = cm.sensitivity_defined;
    m.precision_defined = cm.precision_defined;
    m.specificity_defined = cm.specificity_defined;
    const bool both = (m.counts.tp + m.counts.fn) > 0 && (m.counts.fp + m.counts.tn) > 0;
    if (both) {
        m.auc = metrics::roc_auc(scored);
        m.auc_defined = true;
    } else {
        m.auc = std::numeric_limits<double>::quiet_NaN();
    }
    if (m.counts.tp + m.counts.fn > 0) {
        m.prauc = metrics::pr_auc(scored);
        m.prauc_defined = true;
    } else {
        m.prauc = std::numeric_limits<double>::quiet_NaN();
    }
    return m;
}

FitResult fit(const std::vector<LabeledSample>& dataset, const TrainConfig& config, const NdlParams& init,
              int start_epoch) {
    validate_config(config);
    if (dataset.size() < 2) throw ParameterError("train: need at least two samples");
    for (const auto& s : dataset) {
        if (s.y != 0 && s.y != 1) throw ParameterError("train: labels must be 0 or 1");
    }

    const std::size_t n = dataset.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    {
        Rng rng(Rng::derive(config.seed, 0x5917));
        for (std::size_t i = n - 1; i > 0; --i) {
            const std::size_t j = rng.uniform_int(i + 1);
            std::swap(order[i], order[j]);
        }
    }
    std::size_t n_val = static_cast<std::size_t>(std::lround(config.val_fraction * static_cast<double>(n)));
    n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
    std::vector<int> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<int> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());

    {
        bool has_pos = false, has_neg = false;
        for (int i : train_idx) {
            (dataset[static_cast<std::size_t>(i)].y != 0 ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) {
            throw ValidationError("train: training split must contain both classes");
        }
    }

    ThreadPool pool(config.threads);
    std::vector<ModelEngine> engines;
    const int n_engines = std::max(1, pool.size());
    engines.reserve(static_cast<std::size_t>(n_engines));
    for (int i = 0; i < n_engines; ++i) engines.emplace_back(init.hyper);

    NdlParams params = init;
    Eigen::VectorXd theta = params_to_flat(params);
    auto sync_engines = [&] {
        for (auto& e : engines) e.set_theta(theta);
    };
    sync_engines();

    Adam adam(theta.size());
    Eigen::VectorXd grad(theta.size());
    std::vector<Eigen::VectorXd> chunk_grads;

    TrainHistory history;
    history.train_indices = train_idx;
    history.val_indices = val_idx;

    double best_val_loss = dataset_loss(engines, pool, dataset, val_idx);
    Eigen::VectorXd best_theta = theta;
    int best_epoch = start_epoch;

    std::vector<int> epoch_order = train_idx;
    for (int e = 1; e <= config.epochs; ++e) {
        const int epoch_no = start_epoch + e;
        {
            Rng rng(Rng::derive(config.seed, 0xE70C000ULL + static_cast<std::uint64_t>(epoch_no)));
            for (std::size_t i = epoch_order.size() - 1; i > 0; --i) {
                const std::size_t j = rng.uniform_int(i + 1);
                std::swap(epoch_order[i], epoch_order[j]);
            }
        }
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < epoch_order.size(); b += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t be = std::min(epoch_order.size(), b + static_cast<std::size_t>(config.batch_size));
            const double batch_sum =
                batch_loss_grad(engines, pool, dataset, epoch_order, b, be, chunk_grads, grad);
            const double batch_n = static_cast<double>(be - b);
            if (!std::isfinite(batch_sum)) {
                throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch_no));
            }
            loss_sum += batch_sum;
            grad /= batch_n;
            adam.step(theta, grad, config.learning_rate);
            // keep parameters on the f32 grid so save/load is exact
            theta = theta.cast<float>().cast<double>();
            sync_engines();
        }

        EpochRecord rec;
        rec.epoch = epoch_no;
        rec.train_loss = loss_sum / static_cast<double>(epoch_order.size());
        rec.val_loss = dataset_loss(engines, pool, dataset, val_idx);
        rec.val = eval_indices(engines, pool, dataset, val_idx, 0.5);
        if (!std::isfinite(rec.val_loss)) {
            throw DivergenceError("train: non-finite validation loss at epoch " + std::to_string(epoch_no));
        }
        history.epochs.push_back(rec);

        if (rec.val_loss < best_val_loss) {
            best_val_loss = rec.val_loss;
            best_theta = theta;
            best_epoch = epoch_no;
        }

        if (config.checkpoint_every > 0 && !config.checkpoint_dir.empty() && e % config.checkpoint_every == 0) {
            flat_to_params(theta, params);
            params.epochs_completed = epoch_no;
            std::filesystem::create_directories(config.checkpoint_dir);
            char name[64];
            std::snprintf(name, sizeof(name), "epoch_%05d.ndl", epoch_no);
            save_model(params, (std::filesystem::path(config.checkpoint_dir) / name).string());
        }
    }

    flat_to_params(best_theta, params);
    params.epochs_completed = best_epoch;
    history.best_epoch = best_epoch;
    history.best_val_loss = best_val_loss;
    return FitResult{std::move(params), std::move(history)};
}

FitResult fit(const std::vector<LabeledSample>& dataset, const TrainConfig& config, std::uint64_t init_seed,
              const Hyper& hyper) {
    return fit(dataset, config, init_params(hyper, init_seed), 0);
}

std::vector<double> predict_all(const NdlParams& params, const std::vector<LabeledSample>& dataset, int threads) {
    ThreadPool pool(threads);
    std::vector<ModelEngine> engines;
    for (int i = 0; i < std::max(1, pool.size()); ++i) engines.emplace_back(params.hyper);
    for (auto& e : engines) e.set_params(params);
    std::vector<int> idx(dataset.size());
    std::iota(idx.begin(), idx.end(), 0);
    return predict_indices(engines, pool, dataset, idx);
}

EvalMetrics evaluate(const NdlParams& params, const std::vector<LabeledSample>& dataset, double threshold) {
    if (dataset.empty()) throw ParameterError("evaluate: empty dataset");
    const auto probs = predict_all(params, dataset, 1);
    std::vector<metrics::ScoredLabel> scored;
    scored.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) scored.emplace_back(probs[i], dataset[i].y);
    return metrics_from_scores(scored, threshold);
}

void write_history_csv(const TrainHistory& h, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("history: cannot open '" + path + "' for writing");
    os << "epoch,train_loss,val_loss,sens,prec,f1,prauc,auc\n";
    os.precision(10);
    for (const auto& r : h.epochs) {
        os << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val.sensitivity << ','
           << r.val.precision << ',' << r.val.f1 << ',' << r.val.prauc << ',' << r.val.auc << '\n';
    }
    if (!os) throw IoError("history: write failed for '" + path + "'");
}

}  // namespace ndl
