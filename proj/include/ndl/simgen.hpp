#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ndl/model.hpp"
#include "ndl/recording.hpp"
#include "ndl/rng.hpp"

namespace ndl::sim {

struct SimConfig {
    int d = 22;
    int T = 64;
    int p = 64;
    std::int64_t n = 0;
    std::uint64_t seed = 0;
    std::string base_source;  // empty = synthetic AR(2); otherwise an NDLR path
};

void validate_sim_config(const SimConfig& c);

// Generative ground truth, drawn once per experiment suite and reused for
// every sample: the per-feature weight-function choices and the logistic
// outcome coefficients.
struct SimTruth {
    std::vector<int> omega_choice;  // length p, indices into the omega bank
    double beta0 = 0.0;
    Eigen::VectorXd beta1;          // length T
    Eigen::VectorXd beta2;          // length p
};

struct SimSample {
    Eigen::MatrixXd X;           // d x T
    Eigen::MatrixXd Z;           // d x p
    int y = 0;
    Eigen::MatrixXd alpha_star;  // d x p
    double g_star = 0.5;
};

struct SimDataset {
    int d = 0, T = 0, p = 0;
    std::uint64_t seed = 0;
    std::vector<SimSample> samples;
    std::optional<SimTruth> truth;
};

constexpr int kOmegaBankSize = 8;

// The eight ground-truth weight statistics, in bank order: log-variance and
// its negation, skewness and its negation, excess kurtosis and its negation,
// log sum |x sin x|, log sum |x cos x|. Population moments, log arguments
// clamped at 1e-12.
double omega_star(int fn_index, const Eigen::VectorXd& x);

// alpha* for one segment: column-k softmax over channels of
// omega_star(choice[k], X row l).
Eigen::MatrixXd alpha_star_of(const Eigen::MatrixXd& X, const std::vector<int>& omega_choice);

// Base-signal source: stationary AR(2) (coefficients 1.3, -0.4, unit
// innovations) in synthetic mode, or random windows of a supplied recording.
// Every draw is standardized (row-centered, global-std-scaled).
class BaseSource {
  public:
    explicit BaseSource(const SimConfig& config);
    Eigen::MatrixXd draw(Rng& rng) const;

  private:
    int d_, width_;
    std::optional<Recording> recording_;
};

Eigen::MatrixXd gen_base_matrix(const SimConfig& config, Rng& rng);

SimTruth build_truth(const SimConfig& config, Rng& rng);

// Full dataset: per sample, base matrix -> (X, Z) split -> alpha* -> S via
// the direct Eq-style summation -> logistic g* -> Bernoulli label. Bitwise
// reproducible for a fixed (config, truth).
SimDataset sample_dataset(const SimConfig& config, const SimTruth& truth);

// S by direct summation over channels of the two per-channel terms; kept
// separate from the model's aggregate() as a cross-check route.
Eigen::MatrixXd aggregate_direct(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& alpha);

std::vector<LabeledSample> to_labeled(const SimDataset& ds);

// Container + truth sidecar persistence. The sidecar (path + ".truth") is
// key-value text with base64-coded f64 vectors; both files round-trip
// bitwise.
void save_dataset(const SimDataset& ds, const std::string& path);
SimDataset load_dataset(const std::string& path);

std::string base64_encode(const unsigned char* data, std::size_t len);
std::vector<unsigned char> base64_decode(const std::string& text);

}  // namespace ndl::sim
