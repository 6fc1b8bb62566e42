#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "ndl/errors.hpp"
#include "ndl/rng.hpp"
#include "ndl/trainer.hpp"

using namespace ndl;
namespace fs = std::filesystem;

namespace {

Hyper tiny_hyper() {
    Hyper h;
    h.T = 16;
    h.p = 8;
    h.omega_widths = {4, 8};
    h.g_widths = {4, 8};
    return h;
}

// Class 1 samples carry a strong positive offset on every channel; class 0
// the mirror image. Any nonzero g-network slope separates them.
std::vector<LabeledSample> separable_dataset(int n, int d, const Hyper& h, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<LabeledSample> out;
    for (int i = 0; i < n; ++i) {
        const int y = i % 2;
        const double offset = y == 1 ? 2.0 : -2.0;
        LabeledSample s;
        s.X.resize(d, h.T);
        s.Z.resize(d, h.p);
        for (int r = 0; r < d; ++r) {
            for (int c = 0; c < h.T; ++c) s.X(r, c) = rng.normal() * 0.3 + offset;
            for (int c = 0; c < h.p; ++c) s.Z(r, c) = rng.normal() * 0.3 + offset;
        }
        s.y = y;
        out.push_back(std::move(s));
    }
    return out;
}

bool same_params(const NdlParams& a, const NdlParams& b) {
    if (a.tensors.size() != b.tensors.size()) return false;
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
        if (a.tensors[i].data.size() != b.tensors[i].data.size()) return false;
        if (std::memcmp(a.tensors[i].data.data(), b.tensors[i].data.data(),
                        sizeof(float) * a.tensors[i].data.size()) != 0) {
            return false;
        }
    }
    return true;
}

fs::path temp_dir() {
    auto p = fs::temp_directory_path() / "ndl_trainer_tests";
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("fit reduces training loss on separable data") {
    const auto h = tiny_hyper();
    const auto data = separable_dataset(200, 3, h, 1);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-2;
    cfg.seed = 7;
    const auto res = fit(data, cfg, 7, h);
    REQUIRE(res.history.epochs.size() == 20);
    CHECK(res.history.epochs.back().train_loss < res.history.epochs.front().train_loss);
    CHECK(res.history.epochs.back().train_loss < 0.2);
    // best-checkpoint selection never loses to the initial parameters
    CHECK(res.history.best_val_loss <= res.history.epochs.front().val_loss);
}

TEST_CASE("fit is deterministic in the seed") {
    const auto h = tiny_hyper();
    const auto data = separable_dataset(60, 2, h, 2);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 16;
    cfg.seed = 11;
    const auto a = fit(data, cfg, 5, h);
    const auto b = fit(data, cfg, 5, h);
    REQUIRE(a.history.epochs.size() == b.history.epochs.size());
    for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
        CHECK(a.history.epochs[i].train_loss == b.history.epochs[i].train_loss);
        CHECK(a.history.epochs[i].val_loss == b.history.epochs[i].val_loss);
        CHECK(a.history.epochs[i].val.auc == b.history.epochs[i].val.auc);
    }
    CHECK(same_params(a.params, b.params));
}

TEST_CASE("zero learning rate leaves parameters untouched") {
    const auto h = tiny_hyper();
    const auto data = separable_dataset(40, 2, h, 3);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.0;
    cfg.seed = 1;
    const auto init = init_params(h, 9);
    const auto res = fit(data, cfg, init, 0);
    CHECK(same_params(res.params, init));
}

TEST_CASE("tiny batch overfits below 0.05") {
    Hyper h;
    h.T = 16;
    h.p = 8;
    h.omega_widths = {4};
    h.g_widths = {8};
    const auto data = separable_dataset(10, 2, h, 4);  // 8 in train at val_fraction 0.2
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.batch_size = 8;
    cfg.learning_rate = 3e-3;
    cfg.seed = 2;
    const auto res = fit(data, cfg, 3, h);
    double best_train = 1e9;
    for (const auto& e : res.history.epochs) best_train = std::min(best_train, e.train_loss);
    CHECK(best_train < 0.05);
}

TEST_CASE("single-class training split is rejected") {
    const auto h = tiny_hyper();
    auto data = separable_dataset(30, 2, h, 5);
    for (auto& s : data) s.y = 1;
    TrainConfig cfg;
    cfg.epochs = 1;
    CHECK_THROWS_AS((void)fit(data, cfg, 1, h), ValidationError);
}

TEST_CASE("divergence aborts with a diagnostic") {
    const auto h = tiny_hyper();
    const auto data = separable_dataset(40, 2, h, 6);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e100;
    cfg.seed = 3;
    CHECK_THROWS_AS((void)fit(data, cfg, 4, h), DivergenceError);
}

TEST_CASE("evaluate threshold and metric wiring") {
    SUBCASE("perfect separation") {
        std::vector<metrics::ScoredLabel> scored = {{0.9, 1}, {0.8, 1}, {0.2, 0}, {0.1, 0}};
        const auto m = metrics_from_scores(scored, 0.5);
        CHECK(m.auc == doctest::Approx(1.0));
        CHECK(m.f1 == doctest::Approx(1.0));
        CHECK(m.prauc == doctest::Approx(1.0));
        CHECK(m.specificity == doctest::Approx(1.0));
    }
    SUBCASE("constant score at the threshold boundary") {
        // probability >= threshold counts positive, so everything is positive
        std::vector<metrics::ScoredLabel> scored = {{0.5, 1}, {0.5, 0}, {0.5, 1}, {0.5, 0}};
        const auto m = metrics_from_scores(scored, 0.5);
        CHECK(m.sensitivity == doctest::Approx(1.0));
        CHECK(m.specificity == doctest::Approx(0.0));
    }
}

TEST_CASE("history metrics are reproduced by evaluate on the validation split") {
    const auto h = tiny_hyper();
    const auto data = separable_dataset(80, 2, h, 8);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 16;
    cfg.seed = 4;
    const auto res = fit(data, cfg, 6, h);

    std::vector<LabeledSample> val;
    for (int i : res.history.val_indices) val.push_back(data[static_cast<std::size_t>(i)]);
    const auto m = evaluate(res.params, val, 0.5);

    REQUIRE(res.history.best_epoch >= 1);
    const auto& best_row = res.history.epochs[static_cast<std::size_t>(res.history.best_epoch - 1)];
    CHECK(m.sensitivity == doctest::Approx(best_row.val.sensitivity).epsilon(1e-9));
    CHECK(m.precision == doctest::Approx(best_row.val.precision).epsilon(1e-9));
    CHECK(m.f1 == doctest::Approx(best_row.val.f1).epsilon(1e-9));
    if (best_row.val.auc_defined) {
        CHECK(m.auc == doctest::Approx(best_row.val.auc).epsilon(1e-9));
        CHECK(m.prauc == doctest::Approx(best_row.val.prauc).epsilon(1e-9));
    }
}

TEST_CASE("checkpoints and history csv") {
    const auto h = tiny_hyper();
    const auto data = separable_dataset(40, 2, h, 9);
    const auto dir = temp_dir() / "ckpt";
    fs::remove_all(dir);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.seed = 5;
    cfg.checkpoint_every = 2;
    cfg.checkpoint_dir = dir.string();
    const auto res = fit(data, cfg, 7, h);
    CHECK(fs::exists(dir / "epoch_00002.ndl"));
    CHECK(fs::exists(dir / "epoch_00004.ndl"));
    CHECK(fs::exists(dir / "epoch_00004.ndl.bin"));

    const auto csv = (temp_dir() / "history.csv").string();
    write_history_csv(res.history, csv);
    std::ifstream is(csv);
    std::string header;
    std::getline(is, header);
    CHECK(header == "epoch,train_loss,val_loss,sens,prec,f1,prauc,auc");
    int rows = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 4);
}

TEST_CASE("resumed training continues epoch numbering") {
    const auto h = tiny_hyper();
    const auto data = separable_dataset(40, 2, h, 10);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 6;
    const auto first = fit(data, cfg, 8, h);
    const auto resumed = fit(data, cfg, first.params, first.params.epochs_completed);
    REQUIRE(!resumed.history.epochs.empty());
    CHECK(resumed.history.epochs.front().epoch == first.params.epochs_completed + 1);
}

TEST_CASE("train config validation") {
    const auto h = tiny_hyper();
    const auto data = separable_dataset(10, 2, h, 11);
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS((void)fit(data, cfg, 1, h), ParameterError);
    cfg.epochs = 1;
    cfg.val_fraction = 1.0;
    CHECK_THROWS_AS((void)fit(data, cfg, 1, h), ParameterError);
    cfg.val_fraction = 0.2;
    cfg.batch_size = 0;
    CHECK_THROWS_AS((void)fit(data, cfg, 1, h), ParameterError);
}
