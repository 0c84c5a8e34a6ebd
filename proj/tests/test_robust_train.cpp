#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lnl/robust_train.hpp"

using namespace lnl;
using namespace lnl::train;

namespace {

data::Dataset small_noisy_dataset(int n_per, double noise_rate, uint64_t seed) {
    data::DatasetSpec spec;
    spec.d_core = 3;
    spec.d_spur = 1;
    spec.seed = seed;
    spec.subpops = {
        {0, 0, n_per, {1.0, 1.0, 1.0}, {0.5}, 1.0},
        {1, 1, n_per, {-1.0, -1.0, -1.0}, {-0.5}, 1.0},
    };
    Rng rng(spec.seed);
    data::Dataset ds = data::generate(spec, rng);
    data::NoiseSpec noise;
    noise.rate = noise_rate;
    Rng nrng(derive_seed(seed, "noise"));
    return data::inject_noise(ds, noise, nrng);
}

// Exhaustive subset oracle: best sum over all size-m subsets.
double best_subset_sum(const std::vector<double>& losses, int m) {
    const int n = static_cast<int>(losses.size());
    double best = -1e300;
    for (int mask = 0; mask < (1 << n); ++mask) {
        if (__builtin_popcount(static_cast<unsigned>(mask)) != m) continue;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            if (mask & (1 << i)) sum += losses[i];
        }
        best = std::max(best, sum);
    }
    return best;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.e_warmup = 2;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.k = 5;
    cfg.hidden = 8;
    cfg.seed = 7;
    return cfg;
}

}  // namespace

TEST_CASE("refurbish endpoints and arithmetic") {
    std::vector<double> noisy = {1.0, 0.0};
    std::vector<double> pseudo = {0.2, 0.8};
    CHECK(refurbish(noisy, pseudo, 1.0) == noisy);
    CHECK(refurbish(noisy, pseudo, 0.0) == pseudo);
    auto mid = refurbish(noisy, pseudo, 0.5);
    CHECK(mid[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(mid[1] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK_THROWS_AS(refurbish(noisy, pseudo, 1.5), std::invalid_argument);
}

TEST_CASE("refurbished distributions stay valid and move linearly with w") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const int c = 2 + rng.uniform_int(4);
        std::vector<double> noisy(c, 0.0);
        noisy[rng.uniform_int(c)] = 1.0;
        std::vector<double> pseudo(c);
        double sum = 0.0;
        for (double& v : pseudo) {
            v = rng.uniform() + 1e-3;
            sum += v;
        }
        for (double& v : pseudo) v /= sum;

        double base_dist = 0.0;
        for (int i = 0; i < c; ++i) base_dist += std::abs(pseudo[i] - noisy[i]);

        for (double w : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            auto y = refurbish(noisy, pseudo, w);
            double total = 0.0, dist = 0.0;
            for (int i = 0; i < c; ++i) {
                CHECK(y[i] >= 0.0);
                total += y[i];
                dist += std::abs(y[i] - noisy[i]);
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
            // distance to the noisy one-hot shrinks linearly in w
            CHECK(dist == doctest::Approx((1.0 - w) * base_dist).epsilon(1e-9));
        }
    }
}

TEST_CASE("pseudo labels ensemble the two models on one weak view") {
    Rng ra(1), rb(2);
    nn::ModelParams a = nn::init(3, 4, 2, ra);
    nn::ModelParams b = nn::init(3, 4, 2, rb);
    std::vector<double> x = {0.5, -0.3, 1.2};

    // identical params: ensemble equals the single model
    Rng r1(9), r2(9);
    auto solo = pseudo_label(a, nullptr, x.data(), 3, 0.0, r1);
    auto both = pseudo_label(a, &a, x.data(), 3, 0.0, r2);
    for (size_t i = 0; i < solo.size(); ++i) CHECK(solo[i] == doctest::Approx(both[i]).epsilon(1e-15));

    // different params: elementwise mean of the two predictions
    Rng r3(9);
    auto mixed = pseudo_label(a, &b, x.data(), 3, 0.0, r3);
    auto pa = nn::forward(a, x.data()).probs;
    auto pb = nn::forward(b, x.data()).probs;
    double total = 0.0;
    for (size_t i = 0; i < mixed.size(); ++i) {
        CHECK(mixed[i] == doctest::Approx(0.5 * (pa[i] + pb[i])).epsilon(1e-12));
        total += mixed[i];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("select_top_tau basics") {
    std::vector<double> losses = {0.1, 5.0, 2.0, 0.3};
    CHECK(select_top_tau(losses, 100.0) == std::vector<int>{0, 1, 2, 3});
    CHECK(select_top_tau(losses, 50.0) == std::vector<int>{1, 2});
    // minimum one element even for tiny tau
    CHECK(select_top_tau(losses, 1.0) == std::vector<int>{1});
    // ties prefer the smaller index
    CHECK(select_top_tau({1.0, 1.0, 1.0}, 34.0) == std::vector<int>{0});
    CHECK_THROWS_AS(select_top_tau({}, 50.0), std::invalid_argument);
}

TEST_CASE("select_top_tau maximizes the subset sum (exhaustive oracle)") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + rng.uniform_int(12);
        std::vector<double> losses(n);
        for (double& l : losses) l = rng.uniform_int(6) / 2.0;  // ties likely
        const double tau = 5.0 + 95.0 * rng.uniform();
        auto sel = select_top_tau(losses, tau);
        const int m = std::max(1, static_cast<int>(std::floor(n * tau / 100.0)));
        REQUIRE(static_cast<int>(sel.size()) == m);
        double sum = 0.0;
        for (int i : sel) sum += losses[i];
        CHECK(sum == doctest::Approx(best_subset_sum(losses, m)).epsilon(1e-12));
    }
}

TEST_CASE("degradation identity: robust epoch equals ERM when disabled") {
    data::Dataset ds = small_noisy_dataset(40, 0.2, 3);
    data::TrainView view = data::training_view(ds);

    TrainConfig cfg = tiny_config();
    cfg.tau = 100.0;
    cfg.sigma_w = 0.0;
    cfg.sigma_s = 0.0;
    cfg.p_drop = 0.0;
    cfg.use_dro = true;  // tau=100 has to neutralize it

    Rng pr(derive_seed(cfg.seed, "init"));
    nn::ModelParams erm_params = nn::init(view.dim(), cfg.hidden, view.num_classes, pr);
    nn::ModelParams rob_params = erm_params;
    nn::OptState erm_opt, rob_opt;
    erm_opt.learning_rate = rob_opt.learning_rate = cfg.lr;
    erm_opt.momentum = rob_opt.momentum = cfg.momentum;

    std::vector<double> w_ones(view.n(), 1.0);
    Rng erm_shuffle(11), erm_augment(12);
    Rng rob_shuffle(11), rob_augment(12);
    for (int e = 0; e < 4; ++e) {
        warmup_epoch(erm_params, erm_opt, view, cfg, erm_shuffle, erm_augment);
        robust_train_epoch(rob_params, nullptr, rob_opt, view, w_ones, cfg, rob_shuffle, rob_augment);
        CHECK(erm_params.w1.data == rob_params.w1.data);
        CHECK(erm_params.b1 == rob_params.b1);
        CHECK(erm_params.w2.data == rob_params.w2.data);
        CHECK(erm_params.b2 == rob_params.b2);
    }
}

TEST_CASE("w = 0 trains purely against the pseudo-labels") {
    std::vector<double> noisy = {0.0, 1.0};
    std::vector<double> pseudo = {0.7, 0.3};
    CHECK(refurbish(noisy, pseudo, 0.0) == pseudo);

    // one batch with w=0 moves params even when labels are constant garbage:
    // the target is the weak-view prediction, not the labels
    data::Dataset ds = small_noisy_dataset(20, 0.0, 5);
    for (auto& l : ds.noisy_labels) l = 0;
    data::TrainView view = data::training_view(ds);
    TrainConfig cfg = tiny_config();
    cfg.batch_size = 8;
    cfg.sigma_s = 0.5;  // strong view differs from weak view
    Rng pr(2);
    nn::ModelParams params = nn::init(view.dim(), cfg.hidden, view.num_classes, pr);
    nn::ModelParams before = params;
    nn::OptState opt;
    std::vector<double> w_zero(view.n(), 0.0);
    Rng sh(3), au(4);
    robust_train_epoch(params, nullptr, opt, view, w_zero, cfg, sh, au);
    CHECK(params.w1.data != before.w1.data);
}

TEST_CASE("robust epoch is deterministic under a fixed seed") {
    data::Dataset ds = small_noisy_dataset(30, 0.2, 9);
    data::TrainView view = data::training_view(ds);
    TrainConfig cfg = tiny_config();

    auto run_once = [&]() {
        Rng pr(derive_seed(cfg.seed, "init"));
        nn::ModelParams params = nn::init(view.dim(), cfg.hidden, view.num_classes, pr);
        nn::OptState opt;
        std::vector<double> w(view.n(), 0.8);
        Rng sh(5), au(6);
        robust_train_epoch(params, nullptr, opt, view, w, cfg, sh, au);
        return params;
    };
    nn::ModelParams a = run_once();
    nn::ModelParams b = run_once();
    CHECK(a.w1.data == b.w1.data);
    CHECK(a.w2.data == b.w2.data);
}

TEST_CASE("train with zero robust epochs is the warmup-only ERM baseline") {
    data::Dataset ds = small_noisy_dataset(40, 0.2, 13);
    data::TrainView view = data::training_view(ds);

    TrainConfig cfg = tiny_config();
    cfg.epochs = 0;
    cfg.co_training = false;
    TrainResult res = lnl::train::train(view, cfg);
    CHECK(res.report.epochs.size() == 2);
    CHECK(res.report.epochs[0].warmup);
    CHECK(!res.last.has_b);

    // manual ERM with the same derived streams lands on identical params
    Rng init_rng = Rng::stream(cfg.seed, "init_a");
    nn::ModelParams params = nn::init(view.dim(), cfg.hidden, view.num_classes, init_rng);
    nn::OptState opt;
    opt.learning_rate = cfg.lr;
    opt.momentum = cfg.momentum;
    Rng sh = Rng::stream(cfg.seed, "shuffle_a");
    Rng au = Rng::stream(cfg.seed, "augment_a");
    for (int e = 0; e < cfg.e_warmup; ++e) warmup_epoch(params, opt, view, cfg, sh, au);
    CHECK(params.w1.data == res.last.params_a.w1.data);
    CHECK(params.w2.data == res.last.params_a.w2.data);
}

TEST_CASE("full train run is deterministic") {
    data::Dataset ds = small_noisy_dataset(40, 0.25, 17);
    data::TrainView view = data::training_view(ds);
    TrainConfig cfg = tiny_config();
    TrainResult a = lnl::train::train(view, cfg);
    TrainResult b = lnl::train::train(view, cfg);
    CHECK(a.last.params_a.w1.data == b.last.params_a.w1.data);
    CHECK(a.last.params_b.w1.data == b.last.params_b.w1.data);
    CHECK(a.report.epochs.size() == b.report.epochs.size());
    for (size_t i = 0; i < a.report.epochs.size(); ++i)
        CHECK(a.report.epochs[i].train_loss == b.report.epochs[i].train_loss);
}

TEST_CASE("training never reads the hidden fields") {
    data::Dataset ds = small_noisy_dataset(40, 0.25, 19);
    data::Dataset scrambled = ds;
    // garbage in every hidden field; the training view cannot see them
    Rng rng(1);
    for (int i = 0; i < scrambled.n(); ++i) {
        scrambled.true_labels[i] = rng.uniform_int(2);
        scrambled.group_ids[i] = rng.uniform_int(5);
        scrambled.corrupted[i] = static_cast<uint8_t>(rng.uniform_int(2));
    }
    TrainConfig cfg = tiny_config();
    TrainResult a = lnl::train::train(data::training_view(ds), cfg);
    TrainResult b = lnl::train::train(data::training_view(scrambled), cfg);
    CHECK(a.last.params_a.w1.data == b.last.params_a.w1.data);
    CHECK(a.last.params_b.w2.data == b.last.params_b.w2.data);
}

TEST_CASE("swapping the model streams swaps the trajectories exactly") {
    data::Dataset ds = small_noisy_dataset(40, 0.25, 23);
    data::TrainView view = data::training_view(ds);
    TrainConfig cfg = tiny_config();
    cfg.co_training = true;

    TrainConfig swapped = cfg;
    swapped.swap_model_streams = true;

    TrainResult r1 = lnl::train::train(view, cfg);
    TrainResult r2 = lnl::train::train(view, swapped);
    CHECK(r1.last.params_a.w1.data == r2.last.params_b.w1.data);
    CHECK(r1.last.params_b.w1.data == r2.last.params_a.w1.data);
    CHECK(r1.last.params_a.b2 == r2.last.params_b.b2);

    // the ensemble is symmetric, so predictions agree everywhere
    for (int i = 0; i < view.n(); ++i) {
        auto pa = nn::forward(r1.last.params_a, view.features->row(i)).probs;
        auto pb = nn::forward(r1.last.params_b, view.features->row(i)).probs;
        auto qa = nn::forward(r2.last.params_a, view.features->row(i)).probs;
        auto qb = nn::forward(r2.last.params_b, view.features->row(i)).probs;
        for (size_t c = 0; c < pa.size(); ++c)
            CHECK(0.5 * (pa[c] + pb[c]) == 0.5 * (qa[c] + qb[c]));
    }
}

TEST_CASE("config validation") {
    TrainConfig cfg = tiny_config();
    cfg.tau = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_config();
    cfg.p_drop = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
