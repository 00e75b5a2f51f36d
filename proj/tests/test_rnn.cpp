// SPDX-License-Identifier: Apache-2.0
#include "strata/adamw.hpp"
#include "strata/rnn.hpp"
#include "strata/synth.hpp"

#include <doctest.h>

#include <cmath>

using namespace strata;

namespace {

double sig(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// Scalar-by-scalar reference recurrences over the model's named tensors.
struct Tensors {
    const RnnModel& m;
    std::string prefix;
    double at(const std::string& name, Eigen::Index r, Eigen::Index c = 0) const {
        for (const auto& t : m.tensors())
            if (t.name == prefix + name) return m.parameters()[t.offset + r + c * t.rows];
        FAIL("no tensor " << prefix + name);
        return 0;
    }
};

// Returns hidden states h_1..h_T (T x H) of one channel for input rows x (T x I).
Matrix oracle_hidden(const RnnModel& m, const std::string& prefix, const Matrix& x) {
    const Tensors p{m, prefix};
    const auto H = m.hidden_size();
    const auto I = x.cols();
    std::vector<double> h(static_cast<std::size_t>(H), 0.0), c(static_cast<std::size_t>(H), 0.0);
    Matrix out(x.rows(), H);
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        auto pre = [&](Eigen::Index row, bool with_hidden_bias) {
            double a = 0;
            for (Eigen::Index k = 0; k < I; ++k) a += p.at("w_input", row, k) * x(t, k);
            for (Eigen::Index l = 0; l < H; ++l) a += p.at("w_hidden", row, l) * h[static_cast<std::size_t>(l)];
            return a + (with_hidden_bias ? p.at("b_input", row) + p.at("b_hidden", row) : p.at("bias", row));
        };
        std::vector<double> next(static_cast<std::size_t>(H));
        for (Eigen::Index j = 0; j < H; ++j) {
            const auto u = static_cast<std::size_t>(j);
            if (m.cell() == CellType::gru) {
                const double r = sig(pre(j, true));
                const double z = sig(pre(H + j, true));
                double xin = p.at("b_input", 2 * H + j), hin = p.at("b_hidden", 2 * H + j);
                for (Eigen::Index k = 0; k < I; ++k) xin += p.at("w_input", 2 * H + j, k) * x(t, k);
                for (Eigen::Index l = 0; l < H; ++l) hin += p.at("w_hidden", 2 * H + j, l) * h[static_cast<std::size_t>(l)];
                const double n = std::tanh(xin + r * hin);
                next[u] = (1 - z) * n + z * h[u];
            } else {
                const double i = sig(pre(j, false));
                const double f = sig(pre(H + j, false));
                const double g = std::tanh(pre(2 * H + j, false));
                const double o = sig(pre(3 * H + j, false));
                c[u] = f * c[u] + i * g;
                next[u] = o * std::tanh(c[u]);
            }
        }
        h = next;
        for (Eigen::Index j = 0; j < H; ++j) out(t, j) = h[static_cast<std::size_t>(j)];
    }
    return out;
}

RnnModel random_model(CellType cell, bool per_feature, Eigen::Index F, Eigen::Index S, Eigen::Index H,
                      std::uint64_t seed) {
    RnnModel m(cell, F, S, H, per_feature);
    Rng rng(seed);
    for (auto& w : m.parameters()) w = 0.6 * rng.normal();
    return m;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
    Matrix x(r, c);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    return x;
}

double loss_of(const RnnModel& m, const Matrix& series, const Vector& statics) {
    const auto trace = forward(m, series, statics);
    return loss_mse(trace.predictions(m), series.bottomRows(series.rows() - 1));
}

// Largest relative error between BPTT and central differences over every parameter.
double gradient_error(CellType cell, bool per_feature, std::uint64_t seed) {
    const Eigen::Index F = 3, S = 2, H = 5, T = 4;
    auto m = random_model(cell, per_feature, F, S, H, seed);
    Rng rng(seed + 100);
    const Matrix series = random_matrix(T, F, rng);
    const Vector statics = random_matrix(S, 1, rng);
    Vector grad = Vector::Zero(m.parameters().size());
    loss_and_gradient(m, series, statics, 1.0, grad);
    double worst = 0;
    const double eps = 1e-5;
    for (Eigen::Index k = 0; k < m.parameters().size(); ++k) {
        const double keep = m.parameters()[k];
        m.parameters()[k] = keep + eps;
        const double up = loss_of(m, series, statics);
        m.parameters()[k] = keep - eps;
        const double down = loss_of(m, series, statics);
        m.parameters()[k] = keep;
        const double fd = (up - down) / (2 * eps);
        const double denom = std::max({std::abs(fd), std::abs(grad[k]), 1e-6});
        worst = std::max(worst, std::abs(fd - grad[k]) / denom);
    }
    return worst;
}

PreparedCohort small_prepared(std::uint64_t seed, int n = 40, int hours = 6) {
    SynthConfig sc;
    sc.n_stays = n;
    sc.n_features = 3;
    sc.n_statics = 2;
    sc.hours = hours;
    sc.seed = seed;
    const auto cohort = generate_cohort(sc, generate_taxonomy(sc));
    return prepare(cohort, split(cohort, {0.7, 0.15, 0.15}, seed), {});
}

}  // namespace

TEST_CASE("initialization bounds and determinism") {
    RnnConfig c;
    c.hidden_size = 16;
    const auto a = init_model(c, 3, 2, 5);
    const auto b = init_model(c, 3, 2, 5);
    CHECK(a.parameters() == b.parameters());
    CHECK(a.parameters().cwiseAbs().maxCoeff() <= 0.25);
    for (const auto& t : a.tensors())
        if (t.cols == 1) CHECK(a.parameters().segment(t.offset, t.rows).isZero());
    c.hidden_size = 1;
    const auto one = init_model(c, 3, 0, 5);
    CHECK(one.parameters().cwiseAbs().maxCoeff() <= 1.0);
    CHECK(one.parameters().cwiseAbs().maxCoeff() > 0.5);
}

TEST_CASE("zero parameters are a fixed point") {
    for (auto cell : {CellType::gru, CellType::lstm}) {
        RnnModel m(cell, 3, 2, 4, false);
        Rng rng(1);
        const auto trace = forward(m, random_matrix(5, 3, rng), Vector::Ones(2));
        CHECK(trace.channels[0].hidden.isZero());
        if (cell == CellType::lstm) CHECK(trace.channels[0].cell.isZero());
    }
}

TEST_CASE("hidden states match the scalar recurrence") {
    for (auto cell : {CellType::gru, CellType::lstm}) {
        for (bool per_feature : {false, true}) {
            const auto m = random_model(cell, per_feature, 2, 1, 3, 17);
            Matrix x(3, 2);
            x << 0.5, -1.0, 0.25, 2.0, -0.75, 0.1;
            Vector s(1);
            s << 0.3;
            const auto trace = forward(m, x, s);
            for (Eigen::Index c = 0; c < m.n_channels(); ++c) {
                const auto ref = oracle_hidden(m, per_feature ? "channel" + std::to_string(c) + "." : "",
                                               m.channel_input(c, x, s));
                const Matrix got = trace.channels[static_cast<std::size_t>(c)].hidden.rightCols(3).transpose();
                CHECK((got - ref).cwiseAbs().maxCoeff() < 1e-12);
            }
        }
    }
}

TEST_CASE("predictions come from the readout of h_t") {
    const auto m = random_model(CellType::gru, false, 2, 0, 3, 4);
    Rng rng(2);
    const Matrix x = random_matrix(4, 2, rng);
    const auto trace = forward(m, x, Vector());
    const Tensors p{m, ""};
    const auto pred = trace.predictions(m);
    REQUIRE(pred.rows() == 3);
    for (Eigen::Index t = 0; t < 3; ++t)
        for (Eigen::Index f = 0; f < 2; ++f) {
            double y = p.at("b_out", f);
            for (Eigen::Index j = 0; j < 3; ++j) y += p.at("w_out", f, j) * trace.channels[0].hidden(j, t + 1);
            CHECK(pred(t, f) == doctest::Approx(y).epsilon(1e-12));
        }
}

TEST_CASE("mse examples") {
    Matrix a(1, 2), b(1, 2);
    a << 0, 2;
    b << 1, 0;
    CHECK(loss_mse(a, b) == 2.5);
    CHECK(loss_mse(a, a) == 0.0);
    CHECK(loss_mse(a, a.array() + 1.0) == 1.0);
}

TEST_CASE("BPTT matches central differences") {
    for (auto cell : {CellType::gru, CellType::lstm})
        for (bool per_feature : {false, true})
            for (std::uint64_t seed : {1u, 2u, 3u}) {
                CAPTURE(to_string(cell));
                CAPTURE(per_feature);
                CAPTURE(seed);
                CHECK(gradient_error(cell, per_feature, seed) < 1e-4);
            }
}

TEST_CASE("gradient scale is linear and T=1 contributes nothing") {
    auto m = random_model(CellType::lstm, false, 3, 2, 4, 9);
    Rng rng(3);
    const Matrix x = random_matrix(5, 3, rng);
    const Vector s = random_matrix(2, 1, rng);
    Vector g1 = Vector::Zero(m.parameters().size()), g2 = g1;
    loss_and_gradient(m, x, s, 1.0, g1);
    loss_and_gradient(m, x, s, 2.0, g2);
    CHECK((g2 - 2.0 * g1).cwiseAbs().maxCoeff() < 1e-12);

    Vector g = Vector::Zero(m.parameters().size());
    CHECK(loss_and_gradient(m, x.topRows(1), s, 1.0, g) == 0.0);
    CHECK(g.isZero());
}

TEST_CASE("batch gradient is the mean of stay gradients") {
    const auto cohort = small_prepared(4, 12);
    RnnConfig rc;
    rc.hidden_size = 4;
    const auto m = init_model(rc, cohort.n_features(), cohort.static_width(), 1);
    std::vector<std::size_t> batch{0, 3, 5, 7};
    const auto bg = batch_gradient(m, cohort, batch);
    Vector sum = Vector::Zero(m.parameters().size());
    double loss = 0;
    for (auto i : batch) loss += loss_and_gradient(m, cohort.stays[i].series, cohort.stays[i].statics, 0.25, sum);
    CHECK(bg.contributing == 4);
    CHECK(bg.loss == doctest::Approx(loss / 4).epsilon(1e-12));
    CHECK((bg.gradient - sum).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("AdamW steps") {
    AdamWConfig c;
    c.learning_rate = 0.1;
    c.weight_decay = 0.0;
    Vector theta = Vector::Zero(1);
    AdamWState st;
    st.reset(1);
    adamw_step(theta, Vector::Ones(1), st, c);
    CHECK(theta[0] == doctest::Approx(-0.1).epsilon(1e-7));

    Vector w(3);
    w << 1, -2, 3;
    const Vector keep = w;
    st.reset(3);
    adamw_step(w, Vector::Zero(3), st, c);
    CHECK(w == keep);

    c.weight_decay = 0.5;
    st.reset(3);
    adamw_step(w, Vector::Zero(3), st, c);
    CHECK((w - keep * (1 - 0.1 * 0.5)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("training determinism and the no-update limit") {
    const auto cohort = small_prepared(6, 30);
    const auto sp = [&] {
        SplitAssignment a;
        for (std::size_t i = 0; i < cohort.size(); ++i) {
            a.stay_ids.push_back(cohort.stays[i].stay_id);
            a.splits.push_back(i % 5 == 0 ? Split::val : Split::train);
        }
        return a;
    }();
    RnnConfig rc;
    rc.hidden_size = 6;
    rc.epochs = 3;
    rc.batch_size = 8;
    rc.optimizer.learning_rate = 1e-2;
    const auto a = train(cohort, sp, rc);
    const auto b = train(cohort, sp, rc);
    REQUIRE(a.curve.size() == 4);
    for (std::size_t e = 0; e < a.curve.size(); ++e) {
        CHECK(a.curve[e].train_mse == b.curve[e].train_mse);
        CHECK(a.curve[e].val_mse == b.curve[e].val_mse);
    }
    CHECK(a.model.parameters() == b.model.parameters());

    rc.optimizer.learning_rate = 0.0;
    rc.optimizer.weight_decay = 0.0;
    const auto frozen = train(cohort, sp, rc);
    for (const auto& e : frozen.curve) {
        CHECK(e.train_mse == doctest::Approx(frozen.curve[0].train_mse).epsilon(1e-12));
        CHECK(e.val_mse == doctest::Approx(frozen.curve[0].val_mse).epsilon(1e-12));
    }
}

TEST_CASE("training ignores input order") {
    const auto cohort = small_prepared(7, 24);
    PreparedCohort shuffled = cohort;
    std::reverse(shuffled.stays.begin(), shuffled.stays.end());
    auto split_of = [](const PreparedCohort& c) {
        SplitAssignment a;
        for (const auto& s : c.stays) {
            a.stay_ids.push_back(s.stay_id);
            a.splits.push_back(s.stay_id.back() == '3' ? Split::val : Split::train);
        }
        return a;
    };
    RnnConfig rc;
    rc.hidden_size = 4;
    rc.epochs = 2;
    rc.batch_size = 5;
    rc.optimizer.learning_rate = 1e-2;
    const auto a = train(cohort, split_of(cohort), rc);
    const auto b = train(shuffled, split_of(shuffled), rc);
    CHECK((a.model.parameters() - b.model.parameters()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("embeddings are final hidden states") {
    auto cohort = small_prepared(8, 10);
    RnnConfig rc;
    rc.per_feature = true;
    rc.hidden_per_feature = 8;
    const auto m = init_model(rc, cohort.n_features(), cohort.static_width(), 2);
    const auto e = embed_rnn(m, cohort);
    CHECK(e.dim() == 24);
    CHECK(e.provenance == "gru_pf");

    cohort.stays[0].series = cohort.stays[0].series.topRows(1).eval();
    const auto e1 = embed_rnn(m, cohort);
    const auto trace = forward(m, cohort.stays[0].series, cohort.stays[0].statics);
    CHECK(e1.vectors.row(0).transpose() == trace.last_hidden());

    RnnModel zero(CellType::lstm, cohort.n_features(), cohort.static_width(), 5, false);
    CHECK(embed_rnn(zero, cohort).vectors.isZero());
}

TEST_CASE("hidden states stay in [-1, 1]") {
    for (auto cell : {CellType::gru, CellType::lstm}) {
        auto m = random_model(cell, false, 3, 0, 6, 21);
        m.parameters() *= 5.0;
        Rng rng(4);
        const auto trace = forward(m, 3.0 * random_matrix(30, 3, rng), Vector());
        CHECK(trace.channels[0].hidden.cwiseAbs().maxCoeff() <= 1.0);
    }
}

TEST_CASE("checkpoint round-trip") {
    for (bool per_feature : {false, true}) {
        const auto m = random_model(CellType::lstm, per_feature, 3, 2, 4, 5);
        const auto back = parse_model(serialize_model(m));
        CHECK(back.parameters() == m.parameters());
        CHECK(model_tag(back) == model_tag(m));
    }
    CHECK_THROWS_AS(parse_model("{}"), Error);
}

TEST_CASE("forward input errors") {
    const auto m = random_model(CellType::gru, false, 3, 2, 4, 5);
    CHECK_THROWS_WITH_AS(forward(m, Matrix(0, 3), Vector::Zero(2)), doctest::Contains("EmptySeries"), Error);
    CHECK_THROWS_WITH_AS(forward(m, Matrix::Zero(3, 2), Vector::Zero(2)), doctest::Contains("DimMismatch"), Error);
}
