// SPDX-License-Identifier: Apache-2.0
#include "strata/rnn.hpp"

#include "strata/parallel.hpp"
#include "strata/textio.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace strata {

std::string_view to_string(CellType c) { return c == CellType::gru ? "gru" : "lstm"; }

CellType cell_from_string(std::string_view s) {
    if (s == "gru") return CellType::gru;
    if (s == "lstm") return CellType::lstm;
    throw Error("InvalidConfig", "unknown cell type '" + std::string(s) + "'");
}

RnnModel::RnnModel(CellType cell, Eigen::Index n_features, Eigen::Index static_width, Eigen::Index hidden,
                   bool per_feature)
    : cell_(cell), per_feature_(per_feature), n_features_(n_features), static_width_(static_width),
      hidden_(hidden) {
    if (hidden < 1) throw Error("InvalidConfig", "hidden size must be >= 1");
    if (n_features < 1) throw Error("InvalidConfig", "model needs at least one feature");
    const Eigen::Index channels = per_feature ? n_features : 1;
    const Eigen::Index in_series = per_feature ? 1 : n_features;
    Eigen::Index offset = 0;
    auto add = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        tensors_.push_back({name, rows, cols, offset});
        const Eigen::Index at = offset;
        offset += rows * cols;
        return at;
    };
    for (Eigen::Index c = 0; c < channels; ++c) {
        ChannelLayout l;
        l.hidden = hidden;
        l.gate_rows = gates() * hidden;
        l.input_width = in_series + static_width;
        l.outputs = in_series;
        const std::string prefix = per_feature ? "channel" + std::to_string(c) + "." : std::string{};
        l.w_input = add(prefix + "w_input", l.gate_rows, l.input_width);
        l.w_hidden = add(prefix + "w_hidden", l.gate_rows, hidden);
        l.b_input = add(prefix + (cell == CellType::gru ? "b_input" : "bias"), l.gate_rows, 1);
        l.b_hidden_size = cell == CellType::gru ? l.gate_rows : 0;
        l.b_hidden = cell == CellType::gru ? add(prefix + "b_hidden", l.gate_rows, 1) : offset;
        l.w_out = add(prefix + "w_out", l.outputs, hidden);
        l.b_out = add(prefix + "b_out", l.outputs, 1);
        l.end = offset;
        layouts_.push_back(l);
    }
    params_ = Vector::Zero(offset);
}

Matrix RnnModel::channel_input(Eigen::Index c, const Matrix& series, const Vector& statics) const {
    const auto t = series.rows();
    Matrix x(t, layout(c).input_width);
    if (per_feature_) x.col(0) = series.col(c);
    else x.leftCols(n_features_) = series;
    if (static_width_ > 0) x.rightCols(static_width_) = statics.transpose().replicate(t, 1);
    return x;
}

RnnModel init_model(const RnnConfig& config, Eigen::Index n_features, Eigen::Index static_width,
                    std::uint64_t seed) {
    const Eigen::Index hidden = config.per_feature ? config.hidden_per_feature : config.hidden_size;
    RnnModel model(config.cell, n_features, static_width, hidden, config.per_feature);
    Rng rng(derive_seed(seed, "rnn-init"));
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (const auto& t : model.tensors()) {
        if (t.cols == 1) continue;  // biases stay 0
        auto block = model.parameters().segment(t.offset, t.rows * t.cols);
        for (auto& w : block) w = rng.uniform(-bound, bound);
    }
    return model;
}

namespace {

inline Vector sigmoid(const Vector& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

}  // namespace

SequenceTrace forward(const RnnModel& model, const Matrix& series, const Vector& statics) {
    const auto steps = series.rows();
    if (steps < 1) throw Error("EmptySeries", "forward needs at least one hour");
    if (series.cols() != model.n_features() || statics.size() != model.static_width())
        throw Error("DimMismatch", "stay shape does not match the model");
    SequenceTrace trace;
    trace.steps = steps;
    const Eigen::Index h = model.hidden_size();
    for (Eigen::Index c = 0; c < model.n_channels(); ++c) {
        const auto& l = model.layout(c);
        const auto p = l.view(model.parameters().data());
        ChannelTrace ct;
        ct.inputs = model.channel_input(c, series, statics).transpose();
        ct.hidden = Matrix::Zero(h, steps + 1);
        ct.gates.resize(l.gate_rows, steps);
        // input contribution for all steps at once
        const Matrix pre_input = (p.w_input * ct.inputs).colwise() + p.b_input;
        if (model.cell() == CellType::gru) {
            ct.hidden_lin.resize(h, steps);
            for (Eigen::Index t = 0; t < steps; ++t) {
                const auto prev = ct.hidden.col(t);
                const Vector rec = p.w_hidden * prev + p.b_hidden;
                const Vector r = sigmoid(pre_input.col(t).head(h) + rec.head(h));
                const Vector z = sigmoid(pre_input.col(t).segment(h, h) + rec.segment(h, h));
                const Vector n =
                    (pre_input.col(t).tail(h).array() + r.array() * rec.tail(h).array()).tanh().matrix();
                ct.hidden.col(t + 1) = (1.0 - z.array()) * n.array() + z.array() * prev.array();
                ct.gates.col(t) << r, z, n;
                ct.hidden_lin.col(t) = rec.tail(h);
            }
        } else {
            ct.cell = Matrix::Zero(h, steps + 1);
            for (Eigen::Index t = 0; t < steps; ++t) {
                const Vector a = pre_input.col(t) + p.w_hidden * ct.hidden.col(t);
                const Vector i = sigmoid(a.head(h));
                const Vector f = sigmoid(a.segment(h, h));
                const Vector g = a.segment(2 * h, h).array().tanh().matrix();
                const Vector o = sigmoid(a.tail(h));
                ct.cell.col(t + 1) = f.array() * ct.cell.col(t).array() + i.array() * g.array();
                ct.hidden.col(t + 1) = o.array() * ct.cell.col(t + 1).array().tanh();
                ct.gates.col(t) << i, f, g, o;
            }
        }
        if (!ct.hidden.allFinite()) throw Error("NonFiniteActivation", "hidden state diverged", ErrorKind::internal);
        if (steps > 1) ct.predictions = (p.w_out * ct.hidden.middleCols(1, steps - 1)).colwise() + p.b_out;
        trace.channels.push_back(std::move(ct));
    }
    return trace;
}

Matrix SequenceTrace::predictions(const RnnModel& model) const {
    Matrix out(std::max<Eigen::Index>(steps - 1, 0), model.n_features());
    if (steps < 2) return out;
    if (model.per_feature()) {
        for (Eigen::Index c = 0; c < model.n_channels(); ++c)
            out.col(c) = channels[static_cast<std::size_t>(c)].predictions.row(0).transpose();
    } else {
        out = channels.front().predictions.transpose();
    }
    return out;
}

Vector SequenceTrace::last_hidden() const {
    Eigen::Index total = 0;
    for (const auto& c : channels) total += c.hidden.rows();
    Vector out(total);
    Eigen::Index at = 0;
    for (const auto& c : channels) {
        out.segment(at, c.hidden.rows()) = c.hidden.col(steps);
        at += c.hidden.rows();
    }
    return out;
}

double loss_mse(const Matrix& predictions, const Matrix& targets) {
    if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols())
        throw Error("DimMismatch", "prediction and target shapes differ");
    if (predictions.size() == 0) return 0.0;
    return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
}

double backward(const RnnModel& model, const SequenceTrace& trace, const Matrix& series, double scale,
                Vector& grad) {
    const auto steps = trace.steps;
    if (steps < 2) return 0.0;
    if (grad.size() != model.parameters().size()) grad = Vector::Zero(model.parameters().size());
    const Eigen::Index h = model.hidden_size();
    const double cells = static_cast<double>((steps - 1) * model.n_features());
    double sq_error = 0.0;

    for (Eigen::Index c = 0; c < model.n_channels(); ++c) {
        const auto& l = model.layout(c);
        const auto p = l.view(model.parameters().data());
        auto g = l.view(grad.data());
        const auto& ct = trace.channels[static_cast<std::size_t>(c)];

        const Matrix targets = model.per_feature() ? Matrix(series.col(c).tail(steps - 1).transpose())
                                                   : Matrix(series.bottomRows(steps - 1).transpose());
        const Matrix residual = ct.predictions - targets;
        sq_error += residual.squaredNorm();
        const Matrix d_pred = (2.0 * scale / cells) * residual;
        g.w_out.noalias() += d_pred * ct.hidden.middleCols(1, steps - 1).transpose();
        g.b_out += d_pred.rowwise().sum();
        const Matrix d_hidden_out = p.w_out.transpose() * d_pred;  // H x (T - 1)

        Matrix d_pre_input(l.gate_rows, steps);
        Matrix d_pre_hidden(l.gate_rows, steps);
        Vector carry = Vector::Zero(h);
        Vector carry_cell = Vector::Zero(h);
        for (Eigen::Index t = steps - 1; t >= 0; --t) {
            Vector dh = carry;
            if (t < steps - 1) dh += d_hidden_out.col(t);
            const auto prev = ct.hidden.col(t);
            if (model.cell() == CellType::gru) {
                const auto r = ct.gates.col(t).head(h).array();
                const auto z = ct.gates.col(t).segment(h, h).array();
                const auto n = ct.gates.col(t).tail(h).array();
                const Eigen::ArrayXd da_n = dh.array() * (1.0 - z) * (1.0 - n.square());
                const Eigen::ArrayXd da_z = dh.array() * (prev.array() - n) * z * (1.0 - z);
                const Eigen::ArrayXd da_r = da_n * ct.hidden_lin.col(t).array() * r * (1.0 - r);
                d_pre_input.col(t) << da_r.matrix(), da_z.matrix(), da_n.matrix();
                d_pre_hidden.col(t) << da_r.matrix(), da_z.matrix(), (da_n * r).matrix();
                carry = (dh.array() * z).matrix() + p.w_hidden.transpose() * d_pre_hidden.col(t);
            } else {
                const auto i = ct.gates.col(t).head(h).array();
                const auto f = ct.gates.col(t).segment(h, h).array();
                const auto gg = ct.gates.col(t).segment(2 * h, h).array();
                const auto o = ct.gates.col(t).tail(h).array();
                const Eigen::ArrayXd tc = ct.cell.col(t + 1).array().tanh();
                const Eigen::ArrayXd dc = carry_cell.array() + dh.array() * o * (1.0 - tc.square());
                d_pre_input.col(t) << (dc * gg * i * (1.0 - i)).matrix(),
                    (dc * ct.cell.col(t).array() * f * (1.0 - f)).matrix(), (dc * i * (1.0 - gg.square())).matrix(),
                    (dh.array() * tc * o * (1.0 - o)).matrix();
                carry_cell = (dc * f).matrix();
                carry = p.w_hidden.transpose() * d_pre_input.col(t);
            }
        }
        if (model.cell() == CellType::lstm) d_pre_hidden = d_pre_input;

        g.w_input.noalias() += d_pre_input * ct.inputs.transpose();
        g.b_input += d_pre_input.rowwise().sum();
        g.w_hidden.noalias() += d_pre_hidden * ct.hidden.leftCols(steps).transpose();
        if (model.cell() == CellType::gru) g.b_hidden += d_pre_hidden.rowwise().sum();
    }
    return sq_error / cells;
}

double loss_and_gradient(const RnnModel& model, const Matrix& series, const Vector& statics, double scale,
                         Vector& grad) {
    const auto trace = forward(model, series, statics);
    return backward(model, trace, series, scale, grad);
}

BatchGradient batch_gradient(const RnnModel& model, const PreparedCohort& cohort,
                             std::span<const std::size_t> batch) {
    const auto n_params = model.parameters().size();
    std::vector<Vector> grads(batch.size());
    BatchGradient out;
    out.stay_losses.assign(batch.size(), 0.0);
    parallel_for(batch.size(), [&](std::size_t k) {
        const auto& s = cohort.stays[batch[k]];
        if (s.series.rows() < 2) return;
        grads[k] = Vector::Zero(n_params);
        out.stay_losses[k] = loss_and_gradient(model, s.series, s.statics, 1.0, grads[k]);
    });
    out.gradient = Vector::Zero(n_params);
    for (std::size_t k = 0; k < batch.size(); ++k) {
        if (grads[k].size() == 0) continue;
        out.gradient += grads[k];
        out.loss += out.stay_losses[k];
        ++out.contributing;
    }
    if (out.contributing > 0) {
        out.gradient /= static_cast<double>(out.contributing);
        out.loss /= static_cast<double>(out.contributing);
    }
    if (!out.gradient.allFinite()) throw Error("NonFiniteGradient", "gradient is not finite", ErrorKind::internal);
    return out;
}

double mean_loss(const RnnModel& model, const PreparedCohort& cohort, std::span<const std::size_t> stays) {
    std::vector<double> losses(stays.size(), 0.0);
    std::vector<char> used(stays.size(), 0);
    parallel_for(stays.size(), [&](std::size_t k) {
        const auto& s = cohort.stays[stays[k]];
        if (s.series.rows() < 2) return;
        const auto trace = forward(model, s.series, s.statics);
        losses[k] = loss_mse(trace.predictions(model), s.series.bottomRows(s.series.rows() - 1));
        used[k] = 1;
    });
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < stays.size(); ++k) {
        if (!used[k]) continue;
        total += losses[k];
        ++n;
    }
    return n > 0 ? total / static_cast<double>(n) : 0.0;
}

TrainResult train(const PreparedCohort& cohort, const SplitAssignment& split, const RnnConfig& config) {
    if (config.epochs < 0 || config.batch_size < 1) throw Error("InvalidConfig", "epochs/batch_size out of range");
    if (!(config.optimizer.learning_rate >= 0.0)) throw Error("InvalidConfig", "learning rate must be >= 0");
    if (split.stay_ids.size() != cohort.size()) throw Error("SplitMismatch", "split does not cover the cohort");

    // Canonical order by stay id so the shuffle, not the input order, fixes batches.
    auto by_id = [&](std::vector<std::size_t> idx) {
        std::sort(idx.begin(), idx.end(),
                  [&](auto a, auto b) { return cohort.stays[a].stay_id < cohort.stays[b].stay_id; });
        return idx;
    };
    const auto train_idx = by_id(split.indices(Split::train));
    const auto val_idx = by_id(split.indices(Split::val));
    if (train_idx.empty()) throw Error("EmptyTrainSplit", "training needs at least one train stay");

    TrainResult result{init_model(config, cohort.n_features(), cohort.static_width(), config.seed), {}};
    auto& model = result.model;
    AdamWState state;
    state.reset(model.parameters().size());

    auto val_loss = [&] { return val_idx.empty() ? std::nan("") : mean_loss(model, cohort, val_idx); };
    result.curve.push_back({0, mean_loss(model, cohort, train_idx), val_loss()});

    std::vector<double> epoch_losses(cohort.size(), 0.0);
    std::vector<char> contributes(cohort.size(), 0);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        auto order = train_idx;
        Rng rng(derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        shuffle(std::span(order), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const auto len = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), order.size() - start);
            const std::span<const std::size_t> batch(order.data() + start, len);
            auto bg = batch_gradient(model, cohort, batch);
            for (std::size_t k = 0; k < len; ++k) {
                epoch_losses[batch[k]] = bg.stay_losses[k];
                contributes[batch[k]] = cohort.stays[batch[k]].series.rows() >= 2;
            }
            if (bg.contributing == 0) continue;
            if (config.grad_clip_norm > 0.0) {
                const double norm = bg.gradient.norm();
                if (norm > config.grad_clip_norm) bg.gradient *= config.grad_clip_norm / norm;
            }
            adamw_step(model.parameters(), bg.gradient, state, config.optimizer);
        }
        double total = 0.0;
        std::size_t n = 0;
        for (auto i : train_idx) {
            if (!contributes[i]) continue;
            total += epoch_losses[i];
            ++n;
        }
        const double train_mse = n > 0 ? total / static_cast<double>(n) : 0.0;
        const double val_mse = val_loss();
        if (!std::isfinite(train_mse) || !(val_idx.empty() || std::isfinite(val_mse)))
            throw Error("DivergedLoss", "loss became non-finite at epoch " + std::to_string(epoch), ErrorKind::internal);
        result.curve.push_back({epoch, train_mse, val_mse});
    }
    return result;
}

std::string model_tag(const RnnModel& model) {
    return std::string(to_string(model.cell())) + (model.per_feature() ? "_pf" : "");
}

EmbeddingMatrix embed_rnn(const RnnModel& model, const PreparedCohort& cohort) {
    EmbeddingMatrix e;
    e.provenance = model_tag(model);
    e.vectors.resize(static_cast<Eigen::Index>(cohort.size()), model.embedding_dim());
    for (const auto& s : cohort.stays) e.stay_ids.push_back(s.stay_id);
    parallel_for(cohort.size(), [&](std::size_t i) {
        const auto& s = cohort.stays[i];
        e.vectors.row(static_cast<Eigen::Index>(i)) = forward(model, s.series, s.statics).last_hidden().transpose();
    });
    return e;
}

std::string serialize_model(const RnnModel& model) {
    nlohmann::ordered_json j;
    j["format"] = "strata-rnn";
    j["version"] = 1;
    j["cell"] = std::string(to_string(model.cell()));
    j["per_feature"] = model.per_feature();
    j["hidden_size"] = model.hidden_size();
    j["n_features"] = model.n_features();
    j["static_width"] = model.static_width();
    auto& tensors = j["tensors"];
    tensors = nlohmann::ordered_json::array();
    for (const auto& t : model.tensors()) {
        nlohmann::ordered_json tj;
        tj["name"] = t.name;
        tj["shape"] = {t.rows, t.cols};
        std::vector<double> data(static_cast<std::size_t>(t.rows * t.cols));
        // row-major for readability
        for (Eigen::Index r = 0; r < t.rows; ++r)
            for (Eigen::Index c = 0; c < t.cols; ++c)
                data[static_cast<std::size_t>(r * t.cols + c)] = model.parameters()[t.offset + c * t.rows + r];
        tj["data"] = data;
        tensors.push_back(std::move(tj));
    }
    return j.dump(1) + "\n";
}

RnnModel parse_model(const std::string& json_text) {
    try {
        const auto j = nlohmann::json::parse(json_text);
        if (j.at("format") != "strata-rnn" || j.at("version") != 1)
            throw Error("MalformedModel", "unsupported checkpoint format", ErrorKind::internal);
        RnnModel model(cell_from_string(j.at("cell").get<std::string>()), j.at("n_features").get<Eigen::Index>(),
                       j.at("static_width").get<Eigen::Index>(), j.at("hidden_size").get<Eigen::Index>(),
                       j.at("per_feature").get<bool>());
        const auto& tensors = j.at("tensors");
        if (tensors.size() != model.tensors().size())
            throw Error("MalformedModel", "checkpoint tensor count mismatch", ErrorKind::internal);
        for (std::size_t k = 0; k < tensors.size(); ++k) {
            const auto& t = model.tensors()[k];
            const auto& tj = tensors[k];
            const auto data = tj.at("data").get<std::vector<double>>();
            if (tj.at("name") != t.name || tj.at("shape")[0] != t.rows || tj.at("shape")[1] != t.cols ||
                data.size() != static_cast<std::size_t>(t.rows * t.cols))
                throw Error("MalformedModel", "checkpoint tensor " + t.name + " has the wrong shape", ErrorKind::internal);
            for (Eigen::Index r = 0; r < t.rows; ++r)
                for (Eigen::Index c = 0; c < t.cols; ++c)
                    model.parameters()[t.offset + c * t.rows + r] = data[static_cast<std::size_t>(r * t.cols + c)];
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw Error("MalformedModel", e.what(), ErrorKind::internal);
    }
}

std::string serialize_loss_curve(const std::vector<EpochLoss>& curve, std::string_view comment) {
    std::string out = comment.empty() ? std::string{} : "# " + std::string(comment) + "\n";
    out += "epoch,train_mse,val_mse\n";
    for (const auto& e : curve)
        out += std::to_string(e.epoch) + "," + textio::format_double(e.train_mse) + "," +
               textio::format_double(e.val_mse) + "\n";
    return out;
}

}  // namespace strata
