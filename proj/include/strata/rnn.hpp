// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "strata/adamw.hpp"
#include "strata/cohort.hpp"
#include "strata/embedding.hpp"

#include <string>
#include <type_traits>
#include <vector>

namespace strata {

enum class CellType { gru, lstm };
std::string_view to_string(CellType c);
CellType cell_from_string(std::string_view s);

struct RnnConfig {
    CellType cell = CellType::gru;
    int hidden_size = 64;
    bool per_feature = false;     // one independent cell per feature
    int hidden_per_feature = 8;
    int epochs = 20;
    int batch_size = 32;
    AdamWConfig optimizer;
    double grad_clip_norm = 1.0;  // <= 0 disables clipping
    std::uint64_t seed = 0;
};

/// Parameter offsets of one recurrent channel (cell + next-step readout)
/// inside the model's flat parameter vector. Gates are stacked row-wise:
/// GRU (reset, update, candidate), LSTM (input, forget, cell, output).
struct ChannelLayout {
    Eigen::Index hidden = 0;
    Eigen::Index gate_rows = 0;  // gates * hidden
    Eigen::Index input_width = 0;
    Eigen::Index outputs = 0;
    Eigen::Index w_input = 0, w_hidden = 0, b_input = 0, b_hidden = 0, w_out = 0, b_out = 0, end = 0;
    Eigen::Index b_hidden_size = 0;  // GRU only; LSTM carries a single bias

    template <typename Scalar>
    struct View {
        using M = std::conditional_t<std::is_const_v<Scalar>, Eigen::Map<const Matrix>, Eigen::Map<Matrix>>;
        using V = std::conditional_t<std::is_const_v<Scalar>, Eigen::Map<const Vector>, Eigen::Map<Vector>>;
        M w_input, w_hidden;
        V b_input, b_hidden;
        M w_out;
        V b_out;
    };

    template <typename Scalar>
    View<Scalar> view(Scalar* base) const {
        return {{base + w_input, gate_rows, input_width}, {base + w_hidden, gate_rows, hidden},
                {base + b_input, gate_rows},              {base + b_hidden, b_hidden_size},
                {base + w_out, outputs, hidden},          {base + b_out, outputs}};
    }
};

/// GRU or LSTM autoregressive model. Single-channel mode: one cell reads all
/// F features plus statics and predicts all F features of the next hour.
/// Per-feature mode: F cells, cell f reads feature f plus statics and
/// predicts feature f.
class RnnModel {
public:
    struct Tensor {
        std::string name;
        Eigen::Index rows = 0, cols = 0, offset = 0;
    };

    RnnModel() = default;
    RnnModel(CellType cell, Eigen::Index n_features, Eigen::Index static_width, Eigen::Index hidden,
             bool per_feature);

    CellType cell() const { return cell_; }
    bool per_feature() const { return per_feature_; }
    Eigen::Index hidden_size() const { return hidden_; }
    Eigen::Index n_features() const { return n_features_; }
    Eigen::Index static_width() const { return static_width_; }
    Eigen::Index n_channels() const { return static_cast<Eigen::Index>(layouts_.size()); }
    Eigen::Index embedding_dim() const { return hidden_ * n_channels(); }
    int gates() const { return cell_ == CellType::gru ? 3 : 4; }

    const ChannelLayout& layout(Eigen::Index c) const { return layouts_[static_cast<std::size_t>(c)]; }
    const std::vector<Tensor>& tensors() const { return tensors_; }

    Vector& parameters() { return params_; }
    const Vector& parameters() const { return params_; }

    /// Input block of channel c: T x input_width (series columns then statics).
    Matrix channel_input(Eigen::Index c, const Matrix& series, const Vector& statics) const;

private:
    CellType cell_ = CellType::gru;
    bool per_feature_ = false;
    Eigen::Index n_features_ = 0, static_width_ = 0, hidden_ = 0;
    std::vector<ChannelLayout> layouts_;
    std::vector<Tensor> tensors_;
    Vector params_;
};

/// Weights ~ Uniform(-1/sqrt(H), 1/sqrt(H)), biases 0.
RnnModel init_model(const RnnConfig& config, Eigen::Index n_features, Eigen::Index static_width,
                    std::uint64_t seed);

/// Forward activations of one channel over one stay.
struct ChannelTrace {
    Matrix inputs;       // input_width x T
    Matrix hidden;       // H x (T + 1); column 0 is h_0 = 0
    Matrix cell;         // LSTM only: H x (T + 1)
    Matrix gates;        // gate activations, gate_rows x T
    Matrix hidden_lin;   // GRU only: W_hn h_{t-1} + b_hn, H x T
    Matrix predictions;  // outputs x (T - 1)
};

struct SequenceTrace {
    std::vector<ChannelTrace> channels;
    Eigen::Index steps = 0;

    /// Next-hour predictions assembled as (T - 1) x F.
    Matrix predictions(const RnnModel& model) const;
    /// Concatenated final hidden states h_T.
    Vector last_hidden() const;
};

/// Runs every channel over series (T x F). Throws NonFiniteActivation.
SequenceTrace forward(const RnnModel& model, const Matrix& series, const Vector& statics);

/// Mean over all cells of (predictions - targets)^2.
double loss_mse(const Matrix& predictions, const Matrix& targets);

/// Full-sequence BPTT of `scale * mse(stay)`; gradients are added into grad.
/// Returns the stay's unscaled MSE, or 0 without touching grad when T < 2.
double backward(const RnnModel& model, const SequenceTrace& trace, const Matrix& series, double scale,
                Vector& grad);

/// MSE of one stay and its gradient (added into grad with the given scale).
double loss_and_gradient(const RnnModel& model, const Matrix& series, const Vector& statics, double scale,
                         Vector& grad);

struct BatchGradient {
    double loss = 0.0;         // mean over contributing stays
    Vector gradient;           // gradient of that mean
    std::size_t contributing = 0;
    std::vector<double> stay_losses;
};

/// Batch-mean MSE and gradient. Stays with T < 2 do not contribute.
/// Per-stay work runs in parallel; the reduction follows batch order.
BatchGradient batch_gradient(const RnnModel& model, const PreparedCohort& cohort,
                             std::span<const std::size_t> batch);

struct EpochLoss {
    int epoch = 0;  // 0 = before training
    double train_mse = 0.0;
    double val_mse = 0.0;
};

struct TrainResult {
    RnnModel model;
    std::vector<EpochLoss> curve;
};

/// Mean per-stay MSE over the given stays (T < 2 stays skipped).
double mean_loss(const RnnModel& model, const PreparedCohort& cohort, std::span<const std::size_t> stays);

/// Seed-shuffled minibatch AdamW training with global-norm clipping.
/// Throws DivergedLoss when an epoch loss is not finite.
TrainResult train(const PreparedCohort& cohort, const SplitAssignment& split, const RnnConfig& config);

/// Embedding = final hidden state (concatenated over channels).
EmbeddingMatrix embed_rnn(const RnnModel& model, const PreparedCohort& cohort);

std::string model_tag(const RnnModel& model);

std::string serialize_model(const RnnModel& model);
RnnModel parse_model(const std::string& json_text);
std::string serialize_loss_curve(const std::vector<EpochLoss>& curve, std::string_view comment = {});

}  // namespace strata
