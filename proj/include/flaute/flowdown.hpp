#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "flaute/gridstore.hpp"

namespace flaute {

using Rng = std::mt19937_64;

/// (L steps, V variables, H rows, W columns), flattened in that order.
struct SequenceShape {
    std::size_t steps = 1;
    std::size_t variables = 1;
    std::size_t height = 1;
    std::size_t width = 1;

    std::size_t size() const { return steps * variables * height * width; }
    std::size_t index(std::size_t l, std::size_t v, std::size_t i, std::size_t j) const {
        return ((l * variables + v) * height + i) * width + j;
    }
    bool operator==(const SequenceShape&) const = default;
};

struct StateSequence {
    SequenceShape shape;
    std::vector<double> x;
};

struct TimeTag {
    int hour = 0;   // 0, 6, 12, 18
    int month = 1;  // 1..12
};

using TimeTags = std::vector<TimeTag>;

/// Throws InvalidTag for hours outside {0,6,12,18}, months outside 1..12,
/// a length other than `steps`, or hours that do not advance by 6 h.
void validate_tags(std::span<const TimeTag> tags, std::size_t steps);
TimeTag tag_for(EpochSeconds t);

struct NetworkConfig {
    std::size_t hidden = 64;
    std::size_t blocks = 2;
    std::size_t fourier = 4;    // tau features sin/cos(pi k tau), k = 1..fourier
    std::size_t embed_dim = 8;  // per-step time-tag embedding width
};

/// Fine-grid description carried by a checkpoint so that downscaling can
/// rebuild geo-referenced output.
struct GridMeta {
    std::vector<VariableId> variables;
    std::vector<double> lats;
    std::vector<double> lons;
    std::int64_t time_step_s = 21600;
    CoarsenSpec obs_spec{4, 4};
};

/// Residual MLP vector field v(x, tau, tags) over flattened sequences, with
/// Fourier tau features and additive learned hour/month embeddings per step.
/// Inputs are standardised per variable with var_mean / var_std.
class FlowModel {
public:
    FlowModel() = default;
    FlowModel(SequenceShape shape, NetworkConfig net, std::uint64_t seed);

    const SequenceShape& shape() const { return shape_; }
    const NetworkConfig& network() const { return net_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t n_params() const { return params_.size(); }
    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    std::vector<double> var_mean;
    std::vector<double> var_std;
    GridMeta grid;
    nlohmann::json hyper = nlohmann::json::object();  // training hyperparameters, informational

    /// Sets var_mean / var_std from physical-unit training sequences.
    void fit_normalization(std::span<const StateSequence> data);
    void normalize(std::span<double> x) const;
    void denormalize(std::span<double> x) const;

    struct Offsets {
        std::size_t w_in, w_tau, w_cond, b_in;
        std::vector<std::size_t> w1, b1, w2, b2;
        std::size_t w_out, b_out, hour_emb, month_emb, null_emb, total;
    };
    const Offsets& offsets() const { return off_; }

private:
    SequenceShape shape_;
    NetworkConfig net_;
    std::uint64_t seed_ = 0;
    Offsets off_{};
    std::vector<double> params_;
};

/// Per-sample tags, nullopt meaning "unconditional" (null embedding).
using BatchTags = std::vector<std::optional<TimeTags>>;

/// Evaluates the vector field in normalised space. `x` is D x B column-major,
/// `tau` has B entries.
std::vector<double> fm_velocity(const FlowModel& model, std::span<const double> x, std::span<const double> tau,
                                const BatchTags& tags);

/// Random quantities of one flow-matching loss evaluation.
struct FmDraws {
    std::vector<double> tau;    // B
    std::vector<double> noise;  // D x B
    std::vector<char> drop;     // B, 1 = replace tags by the null embedding
};

FmDraws draw_fm(Rng& rng, std::size_t dim, std::size_t batch, double p_drop);

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Linear-path flow-matching loss, x_tau = (1 - tau) x0 + tau x1, target
/// x1 - x0, loss = mean over batch and components of (v - target)^2, with
/// the exact parameter gradient. `data` is D x B in normalised space. Throws
/// NonFiniteLoss.
LossGrad fm_loss(const FlowModel& model, std::span<const double> data, const BatchTags& tags, const FmDraws& draws);
/// Convenience overload drawing tau, noise and drop flags from rng.
LossGrad fm_loss(const FlowModel& model, std::span<const double> data, const BatchTags& tags, double p_drop,
                 Rng& rng);

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch = 128;
    double learning_rate = 0.05;
    double momentum = 0.0;
    double p_drop = 0.1;
    std::uint64_t seed = 0;
};

struct TrainingSet {
    std::vector<StateSequence> sequences;  // physical units
    std::vector<TimeTags> tags;
};

/// Plain SGD with a fixed step. Fits the normalisation first when it is unset.
/// Returns the per-step loss.
std::vector<double> train(FlowModel& model, const TrainingSet& data, const TrainConfig& cfg);

struct SampleConfig {
    std::size_t n_steps = 64;
    double cfg_weight = 1.0;  // v_uncond + w (v_cond - v_uncond)
};

/// Euler integration of dx/dtau = v from noise (tau = 0) to data (tau = 1).
/// Returns physical-unit sequences. Throws InvalidArgument for n_steps = 0
/// and NonFiniteState.
StateSequence fm_sample(const FlowModel& model, const std::optional<TimeTags>& tags, const SampleConfig& cfg,
                        Rng& rng);
std::vector<StateSequence> fm_sample_batch(const FlowModel& model, const std::optional<TimeTags>& tags,
                                           const SampleConfig& cfg, std::size_t n_samples, Rng& rng);

/// y = A x + noise, A the block mean over temporal_factor steps and
/// spatial_factor x spatial_factor cells of each variable.
struct ObservationModel {
    CoarsenSpec spec;
    double noise_std = 0.1;  // physical units, applied to every variable
};

SequenceShape observed_shape(const SequenceShape& fine, const CoarsenSpec& spec);
std::vector<double> observe(const SequenceShape& fine, const CoarsenSpec& spec, std::span<const double> x);
/// Adjoint of observe.
std::vector<double> observe_adjoint(const SequenceShape& fine, const CoarsenSpec& spec, std::span<const double> y);

struct GuidanceConfig {
    SampleConfig sampling;
    double guidance_scale = 1.0;
};

/// Posterior sampling guided by coarse observations. At each Euler step the
/// one-step estimate x1_hat = x + (1 - tau) v is corrected by
/// r^2 A^T (y - A x1_hat) / (r^2 c + sigma^2) with r^2 = (1-tau)^2 / (tau^2 + (1-tau)^2)
/// and c = 1 / block size, and the velocity is bent towards it. Throws
/// ShapeMismatch when y does not match the observation operator.
StateSequence guided_sample(const FlowModel& model, const StateSequence& y, const ObservationModel& obs,
                            const std::optional<TimeTags>& tags, const GuidanceConfig& cfg, Rng& rng);
std::vector<StateSequence> guided_sample_batch(const FlowModel& model, const StateSequence& y,
                                               const ObservationModel& obs, const std::optional<TimeTags>& tags,
                                               const GuidanceConfig& cfg, std::span<Rng> rngs);

/// Sliding windows of `model_steps` consecutive fine time steps (all variables
/// share axes); tags from timestamps. Windows containing an hour outside
/// {0,6,12,18} are skipped.
TrainingSet build_training_set(std::span<const GridField> fine, std::size_t steps, std::size_t stride = 1,
                               std::size_t crop_height = 0, std::size_t crop_width = 0);

struct DownscaleConfig {
    std::size_t n_samples = 10;
    double sigma_y = 0.1;
    GuidanceConfig guidance{};
    std::uint64_t seed = 0;
};

struct DownscaleResult {
    std::vector<std::vector<GridField>> samples;  // [sample][variable]
    std::vector<GridField> mean;                  // [variable]
};

/// Non-overlapping chunks of steps / temporal_factor coarse steps; each chunk
/// is sampled n_samples times with guided_sample. A record that is not a whole
/// number of chunks gets a final chunk aligned to its end, of which only the
/// uncovered steps are kept. Sample s of chunk k uses an rng seeded from
/// (seed, s, k). Coarse fields must be given in the model's variable order.
/// Throws InsufficientSpan for a record shorter than one chunk.
DownscaleResult downscale_pipeline(std::span<const GridField> coarse, const FlowModel& model,
                                   const DownscaleConfig& cfg);

/// Directory with `model.json` (shapes, hyperparameters, seed, grid) and
/// `params.f32le`.
void save_checkpoint(const FlowModel& model, const std::filesystem::path& dir);
FlowModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace flaute
