#include "flaute/flowdown.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>

#include <Eigen/Dense>

#include "flaute/error.hpp"

namespace flaute {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;
using CVecMap = Eigen::Map<const Vec>;

void validate_tags(std::span<const TimeTag> tags, std::size_t steps) {
    if (tags.size() != steps) {
        throw Error(ErrorCode::InvalidTag, "expected " + std::to_string(steps) + " time tags, got " +
                                               std::to_string(tags.size()));
    }
    for (std::size_t l = 0; l < tags.size(); ++l) {
        const TimeTag& t = tags[l];
        if (t.hour < 0 || t.hour > 18 || t.hour % 6 != 0) {
            throw Error(ErrorCode::InvalidTag, "hour " + std::to_string(t.hour) + " is not one of 0, 6, 12, 18");
        }
        if (t.month < 1 || t.month > 12) {
            throw Error(ErrorCode::InvalidTag, "month " + std::to_string(t.month) + " outside 1..12");
        }
        if (l > 0 && t.hour != (tags[l - 1].hour + 6) % 24) {
            throw Error(ErrorCode::InvalidTag, "hours do not advance by 6 h at step " + std::to_string(l));
        }
    }
}

TimeTag tag_for(EpochSeconds t) { return TimeTag{hour_of_day(t), month_of(t)}; }

FlowModel::FlowModel(SequenceShape shape, NetworkConfig net, std::uint64_t seed)
    : shape_(shape), net_(net), seed_(seed) {
    if (shape.size() == 0) throw Error(ErrorCode::ShapeMismatch, "empty sequence shape");
    if (net.hidden == 0 || net.embed_dim == 0) throw Error(ErrorCode::InvalidArgument, "empty network");
    const std::size_t d = shape.size();
    const std::size_t h = net.hidden;
    const std::size_t e = net.embed_dim;
    std::size_t pos = 0;
    auto take = [&pos](std::size_t n) {
        const std::size_t at = pos;
        pos += n;
        return at;
    };
    off_.w_in = take(h * d);
    off_.w_tau = take(h * 2 * net.fourier);
    off_.w_cond = take(h * shape.steps * e);
    off_.b_in = take(h);
    for (std::size_t b = 0; b < net.blocks; ++b) {
        off_.w1.push_back(take(h * h));
        off_.b1.push_back(take(h));
        off_.w2.push_back(take(h * h));
        off_.b2.push_back(take(h));
    }
    off_.w_out = take(d * h);
    off_.b_out = take(d);
    off_.hour_emb = take(4 * e);
    off_.month_emb = take(12 * e);
    off_.null_emb = take(e);
    off_.total = pos;

    params_.assign(pos, 0.0);
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](std::size_t at, std::size_t n, double scale) {
        for (std::size_t k = 0; k < n; ++k) params_[at + k] = scale * normal(rng);
    };
    fill(off_.w_in, h * d, 1.0 / std::sqrt(double(d)));
    fill(off_.w_tau, h * 2 * net.fourier, net.fourier ? 1.0 / std::sqrt(double(2 * net.fourier)) : 0.0);
    fill(off_.w_cond, h * shape.steps * e, 1.0 / std::sqrt(double(shape.steps * e)));
    for (std::size_t b = 0; b < net.blocks; ++b) {
        fill(off_.w1[b], h * h, 1.0 / std::sqrt(double(h)));
        fill(off_.w2[b], h * h, 0.5 / std::sqrt(double(h)));
    }
    fill(off_.w_out, d * h, 0.1 / std::sqrt(double(h)));
    fill(off_.hour_emb, 4 * e, 1.0);
    fill(off_.month_emb, 12 * e, 1.0);
    fill(off_.null_emb, e, 1.0);

    var_mean.assign(shape.variables, 0.0);
    var_std.assign(shape.variables, 1.0);
}

void FlowModel::fit_normalization(std::span<const StateSequence> data) {
    const std::size_t v_count = shape_.variables;
    const std::size_t plane = shape_.height * shape_.width;
    std::vector<double> sum(v_count, 0.0), sq(v_count, 0.0);
    std::vector<std::size_t> n(v_count, 0);
    for (const StateSequence& s : data) {
        if (!(s.shape == shape_)) throw Error(ErrorCode::ShapeMismatch, "training sequence shape differs");
        for (std::size_t l = 0; l < shape_.steps; ++l) {
            for (std::size_t v = 0; v < v_count; ++v) {
                const double* p = s.x.data() + shape_.index(l, v, 0, 0);
                for (std::size_t k = 0; k < plane; ++k) {
                    sum[v] += p[k];
                    sq[v] += p[k] * p[k];
                }
                n[v] += plane;
            }
        }
    }
    for (std::size_t v = 0; v < v_count; ++v) {
        if (n[v] == 0) continue;
        const double m = sum[v] / double(n[v]);
        const double var = std::max(sq[v] / double(n[v]) - m * m, 0.0);
        var_mean[v] = m;
        var_std[v] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
}

void FlowModel::normalize(std::span<double> x) const {
    const std::size_t plane = shape_.height * shape_.width;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const std::size_t v = (k / plane) % shape_.variables;
        x[k] = (x[k] - var_mean[v]) / var_std[v];
    }
}

void FlowModel::denormalize(std::span<double> x) const {
    const std::size_t plane = shape_.height * shape_.width;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const std::size_t v = (k / plane) % shape_.variables;
        x[k] = x[k] * var_std[v] + var_mean[v];
    }
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Net {
    const FlowModel& m;
    std::size_t d, h, e, steps, nf;

    explicit Net(const FlowModel& model)
        : m(model),
          d(model.shape().size()),
          h(model.network().hidden),
          e(model.network().embed_dim),
          steps(model.shape().steps),
          nf(model.network().fourier) {}

    CMatMap mat(std::size_t off, std::size_t rows, std::size_t cols) const {
        return CMatMap(m.params().data() + off, Eigen::Index(rows), Eigen::Index(cols));
    }
    CVecMap vec(std::size_t off, std::size_t n) const {
        return CVecMap(m.params().data() + off, Eigen::Index(n));
    }
};

struct Cache {
    Mat phi, cond, z0, h0, out;
    std::vector<Mat> a, hs;  // hs[b] is the input of block b, hs[blocks] the output
};

Mat fourier_features(const Net& net, std::span<const double> tau) {
    Mat phi(Eigen::Index(2 * net.nf), Eigen::Index(tau.size()));
    for (std::size_t b = 0; b < tau.size(); ++b) {
        for (std::size_t k = 0; k < net.nf; ++k) {
            const double w = std::numbers::pi * double(k + 1) * tau[b];
            phi(Eigen::Index(2 * k), Eigen::Index(b)) = std::sin(w);
            phi(Eigen::Index(2 * k + 1), Eigen::Index(b)) = std::cos(w);
        }
    }
    return phi;
}

Mat condition_matrix(const Net& net, const BatchTags& tags) {
    const auto& o = net.m.offsets();
    Mat c(Eigen::Index(net.steps * net.e), Eigen::Index(tags.size()));
    const double* p = net.m.params().data();
    for (std::size_t b = 0; b < tags.size(); ++b) {
        for (std::size_t l = 0; l < net.steps; ++l) {
            for (std::size_t q = 0; q < net.e; ++q) {
                double v;
                if (!tags[b]) {
                    v = p[o.null_emb + q];
                } else {
                    const TimeTag& t = (*tags[b])[l];
                    v = p[o.hour_emb + std::size_t(t.hour / 6) * net.e + q] +
                        p[o.month_emb + std::size_t(t.month - 1) * net.e + q];
                }
                c(Eigen::Index(l * net.e + q), Eigen::Index(b)) = v;
            }
        }
    }
    return c;
}

void forward(const Net& net, const CMatMap& x, std::span<const double> tau, const BatchTags& tags, Cache& c) {
    const auto& o = net.m.offsets();
    c.phi = fourier_features(net, tau);
    c.cond = condition_matrix(net, tags);
    c.z0 = net.mat(o.w_in, net.h, net.d) * x + net.mat(o.w_cond, net.h, net.steps * net.e) * c.cond;
    if (net.nf) c.z0.noalias() += net.mat(o.w_tau, net.h, 2 * net.nf) * c.phi;
    c.z0.colwise() += net.vec(o.b_in, net.h);
    c.h0 = c.z0.unaryExpr([](double z) { return z * sigmoid(z); });
    const std::size_t nb = net.m.network().blocks;
    c.a.resize(nb);
    c.hs.resize(nb + 1);
    c.hs[0] = c.h0;
    for (std::size_t b = 0; b < nb; ++b) {
        c.a[b] = net.mat(o.w1[b], net.h, net.h) * c.hs[b];
        c.a[b].colwise() += net.vec(o.b1[b], net.h);
        const Mat s = c.a[b].unaryExpr([](double z) { return z * sigmoid(z); });
        c.hs[b + 1] = c.hs[b] + net.mat(o.w2[b], net.h, net.h) * s;
        c.hs[b + 1].colwise() += net.vec(o.b2[b], net.h);
    }
    c.out = net.mat(o.w_out, net.d, net.h) * c.hs[nb];
    c.out.colwise() += net.vec(o.b_out, net.d);
}

Mat silu_grad(const Mat& z) {
    return z.unaryExpr([](double v) {
        const double s = sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
    });
}

// Accumulates d(loss)/d(params) given d(loss)/d(out).
void backward(const Net& net, const CMatMap& x, const BatchTags& tags, const Cache& c, const Mat& d_out,
              std::vector<double>& grad) {
    const auto& o = net.m.offsets();
    grad.assign(net.m.n_params(), 0.0);
    auto gmat = [&](std::size_t off, std::size_t rows, std::size_t cols) {
        return MatMap(grad.data() + off, Eigen::Index(rows), Eigen::Index(cols));
    };
    auto gvec = [&](std::size_t off, std::size_t n) {
        return Eigen::Map<Vec>(grad.data() + off, Eigen::Index(n));
    };
    const std::size_t nb = net.m.network().blocks;

    gmat(o.w_out, net.d, net.h).noalias() = d_out * c.hs[nb].transpose();
    gvec(o.b_out, net.d) = d_out.rowwise().sum();
    Mat dh = net.mat(o.w_out, net.d, net.h).transpose() * d_out;
    for (std::size_t bb = nb; bb-- > 0;) {
        const Mat s = c.a[bb].unaryExpr([](double z) { return z * sigmoid(z); });
        gmat(o.w2[bb], net.h, net.h).noalias() = dh * s.transpose();
        gvec(o.b2[bb], net.h) = dh.rowwise().sum();
        const Mat da = (net.mat(o.w2[bb], net.h, net.h).transpose() * dh).cwiseProduct(silu_grad(c.a[bb]));
        gmat(o.w1[bb], net.h, net.h).noalias() = da * c.hs[bb].transpose();
        gvec(o.b1[bb], net.h) = da.rowwise().sum();
        dh.noalias() += net.mat(o.w1[bb], net.h, net.h).transpose() * da;
    }
    const Mat dz0 = dh.cwiseProduct(silu_grad(c.z0));
    gmat(o.w_in, net.h, net.d).noalias() = dz0 * x.transpose();
    if (net.nf) gmat(o.w_tau, net.h, 2 * net.nf).noalias() = dz0 * c.phi.transpose();
    gmat(o.w_cond, net.h, net.steps * net.e).noalias() = dz0 * c.cond.transpose();
    gvec(o.b_in, net.h) = dz0.rowwise().sum();

    const Mat dcond = net.mat(o.w_cond, net.h, net.steps * net.e).transpose() * dz0;
    for (std::size_t b = 0; b < tags.size(); ++b) {
        for (std::size_t l = 0; l < net.steps; ++l) {
            for (std::size_t q = 0; q < net.e; ++q) {
                const double g = dcond(Eigen::Index(l * net.e + q), Eigen::Index(b));
                if (!tags[b]) {
                    grad[o.null_emb + q] += g;
                } else {
                    const TimeTag& t = (*tags[b])[l];
                    grad[o.hour_emb + std::size_t(t.hour / 6) * net.e + q] += g;
                    grad[o.month_emb + std::size_t(t.month - 1) * net.e + q] += g;
                }
            }
        }
    }
}

void check_batch(const FlowModel& model, std::size_t values, const BatchTags& tags) {
    const std::size_t d = model.shape().size();
    if (tags.empty() || values != d * tags.size()) {
        throw Error(ErrorCode::ShapeMismatch, "batch size does not match tags / sequence shape");
    }
    for (const auto& t : tags) {
        if (t) validate_tags(*t, model.shape().steps);
    }
}

}  // namespace

std::vector<double> fm_velocity(const FlowModel& model, std::span<const double> x, std::span<const double> tau,
                                const BatchTags& tags) {
    check_batch(model, x.size(), tags);
    if (tau.size() != tags.size()) throw Error(ErrorCode::ShapeMismatch, "tau count differs from batch size");
    const Net net(model);
    const CMatMap xm(x.data(), Eigen::Index(net.d), Eigen::Index(tags.size()));
    Cache c;
    forward(net, xm, tau, tags, c);
    return std::vector<double>(c.out.data(), c.out.data() + c.out.size());
}

FmDraws draw_fm(Rng& rng, std::size_t dim, std::size_t batch, double p_drop) {
    FmDraws d;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    d.tau.resize(batch);
    d.drop.resize(batch);
    d.noise.resize(dim * batch);
    for (std::size_t b = 0; b < batch; ++b) d.tau[b] = unif(rng);
    for (double& v : d.noise) v = normal(rng);
    for (std::size_t b = 0; b < batch; ++b) d.drop[b] = unif(rng) < p_drop ? 1 : 0;
    return d;
}

LossGrad fm_loss(const FlowModel& model, std::span<const double> data, const BatchTags& tags, const FmDraws& draws) {
    check_batch(model, data.size(), tags);
    const std::size_t batch = tags.size();
    if (draws.tau.size() != batch || draws.drop.size() != batch || draws.noise.size() != data.size()) {
        throw Error(ErrorCode::ShapeMismatch, "draws do not match batch");
    }
    const Net net(model);
    const CMatMap x1(data.data(), Eigen::Index(net.d), Eigen::Index(batch));
    const CMatMap x0(draws.noise.data(), Eigen::Index(net.d), Eigen::Index(batch));
    const CVecMap tau(draws.tau.data(), Eigen::Index(batch));
    Mat xt = x0 * (1.0 - tau.array()).matrix().asDiagonal();
    xt.noalias() += x1 * tau.asDiagonal();
    const Mat target = x1 - x0;

    BatchTags used = tags;
    for (std::size_t b = 0; b < batch; ++b) {
        if (draws.drop[b]) used[b].reset();
    }
    const CMatMap xtm(xt.data(), xt.rows(), xt.cols());
    Cache c;
    forward(net, xtm, draws.tau, used, c);
    const Mat resid = c.out - target;
    const double scale = 1.0 / double(resid.size());
    LossGrad lg;
    lg.loss = resid.squaredNorm() * scale;
    if (!std::isfinite(lg.loss)) throw Error(ErrorCode::NonFiniteLoss, "flow-matching loss is not finite");
    const Mat d_out = resid * (2.0 * scale);
    backward(net, xtm, used, c, d_out, lg.grad);
    return lg;
}

LossGrad fm_loss(const FlowModel& model, std::span<const double> data, const BatchTags& tags, double p_drop,
                 Rng& rng) {
    const FmDraws d = draw_fm(rng, model.shape().size(), tags.size(), p_drop);
    return fm_loss(model, data, tags, d);
}

std::vector<double> train(FlowModel& model, const TrainingSet& data, const TrainConfig& cfg) {
    if (data.sequences.empty()) throw Error(ErrorCode::EmptySample, "training set is empty");
    if (data.tags.size() != data.sequences.size()) {
        throw Error(ErrorCode::ShapeMismatch, "one tag list per training sequence required");
    }
    if (cfg.batch == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
    const bool unset = std::all_of(model.var_mean.begin(), model.var_mean.end(), [](double v) { return v == 0.0; }) &&
                       std::all_of(model.var_std.begin(), model.var_std.end(), [](double v) { return v == 1.0; });
    if (unset) model.fit_normalization(data.sequences);

    const std::size_t d = model.shape().size();
    std::vector<double> pool(d * data.sequences.size());
    for (std::size_t s = 0; s < data.sequences.size(); ++s) {
        const StateSequence& seq = data.sequences[s];
        if (!(seq.shape == model.shape())) throw Error(ErrorCode::ShapeMismatch, "training sequence shape differs");
        std::copy(seq.x.begin(), seq.x.end(), pool.begin() + std::ptrdiff_t(s * d));
        validate_tags(data.tags[s], model.shape().steps);
    }
    model.normalize(pool);

    Rng rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, data.sequences.size() - 1);
    std::vector<double> batch(d * cfg.batch);
    BatchTags tags(cfg.batch);
    std::vector<double> velocity(model.n_params(), 0.0);
    std::vector<double> history;
    history.reserve(cfg.steps);
    auto params = model.params();
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        for (std::size_t b = 0; b < cfg.batch; ++b) {
            const std::size_t s = pick(rng);
            std::copy_n(pool.begin() + std::ptrdiff_t(s * d), d, batch.begin() + std::ptrdiff_t(b * d));
            tags[b] = data.tags[s];
        }
        const LossGrad lg = fm_loss(model, batch, tags, cfg.p_drop, rng);
        for (std::size_t k = 0; k < params.size(); ++k) {
            velocity[k] = cfg.momentum * velocity[k] + lg.grad[k];
            params[k] -= cfg.learning_rate * velocity[k];
        }
        history.push_back(lg.loss);
    }
    model.hyper = {{"steps", cfg.steps},     {"batch", cfg.batch},   {"learning_rate", cfg.learning_rate},
                   {"momentum", cfg.momentum}, {"p_drop", cfg.p_drop}, {"train_seed", cfg.seed}};
    return history;
}

SequenceShape observed_shape(const SequenceShape& fine, const CoarsenSpec& spec) {
    if (spec.spatial_factor == 0 || spec.temporal_factor == 0 || fine.steps % spec.temporal_factor != 0 ||
        fine.height % spec.spatial_factor != 0 || fine.width % spec.spatial_factor != 0) {
        throw Error(ErrorCode::NonDivisibleShape, "sequence shape not divisible by observation factors");
    }
    return SequenceShape{fine.steps / spec.temporal_factor, fine.variables, fine.height / spec.spatial_factor,
                         fine.width / spec.spatial_factor};
}

std::vector<double> observe(const SequenceShape& fine, const CoarsenSpec& spec, std::span<const double> x) {
    const SequenceShape cs = observed_shape(fine, spec);
    if (x.size() != fine.size()) throw Error(ErrorCode::ShapeMismatch, "state size does not match shape");
    std::vector<double> y(cs.size(), 0.0);
    const std::size_t sf = spec.spatial_factor, tf = spec.temporal_factor;
    for (std::size_t l = 0; l < fine.steps; ++l) {
        for (std::size_t v = 0; v < fine.variables; ++v) {
            for (std::size_t i = 0; i < fine.height; ++i) {
                for (std::size_t j = 0; j < fine.width; ++j) {
                    y[cs.index(l / tf, v, i / sf, j / sf)] += x[fine.index(l, v, i, j)];
                }
            }
        }
    }
    const double inv = 1.0 / double(sf * sf * tf);
    for (double& v : y) v *= inv;
    return y;
}

std::vector<double> observe_adjoint(const SequenceShape& fine, const CoarsenSpec& spec, std::span<const double> y) {
    const SequenceShape cs = observed_shape(fine, spec);
    if (y.size() != cs.size()) throw Error(ErrorCode::ShapeMismatch, "observation size does not match shape");
    std::vector<double> x(fine.size());
    const std::size_t sf = spec.spatial_factor, tf = spec.temporal_factor;
    const double inv = 1.0 / double(sf * sf * tf);
    for (std::size_t l = 0; l < fine.steps; ++l) {
        for (std::size_t v = 0; v < fine.variables; ++v) {
            for (std::size_t i = 0; i < fine.height; ++i) {
                for (std::size_t j = 0; j < fine.width; ++j) {
                    x[fine.index(l, v, i, j)] = y[cs.index(l / tf, v, i / sf, j / sf)] * inv;
                }
            }
        }
    }
    return x;
}

namespace {

struct Guide {
    const ObservationModel* obs;
    std::vector<double> y_norm;     // normalised observation
    std::vector<double> sigma2;     // per observed element, normalised units
    double block_inv = 1.0;         // c = 1 / block size
    double scale = 1.0;
};

// x: D x B normalised initial noise, integrated in place.
void integrate(const FlowModel& model, Mat& x, const std::optional<TimeTags>& tags, const SampleConfig& cfg,
               const Guide* guide) {
    if (cfg.n_steps == 0) throw Error(ErrorCode::InvalidArgument, "n_steps must be >= 1");
    if (tags) validate_tags(*tags, model.shape().steps);
    const std::size_t batch = std::size_t(x.cols());
    const Net net(model);
    const BatchTags cond(batch, tags);
    const BatchTags uncond(batch, std::nullopt);
    const bool need_uncond = !tags || cfg.cfg_weight != 1.0;
    const bool need_cond = tags.has_value();
    const double dt = 1.0 / double(cfg.n_steps);
    std::vector<double> tau(batch);
    Cache c;
    for (std::size_t k = 0; k < cfg.n_steps; ++k) {
        const double t = double(k) * dt;
        std::fill(tau.begin(), tau.end(), t);
        const CMatMap xm(x.data(), x.rows(), x.cols());
        Mat v;
        if (need_uncond) {
            forward(net, xm, tau, uncond, c);
            v = c.out;
        }
        if (need_cond) {
            forward(net, xm, tau, cond, c);
            v = need_uncond ? Mat(v + cfg.cfg_weight * (c.out - v)) : c.out;
        }
        if (guide && guide->scale != 0.0) {
            const double one_minus = 1.0 - t;
            const double r2 = one_minus * one_minus / (t * t + one_minus * one_minus);
            const SequenceShape& shape = model.shape();
            for (std::size_t b = 0; b < batch; ++b) {
                std::vector<double> x1_hat(std::size_t(x.rows()));
                for (Eigen::Index q = 0; q < x.rows(); ++q) {
                    x1_hat[std::size_t(q)] = x(q, Eigen::Index(b)) + one_minus * v(q, Eigen::Index(b));
                }
                std::vector<double> resid = observe(shape, guide->obs->spec, x1_hat);
                for (std::size_t q = 0; q < resid.size(); ++q) {
                    resid[q] = r2 * (guide->y_norm[q] - resid[q]) / (r2 * guide->block_inv + guide->sigma2[q]);
                }
                const std::vector<double> corr = observe_adjoint(shape, guide->obs->spec, resid);
                for (Eigen::Index q = 0; q < x.rows(); ++q) {
                    v(q, Eigen::Index(b)) += guide->scale * corr[std::size_t(q)] / one_minus;
                }
            }
        }
        x.noalias() += dt * v;
        if (!x.allFinite()) {
            throw Error(ErrorCode::NonFiniteState, "sample diverged at step " + std::to_string(k));
        }
    }
}

Mat initial_noise(std::size_t dim, std::span<Rng> rngs) {
    Mat x(Eigen::Index(dim), Eigen::Index(rngs.size()));
    for (std::size_t b = 0; b < rngs.size(); ++b) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t q = 0; q < dim; ++q) x(Eigen::Index(q), Eigen::Index(b)) = normal(rngs[b]);
    }
    return x;
}

std::vector<StateSequence> to_sequences(const FlowModel& model, const Mat& x) {
    std::vector<StateSequence> out(std::size_t(x.cols()));
    for (std::size_t b = 0; b < out.size(); ++b) {
        out[b].shape = model.shape();
        out[b].x.assign(x.col(Eigen::Index(b)).data(), x.col(Eigen::Index(b)).data() + x.rows());
        model.denormalize(out[b].x);
    }
    return out;
}

}  // namespace

std::vector<StateSequence> fm_sample_batch(const FlowModel& model, const std::optional<TimeTags>& tags,
                                           const SampleConfig& cfg, std::size_t n_samples, Rng& rng) {
    if (cfg.n_steps == 0) throw Error(ErrorCode::InvalidArgument, "n_steps must be >= 1");
    std::vector<Rng> rngs;
    rngs.reserve(n_samples);
    for (std::size_t b = 0; b < n_samples; ++b) rngs.emplace_back(rng());
    Mat x = initial_noise(model.shape().size(), rngs);
    integrate(model, x, tags, cfg, nullptr);
    return to_sequences(model, x);
}

StateSequence fm_sample(const FlowModel& model, const std::optional<TimeTags>& tags, const SampleConfig& cfg,
                        Rng& rng) {
    return std::move(fm_sample_batch(model, tags, cfg, 1, rng).front());
}

std::vector<StateSequence> guided_sample_batch(const FlowModel& model, const StateSequence& y,
                                               const ObservationModel& obs, const std::optional<TimeTags>& tags,
                                               const GuidanceConfig& cfg, std::span<Rng> rngs) {
    const SequenceShape cs = observed_shape(model.shape(), obs.spec);
    if (!(y.shape == cs) || y.x.size() != cs.size()) {
        throw Error(ErrorCode::ShapeMismatch, "observation shape does not match the observation operator");
    }
    if (!(obs.noise_std > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_std must be positive");
    if (cfg.sampling.n_steps == 0) throw Error(ErrorCode::InvalidArgument, "n_steps must be >= 1");

    Guide g;
    g.obs = &obs;
    g.scale = cfg.guidance_scale;
    g.block_inv = 1.0 / double(obs.spec.spatial_factor * obs.spec.spatial_factor * obs.spec.temporal_factor);
    g.y_norm = y.x;
    g.sigma2.resize(y.x.size());
    const std::size_t plane = cs.height * cs.width;
    for (std::size_t q = 0; q < y.x.size(); ++q) {
        const std::size_t v = (q / plane) % cs.variables;
        g.y_norm[q] = (y.x[q] - model.var_mean[v]) / model.var_std[v];
        const double s = obs.noise_std / model.var_std[v];
        g.sigma2[q] = s * s;
    }
    Mat x = initial_noise(model.shape().size(), rngs);
    integrate(model, x, tags, cfg.sampling, &g);
    return to_sequences(model, x);
}

StateSequence guided_sample(const FlowModel& model, const StateSequence& y, const ObservationModel& obs,
                            const std::optional<TimeTags>& tags, const GuidanceConfig& cfg, Rng& rng) {
    Rng local(rng());
    return std::move(guided_sample_batch(model, y, obs, tags, cfg, std::span<Rng>(&local, 1)).front());
}

TrainingSet build_training_set(std::span<const GridField> fine, std::size_t steps, std::size_t stride,
                               std::size_t crop_height, std::size_t crop_width) {
    if (fine.empty()) throw Error(ErrorCode::EmptySample, "no training fields");
    if (steps == 0 || stride == 0) throw Error(ErrorCode::InvalidArgument, "steps and stride must be positive");
    const GridAxes& axes = fine[0].axes;
    for (const GridField& f : fine) {
        if (!(f.axes == axes)) throw Error(ErrorCode::AxisMismatch, "training variables do not share axes");
    }
    const std::size_t h = crop_height ? crop_height : axes.n_lat();
    const std::size_t w = crop_width ? crop_width : axes.n_lon();
    if (h > axes.n_lat() || w > axes.n_lon()) throw Error(ErrorCode::ShapeMismatch, "crop exceeds grid");
    if (steps > axes.n_time) throw Error(ErrorCode::InsufficientSpan, "sequence longer than the record");
    const SequenceShape shape{steps, fine.size(), h, w};
    TrainingSet set;
    for (std::size_t t0 = 0; t0 + steps <= axes.n_time; t0 += stride) {
        TimeTags tags;
        bool ok = true;
        for (std::size_t l = 0; l < steps; ++l) {
            const TimeTag tag = tag_for(axes.time(t0 + l));
            ok = ok && tag.hour % 6 == 0;
            tags.push_back(tag);
        }
        if (!ok) continue;
        try {
            validate_tags(tags, steps);
        } catch (const Error&) {
            continue;
        }
        StateSequence s{shape, std::vector<double>(shape.size())};
        for (std::size_t l = 0; l < steps; ++l) {
            for (std::size_t v = 0; v < fine.size(); ++v) {
                for (std::size_t i = 0; i < h; ++i) {
                    for (std::size_t j = 0; j < w; ++j) {
                        s.x[shape.index(l, v, i, j)] = fine[v].at(t0 + l, i, j);
                    }
                }
            }
        }
        set.sequences.push_back(std::move(s));
        set.tags.push_back(std::move(tags));
    }
    return set;
}

DownscaleResult downscale_pipeline(std::span<const GridField> coarse, const FlowModel& model,
                                   const DownscaleConfig& cfg) {
    const SequenceShape& shape = model.shape();
    const GridMeta& grid = model.grid;
    if (coarse.size() != shape.variables || grid.variables.size() != shape.variables) {
        throw Error(ErrorCode::ShapeMismatch, "coarse variable count differs from the model");
    }
    if (grid.lats.size() != shape.height || grid.lons.size() != shape.width) {
        throw Error(ErrorCode::ShapeMismatch, "model grid metadata does not match its shape");
    }
    if (cfg.n_samples == 0) throw Error(ErrorCode::InvalidArgument, "n_samples must be positive");
    const CoarsenSpec spec = grid.obs_spec;
    const SequenceShape cs = observed_shape(shape, spec);
    const GridAxes& ca = coarse[0].axes;
    for (std::size_t v = 0; v < coarse.size(); ++v) {
        if (coarse[v].variable != grid.variables[v]) {
            throw Error(ErrorCode::ShapeMismatch, "coarse variable order differs from the model");
        }
        if (!(coarse[v].axes == ca)) throw Error(ErrorCode::AxisMismatch, "coarse variables do not share axes");
    }
    GridAxes fine_axes;
    fine_axes.lats = grid.lats;
    fine_axes.lons = grid.lons;
    fine_axes.time_start = ca.time_start;
    fine_axes.time_step_s = grid.time_step_s;
    fine_axes.n_time = ca.n_time * spec.temporal_factor;
    const GridAxes expect = coarsen_axes(fine_axes, spec);
    if (ca.n_lat() != cs.height || ca.n_lon() != cs.width ||
        ca.time_step_s != grid.time_step_s * std::int64_t(spec.temporal_factor)) {
        throw Error(ErrorCode::ShapeMismatch, "coarse grid does not match the model's observation operator");
    }
    for (std::size_t i = 0; i < cs.height; ++i) {
        if (std::abs(expect.lats[i] - ca.lats[i]) > 1e-6) throw Error(ErrorCode::ShapeMismatch, "coarse lats differ");
    }
    for (std::size_t j = 0; j < cs.width; ++j) {
        if (std::abs(expect.lons[j] - ca.lons[j]) > 1e-6) throw Error(ErrorCode::ShapeMismatch, "coarse lons differ");
    }
    if (ca.n_time < cs.steps) {
        throw Error(ErrorCode::InsufficientSpan, "coarse record of " + std::to_string(ca.n_time) +
                                                     " steps is shorter than the chunk length " +
                                                     std::to_string(cs.steps));
    }

    DownscaleResult res;
    res.samples.assign(cfg.n_samples, {});
    for (auto& s : res.samples) {
        for (std::size_t v = 0; v < shape.variables; ++v) {
            s.push_back(GridField{grid.variables[v], fine_axes, std::vector<float>(fine_axes.size())});
        }
    }
    std::vector<std::vector<double>> mean(shape.variables, std::vector<double>(fine_axes.size(), 0.0));

    const ObservationModel obs{spec, cfg.sigma_y};
    // A ragged tail is covered by one extra chunk aligned to the end of the
    // record; only its steps not already written are kept.
    const std::size_t n_chunks = (ca.n_time + cs.steps - 1) / cs.steps;
    const std::size_t cplane = cs.height * cs.width;
    for (std::size_t k = 0; k < n_chunks; ++k) {
        const std::size_t c0 = std::min(k * cs.steps, ca.n_time - cs.steps);
        StateSequence y{cs, std::vector<double>(cs.size())};
        for (std::size_t l = 0; l < cs.steps; ++l) {
            for (std::size_t v = 0; v < cs.variables; ++v) {
                const float* src = coarse[v].values.data() + (c0 + l) * cplane;
                std::copy(src, src + cplane, y.x.begin() + std::ptrdiff_t(cs.index(l, v, 0, 0)));
            }
        }
        const std::size_t t0 = c0 * spec.temporal_factor;
        const std::size_t first = k * shape.steps - t0;
        TimeTags tags;
        for (std::size_t l = 0; l < shape.steps; ++l) tags.push_back(tag_for(fine_axes.time(t0 + l)));
        std::vector<Rng> rngs;
        for (std::size_t s = 0; s < cfg.n_samples; ++s) {
            std::seed_seq seq{std::uint32_t(cfg.seed), std::uint32_t(cfg.seed >> 32), std::uint32_t(s),
                              std::uint32_t(k)};
            rngs.emplace_back(seq);
        }
        const auto draws = guided_sample_batch(model, y, obs, tags, cfg.guidance, rngs);
        for (std::size_t s = 0; s < cfg.n_samples; ++s) {
            for (std::size_t l = first; l < shape.steps; ++l) {
                for (std::size_t v = 0; v < shape.variables; ++v) {
                    for (std::size_t i = 0; i < shape.height; ++i) {
                        for (std::size_t j = 0; j < shape.width; ++j) {
                            const double val = draws[s].x[shape.index(l, v, i, j)];
                            const std::size_t at = fine_axes.index(t0 + l, i, j);
                            res.samples[s][v].values[at] = float(val);
                            mean[v][at] += val;
                        }
                    }
                }
            }
        }
    }
    for (std::size_t v = 0; v < shape.variables; ++v) {
        GridField m{grid.variables[v], fine_axes, std::vector<float>(fine_axes.size())};
        for (std::size_t q = 0; q < m.values.size(); ++q) m.values[q] = float(mean[v][q] / double(cfg.n_samples));
        res.mean.push_back(std::move(m));
    }
    return res;
}

void save_checkpoint(const FlowModel& model, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
    const SequenceShape& s = model.shape();
    const NetworkConfig& n = model.network();
    nlohmann::json vars = nlohmann::json::array();
    for (VariableId v : model.grid.variables) vars.push_back(std::string(variable_name(v)));
    const nlohmann::json header = {
        {"format", "flaute-flow-v1"},
        {"shape", {{"steps", s.steps}, {"variables", s.variables}, {"height", s.height}, {"width", s.width}}},
        {"network",
         {{"hidden", n.hidden}, {"blocks", n.blocks}, {"fourier", n.fourier}, {"embed_dim", n.embed_dim}}},
        {"seed", model.seed()},
        {"n_params", model.n_params()},
        {"dtype", "f32le"},
        {"var_mean", model.var_mean},
        {"var_std", model.var_std},
        {"grid",
         {{"variables", vars},
          {"lats", model.grid.lats},
          {"lons", model.grid.lons},
          {"time_step_s", model.grid.time_step_s},
          {"obs_spatial_factor", model.grid.obs_spec.spatial_factor},
          {"obs_temporal_factor", model.grid.obs_spec.temporal_factor}}},
        {"hyper", model.hyper}};
    {
        std::ofstream out(dir / "model.json", std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "model.json").string());
        out << header.dump(2) << '\n';
    }
    std::vector<unsigned char> bytes(model.n_params() * 4);
    const auto p = model.params();
    for (std::size_t k = 0; k < p.size(); ++k) {
        const auto bits = std::bit_cast<std::uint32_t>(float(p[k]));
        for (int b = 0; b < 4; ++b) bytes[4 * k + std::size_t(b)] = static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
    }
    std::ofstream out(dir / "params.f32le", std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "params.f32le").string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + (dir / "params.f32le").string());
}

FlowModel load_checkpoint(const std::filesystem::path& dir) {
    const auto header_path = dir / "model.json";
    const auto blob_path = dir / "params.f32le";
    if (!std::filesystem::exists(header_path)) throw Error(ErrorCode::MissingFile, header_path.string());
    if (!std::filesystem::exists(blob_path)) throw Error(ErrorCode::MissingFile, blob_path.string());
    FlowModel model;
    try {
        std::ifstream in(header_path);
        const auto h = nlohmann::json::parse(in);
        if (h.at("format").get<std::string>() != "flaute-flow-v1") {
            throw Error(ErrorCode::MetaMismatch, "unknown checkpoint format");
        }
        const auto& s = h.at("shape");
        const auto& n = h.at("network");
        model = FlowModel(SequenceShape{s.at("steps").get<std::size_t>(), s.at("variables").get<std::size_t>(),
                                        s.at("height").get<std::size_t>(), s.at("width").get<std::size_t>()},
                          NetworkConfig{n.at("hidden").get<std::size_t>(), n.at("blocks").get<std::size_t>(),
                                        n.at("fourier").get<std::size_t>(), n.at("embed_dim").get<std::size_t>()},
                          h.at("seed").get<std::uint64_t>());
        if (h.at("n_params").get<std::size_t>() != model.n_params()) {
            throw Error(ErrorCode::MetaMismatch, "parameter count differs from architecture");
        }
        model.var_mean = h.at("var_mean").get<std::vector<double>>();
        model.var_std = h.at("var_std").get<std::vector<double>>();
        const auto& g = h.at("grid");
        for (const auto& v : g.at("variables")) model.grid.variables.push_back(parse_variable(v.get<std::string>()));
        model.grid.lats = g.at("lats").get<std::vector<double>>();
        model.grid.lons = g.at("lons").get<std::vector<double>>();
        model.grid.time_step_s = g.at("time_step_s").get<std::int64_t>();
        model.grid.obs_spec.spatial_factor = g.at("obs_spatial_factor").get<std::size_t>();
        model.grid.obs_spec.temporal_factor = g.at("obs_temporal_factor").get<std::size_t>();
        model.hyper = h.value("hyper", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MetaMismatch, header_path.string() + ": " + e.what());
    }
    if (model.var_mean.size() != model.shape().variables || model.var_std.size() != model.shape().variables) {
        throw Error(ErrorCode::MetaMismatch, "normalisation vectors do not match variable count");
    }
    const std::uintmax_t expected = std::uintmax_t(model.n_params()) * 4;
    if (std::filesystem::file_size(blob_path) != expected) {
        throw Error(ErrorCode::MetaMismatch, "parameter blob size differs from header");
    }
    std::vector<unsigned char> bytes(expected);
    std::ifstream in(blob_path, std::ios::binary);
    in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!in) throw Error(ErrorCode::IoError, "read failed: " + blob_path.string());
    auto p = model.params();
    for (std::size_t k = 0; k < p.size(); ++k) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= std::uint32_t(bytes[4 * k + std::size_t(b)]) << (8 * b);
        p[k] = double(std::bit_cast<float>(bits));
    }
    return model;
}

}  // namespace flaute
