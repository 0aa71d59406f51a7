// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#include "cdrbench/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "cdrbench/rng.hpp"

namespace cdrbench::baselines {

namespace {

double clamp_rating(double r) { return std::min(kRatingMax, std::max(kRatingMin, r)); }

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> draw_factor(rng::Engine& eng, int dimension) {
    std::vector<double> f(static_cast<std::size_t>(dimension));
    for (double& v : f) v = rng::uniform_range(eng, -0.05, 0.05);
    return f;
}

// Factors are created in sorted-key order from a single engine, so the
// draw sequence (and therefore the trained model) is a pure function of
// (data, config).
std::map<std::string, std::vector<double>> init_factors(rng::Engine& eng,
                                                        const std::set<std::string>& keys,
                                                        int dimension) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& k : keys) out.emplace(k, draw_factor(eng, dimension));
    return out;
}

double mean_rating(const std::vector<corpus::Interaction>& interactions) {
    double sum = 0.0;
    for (const auto& it : interactions) sum += it.rating;
    return sum / static_cast<double>(interactions.size());
}

void check_config(const MFConfig& cfg) {
    if (cfg.dimension <= 0) throw TrainingError("mf: dimension must be positive");
    if (cfg.epochs < 0) throw TrainingError("mf: epochs must be non-negative");
    if (!(cfg.learning_rate > 0)) throw TrainingError("mf: learning rate must be positive");
    if (cfg.regularization < 0) throw TrainingError("mf: regularization must be non-negative");
}

void sgd_step(std::vector<double>& user, std::vector<double>& item, double err, double eta,
              double lambda) {
    for (std::size_t f = 0; f < user.size(); ++f) {
        const double pu = user[f];
        const double qi = item[f];
        user[f] += eta * (err * qi - lambda * pu);
        item[f] += eta * (err * pu - lambda * qi);
    }
}

}  // namespace

MFModel train_mf(const std::vector<corpus::Interaction>& interactions, const MFConfig& cfg) {
    check_config(cfg);
    if (interactions.empty()) throw TrainingError("mf: no training interactions");

    std::set<std::string> users, items;
    for (const auto& it : interactions) {
        users.insert(it.user_id);
        items.insert(it.item_id);
    }

    MFModel model;
    model.dimension = cfg.dimension;
    model.global_bias = mean_rating(interactions);

    rng::Engine eng(rng::mix(cfg.seed));
    model.user_factors = init_factors(eng, users, cfg.dimension);
    model.item_factors = init_factors(eng, items, cfg.dimension);

    std::vector<std::size_t> order(interactions.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng::shuffle(eng, order);
        for (std::size_t idx : order) {
            const auto& ex = interactions[idx];
            auto& p = model.user_factors.at(ex.user_id);
            auto& q = model.item_factors.at(ex.item_id);
            const double err = ex.rating - model.global_bias - dot(p, q);
            sgd_step(p, q, err, cfg.learning_rate, cfg.regularization);
        }

        double objective = 0.0;
        for (const auto& ex : interactions) {
            const auto& p = model.user_factors.at(ex.user_id);
            const auto& q = model.item_factors.at(ex.item_id);
            const double err = ex.rating - model.global_bias - dot(p, q);
            objective += err * err + cfg.regularization * (dot(p, p) + dot(q, q));
        }
        objective /= static_cast<double>(interactions.size());
        if (!std::isfinite(objective))
            throw TrainingError("mf: training diverged at epoch " + std::to_string(epoch + 1));
        model.epoch_loss.push_back(objective);
    }
    return model;
}

double predict_mf(const MFModel& model, const std::string& user_id, const std::string& item_id) {
    const auto u = model.user_factors.find(user_id);
    const auto i = model.item_factors.find(item_id);
    if (u == model.user_factors.end() || i == model.item_factors.end())
        return clamp_rating(model.global_bias);
    return clamp_rating(model.global_bias + dot(u->second, i->second));
}

CMFModel train_cmf(const std::vector<corpus::Interaction>& source,
                   const std::vector<corpus::Interaction>& target, const MFConfig& cfg) {
    check_config(cfg);
    if (target.empty()) throw TrainingError("cmf: no target-domain interactions");

    std::set<std::string> users, items_source, items_target;
    for (const auto& it : source) {
        users.insert(it.user_id);
        items_source.insert(it.item_id);
    }
    for (const auto& it : target) {
        users.insert(it.user_id);
        items_target.insert(it.item_id);
    }

    CMFModel model;
    model.dimension = cfg.dimension;
    model.global_bias_source = source.empty() ? 0.0 : mean_rating(source);
    model.global_bias_target = mean_rating(target);

    rng::Engine eng(rng::mix(cfg.seed));
    model.user_factors = init_factors(eng, users, cfg.dimension);
    model.item_factors_source = init_factors(eng, items_source, cfg.dimension);
    model.item_factors_target = init_factors(eng, items_target, cfg.dimension);

    struct Example {
        const corpus::Interaction* it;
        bool is_source;
    };
    std::vector<Example> examples;
    examples.reserve(source.size() + target.size());
    for (const auto& it : source) examples.push_back({&it, true});
    for (const auto& it : target) examples.push_back({&it, false});

    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);

    const auto bias = [&](bool is_source) {
        return is_source ? model.global_bias_source : model.global_bias_target;
    };
    const auto items = [&](bool is_source) -> std::map<std::string, std::vector<double>>& {
        return is_source ? model.item_factors_source : model.item_factors_target;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng::shuffle(eng, order);
        for (std::size_t idx : order) {
            const auto& ex = examples[idx];
            auto& u = model.user_factors.at(ex.it->user_id);
            auto& q = items(ex.is_source).at(ex.it->item_id);
            const double err = ex.it->rating - bias(ex.is_source) - dot(u, q);
            sgd_step(u, q, err, cfg.learning_rate, cfg.regularization);
        }

        double objective = 0.0;
        for (const auto& ex : examples) {
            const auto& u = model.user_factors.at(ex.it->user_id);
            const auto& q = items(ex.is_source).at(ex.it->item_id);
            const double err = ex.it->rating - bias(ex.is_source) - dot(u, q);
            objective += err * err + cfg.regularization * (dot(u, u) + dot(q, q));
        }
        objective /= static_cast<double>(examples.size());
        if (!std::isfinite(objective))
            throw TrainingError("cmf: training diverged at epoch " + std::to_string(epoch + 1));
        model.epoch_loss.push_back(objective);
    }
    return model;
}

double predict_cmf(const CMFModel& model, const std::string& user_id,
                   const std::string& item_id) {
    const auto u = model.user_factors.find(user_id);
    const auto i = model.item_factors_target.find(item_id);
    if (u == model.user_factors.end() || i == model.item_factors_target.end())
        return clamp_rating(model.global_bias_target);
    return clamp_rating(model.global_bias_target + dot(u->second, i->second));
}

std::vector<double> MLPMapper::apply(std::span<const double> x) const {
    std::vector<double> a(static_cast<std::size_t>(hidden_dim));
    for (int h = 0; h < hidden_dim; ++h) {
        double z = b1[static_cast<std::size_t>(h)];
        for (int d = 0; d < input_dim; ++d)
            z += w1[static_cast<std::size_t>(h * input_dim + d)] * x[static_cast<std::size_t>(d)];
        a[static_cast<std::size_t>(h)] = std::tanh(z);
    }
    std::vector<double> out(static_cast<std::size_t>(input_dim));
    for (int d = 0; d < input_dim; ++d) {
        double v = b2[static_cast<std::size_t>(d)];
        for (int h = 0; h < hidden_dim; ++h)
            v += w2[static_cast<std::size_t>(d * hidden_dim + h)] * a[static_cast<std::size_t>(h)];
        out[static_cast<std::size_t>(d)] = v;
    }
    return out;
}

double mapper_loss(const MLPMapper& m, std::span<const double> x, std::span<const double> y) {
    const auto f = m.apply(x);
    double loss = 0.0;
    for (std::size_t d = 0; d < f.size(); ++d) {
        const double e = f[d] - y[d];
        loss += e * e;
    }
    return loss;
}

MapperGradients mapper_gradients(const MLPMapper& m, std::span<const double> x,
                                 std::span<const double> y) {
    const std::size_t D = static_cast<std::size_t>(m.input_dim);
    const std::size_t H = static_cast<std::size_t>(m.hidden_dim);

    std::vector<double> a(H);
    for (std::size_t h = 0; h < H; ++h) {
        double z = m.b1[h];
        for (std::size_t d = 0; d < D; ++d) z += m.w1[h * D + d] * x[d];
        a[h] = std::tanh(z);
    }
    std::vector<double> e2(D);  // dL/df = 2 (f - y)
    for (std::size_t d = 0; d < D; ++d) {
        double f = m.b2[d];
        for (std::size_t h = 0; h < H; ++h) f += m.w2[d * H + h] * a[h];
        e2[d] = 2.0 * (f - y[d]);
    }

    MapperGradients g;
    g.w1.assign(H * D, 0.0);
    g.b1.assign(H, 0.0);
    g.w2.assign(D * H, 0.0);
    g.b2 = e2;
    for (std::size_t d = 0; d < D; ++d)
        for (std::size_t h = 0; h < H; ++h) g.w2[d * H + h] = e2[d] * a[h];

    for (std::size_t h = 0; h < H; ++h) {
        double da = 0.0;
        for (std::size_t d = 0; d < D; ++d) da += m.w2[d * H + h] * e2[d];
        const double dz = da * (1.0 - a[h] * a[h]);
        g.b1[h] = dz;
        for (std::size_t d = 0; d < D; ++d) g.w1[h * D + d] = dz * x[d];
    }
    return g;
}

MLPMapper train_mapper(const MFModel& source, const MFModel& target,
                       const std::set<std::string>& overlap_users, const MapperConfig& cfg) {
    if (cfg.hidden_dim <= 0) throw TrainingError("mapper: hidden_dim must be positive");
    if (source.dimension != target.dimension)
        throw TrainingError("mapper: source/target factor dimensions differ");

    std::vector<std::pair<const std::vector<double>*, const std::vector<double>*>> pairs;
    for (const auto& user : overlap_users) {
        const auto s = source.user_factors.find(user);
        const auto t = target.user_factors.find(user);
        if (s != source.user_factors.end() && t != target.user_factors.end())
            pairs.emplace_back(&s->second, &t->second);
    }
    if (pairs.size() < 10)
        throw TrainingError("mapper: need at least 10 overlap users with factors, have " +
                            std::to_string(pairs.size()));

    MLPMapper m;
    m.input_dim = source.dimension;
    m.hidden_dim = cfg.hidden_dim;
    const std::size_t D = static_cast<std::size_t>(m.input_dim);
    const std::size_t H = static_cast<std::size_t>(m.hidden_dim);

    rng::Engine eng(rng::mix(cfg.seed));
    const auto draw = [&](std::size_t n) {
        std::vector<double> v(n);
        for (double& x : v) x = rng::uniform_range(eng, -0.05, 0.05);
        return v;
    };
    m.w1 = draw(H * D);
    m.b1 = draw(H);
    m.w2 = draw(D * H);
    m.b2 = draw(D);

    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    const auto axpy = [](std::vector<double>& param, const std::vector<double>& grad,
                         double eta) {
        for (std::size_t i = 0; i < param.size(); ++i) param[i] -= eta * grad[i];
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng::shuffle(eng, order);
        for (std::size_t idx : order) {
            const auto g = mapper_gradients(m, *pairs[idx].first, *pairs[idx].second);
            axpy(m.w1, g.w1, cfg.learning_rate);
            axpy(m.b1, g.b1, cfg.learning_rate);
            axpy(m.w2, g.w2, cfg.learning_rate);
            axpy(m.b2, g.b2, cfg.learning_rate);
        }
        double loss = 0.0;
        for (const auto& [x, y] : pairs) loss += mapper_loss(m, *x, *y);
        loss /= static_cast<double>(pairs.size());
        if (!std::isfinite(loss))
            throw TrainingError("mapper: training diverged at epoch " + std::to_string(epoch + 1));
        m.epoch_loss.push_back(loss);
    }
    return m;
}

double predict_mapped(const MLPMapper& mapper, const MFModel& source, const MFModel& target,
                      const std::string& user_id, const std::string& item_id) {
    const auto u = source.user_factors.find(user_id);
    const auto i = target.item_factors.find(item_id);
    if (u == source.user_factors.end() || i == target.item_factors.end())
        return clamp_rating(target.global_bias);
    const auto mapped = mapper.apply(u->second);
    return clamp_rating(target.global_bias + dot(mapped, i->second));
}

metrics::RankingOutcome rank_with_model(
    const std::function<double(const std::string&, const std::string&)>& score,
    const sampler::EvalInstance& inst) {
    std::map<std::string, const std::string*> item_by_title;
    item_by_title[inst.positive_title] = &inst.positive_item_id;
    for (const auto& n : inst.negatives) item_by_title.emplace(n.title, &n.item_id);

    std::vector<double> scores(inst.candidates.size());
    for (std::size_t i = 0; i < inst.candidates.size(); ++i) {
        const auto it = item_by_title.find(inst.candidates[i]);
        if (it == item_by_title.end())
            throw std::logic_error("candidate title missing from instance: " +
                                   inst.candidates[i]);
        scores[i] = score(inst.user_id, *it->second);
    }

    std::vector<std::size_t> order(inst.candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    metrics::RankingOutcome out;
    out.k_total = inst.candidates.size();
    for (std::size_t r = 0; r < order.size(); ++r) {
        if (order[r] == inst.positive_position) {
            out.p_u = r + 1;
            break;
        }
    }
    return out;
}

namespace {

// Checkpoint layout: "CDRB" magic, format version, model kind, then the
// payload. Multi-byte values are raw host-endian (little-endian on every
// platform this targets).
constexpr char kMagic[4] = {'C', 'D', 'R', 'B'};
constexpr std::uint32_t kVersion = 1;
enum : std::uint8_t { kKindMF = 1, kKindCMF = 2, kKindMapper = 3 };

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
    write_bytes(out, &v, sizeof v);
}

void write_string(std::ofstream& out, const std::string& s) {
    write_pod(out, static_cast<std::uint64_t>(s.size()));
    write_bytes(out, s.data(), s.size());
}

void write_vec(std::ofstream& out, const std::vector<double>& v) {
    write_pod(out, static_cast<std::uint64_t>(v.size()));
    write_bytes(out, v.data(), v.size() * sizeof(double));
}

void write_factor_map(std::ofstream& out, const std::map<std::string, std::vector<double>>& m) {
    write_pod(out, static_cast<std::uint64_t>(m.size()));
    for (const auto& [k, v] : m) {
        write_string(out, k);
        write_vec(out, v);
    }
}

void read_bytes(std::ifstream& in, void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw TrainingError("checkpoint: truncated file");
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v;
    read_bytes(in, &v, sizeof v);
    return v;
}

std::string read_string(std::ifstream& in) {
    const auto n = read_pod<std::uint64_t>(in);
    std::string s(n, '\0');
    read_bytes(in, s.data(), n);
    return s;
}

std::vector<double> read_vec(std::ifstream& in) {
    const auto n = read_pod<std::uint64_t>(in);
    std::vector<double> v(n);
    read_bytes(in, v.data(), n * sizeof(double));
    return v;
}

std::map<std::string, std::vector<double>> read_factor_map(std::ifstream& in) {
    const auto n = read_pod<std::uint64_t>(in);
    std::map<std::string, std::vector<double>> m;
    for (std::uint64_t i = 0; i < n; ++i) {
        std::string k = read_string(in);
        m.emplace(std::move(k), read_vec(in));
    }
    return m;
}

std::ofstream open_checkpoint_out(const std::string& path, std::uint8_t kind) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw TrainingError("checkpoint: cannot write " + path);
    write_bytes(out, kMagic, sizeof kMagic);
    write_pod(out, kVersion);
    write_pod(out, kind);
    return out;
}

std::ifstream open_checkpoint_in(const std::string& path, std::uint8_t kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TrainingError("checkpoint: cannot open " + path);
    char magic[4];
    read_bytes(in, magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw TrainingError("checkpoint: bad magic in " + path);
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kVersion)
        throw TrainingError("checkpoint: unsupported version " + std::to_string(version));
    const auto file_kind = read_pod<std::uint8_t>(in);
    if (file_kind != kind) throw TrainingError("checkpoint: wrong model kind in " + path);
    return in;
}

}  // namespace

void save_mf(const MFModel& model, const std::string& path) {
    auto out = open_checkpoint_out(path, kKindMF);
    write_pod(out, model.global_bias);
    write_pod(out, static_cast<std::uint32_t>(model.dimension));
    write_factor_map(out, model.user_factors);
    write_factor_map(out, model.item_factors);
    write_vec(out, model.epoch_loss);
    if (!out) throw TrainingError("checkpoint: write failed: " + path);
}

MFModel load_mf(const std::string& path) {
    auto in = open_checkpoint_in(path, kKindMF);
    MFModel model;
    model.global_bias = read_pod<double>(in);
    model.dimension = static_cast<int>(read_pod<std::uint32_t>(in));
    model.user_factors = read_factor_map(in);
    model.item_factors = read_factor_map(in);
    model.epoch_loss = read_vec(in);
    return model;
}

void save_cmf(const CMFModel& model, const std::string& path) {
    auto out = open_checkpoint_out(path, kKindCMF);
    write_pod(out, model.global_bias_source);
    write_pod(out, model.global_bias_target);
    write_pod(out, static_cast<std::uint32_t>(model.dimension));
    write_factor_map(out, model.user_factors);
    write_factor_map(out, model.item_factors_source);
    write_factor_map(out, model.item_factors_target);
    write_vec(out, model.epoch_loss);
    if (!out) throw TrainingError("checkpoint: write failed: " + path);
}

CMFModel load_cmf(const std::string& path) {
    auto in = open_checkpoint_in(path, kKindCMF);
    CMFModel model;
    model.global_bias_source = read_pod<double>(in);
    model.global_bias_target = read_pod<double>(in);
    model.dimension = static_cast<int>(read_pod<std::uint32_t>(in));
    model.user_factors = read_factor_map(in);
    model.item_factors_source = read_factor_map(in);
    model.item_factors_target = read_factor_map(in);
    model.epoch_loss = read_vec(in);
    return model;
}

void save_mapper(const MLPMapper& mapper, const std::string& path) {
    auto out = open_checkpoint_out(path, kKindMapper);
    write_pod(out, static_cast<std::uint32_t>(mapper.input_dim));
    write_pod(out, static_cast<std::uint32_t>(mapper.hidden_dim));
    write_vec(out, mapper.w1);
    write_vec(out, mapper.b1);
    write_vec(out, mapper.w2);
    write_vec(out, mapper.b2);
    write_vec(out, mapper.epoch_loss);
    if (!out) throw TrainingError("checkpoint: write failed: " + path);
}

MLPMapper load_mapper(const std::string& path) {
    auto in = open_checkpoint_in(path, kKindMapper);
    MLPMapper mapper;
    mapper.input_dim = static_cast<int>(read_pod<std::uint32_t>(in));
    mapper.hidden_dim = static_cast<int>(read_pod<std::uint32_t>(in));
    mapper.w1 = read_vec(in);
    mapper.b1 = read_vec(in);
    mapper.w2 = read_vec(in);
    mapper.b2 = read_vec(in);
    mapper.epoch_loss = read_vec(in);
    return mapper;
}

}  // namespace cdrbench::baselines
