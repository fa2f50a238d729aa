#include "mxt/train.hpp"

#include <algorithm>
#include <cmath>

#include "mxt/ops.hpp"

namespace mxt {

template <class T>
void Adam<T>::step(const std::vector<std::pair<std::string, Tensor<T>>>& params) {
    if (m_.empty()) {
        for (const auto& [name, p] : params) {
            m_.emplace_back(p.numel(), T(0));
            v_.emplace_back(p.numel(), T(0));
        }
    }
    if (m_.size() != params.size()) throw ContractError("optimizer parameter list changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T step_size = static_cast<T>(cfg_.lr / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    const T eps = static_cast<T>(cfg_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T> p = params[i].second;
        if (!p.has_grad()) continue;
        const auto g = p.grad();
        auto w = p.mutable_values();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = b1 * m[j] + (T(1) - b1) * g[j];
            v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
            w[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
        }
    }
}

template <class T>
void Adam<T>::save(CheckpointFile& file, const std::string& prefix) const {
    file.config.emplace_back(prefix + "steps", std::to_string(t_));
    for (std::size_t i = 0; i < m_.size(); ++i) {
        const Shape s{m_[i].size()};
        file.tensors.push_back(pack_tensor(prefix + "m." + std::to_string(i), Tensor<T>(s, m_[i])));
        file.tensors.push_back(pack_tensor(prefix + "v." + std::to_string(i), Tensor<T>(s, v_[i])));
    }
}

template <class T>
void Adam<T>::load(const CheckpointFile& file, const std::string& prefix,
                   const std::vector<std::pair<std::string, Tensor<T>>>& params) {
    const auto* steps = file.config_value(prefix + "steps");
    if (!steps) throw SchemaError("checkpoint has no optimizer state '" + prefix + "'");
    t_ = std::stoull(*steps);
    m_.clear();
    v_.clear();
    if (t_ == 0) return;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Shape s{params[i].second.numel()};
        Tensor<T> m = Tensor<T>::zeros(s), v = Tensor<T>::zeros(s);
        const auto* tm = file.find(prefix + "m." + std::to_string(i));
        const auto* tv = file.find(prefix + "v." + std::to_string(i));
        if (!tm || !tv) throw SchemaError("checkpoint optimizer state '" + prefix + "' is incomplete");
        unpack_tensor(*tm, file.scalar_bytes, m);
        unpack_tensor(*tv, file.scalar_bytes, v);
        m_.emplace_back(m.values().begin(), m.values().end());
        v_.emplace_back(v.values().begin(), v.values().end());
    }
}

std::vector<ImageSample> load_image_dir(const std::filesystem::path& dir, std::uint64_t seed) {
    if (!std::filesystem::is_directory(dir)) throw IoError("data directory '" + dir.string() + "' does not exist");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .ppm images in '" + dir.string() + "'");
    std::vector<ImageSample> out;
    for (std::size_t i = 0; i < files.size(); ++i) {
        ImageSample s;
        s.gt = read_ppm(files[i]);
        s.bucket = static_cast<MaskBucket>(i % 3);
        MaskSpec spec;
        spec.bucket = s.bucket;
        spec.seed = Rng::derive(seed, 0x6d61736b00000000ULL + i).next();
        s.mask = generate_irregular_mask(spec, s.gt.height, s.gt.width).mask;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<ImageSample> dataset_for(const RunConfig& cfg) {
    if (!cfg.data_dir.empty()) return load_image_dir(cfg.data_dir, cfg.seed);
    return synthetic_dataset(cfg.dataset_size, cfg.image_size, cfg.image_size, cfg.seed);
}

std::vector<std::string> adopt_checkpoint_config(RunConfig& cfg, const CheckpointFile& file,
                                                 bool training_state) {
    static const std::vector<std::string> kept = {"train.iterations", "train.checkpoint",
                                                  "train.checkpoint_every", "train.log_every"};
    std::vector<std::string> notices;
    const auto current = cfg.entries();
    for (const auto& [key, value] : file.config) {
        const bool model_key = key.rfind("model.", 0) == 0;
        if (!model_key && !training_state) continue;
        if (key.rfind("state.", 0) == 0 || std::find(kept.begin(), kept.end(), key) != kept.end()) continue;
        const auto it = std::find_if(current.begin(), current.end(), [&](const auto& e) { return e.first == key; });
        if (it == current.end()) {
            if (model_key) throw SchemaError("checkpoint has unknown config key '" + key + "'");
            continue;
        }
        if (it->second == value) continue;
        notices.push_back("checkpoint overrides " + key + " = " + it->second + " with " + value);
        cfg.set(key, value);
    }
    cfg.validate();
    return notices;
}

template <class T>
Trainer<T>::Trainer(const RunConfig& cfg, std::vector<ImageSample> data)
    : cfg_(cfg),
      data_(std::move(data)),
      batcher_(data_.size(), cfg.batch_size, cfg.seed),
      model_(MxtModel<T>::init(cfg.model, cfg.seed)),
      extractor_(cfg.extractor_seed),
      gen_opt_(cfg.optim),
      disc_opt_(cfg.optim) {
    cfg_.validate();
    if (cfg_.loss.adversarial > 0) disc_ = PatchDiscriminator<T>::init(cfg_.seed);
}

namespace {

template <class T>
void check_finite(double v, const std::string& term, std::uint64_t step) {
    if (!std::isfinite(v)) {
        throw NumericError("non-finite " + term + " loss at step " + std::to_string(step));
    }
}

}  // namespace

template <class T>
StepReport Trainer<T>::step() {
    const auto batch = make_batch<T>(data_, batcher_.batch_for_step(step_));
    StepReport report;
    report.step = step_ + 1;

    auto gen_params = model_.named_parameters();
    for (auto& [n, p] : gen_params) p.zero_grad();
    auto out = model_.forward(batch.masked, batch.mask);
    const auto shown = cfg_.loss_on_composite ? composite(out, batch.masked, batch.mask) : out;

    if (disc_) {
        std::vector<std::pair<std::string, Tensor<T>>> dparams;
        disc_->visit([&](const std::string& n, Tensor<T>& p) { dparams.emplace_back(n, p); });
        for (auto& [n, p] : dparams) p.zero_grad();
        const auto real = disc_->forward(batch.gt);
        const auto fake = disc_->forward(shown.detach());
        Tensor<T> d_loss;
        if (cfg_.gan == GanLoss::non_saturating) {
            d_loss = add(mean(softplus(neg(real))), mean(softplus(fake)));
        } else {
            d_loss = add(mean(relu(affine(real, T(-1), T(1)))), mean(relu(affine(fake, T(1), T(1)))));
        }
        report.discriminator = static_cast<double>(d_loss.item());
        check_finite<T>(*report.discriminator, "discriminator", report.step);
        backward(d_loss);
        disc_opt_.step(dparams);
        for (auto& [n, p] : dparams) p.set_requires_grad(false);
    }

    auto terms = composite_loss(shown, batch.gt, cfg_.loss, &extractor_, disc_ ? &*disc_ : nullptr, cfg_.gan);
    report.terms = terms.breakdown(cfg_.loss);
    for (const auto& [name, v] : report.terms) check_finite<T>(v, name, report.step);
    if (disc_) disc_->visit([](const std::string&, Tensor<T>& p) { p.set_requires_grad(true); });
    if (terms.total.requires_grad()) {
        backward(terms.total);
        gen_opt_.step(gen_params);
    }
    ++step_;
    return report;
}

template <class T>
CheckpointFile Trainer<T>::state() {
    CheckpointFile f = model_checkpoint(model_);
    for (const auto& [k, v] : cfg_.entries()) {
        if (k.rfind("model.", 0) != 0) f.config.emplace_back(k, v);
    }
    f.config.emplace_back("state.step", std::to_string(step_));
    gen_opt_.save(f, "state.gen_adam.");
    if (disc_) {
        disc_->visit([&](const std::string& n, Tensor<T>& p) { f.tensors.push_back(pack_tensor(n, p)); });
        disc_opt_.save(f, "state.disc_adam.");
    }
    return f;
}

template <class T>
void Trainer<T>::save(const std::filesystem::path& path) {
    write_checkpoint(path, state());
}

template <class T>
void Trainer<T>::restore(const CheckpointFile& file) {
    model_ = load_model<T>(file);
    const auto* step = file.config_value("state.step");
    if (!step) throw SchemaError("checkpoint carries no training state");
    step_ = std::stoull(*step);
    gen_opt_ = Adam<T>(cfg_.optim);
    gen_opt_.load(file, "state.gen_adam.", model_.named_parameters());
    if (disc_) {
        std::vector<std::pair<std::string, Tensor<T>>> dparams;
        disc_->visit([&](const std::string& n, Tensor<T>& p) {
            const auto* t = file.find(n);
            if (!t) throw SchemaError("checkpoint is missing discriminator tensor '" + n + "'");
            unpack_tensor(*t, file.scalar_bytes, p);
            dparams.emplace_back(n, p);
        });
        disc_opt_ = Adam<T>(cfg_.optim);
        disc_opt_.load(file, "state.disc_adam.", dparams);
    }
}

template <class T>
double Trainer<T>::masked_l1() {
    NoGradGuard guard;
    double err = 0, holes = 0;
    for (std::size_t i = 0; i < data_.size(); ++i) {
        const auto b = make_batch<T>(data_, {i});
        const auto out = model_.forward(b.masked, b.mask);
        const auto o = out.values(), g = b.gt.values(), m = b.mask.values();
        const std::size_t hw = m.size();
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t k = 0; k < hw; ++k) {
                if (m[k] < T(0.5)) continue;
                err += std::abs(static_cast<double>(o[c * hw + k]) - static_cast<double>(g[c * hw + k]));
                holes += 1;
            }
    }
    return holes > 0 ? err / holes : 0.0;
}

template <class T>
void run_training(Trainer<T>& trainer, std::ostream& log) {
    const auto& cfg = trainer.config();
    while (trainer.steps_done() < cfg.iterations) {
        const auto r = trainer.step();
        if (cfg.log_every > 0 && (r.step % cfg.log_every == 0 || r.step == cfg.iterations)) {
            if (r.discriminator) log << "step=" << r.step << " term=discriminator value=" << *r.discriminator << "\n";
            for (const auto& [name, v] : r.terms) log << "step=" << r.step << " term=" << name << " value=" << v << "\n";
            log.flush();
        }
        if (cfg.checkpoint_every > 0 && r.step % cfg.checkpoint_every == 0) trainer.save(cfg.checkpoint);
    }
    trainer.save(cfg.checkpoint);
}

template class Adam<float>;
template class Adam<double>;
template class Trainer<float>;
template class Trainer<double>;
template void run_training(Trainer<float>&, std::ostream&);
template void run_training(Trainer<double>&, std::ostream&);

}  // namespace mxt
