#include "rdg/train_a.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

namespace rdg::train_a {

using datakit::Split;
using datakit::TileManifest;
using datakit::TileRecord;

void StageAConfig::validate() const {
    weights.validate();
    if (lr_gen <= 0 || lr_disc <= 0) throw ValidationError("learning rates must be positive");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (critic_iters < 1) throw ValidationError("critic_iters must be >= 1");
    if (epochs < 0) throw ValidationError("epochs must be non-negative");
    if (disc_base_width < 1) throw ValidationError("disc_base_width must be >= 1");
}

namespace {

nets::ResiGeneratorConfig direction_cfg(const nets::ResiGeneratorConfig& tmpl, int in_px, int out_px) {
    auto cfg = tmpl;
    cfg.in_px = in_px;
    cfg.out_px = cfg.resizer == nets::Resizer::none ? in_px : out_px;
    return cfg;
}

torch::Tensor match_size(const torch::Tensor& x, const torch::Tensor& like) {
    if (x.size(2) == like.size(2) && x.size(3) == like.size(3)) return x;
    return nets::resize_image(x, static_cast<int>(like.size(2)), nets::Resizer::bilinear);
}

}  // namespace

StageATrainer::StageATrainer(StageAConfig cfg, const TileManifest& src, const TileManifest& tgt)
    : cfg_(std::move(cfg)),
      src_(src, Split::train),
      tgt_(tgt, Split::train),
      src_domain_(src.domain),
      tgt_domain_(tgt.domain),
      rng_(derive_seed(cfg_.seed, 0x5161)) {
    cfg_.validate();
    if (src_.size() == 0 || tgt_.size() == 0)
        throw ValidationError("both manifests need a nonempty train split");
    if (cfg_.enforce_scale_check && cfg_.gen.resizer != nets::Resizer::none) {
        auto report = datakit::check_scale_compat(src_domain_, tgt_domain_, cfg_.scale_rel_tol);
        if (!report.pass)
            throw ValidationError(
                "domain pair fails the scale-compatibility check: tile ratio " +
                std::to_string(report.h_ratio) + " vs resolution ratio " +
                std::to_string(report.r_ratio) + " (log error " + std::to_string(report.log_error) +
                " > tol " + std::to_string(cfg_.scale_rel_tol) + ")");
    }

    torch::manual_seed(derive_seed(cfg_.seed, 0x1417));
    g_s2t_ = nets::build_resi_generator(
        direction_cfg(cfg_.gen, src_domain_.tile_px, tgt_domain_.tile_px));
    g_t2s_ = nets::build_resi_generator(
        direction_cfg(cfg_.gen, tgt_domain_.tile_px, src_domain_.tile_px));
    d_s_ = nets::build_discriminator(src_domain_.channels, cfg_.disc_base_width);
    d_t_ = nets::build_discriminator(tgt_domain_.channels, cfg_.disc_base_width);

    std::vector<torch::Tensor> gen_params;
    for (auto& p : g_s2t_->parameters()) gen_params.push_back(p);
    for (auto& p : g_t2s_->parameters()) gen_params.push_back(p);
    opt_g_ = std::make_unique<torch::optim::Adam>(
        gen_params,
        torch::optim::AdamOptions(cfg_.lr_gen).betas({cfg_.adam_beta1, cfg_.adam_beta2}));

    std::vector<torch::Tensor> disc_params;
    for (auto& p : d_s_->parameters()) disc_params.push_back(p);
    for (auto& p : d_t_->parameters()) disc_params.push_back(p);
    opt_d_ = std::make_unique<torch::optim::RMSprop>(
        disc_params, torch::optim::RMSpropOptions(cfg_.lr_disc).alpha(cfg_.rmsprop_alpha));

    if (!cfg_.out_dir.empty()) log_ = losses::LossLog(cfg_.out_dir / "loss_log.tsv");
}

torch::Tensor StageATrainer::sample_source() {
    std::uniform_int_distribution<std::size_t> pick(0, src_.size() - 1);
    std::vector<std::size_t> idx(cfg_.batch_size);
    for (auto& i : idx) i = pick(rng_);
    return src_.image_batch(idx);
}

torch::Tensor StageATrainer::sample_target() {
    std::uniform_int_distribution<std::size_t> pick(0, tgt_.size() - 1);
    std::vector<std::size_t> idx(cfg_.batch_size);
    for (auto& i : idx) i = pick(rng_);
    return tgt_.image_batch(idx);
}

losses::LossBundle StageATrainer::critic_step(const torch::Tensor& x_s, const torch::Tensor& x_t) {
    nets::set_requires_grad(*g_s2t_, false);
    nets::set_requires_grad(*g_t2s_, false);
    auto fake_t = g_s2t_->forward(x_s).detach();
    auto fake_s = g_t2s_->forward(x_t).detach();
    nets::set_requires_grad(*g_s2t_, true);
    nets::set_requires_grad(*g_t2s_, true);
    if (cfg_.gen.k_mode == nets::KMode::fixed) {
        g_s2t_->k().set_requires_grad(false);
        g_t2s_->k().set_requires_grad(false);
    }

    auto adv_t = losses::adv_loss_wgan(d_t_->forward(x_t), d_t_->forward(fake_t));
    auto adv_s = losses::adv_loss_wgan(d_s_->forward(x_s), d_s_->forward(fake_s));
    auto gp_t = losses::gradient_penalty([this](const torch::Tensor& x) { return d_t_->forward(x); },
                                         x_t, match_size(fake_t, x_t), cfg_.weights.gp_weight);
    auto gp_s = losses::gradient_penalty([this](const torch::Tensor& x) { return d_s_->forward(x); },
                                         x_s, match_size(fake_s, x_s), cfg_.weights.gp_weight);
    // critics ascend the score gap: descend its negation plus the penalty
    auto total = -(adv_t + adv_s) + gp_t + gp_s;

    opt_d_->zero_grad();
    total.backward();
    opt_d_->step();
    ++critic_steps_;

    losses::LossBundle bundle;
    bundle.add("d_wgan_t", adv_t);
    bundle.add("d_wgan_s", adv_s);
    bundle.add("d_gp_t", gp_t);
    bundle.add("d_gp_s", gp_s);
    bundle.total = total;
    return bundle;
}

losses::LossBundle StageATrainer::generator_step(const torch::Tensor& x_s, const torch::Tensor& x_t) {
    nets::set_requires_grad(*d_s_, false);
    nets::set_requires_grad(*d_t_, false);

    auto fake_t = g_s2t_->forward(x_s);
    auto fake_s = g_t2s_->forward(x_t);
    auto cycled_s = g_t2s_->forward(fake_t);
    auto cycled_t = g_s2t_->forward(fake_s);

    auto adv_st = losses::wgan_generator_loss(d_t_->forward(fake_t));
    auto adv_ts = losses::wgan_generator_loss(d_s_->forward(fake_s));
    auto cyc = losses::cycle_loss(x_s, cycled_s, x_t, cycled_t);
    auto total = losses::stage_a_total(adv_st, adv_ts, cyc, cfg_.weights);

    opt_g_->zero_grad();
    total.backward();
    opt_g_->step();

    nets::set_requires_grad(*d_s_, true);
    nets::set_requires_grad(*d_t_, true);
    ++generator_steps_;

    losses::LossBundle bundle;
    bundle.add("g_adv_st", adv_st);
    bundle.add("g_adv_ts", adv_ts);
    bundle.add("g_cycle", cyc);
    bundle.total = total;
    return bundle;
}

void StageATrainer::abort_with_checkpoint(const std::string& why) {
    if (!cfg_.out_dir.empty()) {
        save(cfg_.out_dir / "abort.ckpt");
        log_.flush();
    }
    throw NumericError("stage-a training aborted: " + why);
}

void StageATrainer::run() {
    const fs::path latest = cfg_.out_dir / "latest.ckpt";
    if (!cfg_.out_dir.empty() && fs::exists(latest)) restore(ckpt::Archive::load(latest));
    if (cfg_.deterministic) torch::manual_seed(derive_seed(cfg_.seed, 0xD0 + epochs_done_));

    const int steps_per_epoch =
        static_cast<int>((src_.size() + cfg_.batch_size - 1) / cfg_.batch_size);
    std::vector<std::size_t> order(src_.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = epochs_done_; epoch < cfg_.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng_);
        double cycle_sum = 0.0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            for (int c = 0; c < cfg_.critic_iters; ++c) {
                auto bundle = critic_step(sample_source(), sample_target());
                if (!bundle.finite()) abort_with_checkpoint("non-finite critic loss");
                if (critic_steps_ % cfg_.log_every == 0) log_.append(critic_steps_, bundle);
            }
            std::vector<std::size_t> idx;
            for (int b = 0; b < cfg_.batch_size; ++b)
                idx.push_back(order[(step * cfg_.batch_size + b) % order.size()]);
            auto bundle = generator_step(src_.image_batch(idx), sample_target());
            if (!bundle.finite()) abort_with_checkpoint("non-finite generator loss");
            cycle_sum += bundle.terms[2].second.item<double>();
            if (generator_steps_ % cfg_.log_every == 0) log_.append(generator_steps_, bundle);
        }
        epoch_cycle_means_.push_back(cycle_sum / steps_per_epoch);
        epochs_done_ = epoch + 1;
        if (!cfg_.out_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epochs_done_);
            save(cfg_.out_dir / name);
            save(latest);
            log_.flush();
        }
    }
    log_.flush();
}

ckpt::Archive StageATrainer::archive() const {
    ckpt::Archive a;
    a.kind = "stage_a";
    a.meta["epochs_done"] = epochs_done_;
    a.meta["critic_steps"] = critic_steps_;
    a.meta["generator_steps"] = generator_steps_;
    a.meta["epoch_cycle_means"] = epoch_cycle_means_;
    a.meta["gen_s2t_config"] = nlohmann::json::parse(g_s2t_->config().to_json());
    a.meta["gen_t2s_config"] = nlohmann::json::parse(g_t2s_->config().to_json());
    a.meta["source_domain"] = nlohmann::json::parse(src_domain_.to_json());
    a.meta["target_domain"] = nlohmann::json::parse(tgt_domain_.to_json());
    a.put_module("gen_s2t", *g_s2t_);
    a.put_module("gen_t2s", *g_t2s_);
    a.put_module("disc_s", *d_s_);
    a.put_module("disc_t", *d_t_);
    a.put_optimizer("opt_g", *opt_g_);
    a.put_optimizer("opt_d", *opt_d_);
    return a;
}

void StageATrainer::restore(const ckpt::Archive& a) {
    if (a.kind != "stage_a") throw FormatError("expected a stage_a checkpoint, got " + a.kind);
    a.get_module("gen_s2t", *g_s2t_);
    a.get_module("gen_t2s", *g_t2s_);
    a.get_module("disc_s", *d_s_);
    a.get_module("disc_t", *d_t_);
    a.get_optimizer("opt_g", *opt_g_);
    a.get_optimizer("opt_d", *opt_d_);
    epochs_done_ = a.meta.at("epochs_done").get<int>();
    critic_steps_ = a.meta.at("critic_steps").get<std::int64_t>();
    generator_steps_ = a.meta.at("generator_steps").get<std::int64_t>();
    epoch_cycle_means_ = a.meta.at("epoch_cycle_means").get<std::vector<double>>();
}

void StageATrainer::save(const fs::path& path) const { archive().save(path); }

Direction direction_from_name(const std::string& s) {
    if (s == "s2t") return Direction::s2t;
    if (s == "t2s") return Direction::t2s;
    throw FormatError("unknown direction: " + s);
}

std::string direction_name(Direction d) { return d == Direction::s2t ? "s2t" : "t2s"; }

TileManifest translate_dataset(const ckpt::Archive& archive, const TileManifest& src,
                               Direction direction, const fs::path& out_dir) {
    if (archive.kind != "stage_a")
        throw FormatError("expected a stage_a checkpoint, got " + archive.kind);
    const std::string gkey = direction == Direction::s2t ? "gen_s2t" : "gen_t2s";
    auto gen_cfg = nets::ResiGeneratorConfig::from_json(archive.meta.at(gkey + "_config").dump());
    auto gen = nets::ResiGenerator(gen_cfg);
    archive.get_module(gkey, *gen);
    gen->eval();

    src.domain.validate();
    TileManifest out;
    out.domain = src.domain;
    out.domain.name = src.domain.name + "_translated";
    out.domain.tile_px = gen_cfg.out_px;
    out.domain.gsd_cm = src.domain.gsd_cm * src.domain.tile_px / gen_cfg.out_px;
    out.base_dir = out_dir;
    fs::create_directories(out_dir / "images");
    const bool labeled = !src.tiles.empty() && !src.tiles.front().label_path.empty();
    if (labeled) fs::create_directories(out_dir / "labels");

    torch::NoGradGuard ng;
    std::size_t index = 0;
    for (const auto& rec : src.tiles) {
        char name[32];
        std::snprintf(name, sizeof(name), "%05zu.png", index++);
        auto x = datakit::to_unit_range(datakit::load_png(src.resolve(rec.image_path)));
        if (x.size(1) != src.domain.tile_px || x.size(2) != src.domain.tile_px)
            throw ValidationError("tile size does not match the manifest domain: " + rec.image_path);
        auto y = gen->forward(x.unsqueeze(0)).squeeze(0);
        datakit::save_png(out_dir / "images" / name, datakit::from_unit_range(y));

        TileRecord trec = rec;
        trec.image_path = std::string("images/") + name;
        trec.label_path.clear();
        if (!rec.label_path.empty()) {
            auto color = datakit::load_png(src.resolve(rec.label_path));
            auto ids = datakit::encode_labels(color, src.domain.palette);
            auto resized = datakit::resize_labels_nearest(ids, gen_cfg.out_px);
            datakit::save_png(out_dir / "labels" / name,
                              datakit::decode_labels(resized, src.domain.palette));
            trec.label_path = std::string("labels/") + name;
        }
        out.tiles.push_back(std::move(trec));
    }
    datakit::save_manifest(out, out_dir / "manifest.jsonl");
    return out;
}

}  // namespace rdg::train_a
