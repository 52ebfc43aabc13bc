#include "rdg/train_b.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

namespace rdg::train_b {

using datakit::Split;
using datakit::TileManifest;

void StageBConfig::validate() const {
    weights.validate();
    if (lr <= 0) throw ValidationError("lr must be positive");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (epochs < 0) throw ValidationError("epochs must be non-negative");
    if (plateau_factor <= 0 || plateau_factor >= 1)
        throw ValidationError("plateau_factor must lie in (0,1)");
    if (plateau_patience < 1) throw ValidationError("plateau_patience must be >= 1");
    if (min_lr <= 0 || min_lr > lr) throw ValidationError("min_lr must lie in (0, lr]");
}

namespace {

void set_adam_lr(torch::optim::Adam& opt, double lr) {
    for (auto& group : opt.param_groups())
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

void accumulate_confusion(metrics::ConfusionMatrix& cm, const torch::Tensor& labels,
                          const torch::Tensor& preds) {
    auto l = labels.to(torch::kInt32).contiguous();
    auto p = preds.to(torch::kInt32).contiguous();
    cm.add(l.data_ptr<std::int32_t>(), p.data_ptr<std::int32_t>(),
           static_cast<std::size_t>(l.numel()));
}

}  // namespace

StageBTrainer::StageBTrainer(StageBConfig cfg, const TileManifest& translated,
                             const TileManifest& target, const TileManifest& val)
    : cfg_(std::move(cfg)),
      translated_(translated),
      target_(target, Split::train),
      val_(val, Split::val),
      rng_(derive_seed(cfg_.seed, 0x5B)) {
    cfg_.validate();
    num_classes_ = translated.domain.palette.num_classes();
    if (val.domain.palette.num_classes() != num_classes_)
        throw ValidationError("translated/val class counts differ");
    if (translated_.size() == 0) throw ValidationError("translated manifest is empty");
    if (!translated_.has_labels()) throw ValidationError("translated tiles need labels");
    if (val_.size() == 0) val_ = datakit::TileTensorSet(val);  // fall back to all splits
    if (val_.size() == 0 || !val_.has_labels())
        throw ValidationError("validation manifest needs labeled tiles");

    osa_enabled_ = cfg_.weights.lambda_adv_o > 0.0 && target_.size() > 0;
    if (cfg_.weights.lambda_adv_o > 0.0 && target_.size() == 0)
        std::cerr << "[stage_b] warning: no unlabeled target tiles; "
                     "output-space adaptation disabled, training supervised only\n";

    torch::manual_seed(derive_seed(cfg_.seed, 0xB17));
    seg_ = nets::build_segmenter(num_classes_, cfg_.encoder);
    d_out_ = nets::build_output_discriminator(num_classes_, cfg_.disc_base_width);
    opt_seg_ = std::make_unique<torch::optim::Adam>(
        seg_->parameters(),
        torch::optim::AdamOptions(cfg_.lr).betas({cfg_.adam_beta1, cfg_.adam_beta2}));
    opt_disc_ = std::make_unique<torch::optim::Adam>(
        d_out_->parameters(),
        torch::optim::AdamOptions(cfg_.lr).betas({cfg_.adam_beta1, cfg_.adam_beta2}));
    current_lr_ = cfg_.lr;
    if (!cfg_.out_dir.empty()) log_ = losses::LossLog(cfg_.out_dir / "loss_log.tsv");
}

losses::LossBundle StageBTrainer::disc_step(const torch::Tensor& x_translated,
                                            const torch::Tensor& x_target) {
    torch::Tensor p_tr, p_tg;
    {
        torch::NoGradGuard ng;
        p_tr = torch::softmax(seg_->forward(x_translated), 1);
        p_tg = torch::softmax(seg_->forward(x_target), 1);
    }
    auto d_tr = torch::sigmoid(d_out_->forward(p_tr));
    auto d_tg = torch::sigmoid(d_out_->forward(p_tg));
    auto loss = losses::osa_disc_loss(d_tr, d_tg);
    opt_disc_->zero_grad();
    loss.backward();
    opt_disc_->step();
    ++disc_steps_;

    losses::LossBundle bundle;
    bundle.add("d_out_bce", loss);
    bundle.total = loss;
    return bundle;
}

losses::LossBundle StageBTrainer::seg_step(const torch::Tensor& x_translated,
                                           const torch::Tensor& y_translated,
                                           const torch::Tensor& x_target) {
    auto seg = losses::seg_ce_loss(seg_->forward(x_translated), y_translated);
    torch::Tensor adv;
    if (osa_enabled_) {
        nets::set_requires_grad(*d_out_, false);
        auto p_tg = torch::softmax(seg_->forward(x_target), 1);
        adv = losses::seg_adv_loss(torch::sigmoid(d_out_->forward(p_tg)), cfg_.nonsaturating_adv);
        nets::set_requires_grad(*d_out_, true);
    } else {
        adv = torch::zeros({}, seg.options());
    }
    auto total = losses::stage_b_total(seg, adv, cfg_.weights);
    opt_seg_->zero_grad();
    total.backward();
    opt_seg_->step();
    ++seg_steps_;

    losses::LossBundle bundle;
    bundle.add("seg_ce", seg);
    bundle.add("seg_adv", adv);
    bundle.total = total;
    return bundle;
}

double StageBTrainer::evaluate_miou() {
    seg_->eval();
    torch::NoGradGuard ng;
    metrics::ConfusionMatrix cm(num_classes_);
    for (std::size_t i = 0; i < val_.size(); ++i) {
        auto logits = seg_->forward(val_.image(i).unsqueeze(0)).squeeze(0);
        accumulate_confusion(cm, val_.label(i), logits.argmax(0));
    }
    seg_->train();
    return metrics::make_report(cm, val_.domain().palette.class_names()).miou;
}

void StageBTrainer::observe_validation(double miou) {
    val_history_.push_back(miou);
    if (miou > best_miou_ + 1e-9) {
        best_miou_ = miou;
        stall_epochs_ = 0;
        best_archive_ = std::make_unique<ckpt::Archive>(archive());
    } else if (++stall_epochs_ >= cfg_.plateau_patience) {
        current_lr_ = std::max(current_lr_ * cfg_.plateau_factor, cfg_.min_lr);
        set_adam_lr(*opt_seg_, current_lr_);
        stall_epochs_ = 0;
    }
}

void StageBTrainer::abort_with_checkpoint(const std::string& why) {
    if (!cfg_.out_dir.empty()) {
        save(cfg_.out_dir / "abort.ckpt");
        log_.flush();
    }
    throw NumericError("stage-b training aborted: " + why);
}

void StageBTrainer::run() {
    const fs::path latest = cfg_.out_dir / "latest.ckpt";
    if (!cfg_.out_dir.empty() && fs::exists(latest)) restore(ckpt::Archive::load(latest));
    if (cfg_.deterministic) torch::manual_seed(derive_seed(cfg_.seed, 0xB0 + epochs_done_));

    const int steps_per_epoch =
        static_cast<int>((translated_.size() + cfg_.batch_size - 1) / cfg_.batch_size);
    std::vector<std::size_t> order(translated_.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = epochs_done_; epoch < cfg_.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng_);
        for (int step = 0; step < steps_per_epoch; ++step) {
            std::vector<std::size_t> idx;
            for (int b = 0; b < cfg_.batch_size; ++b)
                idx.push_back(order[(step * cfg_.batch_size + b) % order.size()]);
            auto x_tr = translated_.image_batch(idx);
            auto y_tr = translated_.label_batch(idx);

            torch::Tensor x_tg;
            if (osa_enabled_) {
                std::uniform_int_distribution<std::size_t> pick(0, target_.size() - 1);
                std::vector<std::size_t> tidx(idx.size());
                for (auto& i : tidx) i = pick(rng_);
                x_tg = target_.image_batch(tidx);
                auto dbundle = disc_step(x_tr, x_tg);
                if (!dbundle.finite()) abort_with_checkpoint("non-finite discriminator loss");
                if (disc_steps_ % cfg_.log_every == 0) log_.append(disc_steps_, dbundle);
            }
            auto sbundle = seg_step(x_tr, y_tr, x_tg);
            if (!sbundle.finite()) abort_with_checkpoint("non-finite segmentation loss");
            if (seg_steps_ % cfg_.log_every == 0) log_.append(seg_steps_, sbundle);
        }
        epochs_done_ = epoch + 1;
        const double miou = evaluate_miou();
        observe_validation(miou);
        log_.append(epochs_done_, "val_miou", miou);
        if (!cfg_.out_dir.empty()) {
            save(latest);
            if (best_archive_) best_archive_->save(cfg_.out_dir / "best.ckpt");
            log_.flush();
        }
    }
    if (!best_archive_) best_archive_ = std::make_unique<ckpt::Archive>(archive());
    if (!cfg_.out_dir.empty()) best_archive_->save(cfg_.out_dir / "best.ckpt");
    log_.flush();
}

ckpt::Archive StageBTrainer::archive() const {
    ckpt::Archive a;
    a.kind = "stage_b";
    a.meta["epochs_done"] = epochs_done_;
    a.meta["disc_steps"] = disc_steps_;
    a.meta["seg_steps"] = seg_steps_;
    a.meta["best_miou"] = best_miou_;
    a.meta["stall_epochs"] = stall_epochs_;
    a.meta["current_lr"] = current_lr_;
    a.meta["val_history"] = val_history_;
    a.meta["num_classes"] = num_classes_;
    a.meta["encoder"] = nets::encoder_scale_name(cfg_.encoder);
    a.meta["disc_base_width"] = cfg_.disc_base_width;
    a.put_module("segmenter", *seg_);
    a.put_module("d_out", *d_out_);
    a.put_optimizer("opt_seg", *opt_seg_);
    a.put_optimizer("opt_disc", *opt_disc_);
    return a;
}

void StageBTrainer::restore(const ckpt::Archive& a) {
    if (a.kind != "stage_b") throw FormatError("expected a stage_b checkpoint, got " + a.kind);
    if (a.meta.at("num_classes").get<int>() != num_classes_)
        throw ValidationError("checkpoint class count does not match the manifests");
    a.get_module("segmenter", *seg_);
    a.get_module("d_out", *d_out_);
    a.get_optimizer("opt_seg", *opt_seg_);
    a.get_optimizer("opt_disc", *opt_disc_);
    epochs_done_ = a.meta.at("epochs_done").get<int>();
    disc_steps_ = a.meta.at("disc_steps").get<std::int64_t>();
    seg_steps_ = a.meta.at("seg_steps").get<std::int64_t>();
    best_miou_ = a.meta.at("best_miou").get<double>();
    stall_epochs_ = a.meta.at("stall_epochs").get<int>();
    current_lr_ = a.meta.at("current_lr").get<double>();
    val_history_ = a.meta.at("val_history").get<std::vector<double>>();
    set_adam_lr(*opt_seg_, current_lr_);
}

void StageBTrainer::save(const fs::path& path) const { archive().save(path); }

const ckpt::Archive& StageBTrainer::best_archive() const {
    if (!best_archive_) throw ValidationError("no best checkpoint recorded yet");
    return *best_archive_;
}

namespace {

nets::Segmenter segmenter_from_archive(const ckpt::Archive& a) {
    if (a.kind != "stage_b") throw FormatError("expected a stage_b checkpoint, got " + a.kind);
    auto seg = nets::build_segmenter(a.meta.at("num_classes").get<int>(),
                                     nets::encoder_scale_from_name(a.meta.at("encoder").get<std::string>()));
    a.get_module("segmenter", *seg);
    seg->eval();
    return seg;
}

}  // namespace

std::vector<torch::Tensor> predict(const ckpt::Archive& archive, const TileManifest& tiles) {
    auto seg = segmenter_from_archive(archive);
    const int classes = archive.meta.at("num_classes").get<int>();
    if (tiles.domain.palette.num_classes() != classes)
        throw ValidationError("manifest class count does not match the checkpoint");
    torch::NoGradGuard ng;
    datakit::TileTensorSet set(tiles);
    std::vector<torch::Tensor> out;
    out.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        auto logits = seg->forward(set.image(i).unsqueeze(0)).squeeze(0);
        out.push_back(logits.argmax(0).to(torch::kInt32));
    }
    return out;
}

std::vector<fs::path> export_predictions(const ckpt::Archive& archive, const TileManifest& tiles,
                                         const fs::path& out_dir) {
    auto maps = predict(archive, tiles);
    fs::create_directories(out_dir);
    tiles.domain.palette.save(out_dir / "palette.txt");
    std::vector<fs::path> paths;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "pred_%05zu.png", i);
        datakit::save_png(out_dir / name, maps[i].to(torch::kUInt8));
        paths.push_back(out_dir / name);
    }
    return paths;
}

metrics::MetricsReport evaluate(const ckpt::Archive& archive, const TileManifest& tiles,
                                bool strict_absent) {
    auto seg = segmenter_from_archive(archive);
    torch::NoGradGuard ng;
    datakit::TileTensorSet set(tiles);
    if (!set.has_labels()) throw ValidationError("evaluation needs labeled tiles");
    metrics::ConfusionMatrix cm(tiles.domain.palette.num_classes());
    for (std::size_t i = 0; i < set.size(); ++i) {
        auto logits = seg->forward(set.image(i).unsqueeze(0)).squeeze(0);
        accumulate_confusion(cm, set.label(i), logits.argmax(0));
    }
    return metrics::make_report(cm, tiles.domain.palette.class_names(), strict_absent);
}

}  // namespace rdg::train_b
