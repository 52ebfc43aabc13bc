#include "rdg/nets.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

namespace rdg::nets {

namespace F = torch::nn::functional;

// ---------------------------------------------------------------- enum names

std::string backbone_name(Backbone b) {
    switch (b) {
        case Backbone::unet: return "unet";
        case Backbone::linknet: return "linknet";
        case Backbone::resnet: return "resnet";
    }
    throw ValidationError("bad backbone");
}

Backbone backbone_from_name(const std::string& s) {
    if (s == "unet") return Backbone::unet;
    if (s == "linknet") return Backbone::linknet;
    if (s == "resnet") return Backbone::resnet;
    throw FormatError("unknown backbone: " + s);
}

std::string k_mode_name(KMode m) { return m == KMode::fixed ? "fixed" : "learnable"; }

KMode k_mode_from_name(const std::string& s) {
    if (s == "fixed") return KMode::fixed;
    if (s == "learnable") return KMode::learnable;
    throw FormatError("unknown k_mode: " + s);
}

std::string resizer_name(Resizer r) {
    switch (r) {
        case Resizer::bilinear: return "bilinear";
        case Resizer::nearest: return "nearest";
        case Resizer::learned_stub: return "learned_stub";
        case Resizer::none: return "none";
    }
    throw ValidationError("bad resizer");
}

Resizer resizer_from_name(const std::string& s) {
    if (s == "bilinear") return Resizer::bilinear;
    if (s == "nearest") return Resizer::nearest;
    if (s == "learned_stub") return Resizer::learned_stub;
    if (s == "none") return Resizer::none;
    throw FormatError("unknown resizer: " + s);
}

std::string encoder_scale_name(EncoderScale s) { return s == EncoderScale::paper ? "paper" : "tiny"; }

EncoderScale encoder_scale_from_name(const std::string& s) {
    if (s == "paper") return EncoderScale::paper;
    if (s == "tiny") return EncoderScale::tiny;
    throw FormatError("unknown encoder scale: " + s);
}

// ---------------------------------------------------------------- resizers

namespace {

torch::Tensor interpolate_square(const torch::Tensor& x, int out_px, bool bilinear) {
    auto opts = F::InterpolateFuncOptions().size(std::vector<std::int64_t>{out_px, out_px});
    if (bilinear)
        opts = opts.mode(torch::kBilinear).align_corners(false);
    else
        opts = opts.mode(torch::kNearest);
    return F::interpolate(x, opts);
}

// Bilinear resize followed by a residual conv refinement. Zero-initialized so
// an untrained stub reduces to plain bilinear resampling.
struct LearnedResizerImpl : torch::nn::Module {
    LearnedResizerImpl(int out_px, int channels) : out_px_(out_px) {
        c1_ = register_module("c1", torch::nn::Conv2d(
                                        torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
        c2_ = register_module("c2", torch::nn::Conv2d(
                                        torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
        torch::NoGradGuard ng;
        c1_->weight.zero_();
        c1_->bias.zero_();
        c2_->weight.zero_();
        c2_->bias.zero_();
    }

    torch::Tensor forward(const torch::Tensor& x) {
        auto base = interpolate_square(x, out_px_, true);
        return base + c2_(torch::relu(c1_(base)));
    }

    int out_px_;
    torch::nn::Conv2d c1_{nullptr}, c2_{nullptr};
};
TORCH_MODULE(LearnedResizer);

}  // namespace

torch::Tensor resize_image(const torch::Tensor& x, int out_px, Resizer method) {
    if (out_px <= 0) throw ValidationError("out_px must be positive");
    const bool batched = x.dim() == 4;
    if (!batched && x.dim() != 3) throw ValidationError("expected [C,H,W] or [B,C,H,W]");
    auto xb = batched ? x : x.unsqueeze(0);
    if (xb.size(2) != xb.size(3)) throw ValidationError("resize_image expects square input");
    torch::Tensor out;
    switch (method) {
        case Resizer::bilinear: out = interpolate_square(xb, out_px, true); break;
        case Resizer::nearest: out = interpolate_square(xb, out_px, false); break;
        case Resizer::learned_stub: {
            LearnedResizer stub(out_px, static_cast<int>(xb.size(1)));
            out = stub->forward(xb);
            break;
        }
        case Resizer::none:
            throw ValidationError("resize_image called with method=none");
    }
    return batched ? out : out.squeeze(0);
}

// ---------------------------------------------------------------- backbones

namespace {

int trailing_pow2(int n) {
    int d = 0;
    while (n % 2 == 0 && n > 1) {
        n /= 2;
        ++d;
    }
    return d;
}

// Encoder-decoder with stride-2 sampling; skips are concatenated (unet) or
// added (linknet).
struct SkipEncoderDecoderImpl : torch::nn::Module {
    SkipEncoderDecoderImpl(int in_channels, int out_channels, int depth, int base, bool concat)
        : depth_(depth), concat_(concat) {
        const int cap = base * 8;
        std::vector<int> ch(depth);
        for (int i = 0; i < depth; ++i) ch[i] = std::min(base << i, cap);

        for (int i = 0; i < depth; ++i) {
            torch::nn::Sequential block;
            block->push_back(torch::nn::Conv2d(
                torch::nn::Conv2dOptions(i == 0 ? in_channels : ch[i - 1], ch[i], 4)
                    .stride(2)
                    .padding(1)));
            // no norm on the outermost layer nor on the (possibly 1x1) bottleneck
            if (i > 0 && i < depth - 1)
                block->push_back(torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(ch[i]).affine(true)));
            block->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
            downs_->push_back(block);
        }

        for (int t = 0; t < depth; ++t) {
            const int level = depth - 1 - t;               // feature level consumed
            const bool final_block = level == 0;
            const int skip_factor = (t > 0 && concat_) ? 2 : 1;
            const int in_ch = ch[level] * (t == 0 ? 1 : skip_factor);
            const int out_ch = final_block ? out_channels : ch[level - 1];
            torch::nn::Sequential block;
            block->push_back(torch::nn::ConvTranspose2d(
                torch::nn::ConvTranspose2dOptions(in_ch, out_ch, 4).stride(2).padding(1)));
            if (!final_block) {
                block->push_back(torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out_ch).affine(true)));
                block->push_back(torch::nn::ReLU());
                if (out_ch > base * 4) block->push_back(torch::nn::Dropout(0.5));
            }
            ups_->push_back(block);
        }
        register_module("downs", downs_);
        register_module("ups", ups_);
    }

    torch::Tensor forward(const torch::Tensor& x) {
        std::vector<torch::Tensor> feats;
        feats.reserve(depth_);
        torch::Tensor h = x;
        for (const auto& block : *downs_) {
            h = block->as<torch::nn::Sequential>()->forward(h);
            feats.push_back(h);
        }
        torch::Tensor d = ups_[0]->as<torch::nn::Sequential>()->forward(feats[depth_ - 1]);
        for (int t = 1; t < depth_; ++t) {
            const int level = depth_ - 1 - t;
            auto merged = concat_ ? torch::cat({d, feats[level]}, 1) : d + feats[level];
            d = ups_[t]->as<torch::nn::Sequential>()->forward(merged);
        }
        return d;
    }

    int depth_;
    bool concat_;
    torch::nn::ModuleList downs_, ups_;
};
TORCH_MODULE(SkipEncoderDecoder);

struct ResnetBlockImpl : torch::nn::Module {
    explicit ResnetBlockImpl(int ch) {
        body_ = register_module(
            "body",
            torch::nn::Sequential(
                torch::nn::ReflectionPad2d(1),
                torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, ch, 3)),
                torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(ch).affine(true)),
                torch::nn::ReLU(),
                torch::nn::ReflectionPad2d(1),
                torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, ch, 3)),
                torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(ch).affine(true))));
    }

    torch::Tensor forward(const torch::Tensor& x) { return x + body_->forward(x); }

    torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResnetBlock);

// Johnson-style transformer: two stride-2 stages, residual blocks, two
// upsampling stages. Same-size in/out.
struct ResnetTranslatorImpl : torch::nn::Module {
    ResnetTranslatorImpl(int in_channels, int out_channels, int base, int n_blocks = 6) {
        auto in_norm = [](int ch) {
            return torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(ch).affine(true));
        };
        net_->push_back(torch::nn::ReflectionPad2d(3));
        net_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, base, 7)));
        net_->push_back(in_norm(base));
        net_->push_back(torch::nn::ReLU());
        net_->push_back(torch::nn::Conv2d(
            torch::nn::Conv2dOptions(base, base * 2, 3).stride(2).padding(1)));
        net_->push_back(in_norm(base * 2));
        net_->push_back(torch::nn::ReLU());
        net_->push_back(torch::nn::Conv2d(
            torch::nn::Conv2dOptions(base * 2, base * 4, 3).stride(2).padding(1)));
        net_->push_back(in_norm(base * 4));
        net_->push_back(torch::nn::ReLU());
        for (int i = 0; i < n_blocks; ++i) net_->push_back(ResnetBlock(base * 4));
        net_->push_back(torch::nn::ConvTranspose2d(
            torch::nn::ConvTranspose2dOptions(base * 4, base * 2, 3).stride(2).padding(1).output_padding(1)));
        net_->push_back(in_norm(base * 2));
        net_->push_back(torch::nn::ReLU());
        net_->push_back(torch::nn::ConvTranspose2d(
            torch::nn::ConvTranspose2dOptions(base * 2, base, 3).stride(2).padding(1).output_padding(1)));
        net_->push_back(in_norm(base));
        net_->push_back(torch::nn::ReLU());
        net_->push_back(torch::nn::ReflectionPad2d(3));
        net_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(base, out_channels, 7)));
        register_module("net", net_);
    }

    torch::Tensor forward(const torch::Tensor& x) { return net_->forward(x); }

    torch::nn::Sequential net_;
};
TORCH_MODULE(ResnetTranslator);

}  // namespace

// ---------------------------------------------------------------- generator

int ResiGeneratorConfig::resolved_depth() const {
    if (depth > 0) return depth;
    return std::min(7, trailing_pow2(in_px));
}

void ResiGeneratorConfig::validate() const {
    if (!std::isfinite(k_init)) throw ValidationError("k_init must be finite");
    if (in_px <= 0 || out_px <= 0) throw ValidationError("in_px/out_px must be positive");
    if (channels <= 0) throw ValidationError("channels must be positive");
    if (base_width <= 0) throw ValidationError("base_width must be positive");
    if (backbone == Backbone::resnet) {
        if (in_px % 4 != 0) throw ValidationError("resnet backbone needs in_px divisible by 4");
        return;
    }
    const int d = resolved_depth();
    if (d < 1) throw ValidationError("in_px leaves no room for a stride-2 encoder");
    if (in_px % (1 << d) != 0)
        throw ValidationError("in_px " + std::to_string(in_px) + " not divisible by 2^" +
                              std::to_string(d));
}

std::string ResiGeneratorConfig::to_json() const {
    nlohmann::json j{{"backbone", backbone_name(backbone)},
                     {"k_mode", k_mode_name(k_mode)},
                     {"k_init", k_init},
                     {"resizer", resizer_name(resizer)},
                     {"in_px", in_px},
                     {"out_px", out_px},
                     {"channels", channels},
                     {"depth", depth},
                     {"base_width", base_width}};
    return j.dump();
}

ResiGeneratorConfig ResiGeneratorConfig::from_json(const std::string& text) {
    try {
        auto j = nlohmann::json::parse(text);
        ResiGeneratorConfig cfg;
        cfg.backbone = backbone_from_name(j.at("backbone").get<std::string>());
        cfg.k_mode = k_mode_from_name(j.at("k_mode").get<std::string>());
        cfg.k_init = j.at("k_init").get<double>();
        cfg.resizer = resizer_from_name(j.at("resizer").get<std::string>());
        cfg.in_px = j.at("in_px").get<int>();
        cfg.out_px = j.at("out_px").get<int>();
        cfg.channels = j.at("channels").get<int>();
        cfg.depth = j.at("depth").get<int>();
        cfg.base_width = j.at("base_width").get<int>();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad generator config json: ") + e.what());
    }
}

ResiGeneratorImpl::ResiGeneratorImpl(ResiGeneratorConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    switch (cfg_.backbone) {
        case Backbone::unet:
            backbone_ = torch::nn::AnyModule(SkipEncoderDecoder(
                cfg_.channels, cfg_.channels, cfg_.resolved_depth(), cfg_.base_width, true));
            break;
        case Backbone::linknet:
            backbone_ = torch::nn::AnyModule(SkipEncoderDecoder(
                cfg_.channels, cfg_.channels, cfg_.resolved_depth(), cfg_.base_width, false));
            break;
        case Backbone::resnet:
            backbone_ = torch::nn::AnyModule(
                ResnetTranslator(cfg_.channels, cfg_.channels, cfg_.base_width));
            break;
    }
    register_module("backbone", backbone_.ptr());
    if (cfg_.resizer == Resizer::learned_stub) {
        learned_resizer_ = torch::nn::AnyModule(LearnedResizer(cfg_.out_px, cfg_.channels));
        register_module("resizer", learned_resizer_.ptr());
    }
    k_ = register_parameter("k", torch::full({}, cfg_.k_init, torch::kFloat32),
                            /*requires_grad=*/cfg_.k_mode == KMode::learnable);
}

torch::Tensor ResiGeneratorImpl::residual(const torch::Tensor& x) {
    const bool batched = x.dim() == 4;
    if (!batched && x.dim() != 3) throw ValidationError("expected [C,H,W] or [B,C,H,W]");
    auto xb = batched ? x : x.unsqueeze(0);
    if (xb.size(1) != cfg_.channels)
        throw ValidationError("channel mismatch: expected " + std::to_string(cfg_.channels));
    if (xb.size(2) != xb.size(3)) throw ValidationError("expected a square input");
    if (cfg_.resizer != Resizer::none && xb.size(2) != cfg_.in_px)
        throw ValidationError("input size " + std::to_string(xb.size(2)) + " != configured in_px " +
                              std::to_string(cfg_.in_px));
    if (cfg_.backbone != Backbone::resnet && xb.size(2) % (1 << cfg_.resolved_depth()) != 0)
        throw ValidationError("input size not divisible by the encoder stride product");
    auto r = backbone_.forward(xb);
    return batched ? r : r.squeeze(0);
}

torch::Tensor ResiGeneratorImpl::forward(const torch::Tensor& x) {
    const bool batched = x.dim() == 4;
    auto xb = batched ? x : x.unsqueeze(0);
    auto summed = residual(xb) + k_ * xb;
    torch::Tensor out;
    switch (cfg_.resizer) {
        case Resizer::none: out = summed; break;
        case Resizer::bilinear: out = interpolate_square(summed, cfg_.out_px, true); break;
        case Resizer::nearest: out = interpolate_square(summed, cfg_.out_px, false); break;
        case Resizer::learned_stub: out = learned_resizer_.forward(summed); break;
    }
    return batched ? out : out.squeeze(0);
}

ResiGenerator build_resi_generator(const ResiGeneratorConfig& cfg) {
    ResiGenerator g(cfg);
    init_gan_weights(*g);
    // the resizer stub starts out as plain bilinear resampling
    torch::NoGradGuard ng;
    for (auto& item : g->named_parameters())
        if (item.key().rfind("resizer.", 0) == 0) item.value().zero_();
    return g;
}

// ---------------------------------------------------------------- critics

DiscriminatorImpl::DiscriminatorImpl(int in_channels, int base_width) {
    const int w = base_width;
    auto lrelu = [] { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)); };
    auto bn = [](int ch) { return torch::nn::BatchNorm2d(ch); };
    stack_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, w, 4).stride(2).padding(1)));
    stack_->push_back(bn(w));
    stack_->push_back(lrelu());
    stack_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(w, w * 2, 4).stride(2).padding(1)));
    stack_->push_back(bn(w * 2));
    stack_->push_back(lrelu());
    stack_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(w * 2, w * 4, 4).stride(2).padding(1)));
    stack_->push_back(bn(w * 4));
    stack_->push_back(lrelu());
    stack_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(w * 4, w * 8, 4).stride(2).padding(1)));
    stack_->push_back(bn(w * 8));
    stack_->push_back(lrelu());
    stack_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(w * 8, w * 8, 4).stride(1).padding(1)));
    stack_->push_back(bn(w * 8));
    stack_->push_back(lrelu());
    // unbounded score map: no norm, no activation
    stack_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(w * 8, 1, 4).stride(1).padding(1)));
    register_module("stack", stack_);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
    auto xb = x.dim() == 3 ? x.unsqueeze(0) : x;
    return stack_->forward(xb);
}

Discriminator build_discriminator(int in_channels, int base_width) {
    Discriminator d(in_channels, base_width);
    init_gan_weights(*d);
    return d;
}

OutputSpaceDiscriminatorImpl::OutputSpaceDiscriminatorImpl(int num_classes, int base_width) {
    const int w = base_width;
    auto lrelu = [] { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)); };
    stack_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(num_classes, w, 4).stride(2).padding(1)));
    stack_->push_back(lrelu());
    stack_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(w, w * 2, 4).stride(2).padding(1)));
    stack_->push_back(lrelu());
    stack_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(w * 2, w * 4, 4).stride(2).padding(1)));
    stack_->push_back(lrelu());
    stack_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(w * 4, w * 8, 4).stride(2).padding(1)));
    stack_->push_back(lrelu());
    stack_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(w * 8, 1, 4).stride(2).padding(1)));
    register_module("stack", stack_);
}

torch::Tensor OutputSpaceDiscriminatorImpl::forward(const torch::Tensor& probs) {
    auto xb = probs.dim() == 3 ? probs.unsqueeze(0) : probs;
    auto score = stack_->forward(xb);
    auto opts = F::InterpolateFuncOptions()
                    .size(std::vector<std::int64_t>{xb.size(2), xb.size(3)})
                    .mode(torch::kBilinear)
                    .align_corners(false);
    auto out = F::interpolate(score, opts);
    return probs.dim() == 3 ? out.squeeze(0) : out;
}

OutputSpaceDiscriminator build_output_discriminator(int num_classes, int base_width) {
    OutputSpaceDiscriminator d(num_classes, base_width);
    init_gan_weights(*d);
    return d;
}

// ---------------------------------------------------------------- segmenter

namespace {

struct BasicBlockImpl : torch::nn::Module {
    BasicBlockImpl(int in_ch, int out_ch, int stride, int dilation) {
        conv1_ = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3)
                                                                .stride(stride)
                                                                .padding(dilation)
                                                                .dilation(dilation)
                                                                .bias(false)));
        bn1_ = register_module("bn1", torch::nn::BatchNorm2d(out_ch));
        conv2_ = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out_ch, out_ch, 3)
                                                                .padding(dilation)
                                                                .dilation(dilation)
                                                                .bias(false)));
        bn2_ = register_module("bn2", torch::nn::BatchNorm2d(out_ch));
        if (stride != 1 || in_ch != out_ch) {
            shortcut_ = register_module(
                "shortcut",
                torch::nn::Sequential(
                    torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 1).stride(stride).bias(false)),
                    torch::nn::BatchNorm2d(out_ch)));
        }
    }

    torch::Tensor forward(const torch::Tensor& x) {
        auto h = torch::relu(bn1_(conv1_(x)));
        h = bn2_(conv2_(h));
        auto skip = shortcut_ ? shortcut_->forward(x) : x;
        return torch::relu(h + skip);
    }

    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
    torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
    torch::nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(BasicBlock);

torch::nn::Sequential make_stage(int in_ch, int out_ch, int blocks, int stride, int dilation) {
    torch::nn::Sequential stage;
    stage->push_back(BasicBlock(in_ch, out_ch, stride, dilation));
    for (int i = 1; i < blocks; ++i) stage->push_back(BasicBlock(out_ch, out_ch, 1, dilation));
    return stage;
}

torch::nn::Sequential conv_bn_relu(int in_ch, int out_ch, int kernel, int dilation) {
    const int pad = dilation * (kernel - 1) / 2;
    return torch::nn::Sequential(
        torch::nn::Conv2d(
            torch::nn::Conv2dOptions(in_ch, out_ch, kernel).padding(pad).dilation(dilation).bias(false)),
        torch::nn::BatchNorm2d(out_ch), torch::nn::ReLU());
}

}  // namespace

SegmenterImpl::SegmenterImpl(int num_classes, EncoderScale scale)
    : num_classes_(num_classes), scale_(scale) {
    if (num_classes < 2) throw ValidationError("segmenter needs at least 2 classes");
    const bool paper = scale == EncoderScale::paper;
    const int w = paper ? 64 : 16;
    const int blocks1 = paper ? 3 : 1, blocks2 = paper ? 4 : 1, blocks3 = paper ? 6 : 1,
              blocks4 = paper ? 3 : 1;
    const int aspp = paper ? 256 : 32;

    stem_ = torch::nn::Sequential(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(3, w, 7).stride(2).padding(3).bias(false)),
        torch::nn::BatchNorm2d(w), torch::nn::ReLU(),
        torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(3).stride(2).padding(1)));
    layer1_ = make_stage(w, w, blocks1, 1, 1);
    layer2_ = make_stage(w, w * 2, blocks2, 2, 1);
    // keep output stride 8 with dilated later stages
    layer3_ = make_stage(w * 2, w * 4, blocks3, 1, 2);
    layer4_ = make_stage(w * 4, w * 8, blocks4, 1, 4);

    for (int dilation : {1, 6, 12, 18}) {
        aspp_branches_->push_back(conv_bn_relu(w * 8, aspp, dilation == 1 ? 1 : 3, dilation));
    }
    aspp_pool_ = torch::nn::Sequential(
        torch::nn::AdaptiveAvgPool2d(torch::nn::AdaptiveAvgPool2dOptions(1)),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(w * 8, aspp, 1)), torch::nn::ReLU());
    project_ = conv_bn_relu(aspp * 5, aspp, 1, 1);
    head_ = torch::nn::Sequential(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(aspp, aspp, 3).padding(1).bias(false)),
        torch::nn::BatchNorm2d(aspp), torch::nn::ReLU(),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(aspp, num_classes, 1)));

    register_module("stem", stem_);
    register_module("layer1", layer1_);
    register_module("layer2", layer2_);
    register_module("layer3", layer3_);
    register_module("layer4", layer4_);
    register_module("aspp_branches", aspp_branches_);
    register_module("aspp_pool", aspp_pool_);
    register_module("project", project_);
    register_module("head", head_);
}

torch::Tensor SegmenterImpl::forward(const torch::Tensor& x) {
    const bool batched = x.dim() == 4;
    auto xb = batched ? x : x.unsqueeze(0);
    if (xb.size(1) != 3) throw ValidationError("segmenter expects 3-channel input");
    auto h = stem_->forward(xb);
    h = layer1_->forward(h);
    h = layer2_->forward(h);
    h = layer3_->forward(h);
    h = layer4_->forward(h);

    std::vector<torch::Tensor> feats;
    for (const auto& branch : *aspp_branches_)
        feats.push_back(branch->as<torch::nn::Sequential>()->forward(h));
    auto pooled = aspp_pool_->forward(h);
    auto pool_opts = F::InterpolateFuncOptions()
                         .size(std::vector<std::int64_t>{h.size(2), h.size(3)})
                         .mode(torch::kBilinear)
                         .align_corners(false);
    feats.push_back(F::interpolate(pooled, pool_opts));

    auto merged = project_->forward(torch::cat(feats, 1));
    auto logits = head_->forward(merged);
    auto out_opts = F::InterpolateFuncOptions()
                        .size(std::vector<std::int64_t>{xb.size(2), xb.size(3)})
                        .mode(torch::kBilinear)
                        .align_corners(false);
    auto out = F::interpolate(logits, out_opts);
    return batched ? out : out.squeeze(0);
}

Segmenter build_segmenter(int num_classes, EncoderScale scale) {
    return Segmenter(num_classes, scale);
}

// ---------------------------------------------------------------- utilities

void init_gan_weights(torch::nn::Module& m) {
    torch::NoGradGuard ng;
    for (const auto& mod : m.modules(/*include_self=*/false)) {
        if (auto* conv = mod->as<torch::nn::Conv2d>()) {
            conv->weight.normal_(0.0, 0.02);
            if (conv->bias.defined()) conv->bias.zero_();
        } else if (auto* convt = mod->as<torch::nn::ConvTranspose2d>()) {
            convt->weight.normal_(0.0, 0.02);
            if (convt->bias.defined()) convt->bias.zero_();
        } else if (auto* bn = mod->as<torch::nn::BatchNorm2d>()) {
            if (bn->weight.defined()) bn->weight.normal_(1.0, 0.02);
            if (bn->bias.defined()) bn->bias.zero_();
        } else if (auto* in = mod->as<torch::nn::InstanceNorm2d>()) {
            if (in->weight.defined()) in->weight.normal_(1.0, 0.02);
            if (in->bias.defined()) in->bias.zero_();
        }
    }
}

std::uint64_t parameter_hash(const torch::nn::Module& m) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& item : m.named_parameters(/*recurse=*/true)) {
        mix(item.key().data(), item.key().size());
        auto t = item.value().detach().contiguous().cpu();
        mix(t.data_ptr(), t.numel() * t.element_size());
    }
    return h;
}

void set_requires_grad(torch::nn::Module& m, bool value) {
    for (auto& p : m.parameters()) p.set_requires_grad(value);
}

}  // namespace rdg::nets
