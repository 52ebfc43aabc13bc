#include <torch/torch.h>

#include "rdg/nets.hpp"

#include "rdg_doctest.hpp"

using namespace rdg;
using namespace rdg::nets;

namespace {

ResiGeneratorConfig small_cfg(int in_px, int out_px, Backbone bb = Backbone::unet) {
    ResiGeneratorConfig cfg;
    cfg.backbone = bb;
    cfg.in_px = in_px;
    cfg.out_px = out_px;
    cfg.base_width = 8;
    return cfg;
}

void zero_backbone(ResiGenerator& g) {
    torch::NoGradGuard ng;
    for (auto& item : g->named_parameters())
        if (item.key().rfind("backbone.", 0) == 0) item.value().zero_();
}

}  // namespace

TEST_CASE("generator forward maps in_px to out_px for every backbone") {
    torch::manual_seed(7);
    for (auto bb : {Backbone::unet, Backbone::linknet, Backbone::resnet}) {
        auto g = build_resi_generator(small_cfg(64, 32, bb));
        auto y = g->forward(torch::rand({2, 3, 64, 64}));
        CHECK(y.sizes() == torch::IntArrayRef({2, 3, 32, 32}));
        CHECK(torch::isfinite(y).all().item<bool>());
    }
}

TEST_CASE("generator upsampling direction works") {
    torch::manual_seed(7);
    auto g = build_resi_generator(small_cfg(32, 64));
    auto y = g->forward(torch::rand({1, 3, 32, 32}));
    CHECK(y.sizes() == torch::IntArrayRef({1, 3, 64, 64}));
}

TEST_CASE("symmetric construction gives equal parameter counts") {
    auto count = [](ResiGenerator& g) {
        std::int64_t n = 0;
        for (auto& p : g->parameters()) n += p.numel();
        return n;
    };
    auto a = build_resi_generator(small_cfg(64, 32));
    auto b = build_resi_generator(small_cfg(64, 32));
    CHECK(count(a) == count(b));
}

TEST_CASE("residual identity: zero backbone and k=1 reduces to resize") {
    auto cfg = small_cfg(32, 16);
    auto g = build_resi_generator(cfg);
    zero_backbone(g);
    g->eval();
    torch::NoGradGuard ng;
    auto x = torch::rand({1, 3, 32, 32});
    auto y = g->forward(x);
    auto want = resize_image(x, 16, Resizer::bilinear);
    CHECK((y - want).abs().max().item<double>() < 1e-6);
}

TEST_CASE("k=0 drops the input path; k=2 doubles it") {
    auto cfg = small_cfg(32, 16);
    cfg.k_init = 0.0;
    auto g0 = build_resi_generator(cfg);
    zero_backbone(g0);
    g0->eval();
    torch::NoGradGuard ng;
    auto x = torch::rand({1, 3, 32, 32});
    CHECK(g0->forward(x).abs().max().item<double>() < 1e-6);

    cfg.k_init = 2.0;
    auto g2 = build_resi_generator(cfg);
    zero_backbone(g2);
    g2->eval();
    auto want = 2.0 * resize_image(x, 16, Resizer::bilinear);
    CHECK((g2->forward(x) - want).abs().max().item<double>() < 1e-6);
}

TEST_CASE("resizer none keeps the input size") {
    auto cfg = small_cfg(32, 16);
    cfg.resizer = Resizer::none;
    auto g = build_resi_generator(cfg);
    auto y = g->forward(torch::rand({1, 3, 32, 32}));
    CHECK(y.sizes() == torch::IntArrayRef({1, 3, 32, 32}));
}

TEST_CASE("learned stub resizer starts as bilinear and is trainable") {
    auto cfg = small_cfg(32, 16);
    cfg.resizer = Resizer::learned_stub;
    auto g = build_resi_generator(cfg);
    zero_backbone(g);
    g->eval();
    auto x = torch::rand({1, 3, 32, 32});
    torch::Tensor y;
    {
        torch::NoGradGuard ng;
        y = g->forward(x);
    }
    auto want = resize_image(x, 16, Resizer::bilinear);
    CHECK((y - want).abs().max().item<double>() < 1e-6);
    bool has_resizer_params = false;
    for (auto& item : g->named_parameters())
        if (item.key().rfind("resizer.", 0) == 0 && item.value().requires_grad())
            has_resizer_params = true;
    CHECK(has_resizer_params);
}

TEST_CASE("depth resolution and divisibility errors") {
    auto cfg = small_cfg(96, 48);  // 96 = 2^5 * 3 -> depth 5
    CHECK(cfg.resolved_depth() == 5);
    CHECK_NOTHROW(build_resi_generator(cfg));
    cfg.depth = 6;
    CHECK_THROWS_AS(build_resi_generator(cfg), ValidationError);
    auto big = small_cfg(896, 512);
    CHECK(big.resolved_depth() == 7);
}

TEST_CASE("k trainability follows k_mode") {
    auto fixed = build_resi_generator(small_cfg(32, 16));
    CHECK_FALSE(fixed->k().requires_grad());
    auto cfg = small_cfg(32, 16);
    cfg.k_mode = KMode::learnable;
    auto learn = build_resi_generator(cfg);
    CHECK(learn->k().requires_grad());

    // k receives gradient through the forward mapping
    auto x = torch::rand({1, 3, 32, 32});
    auto loss = learn->forward(x).square().mean();
    loss.backward();
    CHECK(learn->k().grad().defined());
    CHECK(learn->k().grad().abs().item<double>() > 0.0);
}

TEST_CASE("fixed k is unchanged by an optimizer step") {
    auto g = build_resi_generator(small_cfg(32, 16));
    const double before = g->k_value();
    torch::optim::Adam opt(g->parameters(), torch::optim::AdamOptions(1e-2));
    auto loss = g->forward(torch::rand({1, 3, 32, 32})).square().mean();
    opt.zero_grad();
    loss.backward();
    opt.step();
    CHECK(g->k_value() == before);
}

TEST_CASE("resize_image bilinear is exact on constants and linear") {
    auto c = torch::full({1, 3, 8, 8}, 0.7);
    auto r = resize_image(c, 5, Resizer::bilinear);
    CHECK((r - 0.7).abs().max().item<double>() < 1e-6);

    auto x = torch::rand({1, 3, 8, 8});
    auto y = torch::rand({1, 3, 8, 8});
    auto lhs = resize_image(2.5 * x - 1.25 * y, 16, Resizer::bilinear);
    auto rhs = 2.5 * resize_image(x, 16, Resizer::bilinear) - 1.25 * resize_image(y, 16, Resizer::bilinear);
    CHECK((lhs - rhs).abs().max().item<double>() < 1e-6);
}

TEST_CASE("resize_image bilinear 2x2 to 4x4 interpolates columns monotonically") {
    auto x = torch::tensor({{0.0f, 1.0f}, {0.0f, 1.0f}}).reshape({1, 1, 2, 2});
    auto r = resize_image(x, 4, Resizer::bilinear).reshape({4, 4});
    const float want[4] = {0.0f, 0.25f, 0.75f, 1.0f};
    for (int row = 0; row < 4; ++row)
        for (int col = 0; col < 4; ++col)
            CHECK(std::abs(r[row][col].item<float>() - want[col]) < 1e-6);
}

TEST_CASE("resize_image nearest preserves the value set") {
    auto x = (torch::rand({1, 1, 6, 6}) > 0.5).to(torch::kFloat32);
    for (int out : {3, 4, 9, 13}) {
        auto r = resize_image(x, out, Resizer::nearest);
        auto mask = (r == 0.0) | (r == 1.0);
        CHECK(mask.all().item<bool>());
    }
}

TEST_CASE("discriminator emits finite unbounded scores at multiple sizes") {
    torch::manual_seed(3);
    auto d = build_discriminator(3, 8);
    for (int px : {48, 64, 96}) {
        auto s = d->forward(torch::rand({1, 3, px, px}));
        CHECK(torch::isfinite(s).all().item<bool>());
        CHECK(s.size(1) == 1);
    }
    // structural check: the last layer is a bare conv
    auto mods = d->modules(false);
    auto last = mods.back();
    CHECK(last->as<torch::nn::Conv2d>() != nullptr);
}

TEST_CASE("discriminator reacts to input contrast") {
    torch::manual_seed(4);
    auto d = build_discriminator(3, 8);
    d->eval();
    auto x = torch::rand({1, 3, 64, 64});
    auto a = d->score(x).item<double>();
    auto b = d->score(2.0 * x).item<double>();
    CHECK(a != b);
}

TEST_CASE("output-space discriminator matches input spatial size") {
    auto d = build_output_discriminator(6, 8);
    auto probs = torch::softmax(torch::rand({2, 6, 64, 64}), 1);
    auto out = d->forward(probs);
    CHECK(out.sizes() == torch::IntArrayRef({2, 1, 64, 64}));
    CHECK(torch::isfinite(out).all().item<bool>());
}

TEST_CASE("output-space discriminator sends gradient to its input") {
    auto d = build_output_discriminator(6, 8);
    auto probs = torch::softmax(torch::rand({1, 6, 32, 32}), 1).requires_grad_(true);
    d->forward(probs).mean().backward();
    CHECK(probs.grad().defined());
    CHECK(probs.grad().abs().sum().item<double>() > 0.0);
}

TEST_CASE("segmenter logits cover input resolution and softmax normalizes") {
    for (auto scale : {EncoderScale::tiny}) {
        auto f = build_segmenter(6, scale);
        f->eval();
        torch::NoGradGuard ng;
        auto logits = f->forward(torch::rand({2, 3, 64, 64}));
        CHECK(logits.sizes() == torch::IntArrayRef({2, 6, 64, 64}));
        auto sums = torch::softmax(logits, 1).sum(1);
        CHECK((sums - 1.0).abs().max().item<double>() < 1e-5);
    }
}

TEST_CASE("paper and tiny segmenters share the interface") {
    auto tiny = build_segmenter(4, EncoderScale::tiny);
    auto paper = build_segmenter(4, EncoderScale::paper);
    tiny->eval();
    paper->eval();
    torch::NoGradGuard ng;
    auto x = torch::rand({1, 3, 64, 64});
    CHECK(tiny->forward(x).sizes() == paper->forward(x).sizes());
}

TEST_CASE("parameter hash detects mutation") {
    auto g = build_resi_generator(small_cfg(32, 16));
    auto h0 = parameter_hash(*g);
    CHECK(parameter_hash(*g) == h0);
    {
        torch::NoGradGuard ng;
        g->parameters()[0].add_(0.1);
    }
    CHECK(parameter_hash(*g) != h0);
}
