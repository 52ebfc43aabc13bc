#ifndef RDG_NETS_HPP
#define RDG_NETS_HPP

#include <string>

#include <torch/torch.h>

#include "rdg/common.hpp"

namespace rdg::nets {

enum class Backbone { unet, linknet, resnet };
enum class KMode { fixed, learnable };
enum class Resizer { bilinear, nearest, learned_stub, none };
enum class EncoderScale { paper, tiny };

std::string backbone_name(Backbone b);
Backbone backbone_from_name(const std::string& s);
std::string k_mode_name(KMode m);
KMode k_mode_from_name(const std::string& s);
std::string resizer_name(Resizer r);
Resizer resizer_from_name(const std::string& s);
std::string encoder_scale_name(EncoderScale s);
EncoderScale encoder_scale_from_name(const std::string& s);

// Square-image resize on [B,C,H,W] or [C,H,W]. `learned_stub` here applies a
// freshly built stub (shape contract only); trained stubs live inside the
// generator.
torch::Tensor resize_image(const torch::Tensor& x, int out_px, Resizer method);

struct ResiGeneratorConfig {
    Backbone backbone = Backbone::unet;
    KMode k_mode = KMode::fixed;
    double k_init = 1.0;
    Resizer resizer = Resizer::bilinear;
    int in_px = 0;
    int out_px = 0;
    int channels = 3;
    int depth = 0;       // encoder levels; 0 = min(7, log2 of the largest power of two dividing in_px)
    int base_width = 64; // width plan is {w, 2w, 4w, 8w, 8w, ...} capped at 8w

    int resolved_depth() const;
    void validate() const;

    std::string to_json() const;
    static ResiGeneratorConfig from_json(const std::string& text);
};

// Residual translation generator: resize(backbone(x) + k * x).
class ResiGeneratorImpl : public torch::nn::Module {
public:
    explicit ResiGeneratorImpl(ResiGeneratorConfig cfg);

    torch::Tensor forward(const torch::Tensor& x);
    torch::Tensor residual(const torch::Tensor& x);  // backbone output alone

    const ResiGeneratorConfig& config() const { return cfg_; }
    torch::Tensor k() const { return k_; }
    double k_value() const { return k_.item<double>(); }

private:
    ResiGeneratorConfig cfg_;
    torch::nn::AnyModule backbone_;
    torch::nn::AnyModule learned_resizer_;  // only with resizer=learned_stub
    torch::Tensor k_;
};
TORCH_MODULE(ResiGenerator);

ResiGenerator build_resi_generator(const ResiGeneratorConfig& cfg);

// Image critic: strided conv stack, no activation on the final score map.
class DiscriminatorImpl : public torch::nn::Module {
public:
    explicit DiscriminatorImpl(int in_channels = 3, int base_width = 64);
    torch::Tensor forward(const torch::Tensor& x);  // [B,1,h,w] score map
    torch::Tensor score(const torch::Tensor& x) { return forward(x).mean(); }

private:
    torch::nn::Sequential stack_;
};
TORCH_MODULE(Discriminator);

Discriminator build_discriminator(int in_channels = 3, int base_width = 64);

// Discriminator over segmentation softmax maps; score map is resized back to
// the input spatial size.
class OutputSpaceDiscriminatorImpl : public torch::nn::Module {
public:
    explicit OutputSpaceDiscriminatorImpl(int num_classes, int base_width = 64);
    torch::Tensor forward(const torch::Tensor& probs);  // [B,1,H,W] logits

private:
    torch::nn::Sequential stack_;
};
TORCH_MODULE(OutputSpaceDiscriminator);

OutputSpaceDiscriminator build_output_discriminator(int num_classes, int base_width = 64);

// Encoder-decoder segmenter emitting per-pixel class logits at input size.
class SegmenterImpl : public torch::nn::Module {
public:
    SegmenterImpl(int num_classes, EncoderScale scale);
    torch::Tensor forward(const torch::Tensor& x);  // [B,C,H,W] logits

    int num_classes() const { return num_classes_; }
    EncoderScale scale() const { return scale_; }

private:
    int num_classes_;
    EncoderScale scale_;
    torch::nn::Sequential stem_, layer1_, layer2_, layer3_, layer4_;
    torch::nn::ModuleList aspp_branches_;
    torch::nn::Sequential aspp_pool_, project_, head_;
};
TORCH_MODULE(Segmenter);

Segmenter build_segmenter(int num_classes, EncoderScale scale);

// normal(0, 0.02) on conv weights, zeros on biases; norm layers get
// normal(1, 0.02) weight. The image-GAN default.
void init_gan_weights(torch::nn::Module& m);

// Order-insensitive digest of all parameters; detects cross-network mutation.
std::uint64_t parameter_hash(const torch::nn::Module& m);

void set_requires_grad(torch::nn::Module& m, bool value);

}  // namespace rdg::nets

#endif
