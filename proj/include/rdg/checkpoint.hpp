#ifndef RDG_CHECKPOINT_HPP
#define RDG_CHECKPOINT_HPP

#include <map>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "rdg/common.hpp"

namespace rdg::ckpt {

// Versioned container for training state: a JSON metadata block, named raw
// tensors (parameters/buffers), and opaque blobs (serialized optimizers).
// Files are written atomically.
struct Archive {
    static constexpr std::uint32_t kVersion = 1;

    std::string kind;          // e.g. "stage_a", "stage_b"
    nlohmann::json meta;       // free-form config/extra state
    std::map<std::string, torch::Tensor> tensors;
    std::map<std::string, std::string> blobs;

    void save(const fs::path& path) const;
    static Archive load(const fs::path& path);

    // Stashes all parameters and buffers of `m` under `prefix.`.
    void put_module(const std::string& prefix, const torch::nn::Module& m);
    // Copies stored values back into `m`; missing or shape-mismatched entries throw.
    void get_module(const std::string& prefix, torch::nn::Module& m) const;

    void put_optimizer(const std::string& name, const torch::optim::Optimizer& opt);
    // No-op when the blob is absent (fresh optimizer).
    bool get_optimizer(const std::string& name, torch::optim::Optimizer& opt) const;
};

}  // namespace rdg::ckpt

#endif
